#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "cellsense/error.hpp"
#include "cellsense/simworld.hpp"
#include "cellsense/trace.hpp"
#include "test_util.hpp"

using namespace cellsense;

namespace {

ParsedTrace parse(const std::string& body) {
  std::istringstream in(std::string(kTraceHeader) + "\n" + body);
  return parse_trace(in);
}

std::string write(const Trace& t) {
  std::ostringstream out;
  write_trace(t, out);
  return out.str();
}

}  // namespace

TEST_CASE("rows sharing a scan_id become one scan") {
  const auto p = parse("7,1000,31.200000,29.900000,A,-70,1\n7,1000,31.200000,29.900000,B,-80,0\n");
  REQUIRE(p.trace.scans.size() == 1);
  const RssiScan& s = p.trace.scans[0];
  CHECK(s.scan_id == 7);
  CHECK(s.readings.size() == 2);
  CHECK(s.serving()->tower_id == "A");
  CHECK(s.find("B")->rssi_dbm == -80);
  CHECK(p.report.rows == 2);
}

TEST_CASE("rows of one scan need not be contiguous") {
  const auto p = parse(
      "1,0,,,A,-70,0\n"
      "2,1000,,,A,-71,0\n"
      "1,0,,,B,-72,0\n");
  REQUIRE(p.trace.scans.size() == 2);
  CHECK(p.trace.scans[0].readings.size() == 2);
  CHECK_FALSE(p.trace.scans[0].truth.has_value());
  CHECK(p.report.scan_first_line == std::vector<std::size_t>{2, 3});
}

TEST_CASE("scans are ordered by timestamp") {
  const auto p = parse("5,2000,,,A,-70,0\n9,1000,,,A,-70,0\n");
  REQUIRE(p.trace.scans.size() == 2);
  CHECK(p.trace.scans[0].scan_id == 9);
  CHECK(p.trace.scans[1].scan_id == 5);
}

TEST_CASE("header only gives an empty trace") {
  const auto p = parse("");
  CHECK(p.trace.scans.empty());
  CHECK(p.report.rows == 0);
}

TEST_CASE("out-of-range rssi is clamped and counted") {
  const auto p = parse("1,0,,,A,-120,0\n");
  CHECK(p.trace.scans[0].readings[0].rssi_dbm == -113);
  CHECK(p.report.clamped == 1);
  const auto q = parse("1,0,,,A,-20,0\n");
  CHECK(q.trace.scans[0].readings[0].rssi_dbm == -51);
}

TEST_CASE("malformed input is a format error with a line number") {
  const auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      parse_trace(in);
    } catch (const FormatError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("scan,timestamp\n") == 1);
  CHECK(line_of("") == 1);
  const std::string h = std::string(kTraceHeader) + "\n";
  CHECK(line_of(h + "1,0,,,A,x,0\n") == 2);
  CHECK(line_of(h + "1,0,,,A,-70,0\nq,0,,,A,-70,0\n") == 3);
  CHECK(line_of(h + "1,0,,,A,-70,0\n1,0,,,A,-71,0\n") == 3);
  CHECK(line_of(h + "1,0,,,A,-70,2\n") == 2);
  CHECK(line_of(h + "1,0,31.0,,A,-70,0\n") == 2);
  CHECK(line_of(h + "1,0,,,A,-70,0\n1,5,,,B,-70,0\n") == 3);
  CHECK(line_of(h + "1,0,,,A,-70,1\n1,0,,,B,-70,1\n") == 3);
  CHECK(line_of(h + "1,0,,,,-70,0\n") == 2);
  CHECK(line_of(h + "1,0,,,A,-70\n") == 2);
  CHECK(line_of(h + "1,0,95.0,0.0,A,-70,0\n") == 2);
}

TEST_CASE("write then parse is the identity") {
  std::istringstream empty(write(Trace{}));
  CHECK(parse_trace(empty).trace == Trace{});

  Trace t;
  RssiScan s;
  s.scan_id = 3;
  s.timestamp_ms = 12;
  s.truth = GeoPoint{31.123456789, 29.5};
  s.readings = {{"A", -60, true}, {"B", -113, false}, {"C", -51, false}};
  t.scans.push_back(s);
  std::istringstream in(write(t));
  const auto back = parse_trace(in);
  CHECK(back.trace == t);
  CHECK(back.trace.scans[0].readings[0].serving);
  CHECK_FALSE(back.trace.scans[0].readings[1].serving);
}

TEST_CASE("round trip on 100 random traces") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 100; ++i) {
    const Trace t = testutil::random_trace(rng);
    std::istringstream in(write(t));
    CHECK(parse_trace(in).trace == t);
  }
}

TEST_CASE("round trip on simulator output") {
  sim::Scenario sc = sim::preset("urban");
  sc.test_route_m = 1000.0;
  Trace t = sim::simulate(sc, 5).test;
  REQUIRE(t.scans.size() >= 100);
  t.scans.resize(100);
  std::istringstream in(write(t));
  CHECK(parse_trace(in).trace == t);
}

TEST_CASE("split sizes, determinism and partition") {
  Trace t;
  for (std::uint64_t i = 0; i < 10; ++i) {
    t.scans.push_back({i, i * 1000, std::nullopt, {{"A", -70, false}}});
  }
  const auto [train, test] = split_train_test(t, 0.2, 99);
  CHECK(train.scans.size() == 8);
  CHECK(test.scans.size() == 2);

  const auto again = split_train_test(t, 0.2, 99);
  CHECK(again.first == train);
  CHECK(again.second == test);

  std::multiset<std::uint64_t> ids;
  for (const auto& s : train.scans) ids.insert(s.scan_id);
  for (const auto& s : test.scans) ids.insert(s.scan_id);
  CHECK(ids.size() == 10);
  CHECK(std::set<std::uint64_t>(ids.begin(), ids.end()).size() == 10);
  CHECK(std::is_sorted(train.scans.begin(), train.scans.end(),
                       [](const auto& a, const auto& b) { return a.scan_id < b.scan_id; }));

  Trace one;
  one.scans.push_back(t.scans[0]);
  CHECK_THROWS_AS(split_train_test(one, 0.5, 1), InvalidInput);
  CHECK_THROWS_AS(split_train_test(t, 1.0, 1), InvalidInput);
}

TEST_CASE("validate catches structural defects") {
  Trace t;
  t.scans.push_back({1, 10, std::nullopt, {{"A", -70, false}}});
  CHECK_NOTHROW(validate(t));
  t.scans.push_back({1, 20, std::nullopt, {{"A", -70, false}}});
  CHECK_THROWS_AS(validate(t), InvalidInput);
  t.scans[1].scan_id = 2;
  t.scans[1].timestamp_ms = 5;
  CHECK_THROWS_AS(validate(t), InvalidInput);
  t.scans[1].timestamp_ms = 20;
  t.scans[1].readings = {{"A", -70, true}, {"B", -71, true}};
  CHECK_THROWS_AS(validate(t), InvalidInput);
  t.scans[1].readings.clear();
  CHECK_THROWS_AS(validate(t), InvalidInput);
}

TEST_CASE("parsing arbitrary bytes either succeeds or throws FormatError") {
  std::mt19937_64 rng(31337);
  const std::string alphabet = "0123456789,-.\n\r ABx1";
  const std::string base = write(testutil::random_trace(rng));
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    if (i % 2 == 0) {
      // Mutations of a valid file.
      s = base;
      const int edits = 1 + static_cast<int>(rng() % 4);
      for (int e = 0; e < edits && !s.empty(); ++e) {
        const std::size_t pos = rng() % s.size();
        switch (rng() % 3) {
          case 0: s[pos] = alphabet[rng() % alphabet.size()]; break;
          case 1: s.erase(pos, 1 + rng() % 8); break;
          default: s.insert(pos, 1, static_cast<char>(rng() % 256)); break;
        }
      }
    } else {
      s = std::string(kTraceHeader) + "\n";
      const std::size_t len = rng() % 200;
      for (std::size_t j = 0; j < len; ++j) {
        s.push_back(j % 3 == 0 ? static_cast<char>(rng() % 256) : alphabet[rng() % alphabet.size()]);
      }
    }
    std::istringstream in(s);
    try {
      const auto p = parse_trace(in);
      for (const auto& scan : p.trace.scans) {
        for (const auto& r : scan.readings) CHECK(rssi_in_range(r.rssi_dbm));
      }
    } catch (const FormatError&) {
    }
  }
}
