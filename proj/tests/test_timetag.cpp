#include <doctest.h>

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "support.hpp"
#include "tofspec/error.hpp"
#include "tofspec/timetag.hpp"

using namespace tofspec;
using namespace tofspec::timetag;
using testsupport::Gen;

namespace {

TagStream stream_of(std::vector<TimeTag> tags, std::uint16_t channels = 3) {
  TagStream s;
  s.channel_count = channels;
  s.tags = std::move(tags);
  return s;
}

HistogramSpec spec_of(double width, double origin, std::size_t n, std::uint8_t stop = 1, std::uint8_t trig = 0) {
  HistogramSpec s;
  s.stop_channel = stop;
  s.trigger_channel = trig;
  s.bin_width_ps = width;
  s.origin_ps = origin;
  s.n_bins = n;
  return s;
}

// Byte layout written out by hand, independent of the library writer.
std::string hand_serialize(const TagStream& s) {
  std::string out = "TTAG";
  auto le = [&out](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  le(1, 2);
  le(s.channel_count, 2);
  le(s.clock_period_ps, 8);
  le(s.tags.size(), 8);
  for (const auto& t : s.tags) {
    out.push_back(static_cast<char>(t.channel));
    le(t.timestamp_ps, 8);
  }
  return out;
}

std::string serialize(const TagStream& s) {
  std::ostringstream os(std::ios::binary);
  write_tags(os, s);
  return os.str();
}

TagStream deserialize(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return read_tags(is);
}

// Triggers every period, each followed by stops at offsets below `max_offset`.
TagStream cycled_stream(Gen& g, std::size_t cycles, std::uint64_t max_offset) {
  TagStream s;
  s.channel_count = 3;
  for (std::size_t c = 0; c < cycles; ++c) {
    const std::uint64_t t0 = 12500 * c;
    s.tags.push_back({t0, 0});
    if (g.coin(0.7)) s.tags.push_back({t0 + g.integer(1, max_offset), 1});
  }
  return s;
}

}  // namespace

TEST_SUITE("timetag") {

TEST_CASE("single event lands in floor(tau / bin)") {
  const auto s = stream_of({{0, 0}, {4750, 1}});
  const auto h = build_histogram(s, spec_of(32, 0, 0));
  CHECK(h.total() == 1);
  CHECK(h.counts.at(148) == 1);
  CHECK(h.counts.size() == 391);  // ceil(12500 / 32)
}

TEST_CASE("empty stop channel gives an all-zero histogram") {
  const auto s = stream_of({{0, 0}, {12500, 0}, {15000, 2}});
  const auto h = build_histogram(s, spec_of(32, 0, 0));
  CHECK(h.total() == 0);
  CHECK(h.dropped.total() == 0);
  CHECK(std::all_of(h.counts.begin(), h.counts.end(), [](auto c) { return c == 0; }));
}

TEST_CASE("stops before any trigger are tallied") {
  const auto s = stream_of({{5, 1}, {10, 1}, {100, 0}, {300, 1}, {900000, 1}});
  const auto h = build_histogram(s, spec_of(32, 0, 10));
  CHECK(h.dropped.no_trigger == 2);
  CHECK(h.dropped.out_of_range == 1);  // the most recent trigger is far behind
  CHECK(h.total() == 1);
  CHECK(h.counts[6] == 1);
}

TEST_CASE("long delays use the most recent trigger") {
  const auto s = stream_of({{0, 0}, {20000, 1}});
  const auto h = build_histogram(s, spec_of(100, 0, 300));
  CHECK(h.counts[200] == 1);
}

TEST_CASE("channel misuse") {
  const auto s = stream_of({{0, 0}});
  CHECK_THROWS_AS(build_histogram(s, spec_of(32, 0, 0, 0, 0)), ConfigError);
  CHECK_THROWS_AS(build_histogram(s, spec_of(0, 0, 0)), ConfigError);
  CHECK_THROWS_AS(coincidence_pairs(s, 1, 1), ConfigError);
}

TEST_CASE("histogram matches the brute-force oracle") {
  Gen g(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = testsupport::random_stream(g, g.integer(0, 3000), 3, g.integer(1, 5000));
    const double width = g.uniform(1, 200);
    const double origin = g.uniform(-500, 500);
    const std::size_t n = g.integer(1, 200);
    const auto h = build_histogram(s, spec_of(width, origin, n));
    const auto o = oracle::brute_histogram(testsupport::oracle_tags(s), 1, 0, width, origin, n);
    REQUIRE(h.counts == o.counts);
    REQUIRE(h.dropped.no_trigger == o.no_trigger);
    REQUIRE(h.dropped.out_of_range == o.out_of_range);
    REQUIRE(h.total() + h.dropped.total() == s.count(1));
  }
}

TEST_CASE("chunked histogramming equals single pass") {
  Gen g(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = testsupport::random_stream(g, g.integer(0, 20000), 3, g.integer(1, 4000));
    const auto spec = spec_of(g.uniform(5, 100), g.uniform(-100, 100), g.integer(10, 500));
    const auto single = build_histogram(s, spec);
    for (std::size_t chunks : {1u, 2u, 3u, 8u, 17u}) REQUIRE(build_histogram_chunked(s, spec, chunks) == single);
  }
}

TEST_CASE("merge is commutative, associative and has an identity") {
  Gen g(3);
  auto random_hist = [&g] {
    Histogram h;
    h.bin_width_ps = 32;
    h.origin_ps = -16;
    for (int i = 0; i < 50; ++i) h.counts.push_back(g.integer(0, 1000));
    h.dropped.no_trigger = g.integer(0, 5);
    h.dropped.out_of_range = g.integer(0, 5);
    return h;
  };
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_hist();
    const auto b = random_hist();
    const auto c = random_hist();
    Histogram zero = a;
    std::fill(zero.counts.begin(), zero.counts.end(), 0);
    zero.dropped = {};
    REQUIRE(merge_histograms(a, zero) == a);
    REQUIRE(merge_histograms(a, b) == merge_histograms(b, a));
    REQUIRE(merge_histograms(merge_histograms(a, b), c) == merge_histograms(a, merge_histograms(b, c)));
  }
  Histogram a = random_hist();
  Histogram b = a;
  b.origin_ps = 0;
  CHECK_THROWS_AS(merge_histograms(a, b), ConfigError);
  b = a;
  b.counts.pop_back();
  CHECK_THROWS_AS(merge_histograms(a, b), ConfigError);
}

TEST_CASE("merging sub-stream histograms equals the whole-stream histogram") {
  Gen g(4);
  const auto s = cycled_stream(g, 80000, 11000);
  const auto spec = spec_of(32, 0, 400);
  Histogram merged;
  bool first = true;
  const std::size_t per = s.tags.size() / 8;
  for (std::size_t k = 0; k < 8; ++k) {
    // cut points on triggers so every piece starts with its own trigger
    std::size_t lo = k * per;
    while (lo > 0 && s.tags[lo].channel != 0) --lo;
    std::size_t hi = k == 7 ? s.tags.size() : (k + 1) * per;
    while (hi < s.tags.size() && s.tags[hi].channel != 0) --hi;
    TagStream piece = s;
    piece.tags.assign(s.tags.begin() + static_cast<long>(lo), s.tags.begin() + static_cast<long>(hi));
    const auto h = build_histogram(piece, spec);
    merged = first ? h : merge_histograms(merged, h);
    first = false;
  }
  CHECK(merged == build_histogram(s, spec));
}

TEST_CASE("binning is translation consistent") {
  Gen g(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = cycled_stream(g, 2000, 9000);
    const auto spec = spec_of(32, 0, 400);
    // translating the whole stream leaves every delay unchanged
    TagStream moved = s;
    const std::uint64_t shift = g.integer(0, 1u << 30);
    for (auto& t : moved.tags) t.timestamp_ps += shift;
    REQUIRE(build_histogram(moved, spec) == build_histogram(s, spec));
    // delaying only the stops and the origin together also leaves counts unchanged
    TagStream late = s;
    const std::uint64_t d = g.integer(0, 3000);
    for (auto& t : late.tags)
      if (t.channel == 1) t.timestamp_ps += d;
    auto shifted = spec;
    shifted.origin_ps += static_cast<double>(d);
    REQUIRE(build_histogram(late, shifted).counts == build_histogram(s, spec).counts);
  }
}

TEST_CASE("coincidence pairs") {
  SUBCASE("both channels every cycle") {
    TagStream s;
    for (std::uint64_t c = 0; c < 1000; ++c) {
      s.tags.push_back({c * 12500, 0});
      s.tags.push_back({c * 12500 + 3000 + c % 7, 1});
      s.tags.push_back({c * 12500 + 5000, 2});
      s.tags.push_back({c * 12500 + 6000, 2});  // later hit, ignored
    }
    const auto p = coincidence_pairs(s, 1, 2);
    REQUIRE(p.size() == 1000);
    CHECK(p[3].tau_a_ps == 3003);
    CHECK(p[3].tau_b_ps == 5000);
  }
  SUBCASE("disjoint cycles") {
    TagStream s;
    for (std::uint64_t c = 0; c < 1000; ++c) {
      s.tags.push_back({c * 12500, 0});
      s.tags.push_back({c * 12500 + 4000, static_cast<std::uint8_t>(1 + c % 2)});
    }
    CHECK(coincidence_pairs(s, 1, 2).empty());
  }
  SUBCASE("agrees with the oracle and is symmetric under channel swap") {
    Gen g(6);
    for (int trial = 0; trial < 100; ++trial) {
      const auto s = testsupport::random_stream(g, g.integer(0, 3000), 3, g.integer(1, 3000));
      const auto p = coincidence_pairs(s, 1, 2);
      const auto q = coincidence_pairs(s, 2, 1);
      const auto o = oracle::brute_pairs(testsupport::oracle_tags(s), 1, 2, 0);
      REQUIRE(p.size() == o.size());
      REQUIRE(q.size() == p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        REQUIRE(p[i].tau_a_ps == o[i].first);
        REQUIRE(p[i].tau_b_ps == o[i].second);
        REQUIRE(q[i].tau_a_ps == p[i].tau_b_ps);
        REQUIRE(q[i].tau_b_ps == p[i].tau_a_ps);
      }
    }
  }
}

TEST_CASE("joint histogram") {
  Gen g(7);
  std::vector<CoincidencePair> pairs;
  for (int i = 0; i < 50000; ++i)
    pairs.push_back({static_cast<std::int64_t>(g.integer(0, 13000)), static_cast<std::int64_t>(g.integer(0, 13000))});
  JointHistogramSpec spec;
  spec.bin_width_a_ps = 81;
  spec.bin_width_b_ps = 64;
  spec.origin_a_ps = 500;
  spec.origin_b_ps = -40;
  spec.bins_a = 120;
  spec.bins_b = 150;
  const auto h = build_joint_histogram(pairs, spec);
  CHECK(h.total() + h.dropped == pairs.size());
  std::vector<std::uint64_t> expect(120 * 150, 0);
  for (const auto& p : pairs) {
    const auto ia = static_cast<long>(std::floor((static_cast<double>(p.tau_a_ps) - 500) / 81));
    const auto ib = static_cast<long>(std::floor((static_cast<double>(p.tau_b_ps) + 40) / 64));
    if (ia >= 0 && ia < 120 && ib >= 0 && ib < 150) ++expect[static_cast<std::size_t>(ia * 150 + ib)];
  }
  CHECK(h.counts == expect);
  for (std::size_t chunks : {2u, 5u, 8u}) CHECK(build_joint_histogram_chunked(pairs, spec, chunks) == h);
}

TEST_CASE("tag file layout and round trip") {
  Gen g(8);
  const auto s = testsupport::random_stream(g, 1000000, 3, 5000);
  const std::string bytes = serialize(s);
  CHECK(bytes.size() == kTagFileHeaderBytes + s.tags.size() * kTagRecordBytes);
  CHECK(bytes == hand_serialize(s));
  const auto back = deserialize(bytes);
  CHECK(back == s);
  CHECK(serialize(back) == bytes);
}

TEST_CASE("empty tag file") {
  TagStream s;
  s.clock_period_ps = 12474;
  const auto bytes = serialize(s);
  CHECK(bytes.size() == kTagFileHeaderBytes);
  const auto back = deserialize(bytes);
  CHECK(back.tags.empty());
  CHECK(back.clock_period_ps == 12474);
}

TEST_CASE("malformed tag files") {
  Gen g(9);
  const auto s = testsupport::random_stream(g, 100, 3, 5000);
  const std::string good = serialize(s);
  auto index_of = [](const std::string& bytes) -> std::size_t {
    try {
      deserialize(bytes);
    } catch (const FormatError& e) {
      return e.record_index();
    }
    return SIZE_MAX;
  };
  SUBCASE("truncation reports the record boundary") {
    for (std::size_t cut : {0u, 3u, 7u, 9u, 500u}) {
      const std::string t = good.substr(0, kTagFileHeaderBytes + cut);
      CHECK(index_of(t) == cut / kTagRecordBytes);
    }
    CHECK_THROWS_AS(deserialize(good.substr(0, 10)), FormatError);
  }
  SUBCASE("bad magic and version") {
    std::string b = good;
    b[0] = 'X';
    CHECK_THROWS_AS(deserialize(b), FormatError);
    b = good;
    b[4] = 2;
    CHECK_THROWS_AS(deserialize(b), FormatError);
  }
  SUBCASE("non-monotone timestamps name the first offending record") {
    TagStream bad = s;
    bad.tags[57].timestamp_ps = bad.tags[56].timestamp_ps - 1;
    CHECK(index_of(hand_serialize(bad)) == 57);
    CHECK_THROWS_AS(serialize(bad), FormatError);
  }
  SUBCASE("channel beyond the declared count") {
    TagStream bad = s;
    bad.tags[12].channel = 5;
    CHECK(index_of(hand_serialize(bad)) == 12);
  }
  SUBCASE("trailing bytes") { CHECK_THROWS_AS(deserialize(good + "x"), FormatError); }
}

TEST_CASE("csv mirror") {
  const auto s = stream_of({{10, 0}, {4750, 1}});
  std::ostringstream os;
  write_tags_csv(os, s);
  CHECK(os.str() == "channel,timestamp_ps\n0,10\n1,4750\n");
}

}  // TEST_SUITE
