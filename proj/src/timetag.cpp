#include "tofspec/timetag.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <string>

#include "tofspec/error.hpp"

namespace tofspec::timetag {

std::size_t TagStream::first_violation() const {
  std::vector<std::uint64_t> last(channel_count, 0);
  std::vector<bool> seen(channel_count, false);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const TimeTag& t = tags[i];
    if (t.channel >= channel_count) return i;
    if (i > 0 && t < tags[i - 1]) return i;
    if (seen[t.channel] && t.timestamp_ps <= last[t.channel]) return i;
    seen[t.channel] = true;
    last[t.channel] = t.timestamp_ps;
  }
  return tags.size();
}

void TagStream::validate() const {
  if (clock_period_ps == 0) throw FormatError("tag stream: clock period must be positive", 0);
  const std::size_t bad = first_violation();
  if (bad == tags.size()) return;
  const TimeTag& t = tags[bad];
  if (t.channel >= channel_count) {
    throw FormatError("tag stream: record " + std::to_string(bad) + " has channel " + std::to_string(t.channel) +
                          " >= channel count " + std::to_string(channel_count),
                      bad);
  }
  throw FormatError("tag stream: record " + std::to_string(bad) + " (channel " + std::to_string(t.channel) +
                        ", t=" + std::to_string(t.timestamp_ps) + " ps) breaks timestamp ordering",
                    bad);
}

std::size_t TagStream::count(std::uint8_t channel) const {
  return static_cast<std::size_t>(
      std::count_if(tags.begin(), tags.end(), [channel](const TimeTag& t) { return t.channel == channel; }));
}

std::uint64_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

std::uint64_t JointHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

namespace {

Histogram empty_histogram(const TagStream& stream, const HistogramSpec& spec) {
  if (!(spec.bin_width_ps > 0.0) || !std::isfinite(spec.bin_width_ps))
    throw ConfigError("histogram: bin width must be positive");
  if (!std::isfinite(spec.origin_ps)) throw ConfigError("histogram: origin must be finite");
  std::size_t n = spec.n_bins;
  if (n == 0) {
    const double span = static_cast<double>(stream.clock_period_ps) - spec.origin_ps;
    if (!(span > 0.0)) throw ConfigError("histogram: origin lies beyond the clock period");
    n = static_cast<std::size_t>(std::ceil(span / spec.bin_width_ps));
  }
  Histogram h;
  h.bin_width_ps = spec.bin_width_ps;
  h.origin_ps = spec.origin_ps;
  h.counts.assign(n, 0);
  return h;
}

void accumulate_range(std::span<const TimeTag> tags, const HistogramSpec& spec, Histogram& h) {
  bool have_trigger = false;
  std::uint64_t trigger_time = 0;
  const auto n = static_cast<std::int64_t>(h.counts.size());
  for (const TimeTag& t : tags) {
    if (t.channel == spec.trigger_channel) {
      have_trigger = true;
      trigger_time = t.timestamp_ps;
      continue;
    }
    if (t.channel != spec.stop_channel) continue;
    if (!have_trigger) {
      ++h.dropped.no_trigger;
      continue;
    }
    const double tau = static_cast<double>(t.timestamp_ps - trigger_time);
    const double pos = std::floor((tau - h.origin_ps) / h.bin_width_ps);
    if (pos < 0.0 || pos >= static_cast<double>(n)) {
      ++h.dropped.out_of_range;
      continue;
    }
    ++h.counts[static_cast<std::size_t>(pos)];
  }
}

void check_channels(std::uint8_t a, std::uint8_t b, const char* what) {
  if (a == b) throw ConfigError(std::string(what) + ": channels must differ");
}

// Splits [0, n) into at most `parts` contiguous ranges of nearly equal size.
std::vector<std::size_t> even_bounds(std::size_t n, std::size_t parts) {
  parts = std::max<std::size_t>(1, std::min(parts, std::max<std::size_t>(n, 1)));
  std::vector<std::size_t> bounds(parts + 1);
  for (std::size_t k = 0; k <= parts; ++k) bounds[k] = n * k / parts;
  return bounds;
}

}  // namespace

Histogram build_histogram(const TagStream& stream, const HistogramSpec& spec) {
  check_channels(spec.stop_channel, spec.trigger_channel, "histogram");
  Histogram h = empty_histogram(stream, spec);
  accumulate_range(stream.tags, spec, h);
  return h;
}

Histogram build_histogram_chunked(const TagStream& stream, const HistogramSpec& spec, std::size_t n_chunks) {
  check_channels(spec.stop_channel, spec.trigger_channel, "histogram");
  const Histogram zero = empty_histogram(stream, spec);

  // Chunk boundaries sit on trigger tags so each chunk after the first starts
  // with its own trigger and needs no state from its predecessor.
  std::vector<std::size_t> trigger_index;
  for (std::size_t i = 0; i < stream.tags.size(); ++i)
    if (stream.tags[i].channel == spec.trigger_channel) trigger_index.push_back(i);

  std::vector<std::size_t> cuts{0};
  if (!trigger_index.empty() && n_chunks > 1) {
    const auto picks = even_bounds(trigger_index.size(), n_chunks);
    for (std::size_t k = 1; k + 1 < picks.size(); ++k) {
      const std::size_t cut = trigger_index[picks[k]];
      if (cut > cuts.back()) cuts.push_back(cut);
    }
  }
  cuts.push_back(stream.tags.size());

  std::vector<std::future<Histogram>> parts;
  const std::span<const TimeTag> all(stream.tags);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const auto piece = all.subspan(cuts[k], cuts[k + 1] - cuts[k]);
    parts.push_back(std::async(std::launch::async, [piece, &spec, &zero] {
      Histogram h = zero;
      accumulate_range(piece, spec, h);
      return h;
    }));
  }
  Histogram out = zero;
  for (auto& f : parts) out = merge_histograms(out, f.get());
  return out;
}

Histogram merge_histograms(const Histogram& a, const Histogram& b) {
  if (a.bin_width_ps != b.bin_width_ps || a.origin_ps != b.origin_ps || a.counts.size() != b.counts.size())
    throw ConfigError("merge_histograms: histograms differ in bin width, origin or length");
  Histogram out = a;
  for (std::size_t i = 0; i < out.counts.size(); ++i) out.counts[i] += b.counts[i];
  out.dropped.no_trigger += b.dropped.no_trigger;
  out.dropped.out_of_range += b.dropped.out_of_range;
  return out;
}

std::vector<CoincidencePair> coincidence_pairs(const TagStream& stream, std::uint8_t chan_a, std::uint8_t chan_b,
                                               std::uint8_t trigger_channel) {
  check_channels(chan_a, chan_b, "coincidence_pairs");
  check_channels(chan_a, trigger_channel, "coincidence_pairs");
  check_channels(chan_b, trigger_channel, "coincidence_pairs");
  std::vector<CoincidencePair> pairs;
  bool in_cycle = false;
  std::uint64_t trigger_time = 0;
  bool have_a = false;
  bool have_b = false;
  std::int64_t tau_a = 0;
  std::int64_t tau_b = 0;
  auto close_cycle = [&] {
    if (in_cycle && have_a && have_b) pairs.push_back({tau_a, tau_b});
    have_a = have_b = false;
  };
  for (const TimeTag& t : stream.tags) {
    if (t.channel == trigger_channel) {
      close_cycle();
      in_cycle = true;
      trigger_time = t.timestamp_ps;
    } else if (in_cycle && t.channel == chan_a && !have_a) {
      have_a = true;
      tau_a = static_cast<std::int64_t>(t.timestamp_ps - trigger_time);
    } else if (in_cycle && t.channel == chan_b && !have_b) {
      have_b = true;
      tau_b = static_cast<std::int64_t>(t.timestamp_ps - trigger_time);
    }
  }
  close_cycle();
  return pairs;
}

namespace {

JointHistogram empty_joint(const JointHistogramSpec& spec) {
  if (!(spec.bin_width_a_ps > 0.0) || !(spec.bin_width_b_ps > 0.0))
    throw ConfigError("joint histogram: bin widths must be positive");
  if (spec.bins_a == 0 || spec.bins_b == 0) throw ConfigError("joint histogram: grid must be nonempty");
  JointHistogram h;
  h.bin_width_a_ps = spec.bin_width_a_ps;
  h.bin_width_b_ps = spec.bin_width_b_ps;
  h.origin_a_ps = spec.origin_a_ps;
  h.origin_b_ps = spec.origin_b_ps;
  h.bins_a = spec.bins_a;
  h.bins_b = spec.bins_b;
  h.counts.assign(spec.bins_a * spec.bins_b, 0);
  return h;
}

void grid_pairs(std::span<const CoincidencePair> pairs, JointHistogram& h) {
  for (const auto& p : pairs) {
    const double ia = std::floor((static_cast<double>(p.tau_a_ps) - h.origin_a_ps) / h.bin_width_a_ps);
    const double ib = std::floor((static_cast<double>(p.tau_b_ps) - h.origin_b_ps) / h.bin_width_b_ps);
    if (ia < 0.0 || ib < 0.0 || ia >= static_cast<double>(h.bins_a) || ib >= static_cast<double>(h.bins_b)) {
      ++h.dropped;
      continue;
    }
    ++h.at(static_cast<std::size_t>(ia), static_cast<std::size_t>(ib));
  }
}

}  // namespace

JointHistogram build_joint_histogram(std::span<const CoincidencePair> pairs, const JointHistogramSpec& spec) {
  JointHistogram h = empty_joint(spec);
  grid_pairs(pairs, h);
  return h;
}

JointHistogram build_joint_histogram_chunked(std::span<const CoincidencePair> pairs, const JointHistogramSpec& spec,
                                             std::size_t n_chunks) {
  const JointHistogram zero = empty_joint(spec);
  const auto bounds = even_bounds(pairs.size(), n_chunks);
  std::vector<std::future<JointHistogram>> parts;
  for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
    const auto piece = pairs.subspan(bounds[k], bounds[k + 1] - bounds[k]);
    parts.push_back(std::async(std::launch::async, [piece, &zero] {
      JointHistogram h = zero;
      grid_pairs(piece, h);
      return h;
    }));
  }
  JointHistogram out = zero;
  for (auto& f : parts) {
    const JointHistogram h = f.get();
    for (std::size_t i = 0; i < out.counts.size(); ++i) out.counts[i] += h.counts[i];
    out.dropped += h.dropped;
  }
  return out;
}

}  // namespace tofspec::timetag
