#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace tofspec::timetag {

/// Channel assignment used by the simulator and the analysis defaults.
inline constexpr std::uint8_t kTriggerChannel = 0;
inline constexpr std::uint8_t kSignalChannel = 1;
inline constexpr std::uint8_t kIdlerChannel = 2;

struct TimeTag {
  std::uint64_t timestamp_ps = 0;
  std::uint8_t channel = 0;

  // Global stream order: time, then channel.
  friend constexpr auto operator<=>(const TimeTag& a, const TimeTag& b) {
    if (auto c = a.timestamp_ps <=> b.timestamp_ps; c != 0) return c;
    return a.channel <=> b.channel;
  }
  friend constexpr bool operator==(const TimeTag&, const TimeTag&) = default;
};

/// Clock-referenced detection record of one run.
struct TagStream {
  std::uint64_t clock_period_ps = 12500;
  std::uint16_t channel_count = 3;
  std::vector<TimeTag> tags;

  /// Index of the first tag that breaks global ordering, per-channel strict
  /// monotonicity or the channel range; tags.size() when the stream is valid.
  std::size_t first_violation() const;

  /// Throws FormatError naming the first offending record.
  void validate() const;

  std::size_t count(std::uint8_t channel) const;

  friend bool operator==(const TagStream&, const TagStream&) = default;
};

/// Tags that did not enter a histogram.
struct DropTally {
  std::uint64_t no_trigger = 0;    // stop tag before every trigger
  std::uint64_t out_of_range = 0;  // delay outside the histogram range

  std::uint64_t total() const { return no_trigger + out_of_range; }
  friend bool operator==(const DropTally&, const DropTally&) = default;
};

/// Start-stop delay histogram N_CC(tau).
struct Histogram {
  double bin_width_ps = 32.0;
  double origin_ps = 0.0;
  std::vector<std::uint64_t> counts;
  DropTally dropped;

  std::uint64_t total() const;
  double bin_center(std::size_t i) const { return origin_ps + (static_cast<double>(i) + 0.5) * bin_width_ps; }
  double bin_low(std::size_t i) const { return origin_ps + static_cast<double>(i) * bin_width_ps; }

  friend bool operator==(const Histogram&, const Histogram&) = default;
};

struct HistogramSpec {
  std::uint8_t stop_channel = kSignalChannel;
  std::uint8_t trigger_channel = kTriggerChannel;
  double bin_width_ps = 32.0;
  double origin_ps = 0.0;
  std::size_t n_bins = 0;  // 0: cover [origin, clock_period)
};

/// Bins every stop-channel tag by its delay from the most recent trigger tag.
/// Tags with no preceding trigger, or whose bin falls outside the histogram,
/// are counted in `dropped`; total() + dropped.total() equals the number of
/// stop tags.
Histogram build_histogram(const TagStream& stream, const HistogramSpec& spec);

/// Same result as build_histogram, computed over `n_chunks` pieces of the
/// stream split at trigger boundaries, in parallel, and merged.
Histogram build_histogram_chunked(const TagStream& stream, const HistogramSpec& spec, std::size_t n_chunks);

/// Elementwise sum. Throws ConfigError on mismatched geometry.
Histogram merge_histograms(const Histogram& a, const Histogram& b);

/// Delays of channel a and b from a shared trigger.
struct CoincidencePair {
  std::int64_t tau_a_ps = 0;
  std::int64_t tau_b_ps = 0;
  friend bool operator==(const CoincidencePair&, const CoincidencePair&) = default;
};

/// One pair per trigger cycle in which both channels fired; the earliest tag
/// of each channel in the cycle is used.
std::vector<CoincidencePair> coincidence_pairs(const TagStream& stream, std::uint8_t chan_a, std::uint8_t chan_b,
                                               std::uint8_t trigger_channel = kTriggerChannel);

/// Two-dimensional coincidence histogram, row index along a.
struct JointHistogram {
  double bin_width_a_ps = 81.0;
  double bin_width_b_ps = 81.0;
  double origin_a_ps = 0.0;
  double origin_b_ps = 0.0;
  std::size_t bins_a = 0;
  std::size_t bins_b = 0;
  std::vector<std::uint64_t> counts;  // row-major bins_a x bins_b
  std::uint64_t dropped = 0;          // pairs outside the grid

  std::uint64_t& at(std::size_t ia, std::size_t ib) { return counts[ia * bins_b + ib]; }
  std::uint64_t at(std::size_t ia, std::size_t ib) const { return counts[ia * bins_b + ib]; }
  std::uint64_t total() const;

  friend bool operator==(const JointHistogram&, const JointHistogram&) = default;
};

struct JointHistogramSpec {
  double bin_width_a_ps = 81.0;
  double bin_width_b_ps = 81.0;
  double origin_a_ps = 0.0;
  double origin_b_ps = 0.0;
  std::size_t bins_a = 0;
  std::size_t bins_b = 0;
};

JointHistogram build_joint_histogram(std::span<const CoincidencePair> pairs, const JointHistogramSpec& spec);

/// Parallel gridding over `n_chunks` slices of the pair list, additively merged.
JointHistogram build_joint_histogram_chunked(std::span<const CoincidencePair> pairs, const JointHistogramSpec& spec,
                                             std::size_t n_chunks);

// Binary time-tag files (little-endian):
//   "TTAG" | u16 version=1 | u16 channel_count | u64 clock_period_ps | u64 n
//   n records of u8 channel + u64 timestamp_ps, packed (9 bytes each).
inline constexpr std::uint16_t kTagFileVersion = 1;
inline constexpr std::size_t kTagFileHeaderBytes = 24;
inline constexpr std::size_t kTagRecordBytes = 9;

void write_tags(std::ostream& out, const TagStream& stream);
void write_tags(const std::filesystem::path& path, const TagStream& stream);
TagStream read_tags(std::istream& in);
TagStream read_tags(const std::filesystem::path& path);

/// Debug mirror: "channel,timestamp_ps" lines after a header.
void write_tags_csv(std::ostream& out, const TagStream& stream);
void write_tags_csv(const std::filesystem::path& path, const TagStream& stream);

}  // namespace tofspec::timetag
