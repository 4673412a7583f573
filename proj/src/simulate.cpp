#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "tofspec/error.hpp"
#include "tofspec/instrument.hpp"

namespace tofspec::instrument {

namespace {

using timetag::TagStream;
using timetag::TimeTag;

struct Candidate {
  std::uint8_t channel;
  std::uint64_t cycle;
  std::int64_t time_ps;
};

struct ChunkOutput {
  std::vector<TimeTag> tags;
  RunStats stats;
};

// Per-channel detection model shared by both run types.
struct Channel {
  std::uint8_t id;
  DispersionMap map;
  AcceptanceModel acceptance;
  double jitter_sigma_ps;
  double dark_rate_per_ps;
};

Channel make_channel(std::uint8_t id, const InstrumentConfig& cfg) {
  return Channel{id, cfg.dispersion(), AcceptanceModel(cfg), fwhm_to_sigma(cfg.jitter_fwhm_ps),
                 cfg.dark_rate_hz * 1e-12};
}

// Next success of a Bernoulli(p) cycle sequence at or after `from`, or `end`.
std::uint64_t next_success(std::uint64_t from, std::uint64_t end, double p, RandomStream& rng) {
  if (from >= end) return end;
  const std::uint64_t gap = rng.geometric(p);
  return gap >= end - from ? end : from + gap;
}

std::int64_t cycle_start(std::uint64_t cycle, double period) {
  return std::llround(static_cast<double>(cycle) * period);
}

// Accepts and times one photon; returns false when it is not detected.
bool detect(const Channel& ch, double lambda, std::uint64_t cycle, double period, RandomStream& rng,
            Candidate& out) {
  const double a = ch.acceptance(lambda);
  if (!(rng.uniform() < a)) return false;
  const double jitter = ch.jitter_sigma_ps > 0.0 ? ch.jitter_sigma_ps * rng.normal() : 0.0;
  const double t = static_cast<double>(cycle_start(cycle, period)) + ch.map.to_time(WavelengthNm(lambda)) + jitter;
  out = Candidate{ch.id, cycle, std::llround(t)};
  return true;
}

void add_dark_counts(const Channel& ch, std::uint64_t c0, std::uint64_t c1, double period, RandomStream& rng,
                     std::vector<Candidate>& out, RunStats& stats) {
  if (ch.dark_rate_per_ps <= 0.0) return;
  const double t_end = static_cast<double>(c1) * period;
  for (double t = static_cast<double>(c0) * period + rng.exponential(ch.dark_rate_per_ps); t < t_end;
       t += rng.exponential(ch.dark_rate_per_ps)) {
    const auto cycle = std::min(c1 - 1, static_cast<std::uint64_t>(t / period));
    out.push_back({ch.id, cycle, std::llround(t)});
    ++stats.dark_counts;
  }
}

// Earliest candidate per (channel, cycle) survives, as in a start-stop TDC.
std::vector<Candidate> earliest_per_cycle(std::vector<Candidate> cands, RunStats& stats) {
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.channel != b.channel) return a.channel < b.channel;
    if (a.cycle != b.cycle) return a.cycle < b.cycle;
    return a.time_ps < b.time_ps;
  });
  std::vector<Candidate> kept;
  kept.reserve(cands.size());
  for (const auto& c : cands) {
    if (!kept.empty() && kept.back().channel == c.channel && kept.back().cycle == c.cycle) {
      ++stats.lost_same_cycle;
      continue;
    }
    kept.push_back(c);
  }
  return kept;
}

std::uint64_t quantize(std::int64_t t, double quantum) {
  if (quantum <= 1.0) return static_cast<std::uint64_t>(t);
  return static_cast<std::uint64_t>(std::floor(static_cast<double>(t) / quantum) * quantum);
}

void push_detections(const std::vector<Candidate>& kept, double quantum, ChunkOutput& out) {
  for (const auto& c : kept) {
    if (c.time_ps < 0) {
      ++out.stats.lost_negative_time;
      continue;
    }
    out.tags.push_back({quantize(c.time_ps, quantum), c.channel});
  }
}

template <class ChunkFn>
SimulationResult run_chunks(const RunOptions& options, double period, std::uint16_t channel_count,
                            double dead_time_ps, std::uint8_t first_detector_channel, ChunkFn&& fn) {
  if (options.n_cycles == 0) {
    SimulationResult empty;
    empty.stream.clock_period_ps = static_cast<std::uint64_t>(std::llround(period));
    empty.stream.channel_count = channel_count;
    return empty;
  }
  if (options.chunk_cycles == 0) throw ConfigError("simulation: chunk size must be positive");
  const std::uint64_t n_chunks = (options.n_cycles + options.chunk_cycles - 1) / options.chunk_cycles;
  std::vector<ChunkOutput> outputs(n_chunks);

  unsigned workers = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, n_chunks));
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::uint64_t k = next++; k < n_chunks && !failed; k = next++) {
      const std::uint64_t c0 = k * options.chunk_cycles;
      const std::uint64_t c1 = std::min(options.n_cycles, c0 + options.chunk_cycles);
      try {
        RandomStream rng(options.seed, k);
        outputs[k] = fn(c0, c1, rng);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);

  SimulationResult result;
  result.stats.cycles = options.n_cycles;
  std::size_t total = 0;
  for (const auto& o : outputs) total += o.tags.size();
  auto& tags = result.stream.tags;
  tags.reserve(total);
  for (auto& o : outputs) {
    tags.insert(tags.end(), o.tags.begin(), o.tags.end());
    result.stats.heralds += o.stats.heralds;
    result.stats.photons_detected += o.stats.photons_detected;
    result.stats.dark_counts += o.stats.dark_counts;
    result.stats.lost_same_cycle += o.stats.lost_same_cycle;
    result.stats.lost_negative_time += o.stats.lost_negative_time;
    o.tags = {};
  }
  std::sort(tags.begin(), tags.end());

  // Non-paralyzable dead time on detector channels; also enforces strictly
  // increasing timestamps per channel after TDC quantization.
  std::vector<std::uint64_t> last(channel_count, 0);
  std::vector<bool> seen(channel_count, false);
  std::size_t w = 0;
  for (std::size_t r = 0; r < tags.size(); ++r) {
    const TimeTag t = tags[r];
    const bool detector = t.channel >= first_detector_channel;
    if (seen[t.channel]) {
      const std::uint64_t prev = last[t.channel];
      const bool too_close = t.timestamp_ps <= prev ||
                             (detector && static_cast<double>(t.timestamp_ps - prev) < dead_time_ps);
      if (too_close) {
        ++result.stats.lost_dead_time;
        continue;
      }
    }
    seen[t.channel] = true;
    last[t.channel] = t.timestamp_ps;
    tags[w++] = t;
  }
  tags.resize(w);

  result.stream.clock_period_ps = static_cast<std::uint64_t>(std::llround(period));
  result.stream.channel_count = channel_count;
  return result;
}

void check_period(double period) {
  if (std::abs(period - std::round(period)) > 1e-9)
    throw ConfigError("simulation: clock period must be a whole number of picoseconds");
}

}  // namespace

SimulationResult simulate_run(const spectral::SpectralSource& source, double herald_efficiency,
                              const InstrumentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  check_period(cfg.clock_period_ps);
  if (!(herald_efficiency >= 0.0 && herald_efficiency <= 1.0))
    throw ConfigError("simulate_run: herald efficiency must lie in [0, 1]");
  const spectral::WavelengthSampler sampler(source);
  const Channel signal = make_channel(timetag::kSignalChannel, cfg);
  const double period = cfg.clock_period_ps;
  const double quantum = cfg.tdc_quantum_ps;

  auto chunk = [&](std::uint64_t c0, std::uint64_t c1, RandomStream& rng) {
    ChunkOutput out;
    std::vector<Candidate> cands;
    if (herald_efficiency > 0.0) {
      for (std::uint64_t c = next_success(c0, c1, herald_efficiency, rng); c < c1;
           c = next_success(c + 1, c1, herald_efficiency, rng)) {
        ++out.stats.heralds;
        out.tags.push_back({quantize(cycle_start(c, period), quantum), timetag::kTriggerChannel});
        const double lambda = sampler(rng).value;
        Candidate cand{};
        if (detect(signal, lambda, c, period, rng, cand)) {
          ++out.stats.photons_detected;
          cands.push_back(cand);
        }
      }
    }
    add_dark_counts(signal, c0, c1, period, rng, cands, out.stats);
    push_detections(earliest_per_cycle(std::move(cands), out.stats), quantum, out);
    return out;
  };
  return run_chunks(options, period, 2, cfg.dead_time_ps, timetag::kSignalChannel, chunk);
}

SimulationResult simulate_pair_run(const spectral::PairGaussian& source, double pair_rate,
                                   const InstrumentConfig& cfg_signal, const InstrumentConfig& cfg_idler,
                                   const RunOptions& options) {
  spectral::validate(source);
  cfg_signal.validate();
  cfg_idler.validate();
  check_period(cfg_signal.clock_period_ps);
  if (cfg_signal.clock_period_ps != cfg_idler.clock_period_ps)
    throw ConfigError("simulate_pair_run: both channels must share the experiment clock");
  if (cfg_signal.dead_time_ps != cfg_idler.dead_time_ps)
    throw ConfigError("simulate_pair_run: channels with different dead times are not supported");
  if (!(pair_rate >= 0.0 && pair_rate <= 1.0))
    throw ConfigError("simulate_pair_run: pair rate is a per-cycle probability in [0, 1]");
  const Channel signal = make_channel(timetag::kSignalChannel, cfg_signal);
  const Channel idler = make_channel(timetag::kIdlerChannel, cfg_idler);
  const double period = cfg_signal.clock_period_ps;
  const double quantum = std::max(cfg_signal.tdc_quantum_ps, cfg_idler.tdc_quantum_ps);

  auto chunk = [&](std::uint64_t c0, std::uint64_t c1, RandomStream& rng) {
    ChunkOutput out;
    std::vector<Candidate> cands;
    if (pair_rate > 0.0) {
      for (std::uint64_t c = next_success(c0, c1, pair_rate, rng); c < c1; c = next_success(c + 1, c1, pair_rate, rng)) {
        ++out.stats.heralds;
        const auto [ls, li] = spectral::sample_pair(source, rng);
        Candidate cand{};
        if (detect(signal, ls.value, c, period, rng, cand)) {
          ++out.stats.photons_detected;
          cands.push_back(cand);
        }
        if (detect(idler, li.value, c, period, rng, cand)) {
          ++out.stats.photons_detected;
          cands.push_back(cand);
        }
      }
    }
    add_dark_counts(signal, c0, c1, period, rng, cands, out.stats);
    add_dark_counts(idler, c0, c1, period, rng, cands, out.stats);
    const auto kept = earliest_per_cycle(std::move(cands), out.stats);

    if (options.trigger_mode == TriggerMode::kEveryCycle) {
      for (std::uint64_t c = c0; c < c1; ++c)
        out.tags.push_back({quantize(cycle_start(c, period), quantum), timetag::kTriggerChannel});
    } else {
      std::vector<std::uint64_t> cycles;
      cycles.reserve(kept.size());
      for (const auto& k : kept) cycles.push_back(k.cycle);
      std::sort(cycles.begin(), cycles.end());
      cycles.erase(std::unique(cycles.begin(), cycles.end()), cycles.end());
      for (auto c : cycles) out.tags.push_back({quantize(cycle_start(c, period), quantum), timetag::kTriggerChannel});
    }
    push_detections(kept, quantum, out);
    return out;
  };
  return run_chunks(options, period, 3, cfg_signal.dead_time_ps, timetag::kSignalChannel, chunk);
}

}  // namespace tofspec::instrument
