#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ctrlite/data.hpp"

namespace ctrlite {

struct LatencyStats {
    double mean_ms = 0;
    double median_ms = 0;
    double p99_ms = 0;
    std::size_t n_timed = 0;
};

struct LatencyReport {
    std::string name;
    LatencyStats stats;
    int repetitions = 0;
    int warmup = 0;
    double speedup = 1.0;  // baseline median / this median
};

// Best-effort pin of the calling thread to its current CPU (Linux).
void pin_current_thread();

// Sorts the timings and reduces them to mean/median/p99.
LatencyStats summarize_timings(std::vector<double>& timings_ms);

// Times single-sample forward passes with a monotonic clock: `warmup`
// untimed passes over the sample list, then `repetitions` timed passes,
// each forward timed individually. The callable must not allocate.
template <typename F>
LatencyStats bench_latency(F&& forward, std::span<const Sample> samples, int repetitions,
                           int warmup) {
    using clock = std::chrono::steady_clock;
    if (samples.empty() || repetitions < 1) {
        throw InputError("bench_latency: need samples and repetitions >= 1");
    }
    volatile double sink = 0;  // keep the forward pass observable
    for (int r = 0; r < warmup; ++r) {
        for (const Sample& s : samples) sink = forward(s);
    }
    std::vector<double> timings_ms;
    timings_ms.reserve(static_cast<std::size_t>(repetitions) * samples.size());
    for (int r = 0; r < repetitions; ++r) {
        for (const Sample& s : samples) {
            const auto t0 = clock::now();
            sink = forward(s);
            const auto t1 = clock::now();
            timings_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
    }
    (void)sink;
    return summarize_timings(timings_ms);
}

// Aggregate throughput over `threads` concurrent scorers sharing one
// immutable model; reported separately from single-sample latency. The
// factory is called once per thread so each scorer owns its scratch.
using ScorerFactory = std::function<std::function<double(const Sample&)>()>;

double bench_throughput_qps(const ScorerFactory& make_scorer, std::span<const Sample> samples,
                            int threads, double duration_seconds);

}  // namespace ctrlite
