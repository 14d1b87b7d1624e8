#include "ctrlite/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#ifdef __linux__
#include <sched.h>
#endif

namespace ctrlite {

void pin_current_thread() {
#ifdef __linux__
    const int cpu = sched_getcpu();
    if (cpu < 0) return;
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(cpu, &set);
    sched_setaffinity(0, sizeof(set), &set);  // best effort; failure is fine
#endif
}

LatencyStats summarize_timings(std::vector<double>& timings_ms) {
    if (timings_ms.empty()) throw InputError("summarize_timings: no timings");
    std::sort(timings_ms.begin(), timings_ms.end());
    LatencyStats st;
    st.n_timed = timings_ms.size();
    st.mean_ms = std::accumulate(timings_ms.begin(), timings_ms.end(), 0.0) /
                 static_cast<double>(timings_ms.size());
    const std::size_t n = timings_ms.size();
    st.median_ms = (n % 2 == 1) ? timings_ms[n / 2]
                                : 0.5 * (timings_ms[n / 2 - 1] + timings_ms[n / 2]);
    const std::size_t p99 =
        std::min(n - 1, static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(n))) - 1);
    st.p99_ms = timings_ms[p99];
    return st;
}

double bench_throughput_qps(const ScorerFactory& make_scorer, std::span<const Sample> samples,
                            int threads, double duration_seconds) {
    if (samples.empty()) throw InputError("bench_throughput_qps: no samples");
    if (threads < 1) throw InputError("bench_throughput_qps: threads must be >= 1");
    if (!(duration_seconds > 0)) throw InputError("bench_throughput_qps: bad duration");

    std::atomic<bool> stop{false};
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(threads), 0);
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            auto scorer = make_scorer();
            volatile double sink = 0;
            std::uint64_t done = 0;
            std::size_t i = static_cast<std::size_t>(t) % samples.size();
            while (!stop.load(std::memory_order_relaxed)) {
                sink = scorer(samples[i]);
                if (++i == samples.size()) i = 0;
                ++done;
            }
            (void)sink;
            counts[static_cast<std::size_t>(t)] = done;
        });
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::this_thread::sleep_for(std::chrono::duration<double>(duration_seconds));
    stop.store(true);
    for (auto& th : pool) th.join();
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    return static_cast<double>(total) / elapsed;
}

}  // namespace ctrlite
