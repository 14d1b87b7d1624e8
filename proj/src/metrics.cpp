#include "ctrlite/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ctrlite {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double eval_logloss(std::span<const double> probabilities, std::span<const std::uint8_t> labels) {
    if (probabilities.empty() || probabilities.size() != labels.size()) {
        throw InputError("eval_logloss: empty or mismatched inputs");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const double p = std::clamp(probabilities[i], kProbClip, 1.0 - kProbClip);
        total += labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / static_cast<double>(probabilities.size());
}

double eval_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.empty() || scores.size() != labels.size()) {
        throw InputError("eval_auc: empty or mismatched inputs");
    }
    const std::size_t n = scores.size();
    std::uint64_t n_pos = 0;
    for (std::uint8_t l : labels) n_pos += (l != 0);
    const std::uint64_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw InputError("eval_auc: needs both classes");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of average ranks (1-based) over positives; ties share their rank
    // block's mean, which equals pair counting with half credit for ties.
    // Ranks are half-integers, so 2*rank stays integral and exact.
    std::uint64_t twice_rank_sum = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        // block occupies ranks i+1 .. j; average rank doubled = (i+1) + j
        const std::uint64_t twice_avg = static_cast<std::uint64_t>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]]) twice_rank_sum += twice_avg;
        }
        i = j;
    }
    const double rank_sum = static_cast<double>(twice_rank_sum) / 2.0;
    const double u = rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

EvalResult evaluate(const std::function<double(const Sample&)>& logit_fn,
                    std::span<const Sample> samples) {
    if (samples.empty()) throw InputError("evaluate: empty sample set");
    std::vector<double> probs(samples.size());
    std::vector<std::uint8_t> labels(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        probs[i] = sigmoid(logit_fn(samples[i]));
        labels[i] = samples[i].label;
    }
    EvalResult r;
    r.n_samples = samples.size();
    r.logloss = eval_logloss(probs, labels);
    try {
        r.auc = eval_auc(probs, labels);
    } catch (const InputError&) {
        r.auc = -1.0;  // single-class sets have no defined AUC
    }
    return r;
}

}  // namespace ctrlite
