#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "ctrlite/data.hpp"

namespace ctrlite {

inline constexpr double kProbClip = 1e-7;

struct EvalResult {
    double logloss = 0;
    double auc = 0;
    std::size_t n_samples = 0;
};

// Mean binary cross-entropy; probabilities clipped to [1e-7, 1 - 1e-7].
double eval_logloss(std::span<const double> probabilities, std::span<const std::uint8_t> labels);

// Mann-Whitney AUC via sort-and-rank with average ranks for ties; equals
// pair counting with half credit for ties. Throws InputError on
// single-class input.
double eval_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

double sigmoid(double x);

// Scores every sample with `logit_fn` and computes both metrics. When every
// label is the same class, AUC is undefined and reported as -1.
EvalResult evaluate(const std::function<double(const Sample&)>& logit_fn,
                    std::span<const Sample> samples);

}  // namespace ctrlite
