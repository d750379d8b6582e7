#pragma once

// Evaluation metrics over (predicted probability, binary outcome) pairs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ktrace/common.hpp"

namespace kt {

struct PredPair {
    double p = 0.0;
    std::int8_t y = 0;
};

// Rank-based (Mann-Whitney) AUC with ties counted half; equals the
// trapezoidal ROC area. Undefined (nullopt) when only one class is present.
inline std::optional<double> auc(std::span<const PredPair> preds) {
    std::vector<PredPair> v(preds.begin(), preds.end());
    std::size_t pos = 0;
    for (const auto& pr : v) pos += pr.y ? 1 : 0;
    const std::size_t neg = v.size() - pos;
    if (pos == 0 || neg == 0) return std::nullopt;

    std::sort(v.begin(), v.end(), [](const PredPair& a, const PredPair& b) { return a.p < b.p; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < v.size()) {
        std::size_t j = i;
        while (j < v.size() && v[j].p == v[i].p) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j + 1);  // 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (v[k].y) rank_sum_pos += midrank;
        }
        i = j;
    }
    const double np = static_cast<double>(pos);
    const double nn = static_cast<double>(neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

inline double rmse(std::span<const PredPair> preds) {
    if (preds.empty()) throw Error("rmse: empty prediction set");
    double acc = 0.0;
    for (const auto& pr : preds) {
        const double d = pr.p - static_cast<double>(pr.y);
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(preds.size()));
}

// Square of the Pearson correlation between predictions and outcomes.
// Undefined when either side has zero variance.
inline std::optional<double> r_squared(std::span<const PredPair> preds) {
    const std::size_t n = preds.size();
    if (n < 2) return std::nullopt;
    double mp = 0.0, my = 0.0;
    for (const auto& pr : preds) {
        mp += pr.p;
        my += pr.y;
    }
    mp /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double spp = 0.0, syy = 0.0, spy = 0.0;
    for (const auto& pr : preds) {
        const double dp = pr.p - mp;
        const double dy = static_cast<double>(pr.y) - my;
        spp += dp * dp;
        syy += dy * dy;
        spy += dp * dy;
    }
    if (spp <= 0.0 || syy <= 0.0) return std::nullopt;
    return (spy * spy) / (spp * syy);
}

}  // namespace kt
