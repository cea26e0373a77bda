#pragma once

#include "common.hpp"

namespace wmsteal {

/// Mann-Whitney AUC with half credit for ties:
/// (#{pos > neg} + 0.5 #{pos == neg}) / (|pos| |neg|).
inline double auc(std::span<const double> pos, std::span<const double> neg) {
    if (pos.empty() || neg.empty()) throw InputError("auc: score lists must be non-empty");
    std::vector<std::pair<double, bool>> all;
    all.reserve(pos.size() + neg.size());
    for (double x : pos) all.emplace_back(x, true);
    for (double x : neg) all.emplace_back(x, false);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double wins = 0.0;
    std::size_t neg_below = 0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i, p = 0, n = 0;
        for (; j < all.size() && all[j].first == all[i].first; ++j) (all[j].second ? p : n)++;
        wins += static_cast<double>(p) * static_cast<double>(neg_below) + 0.5 * static_cast<double>(p) * static_cast<double>(n);
        neg_below += n;
        i = j;
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

/// TPR at a fixed FPR. The threshold is the smallest value exceeded by at
/// most floor(fpr * |neg|) negatives, i.e. the (floor(fpr*|neg|)+1)-th largest
/// negative; positives count when strictly above it. `underpowered` is set when
/// |neg| < 1/fpr, where the quantile is coarse.
inline double tpr_at_fpr(std::span<const double> pos, std::span<const double> neg, double fpr = 0.01,
                         bool* underpowered = nullptr) {
    if (pos.empty() || neg.empty()) throw InputError("tpr_at_fpr: score lists must be non-empty");
    if (!(fpr >= 0.0 && fpr < 1.0)) throw InputError("tpr_at_fpr: fpr must lie in [0,1)");
    if (underpowered) *underpowered = static_cast<double>(neg.size()) * fpr < 1.0;
    std::vector<double> sorted(neg.begin(), neg.end());
    const auto allowed = static_cast<std::size_t>(std::floor(fpr * static_cast<double>(neg.size())));
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(allowed), sorted.end(),
                     std::greater<>());
    const double threshold = sorted[allowed];
    std::size_t hits = 0;
    for (double x : pos) hits += x > threshold;
    return static_cast<double>(hits) / static_cast<double>(pos.size());
}

/// Paired t statistic of (a_i - b_i).
inline double paired_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw InputError("paired_t: need two equal lists of length >= 2");
    const std::size_t n = a.size();
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += a[i] - b[i];
    m /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (a[i] - b[i] - m) * (a[i] - b[i] - m);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) return m == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m);
    return m / (sd / std::sqrt(static_cast<double>(n)));
}

}  // namespace wmsteal
