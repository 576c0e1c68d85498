#pragma once

// Confidence-weighted segmentation loss: per class, the mean of binary
// cross-entropy and soft DICE; each class term scaled by a multiplier derived
// from the annotator's confidence; classes averaged.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glioburden/error.hpp"
#include "glioburden/volume.hpp"

namespace glioburden {

inline constexpr double kSoftDiceEpsilon = 1e-7;
inline constexpr double kProbabilityClamp = 1e-7;

/// Confidence level per class (1..4), absent when not reported.
struct ConfidenceLevels {
    std::array<std::optional<int>, 3> level;

    std::optional<int>& operator[](ClassName c) { return level[static_cast<std::size_t>(c)]; }
    const std::optional<int>& operator[](ClassName c) const { return level[static_cast<std::size_t>(c)]; }
};

/// Loss multiplier for a confidence level: 1 -> 0.5, 2 -> 0.75, 3 -> 1.25,
/// 4 -> 1.5; no reported confidence -> 1.
inline double alpha(std::optional<int> level) {
    if (!level) return 1.0;
    switch (*level) {
        case 1: return 0.5;
        case 2: return 0.75;
        case 3: return 1.25;
        case 4: return 1.5;
        default: break;
    }
    throw validation_error("confidence level must be 1..4, got " + std::to_string(*level));
}

/// Pairwise summation with a split fixed by the length, so the result does
/// not depend on how the caller schedules work.
template <typename F>
double pairwise_sum(std::size_t begin, std::size_t end, const F& term) {
    if (end - begin <= 64) {
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) s += term(i);
        return s;
    }
    const std::size_t mid = begin + (end - begin) / 2;
    return pairwise_sum(begin, mid, term) + pairwise_sum(mid, end, term);
}

inline void check_shapes(std::span<const double> p, std::span<const std::uint8_t> gt,
                         std::span<double> grad) {
    if (p.size() != gt.size()) throw validation_error("probability and ground truth sizes differ");
    if (!grad.empty() && grad.size() != p.size()) throw validation_error("gradient buffer size mismatch");
}

/// 1 - 2 sum(p g) / (sum p^2 + sum g^2 + eps). Writes dL/dp into `grad` when non-empty.
inline double soft_dice_loss(std::span<const double> p, std::span<const std::uint8_t> gt,
                             std::span<double> grad = {}) {
    check_shapes(p, gt, grad);
    const double inter = pairwise_sum(0, p.size(), [&](std::size_t i) { return gt[i] ? p[i] : 0.0; });
    const double pp = pairwise_sum(0, p.size(), [&](std::size_t i) { return p[i] * p[i]; });
    const double gg = pairwise_sum(0, p.size(), [&](std::size_t i) { return gt[i] ? 1.0 : 0.0; });
    const double denom = pp + gg + kSoftDiceEpsilon;
    if (!grad.empty()) {
        const double d2 = denom * denom;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = gt[i] ? 1.0 : 0.0;
            grad[i] = -2.0 * (g * denom - 2.0 * p[i] * inter) / d2;
        }
    }
    return 1.0 - 2.0 * inter / denom;
}

/// Voxel-mean binary cross-entropy, probabilities clamped to [1e-7, 1 - 1e-7].
/// The gradient is zero where the clamp is active.
inline double cross_entropy_loss(std::span<const double> p, std::span<const std::uint8_t> gt,
                                 std::span<double> grad = {}) {
    check_shapes(p, gt, grad);
    if (p.empty()) return 0.0;
    const double n = static_cast<double>(p.size());
    auto clamp = [](double v) { return std::clamp(v, kProbabilityClamp, 1.0 - kProbabilityClamp); };
    const double sum = pairwise_sum(0, p.size(), [&](std::size_t i) {
        const double q = clamp(p[i]);
        return gt[i] ? -std::log(q) : -std::log(1.0 - q);
    });
    if (!grad.empty()) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            const bool clamped = p[i] < kProbabilityClamp || p[i] > 1.0 - kProbabilityClamp;
            grad[i] = clamped ? 0.0 : (gt[i] ? -1.0 / p[i] : 1.0 / (1.0 - p[i])) / n;
        }
    }
    return sum / n;
}

struct ClassLoss {
    double cross_entropy = 0.0;
    double soft_dice = 0.0;
    double unweighted = 0.0;  // mean of the two terms
    double alpha = 1.0;
    double weighted = 0.0;    // alpha * unweighted
};

struct LossValue {
    double total = 0.0;
    std::array<ClassLoss, 3> per_class;
    std::array<std::vector<double>, 3> gradient;  // d total / d p, per class channel

    const ClassLoss& of(ClassName c) const { return per_class[static_cast<std::size_t>(c)]; }
};

/// Loss over three probability channels (ET, ED, Cavity order) against the
/// class masks of `gt`.
inline LossValue confidence_weighted_loss(const std::array<std::span<const double>, 3>& channels,
                                          const LabelVolume& gt, const ConfidenceLevels& conf,
                                          bool with_gradient = true) {
    LossValue out;
    double sum = 0.0;
    for (auto c : kAllClasses) {
        const auto k = static_cast<std::size_t>(c);
        const auto p = channels[k];
        if (p.size() != gt.labels.size()) throw validation_error("probability channel and label volume sizes differ");
        const auto mask = class_mask(gt, c);
        std::vector<double> g_ce, g_sd;
        if (with_gradient) {
            g_ce.resize(p.size());
            g_sd.resize(p.size());
        }
        auto& cl = out.per_class[k];
        cl.cross_entropy = cross_entropy_loss(p, mask.bits, g_ce);
        cl.soft_dice = soft_dice_loss(p, mask.bits, g_sd);
        cl.unweighted = 0.5 * (cl.cross_entropy + cl.soft_dice);
        cl.alpha = alpha(conf[c]);
        cl.weighted = cl.alpha * cl.unweighted;
        sum += cl.weighted;
        if (with_gradient) {
            auto& g = out.gradient[k];
            g.resize(p.size());
            const double scale = cl.alpha * 0.5 / 3.0;
            for (std::size_t i = 0; i < p.size(); ++i) g[i] = scale * (g_ce[i] + g_sd[i]);
        }
    }
    out.total = sum / 3.0;
    return out;
}

inline LossValue confidence_weighted_loss(const ProbabilityVolume& pv, const LabelVolume& gt,
                                          const ConfidenceLevels& conf, bool with_gradient = true) {
    if (pv.dims != gt.dims) throw validation_error("probability volume and label volume dims differ");
    std::array<std::vector<double>, 3> wide;
    for (std::size_t k = 0; k < 3; ++k) wide[k].assign(pv.channels[k].begin(), pv.channels[k].end());
    return confidence_weighted_loss({std::span<const double>(wide[0]), std::span<const double>(wide[1]),
                                     std::span<const double>(wide[2])},
                                    gt, conf, with_gradient);
}

}  // namespace glioburden
