#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "glioburden/error.hpp"
#include "glioburden/volume.hpp"

namespace glioburden {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    bool operator==(const ConfusionCounts&) const = default;
};

inline ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.dims != gt.dims) throw validation_error("prediction and ground truth dims differ");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// Overlap metrics. Both masks empty -> 1, exactly one empty -> 0.

inline double dice(const ConfusionCounts& c) {
    const auto denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) return 1.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline double iou(const ConfusionCounts& c) {
    const auto denom = c.tp + c.fp + c.fn;
    if (denom == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(denom);
}

/// tp / (tp + fn); 1 when the ground truth is empty.
inline double sensitivity(const ConfusionCounts& c) {
    const auto denom = c.tp + c.fn;
    return denom == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

/// tn / (tn + fp); 1 when there are no ground-truth negatives.
inline double specificity(const ConfusionCounts& c) {
    const auto denom = c.tn + c.fp;
    return denom == 0 ? 1.0 : static_cast<double>(c.tn) / static_cast<double>(denom);
}

/// Linear interpolation between order statistics at position q * (n - 1).
/// `sorted` must be ascending and non-empty.
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.size() == 1) return sorted.front();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw validation_error("percentile of an empty sample");
    std::sort(values.begin(), values.end());
    return percentile_sorted(values, q);
}

namespace detail {

/// Uniform bucket grid over boundary voxels for exact nearest-neighbour queries.
class BoundaryIndex {
public:
    static constexpr long long kCell = 4;

    BoundaryIndex(const std::vector<Voxel>& pts, const Dims& dims, const Spacing& sp)
        : pts_(pts), sp_(sp) {
        gx_ = static_cast<long long>(dims.nx) / kCell + 1;
        gy_ = static_cast<long long>(dims.ny) / kCell + 1;
        gz_ = static_cast<long long>(dims.nz) / kCell + 1;
        cells_.resize(static_cast<std::size_t>(gx_ * gy_ * gz_));
        for (std::uint32_t i = 0; i < pts_.size(); ++i) cells_[cell_of(pts_[i])].push_back(i);
        min_spacing_ = std::min({sp.dx, sp.dy, sp.dz});
        max_ring_ = std::max({gx_, gy_, gz_});
    }

    double nearest(const Voxel& q) const {
        const auto cx = static_cast<long long>(q.x) / kCell;
        const auto cy = static_cast<long long>(q.y) / kCell;
        const auto cz = static_cast<long long>(q.z) / kCell;
        double best2 = std::numeric_limits<double>::infinity();
        for (long long r = 0; r <= max_ring_; ++r) {
            for (long long z = cz - r; z <= cz + r; ++z)
                for (long long y = cy - r; y <= cy + r; ++y)
                    for (long long x = cx - r; x <= cx + r; ++x) {
                        const bool shell = std::abs(x - cx) == r || std::abs(y - cy) == r || std::abs(z - cz) == r;
                        if (!shell || x < 0 || y < 0 || z < 0 || x >= gx_ || y >= gy_ || z >= gz_) continue;
                        for (const auto i : cells_[static_cast<std::size_t>(x + gx_ * (y + gy_ * z))])
                            best2 = std::min(best2, distance2(q, pts_[i], sp_));
                    }
            // Anything outside rings 0..r is at least r*kCell voxels away on some axis.
            const double reach = static_cast<double>(r * kCell) * min_spacing_;
            if (best2 <= reach * reach) break;
        }
        return std::sqrt(best2);
    }

    static double distance2(const Voxel& a, const Voxel& b, const Spacing& sp) {
        const double ex = (static_cast<double>(a.x) - static_cast<double>(b.x)) * sp.dx;
        const double ey = (static_cast<double>(a.y) - static_cast<double>(b.y)) * sp.dy;
        const double ez = (static_cast<double>(a.z) - static_cast<double>(b.z)) * sp.dz;
        return ex * ex + ey * ey + ez * ez;
    }

private:
    std::size_t cell_of(const Voxel& v) const {
        const auto x = static_cast<long long>(v.x) / kCell;
        const auto y = static_cast<long long>(v.y) / kCell;
        const auto z = static_cast<long long>(v.z) / kCell;
        return static_cast<std::size_t>(x + gx_ * (y + gy_ * z));
    }

    const std::vector<Voxel>& pts_;
    Spacing sp_;
    long long gx_ = 0, gy_ = 0, gz_ = 0, max_ring_ = 0;
    double min_spacing_ = 1.0;
    std::vector<std::vector<std::uint32_t>> cells_;
};

inline double directed_percentile(const std::vector<Voxel>& from, const std::vector<Voxel>& to,
                                  const Dims& dims, const Spacing& sp, double q) {
    const BoundaryIndex index(to, dims, sp);
    std::vector<double> d;
    d.reserve(from.size());
    for (const auto& v : from) d.push_back(index.nearest(v));
    std::sort(d.begin(), d.end());
    return percentile_sorted(d, q);
}

}  // namespace detail

struct HausdorffResult {
    double value_mm = 0.0;  // +inf when exactly one mask is empty
    bool one_empty = false;
    bool both_empty = false;
};

/// Max of the two directed 95th-percentile boundary distances (mm).
inline HausdorffResult hausdorff95_detail(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.dims != gt.dims) throw validation_error("prediction and ground truth dims differ");
    if (pred.spacing != gt.spacing) throw validation_error("prediction and ground truth spacing differ");
    const auto a = boundary_voxels(pred);
    const auto b = boundary_voxels(gt);
    if (a.empty() && b.empty()) return {0.0, false, true};
    if (a.empty() || b.empty()) return {std::numeric_limits<double>::infinity(), true, false};
    const double ab = detail::directed_percentile(a, b, pred.dims, pred.spacing, 0.95);
    const double ba = detail::directed_percentile(b, a, pred.dims, pred.spacing, 0.95);
    return {std::max(ab, ba), false, false};
}

inline double hausdorff95(const BinaryMask& pred, const BinaryMask& gt) {
    return hausdorff95_detail(pred, gt).value_mm;
}

struct ClassMetrics {
    ConfusionCounts counts;
    double dice = 0.0;
    double iou = 0.0;
    double h95_mm = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    /// Names of the empty-mask conventions applied, e.g. "dice_both_empty".
    std::vector<std::string> flags;
};

struct MetricReport {
    std::string patient_id;
    std::map<ClassName, ClassMetrics> classes;
};

inline ClassMetrics evaluate_class(const BinaryMask& pred, const BinaryMask& gt) {
    ClassMetrics m;
    m.counts = confusion(pred, gt);
    const auto& c = m.counts;
    m.dice = dice(c);
    m.iou = iou(c);
    m.sensitivity = sensitivity(c);
    m.specificity = specificity(c);
    const auto h = hausdorff95_detail(pred, gt);
    m.h95_mm = h.value_mm;
    if (c.tp + c.fp + c.fn == 0) m.flags.push_back("overlap_both_empty");
    else if (c.tp == 0 && (c.fp == 0 || c.fn == 0)) m.flags.push_back("overlap_one_empty");
    if (c.tp + c.fn == 0) m.flags.push_back("sensitivity_undefined");
    if (c.tn + c.fp == 0) m.flags.push_back("specificity_undefined");
    if (h.both_empty) m.flags.push_back("h95_both_empty");
    if (h.one_empty) m.flags.push_back("h95_one_empty");
    return m;
}

inline MetricReport evaluate(const LabelVolume& pred, const LabelVolume& gt,
                             const std::vector<ClassName>& classes) {
    if (pred.dims != gt.dims) throw validation_error("prediction and ground truth dims differ");
    MetricReport r;
    for (auto c : classes) r.classes[c] = evaluate_class(class_mask(pred, c), class_mask(gt, c));
    return r;
}

}  // namespace glioburden
