#pragma once

// Automated bidimensional (RANO) measurement of enhancing-tumour lesions.
//
// Two algorithms are provided:
//   Diameters - the longest inscribed segment over all slices of a lesion,
//               then the longest inscribed segment in the same slice region
//               that is perpendicular to it within the angular tolerance.
//   Product   - the pair of perpendicular inscribed segments (same slice
//               region, both above the minimum length) maximising the
//               product of their lengths.
//
// Both searches are exact. Candidate segments are enumerated in decreasing
// length, inscription is checked lazily, and bounds prune only candidates
// that are strictly worse than the incumbent, so results (including every
// tie-break) equal the brute-force enumeration in rano_oracle.hpp.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "glioburden/error.hpp"
#include "glioburden/volume.hpp"

namespace glioburden {

enum class RanoAlgorithm { Diameters, Product };

inline std::string_view algorithm_name(RanoAlgorithm a) {
    return a == RanoAlgorithm::Diameters ? "diameters" : "product";
}

inline RanoAlgorithm parse_algorithm(std::string_view s) {
    if (s == "diameters") return RanoAlgorithm::Diameters;
    if (s == "product") return RanoAlgorithm::Product;
    throw validation_error("unknown RANO algorithm '" + std::string(s) + "'");
}

struct RanoParams {
    double min_diameter_mm = 10.0;
    double angle_tolerance_deg = 5.0;
    std::size_t max_lesions = 5;
    /// Sampling step of the inscription test; unset means 0.25 * min(dx, dy).
    std::optional<double> inscription_step_mm;
    int connectivity = 26;          // 3D lesion definition
    int inplane_connectivity = 8;   // slice region definition
    unsigned threads = 1;

    double step_for(double dx, double dy) const {
        return inscription_step_mm ? *inscription_step_mm : 0.25 * std::min(dx, dy);
    }

    void validate() const {
        if (!(min_diameter_mm > 0.0) || !std::isfinite(min_diameter_mm))
            throw validation_error("min diameter must be positive");
        if (!(angle_tolerance_deg > 0.0) || !(angle_tolerance_deg < 45.0))
            throw validation_error("angle tolerance must lie in (0, 45) degrees");
        if (max_lesions == 0) throw validation_error("max lesions must be positive");
        if (inscription_step_mm && !(*inscription_step_mm > 0.0))
            throw validation_error("inscription step must be positive");
        neighbourhood(connectivity);
        if (inplane_connectivity != 4 && inplane_connectivity != 8)
            throw validation_error("in-plane connectivity must be 4 or 8");
    }
};

/// In-plane pixel coordinates of a segment's endpoints.
struct PixelSegment {
    long long x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool operator==(const PixelSegment&) const = default;
};

struct Segment2D {
    PixelSegment pixels;
    std::array<double, 2> p0_mm{};
    std::array<double, 2> p1_mm{};
    double length_mm = 0.0;

    bool operator==(const Segment2D&) const = default;
};

struct LesionMeasurement {
    std::uint32_t component_id = 0;
    std::size_t slice_index = 0;
    std::optional<Segment2D> major;
    std::optional<Segment2D> perpendicular;
    double product_mm2 = 0.0;
    bool measurable = false;

    bool operator==(const LesionMeasurement&) const = default;
};

struct RanoMeasurement {
    RanoAlgorithm algorithm = RanoAlgorithm::Diameters;
    std::vector<LesionMeasurement> lesions;
    double sum_product_mm2 = 0.0;

    std::size_t measurable_count() const {
        return static_cast<std::size_t>(std::count_if(
            lesions.begin(), lesions.end(), [](const auto& l) { return l.measurable; }));
    }

    bool operator==(const RanoMeasurement&) const = default;
};

// ---------------------------------------------------------------------------
// Feasibility rules shared by the optimized search and the oracle.

inline constexpr double kInclusiveSlack = 1e-9;

inline double segment_length2(long long di, long long dj, double dx, double dy) {
    const double a = dx * static_cast<double>(di);
    const double b = dy * static_cast<double>(dj);
    return a * a + b * b;
}

inline bool meets_min_length(double length_mm, double min_mm) {
    return length_mm >= min_mm - kInclusiveSlack;
}

/// Angle between the two segment lines (mm space) lies in [90 - tol, 90 + tol].
inline bool perpendicular_within(long long di1, long long dj1, long long di2, long long dj2,
                                 double dx, double dy, double tolerance_deg) {
    const double ux = dx * static_cast<double>(di1), uy = dy * static_cast<double>(dj1);
    const double vx = dx * static_cast<double>(di2), vy = dy * static_cast<double>(dj2);
    const double cross = std::abs(ux * vy - uy * vx);
    const double dot = std::abs(ux * vx + uy * vy);
    const double angle = std::atan2(cross, dot) * (180.0 / std::numbers::pi);
    return angle >= 90.0 - tolerance_deg - kInclusiveSlack;
}

namespace detail {

// Candidate nearest pixels of coordinate origin + num/den along one axis.
// Returns {hi, tied}: nearest is `hi`; when tied, `hi - 1` is equally near.
inline std::pair<long long, bool> nearest_pixel(long long origin, long long num, long long den) {
    const long long t = 2 * num + den;
    const long long two_den = 2 * den;
    long long q = t / two_den;
    long long r = t % two_den;
    if (r < 0) {
        r += two_den;
        --q;
    }
    return {origin + q, r == 0};
}

}  // namespace detail

/// True iff every sample along the segment, taken at most `step_mm` apart with
/// both endpoints included, falls on a set pixel of `region` (nearest pixel
/// centre; a sample exactly between pixel centres passes if any of the tied
/// pixels is set). Coordinates are pixel indices into `region`.
inline bool is_inscribed(const PixelSegment& s, const Mask2D& region, double step_mm) {
    const long long di = s.x1 - s.x0;
    const long long dj = s.y1 - s.y0;
    auto set_at = [&](long long x, long long y) {
        return region.in_bounds(x, y) &&
               region.test(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
    };
    if (di == 0 && dj == 0) return set_at(s.x0, s.y0);
    const double length = std::sqrt(segment_length2(di, dj, region.dx, region.dy));
    const auto n = static_cast<long long>(std::ceil(length / step_mm));
    const long long steps = std::max<long long>(n, 1);
    for (long long k = 0; k <= steps; ++k) {
        const auto [px, tx] = detail::nearest_pixel(s.x0, k * di, steps);
        const auto [py, ty] = detail::nearest_pixel(s.y0, k * dj, steps);
        bool ok = set_at(px, py);
        if (!ok && tx) ok = set_at(px - 1, py);
        if (!ok && ty) ok = set_at(px, py - 1);
        if (!ok && tx && ty) ok = set_at(px - 1, py - 1);
        if (!ok) return false;
    }
    return true;
}

/// Segment2D overload; p0/p1 pixel coordinates are taken from `s.pixels`.
inline bool is_inscribed(const Segment2D& s, const Mask2D& region, double step_mm) {
    return is_inscribed(s.pixels, region, step_mm);
}

inline Segment2D make_segment(const PixelSegment& p, double dx, double dy) {
    Segment2D s;
    s.pixels = p;
    s.p0_mm = {static_cast<double>(p.x0) * dx, static_cast<double>(p.y0) * dy};
    s.p1_mm = {static_cast<double>(p.x1) * dx, static_cast<double>(p.y1) * dy};
    s.length_mm = std::sqrt(segment_length2(p.x1 - p.x0, p.y1 - p.y0, dx, dy));
    return s;
}

/// Orders lesions by descending product (ties by component id) and sums the
/// largest `max_lesions` measurable products.
inline RanoMeasurement finalize_rano(RanoAlgorithm algorithm, std::vector<LesionMeasurement> lesions,
                                     std::size_t max_lesions) {
    std::stable_sort(lesions.begin(), lesions.end(), [](const auto& a, const auto& b) {
        if (a.product_mm2 != b.product_mm2) return a.product_mm2 > b.product_mm2;
        return a.component_id < b.component_id;
    });
    RanoMeasurement out{algorithm, std::move(lesions), 0.0};
    std::size_t used = 0;
    for (const auto& l : out.lesions) {
        if (!l.measurable || used == max_lesions) continue;
        out.sum_product_mm2 += l.product_mm2;
        ++used;
    }
    return out;
}

/// Voxel indices (ascending) of every component, indexed by id - 1.
inline std::vector<std::vector<std::size_t>> component_voxels(const ComponentLabeling& cc) {
    std::vector<std::vector<std::size_t>> out(cc.component_count);
    for (std::size_t i = 0; i < cc.ids.size(); ++i)
        if (cc.ids[i]) out[cc.ids[i] - 1].push_back(i);
    return out;
}

namespace detail {

struct Pixel {
    long long x, y;
};

/// One 2D connected region of a lesion on one slice. The mask covers the
/// slice bounding box of the lesion; pixel coordinates are global.
struct Region {
    std::size_t z = 0;
    long long ox = 0, oy = 0;
    Mask2D mask;
    std::vector<Pixel> pixels;  // storage order
    double max_length = 0.0;    // farthest pixel pair, inscribed or not
};

inline std::vector<Region> lesion_regions(const std::vector<std::size_t>& voxels, const Dims& dims,
                                          const Spacing& sp, int inplane_connectivity) {
    std::vector<Region> out;
    const std::size_t plane = dims.nx * dims.ny;
    std::size_t begin = 0;
    while (begin < voxels.size()) {
        const std::size_t z = voxels[begin] / plane;
        std::size_t end = begin;
        long long minx = static_cast<long long>(dims.nx), maxx = -1;
        long long miny = static_cast<long long>(dims.ny), maxy = -1;
        while (end < voxels.size() && voxels[end] / plane == z) {
            const auto r = voxels[end] % plane;
            const auto x = static_cast<long long>(r % dims.nx);
            const auto y = static_cast<long long>(r / dims.nx);
            minx = std::min(minx, x), maxx = std::max(maxx, x);
            miny = std::min(miny, y), maxy = std::max(maxy, y);
            ++end;
        }
        const auto w = static_cast<std::size_t>(maxx - minx + 1);
        const auto h = static_cast<std::size_t>(maxy - miny + 1);
        Mask2D local(w, h, sp.dx, sp.dy);
        for (std::size_t i = begin; i < end; ++i) {
            const auto r = voxels[i] % plane;
            local.set(static_cast<std::size_t>(static_cast<long long>(r % dims.nx) - minx),
                      static_cast<std::size_t>(static_cast<long long>(r / dims.nx) - miny));
        }
        const auto labels = connected_components_2d(local, inplane_connectivity);
        const auto first = out.size();
        for (std::uint32_t id = 1; id <= labels.component_count; ++id) {
            Region reg;
            reg.z = z;
            reg.ox = minx;
            reg.oy = miny;
            reg.mask = Mask2D(w, h, sp.dx, sp.dy);
            out.push_back(std::move(reg));
        }
        for (std::size_t i = 0; i < labels.ids.size(); ++i) {
            if (!labels.ids[i]) continue;
            auto& reg = out[first + labels.ids[i] - 1];
            reg.mask.bits[i] = 1;
            reg.pixels.push_back({static_cast<long long>(i % w) + minx,
                                  static_cast<long long>(i / w) + miny});
        }
        for (std::size_t r = first; r < out.size(); ++r) {
            auto& reg = out[r];
            // The farthest pair lies on the convex hull, whose vertices are
            // always 4-boundary pixels.
            std::vector<Pixel> rim;
            for (const auto& p : reg.pixels) {
                const auto lx = p.x - minx, ly = p.y - miny;
                auto in = [&](long long x, long long y) {
                    return reg.mask.in_bounds(x, y) &&
                           reg.mask.test(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
                };
                if (!in(lx - 1, ly) || !in(lx + 1, ly) || !in(lx, ly - 1) || !in(lx, ly + 1))
                    rim.push_back(p);
            }
            double best = 0.0;
            for (std::size_t a = 0; a < rim.size(); ++a)
                for (std::size_t b = a + 1; b < rim.size(); ++b)
                    best = std::max(best, segment_length2(rim[b].x - rim[a].x,
                                                          rim[b].y - rim[a].y, sp.dx, sp.dy));
            reg.max_length = std::sqrt(best);
        }
        begin = end;
    }
    return out;
}

/// Candidate segments of one region (length >= min), sorted by decreasing
/// length then ascending endpoint keys, with lazily evaluated inscription and
/// an index by direction.
class RegionSearch {
public:
    struct Candidate {
        double len2;
        double len;
        std::uint32_t a, b;  // indices into region.pixels, a < b
    };

    static constexpr double kBinWidthDeg = 1.0;
    static constexpr std::size_t kBins = 180;

    RegionSearch(const Region& region, double min_mm, double step_mm)
        : region_(&region), step_(step_mm), bins_(kBins) {
        const auto& px = region.pixels;
        const double dx = region.mask.dx, dy = region.mask.dy;
        for (std::uint32_t a = 0; a < px.size(); ++a)
            for (std::uint32_t b = a + 1; b < px.size(); ++b) {
                const double len2 = segment_length2(px[b].x - px[a].x, px[b].y - px[a].y, dx, dy);
                const double len = std::sqrt(len2);
                if (meets_min_length(len, min_mm)) cands_.push_back({len2, len, a, b});
            }
        std::sort(cands_.begin(), cands_.end(), [](const Candidate& l, const Candidate& r) {
            if (l.len2 != r.len2) return l.len2 > r.len2;
            if (l.a != r.a) return l.a < r.a;
            return l.b < r.b;
        });
        inscribed_.assign(cands_.size(), -1);
        for (std::uint32_t i = 0; i < cands_.size(); ++i) bins_[bin_of(direction_deg(i))].push_back(i);
    }

    const Region& region() const { return *region_; }
    const std::vector<Candidate>& candidates() const { return cands_; }
    const std::vector<std::uint32_t>& bin(std::size_t b) const { return bins_[b]; }

    long long di(std::uint32_t i) const {
        return region_->pixels[cands_[i].b].x - region_->pixels[cands_[i].a].x;
    }
    long long dj(std::uint32_t i) const {
        return region_->pixels[cands_[i].b].y - region_->pixels[cands_[i].a].y;
    }

    bool inscribed(std::uint32_t i) {
        auto& state = inscribed_[i];
        if (state < 0) {
            const auto& p = region_->pixels;
            const auto& c = cands_[i];
            const PixelSegment local{p[c.a].x - region_->ox, p[c.a].y - region_->oy,
                                     p[c.b].x - region_->ox, p[c.b].y - region_->oy};
            state = is_inscribed(local, region_->mask, step_) ? 1 : 0;
        }
        return state == 1;
    }

    bool perpendicular(std::uint32_t i, std::uint32_t j, double tol) const {
        return perpendicular_within(di(i), dj(i), di(j), dj(j), region_->mask.dx,
                                    region_->mask.dy, tol);
    }

    /// Direction bins that may hold segments perpendicular to candidate i.
    std::vector<std::size_t> window(std::uint32_t i, double tol) const {
        const double centre = direction_deg(i) + 90.0;
        const auto lo = static_cast<long long>(std::floor((centre - tol) / kBinWidthDeg)) - 1;
        const auto hi = static_cast<long long>(std::floor((centre + tol) / kBinWidthDeg)) + 1;
        std::vector<std::size_t> out;
        const auto n = static_cast<long long>(kBins);
        for (long long b = lo; b <= hi; ++b) out.push_back(static_cast<std::size_t>(((b % n) + n) % n));
        return out;
    }

    PixelSegment pixel_segment(std::uint32_t i) const {
        const auto& p = region_->pixels;
        return {p[cands_[i].a].x, p[cands_[i].a].y, p[cands_[i].b].x, p[cands_[i].b].y};
    }

private:
    double direction_deg(std::uint32_t i) const {
        // a precedes b in storage order, so dj >= 0 and the angle is in [0, 180).
        const double deg = std::atan2(region_->mask.dy * static_cast<double>(dj(i)),
                                      region_->mask.dx * static_cast<double>(di(i))) *
                           (180.0 / std::numbers::pi);
        return deg;
    }
    static std::size_t bin_of(double deg) {
        const auto b = static_cast<long long>(std::floor(deg / kBinWidthDeg));
        return static_cast<std::size_t>(std::clamp<long long>(b, 0, kBins - 1));
    }

    const Region* region_;
    double step_;
    std::vector<Candidate> cands_;
    std::vector<std::int8_t> inscribed_;
    std::vector<std::vector<std::uint32_t>> bins_;
};

/// Global storage key of a pixel within its slice.
inline std::size_t pixel_key(const Pixel& p, const Dims& dims) {
    return static_cast<std::size_t>(p.x) + dims.nx * static_cast<std::size_t>(p.y);
}

using SegmentKey = std::pair<std::size_t, std::size_t>;

inline SegmentKey segment_key(const RegionSearch& rs, std::uint32_t i, const Dims& dims) {
    const auto& p = rs.region().pixels;
    const auto& c = rs.candidates()[i];
    return {pixel_key(p[c.a], dims), pixel_key(p[c.b], dims)};
}

inline std::vector<std::size_t> regions_by_bound(const std::vector<Region>& regions) {
    std::vector<std::size_t> order(regions.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return regions[a].max_length > regions[b].max_length;
    });
    return order;
}

inline LesionMeasurement unmeasurable(std::uint32_t id, std::size_t z) {
    LesionMeasurement m;
    m.component_id = id;
    m.slice_index = z;
    return m;
}

inline LesionMeasurement measure_diameters(const std::vector<Region>& regions, std::uint32_t id,
                                           const Dims& dims, const RanoParams& params) {
    const double tol = params.angle_tolerance_deg;
    const double min_mm = params.min_diameter_mm;
    std::vector<std::unique_ptr<RegionSearch>> searches(regions.size());
    struct Tie {
        std::size_t region;
        std::uint32_t cand;
    };
    double best_len2 = -1.0;
    std::vector<Tie> ties;

    for (const auto r : regions_by_bound(regions)) {
        const auto& reg = regions[r];
        if (!meets_min_length(reg.max_length, min_mm)) break;
        if (reg.max_length * reg.max_length < best_len2) break;
        auto rs = std::make_unique<RegionSearch>(reg, min_mm, params.step_for(reg.mask.dx, reg.mask.dy));
        const auto& cands = rs->candidates();
        bool used = false;
        for (std::uint32_t i = 0; i < cands.size(); ++i) {
            if (cands[i].len2 < best_len2) break;
            if (!rs->inscribed(i)) continue;
            if (cands[i].len2 > best_len2) {
                best_len2 = cands[i].len2;
                ties.clear();
                for (auto& s : searches) s.reset();
            }
            ties.push_back({r, i});
            used = true;
        }
        if (used) searches[r] = std::move(rs);
    }
    if (ties.empty()) return unmeasurable(id, regions.empty() ? 0 : regions.front().z);

    // Perpendicular: longest inscribed, angle-compatible, ties by key.
    struct Choice {
        Tie major;
        std::optional<std::uint32_t> perp;
        double perp_len2 = -1.0;
    };
    std::optional<Choice> chosen;
    for (const auto& t : ties) {
        auto& rs = *searches[t.region];
        const auto& cands = rs.candidates();
        std::optional<std::uint32_t> perp;
        for (const auto b : rs.window(t.cand, tol)) {
            for (const auto j : rs.bin(b)) {
                // Bins list positions in ascending order, i.e. best first.
                if (perp && j > *perp) break;
                if (!rs.perpendicular(t.cand, j, tol) || !rs.inscribed(j)) continue;
                perp = j;
                break;
            }
        }
        Choice c{t, perp, perp ? cands[*perp].len2 : -1.0};
        if (!chosen) {
            chosen = c;
            continue;
        }
        const auto& best = *chosen;
        const auto zc = regions[c.major.region].z, zb = regions[best.major.region].z;
        const auto kc = segment_key(rs, c.major.cand, dims);
        const auto kb = segment_key(*searches[best.major.region], best.major.cand, dims);
        if (c.perp_len2 > best.perp_len2 ||
            (c.perp_len2 == best.perp_len2 && std::tie(zc, kc) < std::tie(zb, kb)))
            chosen = c;
    }

    const auto& rs = *searches[chosen->major.region];
    const auto z = regions[chosen->major.region].z;
    if (!chosen->perp) return unmeasurable(id, z);
    LesionMeasurement m;
    m.component_id = id;
    m.slice_index = z;
    m.major = make_segment(rs.pixel_segment(chosen->major.cand), rs.region().mask.dx, rs.region().mask.dy);
    m.perpendicular = make_segment(rs.pixel_segment(*chosen->perp), rs.region().mask.dx, rs.region().mask.dy);
    m.product_mm2 = m.major->length_mm * m.perpendicular->length_mm;
    m.measurable = true;
    return m;
}

inline LesionMeasurement measure_product(const std::vector<Region>& regions, std::uint32_t id,
                                         const Dims& dims, const RanoParams& params) {
    const double tol = params.angle_tolerance_deg;
    const double min_mm = params.min_diameter_mm;

    struct Best {
        double product = 0.0;
        double major_len2 = 0.0;
        std::size_t z = 0;
        SegmentKey major_key, perp_key;
        PixelSegment major, perp;
        double dx = 1.0, dy = 1.0;
    };
    std::optional<Best> best;
    auto better = [](const Best& c, const Best& b) {
        if (c.product != b.product) return c.product > b.product;
        if (c.major_len2 != b.major_len2) return c.major_len2 > b.major_len2;
        return std::tie(c.z, c.major_key, c.perp_key) < std::tie(b.z, b.major_key, b.perp_key);
    };

    for (const auto r : regions_by_bound(regions)) {
        const auto& reg = regions[r];
        if (!meets_min_length(reg.max_length, min_mm)) break;
        if (best && reg.max_length * reg.max_length < best->product) break;
        RegionSearch rs(reg, min_mm, params.step_for(reg.mask.dx, reg.mask.dy));
        const auto& cands = rs.candidates();
        for (std::uint32_t i = 0; i < cands.size(); ++i) {
            const double li = cands[i].len;
            if (best && li * li < best->product) break;
            if (!rs.inscribed(i)) continue;
            for (const auto b : rs.window(i, tol)) {
                const auto& list = rs.bin(b);
                for (auto it = std::upper_bound(list.begin(), list.end(), i); it != list.end(); ++it) {
                    const auto j = *it;
                    const double prod = li * cands[j].len;
                    if (best && prod < best->product) break;
                    if (!rs.perpendicular(i, j, tol) || !rs.inscribed(j)) continue;
                    Best c{prod, cands[i].len2, reg.z, segment_key(rs, i, dims), segment_key(rs, j, dims),
                           rs.pixel_segment(i), rs.pixel_segment(j), reg.mask.dx, reg.mask.dy};
                    if (!best || better(c, *best)) best = c;
                }
            }
        }
    }
    if (!best) return unmeasurable(id, regions.empty() ? 0 : regions.front().z);
    LesionMeasurement m;
    m.component_id = id;
    m.slice_index = best->z;
    m.major = make_segment(best->major, best->dx, best->dy);
    m.perpendicular = make_segment(best->perp, best->dx, best->dy);
    m.product_mm2 = m.major->length_mm * m.perpendicular->length_mm;
    m.measurable = true;
    return m;
}

}  // namespace detail

/// Measures a single lesion given as a mask holding one connected component.
inline LesionMeasurement measure_lesion_diameters(const BinaryMask& lesion, const RanoParams& params,
                                                  std::uint32_t component_id = 1) {
    params.validate();
    std::vector<std::size_t> voxels;
    for (std::size_t i = 0; i < lesion.bits.size(); ++i)
        if (lesion.bits[i]) voxels.push_back(i);
    const auto regions =
        detail::lesion_regions(voxels, lesion.dims, lesion.spacing, params.inplane_connectivity);
    return detail::measure_diameters(regions, component_id, lesion.dims, params);
}

inline LesionMeasurement measure_lesion_product(const BinaryMask& lesion, const RanoParams& params,
                                                std::uint32_t component_id = 1) {
    params.validate();
    std::vector<std::size_t> voxels;
    for (std::size_t i = 0; i < lesion.bits.size(); ++i)
        if (lesion.bits[i]) voxels.push_back(i);
    const auto regions =
        detail::lesion_regions(voxels, lesion.dims, lesion.spacing, params.inplane_connectivity);
    return detail::measure_product(regions, component_id, lesion.dims, params);
}

/// Per-lesion measurement of every 3D connected component of `et`, plus the
/// sum of the largest `max_lesions` measurable products.
inline RanoMeasurement rano(const BinaryMask& et, const RanoParams& params, RanoAlgorithm algorithm) {
    params.validate();
    const auto cc = connected_components(et, params.connectivity);
    const auto voxels = component_voxels(cc);
    std::vector<LesionMeasurement> lesions(voxels.size());

    auto work = [&](std::size_t c) {
        const auto regions =
            detail::lesion_regions(voxels[c], et.dims, et.spacing, params.inplane_connectivity);
        const auto id = static_cast<std::uint32_t>(c + 1);
        lesions[c] = algorithm == RanoAlgorithm::Diameters
                         ? detail::measure_diameters(regions, id, et.dims, params)
                         : detail::measure_product(regions, id, et.dims, params);
    };

    const unsigned workers = std::min<std::size_t>(std::max(1u, params.threads), voxels.size());
    if (workers <= 1) {
        for (std::size_t c = 0; c < voxels.size(); ++c) work(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (auto c = next++; c < voxels.size(); c = next++) work(c);
            });
    }
    return finalize_rano(algorithm, std::move(lesions), params.max_lesions);
}

}  // namespace glioburden
