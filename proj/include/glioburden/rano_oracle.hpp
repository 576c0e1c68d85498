#pragma once

// Brute-force reference for rano(): every ordered pixel pair of every slice
// region is enumerated, and for the Product algorithm every pair of such
// segments. Intended for verification on small inputs.

#include <cstdint>
#include <optional>
#include <tuple>
#include <vector>

#include "glioburden/rano.hpp"

namespace glioburden {

inline constexpr std::size_t kOracleRegionLimit = 4096;

namespace oracle_detail {

struct Seg {
    PixelSegment px;
    double len2;
    double len;
    std::size_t key0, key1;
    long long di() const { return px.x1 - px.x0; }
    long long dj() const { return px.y1 - px.y0; }
};

struct SliceRegion {
    std::size_t z;
    std::vector<Seg> inscribed;  // every inscribed segment, p0 before p1 in storage order
};

inline std::vector<SliceRegion> enumerate(const BinaryMask& lesion, const RanoParams& params) {
    std::vector<SliceRegion> out;
    const double dx = lesion.spacing.dx, dy = lesion.spacing.dy;
    const double step = params.step_for(dx, dy);
    for (std::size_t z = 0; z < lesion.dims.nz; ++z) {
        const auto slice = extract_slice(lesion, z);
        const auto labels = connected_components_2d(slice, params.inplane_connectivity);
        for (std::uint32_t id = 1; id <= labels.component_count; ++id) {
            Mask2D region(slice.nx, slice.ny, dx, dy);
            std::vector<std::size_t> keys;
            for (std::size_t i = 0; i < labels.ids.size(); ++i)
                if (labels.ids[i] == id) {
                    region.bits[i] = 1;
                    keys.push_back(i);
                }
            if (keys.size() > kOracleRegionLimit)
                throw validation_error("oracle guard exceeded: slice region larger than 4096 pixels");
            SliceRegion sr{z, {}};
            for (std::size_t a = 0; a < keys.size(); ++a)
                for (std::size_t b = a + 1; b < keys.size(); ++b) {
                    const PixelSegment px{static_cast<long long>(keys[a] % slice.nx),
                                          static_cast<long long>(keys[a] / slice.nx),
                                          static_cast<long long>(keys[b] % slice.nx),
                                          static_cast<long long>(keys[b] / slice.nx)};
                    if (!is_inscribed(px, region, step)) continue;
                    const double len2 = segment_length2(px.x1 - px.x0, px.y1 - px.y0, dx, dy);
                    sr.inscribed.push_back({px, len2, std::sqrt(len2), keys[a], keys[b]});
                }
            out.push_back(std::move(sr));
        }
    }
    return out;
}

inline LesionMeasurement oracle_diameters(const BinaryMask& lesion, std::uint32_t id,
                                          const RanoParams& params) {
    const auto regions = enumerate(lesion, params);
    const double dx = lesion.spacing.dx, dy = lesion.spacing.dy;
    const double tol = params.angle_tolerance_deg;

    double longest = -1.0;
    for (const auto& r : regions)
        for (const auto& s : r.inscribed) longest = std::max(longest, s.len2);

    LesionMeasurement out;
    out.component_id = id;
    out.slice_index = regions.empty() ? 0 : regions.front().z;
    if (longest < 0.0 || !meets_min_length(std::sqrt(longest), params.min_diameter_mm)) return out;

    const Seg* best_major = nullptr;
    const Seg* best_perp = nullptr;
    double best_perp_len2 = -1.0;
    std::size_t best_z = 0;
    for (const auto& r : regions)
        for (const auto& major : r.inscribed) {
            if (major.len2 != longest) continue;
            const Seg* perp = nullptr;
            for (const auto& s : r.inscribed) {
                if (!perpendicular_within(major.di(), major.dj(), s.di(), s.dj(), dx, dy, tol)) continue;
                if (!perp || s.len2 > perp->len2 ||
                    (s.len2 == perp->len2 && std::tie(s.key0, s.key1) < std::tie(perp->key0, perp->key1)))
                    perp = &s;
            }
            if (perp && !meets_min_length(perp->len, params.min_diameter_mm)) perp = nullptr;
            const double perp_len2 = perp ? perp->len2 : -1.0;
            const bool better =
                !best_major || perp_len2 > best_perp_len2 ||
                (perp_len2 == best_perp_len2 &&
                 std::tie(r.z, major.key0, major.key1) < std::tie(best_z, best_major->key0, best_major->key1));
            if (better) {
                best_major = &major;
                best_perp = perp;
                best_perp_len2 = perp_len2;
                best_z = r.z;
            }
        }
    out.slice_index = best_z;
    if (!best_perp) return out;
    out.major = make_segment(best_major->px, dx, dy);
    out.perpendicular = make_segment(best_perp->px, dx, dy);
    out.product_mm2 = out.major->length_mm * out.perpendicular->length_mm;
    out.measurable = true;
    return out;
}

inline LesionMeasurement oracle_product(const BinaryMask& lesion, std::uint32_t id,
                                        const RanoParams& params) {
    const auto regions = enumerate(lesion, params);
    const double dx = lesion.spacing.dx, dy = lesion.spacing.dy;
    const double tol = params.angle_tolerance_deg;

    struct Pick {
        double product;
        double major_len2;
        std::size_t z;
        const Seg* major;
        const Seg* perp;
    };
    std::optional<Pick> best;
    for (const auto& r : regions) {
        // Visiting longer segments first lets strictly-worse pairs be skipped;
        // the comparator below is total, so the visiting order is irrelevant.
        std::vector<const Seg*> segs;
        for (const auto& s : r.inscribed)
            if (meets_min_length(s.len, params.min_diameter_mm)) segs.push_back(&s);
        std::stable_sort(segs.begin(), segs.end(),
                         [](const Seg* a, const Seg* b) { return a->len2 > b->len2; });
        for (std::size_t i = 0; i < segs.size(); ++i) {
            if (best && segs[i]->len * segs[i]->len < best->product) break;
            for (std::size_t j = i + 1; j < segs.size(); ++j) {
                if (best && segs[i]->len * segs[j]->len < best->product) break;
                if (!perpendicular_within(segs[i]->di(), segs[i]->dj(), segs[j]->di(), segs[j]->dj(), dx,
                                          dy, tol))
                    continue;
                // The major is the longer segment; equal lengths go to the smaller key.
                const Seg* major = segs[i];
                const Seg* perp = segs[j];
                if (perp->len2 > major->len2 ||
                    (perp->len2 == major->len2 &&
                     std::tie(perp->key0, perp->key1) < std::tie(major->key0, major->key1)))
                    std::swap(major, perp);
                const Pick c{major->len * perp->len, major->len2, r.z, major, perp};
                bool better = !best;
                if (!better) {
                    if (c.product != best->product)
                        better = c.product > best->product;
                    else if (c.major_len2 != best->major_len2)
                        better = c.major_len2 > best->major_len2;
                    else
                        better = std::tie(c.z, c.major->key0, c.major->key1, c.perp->key0, c.perp->key1) <
                                 std::tie(best->z, best->major->key0, best->major->key1, best->perp->key0,
                                          best->perp->key1);
                }
                if (better) best = c;
            }
        }
    }
    LesionMeasurement out;
    out.component_id = id;
    out.slice_index = regions.empty() ? 0 : regions.front().z;
    if (!best) return out;
    out.slice_index = best->z;
    out.major = make_segment(best->major->px, dx, dy);
    out.perpendicular = make_segment(best->perp->px, dx, dy);
    out.product_mm2 = out.major->length_mm * out.perpendicular->length_mm;
    out.measurable = true;
    return out;
}

}  // namespace oracle_detail

/// Exhaustive reference implementation of rano(). Throws when any slice region
/// exceeds kOracleRegionLimit pixels.
inline RanoMeasurement rano_oracle(const BinaryMask& et, const RanoParams& params, RanoAlgorithm algorithm) {
    params.validate();
    const auto cc = connected_components(et, params.connectivity);
    std::vector<LesionMeasurement> lesions;
    for (std::uint32_t id = 1; id <= cc.component_count; ++id) {
        const auto lesion = component_mask(cc, id, et.spacing);
        lesions.push_back(algorithm == RanoAlgorithm::Diameters
                              ? oracle_detail::oracle_diameters(lesion, id, params)
                              : oracle_detail::oracle_product(lesion, id, params));
    }
    return finalize_rano(algorithm, std::move(lesions), params.max_lesions);
}

}  // namespace glioburden
