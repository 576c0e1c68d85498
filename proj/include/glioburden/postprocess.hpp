#pragma once

// Enhancing-tumour false-positive pruning: ET that is not adjacent to edema is
// relabelled to background.

#include <string>
#include <string_view>
#include <vector>

#include "glioburden/error.hpp"
#include "glioburden/volume.hpp"

namespace glioburden {

enum class PruneMode { Component, Voxel };

inline PruneMode parse_prune_mode(std::string_view s) {
    if (s == "component") return PruneMode::Component;
    if (s == "voxel") return PruneMode::Voxel;
    throw validation_error("unknown postprocess mode '" + std::string(s) + "'");
}

inline std::string_view prune_mode_name(PruneMode m) {
    return m == PruneMode::Component ? "component" : "voxel";
}

namespace detail {

/// Marks voxels that have at least one `label` neighbour under `offsets`.
inline std::vector<std::uint8_t> touches_label(const LabelVolume& v, std::uint8_t label,
                                               const std::vector<Offset3>& offsets) {
    const auto& d = v.dims;
    std::vector<std::uint8_t> out(d.count(), 0);
    const auto nx = static_cast<long long>(d.nx), ny = static_cast<long long>(d.ny),
               nz = static_cast<long long>(d.nz);
    for (long long z = 0; z < nz; ++z)
        for (long long y = 0; y < ny; ++y)
            for (long long x = 0; x < nx; ++x) {
                for (const auto& o : offsets) {
                    const auto a = x + o.dx, b = y + o.dy, c = z + o.dz;
                    if (a < 0 || b < 0 || c < 0 || a >= nx || b >= ny || c >= nz) continue;
                    if (v.labels[static_cast<std::size_t>(a + nx * (b + ny * c))] == label) {
                        out[static_cast<std::size_t>(x + nx * (y + ny * z))] = 1;
                        break;
                    }
                }
            }
    return out;
}

}  // namespace detail

/// Removes every ET component (at `connectivity`) with no voxel adjacent to
/// ED; in Voxel mode, removes each ET voxel with no ED neighbour instead.
inline LabelVolume prune_unsupported_et(const LabelVolume& v, int connectivity = 26,
                                        PruneMode mode = PruneMode::Component) {
    const auto offsets = neighbourhood(connectivity);
    const auto et = v.semantics.et;
    const auto near_ed = detail::touches_label(v, v.semantics.ed, offsets);
    LabelVolume out = v;

    if (mode == PruneMode::Voxel) {
        for (std::size_t i = 0; i < out.labels.size(); ++i)
            if (out.labels[i] == et && !near_ed[i]) out.labels[i] = 0;
        return out;
    }

    const auto cc = connected_components(class_mask(v, ClassName::ET), connectivity);
    std::vector<std::uint8_t> supported(cc.component_count + 1, 0);
    for (std::size_t i = 0; i < cc.ids.size(); ++i)
        if (cc.ids[i] && near_ed[i]) supported[cc.ids[i]] = 1;
    for (std::size_t i = 0; i < out.labels.size(); ++i)
        if (cc.ids[i] && !supported[cc.ids[i]]) out.labels[i] = 0;
    return out;
}

}  // namespace glioburden
