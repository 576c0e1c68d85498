#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "glioburden/error.hpp"

namespace glioburden {

/// Millimetres per voxel along x, y (in-plane) and z (slice axis).
struct Spacing {
    double dx = 1.0;
    double dy = 1.0;
    double dz = 1.0;

    double voxel_volume() const { return dx * dy * dz; }

    bool valid() const {
        auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
        return ok(dx) && ok(dy) && ok(dz);
    }

    bool operator==(const Spacing&) const = default;
};

struct Dims {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    std::size_t count() const { return nx * ny * nz; }
    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + nx * (y + ny * z);
    }

    bool operator==(const Dims&) const = default;
};

struct Voxel {
    std::size_t x = 0;
    std::size_t y = 0;
    std::size_t z = 0;

    bool operator==(const Voxel&) const = default;
    // Storage order: z, then y, then x.
    auto operator<=>(const Voxel& o) const {
        if (auto c = z <=> o.z; c != 0) return c;
        if (auto c = y <=> o.y; c != 0) return c;
        return x <=> o.x;
    }
};

enum class ClassName { ET, ED, Cavity };

inline constexpr std::array<ClassName, 3> kAllClasses = {ClassName::ET, ClassName::ED,
                                                         ClassName::Cavity};

inline std::string_view class_key(ClassName c) {
    switch (c) {
        case ClassName::ET: return "et";
        case ClassName::ED: return "ed";
        case ClassName::Cavity: return "cavity";
    }
    return "?";
}

inline ClassName parse_class(std::string_view name) {
    for (auto c : kAllClasses)
        if (class_key(c) == name) return c;
    throw validation_error("unknown class name '" + std::string(name) + "'");
}

/// Class -> stored label value. Background is always 0.
struct LabelSemantics {
    std::uint8_t et = 1;
    std::uint8_t ed = 2;
    std::uint8_t cavity = 3;

    std::uint8_t label_of(ClassName c) const {
        switch (c) {
            case ClassName::ET: return et;
            case ClassName::ED: return ed;
            case ClassName::Cavity: return cavity;
        }
        return 0;
    }

    bool knows(std::uint8_t label) const {
        return label == 0 || label == et || label == ed || label == cavity;
    }

    bool valid() const {
        return et != 0 && ed != 0 && cavity != 0 && et != ed && et != cavity && ed != cavity;
    }

    bool operator==(const LabelSemantics&) const = default;
};

struct LabelVolume {
    Dims dims;
    Spacing spacing;
    std::vector<std::uint8_t> labels;
    LabelSemantics semantics;

    LabelVolume() = default;
    LabelVolume(Dims d, Spacing s, LabelSemantics sem = {})
        : dims(d), spacing(s), labels(d.count(), 0), semantics(sem) {}

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t z) {
        return labels[dims.index(x, y, z)];
    }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const {
        return labels[dims.index(x, y, z)];
    }

    bool operator==(const LabelVolume&) const = default;
};

/// Checks the LabelVolume invariants; throws a validation error otherwise.
inline void validate(const LabelVolume& v) {
    if (!v.spacing.valid()) throw validation_error("spacing must be positive and finite");
    if (!v.semantics.valid()) throw validation_error("label semantics must be distinct and non-zero");
    if (v.labels.size() != v.dims.count())
        throw validation_error("label array length does not match dims");
    for (auto l : v.labels)
        if (!v.semantics.knows(l))
            throw validation_error("label value " + std::to_string(l) + " not in label semantics");
}

/// One class's voxel set on a LabelVolume grid. One byte per voxel (0/1).
struct BinaryMask {
    Dims dims;
    Spacing spacing;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(Dims d, Spacing s) : dims(d), spacing(s), bits(d.count(), 0) {}

    bool test(std::size_t x, std::size_t y, std::size_t z) const {
        return bits[dims.index(x, y, z)] != 0;
    }
    void set(std::size_t x, std::size_t y, std::size_t z, bool on = true) {
        bits[dims.index(x, y, z)] = on ? 1 : 0;
    }
    std::size_t count() const {
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    }
    bool empty() const { return std::find(bits.begin(), bits.end(), 1) == bits.end(); }

    bool operator==(const BinaryMask&) const = default;
};

/// In-plane mask with in-plane spacing (dx, dy).
struct Mask2D {
    std::size_t nx = 0;
    std::size_t ny = 0;
    double dx = 1.0;
    double dy = 1.0;
    std::vector<std::uint8_t> bits;

    Mask2D() = default;
    Mask2D(std::size_t w, std::size_t h, double sx, double sy)
        : nx(w), ny(h), dx(sx), dy(sy), bits(w * h, 0) {}

    bool test(std::size_t x, std::size_t y) const { return bits[x + nx * y] != 0; }
    void set(std::size_t x, std::size_t y, bool on = true) { bits[x + nx * y] = on ? 1 : 0; }
    bool in_bounds(long long x, long long y) const {
        return x >= 0 && y >= 0 && x < static_cast<long long>(nx) && y < static_cast<long long>(ny);
    }
    std::size_t count() const {
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    }

    bool operator==(const Mask2D&) const = default;
};

inline BinaryMask class_mask(const LabelVolume& v, ClassName c) {
    BinaryMask m(v.dims, v.spacing);
    const auto label = v.semantics.label_of(c);
    for (std::size_t i = 0; i < v.labels.size(); ++i) m.bits[i] = v.labels[i] == label ? 1 : 0;
    return m;
}

inline BinaryMask class_mask(const LabelVolume& v, std::string_view class_name) {
    return class_mask(v, parse_class(class_name));
}

inline double volume_mm3(const BinaryMask& m) {
    return static_cast<double>(m.count()) * m.spacing.voxel_volume();
}

inline Mask2D extract_slice(const BinaryMask& m, std::size_t k) {
    if (k >= m.dims.nz)
        throw validation_error("slice index " + std::to_string(k) + " out of range");
    Mask2D s(m.dims.nx, m.dims.ny, m.spacing.dx, m.spacing.dy);
    const std::size_t plane = m.dims.nx * m.dims.ny;
    std::copy_n(m.bits.begin() + static_cast<std::ptrdiff_t>(k * plane), plane, s.bits.begin());
    return s;
}

/// Per-class probabilities in [0, 1] (softmax outputs), one channel per class
/// in kAllClasses order.
struct ProbabilityVolume {
    Dims dims;
    Spacing spacing;
    std::array<std::vector<float>, 3> channels;

    const std::vector<float>& channel(ClassName c) const {
        return channels[static_cast<std::size_t>(c)];
    }
    std::vector<float>& channel(ClassName c) { return channels[static_cast<std::size_t>(c)]; }
};

// ---------------------------------------------------------------------------
// Connected components

struct Offset3 {
    int dx, dy, dz;
};

/// Neighbour offsets for 6-, 18- or 26-connectivity.
inline std::vector<Offset3> neighbourhood(int connectivity) {
    if (connectivity != 6 && connectivity != 18 && connectivity != 26)
        throw validation_error("connectivity must be 6, 18 or 26");
    std::vector<Offset3> out;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nonzero = (dx != 0) + (dy != 0) + (dz != 0);
                if (nonzero == 0) continue;
                if (connectivity == 6 && nonzero > 1) continue;
                if (connectivity == 18 && nonzero > 2) continue;
                out.push_back({dx, dy, dz});
            }
    return out;
}

struct ComponentLabeling {
    Dims dims;
    std::vector<std::uint32_t> ids;  // 0 = none
    std::uint32_t component_count = 0;
    int connectivity = 26;

    bool operator==(const ComponentLabeling&) const = default;
};

/// Flood fill in storage order, so component ids follow each component's
/// smallest voxel in (z, y, x) order.
inline ComponentLabeling connected_components(const BinaryMask& m, int connectivity = 26) {
    const auto offsets = neighbourhood(connectivity);
    ComponentLabeling out{m.dims, std::vector<std::uint32_t>(m.dims.count(), 0), 0, connectivity};
    const auto nx = static_cast<long long>(m.dims.nx);
    const auto ny = static_cast<long long>(m.dims.ny);
    const auto nz = static_cast<long long>(m.dims.nz);
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < m.bits.size(); ++start) {
        if (!m.bits[start] || out.ids[start]) continue;
        const auto id = ++out.component_count;
        out.ids[start] = id;
        stack.push_back(start);
        while (!stack.empty()) {
            const auto cur = stack.back();
            stack.pop_back();
            const auto cx = static_cast<long long>(cur % m.dims.nx);
            const auto cy = static_cast<long long>((cur / m.dims.nx) % m.dims.ny);
            const auto cz = static_cast<long long>(cur / (m.dims.nx * m.dims.ny));
            for (const auto& o : offsets) {
                const auto x = cx + o.dx, y = cy + o.dy, z = cz + o.dz;
                if (x < 0 || y < 0 || z < 0 || x >= nx || y >= ny || z >= nz) continue;
                const auto n = static_cast<std::size_t>(x + nx * (y + ny * z));
                if (m.bits[n] && !out.ids[n]) {
                    out.ids[n] = id;
                    stack.push_back(n);
                }
            }
        }
    }
    return out;
}

/// Mask holding only the voxels of component `id`.
inline BinaryMask component_mask(const ComponentLabeling& cc, std::uint32_t id, Spacing spacing) {
    BinaryMask m(cc.dims, spacing);
    for (std::size_t i = 0; i < cc.ids.size(); ++i) m.bits[i] = cc.ids[i] == id ? 1 : 0;
    return m;
}

/// 2D labeling with 4- or 8-connectivity; ids follow storage order (y, then x).
struct Labeling2D {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<std::uint32_t> ids;
    std::uint32_t component_count = 0;
};

inline Labeling2D connected_components_2d(const Mask2D& m, int connectivity = 8) {
    if (connectivity != 4 && connectivity != 8)
        throw validation_error("in-plane connectivity must be 4 or 8");
    Labeling2D out{m.nx, m.ny, std::vector<std::uint32_t>(m.bits.size(), 0), 0};
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < m.bits.size(); ++start) {
        if (!m.bits[start] || out.ids[start]) continue;
        const auto id = ++out.component_count;
        out.ids[start] = id;
        stack.push_back(start);
        while (!stack.empty()) {
            const auto cur = stack.back();
            stack.pop_back();
            const auto cx = static_cast<long long>(cur % m.nx);
            const auto cy = static_cast<long long>(cur / m.nx);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (connectivity == 4 && dx != 0 && dy != 0) continue;
                    const auto x = cx + dx, y = cy + dy;
                    if (!m.in_bounds(x, y)) continue;
                    const auto n = static_cast<std::size_t>(x) + m.nx * static_cast<std::size_t>(y);
                    if (m.bits[n] && !out.ids[n]) {
                        out.ids[n] = id;
                        stack.push_back(n);
                    }
                }
        }
    }
    return out;
}

/// Set voxels with at least one unset 6-neighbour or lying on the array border.
inline std::vector<Voxel> boundary_voxels(const BinaryMask& m) {
    std::vector<Voxel> out;
    const auto& d = m.dims;
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) {
                if (!m.test(x, y, z)) continue;
                const bool border = x == 0 || y == 0 || z == 0 || x + 1 == d.nx ||
                                    y + 1 == d.ny || z + 1 == d.nz;
                if (border || !m.test(x - 1, y, z) || !m.test(x + 1, y, z) ||
                    !m.test(x, y - 1, z) || !m.test(x, y + 1, z) || !m.test(x, y, z - 1) ||
                    !m.test(x, y, z + 1))
                    out.push_back({x, y, z});
            }
    return out;
}

}  // namespace glioburden
