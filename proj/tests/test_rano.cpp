#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "glioburden/rano.hpp"
#include "glioburden/rano_oracle.hpp"
#include "phantoms.hpp"

using namespace glioburden;
using namespace glioburden::testing;

namespace {

RanoParams params_with_min(double min_mm) {
    RanoParams p;
    p.min_diameter_mm = min_mm;
    return p;
}

// Dense reference for the inscription predicate: walk the segment at a tiny
// step and look at the nearest pixel, reporting false on any unset one.
bool dense_inscribed(const Mask2D& m, double x0, double y0, double x1, double y1) {
    const int n = 20000;
    for (int k = 0; k <= n; ++k) {
        const double t = static_cast<double>(k) / n;
        const double x = x0 + t * (x1 - x0), y = y0 + t * (y1 - y0);
        const auto px = static_cast<long long>(std::floor(x + 0.5));
        const auto py = static_cast<long long>(std::floor(y + 0.5));
        if (!m.in_bounds(px, py) || !m.test(static_cast<std::size_t>(px), static_cast<std::size_t>(py)))
            return false;
    }
    return true;
}

}  // namespace

TEST(Inscription, DegenerateSegmentOnSetPixel) {
    Mask2D m(5, 5, 1.0, 1.0);
    m.set(2, 3);
    EXPECT_TRUE(is_inscribed(PixelSegment{2, 3, 2, 3}, m, 0.25));
    EXPECT_FALSE(is_inscribed(PixelSegment{1, 1, 1, 1}, m, 0.25));
}

TEST(Inscription, DiagonalOfSolidRectangle) {
    Mask2D m(41, 11, 1.0, 1.0);
    std::fill(m.bits.begin(), m.bits.end(), 1);
    EXPECT_TRUE(is_inscribed(PixelSegment{0, 0, 40, 10}, m, 0.25));
    EXPECT_TRUE(is_inscribed(PixelSegment{0, 10, 40, 0}, m, 0.25));
}

TEST(Inscription, ChordAcrossNotchOfCShape) {
    // C shape: 21x21 ring of width 4 with the right side opened.
    Mask2D m(21, 21, 1.0, 1.0);
    for (std::size_t y = 0; y < 21; ++y)
        for (std::size_t x = 0; x < 21; ++x) {
            const bool band = x < 4 || y < 4 || y > 16;
            m.set(x, y, band);
        }
    // Across the opening, top arm to bottom arm at x = 15.
    const PixelSegment notch{15, 2, 15, 18};
    EXPECT_FALSE(dense_inscribed(m, 15, 2, 15, 18));
    EXPECT_FALSE(is_inscribed(notch, m, 0.25));
    // Along the back of the C.
    EXPECT_TRUE(dense_inscribed(m, 1, 0, 1, 20));
    EXPECT_TRUE(is_inscribed(PixelSegment{1, 0, 1, 20}, m, 0.25));
}

TEST(Inscription, AgreesWithDenseSamplingAwayFromPixelBorders) {
    std::mt19937_64 rng(11);
    const auto vol = random_blobs(rng, 24, 24, 1, 3);
    const auto slice = extract_slice(vol, 0);
    std::uniform_int_distribution<long long> P(0, 23);
    int checked = 0;
    for (int trial = 0; trial < 4000; ++trial) {
        const PixelSegment s{P(rng), P(rng), P(rng), P(rng)};
        if (!slice.test(s.x0, s.y0) || !slice.test(s.x1, s.y1)) continue;
        // The dense walk uses floor(x + 0.5) at tie points, so compare only on
        // segments whose samples never land exactly between pixel centres:
        // both coordinates differ by an odd/even pattern that avoids .5 ties.
        const long long di = s.x1 - s.x0, dj = s.y1 - s.y0;
        if (di == 0 || dj == 0 || std::abs(di) == std::abs(dj)) continue;
        const bool dense = dense_inscribed(slice, s.x0, s.y0, s.x1, s.y1);
        // Dense sampling is at least as strict as quarter-pixel sampling.
        if (dense) EXPECT_TRUE(is_inscribed(s, slice, 0.25));
        ++checked;
    }
    EXPECT_GT(checked, 50);
}

TEST(Inscription, SymmetricUnderReversalAndMirroring) {
    std::mt19937_64 rng(5);
    const auto vol = random_blobs(rng, 20, 20, 1, 2);
    const auto s = extract_slice(vol, 0);
    Mask2D mirror(s.nx, s.ny, s.dx, s.dy);
    for (std::size_t y = 0; y < s.ny; ++y)
        for (std::size_t x = 0; x < s.nx; ++x) mirror.set(s.nx - 1 - x, y, s.test(x, y));
    const long long w = static_cast<long long>(s.nx) - 1;
    for (long long a = 0; a < 400; ++a)
        for (long long b = 0; b < 400; b += 7) {
            const PixelSegment seg{a % 20, a / 20, b % 20, b / 20};
            const bool fwd = is_inscribed(seg, s, 0.25);
            EXPECT_EQ(fwd, is_inscribed(PixelSegment{seg.x1, seg.y1, seg.x0, seg.y0}, s, 0.25));
            EXPECT_EQ(fwd, is_inscribed(PixelSegment{w - seg.x0, seg.y0, w - seg.x1, seg.y1}, mirror, 0.25));
        }
}

TEST(Perpendicular, InclusiveToleranceBoundary) {
    // Horizontal vs direction (1, k) in pixels with dy chosen so the angle is 85 deg.
    const double dy85 = std::tan(85.0 * std::numbers::pi / 180.0) / 10.0;
    const double dy849 = std::tan(84.9 * std::numbers::pi / 180.0) / 10.0;
    EXPECT_TRUE(perpendicular_within(10, 0, 1, 10, 1.0, dy85, 5.0));
    EXPECT_FALSE(perpendicular_within(10, 0, 1, 10, 1.0, dy849, 5.0));
    EXPECT_TRUE(perpendicular_within(3, 0, 0, 7, 1.0, 1.0, 5.0));
    EXPECT_FALSE(perpendicular_within(3, 0, 3, 0, 1.0, 1.0, 5.0));
}

TEST(MeasureLesion, SingleVoxelIsUnmeasurable) {
    auto m = empty_mask(5, 5, 3);
    m.set(2, 2, 1);
    for (auto algo : {RanoAlgorithm::Diameters, RanoAlgorithm::Product}) {
        const auto l = algo == RanoAlgorithm::Diameters ? measure_lesion_diameters(m, {})
                                                         : measure_lesion_product(m, {});
        EXPECT_FALSE(l.measurable);
        EXPECT_EQ(l.product_mm2, 0.0);
        EXPECT_FALSE(l.major.has_value());
        EXPECT_EQ(l.slice_index, 1u);
    }
}

TEST(MeasureLesion, RectangleMatchesOracle) {
    auto m = empty_mask(45, 15, 1);
    paint_box(m, 2, 2, 0, 41, 11);
    const RanoParams p;
    const auto fast = rano(m, p, RanoAlgorithm::Diameters);
    const auto slow = rano_oracle(m, p, RanoAlgorithm::Diameters);
    ASSERT_EQ(fast, slow);
    ASSERT_EQ(fast.lesions.size(), 1u);
    const auto& l = fast.lesions[0];
    ASSERT_TRUE(l.measurable);
    // Major is a raster diagonal of the 41x11 rectangle.
    EXPECT_DOUBLE_EQ(l.major->length_mm, std::sqrt(40.0 * 40.0 + 10.0 * 10.0));
    // The perpendicular spans the 10-pixel height at 71..81 deg from the x axis.
    EXPECT_GE(l.perpendicular->length_mm, 10.0);
    EXPECT_LE(l.perpendicular->length_mm, 10.0 / std::sin(71.0 * std::numbers::pi / 180.0));
}

TEST(MeasureLesion, SquareDiagonalsArePerpendicularPair) {
    auto m = empty_mask(25, 25, 1);
    paint_box(m, 2, 2, 0, 21, 21);
    const RanoParams p;
    const auto prod = rano(m, p, RanoAlgorithm::Product);
    ASSERT_EQ(prod, rano_oracle(m, p, RanoAlgorithm::Product));
    ASSERT_TRUE(prod.lesions[0].measurable);
    const double diag = std::sqrt(800.0);
    EXPECT_DOUBLE_EQ(prod.lesions[0].major->length_mm, diag);
    EXPECT_DOUBLE_EQ(prod.lesions[0].perpendicular->length_mm, diag);
    EXPECT_DOUBLE_EQ(prod.sum_product_mm2, diag * diag);
}

TEST(MeasureLesion, DiskRadius10) {
    auto m = empty_mask(27, 27, 1);
    paint_disk(m, 13, 13, 0, 10.0);
    const RanoParams p;
    for (auto algo : {RanoAlgorithm::Diameters, RanoAlgorithm::Product}) {
        const auto fast = rano(m, p, algo);
        const auto slow = rano_oracle(m, p, algo);
        ASSERT_EQ(fast, slow);
        EXPECT_NEAR(fast.sum_product_mm2, 400.0, 20.0);
        EXPECT_NEAR(fast.lesions[0].major->length_mm, 20.0, 0.5);
    }
}

TEST(Rano, EmptyMask) {
    const auto m = empty_mask(8, 8, 8);
    for (auto algo : {RanoAlgorithm::Diameters, RanoAlgorithm::Product}) {
        const auto r = rano(m, {}, algo);
        EXPECT_TRUE(r.lesions.empty());
        EXPECT_EQ(r.sum_product_mm2, 0.0);
    }
}

TEST(Rano, OracleEquivalenceOnRandomBlobs) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        const Spacing sp = trial % 3 == 0 ? Spacing{0.75, 1.25, 2.0} : Spacing{1.0, 1.0, 1.0};
        const auto m = random_blobs(rng, 24, 24, 3, 1 + trial % 3, sp);
        const auto p = params_with_min(trial % 2 ? 3.0 : 10.0);
        for (auto algo : {RanoAlgorithm::Diameters, RanoAlgorithm::Product})
            ASSERT_EQ(rano(m, p, algo), rano_oracle(m, p, algo)) << "trial " << trial;
    }
}
