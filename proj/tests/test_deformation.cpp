#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "partdet/common.hpp"
#include "partdet/deformation.hpp"

using namespace partdet;

namespace {

// Exhaustive reference: evaluate m + c1 d1 + ... + c4 d4 cell by cell and
// track the row-major-first maximum.
struct BruteResult {
    double value;
    GridLoc loc;
};

BruteResult brute_force_score(const Map2<double>& m, const std::array<double, 4>& c, int ax, int ay) {
    BruteResult best{-1e300, {0, 0}};
    bool first = true;
    for (int x = 0; x < m.h; ++x)
        for (int y = 0; y < m.w; ++y) {
            double dx = x - ax, dy = y - ay;
            double v = m.at(x, y) + c[0] * (dx * dx) + c[1] * (dy * dy) + c[2] * dx + c[3] * dy;
            if (first || v > best.value) {
                best = {v, {x, y}};
                first = false;
            }
        }
    return best;
}

Map2<double> random_map(Rng& rng, int h, int w, double lo = -2.0, double hi = 2.0) {
    Map2<double> m(h, w);
    for (auto& v : m.v) v = rng.uniform(lo, hi);
    return m;
}

}  // namespace

TEST(QuadraticBasis, VanishesAtAnchorAndSquares) {
    DeformationBasis<double> b = quadratic_basis<double>(3, 3, 1, 1);
    for (int n = 0; n < 4; ++n) EXPECT_DOUBLE_EQ(b.value(n, 1, 1), 0.0);
    // d3 along a row is the row offset
    EXPECT_DOUBLE_EQ(b.d[2].at(0, 1), -1.0);
    EXPECT_DOUBLE_EQ(b.d[2].at(1, 1), 0.0);
    EXPECT_DOUBLE_EQ(b.d[2].at(2, 1), 1.0);
    // d1 = d3^2, d2 = d4^2 pointwise
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 3; ++y) {
            ASSERT_DOUBLE_EQ(b.d[0].at(x, y), b.d[2].at(x, y) * b.d[2].at(x, y));
            ASSERT_DOUBLE_EQ(b.d[1].at(x, y), b.d[3].at(x, y) * b.d[3].at(x, y));
        }
}

TEST(QuadraticBasis, RejectsAnchorOutsideMap) {
    EXPECT_THROW(quadratic_basis<double>(3, 3, 3, 0), std::invalid_argument);
    EXPECT_THROW(quadratic_basis<double>(3, 3, 0, -1), std::invalid_argument);
}

TEST(SummedMap, ZeroCoefficientsLeaveMapUnchanged) {
    Rng rng(5);
    Map2<double> m = random_map(rng, 4, 3);
    DeformationBasis<double> b = quadratic_basis<double>(4, 3, 2, 1);
    Map2<double> out = summed_map(m, {0.0, 0.0, 0.0, 0.0}, b);
    EXPECT_EQ(out.v, m.v);
}

TEST(SummedMap, HandComputedExample) {
    Map2<double> m(2, 2);
    m.at(0, 0) = 1;
    m.at(0, 1) = 2;
    m.at(1, 0) = 3;
    m.at(1, 1) = 0;
    DeformationBasis<double> b = quadratic_basis<double>(2, 2, 0, 0);
    Map2<double> out = summed_map(m, {-1.0, -1.0, 0.0, 0.0}, b);
    EXPECT_DOUBLE_EQ(out.at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.at(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(out.at(1, 0), 2.0);
    EXPECT_DOUBLE_EQ(out.at(1, 1), -2.0);
    PartScore<double> s = part_score(out);
    EXPECT_DOUBLE_EQ(s.value, 2.0);
    EXPECT_EQ(s.loc, (GridLoc{1, 0}));
}

// A huge quadratic penalty pins the part to its anchor.
TEST(SummedMap, InfinitePenaltyPinsAnchor) {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        int h = rng.uniform_int(2, 8), w = rng.uniform_int(2, 5);
        int ax = rng.uniform_int(0, h - 1), ay = rng.uniform_int(0, w - 1);
        Map2<double> m = random_map(rng, h, w, -100.0, 100.0);
        DeformationBasis<double> b = quadratic_basis<double>(h, w, ax, ay);
        Map2<double> out = summed_map(m, {-1e6, -1e6, 0.0, 0.0}, b);
        PartScore<double> s = part_score(out);
        ASSERT_EQ(s.loc, (GridLoc{ax, ay}));
    }
}

TEST(SummedMap, RejectsDimensionMismatch) {
    Map2<double> m(3, 3);
    DeformationBasis<double> b = quadratic_basis<double>(4, 3, 0, 0);
    EXPECT_THROW(summed_map(m, {0.0, 0.0, 0.0, 0.0}, b), std::invalid_argument);
}

TEST(PartScore, TieBreaksRowMajorFirst) {
    Map2<double> m(2, 3, 4.5);
    PartScore<double> s = part_score(m);
    EXPECT_DOUBLE_EQ(s.value, 4.5);
    EXPECT_EQ(s.loc, (GridLoc{0, 0}));
    Map2<double> one(1, 1);
    one.at(0, 0) = -3.25;
    PartScore<double> s1 = part_score(one);
    EXPECT_DOUBLE_EQ(s1.value, -3.25);
    EXPECT_EQ(s1.loc, (GridLoc{0, 0}));
}

// 1000 random instances: score and location must match exhaustive
// enumeration exactly.
TEST(Deformation, BruteForceEquivalence) {
    Rng rng(1234);
    for (int trial = 0; trial < 1000; ++trial) {
        int h = rng.uniform_int(1, 19), w = rng.uniform_int(1, 5);
        int ax = rng.uniform_int(0, h - 1), ay = rng.uniform_int(0, w - 1);
        std::array<double, 4> c = {rng.uniform(-2, 0), rng.uniform(-2, 0), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Map2<double> m = random_map(rng, h, w);
        DeformationBasis<double> basis = quadratic_basis<double>(h, w, ax, ay);
        Map2<double> b = summed_map(m, c, basis);
        PartScore<double> got = part_score(b);
        BruteResult want = brute_force_score(m, c, ax, ay);
        ASSERT_EQ(got.value, want.value) << "trial " << trial;
        ASSERT_EQ(got.loc, want.loc) << "trial " << trial;
    }
}

TEST(Deformation, ConstantShiftMovesScoreNotLocation) {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        int h = rng.uniform_int(2, 10), w = rng.uniform_int(2, 5);
        Map2<double> m = random_map(rng, h, w);
        DeformationBasis<double> basis = quadratic_basis<double>(h, w, h / 2, w / 2);
        std::array<double, 4> c = {-0.3, -0.2, 0.1, -0.1};
        PartScore<double> base = part_score(summed_map(m, c, basis));
        if (base.value - base.runner_up < 1e-9) continue;  // tie: location may flip
        double k = rng.uniform(-5, 5);
        Map2<double> shifted = m;
        for (auto& v : shifted.v) v += k;
        PartScore<double> moved = part_score(summed_map(shifted, c, basis));
        ASSERT_NEAR(moved.value, base.value + k, 1e-12);
        ASSERT_EQ(moved.loc, base.loc);
    }
}

// With pure curvature penalties the score is sandwiched between the map's
// anchor value and its global maximum.
TEST(Deformation, PenaltyMonotonicity) {
    Rng rng(88);
    for (int trial = 0; trial < 100; ++trial) {
        int h = rng.uniform_int(1, 12), w = rng.uniform_int(1, 5);
        int ax = rng.uniform_int(0, h - 1), ay = rng.uniform_int(0, w - 1);
        Map2<double> m = random_map(rng, h, w);
        std::array<double, 4> c = {rng.uniform(-3, 0), rng.uniform(-3, 0), 0.0, 0.0};
        DeformationBasis<double> basis = quadratic_basis<double>(h, w, ax, ay);
        PartScore<double> s = part_score(summed_map(m, c, basis));
        double map_max = *std::max_element(m.v.begin(), m.v.end());
        ASSERT_LE(s.value, map_max + 1e-12);
        ASSERT_GE(s.value, m.at(ax, ay) - 1e-12);
    }
}

TEST(DeformationBackward, AnchorLocationZeroesCoefficients) {
    DeformationBasis<double> basis = quadratic_basis<double>(5, 3, 2, 1);
    Map2<double> d_m(5, 3);
    std::array<double, 4> d_c{};
    deformation_backward(1.0, GridLoc{2, 1}, basis, d_m, d_c);
    for (double v : d_c) EXPECT_DOUBLE_EQ(v, 0.0);
    EXPECT_DOUBLE_EQ(d_m.at(2, 1), 1.0);
    double total = 0.0;
    for (double v : d_m.v) total += std::abs(v);
    EXPECT_DOUBLE_EQ(total, 1.0);
}

TEST(DeformationBackward, ZeroUpstreamGivesZeroGradients) {
    DeformationBasis<double> basis = quadratic_basis<double>(4, 2, 1, 0);
    Map2<double> d_m(4, 2);
    std::array<double, 4> d_c{};
    deformation_backward(0.0, GridLoc{3, 1}, basis, d_m, d_c);
    for (double v : d_c) EXPECT_DOUBLE_EQ(v, 0.0);
    for (double v : d_m.v) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(DeformationBackward, RejectsLocationOutsideMap) {
    DeformationBasis<double> basis = quadratic_basis<double>(4, 2, 1, 0);
    Map2<double> d_m(4, 2);
    std::array<double, 4> d_c{};
    EXPECT_THROW(deformation_backward(1.0, GridLoc{4, 0}, basis, d_m, d_c), InternalError);
}

// Coefficient gradients against central finite differences of the score.
TEST(DeformationBackward, MatchesFiniteDifferences) {
    Rng rng(99);
    const double eps = 1e-6;
    int checked = 0;
    for (int trial = 0; trial < 200 && checked < 100; ++trial) {
        int h = rng.uniform_int(2, 12), w = rng.uniform_int(2, 5);
        int ax = rng.uniform_int(0, h - 1), ay = rng.uniform_int(0, w - 1);
        Map2<double> m = random_map(rng, h, w);
        std::array<double, 4> c = {rng.uniform(-1, 0), rng.uniform(-1, 0), rng.uniform(-0.5, 0.5),
                                   rng.uniform(-0.5, 0.5)};
        DeformationBasis<double> basis = quadratic_basis<double>(h, w, ax, ay);
        PartScore<double> s = part_score(summed_map(m, c, basis));
        if (s.value - s.runner_up < 10 * eps) continue;  // near tie, gradient is one-sided

        Map2<double> d_m(h, w);
        std::array<double, 4> d_c{};
        deformation_backward(1.0, s.loc, basis, d_m, d_c);
        for (int n = 0; n < 4; ++n) {
            std::array<double, 4> cp = c, cm = c;
            cp[static_cast<std::size_t>(n)] += eps;
            cm[static_cast<std::size_t>(n)] -= eps;
            double up = part_score(summed_map(m, cp, basis)).value;
            double down = part_score(summed_map(m, cm, basis)).value;
            double fd = (up - down) / (2 * eps);
            double denom = std::max({1.0, std::abs(fd), std::abs(d_c[static_cast<std::size_t>(n)])});
            ASSERT_LT(std::abs(fd - d_c[static_cast<std::size_t>(n)]) / denom, 1e-6);
        }
        ++checked;
    }
    ASSERT_GE(checked, 50);
}

TEST(ExpandQuadratic, CenteredFormHasZeroConstant) {
    Map2<double> m(5, 5, 1.0);
    QuadraticExpansion<double> e = expand_quadratic({-0.5, -0.25, 0.0, 0.0}, 2, 2, m);
    ASSERT_TRUE(e.c5.has_value());
    EXPECT_DOUBLE_EQ(*e.c5, 0.0);
    ASSERT_TRUE(e.center.has_value());
    EXPECT_DOUBLE_EQ(e.center->first, 2.0);
    EXPECT_DOUBLE_EQ(e.center->second, 2.0);
}

// The linear basis expansion plus the constant must reproduce the
// completed-square form at every cell.
TEST(ExpandQuadratic, BothClosedFormsAgree) {
    Rng rng(111);
    for (int trial = 0; trial < 200; ++trial) {
        std::array<double, 4> c = {rng.uniform(-2, -0.1), rng.uniform(-2, -0.1), rng.uniform(-1, 1),
                                   rng.uniform(-1, 1)};
        int ax = rng.uniform_int(0, 4), ay = rng.uniform_int(0, 4);
        Map2<double> m = random_map(rng, 5, 5);
        QuadraticExpansion<double> e = expand_quadratic(c, ax, ay, m);
        ASSERT_FALSE(e.degenerate);
        for (int x = 0; x < 5; ++x)
            for (int y = 0; y < 5; ++y) {
                double sq = m.at(x, y) + c[0] * std::pow(x - ax + c[2] / (2 * c[0]), 2) +
                            c[1] * std::pow(y - ay + c[3] / (2 * c[1]), 2);
                ASSERT_NEAR(e.b.at(x, y), sq, 1e-9);
            }
    }
}

TEST(ExpandQuadratic, DegenerateCurvatureFallsBackToLinearForm) {
    Map2<double> m(3, 3, 0.0);
    m.at(0, 2) = 1.0;
    QuadraticExpansion<double> e = expand_quadratic({0.0, 0.0, 0.5, -0.5}, 1, 1, m);
    EXPECT_TRUE(e.degenerate);
    EXPECT_FALSE(e.c5.has_value());
    EXPECT_FALSE(e.center.has_value());
    // B = M + c3 d3 + c4 d4
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 3; ++y)
            ASSERT_DOUBLE_EQ(e.b.at(x, y), m.at(x, y) + 0.5 * (x - 1) - 0.5 * (y - 1));
}

// The predefined-map deformation example: parts move freely inside a set X
// and are forbidden outside. Adding such a map and max-pooling must equal a
// plain max over X.
TEST(Deformation, PredefinedMapReproducesWindowedMaxPool) {
    Rng rng(131);
    for (int trial = 0; trial < 50; ++trial) {
        int h = rng.uniform_int(2, 10), w = rng.uniform_int(2, 5);
        Map2<double> m = random_map(rng, h, w);
        int x0 = rng.uniform_int(0, h - 1), x1 = rng.uniform_int(x0, h - 1);
        int y0 = rng.uniform_int(0, w - 1), y1 = rng.uniform_int(y0, w - 1);
        Map2<double> d(h, w, -1e12);
        double want = -1e300;
        for (int x = x0; x <= x1; ++x)
            for (int y = y0; y <= y1; ++y) {
                d.at(x, y) = 0.0;
                want = std::max(want, m.at(x, y));
            }
        Map2<double> b(h, w);
        for (int i = 0; i < b.size(); ++i)
            b.v[static_cast<std::size_t>(i)] = m.v[static_cast<std::size_t>(i)] + d.v[static_cast<std::size_t>(i)];
        ASSERT_DOUBLE_EQ(part_score(b).value, want);
    }
}

TEST(PartLayout, DefaultGeometry) {
    std::vector<PartSpec> parts = default_part_layout();
    validate_part_layout(parts);
    ASSERT_EQ(parts.size(), 8u);
    bool levels[3] = {false, false, false};
    int largest_h = 0, largest_w = 0;
    for (const PartSpec& p : parts) {
        levels[p.level - 1] = true;
        if (p.f_h * p.f_w > largest_h * largest_w) {
            largest_h = p.f_h;
            largest_w = p.f_w;
        }
        if (p.mirror_of != 0) {
            const PartSpec& q = parts[static_cast<std::size_t>(p.mirror_of - 1)];
            ASSERT_EQ(q.f_h, p.f_h);
            ASSERT_EQ(q.f_w, p.f_w);
        }
    }
    EXPECT_TRUE(levels[0] && levels[1] && levels[2]);
    EXPECT_EQ(largest_h, 15);
    EXPECT_EQ(largest_w, 5);
}

TEST(PartMaps, ShapesFollowValidConvolution) {
    PartSpec big{4, 3, 15, 5, 2, 0, 0};
    EXPECT_EQ(big.map_h(), 5);
    EXPECT_EQ(big.map_w(), 1);
    PartSpec small{1, 1, 5, 3, 2, 1, 0};
    EXPECT_EQ(small.map_h(), 15);
    EXPECT_EQ(small.map_w(), 3);
}

TEST(PartMaps, ZeroFeaturesGiveConstantBias) {
    PartModel<double> model;
    model.specs = default_part_layout();
    for (const PartSpec& s : model.specs) {
        model.filters.emplace_back(1, kConv1Filters, s.f_h, s.f_w);
        model.filters.back().biases[0] = 0.75;
        model.coeffs.push_back({0, 0, 0, 0});
        model.learned_maps.emplace_back(s.map_h(), s.map_w());
    }
    Tensor3<double> features(kConv1Filters, kFeatureH, kFeatureW, 0.0);
    auto maps = part_detection_maps(features, model);
    ASSERT_EQ(maps.size(), 8u);
    for (std::size_t p = 0; p < maps.size(); ++p) {
        ASSERT_EQ(maps[p].h, model.specs[p].map_h());
        ASSERT_EQ(maps[p].w, model.specs[p].map_w());
        for (double v : maps[p].v) ASSERT_DOUBLE_EQ(v, 0.75);
    }
}

TEST(PartMaps, RejectsWrongFeatureShape) {
    PartModel<double> model;
    model.specs = default_part_layout();
    for (const PartSpec& s : model.specs) {
        model.filters.emplace_back(1, kConv1Filters, s.f_h, s.f_w);
        model.coeffs.push_back({0, 0, 0, 0});
        model.learned_maps.emplace_back(s.map_h(), s.map_w());
    }
    Tensor3<double> bad(kConv1Filters, kFeatureH - 1, kFeatureW);
    EXPECT_THROW(part_detection_maps(bad, model), std::invalid_argument);
}
