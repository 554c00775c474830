#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "cmlab/corrections.hpp"
#include "cmlab/error.hpp"

using namespace cmlab;
constexpr double pi = std::numbers::pi;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::invalid_argument;
}

}  // namespace

TEST(SingleInclusion, ConstantDataHasNoCorrection) {
    // Zero up to the CG tolerance, tightened here so the check is sharp.
    SolverOptions tight;
    tight.tolerance = 1e-13;
    const auto b = single_inclusion(DomainSpec::unit_ball("2"), {0.1, 0, 0}, 0.2, 0.05, tight);
    for (double v : b.phi1.values()) EXPECT_NEAR(v, 0.0, 1e-11);
    EXPECT_NEAR(b.C1, 2.0, 1e-11);
}

TEST(SingleInclusion, CenteredBoundsAndDipoleCapture) {
    const double eps = 0.05;
    const auto b = single_inclusion(DomainSpec::unit_ball("x"), {0, 0, 0}, eps, eps / 4);
    const double ratio = b.phi1_norms.linf / eps;
    EXPECT_GE(ratio, 0.2);
    EXPECT_LE(ratio, 5.0);
    EXPECT_LE(norm(b.phi1_argmax), eps + 2 * (eps / 4));
    EXPECT_LE(b.v1_norms.h1_seminorm, 0.1 * b.phi1_norms.h1_seminorm);
}

TEST(SingleInclusion, TraceIsConstantInsideBall) {
    const Vec3 eta{0.2, -0.1, 0.1};
    const auto b = single_inclusion(DomainSpec::unit_ball("x + y*y - z*z"), eta, 0.15, 0.0375);
    const auto& g = b.phi1.grid();
    for (std::size_t i = 0; i < g.size(); ++i)
        if (norm(g.point(i) - eta) <= 0.15) ASSERT_NEAR(b.phi1[i] + b.phibar[i], b.C1, 1e-12);
}

TEST(SingleInclusion, FarFieldProfileIsBounded) {
    const double eps = 0.1;
    const auto b = single_inclusion(DomainSpec::unit_ball("x"), {0, 0, 0}, eps, eps / 4);
    const auto prof = far_field_profile(b, {1, 0, 0}, 4 * eps, 0.5, 8);
    ASSERT_EQ(prof.size(), 8u);
    for (const auto& [r, c] : prof) {
        EXPECT_GT(c, 0.5);
        EXPECT_LT(c, 4.0);
    }
}

TEST(Slopes, LoglogSlopeAndCsv) {
    EXPECT_NEAR(loglog_slope({1, 2, 4}, {3, 12, 48}), 2.0, 1e-12);
    EXPECT_TRUE(std::isnan(loglog_slope({1, 2}, {1, 0})));
    SlopeReport r;
    r.rows.push_back({"q", 0.1, 2.0, 1.4, 1.5, 0.2});
    r.slopes["q"] = 1.4;
    EXPECT_TRUE(r.within("q"));
    std::ostringstream os;
    write_slope_csv(os, r);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "quantity,level,measured,fitted_slope,expected_slope,tolerance");
}

TEST(Slopes, RemainderStudyNeedsThreeLevels) {
    EXPECT_EQ(code_of([] { remainder_scaling_study(DomainSpec::unit_ball("x"), {}, {0.2, 0.1}); }),
              ErrorCode::insufficient_levels);
}

TEST(Pair, ConstantDataHasNoRemainder) {
    SolverOptions tight;
    tight.tolerance = 1e-13;
    const auto p = pair_inclusion(DomainSpec::unit_ball("-1"), {-0.3, 0, 0}, {0.3, 0, 0}, 0.2, 0.05, tight);
    for (double v : p.v2.values()) EXPECT_NEAR(v, 0.0, 1e-11);
    for (double v : p.psi2.values()) EXPECT_NEAR(v, -1.0, 1e-11);
}

TEST(Pair, SwapIsBitExact) {
    const auto d = DomainSpec::unit_ball("x + 0.5*y");
    const auto a = pair_inclusion(d, {-0.3, 0.1, 0}, {0.3, 0, 0.1}, 0.2, 0.05);
    const auto b = pair_inclusion(d, {0.3, 0, 0.1}, {-0.3, 0.1, 0}, 0.2, 0.05);
    EXPECT_EQ(a.v2.values(), b.v2.values());
    EXPECT_EQ(a.psi2.values(), b.psi2.values());
}

TEST(Pair, PsiIsConstantOnBallsAndRemainderIsSmallWhenFar) {
    const double eps = 0.1;
    const Vec3 e1{-0.6, 0, 0}, e2{0.6, 0, 0};
    const auto p = pair_inclusion(DomainSpec::unit_ball("x"), e1, e2, eps, eps / 4);
    const auto& g = p.psi2.grid();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (norm(g.point(i) - e1) <= eps) ASSERT_EQ(p.psi2[i], p.C_pair[0]);
        if (norm(g.point(i) - e2) <= eps) ASSERT_EQ(p.psi2[i], p.C_pair[1]);
    }
    EXPECT_LE(p.v2_norms.h1_seminorm, 0.2 * p.phi1_norms.h1_seminorm);
}

TEST(Pair, ScalingStudyPreconditions) {
    const auto d = DomainSpec::unit_ball("x");
    EXPECT_EQ(code_of([&] { pair_scaling_study(d, 0.1, {0.6, 1.2}, 0.025, {}, {1, 0, 0}); }),
              ErrorCode::insufficient_levels);
    EXPECT_EQ(code_of([&] { pair_scaling_study(d, 0.1, {0.3, 0.6, 1.2}, 0.025, {}, {1, 0, 0}); }),
              ErrorCode::invalid_argument);
}

TEST(Superposition, EmptyConfigurationHasNoResidual) {
    const auto levels = superposition_levels(DomainSpec::unit_ball("x"), {0.2, {}, 0}, 0.05, 2);
    ASSERT_EQ(levels.size(), 3u);
    for (const auto& l : levels) EXPECT_EQ(l.residual.h1, 0.0);
}

TEST(Superposition, SingleInclusionIsExactAtFirstOrder) {
    const auto levels = superposition_levels(DomainSpec::unit_ball("x"), {0.2, {{0.1, 0.2, 0}}, 0}, 0.05, 2);
    EXPECT_GT(levels[0].residual.h1_seminorm, 1e-3);
    EXPECT_LT(levels[1].residual.h1_seminorm, 1e-8);
    EXPECT_LT(levels[2].residual.h1_seminorm, 1e-8);
    EXPECT_EQ(levels[2].pairs_used, 0u);
}

TEST(Superposition, HierarchyOnSeparatedTriple) {
    const double eps = 0.1;
    const double r = 0.6;
    InclusionConfiguration c{eps, {}, 0};
    for (int k = 0; k < 3; ++k) c.centers.push_back({r * std::cos(2 * pi * k / 3), r * std::sin(2 * pi * k / 3), 0.0});
    const auto levels = superposition_levels(DomainSpec::unit_ball("x + 0.3*z"), c, eps / 4, 2);
    const double e0 = levels[0].residual.h1_seminorm, e1 = levels[1].residual.h1_seminorm,
                 e2 = levels[2].residual.h1_seminorm;
    EXPECT_EQ(levels[2].pairs_used, 3u);
    EXPECT_GE(e0 / e1, 2.0);
    EXPECT_GE(e1 / e2, 2.0);
}

TEST(Superposition, PairBudget) {
    SuperpositionOptions opt;
    opt.pair_budget = 2;
    const InclusionConfiguration c{0.2, {{-0.5, 0, 0}, {0, 0, 0}, {0.5, 0, 0}}, 0};
    EXPECT_EQ(code_of([&] { superposition(DomainSpec::unit_ball("x"), c, 0.05, 2, opt); }),
              ErrorCode::pair_budget_exceeded);
    EXPECT_NO_THROW(superposition(DomainSpec::unit_ball("x"), c, 0.05, 1, opt));
}

TEST(Capacity, ConcentricSpheres) {
    const double eps = 0.1;
    const auto c = capacity(DomainSpec::unit_ball("0"), {eps, {{0, 0, 0}}, 0}, 0.025);
    const double exact = 4 * pi * eps / (1 - eps);
    EXPECT_NEAR(c.value, exact, 0.03 * exact);
    ASSERT_EQ(c.delta_list.size(), 1u);
    EXPECT_EQ(c.delta_list[0], 1.0);
    for (double v : c.minimizer.values()) {
        EXPECT_GE(v, -1e-12);
        EXPECT_LE(v, 1.0 + 1e-12);
    }
}

TEST(Capacity, IsolatedSphereInBox) {
    const double eps = 0.05;
    const auto c = capacity(DomainSpec::unit_box("0"), {eps, {{0.5, 0.5, 0.5}}, 0}, eps / 4);
    EXPECT_NEAR(c.value, 4 * pi * eps, 0.10 * 4 * pi * eps);
}

TEST(Capacity, BoundaryDeltas) {
    const auto d = DomainSpec::unit_ball("0");
    const auto deltas = boundary_deltas(d, {0.1, {{0, 0, 0}, {0.85, 0, 0}}, 0});
    EXPECT_EQ(deltas[0], 1.0);
    EXPECT_NEAR(deltas[1], 0.5, 1e-12);
}

TEST(Capacity, SubadditiveOnRandomConfigurations) {
    const auto d = DomainSpec::unit_ball("0");
    const double eps = 0.2;
    const auto geo = GridGeometry::build(d, 0.05);
    for (int trial = 0; trial < 20; ++trial) {
        const auto config = sample_configuration(d, eps, 2 + trial % 2, 100 + trial);
        const double joint = capacity(geo, config).value;
        double sum = 0.0;
        for (const auto& eta : config.centers) sum += capacity(geo, {eps, {eta}, 0}).value;
        EXPECT_LT(joint, sum) << "trial " << trial;
    }
}

TEST(Capacity, Monotone) {
    const auto d = DomainSpec::unit_ball("0");
    const auto geo = GridGeometry::build(d, 0.025);
    const double small = capacity(geo, {0.1, {{0.1, 0, 0}}, 0}).value;
    const double large = capacity(geo, {0.15, {{0.1, 0, 0}}, 0}).value;
    const double two = capacity(geo, {0.1, {{0.1, 0, 0}, {-0.4, 0.2, 0}}, 0}).value;
    EXPECT_GT(large, small);
    EXPECT_GE(two, small);
}

TEST(Capacity, UnderResolved) {
    EXPECT_EQ(code_of([] { capacity(DomainSpec::unit_ball("0"), {0.1, {{0, 0, 0}}, 0}, 0.05); }),
              ErrorCode::under_resolved_inclusion);
}

TEST(CapacityBoundary, UnitDeltaIsBounded) {
    const double eps = 0.1;
    const auto r = capacity_boundary_study(DomainSpec::unit_ball("0"), eps, {1.0}, 0.025);
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_GE(r.rows[0].capacity / eps, 4 * pi * 0.9);
    EXPECT_LE(r.rows[0].capacity / eps, 4 * pi * 3.0);
    EXPECT_NEAR(r.rows[0].compensated, r.rows[0].capacity / eps, 1e-12);
}

TEST(CapacityBoundary, UnresolvedGap) {
    EXPECT_EQ(code_of([] { capacity_boundary_study(DomainSpec::unit_ball("0"), 0.1, {1.0, 0.5}, 0.025); }),
              ErrorCode::under_resolved_gap);
}
