#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cmlab/analytic.hpp"
#include "cmlab/elliptic.hpp"
#include "cmlab/error.hpp"
#include "cmlab/montecarlo.hpp"
#include "cmlab/sparse.hpp"

using namespace cmlab;
constexpr double pi = std::numbers::pi;

namespace {

// Tridiagonal 1-D Dirichlet Laplacian of order n.
CsrMatrix laplacian_1d(std::size_t n) {
    CsrMatrix a;
    a.rows = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            a.col.push_back(std::int32_t(i - 1));
            a.val.push_back(-1.0);
        }
        a.col.push_back(std::int32_t(i));
        a.val.push_back(2.0);
        if (i + 1 < n) {
            a.col.push_back(std::int32_t(i + 1));
            a.val.push_back(-1.0);
        }
        a.row_ptr.push_back(a.col.size());
    }
    return a;
}

double max_interior_error(const GridField& u, const std::function<double(const Vec3&)>& exact,
                          const Mask* region = nullptr) {
    double e = 0.0;
    const auto& geo = u.geometry();
    for (std::size_t i = 0; i < u.values().size(); ++i) {
        if (!geo.inside(i) || (region && !(*region)[i])) continue;
        e = std::max(e, std::abs(u[i] - exact(geo.grid().point(i))));
    }
    return e;
}

InclusionConfiguration centered(double eps) { return {eps, {{0.0, 0.0, 0.0}}, 0}; }

}  // namespace

TEST(Sparse, MultiplyAndDiagonal) {
    const auto a = laplacian_1d(4);
    std::vector<double> y;
    a.multiply({1, 1, 1, 1}, y);
    EXPECT_EQ(y, (std::vector<double>{1, 0, 0, 1}));
    EXPECT_EQ(a.diagonal(), (std::vector<double>(4, 2.0)));
    EXPECT_EQ(a.nonzeros(), 10u);
}

TEST(Sparse, PcgSolvesTridiagonal) {
    const std::size_t n = 200;
    const auto a = laplacian_1d(n);
    std::vector<double> exact(n), b;
    for (std::size_t i = 0; i < n; ++i) exact[i] = std::sin(0.03 * double(i)) + 0.5;
    a.multiply(exact, b);
    std::vector<double> x(n, 0.0);
    const auto r = pcg(a, b, x, JacobiPreconditioner(a), 1e-12, 1000);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.relative_residual, 1e-12);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(x[i], exact[i], 1e-7);
}

TEST(Sparse, PcgReportsNonconvergence) {
    const auto a = laplacian_1d(200);
    std::vector<double> b(200, 1.0), x(200, 0.0);
    const auto r = pcg(a, b, x, JacobiPreconditioner(a), 1e-12, 3);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 3u);
}

TEST(Background, LinearDataIsExactOnBox) {
    const auto out = solve_background(DomainSpec::unit_box("x"), 1.0 / 16);
    EXPECT_LT(max_interior_error(out.field, [](const Vec3& p) { return p.x; }), 1e-9);
    EXPECT_LE(out.residual, 1e-10);
    EXPECT_LE(out.stats.final_relative_residual, 1e-10);
    EXPECT_GT(out.stats.unknown_count, 0u);
    EXPECT_GE(out.dirichlet_energy, 0.0);
}

TEST(Background, HarmonicQuadraticInBall) {
    // Linear ghost interpolation at the curved boundary costs O(h) near it; the interior is O(h^2).
    const auto exact = [](const Vec3& p) { return p.x * p.x - p.y * p.y; };
    double prev_all = 0.0, prev_in = 0.0;
    for (double h : {0.1, 0.05, 0.025}) {
        const auto out = solve_background(DomainSpec::unit_ball("x^2 - y^2"), h);
        const Mask inner = region_where(out.field.geometry(), [](const Vec3& p) { return norm(p) < 0.5; });
        const double all = max_interior_error(out.field, exact);
        const double in = max_interior_error(out.field, exact, &inner);
        EXPECT_LT(all, 0.5 * h);
        if (prev_all > 0.0) {
            EXPECT_GT(prev_all / all, 1.5);
            EXPECT_GT(prev_in / in, 3.0);
        }
        prev_all = all;
        prev_in = in;
    }
}

TEST(Background, SeparableExponentialConductivity) {
    // (e^x u')' = 0 with u(0) = 0, u(1) = 1 gives u = (1 - e^{-x}) / (1 - e^{-1}).
    const auto u = [](const Vec3& p) { return (1.0 - std::exp(-p.x)) / (1.0 - std::exp(-1.0)); };
    const auto domain = DomainSpec::box({0, 0, 0}, {1, 1, 1}, Expression::parse("(1 - exp(-x)) / (1 - exp(-1))"),
                                        Expression::parse("exp(x)"), 1.0, std::exp(1.0));
    const auto out = solve_background(domain, 1.0 / 64);
    EXPECT_LT(max_interior_error(out.field, u), 0.01);
}

TEST(Background, ConductivityBoundViolation) {
    const auto domain = DomainSpec::box({0, 0, 0}, {1, 1, 1}, Expression::parse("x"), Expression::parse("1 + x"),
                                        1.0, 1.5);
    EXPECT_THROW(solve_background(domain, 0.1), Error);
}

TEST(Inclusions, EmptyConfigurationIsBackground) {
    const auto geo = GridGeometry::build(DomainSpec::unit_ball("x + 0.3*y"), 0.05);
    const auto bg = solve_background(geo);
    const auto inc = solve_with_inclusions(geo, InclusionConfiguration{0.2, {}, 0});
    EXPECT_EQ(inc.field.values(), bg.field.values());
    EXPECT_TRUE(inc.inclusion_constants.empty());
}

TEST(Inclusions, OddSymmetryFixesCenterConstant) {
    const double h = 0.05;
    const auto out = solve_with_inclusions(DomainSpec::unit_ball("x"), centered(0.2), h);
    ASSERT_EQ(out.inclusion_constants.size(), 1u);
    EXPECT_LE(std::abs(out.inclusion_constants[0]), 10 * h * h);
}

TEST(Inclusions, FieldIsConstantOnEachBall) {
    const InclusionConfiguration config{0.15, {{-0.4, 0.1, 0.0}, {0.35, -0.2, 0.1}}, 0};
    const auto out = solve_with_inclusions(DomainSpec::unit_ball("x + y*z"), config, 0.0375);
    const auto& g = out.field.grid();
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t n = 0; n < config.size(); ++n)
            if (norm(g.point(i) - config.centers[n]) <= config.epsilon)
                ASSERT_EQ(out.field[i], out.inclusion_constants[n]);
}

TEST(Inclusions, ExteriorMatchesDipole) {
    const double eps = 0.1, h = 0.025;
    const auto domain = DomainSpec::unit_ball("x");
    const auto out = solve_with_inclusions(domain, centered(eps), h);
    const auto dip = make_dipole(domain, {0, 0, 0}, eps, {1, 0, 0});
    const auto exact = GridField::sample(out.field.geometry_ptr(), [&](const Vec3& p) { return p.x + dipole_field(dip, p); });
    const auto diff = combine({&out.field, &exact}, {1.0, -1.0});
    const Mask far = region_where(out.field.geometry(), [&](const Vec3& p) { return norm(p) > 2 * eps; });
    EXPECT_LT(norms(diff, &far).h1, 0.02 * norms(exact, &far).h1);
}

TEST(Inclusions, UnderResolvedRadiusThrows) {
    try {
        solve_with_inclusions(DomainSpec::unit_ball("x"), centered(0.1), 0.05);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::under_resolved_inclusion);
    }
}

TEST(Inclusions, PermutationIsBitIdentical) {
    const auto geo = GridGeometry::build(DomainSpec::unit_ball("x - 0.5*z"), 0.05);
    InclusionConfiguration a{0.2, {{0.3, 0.1, 0.0}, {-0.3, 0.2, 0.1}, {0.0, -0.4, -0.2}}, 0};
    InclusionConfiguration b = a;
    std::swap(b.centers[0], b.centers[2]);
    const auto ra = solve_with_inclusions(geo, a);
    const auto rb = solve_with_inclusions(geo, b);
    EXPECT_EQ(ra.field.values(), rb.field.values());
    EXPECT_EQ(ra.inclusion_constants[0], rb.inclusion_constants[2]);
    EXPECT_EQ(ra.inclusion_constants[1], rb.inclusion_constants[1]);
    EXPECT_EQ(ra.dirichlet_energy, rb.dirichlet_energy);
}

TEST(Inclusions, MaximumPrinciple) {
    const InclusionConfiguration config{0.1, {{0.5, 0.0, 0.0}, {-0.2, 0.3, 0.0}, {0.0, -0.3, 0.5}, {0.1, 0.1, -0.6}}, 0};
    const auto out = solve_with_inclusions(DomainSpec::unit_ball("x*y + z"), config, 0.025);
    // On the unit sphere x*y + z ranges over [-1, 1] (attained at the poles; |xy| <= 1/2).
    const auto& geo = out.field.geometry();
    for (std::size_t i = 0; i < geo.grid().size(); ++i)
        if (geo.inside(i)) {
            ASSERT_LE(out.field[i], 1.0 + 1e-9);
            ASSERT_GE(out.field[i], -1.0 - 1e-9);
        }
    for (double c : out.inclusion_constants) {
        EXPECT_LE(c, 1.0);
        EXPECT_GE(c, -1.0);
    }
}

TEST(Inclusions, QuadratureFluxResidualsAreSmall) {
    const double eps = 0.1, h = 0.025;
    const InclusionConfiguration config{eps, {{0.0, 0.0, 0.0}, {0.45, 0.2, 0.0}}, 0};
    const auto out = solve_with_inclusions(DomainSpec::unit_ball("x"), config, h);
    ASSERT_EQ(out.flux_residuals.size(), 2u);
    const double bound = 10 * h * h * 1.0 * 4 * pi * eps * eps;
    for (double r : out.flux_residuals) EXPECT_LE(std::abs(r), bound);
}

TEST(Inclusions, GridConvergence) {
    const auto domain = DomainSpec::unit_ball("x");
    const double eps = 0.2;
    std::vector<SolveOutput> sols;
    for (double h : {0.05, 0.025, 0.0125}) sols.push_back(solve_with_inclusions(domain, centered(eps), h));
    std::vector<double> diffs;
    for (std::size_t l = 0; l + 1 < sols.size(); ++l) {
        const auto& coarse = sols[l].field;
        const auto& fine = sols[l + 1].field;
        const auto fine_on_coarse = GridField::sample(coarse.geometry_ptr(), [&](const Vec3& p) {
            return norm(p) <= eps ? sols[l + 1].inclusion_constants[0] : interpolate(fine, p);
        });
        const Mask away = region_where(coarse.geometry(), [&](const Vec3& p) {
            return norm(p) > eps + 2 * coarse.grid().h && norm(p) < 1.0 - 2 * coarse.grid().h;
        });
        diffs.push_back(norms(combine({&coarse, &fine_on_coarse}, {1.0, -1.0}), &away).h1);
    }
    EXPECT_GE(diffs[0] / diffs[1], 1.7);
}

TEST(Inclusions, PenaltyModeAgreesWithMerging) {
    const auto geo = GridGeometry::build(DomainSpec::unit_ball("x"), 0.05);
    const InclusionConfiguration config{0.2, {{0.3, 0.0, 0.0}}, 0};
    SolverOptions penalty;
    penalty.inclusion_mode = SolverOptions::InclusionMode::penalty;
    const auto merged = solve_with_inclusions(geo, config);
    const auto pen = solve_with_inclusions(geo, config, penalty);
    const auto diff = combine({&merged.field, &pen.field}, {1.0, -1.0});
    EXPECT_LT(norms(diff).h1, 0.05 * norms(merged.field).h1);
    EXPECT_NEAR(pen.inclusion_constants[0], merged.inclusion_constants[0], 0.02);
}

TEST(Effective, ZeroBetaIsBackgroundBitExact) {
    const auto geo = GridGeometry::build(DomainSpec::unit_ball("x + y"), 0.05);
    const auto bg = solve_background(geo);
    const auto zero = solve_effective(GridField::zeros(geo));
    EXPECT_EQ(zero.field.values(), bg.field.values());
    const auto flat = solve_effective(GridField::sample(geo, [](const Vec3&) { return 0.01; }));
    EXPECT_EQ(flat.field.values(), bg.field.values());
}

TEST(Effective, UniformModelDeviationIsBounded) {
    const auto domain = DomainSpec::unit_box("x");
    const double eps = 0.1, beta_bar = 0.01;
    const std::size_t n = count_for_volume_fraction(domain, beta_bar, eps);
    for (double h : {0.05, 0.025}) {
        const auto geo = GridGeometry::build(domain, h);
        const auto beta = beta_field(geo, eps, n);
        const auto bg = solve_background(geo);
        const auto eff = solve_effective(beta);
        const double dev = norms(combine({&eff.field, &bg.field}, {1.0, -1.0})).h1;
        EXPECT_GT(dev, 0.0);
        EXPECT_LE(dev, 3 * beta_bar * norms(bg.field).h1);
    }
}

TEST(Effective, RejectsOutOfRangeBeta) {
    const auto geo = GridGeometry::build(DomainSpec::unit_box("x"), 0.1);
    EXPECT_THROW(solve_effective(GridField::sample(geo, [](const Vec3& p) { return p.x; })), Error);
    const auto other = GridGeometry::build(DomainSpec::unit_box("x"), 0.05);
    EXPECT_THROW(solve_effective(DomainSpec::unit_box("x"), GridField::zeros(other), 0.1), Error);
}

TEST(InverseL, ZeroRhsGivesZero) {
    const auto geo = GridGeometry::build(DomainSpec::unit_ball("x"), 0.1);
    VectorField F{geo, {}};
    for (auto& c : F.components) c.assign(geo->grid().size(), 0.0);
    const auto w = apply_inverse_L(F);
    for (double v : w.values()) EXPECT_EQ(v, 0.0);
}

TEST(InverseL, ManufacturedGradient) {
    // -Laplace w = div grad g with g = 0 on the boundary gives w = -g.
    const auto g = [](const Vec3& p) { return std::sin(pi * p.x) * std::sin(pi * p.y) * std::sin(pi * p.z); };
    const auto grad_g = [](const Vec3& p) {
        return Vec3{pi * std::cos(pi * p.x) * std::sin(pi * p.y) * std::sin(pi * p.z),
                    pi * std::sin(pi * p.x) * std::cos(pi * p.y) * std::sin(pi * p.z),
                    pi * std::sin(pi * p.x) * std::sin(pi * p.y) * std::cos(pi * p.z)};
    };
    double prev = 0.0;
    for (double h : {1.0 / 16, 1.0 / 32}) {
        const auto geo = GridGeometry::build(DomainSpec::unit_box("0"), h);
        VectorField F{geo, {}};
        for (auto& c : F.components) c.assign(geo->grid().size(), 0.0);
        for (std::size_t i = 0; i < geo->grid().size(); ++i) {
            const Vec3 v = grad_g(geo->grid().point(i));
            for (int a = 0; a < 3; ++a) F.components[a][i] = v[a];
        }
        const auto w = apply_inverse_L(F);
        const double err = max_interior_error(w, [&](const Vec3& p) { return -g(p); });
        EXPECT_LT(err, 2.0 * h * h);
        if (prev > 0.0) EXPECT_GT(prev / err, 3.0);
        prev = err;
    }
}

TEST(InverseL, EnergyEstimate) {
    const double beta = 0.05;
    const auto geo = GridGeometry::build(DomainSpec::unit_ball("x^2 - y^2 + x*z"), 0.05);
    const auto bg = solve_background(geo);
    const auto grad = gradient(bg.field);
    VectorField F{geo, {}};
    F.components[0] = grad.components[0];
    for (double& v : F.components[0]) v *= beta;
    F.components[1].assign(geo->grid().size(), 0.0);
    F.components[2].assign(geo->grid().size(), 0.0);
    const auto w = apply_inverse_L(F);
    const GridField d1(geo, grad.components[0]);
    const double lambda = 1.0;
    EXPECT_GT(norms(w).h1_seminorm, 0.0);
    EXPECT_LE(norms(w).h1_seminorm, beta * norms(d1).l2 / std::sqrt(lambda));
}

TEST(Energy, ConstantAndLinear) {
    const auto geo = GridGeometry::build(DomainSpec::unit_box("x"), 0.05);
    const auto a = conductivity_field(geo);
    EXPECT_EQ(dirichlet_energy(GridField::sample(geo, [](const Vec3&) { return 2.0; }), a, {}), 0.0);
    EXPECT_NEAR(dirichlet_energy(GridField::sample(geo, [](const Vec3& p) { return p.x; }), a, {}), 1.0, 1e-10);
    const auto other = GridGeometry::build(DomainSpec::unit_box("x"), 0.1);
    EXPECT_THROW(dirichlet_energy(GridField::zeros(geo), conductivity_field(other), {}), Error);
}

TEST(Energy, SolutionMinimizesOverCompetitors) {
    const InclusionConfiguration config{0.15, {{0.3, 0.0, 0.1}, {-0.35, 0.25, -0.1}}, 0};
    const auto out = solve_with_inclusions(DomainSpec::unit_ball("x + 0.5*y*z"), config, 0.0375);
    const double e0 = discrete_energy(out.field, config);
    EXPECT_NEAR(e0, out.dirichlet_energy, 1e-9 * e0);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.6, 0.6), amp(-0.2, 0.2);
    const double support = 0.2;
    int made = 0;
    while (made < 5) {
        const Vec3 c{u(rng), u(rng), u(rng)};
        // Bumps stay inside the domain and away from every ball, so competitors keep the traces.
        bool ok = norm(c) + support < 0.95;
        for (const auto& eta : config.centers) ok = ok && norm(c - eta) > support + config.epsilon + 0.05;
        if (!ok) continue;
        const double A = amp(rng);
        auto w = out.field;
        auto& v = w.mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double r = norm(w.grid().point(i) - c) / support;
            if (r < 1.0) v[i] += A * std::pow(1.0 - r * r, 3);
        }
        EXPECT_GT(discrete_energy(w, config), e0);
        ++made;
    }
    // A competitor that is not constant on a ball is rejected.
    auto bad = out.field;
    for (std::size_t i = 0; i < bad.values().size(); ++i)
        if (norm(bad.grid().point(i) - config.centers[0]) < 0.5 * config.epsilon) {
            bad.mutable_values()[i] += 1.0;
            break;
        }
    EXPECT_THROW(discrete_energy(bad, config), Error);
}
