// Acceptance run: one PASS/FAIL line per criterion. Arguments select criteria (default: all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cmlab/analytic.hpp"
#include "cmlab/corrections.hpp"
#include "cmlab/error.hpp"
#include "cmlab/montecarlo.hpp"

using namespace cmlab;
constexpr double pi = std::numbers::pi;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

const DomainSpec& unit_ball_x() {
    static const DomainSpec d = DomainSpec::unit_ball("x");
    return d;
}

DomainSpec exp_ball() {
    return DomainSpec::ball(1.0, {0, 0, 0}, Expression::parse("x"), Expression::parse("exp(x)"), std::exp(-1.0),
                            std::exp(1.0));
}

GridField minus(const GridField& a, const GridField& b) { return combine({&a, &b}, {1.0, -1.0}); }

Mask outside_balls(const GridGeometry& geo, const InclusionConfiguration& c, double radius) {
    return region_where(geo, [&](const Vec3& p) {
        for (const auto& eta : c.centers)
            if (norm(p - eta) <= radius) return false;
        return true;
    });
}

// ---------------------------------------------------------------------------------------------

Verdict dipole_consistency() {
    const double eps = 0.05;
    const Vec3 g{1, 0, 0};
    double worst = 0.0;
    for (const auto& d : {unit_ball_x(), exp_ball()}) {
        const auto p = make_dipole(d, {0, 0, 0}, eps, g);
        worst = std::max(worst, std::abs(dipole_flux(d, p)) / (eps * eps * norm(g)));
    }
    const double ca = dipole_constant(exp_ball(), {0, 0, 0}, eps, g);
    const bool ok = worst <= 1e-6 && std::abs(ca - 2.0 / 3.0) <= 0.02 * 2.0 / 3.0;
    return {ok, "flux/(eps^2|g|) = " + num(worst) + ", C_a = " + num(ca)};
}

// The single-inclusion study is shared by criteria 2 and 3.
const SlopeReport& single_study() {
    static const SlopeReport r = remainder_scaling_study(unit_ball_x(), {0, 0, 0}, {0.1, 0.05, 0.025});
    return r;
}

Verdict single_exponents() {
    const auto& r = single_study();
    std::string detail;
    bool ok = true;
    for (const char* q : {"grad_phi1_l2", "phi1_linf", "grad_v1_l2"}) {
        ok = ok && r.within(q);
        detail += std::string(q) + " slope " + num(r.slopes.at(q)) + (r.within(q) ? " ok; " : " OUT; ");
    }
    return {ok, detail};
}

Verdict far_field() {
    const auto& r = single_study();
    bool ok = true;
    std::string detail;
    for (const auto& [q, slope] : r.slopes) {
        if (q.rfind("far_field_compensated", 0) != 0) continue;
        double lo = INFINITY, hi = 0.0;
        for (const auto& row : r.rows)
            if (row.quantity == q) {
                lo = std::min(lo, row.measured);
                hi = std::max(hi, row.measured);
            }
        ok = ok && hi / lo < 3.0;
        detail += q.substr(q.find('@') + 1) + " band " + num(hi / lo) + "; ";
    }
    return {ok && !detail.empty(), detail};
}

Verdict pair_exponents() {
    const double eps = 0.05;
    const auto r = pair_scaling_study(unit_ball_x(), eps, {6 * eps, 12 * eps, 24 * eps}, eps / 4, {0, 0, 0}, {1, 0, 0});
    const bool ok = r.within("grad_v2_l2") && r.within("v2_linf");
    return {ok, "grad_v2_l2 slope " + num(r.slopes.at("grad_v2_l2")) + ", v2_linf slope " + num(r.slopes.at("v2_linf"))};
}

Verdict capacity_checks() {
    const DomainSpec d = DomainSpec::unit_ball("0");
    const double eps = 0.1;
    const double concentric = capacity(d, {eps, {{0, 0, 0}}, 0}, eps / 4).value;
    const double exact = 4 * pi * eps / (1 - eps);
    const bool c1 = std::abs(concentric - exact) <= 0.03 * exact;

    const auto geo = GridGeometry::build(d, 0.05);
    int violations = 0;
    for (int t = 0; t < 20; ++t) {
        const auto config = sample_configuration(d, 0.2, 2 + t % 2, 1000 + t);
        double sum = 0.0;
        for (const auto& eta : config.centers) sum += capacity(geo, {0.2, {eta}, 0}).value;
        if (!(capacity(geo, config).value < sum)) ++violations;
    }

    const double eb = 0.25;
    const auto band = capacity_boundary_study(d, eb, {1.0, 0.5, 0.25, 0.125}, eb / 32);
    std::string comp;
    for (const auto& row : band.rows) comp += num(row.compensated) + " ";
    const bool ok = c1 && violations == 0 && band.band < 2.0;
    return {ok, "concentric " + num(concentric) + " vs " + num(exact) + ", subadditivity violations " +
                    std::to_string(violations) + "/20, compensated [" + comp + "] band " + num(band.band)};
}

Verdict minimality() {
    const DomainSpec d = DomainSpec::unit_ball("x + 0.5*y*z");
    const double eps = 0.1, h = eps / 4;
    const auto geo = GridGeometry::build(d, h);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-0.7, 0.7), amp(-0.3, 0.3), rad(0.1, 0.25);
    int strict = 0, total = 0;
    for (int c = 0; c < 5; ++c) {
        const auto config = sample_configuration(d, eps, 3 + c, 50 + c);
        const auto out = solve_with_inclusions(geo, config);
        const double e0 = discrete_energy(out.field, config);
        for (int k = 0; k < 5;) {
            const Vec3 center{u(rng), u(rng), u(rng)};
            const double s = rad(rng);
            bool admissible = norm(center) + s < 0.97;
            for (const auto& eta : config.centers) admissible = admissible && norm(center - eta) > s + eps + h;
            if (!admissible) continue;
            const double a = amp(rng);
            auto w = out.field;
            auto& v = w.mutable_values();
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double r = norm(w.grid().point(i) - center) / s;
                if (r < 1.0) v[i] += a * std::pow(1.0 - r * r, 3);
            }
            if (discrete_energy(w, config) > e0) ++strict;
            ++total;
            ++k;
        }
    }
    return {strict == 25, std::to_string(strict) + "/" + std::to_string(total) + " competitors strictly above"};
}

Verdict integral_representation_check() {
    const DomainSpec& d = unit_ball_x();
    const double h = 0.025;
    const BallGreen green{1.0, {}};
    bool ok = true;
    std::string detail;
    for (const InclusionConfiguration& c :
         {InclusionConfiguration{0.1, {{0, 0, 0}}, 0}, InclusionConfiguration{0.1, {{-0.3, 0, 0}, {0.3, 0, 0}}, 0}}) {
        const auto geo = GridGeometry::build(d, h);
        const auto bg = solve_background(geo);
        const auto coarse = solve_with_inclusions(geo, c);
        const auto fine = solve_with_inclusions(d, c, h / 2);
        // Self-error: the h solution against the h/2 solution over the exterior.
        const auto fine_here = GridField::sample(geo, [&](const Vec3& p) { return interpolate(fine.field, p); });
        const Mask exterior = outside_balls(*geo, c, 2 * c.epsilon);
        const double self_error = norms(minus(coarse.field, fine_here), &exterior).h1;
        std::mt19937_64 rng(77);
        std::uniform_real_distribution<double> u(-0.8, 0.8);
        double worst = 0.0;
        for (int probes = 0; probes < 20;) {
            const Vec3 x{u(rng), u(rng), u(rng)};
            bool admissible = norm(x) < 0.8;
            for (const auto& eta : c.centers) admissible = admissible && norm(x - eta) > c.epsilon + 4 * h;
            if (!admissible) continue;
            const double r = integral_representation(d, coarse, bg.field, c, green, x);
            worst = std::max(worst, std::abs(r - interpolate(coarse.field, x)));
            ++probes;
        }
        ok = ok && worst <= 3 * self_error;
        detail += std::to_string(c.size()) + " incl: mismatch " + num(worst) + " vs 3x self-error " +
                  num(3 * self_error) + "; ";
    }
    return {ok, detail};
}

Verdict superposition_hierarchy() {
    const double eps = 0.05, r = 0.3;
    InclusionConfiguration c{eps, {}, 0};
    for (int k = 0; k < 3; ++k) c.centers.push_back({r * std::cos(2 * pi * k / 3), r * std::sin(2 * pi * k / 3), 0.1});
    const auto levels = superposition_levels(unit_ball_x(), c, eps / 4, 2);
    const double e0 = levels[0].residual.h1_seminorm, e1 = levels[1].residual.h1_seminorm,
                 e2 = levels[2].residual.h1_seminorm;
    return {e0 / e1 >= 2.0 && e1 / e2 >= 2.0,
            "||grad u||: " + num(e0) + " -> " + num(e1) + " -> " + num(e2) + " (factors " + num(e0 / e1) + ", " +
                num(e1 / e2) + ")"};
}

StudyOptions study_options(std::size_t workers) {
    StudyOptions o;
    o.epsilon_coefficient = 1.0;
    o.samples = o.min_samples = 200;
    o.seed = 1;
    o.workers = workers;
    // With eps = sqrt(beta_bar) the lower window edge eps / C needs C > 1 / sqrt(0.0025) = 20.
    o.C_regime = 25.0;
    return o;
}

const std::vector<double> kBetaBars{0.02, 0.01, 0.005, 0.0025};

std::optional<std::string> study_csv;

Verdict effective_medium_study() {
    const auto r = run_study(unit_ball_x(), kBetaBars, study_options(1));
    std::ostringstream csv;
    write_study_csv(csv, r);
    study_csv = csv.str();
    std::cerr << csv.str();
    if (!r.complete) return {false, "incomplete: " + r.failure};
    bool a = true, b = true;
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        const auto& row = r.rows[i];
        a = a && row.err_effective <= row.err_background + 2 * row.stderr_effective;
        if (i > 0) b = b && row.ratio < r.rows[i - 1].ratio;
    }
    const bool c = std::abs(r.background_exponent - 1.0) <= 0.2;
    const bool d = r.fitted_exponent >= r.background_exponent + 0.1;
    std::string ratios;
    for (const auto& row : r.rows) ratios += num(row.ratio) + " ";
    return {a && b && c && d, std::string("(a) ") + (a ? "ok" : "FAIL") + " (b) " + (b ? "ok" : "FAIL") + " ratios [" +
                                  ratios + "] (c) " + (c ? "ok" : "FAIL") + " bg slope " +
                                  num(r.background_exponent) + " (d) " + (d ? "ok" : "FAIL") + " eff slope " +
                                  num(r.fitted_exponent)};
}

Verdict linearized() {
    const double beta_bar = 0.01, h = 0.0125;
    const auto n_for = [&](double eps) { return count_for_volume_fraction(unit_ball_x(), beta_bar, eps); };
    const auto a = linearized_check(unit_ball_x(), 0.025, n_for(0.025), 500, h);
    const auto b = linearized_check(unit_ball_x(), 0.0125, n_for(0.0125), 500, h);
    const bool ok = a.ratio <= 0.35 && b.deviation < a.deviation;
    return {ok, "eps 0.025: ratio " + num(a.ratio) + " +- " + num(a.stderr_ratio) + " deviation " + num(a.deviation) +
                    "; eps 0.0125: ratio " + num(b.ratio) + " deviation " + num(b.deviation)};
}

Verdict green_bounds() {
    const auto flat = greens_bound_check(DomainSpec::unit_ball("0"), 0.05, 500, 0);
    const bool c0 = flat[0].sup <= 1.05 / (4 * pi);
    BoundCheckOptions opt;
    opt.sources = 6;
    opt.min_separation = 0.2;
    const auto coarse = greens_bound_check(exp_ball(), 0.05, 20000, 2, opt);
    const auto fine = greens_bound_check(exp_ball(), 0.025, 20000, 2, opt);
    bool stable = true;
    std::string changes;
    for (int k = 0; k < 3; ++k) {
        const double rel = std::abs(fine[k].sup - coarse[k].sup) / coarse[k].sup;
        stable = stable && std::isfinite(fine[k].sup) && rel < 0.10;
        changes += num(rel) + " ";
    }
    return {c0 && stable, "sup G|x-xi| = " + num(flat[0].sup) + " vs " + num(1.05 / (4 * pi)) +
                              ", relative change orders 0-2 [" + changes + "]"};
}

Verdict determinism() {
    if (!study_csv) effective_medium_study();
    const auto r = run_study(unit_ball_x(), kBetaBars, study_options(2));
    std::ostringstream csv;
    write_study_csv(csv, r);
    return {csv.str() == *study_csv, csv.str() == *study_csv ? "workers 1 and 2 CSV identical"
                                                                 : "CSV differs between worker counts"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"dipole consistency", dipole_consistency},
        {"single-inclusion exponents", single_exponents},
        {"far-field decay", far_field},
        {"pair-interaction exponents", pair_exponents},
        {"capacity", capacity_checks},
        {"variational minimality", minimality},
        {"integral representation", integral_representation_check},
        {"superposition hierarchy", superposition_hierarchy},
        {"effective medium error", effective_medium_study},
        {"linearized identity", linearized},
        {"Green's function bounds", green_bounds},
        {"determinism", determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k + 1);
        if (!selected.empty() && !selected.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[k].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << "criterion " << id << " (" << criteria[k].first << "): " << (v.pass ? "PASS" : "FAIL") << "  "
                  << v.detail << "  [" << num(secs) << " s]" << std::endl;
        if (!v.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
