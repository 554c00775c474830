#include "cmlab/montecarlo.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <tuple>

#include "cmlab/analytic.hpp"
#include "cmlab/error.hpp"
#include "cmlab/parallel.hpp"
#include "cmlab/quadrature.hpp"
#include "json.hpp"

namespace cmlab {

namespace {

double h1_sq(const GridField& f) {
    const NormReport r = norms(f);
    return r.h1 * r.h1;
}

std::vector<std::size_t> group_bounds(std::size_t samples, std::size_t groups) {
    groups = std::clamp<std::size_t>(groups, 1, std::max<std::size_t>(samples, 1));
    std::vector<std::size_t> b(groups + 1);
    for (std::size_t g = 0; g <= groups; ++g) b[g] = g * samples / groups;
    return b;
}

/// Streams per-sample fields in sample order into Welford moments and contiguous group sums.
class Accumulator {
public:
    Accumulator(const GeometryPtr& geo, std::size_t samples, std::size_t groups)
        : geo_(geo), bounds_(group_bounds(samples, groups)) {
        const std::size_t m = geo->grid().size();
        mean_.assign(m, 0.0);
        m2_.assign(m, 0.0);
        sums_.assign(bounds_.size() - 1, std::vector<double>(m, 0.0));
    }

    void add(const std::vector<double>& x) {
        const std::size_t g = static_cast<std::size_t>(
            std::upper_bound(bounds_.begin(), bounds_.end(), count_) - bounds_.begin() - 1);
        ++count_;
        const double k = static_cast<double>(count_);
        auto& sum = sums_[g];
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - mean_[i];
            mean_[i] += d / k;
            m2_[i] += d * (x[i] - mean_[i]);
            sum[i] += x[i];
        }
    }

    std::size_t count() const { return count_; }

    GridField mean() const { return GridField(geo_, mean_); }
    GridField second_moment() const {
        std::vector<double> s(mean_.size());
        const double k = static_cast<double>(count_);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = m2_[i] / k + mean_[i] * mean_[i];
        return GridField(geo_, std::move(s));
    }
    std::vector<GridField> group_sums() const {
        std::vector<GridField> out;
        for (const auto& s : sums_) out.emplace_back(geo_, s);
        return out;
    }
    std::vector<std::size_t> group_counts() const {
        std::vector<std::size_t> c;
        for (std::size_t g = 0; g + 1 < bounds_.size(); ++g) c.push_back(bounds_[g + 1] - bounds_[g]);
        return c;
    }

private:
    GeometryPtr geo_;
    std::vector<std::size_t> bounds_;
    std::size_t count_ = 0;
    std::vector<double> mean_, m2_;
    std::vector<std::vector<double>> sums_;
};

/// Runs `eval(s, out)` for every sample in batches and feeds the results to `sink` in sample order.
template <class Eval, class Sink>
void stream_samples(std::size_t samples, std::size_t workers, Eval&& eval, Sink&& sink) {
    const std::size_t batch = std::max<std::size_t>(workers, 1) * 2;
    std::vector<std::vector<double>> slot(batch);
    for (std::size_t start = 0; start < samples; start += batch) {
        const std::size_t count = std::min(batch, samples - start);
        parallel_for(count, workers, [&](std::size_t i) { eval(start + i, slot[i]); });
        for (std::size_t i = 0; i < count; ++i) sink(start + i, slot[i]);
    }
}

/// Grouped jackknife standard error of stat(mean) given per-group sums.
template <class Stat>
double jackknife(const std::vector<GridField>& sums, const std::vector<std::size_t>& counts, Stat&& stat) {
    const std::size_t G = sums.size();
    if (G < 2) return std::numeric_limits<double>::quiet_NaN();
    const GeometryPtr& geo = sums[0].geometry_ptr();
    const std::size_t m = sums[0].values().size();
    std::vector<double> total(m, 0.0);
    std::size_t S = 0;
    for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t i = 0; i < m; ++i) total[i] += sums[g][i];
        S += counts[g];
    }
    std::vector<double> theta(G);
    for (std::size_t g = 0; g < G; ++g) {
        const double k = static_cast<double>(S - counts[g]);
        std::vector<double> v(m);
        for (std::size_t i = 0; i < m; ++i) v[i] = (total[i] - sums[g][i]) / k;
        theta[g] = stat(GridField(geo, std::move(v)));
    }
    double mean = 0.0;
    for (double t : theta) mean += t;
    mean /= static_cast<double>(G);
    double ss = 0.0;
    for (double t : theta) ss += (t - mean) * (t - mean);
    return std::sqrt(ss * static_cast<double>(G - 1) / static_cast<double>(G));
}

GridField minus(const GridField& a, const GridField& b) { return combine({&a, &b}, {1.0, -1.0}); }

bool is_affine(const Expression& f, const DomainSpec& d) {
    const Vec3 g0 = f.gradient(d.center);
    const double s = d.shape == DomainSpec::Shape::ball ? d.radius : norm(d.extents);
    const Vec3 probes[] = {{0.31, -0.17, 0.23}, {-0.29, 0.11, -0.37}, {0.05, 0.41, -0.13}};
    for (const Vec3& p : probes) {
        const Vec3 x = d.center + s * p;
        if (norm(f.gradient(x) - g0) > 1e-12 * (1.0 + norm(g0))) return false;
        const double lin = f(d.center) + dot(g0, x - d.center);
        if (std::abs(f(x) - lin) > 1e-10 * (1.0 + std::abs(lin))) return false;
    }
    return true;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

GridField EnsembleEstimate::variance() const {
    std::vector<double> v(mean_field.values().size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = second_moment_field[i] - mean_field[i] * mean_field[i];
    return GridField(mean_field.geometry_ptr(), std::move(v));
}

EnsembleEstimate expectation_field(const GeometryPtr& geo, double epsilon, std::size_t n, std::size_t samples,
                                   std::uint64_t seed_base, const EnsembleOptions& options) {
    if (samples < 2) throw Error(ErrorCode::invalid_argument, "an ensemble needs at least 2 samples");
    const DomainSpec& domain = geo->domain();
    SolverOptions solver = options.solver;
    solver.compute_flux_residuals = false;

    EnsembleEstimate est;
    est.seed_base = seed_base;
    est.epsilon = epsilon;
    est.n_inclusions = n;
    est.background = solve_background(geo, solver).field;

    Accumulator acc(geo, samples, options.groups);
    est.sample_h1_sq.resize(samples);
    stream_samples(
        samples, options.workers,
        [&](std::size_t s, std::vector<double>& out) {
            const std::uint64_t seed = options.fixed_seed ? seed_base : seed_base + s;
            try {
                const auto config = sample_configuration(domain, epsilon, n, seed);
                out = solve_with_inclusions(geo, config, solver).field.values();
            } catch (const Error& e) {
                std::ostringstream os;
                os << "sample " << s << " (seed " << seed << "): " << e.what();
                throw Error(e.code(), os.str());
            }
        },
        [&](std::size_t s, const std::vector<double>& x) {
            acc.add(x);
            est.sample_h1_sq[s] = h1_sq(minus(GridField(geo, x), est.background));
        });
    est.sample_count = acc.count();
    est.mean_field = acc.mean();
    est.second_moment_field = acc.second_moment();
    est.group_sums = acc.group_sums();
    est.group_counts = acc.group_counts();
    return est;
}

EnsembleEstimate expectation_field(const DomainSpec& domain, double epsilon, std::size_t n, std::size_t samples,
                                   double h, std::uint64_t seed_base, const EnsembleOptions& options) {
    return expectation_field(GridGeometry::build(domain, h), epsilon, n, samples, seed_base, options);
}

GridField beta_field(const GeometryPtr& geo, double epsilon, std::size_t n) {
    const Grid& g = geo->grid();
    std::vector<double> b(g.size(), 0.0);
    if (n > 0)
        for (std::size_t i = 0; i < b.size(); ++i)
            if (geo->inside(i)) b[i] = local_volume_fraction_uniform(geo->domain(), epsilon, n, g.point(i));
    return GridField(geo, std::move(b));
}

TheoremError theorem_error(const EnsembleEstimate& est, const GridField& beta, const DomainSpec& domain, double h,
                           const SolverOptions& options) {
    const Grid expected = Grid::covering(domain, h);
    if (!(est.mean_field.grid() == expected) || !beta.geometry().same_grid(est.mean_field.geometry()))
        throw Error(ErrorCode::grid_mismatch, "estimate, beta and (domain, h) must share one grid");
    TheoremError r;
    r.effective = solve_effective(beta, options).field;
    const GridField& bg = est.background;
    const auto eff = [&](const GridField& m) { return norms(minus(m, r.effective)).h1; };
    const auto bgr = [&](const GridField& m) { return norms(minus(m, bg)).h1; };
    r.err_effective = eff(est.mean_field);
    r.err_background = bgr(est.mean_field);
    r.ratio = r.err_background > 0.0 ? r.err_effective / r.err_background : std::numeric_limits<double>::quiet_NaN();
    r.stderr_effective = jackknife(est.group_sums, est.group_counts, eff);
    r.stderr_background = jackknife(est.group_sums, est.group_counts, bgr);
    r.stderr_ratio = jackknife(est.group_sums, est.group_counts, [&](const GridField& m) {
        const double b = bgr(m);
        return b > 0.0 ? eff(m) / b : 0.0;
    });

    const double S = static_cast<double>(est.sample_count);
    double q = 0.0;
    for (double v : est.sample_h1_sq) q += v;
    const double trace = std::max(0.0, (q - S * r.err_background * r.err_background) / (S - 1.0));
    r.debiased_effective = std::sqrt(std::max(0.0, r.err_effective * r.err_effective - trace / S));
    r.debiased_background = std::sqrt(std::max(0.0, r.err_background * r.err_background - trace / S));
    return r;
}

LinearizedReport linearized_check(const DomainSpec& domain, double epsilon, std::size_t n, std::size_t samples,
                                  double h, const LinearizedOptions& options) {
    if (samples < 2) throw Error(ErrorCode::invalid_argument, "the linearized check needs at least 2 samples");
    const auto geo = GridGeometry::build(domain, h);
    const Grid& grid = geo->grid();
    SolverOptions solver = options.solver;
    solver.compute_flux_residuals = false;

    LinearizedReport rep;
    rep.epsilon = epsilon;
    rep.n_inclusions = n;
    rep.samples = samples;
    rep.h = h;
    rep.analytic = options.analytic_phi1 && domain.shape == DomainSpec::Shape::ball &&
                   domain.conductivity.is_constant() && is_affine(domain.boundary_data, domain);
    if (!rep.analytic && epsilon < 4.0 * h * (1.0 - 1e-12))
        throw Error(ErrorCode::under_resolved_inclusion, "grid-solved phi_1 needs eps >= 4h");

    const SolveOutput bg = solve_background(geo, solver);
    const GridField& phibar = bg.field;

    Accumulator acc(geo, samples, options.groups);
    if (n > 0) {
        const BallGreen green{domain.radius, domain.center};
        const Background background = harmonic_background(domain.boundary_data);
        const SphereRule surface = sphere_rule(12);
        stream_samples(
            samples, options.workers,
            [&](std::size_t s, std::vector<double>& out) {
                const auto config = sample_configuration(domain, epsilon, 1, options.seed_base + s);
                if (!rep.analytic) {
                    out = minus(solve_with_inclusions(geo, config, solver).field, phibar).values();
                    return;
                }
                const ReflectionResult rr = reflection_solve(green, config, background, 200, 1.0);
                const Vec3 eta = config.centers[0];
                double c = 0.0;
                for (std::size_t q = 0; q < surface.directions.size(); ++q)
                    c += surface.weights[q] * rr.potential(eta + epsilon * surface.directions[q]);
                c /= 4.0 * std::numbers::pi;
                out.assign(grid.size(), 0.0);
                for (std::size_t i = 0; i < out.size(); ++i) {
                    if (!geo->inside(i)) continue;
                    const Vec3 x = grid.point(i);
                    const double inner = distance(x, eta) < epsilon ? c : rr.potential(x);
                    out[i] = inner - background.value(x);
                }
            },
            [&](std::size_t, const std::vector<double>& x) { acc.add(x); });
    }

    const GridField beta = beta_field(geo, epsilon, n);
    const VectorField grad = gradient(phibar);
    VectorField F{geo, {}};
    for (int c = 0; c < 3; ++c) {
        F.components[c].assign(grid.size(), 0.0);
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (geo->inside(i)) F.components[c][i] = 3.0 * beta[i] * geo->conductivity(i) * grad.components[c][i];
    }
    const GridField w = n > 0 ? apply_inverse_L(F, solver) : GridField::zeros(geo);
    rep.reference = norms(w).h1;

    const double N = static_cast<double>(n);
    const auto deviation = [&](const GridField& mean) {
        std::vector<double> d(grid.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = N * mean[i] - w[i];
        return norms(GridField(geo, std::move(d))).h1;
    };
    if (n == 0) return rep;
    rep.deviation = deviation(acc.mean());
    rep.ratio = rep.reference > 0.0 ? rep.deviation / rep.reference : std::numeric_limits<double>::quiet_NaN();
    rep.stderr_ratio = jackknife(acc.group_sums(), acc.group_counts(),
                                 [&](const GridField& m) { return deviation(m) / rep.reference; });
    return rep;
}

std::uint64_t row_seed(std::uint64_t seed, double beta_bar) {
    const auto bits = std::bit_cast<std::uint64_t>(beta_bar);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(bits), static_cast<std::uint32_t>(bits >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::insufficient_levels, "fit needs 2+ points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = std::log(y[i]) - (icpt + slope * std::log(x[i]));
        ss += r * r;
    }
    return {slope, std::sqrt(ss / n)};
}

StudyReport run_study(const DomainSpec& domain, const std::vector<double>& beta_bars, const StudyOptions& options) {
    if (beta_bars.empty()) throw Error(ErrorCode::invalid_argument, "no beta_bar values given");
    for (std::size_t i = 0; i < beta_bars.size(); ++i) {
        if (!(beta_bars[i] > 0.0)) throw Error(ErrorCode::invalid_argument, "beta_bar must be positive");
        if (i > 0 && beta_bars[i] > beta_bars[i - 1])
            throw Error(ErrorCode::invalid_argument, "beta_bar list must be non-increasing");
    }
    if (options.samples < std::max<std::size_t>(options.min_samples, 2))
        throw Error(ErrorCode::invalid_argument, "samples per row below the configured minimum");
    StudyReport rep;
    for (double bb : beta_bars) {
        StudyRow row;
        row.beta_bar = bb;
        row.epsilon = options.epsilon_coefficient * std::pow(bb, options.epsilon_exponent);
        row.h = options.fixed_h > 0.0 ? options.fixed_h : row.epsilon / options.h_ratio;
        row.n_inclusions = count_for_volume_fraction(domain, bb, row.epsilon);
        row.samples = options.samples;
        row.seed_base = row_seed(options.seed, bb);
        try {
            const DiluteRegime regime = make_dilute_regime(domain, row.epsilon, row.n_inclusions, options.C_regime);
            if (!regime.within_window()) throw Error(ErrorCode::invalid_argument, regime.diagnostic());
            const auto geo = GridGeometry::build(domain, row.h);
            EnsembleOptions eo;
            eo.workers = options.workers;
            eo.groups = options.groups;
            eo.solver = options.solver;
            const EnsembleEstimate est =
                expectation_field(geo, row.epsilon, row.n_inclusions, row.samples, row.seed_base, eo);
            const TheoremError te = theorem_error(est, beta_field(geo, row.epsilon, row.n_inclusions), domain,
                                                  row.h, options.solver);
            row.err_effective = te.err_effective;
            row.err_background = te.err_background;
            row.ratio = te.ratio;
            row.stderr_effective = te.stderr_effective;
            row.stderr_background = te.stderr_background;
            row.stderr_ratio = te.stderr_ratio;
            row.debiased_effective = te.debiased_effective;
            row.debiased_background = te.debiased_background;
        } catch (const Error& e) {
            rep.complete = false;
            rep.failure = "beta_bar " + fmt(bb) + ": " + e.what();
            rep.failure_code = e.code();
            return rep;
        }
        rep.rows.push_back(row);
    }
    if (rep.rows.size() >= 2) {
        std::vector<double> x, ye, yb;
        for (const auto& r : rep.rows) {
            x.push_back(r.beta_bar);
            ye.push_back(r.err_effective);
            yb.push_back(r.err_background);
        }
        std::tie(rep.fitted_exponent, rep.fit_residual) = loglog_fit(x, ye);
        rep.background_exponent = loglog_fit(x, yb).first;
    }
    return rep;
}

void write_study_csv(std::ostream& os, const StudyReport& report) {
    os << "beta_bar,epsilon,h,N,samples,seed_base,err_effective,err_background,ratio,stderr,stderr_background,"
          "stderr_ratio,debiased_effective,debiased_background\n";
    for (const auto& r : report.rows)
        os << fmt(r.beta_bar) << ',' << fmt(r.epsilon) << ',' << fmt(r.h) << ',' << r.n_inclusions << ','
           << r.samples << ',' << r.seed_base << ',' << fmt(r.err_effective) << ',' << fmt(r.err_background) << ','
           << fmt(r.ratio) << ',' << fmt(r.stderr_effective) << ',' << fmt(r.stderr_background) << ','
           << fmt(r.stderr_ratio) << ',' << fmt(r.debiased_effective) << ',' << fmt(r.debiased_background) << '\n';
}

std::string study_summary_json(const StudyReport& report) {
    nlohmann::ordered_json j;
    j["fitted_exponent"] = report.fitted_exponent;
    j["fit_residual"] = report.fit_residual;
    j["background_exponent"] = report.background_exponent;
    j["complete"] = report.complete;
    if (!report.complete) j["failure"] = report.failure;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : report.rows)
        j["rows"].push_back({{"beta_bar", r.beta_bar},
                             {"epsilon", r.epsilon},
                             {"h", r.h},
                             {"N", r.n_inclusions},
                             {"samples", r.samples},
                             {"seed_base", r.seed_base},
                             {"err_effective", r.err_effective},
                             {"err_background", r.err_background},
                             {"ratio", r.ratio},
                             {"stderr", r.stderr_effective},
                             {"stderr_background", r.stderr_background},
                             {"stderr_ratio", r.stderr_ratio},
                             {"debiased_effective", r.debiased_effective},
                             {"debiased_background", r.debiased_background}});
    return j.dump(2);
}

}  // namespace cmlab
