#include "cmlab/configuration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "cmlab/error.hpp"
#include "cmlab/quadrature.hpp"

namespace cmlab {

namespace {

constexpr double sphere_volume(double r) { return 4.0 / 3.0 * std::numbers::pi * r * r * r; }

// Relative slack on the equality cases of the admissibility constraints.
constexpr double admissibility_slack = 1e-12;

// Uniform hash grid with cell size 2 eps for hard-core checks.
class CellIndex {
public:
    explicit CellIndex(double cell) : cell_(cell) {}

    void insert(const Vec3& p, std::size_t id) { cells_[key(cell_of(p))].push_back(id); }

    template <class F>
    bool any_within(const Vec3& p, F&& pred) const {
        const auto c = cell_of(p);
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
                    if (it == cells_.end()) continue;
                    for (auto id : it->second)
                        if (pred(id)) return true;
                }
        return false;
    }

private:
    std::array<std::int64_t, 3> cell_of(const Vec3& p) const {
        return {static_cast<std::int64_t>(std::floor(p.x / cell_)),
                static_cast<std::int64_t>(std::floor(p.y / cell_)),
                static_cast<std::int64_t>(std::floor(p.z / cell_))};
    }
    static std::uint64_t key(const std::array<std::int64_t, 3>& c) {
        const auto u = [](std::int64_t v) { return static_cast<std::uint64_t>(v + (1 << 20)) & 0x1fffff; };
        return (u(c[0]) << 42) | (u(c[1]) << 21) | u(c[2]);
    }

    double cell_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

// Area of the disk |p| <= r intersected with [a1, b1] x [a2, b2].
double disk_rectangle_area(double r, double a1, double b1, double a2, double b2) {
    const double lo = std::max(a1, -r);
    const double hi = std::min(b1, r);
    if (!(hi > lo) || !(b2 > a2) || r <= 0.0) return 0.0;
    const auto s = [r](double x) { return std::sqrt(std::max(0.0, r * r - x * x)); };
    const auto prim = [r, &s](double x) {
        const double t = std::clamp(x / r, -1.0, 1.0);
        return 0.5 * (x * s(x) + r * r * std::asin(t));
    };
    std::vector<double> cuts{lo, hi};
    for (double y : {a2, b2}) {
        if (std::abs(y) < r) {
            const double xc = std::sqrt(r * r - y * y);
            for (double x : {-xc, xc})
                if (x > lo && x < hi) cuts.push_back(x);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    double area = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double x1 = cuts[k], x2 = cuts[k + 1];
        if (!(x2 > x1)) continue;
        const double sm = s(0.5 * (x1 + x2));
        const double arc = prim(x2) - prim(x1);
        double upper = 0.0, lower = 0.0;
        if (sm >= b2) upper = b2 * (x2 - x1);
        else if (sm <= a2) upper = a2 * (x2 - x1);
        else upper = arc;
        if (-sm >= b2) lower = b2 * (x2 - x1);
        else if (-sm <= a2) lower = a2 * (x2 - x1);
        else lower = -arc;
        area += upper - lower;
    }
    return area;
}

// |B(c, r) cap [lo, hi]| by exact slab areas integrated in z = c.z + r sin(t).
double sphere_box_volume(const Vec3& c, double r, const Vec3& lo, const Vec3& hi) {
    for (int a = 0; a < 3; ++a)
        if (c[a] + r <= lo[a] || c[a] - r >= hi[a] || !(hi[a] > lo[a])) return 0.0;
    bool inside = true;
    for (int a = 0; a < 3; ++a) inside = inside && c[a] - r >= lo[a] && c[a] + r <= hi[a];
    if (inside) return sphere_volume(r);

    const auto t_of = [&](double z) { return std::asin(std::clamp((z - c.z) / r, -1.0, 1.0)); };
    std::vector<double> cuts{t_of(std::max(lo.z, c.z - r)), t_of(std::min(hi.z, c.z + r))};
    // Kinks where the slab disk starts touching a side of the rectangle.
    for (double d : {c.x - lo.x, hi.x - c.x, c.y - lo.y, hi.y - c.y}) {
        if (d > 0 && d < r) {
            const double t = std::acos(d / r);
            for (double tt : {-t, t})
                if (tt > cuts[0] && tt < cuts[1]) cuts.push_back(tt);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    static const QuadratureRule rule = gauss_legendre(24);
    double vol = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double t1 = cuts[k], t2 = cuts[k + 1];
        if (!(t2 > t1)) continue;
        const double mid = 0.5 * (t1 + t2), half = 0.5 * (t2 - t1);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const double t = mid + half * rule.nodes[q];
            const double rho = r * std::cos(t);
            const double area = disk_rectangle_area(rho, lo.x - c.x, hi.x - c.x, lo.y - c.y, hi.y - c.y);
            vol += half * rule.weights[q] * area * r * std::cos(t);
        }
    }
    return vol;
}

// |B(0, r1) cap B(d e, r2)| for centers a distance d apart.
double lens_volume(double r1, double r2, double d) {
    if (d >= r1 + r2) return 0.0;
    if (d + r1 <= r2) return sphere_volume(r1);
    if (d + r2 <= r1) return sphere_volume(r2);
    const double s = r1 + r2 - d;
    return std::numbers::pi * s * s *
           (d * d + 2.0 * d * r1 - 3.0 * r1 * r1 + 2.0 * d * r2 + 6.0 * r1 * r2 - 3.0 * r2 * r2) / (12.0 * d);
}

}  // namespace

void validate_configuration(const InclusionConfiguration& config, const DomainSpec& domain) {
    const double eps = config.epsilon;
    if (!(eps > 0.0) && !config.centers.empty())
        throw Error(ErrorCode::invalid_argument, "inclusion radius must be positive");
    const double tol = admissibility_slack * std::max(1.0, eps);
    for (std::size_t i = 0; i < config.size(); ++i) {
        const double d = domain.distance_to_boundary(config.centers[i]);
        if (d < eps - tol) {
            std::ostringstream os;
            os << "inclusion " << i << " crosses the boundary (d = " << d << " < eps = " << eps << ")";
            throw Error(ErrorCode::invalid_argument, os.str());
        }
    }
    if (config.size() < 2) return;
    CellIndex index(2.0 * eps);
    for (std::size_t i = 0; i < config.size(); ++i) {
        const Vec3& p = config.centers[i];
        std::size_t hit = 0;
        if (index.any_within(p, [&](std::size_t j) {
                hit = j;
                return distance(p, config.centers[j]) < 2.0 * eps - tol;
            })) {
            std::ostringstream os;
            os << "inclusions " << hit << " and " << i << " overlap";
            throw Error(ErrorCode::invalid_argument, os.str());
        }
        index.insert(p, i);
    }
}

bool is_admissible(const InclusionConfiguration& config, const DomainSpec& domain) {
    try {
        validate_configuration(config, domain);
        return true;
    } catch (const Error&) {
        return false;
    }
}

InclusionConfiguration sample_configuration(const DomainSpec& domain, double epsilon, std::size_t n,
                                            std::uint64_t seed, std::size_t max_attempts) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_argument, "inclusion radius must be positive");
    if (n > 0 && !(domain.shrunk_volume(epsilon) > 0.0))
        throw Error(ErrorCode::invalid_argument, "admissible region Omega_eps is empty");
    InclusionConfiguration config;
    config.epsilon = epsilon;
    config.seed = seed;
    config.centers.reserve(n);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    std::mt19937_64 rng(seq);
    CellIndex index(2.0 * epsilon);
    while (config.centers.size() < n) {
        std::size_t rejections = 0;
        for (;;) {
            const Vec3 p = domain.sample_shrunk(epsilon, rng);
            const bool clash = index.any_within(
                p, [&](std::size_t j) { return distance(p, config.centers[j]) < 2.0 * epsilon; });
            if (!clash) {
                index.insert(p, config.centers.size());
                config.centers.push_back(p);
                break;
            }
            if (++rejections >= max_attempts) {
                std::ostringstream os;
                os << max_attempts << " consecutive rejections placing inclusion " << config.centers.size()
                   << " of " << n << " (eps = " << epsilon << ")";
                throw Error(ErrorCode::placement_failure, os.str());
            }
        }
    }
    return config;
}

std::size_t count_for_volume_fraction(const DomainSpec& domain, double beta_bar, double epsilon) {
    return static_cast<std::size_t>(std::llround(beta_bar * domain.volume() / sphere_volume(epsilon)));
}

double global_volume_fraction(const DomainSpec& domain, double epsilon, std::size_t n) {
    return static_cast<double>(n) * sphere_volume(epsilon) / domain.volume();
}

double global_volume_fraction(const InclusionConfiguration& config, const DomainSpec& domain) {
    return global_volume_fraction(domain, config.epsilon, config.size());
}

bool DiluteRegime::within_window() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) return false;
    const double l = std::log(1.0 / epsilon);
    return epsilon / C_regime < beta_bar && beta_bar <= C_regime / (l * l * l * l);
}

std::string DiluteRegime::diagnostic() const {
    std::ostringstream os;
    os << "beta_bar = " << beta_bar << " (eps = " << epsilon << ", N = " << n_inclusions << ", C = " << C_regime
       << ")";
    if (!within_window()) {
        const double l = std::log(1.0 / epsilon);
        os << " outside the dilute window (" << epsilon / C_regime << ", " << C_regime / (l * l * l * l) << "]";
    }
    return os.str();
}

DiluteRegime make_dilute_regime(const DomainSpec& domain, double epsilon, std::size_t n, double C_regime) {
    return {epsilon, n, global_volume_fraction(domain, epsilon, n), C_regime};
}

double shrunk_overlap_volume(const DomainSpec& domain, double epsilon, const Vec3& x) {
    if (domain.distance_to_boundary(x) >= 2.0 * epsilon) return 4.0 / 3.0 * std::numbers::pi * epsilon * epsilon * epsilon;
    if (domain.shape == DomainSpec::Shape::ball)
        return lens_volume(epsilon, std::max(0.0, domain.radius - epsilon), distance(x, domain.center));
    const Vec3 e{epsilon, epsilon, epsilon};
    return sphere_box_volume(x, epsilon, domain.lower() + e, domain.upper() - e);
}

double local_volume_fraction_uniform(const DomainSpec& domain, double epsilon, std::size_t n, const Vec3& x) {
    const double shrunk = domain.shrunk_volume(epsilon);
    if (n == 0 || !(shrunk > 0.0)) return 0.0;
    return static_cast<double>(n) * shrunk_overlap_volume(domain, epsilon, x) / shrunk;
}

double local_volume_fraction_empirical(std::span<const InclusionConfiguration> configs, const Vec3& x) {
    if (configs.empty()) throw Error(ErrorCode::empty_ensemble, "empirical density model needs configurations");
    std::size_t covered = 0;
    for (const auto& c : configs) {
        const double eps2 = c.epsilon * c.epsilon;
        for (const auto& eta : c.centers) {
            if (norm2(x - eta) <= eps2) {
                ++covered;
                break;
            }
        }
    }
    return static_cast<double>(covered) / static_cast<double>(configs.size());
}

double local_volume_fraction(const DomainSpec& domain, double epsilon, std::size_t n, const Vec3& x,
                             DensityModel model, std::span<const InclusionConfiguration> configs) {
    if (!domain.contains(x) && domain.distance_to_boundary(x) < 0.0)
        throw Error(ErrorCode::invalid_argument, "local volume fraction requested outside the domain");
    if (model == DensityModel::uniform) return local_volume_fraction_uniform(domain, epsilon, n, x);
    return local_volume_fraction_empirical(configs, x);
}

ClusterDecomposition cluster_decomposition(const InclusionConfiguration& config) {
    const std::size_t n = config.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    const auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    const double reach = 4.0 * config.epsilon;
    CellIndex index(std::max(reach, 1e-300));
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& p = config.centers[i];
        index.any_within(p, [&](std::size_t j) {
            if (distance(p, config.centers[j]) <= reach) {
                const auto a = find(i), b = find(j);
                if (a != b) parent[std::max(a, b)] = std::min(a, b);
            }
            return false;
        });
        index.insert(p, i);
    }
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);
    ClusterDecomposition out;
    for (auto& [root, members] : groups) {
        std::sort(members.begin(), members.end());
        ++out.size_histogram[members.size()];
        out.clusters.push_back(std::move(members));
    }
    std::sort(out.clusters.begin(), out.clusters.end());
    return out;
}

void to_json(nlohmann::json& j, const InclusionConfiguration& c) {
    nlohmann::json centers = nlohmann::json::array();
    for (const auto& p : c.centers) centers.push_back({p.x, p.y, p.z});
    j = nlohmann::json{{"epsilon", c.epsilon}, {"seed", c.seed}, {"centers", centers}};
}

void from_json(const nlohmann::json& j, InclusionConfiguration& c) {
    for (const auto& [key, value] : j.items())
        if (key != "epsilon" && key != "seed" && key != "centers")
            throw Error(ErrorCode::config_parse, "configuration: unknown key '" + key + "'");
    c.epsilon = j.at("epsilon").get<double>();
    c.seed = j.value("seed", std::uint64_t{0});
    c.centers.clear();
    for (const auto& p : j.at("centers")) {
        if (!p.is_array() || p.size() != 3)
            throw Error(ErrorCode::config_parse, "configuration: each center must be [x, y, z]");
        c.centers.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
}

}  // namespace cmlab
