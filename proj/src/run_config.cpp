#include "cmlab/run_config.hpp"

#include <set>
#include <sstream>

#include "cmlab/error.hpp"

namespace cmlab {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::config_parse, path + ": " + what);
}

/// Reads keys of one JSON object and rejects any key that was never asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    template <class T>
    T get(const char* key, T fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        return convert<T>(j_.at(key), child(key));
    }

    template <class T>
    std::optional<T> optional(const char* key) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
        return convert<T>(j_.at(key), child(key));
    }

    template <class T>
    T require(const char* key) {
        seen_.insert(key);
        if (!j_.contains(key)) fail(child(key), "missing required field");
        return convert<T>(j_.at(key), child(key));
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail(child(it.key()), "unknown key");
    }

private:
    template <class T>
    static T convert(const json& v, const std::string& path) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) fail(path, "expected a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) fail(path, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_same_v<T, Vec3>) {
            if (!v.is_array() || v.size() != 3) fail(path, "expected [x, y, z]");
            Vec3 p;
            p.x = convert<double>(v[0], path + "[0]");
            p.y = convert<double>(v[1], path + "[1]");
            p.z = convert<double>(v[2], path + "[2]");
            return p;
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) fail(path, "expected a number");
            return v.get<double>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) fail(path, "expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
                    fail(path, "expected a non-negative integer");
            }
            return v.get<T>();
        } else {
            if (!v.is_array()) fail(path, "expected an array");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i)
                out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
            return out;
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

ojson vec(const Vec3& v) { return ojson::array({v.x, v.y, v.z}); }

void positive(double v, const std::string& path) {
    if (!(v > 0.0)) fail(path, "must be positive");
}

Expression expression(const std::string& src, const std::string& path) {
    try {
        return Expression::parse(src);
    } catch (const std::exception& e) {
        fail(path, e.what());
    }
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace

SolverOptions DiscretizationBlock::solver() const {
    SolverOptions o;
    o.tolerance = tolerance;
    o.preconditioner =
        preconditioner == "jacobi" ? SolverOptions::Preconditioner::jacobi : SolverOptions::Preconditioner::amg;
    o.inclusion_mode =
        inclusion_mode == "penalty" ? SolverOptions::InclusionMode::penalty : SolverOptions::InclusionMode::merge;
    o.min_fraction = min_fraction;
    o.max_iterations = max_iterations;
    return o;
}

ojson domain_to_json(const DomainSpec& d) {
    ojson j;
    if (d.shape == DomainSpec::Shape::ball) {
        j["shape"] = "ball";
        j["center"] = vec(d.center);
        j["radius"] = d.radius;
    } else {
        j["shape"] = "box";
        j["center"] = vec(d.center);
        j["extents"] = vec(d.extents);
    }
    j["boundary_data"] = d.boundary_data.source();
    j["conductivity"] = d.conductivity.source();
    j["lambda"] = d.lambda_bound;
    j["Lambda"] = d.Lambda_bound;
    return j;
}

DomainSpec domain_from_json(const json& j) {
    Section s(j, "domain");
    const auto shape = s.get<std::string>("shape", "ball");
    const Expression f = expression(s.get<std::string>("boundary_data", "x"), s.child("boundary_data"));
    const Expression a = expression(s.get<std::string>("conductivity", "1"), s.child("conductivity"));
    const double lambda = s.get<double>("lambda", 1.0);
    const double Lambda = s.get<double>("Lambda", 1.0);
    DomainSpec d;
    try {
        if (shape == "ball") {
            d = DomainSpec::ball(s.get<double>("radius", 1.0), s.get<Vec3>("center", {}), f, a, lambda, Lambda);
        } else if (shape == "box") {
            const bool corners = s.has("lower") || s.has("upper");
            if (corners) {
                if (s.has("center") || s.has("extents")) fail("domain", "give either lower/upper or center/extents");
                d = DomainSpec::box(s.require<Vec3>("lower"), s.require<Vec3>("upper"), f, a, lambda, Lambda);
            } else {
                const Vec3 c = s.get<Vec3>("center", {0.5, 0.5, 0.5});
                const Vec3 e = s.get<Vec3>("extents", {1, 1, 1});
                d = DomainSpec::box(c - 0.5 * e, c + 0.5 * e, f, a, lambda, Lambda);
                d.center = c;
                d.extents = e;
            }
        } else {
            fail(s.child("shape"), "expected \"ball\" or \"box\"");
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::config_parse) throw;
        fail("domain", e.what());
    }
    s.finish();
    return d;
}

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_column(text, e.byte);
        std::ostringstream os;
        os << "line " << line << ", column " << col << ": " << e.what();
        throw Error(ErrorCode::config_parse, os.str());
    }
    Section top(j, "");
    RunConfig c;
    if (top.has("domain")) c.domain = domain_from_json(top.raw("domain"));

    if (top.has("discretization")) {
        Section s(top.raw("discretization"), "discretization");
        auto& d = c.discretization;
        d.h = s.get("h", d.h);
        d.tolerance = s.get("tolerance", d.tolerance);
        d.preconditioner = s.get("preconditioner", d.preconditioner);
        d.inclusion_mode = s.get("inclusion_mode", d.inclusion_mode);
        d.min_fraction = s.get("min_fraction", d.min_fraction);
        d.max_iterations = s.get("max_iterations", d.max_iterations);
        s.finish();
        positive(d.h, "discretization.h");
        positive(d.tolerance, "discretization.tolerance");
        positive(d.min_fraction, "discretization.min_fraction");
        if (d.preconditioner != "amg" && d.preconditioner != "jacobi")
            fail("discretization.preconditioner", "expected \"amg\" or \"jacobi\"");
        if (d.inclusion_mode != "merge" && d.inclusion_mode != "penalty")
            fail("discretization.inclusion_mode", "expected \"merge\" or \"penalty\"");
    }
    if (top.has("configuration")) {
        Section s(top.raw("configuration"), "configuration");
        ConfigurationBlock b;
        b.epsilon = s.require<double>("epsilon");
        b.n = s.optional<std::size_t>("n");
        b.beta_bar = s.optional<double>("beta_bar");
        b.centers = s.optional<std::vector<Vec3>>("centers");
        b.seed = s.get("seed", b.seed);
        s.finish();
        positive(b.epsilon, "configuration.epsilon");
        const int given = int(b.n.has_value()) + int(b.beta_bar.has_value()) + int(b.centers.has_value());
        if (given > 1) fail("configuration", "give at most one of n, beta_bar, centers");
        if (b.beta_bar) positive(*b.beta_bar, "configuration.beta_bar");
        c.configuration = b;
    }
    if (top.has("single")) {
        Section s(top.raw("single"), "single");
        SingleBlock b;
        b.eta = s.get("eta", b.eta);
        b.epsilons = s.get("epsilons", b.epsilons);
        b.h_ratio = s.get("h_ratio", b.h_ratio);
        b.far_field_samples = s.get("far_field_samples", b.far_field_samples);
        s.finish();
        for (double e : b.epsilons) positive(e, "single.epsilons");
        positive(b.h_ratio, "single.h_ratio");
        c.single = b;
    }
    if (top.has("pair")) {
        Section s(top.raw("pair"), "pair");
        PairBlock b;
        b.epsilon = s.get("epsilon", b.epsilon);
        b.separations = s.get("separations", b.separations);
        b.center = s.get("center", b.center);
        b.axis = s.get("axis", b.axis);
        s.finish();
        positive(b.epsilon, "pair.epsilon");
        positive(norm(b.axis), "pair.axis");
        c.pair = b;
    }
    if (top.has("superpose")) {
        Section s(top.raw("superpose"), "superpose");
        SuperposeBlock b;
        b.order = s.get("order", b.order);
        b.pair_cutoff = s.get("pair_cutoff", b.pair_cutoff);
        b.pair_budget = s.get("pair_budget", b.pair_budget);
        s.finish();
        if (b.order < 0 || b.order > 2) fail("superpose.order", "must be 0, 1 or 2");
        positive(b.pair_cutoff, "superpose.pair_cutoff");
        c.superpose = b;
    }
    if (top.has("capacity")) {
        Section s(top.raw("capacity"), "capacity");
        CapacityBlock b;
        b.deltas = s.get("deltas", b.deltas);
        b.epsilon = s.get("epsilon", b.epsilon);
        s.finish();
        if (!b.deltas.empty()) positive(b.epsilon, "capacity.epsilon");
        c.capacity = b;
    }
    if (top.has("green_check")) {
        Section s(top.raw("green_check"), "green_check");
        GreenCheckBlock b;
        b.sample_pairs = s.get("sample_pairs", b.sample_pairs);
        b.max_order = s.get("max_order", b.max_order);
        b.sources = s.get("sources", b.sources);
        b.seed = s.get("seed", b.seed);
        b.min_separation = s.get("min_separation", b.min_separation);
        b.source_clearance = s.get("source_clearance", b.source_clearance);
        s.finish();
        if (b.max_order < 0 || b.max_order > 2) fail("green_check.max_order", "must be 0, 1 or 2");
        c.green_check = b;
    }
    if (top.has("linearized")) {
        Section s(top.raw("linearized"), "linearized");
        LinearizedBlock b;
        b.epsilon = s.get("epsilon", b.epsilon);
        b.beta_bar = s.optional<double>("beta_bar");
        b.n = s.optional<std::size_t>("n");
        b.samples = s.get("samples", b.samples);
        b.seed = s.get("seed", b.seed);
        b.groups = s.get("groups", b.groups);
        b.analytic = s.get("analytic", b.analytic);
        s.finish();
        positive(b.epsilon, "linearized.epsilon");
        if (b.beta_bar && b.n) fail("linearized", "give at most one of n, beta_bar");
        c.linearized = b;
    }
    if (top.has("study")) {
        Section s(top.raw("study"), "study");
        StudyBlock b;
        b.beta_bars = s.get("beta_bars", b.beta_bars);
        b.epsilon_coefficient = s.get("epsilon_coefficient", b.epsilon_coefficient);
        b.epsilon_exponent = s.get("epsilon_exponent", b.epsilon_exponent);
        b.h_ratio = s.get("h_ratio", b.h_ratio);
        b.fixed_h = s.get("fixed_h", b.fixed_h);
        b.samples = s.get("samples", b.samples);
        b.min_samples = s.get("min_samples", b.min_samples);
        b.seed = s.get("seed", b.seed);
        b.groups = s.get("groups", b.groups);
        b.C_regime = s.get("C_regime", b.C_regime);
        s.finish();
        positive(b.epsilon_coefficient, "study.epsilon_coefficient");
        positive(b.h_ratio, "study.h_ratio");
        positive(b.C_regime, "study.C_regime");
        c.study = b;
    }
    if (top.has("output")) {
        Section s(top.raw("output"), "output");
        c.output.directory = s.get("directory", c.output.directory);
        c.output.dump_field = s.get("dump_field", c.output.dump_field);
        s.finish();
        if (c.output.directory.empty()) fail("output.directory", "must not be empty");
    }
    top.finish();
    return c;
}

ojson serialize_run_config(const RunConfig& c) {
    ojson j;
    j["domain"] = domain_to_json(c.domain);
    const auto& d = c.discretization;
    j["discretization"] = {{"h", d.h},
                           {"tolerance", d.tolerance},
                           {"preconditioner", d.preconditioner},
                           {"inclusion_mode", d.inclusion_mode},
                           {"min_fraction", d.min_fraction},
                           {"max_iterations", d.max_iterations}};
    if (c.configuration) {
        const auto& b = *c.configuration;
        ojson s;
        s["epsilon"] = b.epsilon;
        if (b.n) s["n"] = *b.n;
        if (b.beta_bar) s["beta_bar"] = *b.beta_bar;
        if (b.centers) {
            s["centers"] = ojson::array();
            for (const auto& p : *b.centers) s["centers"].push_back(vec(p));
        }
        s["seed"] = b.seed;
        j["configuration"] = s;
    }
    if (c.single)
        j["single"] = {{"eta", vec(c.single->eta)},
                       {"epsilons", c.single->epsilons},
                       {"h_ratio", c.single->h_ratio},
                       {"far_field_samples", c.single->far_field_samples}};
    if (c.pair)
        j["pair"] = {{"epsilon", c.pair->epsilon},
                     {"separations", c.pair->separations},
                     {"center", vec(c.pair->center)},
                     {"axis", vec(c.pair->axis)}};
    if (c.superpose)
        j["superpose"] = {{"order", c.superpose->order},
                          {"pair_cutoff", c.superpose->pair_cutoff},
                          {"pair_budget", c.superpose->pair_budget}};
    if (c.capacity) j["capacity"] = {{"deltas", c.capacity->deltas}, {"epsilon", c.capacity->epsilon}};
    if (c.green_check) {
        const auto& b = *c.green_check;
        j["green_check"] = {{"sample_pairs", b.sample_pairs},     {"max_order", b.max_order},
                            {"sources", b.sources},               {"seed", b.seed},
                            {"min_separation", b.min_separation}, {"source_clearance", b.source_clearance}};
    }
    if (c.linearized) {
        const auto& b = *c.linearized;
        ojson s;
        s["epsilon"] = b.epsilon;
        if (b.beta_bar) s["beta_bar"] = *b.beta_bar;
        if (b.n) s["n"] = *b.n;
        s["samples"] = b.samples;
        s["seed"] = b.seed;
        s["groups"] = b.groups;
        s["analytic"] = b.analytic;
        j["linearized"] = s;
    }
    if (c.study) {
        const auto& b = *c.study;
        j["study"] = {{"beta_bars", b.beta_bars},
                      {"epsilon_coefficient", b.epsilon_coefficient},
                      {"epsilon_exponent", b.epsilon_exponent},
                      {"h_ratio", b.h_ratio},
                      {"fixed_h", b.fixed_h},
                      {"samples", b.samples},
                      {"min_samples", b.min_samples},
                      {"seed", b.seed},
                      {"groups", b.groups},
                      {"C_regime", b.C_regime}};
    }
    j["output"] = {{"directory", c.output.directory}, {"dump_field", c.output.dump_field}};
    return j;
}

}  // namespace cmlab
