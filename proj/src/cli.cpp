#include "cmlab/cli.hpp"

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cmlab/analytic.hpp"
#include "cmlab/corrections.hpp"
#include "cmlab/error.hpp"
#include "cmlab/montecarlo.hpp"
#include "cmlab/parallel.hpp"
#include "cmlab/run_config.hpp"

namespace cmlab {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::string> out;
    bool dump_field = false;
    std::optional<double> h;
};

/// Collects artifacts, writes them and the manifest listing their hashes.
class Artifacts {
public:
    Artifacts(fs::path dir, std::ostream& log) : dir_(std::move(dir)), log_(log) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec || !fs::is_directory(dir_))
            throw Error(ErrorCode::invalid_argument, "cannot create output directory " + dir_.string());
    }

    void write(const std::string& name, const std::string& bytes) {
        const fs::path p = dir_ / name;
        std::ofstream f(p, std::ios::binary);
        f << bytes;
        if (!f) throw Error(ErrorCode::invalid_argument, "cannot write " + p.string());
        entries_.push_back({{"file", name}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
        log_ << "wrote " << p.string() << '\n';
    }

    void manifest(const std::string& subcommand, const RunConfig& cfg, const Flags& flags, const std::string& config_text,
                  std::optional<std::uint64_t> seed) {
        ojson m;
        m["subcommand"] = subcommand;
        m["inputs"] = {{"config_path", flags.config_path},
                       {"config_sha256", flags.config_path.empty() ? "" : sha256_hex(config_text)}};
        m["config"] = serialize_run_config(cfg);
        m["seed"] = seed ? ojson(*seed) : ojson(nullptr);
        m["outputs"] = entries_;
        std::ofstream f(dir_ / "manifest.json", std::ios::binary);
        f << m.dump(2) << '\n';
    }

private:
    fs::path dir_;
    std::ostream& log_;
    ojson entries_ = ojson::array();
};

ojson norms_json(const NormReport& r) {
    return {{"l2", r.l2}, {"h1_seminorm", r.h1_seminorm}, {"h1", r.h1}, {"linf", r.linf}};
}

InclusionConfiguration build_configuration(const RunConfig& cfg) {
    if (!cfg.configuration) throw Error(ErrorCode::invalid_argument, "this subcommand needs a configuration block");
    const auto& b = *cfg.configuration;
    if (b.centers) {
        InclusionConfiguration c{b.epsilon, *b.centers, b.seed};
        validate_configuration(c, cfg.domain);
        return c;
    }
    std::size_t n = 0;
    if (b.n) n = *b.n;
    else if (b.beta_bar) n = count_for_volume_fraction(cfg.domain, *b.beta_bar, b.epsilon);
    else throw Error(ErrorCode::invalid_argument, "configuration needs one of n, beta_bar, centers");
    return sample_configuration(cfg.domain, b.epsilon, n, b.seed);
}

std::string slopes_json(const SlopeReport& r) {
    ojson j;
    for (const auto& [q, s] : r.slopes) {
        const auto it = std::find_if(r.rows.begin(), r.rows.end(), [&](const SlopeRow& row) { return row.quantity == q; });
        j[q] = {{"fitted_slope", s},
                {"expected_slope", it->expected_slope},
                {"tolerance", it->tolerance},
                {"within", r.within(q)}};
    }
    return ojson({{"slopes", j}}).dump(2) + '\n';
}

std::string csv(const SlopeReport& r) {
    std::ostringstream os;
    write_slope_csv(os, r);
    return os.str();
}

int run(const std::string& sub, const Flags& flags, std::ostream& out, std::ostream& err) {
    std::string text;
    RunConfig cfg;
    if (!flags.config_path.empty()) {
        std::ifstream f(flags.config_path, std::ios::binary);
        if (!f) throw Error(ErrorCode::config_parse, "cannot read " + flags.config_path);
        std::ostringstream ss;
        ss << f.rdbuf();
        text = ss.str();
        cfg = parse_run_config(text);
    }
    if (flags.out) cfg.output.directory = *flags.out;
    if (flags.dump_field) cfg.output.dump_field = true;
    if (flags.h) {
        if (!(*flags.h > 0.0)) throw Error(ErrorCode::invalid_argument, "--h must be positive");
        cfg.discretization.h = *flags.h;
    }
    const std::size_t workers = flags.workers.value_or(default_workers());
    const SolverOptions solver = cfg.discretization.solver();
    const double h = cfg.discretization.h;
    std::optional<std::uint64_t> seed;

    const auto seeded = [&](auto& block) {
        if (flags.seed) block.seed = *flags.seed;
        seed = block.seed;
    };

    Artifacts art(cfg.output.directory, err);
    err << "cmlab " << sub << ": h = " << h << ", workers = " << workers << '\n';

    if (sub == "sample") {
        if (!cfg.configuration) throw Error(ErrorCode::invalid_argument, "sample needs a configuration block");
        seeded(*cfg.configuration);
        const InclusionConfiguration c = build_configuration(cfg);
        nlohmann::json cj = c;
        art.write("configuration.json", cj.dump(2) + '\n');
        const auto regime = make_dilute_regime(cfg.domain, c.epsilon, c.size(), 1.0);
        const auto clusters = cluster_decomposition(c);
        ojson hist;
        for (const auto& [k, v] : clusters.size_histogram) hist[std::to_string(k)] = v;
        ojson s{{"N", c.size()},
                {"epsilon", c.epsilon},
                {"seed", c.seed},
                {"beta_bar", global_volume_fraction(c, cfg.domain)},
                {"admissible", is_admissible(c, cfg.domain)},
                {"dilute_window", regime.within_window()},
                {"regime", regime.diagnostic()},
                {"cluster_sizes", hist}};
        art.write("summary.json", s.dump(2) + '\n');
        out << s.dump(2) << '\n';
    } else if (sub == "solve") {
        const auto geo = GridGeometry::build(cfg.domain, h);
        SolveOutput s;
        if (cfg.configuration) {
            seeded(*cfg.configuration);
            const InclusionConfiguration c = build_configuration(cfg);
            nlohmann::json cj = c;
            art.write("configuration.json", cj.dump(2) + '\n');
            s = solve_with_inclusions(geo, c, solver);
        } else {
            s = solve_background(geo, solver);
        }
        ojson j{{"C_n", s.inclusion_constants},
                {"energy", s.dirichlet_energy},
                {"flux_residuals", s.flux_residuals},
                {"iterations", s.iterations},
                {"residual", s.residual},
                {"unknowns", s.stats.unknown_count},
                {"nonzeros", s.stats.nonzeros},
                {"norms", norms_json(norms(s.field))}};
        art.write("solve.json", j.dump(2) + '\n');
        if (cfg.output.dump_field) {
            std::ostringstream os;
            write_field(os, s.field);
            art.write("field.txt", os.str());
        }
        out << j.dump(2) << '\n';
    } else if (sub == "single") {
        const SingleBlock b = cfg.single.value_or(SingleBlock{});
        RemainderStudyOptions o;
        o.h_ratio = b.h_ratio;
        o.far_field_samples = b.far_field_samples;
        o.solver = solver;
        const SlopeReport r = remainder_scaling_study(cfg.domain, b.eta, b.epsilons, o);
        art.write("single_slopes.csv", csv(r));
        art.write("single.json", slopes_json(r));
        out << slopes_json(r);
    } else if (sub == "pair") {
        const PairBlock b = cfg.pair.value_or(PairBlock{});
        const SlopeReport r = pair_scaling_study(cfg.domain, b.epsilon, b.separations, h, b.center, b.axis, solver);
        art.write("pair_slopes.csv", csv(r));
        art.write("pair.json", slopes_json(r));
        out << slopes_json(r);
    } else if (sub == "superpose") {
        if (!cfg.configuration) throw Error(ErrorCode::invalid_argument, "superpose needs a configuration block");
        seeded(*cfg.configuration);
        const InclusionConfiguration c = build_configuration(cfg);
        const SuperposeBlock b = cfg.superpose.value_or(SuperposeBlock{});
        SuperpositionOptions o;
        o.pair_cutoff = b.pair_cutoff;
        o.pair_budget = b.pair_budget;
        o.workers = workers;
        o.solver = solver;
        const auto levels = superposition_levels(cfg.domain, c, h, b.order, o);
        ojson j = ojson::array();
        for (const auto& l : levels)
            j.push_back({{"order", l.order}, {"pairs_used", l.pairs_used}, {"residual", norms_json(l.residual)}});
        art.write("superpose.json", j.dump(2) + '\n');
        out << j.dump(2) << '\n';
    } else if (sub == "capacity") {
        ojson j;
        if (cfg.configuration) {
            seeded(*cfg.configuration);
            const InclusionConfiguration c = build_configuration(cfg);
            const CapacityResult r = capacity(cfg.domain, c, h, solver);
            j["capacity"] = r.value;
            j["delta_list"] = r.delta_list;
        }
        if (cfg.capacity && !cfg.capacity->deltas.empty()) {
            const auto rep = capacity_boundary_study(cfg.domain, cfg.capacity->epsilon, cfg.capacity->deltas, h, solver);
            std::ostringstream os;
            os << std::setprecision(17) << "delta,capacity,compensated\n";
            for (const auto& r : rep.rows) os << r.delta << ',' << r.capacity << ',' << r.compensated << '\n';
            art.write("capacity_boundary.csv", os.str());
            j["boundary_band"] = rep.band;
        }
        if (j.empty()) throw Error(ErrorCode::invalid_argument, "capacity needs a configuration or capacity.deltas");
        art.write("capacity.json", j.dump(2) + '\n');
        out << j.dump(2) << '\n';
    } else if (sub == "green-check") {
        GreenCheckBlock b = cfg.green_check.value_or(GreenCheckBlock{});
        seeded(b);
        cfg.green_check = b;
        BoundCheckOptions o;
        o.sources = b.sources;
        o.seed = b.seed;
        o.min_separation = b.min_separation;
        o.source_clearance = b.source_clearance;
        o.solver = solver;
        const auto rows = greens_bound_check(cfg.domain, h, b.sample_pairs, b.max_order, o);
        std::ostringstream os;
        os << std::setprecision(17) << "order,sup,pair_count,h\n";
        for (const auto& r : rows) os << r.order << ',' << r.sup << ',' << r.pair_count << ',' << r.h << '\n';
        art.write("green.csv", os.str());
        out << os.str();
    } else if (sub == "linearized") {
        LinearizedBlock b = cfg.linearized.value_or(LinearizedBlock{});
        seeded(b);
        cfg.linearized = b;
        std::size_t n = 0;
        if (b.n) n = *b.n;
        else n = count_for_volume_fraction(cfg.domain, b.beta_bar.value_or(0.01), b.epsilon);
        LinearizedOptions o;
        o.seed_base = b.seed;
        o.workers = workers;
        o.groups = b.groups;
        o.analytic_phi1 = b.analytic;
        o.solver = solver;
        const auto r = linearized_check(cfg.domain, b.epsilon, n, b.samples, h, o);
        ojson j{{"epsilon", r.epsilon}, {"N", r.n_inclusions}, {"samples", r.samples},   {"h", r.h},
                {"analytic", r.analytic}, {"deviation", r.deviation}, {"reference", r.reference},
                {"ratio", r.ratio},       {"stderr_ratio", r.stderr_ratio}};
        art.write("linearized.json", j.dump(2) + '\n');
        out << j.dump(2) << '\n';
    } else if (sub == "study") {
        StudyBlock b = cfg.study.value_or(StudyBlock{});
        seeded(b);
        if (flags.h) b.fixed_h = *flags.h;
        cfg.study = b;
        StudyOptions o;
        o.epsilon_coefficient = b.epsilon_coefficient;
        o.epsilon_exponent = b.epsilon_exponent;
        o.h_ratio = b.h_ratio;
        o.fixed_h = b.fixed_h;
        o.samples = b.samples;
        o.min_samples = b.min_samples;
        o.seed = b.seed;
        o.workers = workers;
        o.groups = b.groups;
        o.C_regime = b.C_regime;
        o.solver = solver;
        const StudyReport r = run_study(cfg.domain, b.beta_bars, o);
        std::ostringstream os;
        write_study_csv(os, r);
        art.write("study.csv", os.str());
        art.write("study.json", study_summary_json(r) + '\n');
        out << os.str();
        if (!r.complete) {
            art.manifest(sub, cfg, flags, text, seed);
            err << "error: study incomplete: " << r.failure << '\n';
            return is_numerical(r.failure_code) ? 2 : 1;
        }
    }
    art.manifest(sub, cfg, flags, text, seed);
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    static const std::vector<std::string> names{"sample",    "solve",       "single",     "pair", "superpose",
                                                "capacity",  "green-check", "linearized", "study"};
    CLI::App app{"Perfectly conducting random spheres: solvers, corrections and ensemble studies", "cmlab"};
    app.require_subcommand(1);
    Flags flags;
    std::string chosen;
    for (const auto& name : names) {
        auto* sub = app.add_subcommand(name);
        sub->set_help_flag("--help", "print this help and exit");
        sub->add_option("--config", flags.config_path, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--seed", flags.seed, "override the seed of the relevant block");
        sub->add_option("--workers", flags.workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", flags.out, "output directory");
        sub->add_flag("--dump-field", flags.dump_field, "write the solution in the text field format");
        sub->add_option("--h", flags.h, "grid spacing override");
        sub->callback([&chosen, name] { chosen = name; });
    }
    if (argc > 1 && argv[1][0] != '-' && std::find(names.begin(), names.end(), argv[1]) == names.end()) {
        err << "error: unknown-subcommand '" << argv[1] << "'\n";
        return 1;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 1;
    }
    try {
        return run(chosen, flags, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return is_numerical(e.code()) ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace cmlab
