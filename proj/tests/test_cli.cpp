#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "cmlab/cli.hpp"
#include "cmlab/error.hpp"
#include "cmlab/field.hpp"
#include "cmlab/run_config.hpp"

using namespace cmlab;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "cmlab");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("cmlab_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write(const fs::path& dir, const std::string& name, const std::string& text) {
    const fs::path p = dir / name;
    std::ofstream(p) << text;
    return p;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream f(p);
    return nlohmann::json::parse(f);
}

const char* kSampleConfig = R"({
  "domain": {"shape": "ball", "radius": 1.0, "boundary_data": "x"},
  "discretization": {"h": 0.05},
  "configuration": {"epsilon": 0.2, "n": 3, "seed": 4}
})";

std::string config_parse_message(const std::string& text) {
    try {
        parse_run_config(text);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::config_parse);
        return e.what();
    }
    ADD_FAILURE() << "accepted: " << text;
    return {};
}

}  // namespace

TEST(RunConfig, RoundTripIsIdentity) {
    const std::string text = R"({
      "domain": {"shape": "box", "lower": [0, 0, 0], "upper": [1, 2, 1], "boundary_data": "x + y",
                 "conductivity": "1 + 0.5*x", "lambda": 1.0, "Lambda": 1.5},
      "discretization": {"h": 0.05, "tolerance": 1e-9, "preconditioner": "jacobi"},
      "configuration": {"epsilon": 0.1, "centers": [[0.5, 0.5, 0.5], [0.5, 1.2, 0.5]]},
      "single": {"eta": [0.5, 1, 0.5], "epsilons": [0.2, 0.1, 0.05]},
      "superpose": {"order": 1, "pair_cutoff": 12},
      "study": {"beta_bars": [0.02, 0.01], "samples": 50, "min_samples": 50, "seed": 9},
      "output": {"directory": "somewhere", "dump_field": true}
    })";
    const RunConfig a = parse_run_config(text);
    const auto ja = serialize_run_config(a);
    const RunConfig b = parse_run_config(ja.dump());
    EXPECT_EQ(serialize_run_config(b), ja);
    EXPECT_EQ(b.discretization.preconditioner, "jacobi");
    ASSERT_TRUE(b.configuration && b.configuration->centers);
    EXPECT_EQ(b.configuration->centers->size(), 2u);
    EXPECT_FALSE(b.pair.has_value());
}

TEST(RunConfig, StrictKeysAndTypes) {
    EXPECT_NE(config_parse_message(R"({"domain": {"radus": 1}})").find("domain.radus"), std::string::npos);
    EXPECT_NE(config_parse_message(R"({"discretization": {"h": "small"}})").find("discretization.h"),
              std::string::npos);
    EXPECT_NE(config_parse_message(R"({"discretization": {"tolerance": -1}})").find("tolerance"), std::string::npos);
    config_parse_message(R"({"configuration": {"epsilon": 0.1, "n": 3, "beta_bar": 0.01}})");
    config_parse_message(R"({"stufy": {}})");
}

TEST(RunConfig, SyntaxErrorsNameLineAndColumn) {
    const std::string msg = config_parse_message("{\n  \"domain\": {\n    \"radius\": 1,,\n  }\n}");
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column"), std::string::npos) << msg;
}

TEST(Cli, UnknownSubcommandAndMissingArguments) {
    const auto r = cli({"frobnicate"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("unknown-subcommand"), std::string::npos);
    EXPECT_EQ(cli({}).code, 1);
}

TEST(Cli, BadConfigExitsWithOne) {
    const auto dir = scratch("badcfg");
    const auto cfg = write(dir, "c.json", R"({"domain": {"radus": 1}})");
    const auto r = cli({"sample", "--config", cfg.string(), "--out", (dir / "o").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("domain.radus"), std::string::npos);
}

TEST(Cli, SampleWritesReproducibleManifest) {
    const auto dir = scratch("sample");
    const auto cfg = write(dir, "c.json", kSampleConfig);
    std::vector<nlohmann::json> manifests;
    for (const char* sub : {"a", "b"}) {
        const auto out = dir / sub;
        const auto r = cli({"sample", "--config", cfg.string(), "--seed", "7", "--out", out.string()});
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_TRUE(fs::exists(out / "configuration.json"));
        EXPECT_TRUE(fs::exists(out / "summary.json"));
        const auto m = read_json(out / "manifest.json");
        EXPECT_EQ(m.at("subcommand"), "sample");
        EXPECT_EQ(m.at("seed"), 7);
        EXPECT_EQ(read_json(out / "configuration.json").at("centers").size(), 3u);
        manifests.push_back(m);
    }
    EXPECT_EQ(manifests[0].at("outputs"), manifests[1].at("outputs"));
    EXPECT_EQ(manifests[0].at("inputs").at("config_sha256"), manifests[1].at("inputs").at("config_sha256"));
}

TEST(Cli, SolveDumpsField) {
    const auto dir = scratch("solve");
    const auto cfg = write(dir, "c.json", kSampleConfig);
    const auto r = cli({"solve", "--config", cfg.string(), "--dump-field", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto s = read_json(dir / "solve.json");
    EXPECT_EQ(s.at("C_n").size(), 3u);
    EXPECT_TRUE(s.contains("energy"));
    EXPECT_TRUE(s.contains("flux_residuals"));
    std::ifstream f(dir / "field.txt");
    const FieldDump dump = read_field(f);
    EXPECT_EQ(dump.values.size(), dump.grid.size());
    EXPECT_DOUBLE_EQ(dump.grid.h, 0.05);
}

TEST(Cli, PlacementFailureExitsWithTwo) {
    const auto dir = scratch("crowded");
    const auto cfg = write(dir, "c.json", R"({"configuration": {"epsilon": 0.3, "n": 200, "seed": 1}})");
    const auto r = cli({"sample", "--config", cfg.string(), "--out", dir.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("placement"), std::string::npos) << r.err;
}

TEST(Cli, StudyWritesCsvAndSummary) {
    const auto dir = scratch("study");
    const auto cfg = write(dir, "c.json", R"({
      "study": {"beta_bars": [0.05, 0.05], "epsilon_coefficient": 1.0, "samples": 4, "min_samples": 4, "seed": 3}
    })");
    const auto r = cli({"study", "--config", cfg.string(), "--workers", "2", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream f(dir / "study.csv");
    std::string header, row1, row2;
    std::getline(f, header);
    std::getline(f, row1);
    std::getline(f, row2);
    EXPECT_EQ(header.rfind("beta_bar,epsilon,h,N,samples", 0), 0u);
    EXPECT_EQ(row1, row2);
    EXPECT_EQ(read_json(dir / "study.json").at("rows").size(), 2u);
}
