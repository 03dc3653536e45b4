#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "mfdg/cli.hpp"

using namespace mfdg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "mfdg_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kScenario = R"(
dim = 1
horizon = 0.4
grid_u = -1 0 1
grid_v = -0.5 0 0.5
dynamics = split_linear
drift = 0
payoff = w2_to_target
target = 0.5 : 1
constants_c0 = 1.5
constants_l = 0
omega_f = zero
omega_g = linear 1.0
)";

}  // namespace

TEST_CASE("cmd w2") {
    auto dir = temp_dir("w2");
    auto m1 = EmpiricalMeasure::uniform({wrap({0.0}), wrap({0.5})});
    auto m2 = EmpiricalMeasure::uniform({wrap({0.2}), wrap({0.9})});
    write_file(dir / "m1.txt", measure_to_text(m1));
    write_file(dir / "m2.txt", measure_to_text(m2));

    CHECK(cli::run({"w2", (dir / "m1.txt").string(), (dir / "m1.txt").string()}) == cli::kOk);
    CHECK(cli::run({"w2", (dir / "m1.txt").string(), (dir / "m2.txt").string()}) == cli::kOk);

    // dimension mismatch is a usage error
    auto m3 = EmpiricalMeasure::dirac(wrap({0.1, 0.2}));
    write_file(dir / "m3.txt", measure_to_text(m3));
    CHECK(cli::run({"w2", (dir / "m1.txt").string(), (dir / "m3.txt").string()}) == cli::kUsage);
    CHECK(cli::run({"w2", (dir / "missing.txt").string(), (dir / "m1.txt").string()}) ==
          cli::kUsage);
}

TEST_CASE("cmd simulate: translation, determinism, step halving") {
    auto dir = temp_dir("simulate");
    write_file(dir / "scenario.cfg", kScenario);
    write_file(dir / "m0.txt", measure_to_text(EmpiricalMeasure::dirac(wrap({0.0}))));

    auto run_sim = [&](const std::string& out) {
        return cli::run({"simulate", "--scenario", (dir / "scenario.cfg").string(), "--initial",
                         (dir / "m0.txt").string(), "--cells", "2", "--step", "0.05",
                         "--strategy-u", "2", "--opponent-v", "2", "--seed", "42", "--out",
                         (dir / out).string(), "--step-halving"});
    };
    CHECK(run_sim("a") == cli::kOk);
    CHECK(run_sim("b") == cli::kOk);

    // identical seeds produce byte-identical artifacts
    CHECK(slurp(dir / "a" / "trace.csv") == slurp(dir / "b" / "trace.csv"));
    CHECK(slurp(dir / "a" / "summary.json") == slurp(dir / "b" / "summary.json"));

    auto summary = nlohmann::json::parse(slurp(dir / "a" / "summary.json"));
    // terminal barycenter displaced by velocity * T = 1.5 * 0.4 = 0.6;
    // outcome = W2^2(delta_{0.6}, delta_{0.5}) = 0.01
    CHECK(std::abs(summary["outcome"].get<double>() - 0.01) < 1e-9);
    CHECK(summary["flow_lipschitz_ok"].get<bool>());
    CHECK(std::abs(summary["isaacs_max_gap"].get<double>()) < 1e-12);
    CHECK(summary["terminal_w2_step_halving"].get<double>() < 1e-9);  // exact for linear motion
    CHECK(summary["params"]["seed"] == 42);
    CHECK(summary["params"]["engine_version"].get<std::string>() == kEngineVersion);
    CHECK(fs::exists(dir / "a" / "trace_half_step.csv"));

    // config errors exit 2
    write_file(dir / "broken.cfg", "dim = 1\n");
    CHECK(cli::run({"simulate", "--scenario", (dir / "broken.cfg").string()}) == cli::kUsage);
}

TEST_CASE("cmd iterate: summary, gap history, resume") {
    auto dir = temp_dir("iterate");
    write_file(dir / "scenario.cfg", kScenario);
    write_file(dir / "m0.txt",
               measure_to_text(EmpiricalMeasure::uniform({wrap({0.1}), wrap({0.35})})));

    auto args = std::vector<std::string>{
        "iterate",       "--scenario", (dir / "scenario.cfg").string(),
        "--initial",     (dir / "m0.txt").string(),
        "--cells",       "2",
        "--resolution",  "0.025",
        "--step",        "0.05",
        "--seed",        "7",
        "--out",         (dir / "run").string()};
    CHECK(cli::run(args) == cli::kOk);
    CHECK(fs::exists(dir / "run" / "gap_history.csv"));
    CHECK(fs::exists(dir / "run" / "lower_0.tsv"));
    auto summary = nlohmann::json::parse(slurp(dir / "run" / "summary.json"));
    CHECK(summary["converged"].get<bool>());
    CHECK(summary["root_gap"].get<double>() >= -1e-9);
    CHECK(summary.contains("mixture_gap"));
    CHECK_FALSE(summary["resumed"].get<bool>());

    // resume: reload the persisted tables and report the same roots
    auto resume_args = args;
    resume_args.push_back("--resume");
    CHECK(cli::run(resume_args) == cli::kOk);
    auto resumed = nlohmann::json::parse(slurp(dir / "run" / "summary.json"));
    CHECK(resumed["resumed"].get<bool>());
    CHECK(resumed["root_lower"].get<double>() ==
          doctest::Approx(summary["root_lower"].get<double>()).epsilon(1e-15));
    CHECK(resumed["root_upper"].get<double>() ==
          doctest::Approx(summary["root_upper"].get<double>()).epsilon(1e-15));
}

TEST_CASE("cmd rollout and gamma") {
    auto dir = temp_dir("rollout");
    write_file(dir / "scenario.cfg", kScenario);
    write_file(dir / "m0.txt", measure_to_text(EmpiricalMeasure::dirac(wrap({0.1}))));

    CHECK(cli::run({"rollout", "--scenario", (dir / "scenario.cfg").string(), "--initial",
                    (dir / "m0.txt").string(), "--cells", "2", "--resolution", "0.025", "--step",
                    "0.05", "--eps", "0.2", "--seed", "3", "--out",
                    (dir / "ro").string()}) == cli::kOk);
    auto summary = nlohmann::json::parse(slurp(dir / "ro" / "summary.json"));
    CHECK(summary["search_exhaustive"].get<bool>());
    // extremal-shift guarantee at the root
    CHECK(summary["j_estimate"].get<double>() <=
          summary["guarantee_bound"].get<double>() + 1e-9);
    CHECK(fs::exists(dir / "ro" / "trace.csv"));

    // second-player side: upper table, mirrored guarantee
    CHECK(cli::run({"rollout", "--scenario", (dir / "scenario.cfg").string(), "--initial",
                    (dir / "m0.txt").string(), "--cells", "2", "--resolution", "0.025", "--step",
                    "0.05", "--eps", "0.2", "--player", "second", "--seed", "3", "--out",
                    (dir / "ro2").string()}) == cli::kOk);
    auto summary2 = nlohmann::json::parse(slurp(dir / "ro2" / "summary.json"));
    CHECK(summary2["j_estimate"].get<double>() >=
          summary2["guarantee_bound"].get<double>() - 1e-9);

    // graph cap exhaustion is a resource-cap exit
    CHECK(cli::run({"iterate", "--scenario", (dir / "scenario.cfg").string(), "--particles", "2",
                    "--cells", "3", "--resolution", "0.025", "--step", "0.05", "--cap", "4"}) ==
          cli::kResourceCap);

    CHECK(cli::run({"gamma", "--scenario", (dir / "scenario.cfg").string(), "--initial",
                    (dir / "m0.txt").string(), "--resolution", "0.025", "--step", "0.05",
                    "--eps", "0.2", "--eps", "0.1", "--grids", "1", "--grids", "2", "--seed",
                    "3", "--out", (dir / "ga").string()}) == cli::kOk);
    auto gsum = nlohmann::json::parse(slurp(dir / "ga" / "summary.json"));
    CHECK(gsum["gamma1_upper_estimate"].get<double>() >=
          gsum["gamma2_lower_estimate"].get<double>() - 1e-9);
    auto csv = slurp(dir / "ga" / "gamma.csv");
    CHECK(csv.find("gamma1") != std::string::npos);
    CHECK(csv.find("gamma2") != std::string::npos);

    // heuristic mode is honestly labeled in the table
    CHECK(cli::run({"gamma", "--scenario", (dir / "scenario.cfg").string(), "--initial",
                    (dir / "m0.txt").string(), "--resolution", "0.025", "--step", "0.05",
                    "--eps", "0.2", "--grids", "2", "--search", "heuristic", "--seed", "3",
                    "--out", (dir / "gah").string()}) == cli::kOk);
    auto hcsv = slurp(dir / "gah" / "gamma.csv");
    CHECK(hcsv.find("heuristic") != std::string::npos);

    // discretized minimax sandwich at matched discretization: the exhaustive
    // gamma estimates bracket the converged table roots
    CHECK(cli::run({"iterate", "--scenario", (dir / "scenario.cfg").string(), "--initial",
                    (dir / "m0.txt").string(), "--cells", "2", "--resolution", "0.025", "--step",
                    "0.05", "--seed", "3", "--out", (dir / "it").string()}) == cli::kOk);
    auto isum = nlohmann::json::parse(slurp(dir / "it" / "summary.json"));
    CHECK(gsum["gamma1_upper_estimate"].get<double>() >=
          isum["root_lower"].get<double>() - 1e-9);
    CHECK(gsum["gamma2_lower_estimate"].get<double>() <=
          isum["root_upper"].get<double>() + 1e-9);
}

TEST_CASE("cmd verify") {
    auto dir = temp_dir("verify");
    write_file(dir / "scenario.cfg", kScenario);
    write_file(dir / "m0.txt", measure_to_text(EmpiricalMeasure::dirac(wrap({0.1}))));

    // --trials 0 is invalid
    CHECK(cli::run({"verify", "--scenario", (dir / "scenario.cfg").string(), "--trials", "0"}) ==
          cli::kUsage);

    CHECK(cli::run({"verify", "--scenario", (dir / "scenario.cfg").string(), "--initial",
                    (dir / "m0.txt").string(), "--trials", "40", "--step", "0.005", "--cells",
                    "2", "--resolution", "0.025", "--seed", "11", "--suite", "all", "--out",
                    (dir / "ve").string()}) == cli::kOk);
    auto report = nlohmann::json::parse(slurp(dir / "ve" / "verify.json"));
    CHECK(report["total_violations"].get<std::size_t>() == 0);
    CHECK(report["lemma_agent"]["violations"].get<std::size_t>() == 0);
    CHECK(fs::exists(dir / "ve" / "lemma_agent.txt"));

    // the negative-control knob runs (violations may or may not appear)
    int code = cli::run({"verify", "--scenario", (dir / "scenario.cfg").string(), "--initial",
                         (dir / "m0.txt").string(), "--trials", "10", "--step", "0.005",
                         "--cells", "2", "--resolution", "0.025", "--suite", "lemma_agent",
                         "--l-scale", "0.5"});
    CHECK((code == cli::kOk || code == cli::kViolation));
}

TEST_CASE("usage errors") {
    CHECK(cli::run({"no-such-command"}) == cli::kUsage);
    CHECK(cli::run({}) == cli::kUsage);
    CHECK(cli::run({"simulate"}) == cli::kUsage);  // missing --scenario
}
