#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfdg/engine.hpp"
#include "mfdg/pim.hpp"
#include "mfdg/scenario_io.hpp"
#include "mfdg/shift.hpp"
#include "mfdg/version.hpp"

namespace mfdg::cli {

// exit codes: 0 success, 1 property violation, 2 usage/config error,
// 3 resource cap
enum ExitCode { kOk = 0, kViolation = 1, kUsage = 2, kResourceCap = 3 };

namespace detail {

inline std::string hash_hex(const std::string& text) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text)));
    return std::string(buf);
}

struct RunConfig {
    std::string scenario_path;
    std::string initial_path;
    std::size_t particles = 2;
    std::size_t cells = 4;
    double resolution = 0.0125;
    double step = 0.0125;
    std::string search = "exhaustive";
    std::size_t cap = 1000000;
    std::uint64_t seed = 1;
    std::string out_dir;

    Scenario scenario;
    EmpiricalMeasure m0;

    nlohmann::json echo() const {
        nlohmann::json j;
        j["scenario"] = scenario_path;
        j["scenario_hash"] = hash_hex(scenario.source_text);
        j["engine_version"] = kEngineVersion;
        j["seed"] = seed;
        j["particles"] = particles;
        j["cells"] = cells;
        j["resolution"] = resolution;
        j["step"] = step;
        j["search"] = search;
        j["cap"] = cap;
        if (!initial_path.empty()) j["initial"] = initial_path;
        return j;
    }

    std::vector<std::string> csv_header() const {
        return {"scenario_hash=" + hash_hex(scenario.source_text),
                "engine_version=" + std::string(kEngineVersion),
                "seed=" + std::to_string(seed),
                "params=" + echo().dump()};
    }
};

inline void load_run_inputs(RunConfig& rc) {
    rc.scenario = load_scenario(rc.scenario_path);
    if (!rc.initial_path.empty()) {
        std::ifstream in(rc.initial_path);
        if (!in) throw ConfigError("cannot open initial measure '" + rc.initial_path + "'");
        rc.m0 = read_measure(in);
        if (rc.m0.dim() != rc.scenario.dim)
            throw ConfigError("initial measure dimension does not match scenario");
    } else {
        SeedStream ss(rc.seed);
        auto g = ss.stream("initial_measure");
        std::vector<TorusPoint> pts;
        for (std::size_t i = 0; i < rc.particles; ++i) {
            std::vector<double> c(rc.scenario.dim);
            for (auto& x : c) x = uniform01(g);
            pts.push_back(wrap(c));
        }
        rc.m0 = EmpiricalMeasure::uniform(std::move(pts));
    }
}

inline void ensure_out(const RunConfig& rc) {
    if (!rc.out_dir.empty()) std::filesystem::create_directories(rc.out_dir);
}

inline void write_json(const RunConfig& rc, const std::string& name, const nlohmann::json& j) {
    if (rc.out_dir.empty()) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(std::filesystem::path(rc.out_dir) / name);
    out << j.dump(2) << "\n";
}

inline SearchMode search_mode(const std::string& s) {
    if (s == "exhaustive") return SearchMode::Exhaustive;
    if (s == "heuristic") return SearchMode::Heuristic;
    throw ConfigError("--search must be exhaustive or heuristic");
}

inline void add_common(CLI::App* cmd, RunConfig& rc, bool need_scenario = true) {
    auto* opt = cmd->add_option("--scenario", rc.scenario_path, "scenario config file");
    if (need_scenario) opt->required();
    cmd->add_option("--seed", rc.seed, "master seed");
    cmd->add_option("--out", rc.out_dir, "output directory");
    cmd->add_option("--particles", rc.particles, "random initial cloud size");
    cmd->add_option("--initial", rc.initial_path, "initial measure file");
    cmd->add_option("--cells", rc.cells, "partition cells");
    cmd->add_option("--resolution", rc.resolution, "node quantization resolution");
    cmd->add_option("--step", rc.step, "integrator step");
    cmd->add_option("--search", rc.search, "exhaustive|heuristic");
    cmd->add_option("--cap", rc.cap, "enumeration cap");
}

// value table files written/read by `iterate` and `rollout`
inline std::string table_name(bool lower, std::size_t k) {
    return (lower ? std::string("lower_") : std::string("upper_")) + std::to_string(k) + ".tsv";
}

inline void persist_tables(const RunConfig& rc, const ReachableGraph& g,
                           const IterateResult& res) {
    if (rc.out_dir.empty()) return;
    for (std::size_t k = 0; k < res.lower_tables.size(); ++k) {
        std::ofstream out(std::filesystem::path(rc.out_dir) / table_name(true, k));
        save_table(out, g, res.lower_tables[k]);
    }
    for (std::size_t k = 0; k < res.upper_tables.size(); ++k) {
        std::ofstream out(std::filesystem::path(rc.out_dir) / table_name(false, k));
        save_table(out, g, res.upper_tables[k]);
    }
}

}  // namespace detail

// ---- w2 ---------------------------------------------------------------------------

inline int cmd_w2(const std::string& file1, const std::string& file2, bool print_plan) {
    std::ifstream in1(file1), in2(file2);
    if (!in1) {
        std::cerr << "error: cannot open '" << file1 << "'\n";
        return kUsage;
    }
    if (!in2) {
        std::cerr << "error: cannot open '" << file2 << "'\n";
        return kUsage;
    }
    EmpiricalMeasure m1 = read_measure(in1);
    EmpiricalMeasure m2 = read_measure(in2);
    W2Result res = w2_exact(m1, m2);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", res.distance);
    std::cout << buf << "\n";
    if (print_plan) {
        for (const auto& e : res.plan.entries) {
            std::snprintf(buf, sizeof(buf), "%.12g", e.mass);
            std::cout << e.row << " " << e.col << " " << buf << "\n";
        }
    }
    return kOk;
}

// ---- simulate -----------------------------------------------------------------------

inline int cmd_simulate(detail::RunConfig& rc, const std::string& strategy_u,
                        const std::string& opponent_v, bool step_halving) {
    detail::load_run_inputs(rc);
    detail::ensure_out(rc);
    const Scenario& sc = rc.scenario;

    auto parse_atoms_arg = [](const std::string& s, std::size_t grid, std::size_t n) {
        std::vector<std::size_t> atoms(n, 0);
        if (s.empty()) return atoms;
        auto parts = mfdg::detail::split_on(s, ',');
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t a = std::stoul(parts[i % parts.size()]);
            if (a >= grid) throw ConfigError("atom index out of grid");
            atoms[i] = a;
        }
        return atoms;
    };

    TimeGrid grid = TimeGrid::uniform(0.0, sc.horizon, rc.cells);
    FeedbackStrategy strat;
    strat.player = Player::First;
    strat.rule = [&, strategy_u](double, const EmpiricalMeasure& m) {
        return ControlField::constant_pure(
            Player::First, parse_atoms_arg(strategy_u, sc.grid_u.size(), m.size()),
            sc.grid_u.size());
    };
    OpponentRule opp = [&, opponent_v](std::size_t, const EmpiricalMeasure& m) {
        return parse_atoms_arg(opponent_v, sc.grid_v.size(), m.size());
    };

    auto run_once = [&](double step) { return rollout_upper(sc, 0.0, rc.m0, strat, grid, opp, step); };
    RolloutRecord rec = run_once(rc.step);

    // flow Lipschitz check against the declared/estimated C0
    ScenarioConstants cst = constants_or_estimate(sc, 2000, rc.seed);
    double max_ratio = 0.0;
    for (const auto& flow : rec.cell_flows)
        for (std::size_t i = 0; i + 1 < flow.time_grid.size(); ++i) {
            double dt = flow.time_grid[i + 1] - flow.time_grid[i];
            if (dt <= 0.0) continue;
            double d = w2_distance(flow.measures[i], flow.measures[i + 1]);
            max_ratio = std::max(max_ratio, d / dt / std::max(cst.C0, 1e-12));
        }

    IsaacsReport isaacs = isaacs_check_sampled(sc, 64, rc.seed);

    nlohmann::json summary;
    summary["params"] = rc.echo();
    summary["outcome"] = rec.outcome;
    summary["flow_lipschitz_ratio"] = max_ratio;  // <= 1 + integrator slack when compliant
    summary["flow_lipschitz_ok"] = max_ratio <= 1.0 + 10.0 * rc.step;
    summary["isaacs_max_gap"] = isaacs.max_gap;

    if (step_halving) {
        RolloutRecord rec2 = run_once(rc.step / 2.0);
        summary["terminal_w2_step_halving"] = w2_distance(rec.terminal(), rec2.terminal());
        if (!rc.out_dir.empty()) {
            std::ofstream tr2(std::filesystem::path(rc.out_dir) / "trace_half_step.csv");
            write_rollout_csv(tr2, rec2, rc.csv_header());
        }
    }
    if (!rc.out_dir.empty()) {
        std::ofstream tr(std::filesystem::path(rc.out_dir) / "trace.csv");
        write_rollout_csv(tr, rec, rc.csv_header());
    }
    detail::write_json(rc, "summary.json", summary);
    return kOk;
}

// ---- iterate ------------------------------------------------------------------------

inline int cmd_iterate(detail::RunConfig& rc, double tol, std::size_t max_k,
                       std::size_t mixture_probes, bool resume) {
    detail::load_run_inputs(rc);
    detail::ensure_out(rc);
    const Scenario& sc = rc.scenario;
    TimeGrid grid = TimeGrid::uniform(0.0, sc.horizon, rc.cells);
    ReachableGraph g = build_graph(sc, 0.0, rc.m0, grid, rc.resolution, rc.cap, rc.step);

    PimOptions opts;
    opts.resolution = rc.resolution;
    opts.step = rc.step;
    opts.enum_cap = rc.cap;
    opts.tol = tol;
    opts.max_k = max_k;
    opts.mixture_probes = mixture_probes;
    opts.seed = rc.seed;

    nlohmann::json summary;
    summary["params"] = rc.echo();
    summary["layer_sizes"] = g.layer_sizes();
    summary["node_count"] = g.node_count();

    if (resume && !rc.out_dir.empty()) {
        // reload the persisted final tables instead of recomputing
        namespace fs = std::filesystem;
        std::size_t k = 0;
        while (fs::exists(fs::path(rc.out_dir) / detail::table_name(true, k + 1))) ++k;
        fs::path lo_path = fs::path(rc.out_dir) / detail::table_name(true, k);
        fs::path up_path = fs::path(rc.out_dir) / detail::table_name(false, k);
        if (fs::exists(lo_path) && fs::exists(up_path)) {
            std::ifstream lo_in(lo_path), up_in(up_path);
            ValueTable lo = load_table(lo_in, g);
            ValueTable up = load_table(up_in, g);
            summary["resumed"] = true;
            summary["k"] = lo.iteration;
            summary["root_gap"] = up.root_value() - lo.root_value();
            summary["root_lower"] = lo.root_value();
            summary["root_upper"] = up.root_value();
            detail::write_json(rc, "summary.json", summary);
            return kOk;
        }
    }

    IterateResult res = iterate(sc, g, opts);
    detail::persist_tables(rc, g, res);

    if (!rc.out_dir.empty()) {
        std::ofstream gh(std::filesystem::path(rc.out_dir) / "gap_history.csv");
        for (const auto& line : rc.csv_header()) gh << "# " << line << "\n";
        gh << "k,delta_lower,delta_upper,root_gap\n";
        char buf[96];
        for (const auto& row : res.gap_history) {
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", row.k, row.delta_lower,
                          row.delta_upper, row.root_gap);
            gh << buf;
        }
    }
    IsaacsReport isaacs = isaacs_check_sampled(sc, 64, rc.seed);
    summary["resumed"] = false;
    summary["k"] = res.lower_tables.size() - 1;
    summary["converged"] = res.converged;
    summary["root_gap"] = res.root_gap;
    summary["root_lower"] = res.lower_tables.back().root_value();
    summary["root_upper"] = res.upper_tables.back().root_value();
    summary["mixture_gap"] = res.mixture_gap;
    summary["isaacs_max_gap"] = isaacs.max_gap;
    if (isaacs.max_gap > 1e-9)
        summary["value_label"] = "upper/lower only (Isaacs gap nonzero)";
    detail::write_json(rc, "summary.json", summary);
    return kOk;
}

// ---- rollout ------------------------------------------------------------------------

inline int cmd_rollout(detail::RunConfig& rc, double eps, const std::string& player_name,
                       double tol, std::size_t max_k) {
    detail::load_run_inputs(rc);
    detail::ensure_out(rc);
    const Scenario& sc = rc.scenario;
    const Player player = player_name == "second" ? Player::Second : Player::First;

    TimeGrid grid = TimeGrid::uniform(0.0, sc.horizon, rc.cells);
    ReachableGraph g = build_graph(sc, 0.0, rc.m0, grid, rc.resolution, rc.cap, rc.step);
    PimOptions opts;
    opts.resolution = rc.resolution;
    opts.step = rc.step;
    opts.enum_cap = rc.cap;
    opts.tol = tol;
    opts.max_k = max_k;
    opts.mixture_probes = 0;
    opts.seed = rc.seed;
    IterateResult res = iterate(sc, g, opts);

    const ValueTable& table =
        player == Player::First ? res.lower_tables.back() : res.upper_tables.back();
    ScenarioConstants cst = constants_or_estimate(sc, 2000, rc.seed);

    auto layer_of = [&](double t) {
        for (std::size_t i = 0; i < g.grid.nodes.size(); ++i)
            if (std::abs(g.grid.nodes[i] - t) < 1e-9) return i;
        throw GridError("rollout: query time is not a table node");
    };
    auto value_fn = [&, player](double t, const EmpiricalMeasure& m) {
        std::size_t layer = layer_of(t);
        auto idx = g.find(layer, canonical_key(m, rc.resolution));
        if (!idx)
            return player == Player::First ? std::numeric_limits<double>::infinity()
                                           : -std::numeric_limits<double>::infinity();
        return table.values[layer][*idx];
    };
    auto candidates_at = [&](double t) {
        std::size_t layer = layer_of(t);
        std::vector<EmpiricalMeasure> cands;
        cands.reserve(g.layers[layer].size());
        for (const auto& node : g.layers[layer]) cands.push_back(node.rep);
        return cands;
    };
    FeedbackStrategy strat = make_extremal_strategy(sc, player, eps, cst, value_fn, candidates_at);

    SearchOutcome out;
    if (player == Player::First)
        out = estimate_j1(sc, 0.0, rc.m0, strat, grid, detail::search_mode(rc.search), rc.step,
                          rc.cap, rc.seed);
    else
        out = estimate_j2(sc, 0.0, rc.m0, strat, grid, detail::search_mode(rc.search), rc.step,
                          rc.cap, rc.seed);

    // replay the extremal opponent for the exported trace
    RolloutRecord rec;
    {
        OpponentRule opp = tabled_opponent(out.witness);
        rec = player == Player::First ? rollout_upper(sc, 0.0, rc.m0, strat, grid, opp, rc.step)
                                      : rollout_lower(sc, 0.0, rc.m0, strat, grid, opp, rc.step);
    }
    if (!rc.out_dir.empty()) {
        std::ofstream tr(std::filesystem::path(rc.out_dir) / "trace.csv");
        write_rollout_csv(tr, rec, rc.csv_header());
    }

    ShiftConstants shift{eps, cst, sc.dim};
    nlohmann::json summary;
    summary["params"] = rc.echo();
    summary["eps"] = eps;
    summary["player"] = player_name;
    summary["j_estimate"] = out.value;
    summary["search_exhaustive"] = out.exhaustive;
    summary["search_mode_label"] = out.exhaustive ? "exact over discretized opponents"
                                                  : "heuristic bound (coordinate ascent)";
    summary["evaluations"] = out.evaluations;
    summary["value_at_root"] = table.root_value();
    summary["guarantee_bound"] =
        table.root_value() + (player == Player::First ? 1.0 : -1.0) *
                                 cst.omega_g(std::sqrt(shift.rho(eps, sc.horizon)));
    summary["root_gap"] = res.root_gap;
    detail::write_json(rc, "summary.json", summary);
    return kOk;
}

// ---- gamma --------------------------------------------------------------------------

inline int cmd_gamma(detail::RunConfig& rc, std::vector<double> eps_list,
                     std::vector<std::size_t> grid_list, double tol, std::size_t max_k) {
    detail::load_run_inputs(rc);
    detail::ensure_out(rc);
    const Scenario& sc = rc.scenario;
    if (eps_list.empty()) eps_list = {0.2, 0.1};
    if (grid_list.empty()) grid_list = {2, 4};

    // one value iteration on the finest requested grid serves every partition
    std::size_t finest = 0;
    for (std::size_t c : grid_list) finest = std::max(finest, c);
    TimeGrid fine_grid = TimeGrid::uniform(0.0, sc.horizon, finest);
    ReachableGraph g = build_graph(sc, 0.0, rc.m0, fine_grid, rc.resolution, rc.cap, rc.step);
    PimOptions opts;
    opts.resolution = rc.resolution;
    opts.step = rc.step;
    opts.enum_cap = rc.cap;
    opts.tol = tol;
    opts.max_k = max_k;
    opts.mixture_probes = 0;
    opts.seed = rc.seed;
    IterateResult res = iterate(sc, g, opts);
    ScenarioConstants cst = constants_or_estimate(sc, 2000, rc.seed);

    auto layer_of = [&](double t) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < g.grid.nodes.size(); ++i)
            if (std::abs(g.grid.nodes[i] - t) < 1e-9) return i;
        return std::nullopt;
    };
    auto make_value_fn = [&](const ValueTable& table, Player player) {
        return [&, player](double t, const EmpiricalMeasure& m) {
            auto layer = layer_of(t);
            if (!layer)
                return player == Player::First ? std::numeric_limits<double>::infinity()
                                               : -std::numeric_limits<double>::infinity();
            auto idx = g.find(*layer, canonical_key(m, rc.resolution));
            if (!idx)
                return player == Player::First ? std::numeric_limits<double>::infinity()
                                               : -std::numeric_limits<double>::infinity();
            return table.values[*layer][*idx];
        };
    };
    auto candidates_at = [&](double t) {
        auto layer = layer_of(t);
        std::vector<EmpiricalMeasure> cands;
        if (!layer) return cands;
        for (const auto& node : g.layers[*layer]) cands.push_back(node.rep);
        return cands;
    };

    auto strat1_for = [&](double eps) {
        return make_extremal_strategy(sc, Player::First, eps, cst,
                                      make_value_fn(res.lower_tables.back(), Player::First),
                                      candidates_at);
    };
    auto strat2_for = [&](double eps) {
        return make_extremal_strategy(sc, Player::Second, eps, cst,
                                      make_value_fn(res.upper_tables.back(), Player::Second),
                                      candidates_at);
    };

    SearchMode mode = detail::search_mode(rc.search);
    GammaTable g1 = estimate_gamma1(sc, 0.0, rc.m0, strat1_for, eps_list, grid_list, mode,
                                    rc.step, rc.cap, rc.seed);
    GammaTable g2 = estimate_gamma2(sc, 0.0, rc.m0, strat2_for, eps_list, grid_list, mode,
                                    rc.step, rc.cap, rc.seed);

    if (!rc.out_dir.empty()) {
        std::ofstream csv(std::filesystem::path(rc.out_dir) / "gamma.csv");
        for (const auto& line : rc.csv_header()) csv << "# " << line << "\n";
        csv << "side,eps,cells,value,search\n";
        char buf[96];
        for (const auto& row : g1.rows) {
            std::snprintf(buf, sizeof(buf), "gamma1,%.12g,%zu,%.17g,%s\n", row.eps, row.cells,
                          row.value, row.exhaustive ? "exhaustive" : "heuristic");
            csv << buf;
        }
        for (const auto& row : g2.rows) {
            std::snprintf(buf, sizeof(buf), "gamma2,%.12g,%zu,%.17g,%s\n", row.eps, row.cells,
                          row.value, row.exhaustive ? "exhaustive" : "heuristic");
            csv << buf;
        }
    }
    nlohmann::json summary;
    summary["params"] = rc.echo();
    summary["gamma1_upper_estimate"] = g1.best;
    summary["gamma2_lower_estimate"] = g2.best;
    summary["bracket_width"] = g1.best - g2.best;
    summary["search_labels"] = rc.search;
    detail::write_json(rc, "summary.json", summary);
    return kOk;
}

// ---- verify -------------------------------------------------------------------------

inline int cmd_verify(detail::RunConfig& rc, std::size_t trials, const std::string& suite,
                      double l_scale) {
    if (trials == 0) {
        std::cerr << "error: --trials must be positive\n";
        return kUsage;
    }
    detail::load_run_inputs(rc);
    detail::ensure_out(rc);
    Scenario sc = rc.scenario;
    if (l_scale != 1.0 && sc.declared_constants) {
        sc.declared_constants->L *= l_scale;  // negative-control knob
    }

    bool all = suite == "all";
    std::size_t violations = 0;
    SeedStream ss(rc.seed);
    nlohmann::json summary;
    summary["params"] = rc.echo();

    if (all || suite == "lemma_agent") {
        LemmaReport rep = verify_lemma_agent(sc, trials, rc.seed, rc.step);
        summary["lemma_agent"] = {{"trials", rep.trials},
                                  {"violations", rep.violations},
                                  {"max_slack", rep.max_slack}};
        violations += rep.violations;
        std::cout << "lemma_agent: " << rep.violations << "/" << rep.trials << " violations\n";
        if (!rc.out_dir.empty()) {
            std::ofstream out(std::filesystem::path(rc.out_dir) / "lemma_agent.txt");
            out << rep.to_text();
        }
    }
    if (all || suite == "lemma_flow") {
        LemmaReport rep = verify_lemma_flow(sc, trials / 2 + 1, rc.seed, rc.step);
        summary["lemma_flow"] = {{"trials", rep.trials},
                                 {"violations", rep.violations},
                                 {"max_slack", rep.max_slack}};
        violations += rep.violations;
        std::cout << "lemma_flow: " << rep.violations << "/" << rep.trials << " violations\n";
        if (!rc.out_dir.empty()) {
            std::ofstream out(std::filesystem::path(rc.out_dir) / "lemma_flow.txt");
            out << rep.to_text();
        }
    }
    if (all || suite == "metric") {
        auto g = ss.stream("metric_suite");
        std::size_t bad = 0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t n = 1 + uniform_index(g, 4);
            auto a = mfdg::detail::random_measure(g, sc.dim, n);
            auto b = mfdg::detail::random_measure(g, sc.dim, n);
            auto c = mfdg::detail::random_measure(g, sc.dim, n);
            double ab = w2_distance(a, b), bc = w2_distance(b, c), ac = w2_distance(a, c);
            if (ac > ab + bc + 1e-9) ++bad;
            if (std::abs(w2_distance(b, a) - ab) > 1e-9) ++bad;
        }
        summary["metric"] = {{"trials", trials}, {"violations", bad}};
        violations += bad;
        std::cout << "metric: " << bad << "/" << trials << " violations\n";
    }
    if (all || suite == "projection") {
        auto g = ss.stream("projection_suite");
        std::size_t bad = 0;
        for (std::size_t t = 0; t < trials; ++t) {
            MeasureFlow f1 = mfdg::detail::random_flow(sc, g, 0.0, sc.horizon, rc.step);
            MeasureFlow f2 = mfdg::detail::random_flow(sc, g, 0.0, sc.horizon, rc.step);
            if (f1.trajectories.size() != f2.trajectories.size()) continue;
            std::size_t n = f1.trajectories.size();
            std::vector<std::vector<double>> cost(n, std::vector<double>(n));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double sup = 0.0;
                    for (std::size_t s = 0; s < f1.time_grid.size(); ++s)
                        sup = std::max(sup, torus_distance(f1.trajectories[i].states[s],
                                                           f2.trajectories[j].states[s]));
                    cost[i][j] = sup * sup;
                }
            double total = 0.0;
            auto sol = mfdg::detail::lap_solve(cost, total);
            (void)sol;
            double path_w2 = std::sqrt(total / static_cast<double>(n));
            for (std::size_t s = 0; s < f1.time_grid.size(); ++s) {
                double et = w2_distance(f1.measures[s], f2.measures[s]);
                if (et > path_w2 + 1e-9) ++bad;
            }
        }
        summary["projection"] = {{"trials", trials}, {"violations", bad}};
        violations += bad;
        std::cout << "projection: " << bad << "/" << trials << " violations\n";
    }
    if (all || suite == "pim") {
        TimeGrid grid = TimeGrid::uniform(0.0, sc.horizon, rc.cells);
        ReachableGraph g = build_graph(sc, 0.0, rc.m0, grid, rc.resolution, rc.cap, rc.step);
        PimOptions opts;
        opts.resolution = rc.resolution;
        opts.step = rc.step;
        opts.enum_cap = rc.cap;
        opts.seed = rc.seed;
        opts.mixture_probes = 8;
        IterateResult res = iterate(sc, g, opts);
        std::size_t bad = 0;
        // monotonicity is exact
        for (std::size_t k = 1; k < res.lower_tables.size(); ++k)
            for (std::size_t l = 0; l < g.layers.size(); ++l)
                for (std::size_t node = 0; node < g.layers[l].size(); ++node) {
                    if (res.lower_tables[k].values[l][node] <
                        res.lower_tables[k - 1].values[l][node])
                        ++bad;
                    if (res.upper_tables[k].values[l][node] >
                        res.upper_tables[k - 1].values[l][node])
                        ++bad;
                }
        // bracketing at stall
        for (std::size_t l = 0; l < g.layers.size(); ++l)
            for (std::size_t node = 0; node < g.layers[l].size(); ++node)
                if (res.lower_tables.back().values[l][node] >
                    res.upper_tables.back().values[l][node] + 1e-9)
                    ++bad;
        StabilityReport stab =
            check_stability(sc, g, opts, res.lower_tables.back(), res.upper_tables.back());
        if (!stab.ok(1e-9)) ++bad;
        summary["pim"] = {{"violations", bad},
                          {"root_gap", res.root_gap},
                          {"converged", res.converged},
                          {"stability_excess_lower", stab.max_excess_lower},
                          {"stability_excess_upper", stab.max_excess_upper}};
        violations += bad;
        std::cout << "pim: " << bad << " violations (root gap " << res.root_gap << ")\n";
    }

    summary["total_violations"] = violations;
    detail::write_json(rc, "verify.json", summary);
    return violations == 0 ? kOk : kViolation;
}

// ---- driver -------------------------------------------------------------------------

inline int run(std::vector<std::string> args) {
    CLI::App app{"mean-field differential game engine"};
    app.require_subcommand(1);

    detail::RunConfig rc;

    // w2
    std::string w2_a, w2_b;
    bool w2_plan = false;
    auto* w2cmd = app.add_subcommand("w2", "exact W2 between two measure files");
    w2cmd->add_option("first", w2_a)->required();
    w2cmd->add_option("second", w2_b)->required();
    w2cmd->add_flag("--plan", w2_plan, "print the optimal plan");

    // simulate
    std::string strategy_u, opponent_v;
    bool step_halving = false;
    auto* sim = app.add_subcommand("simulate", "single rollout under constant fields");
    detail::add_common(sim, rc);
    sim->add_option("--strategy-u", strategy_u, "first player's atom index (or comma list)");
    sim->add_option("--opponent-v", opponent_v, "second player's atom index (or comma list)");
    sim->add_flag("--step-halving", step_halving, "also run at half step and report terminal W2");

    // iterate
    double tol = 1e-9;
    std::size_t max_k = 16, probes = 32;
    bool resume = false;
    auto* it = app.add_subcommand("iterate", "build the reachable graph and run value iteration");
    detail::add_common(it, rc);
    it->add_option("--tol", tol, "stall tolerance");
    it->add_option("--max-k", max_k, "max operator sweeps");
    it->add_option("--mixture-probes", probes, "random mixture probes per node");
    it->add_flag("--resume", resume, "reload persisted tables from --out");

    // rollout
    double eps = 0.1;
    std::string player = "first";
    auto* ro = app.add_subcommand("rollout", "extremal-shift strategy vs adversarial search");
    detail::add_common(ro, rc);
    ro->add_option("--eps", eps, "extremal shift epsilon");
    ro->add_option("--player", player, "first|second");

    // gamma
    std::vector<double> eps_list;
    std::vector<std::size_t> grid_list;
    auto* ga = app.add_subcommand("gamma", "tabulate J estimates over (eps, partition)");
    detail::add_common(ga, rc);
    ga->add_option("--eps", eps_list, "epsilon list");
    ga->add_option("--grids", grid_list, "partition cell counts");

    // verify
    std::size_t trials = 200;
    std::string suite = "all";
    double l_scale = 1.0;
    auto* ve = app.add_subcommand("verify", "run the inequality suites");
    detail::add_common(ve, rc);
    ve->add_option("--trials", trials, "trials per suite");
    ve->add_option("--suite", suite, "lemma_agent|lemma_flow|metric|projection|pim|all");
    ve->add_option("--l-scale", l_scale, "scale the declared Lipschitz constant");

    std::vector<const char*> argv;
    argv.push_back("mfdg");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (w2cmd->parsed()) return cmd_w2(w2_a, w2_b, w2_plan);
        if (sim->parsed()) return cmd_simulate(rc, strategy_u, opponent_v, step_halving);
        if (it->parsed()) return cmd_iterate(rc, tol, max_k, probes, resume);
        if (ro->parsed()) return cmd_rollout(rc, eps, player, tol, max_k);
        if (ga->parsed()) return cmd_gamma(rc, eps_list, grid_list, tol, max_k);
        if (ve->parsed()) return cmd_verify(rc, trials, suite, l_scale);
    } catch (const GraphTooLarge& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kResourceCap;
    } catch (const SearchSpaceTooLarge& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kResourceCap;
    } catch (const StepTooLarge& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kResourceCap;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}

}  // namespace mfdg::cli
