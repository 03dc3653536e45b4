// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Deliberately self-contained; oracles are brute-force or
// enumeration based throughout.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mfdg/cli.hpp"
#include "mfdg/engine.hpp"
#include "mfdg/pim.hpp"
#include "mfdg/scenario_io.hpp"
#include "mfdg/shift.hpp"

using namespace mfdg;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

EmpiricalMeasure cloud(std::initializer_list<double> xs) {
    std::vector<TorusPoint> pts;
    for (double x : xs) pts.push_back(wrap({x}));
    return EmpiricalMeasure::uniform(std::move(pts));
}

std::string fmt(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3g", x);
    return std::string(buf);
}

// ---- desk instances (lattice-aligned so quantized hops are exact) -------------

struct DeskInstance {
    std::string name;
    Scenario sc;
    EmpiricalMeasure m0;
    std::size_t cells;
    double resolution;
    double step;
};

Scenario bilinear_scenario() {
    Scenario sc;
    sc.dim = 1;
    sc.horizon = 0.2;
    sc.grid_u = grid_1d({-1.0, 1.0}, "U");
    sc.grid_v = grid_1d({-1.0, 1.0}, "V");
    sc.velocity = [](double, const TorusPoint&, const EmpiricalMeasure&,
                     std::span<const double> u, std::span<const double> v,
                     std::span<double> out) { out[0] = u[0] * v[0]; };
    sc.terminal_payoff = w2_to_target_payoff(EmpiricalMeasure::dirac(wrap({0.8})));
    sc.dynamics_name = "bilinear";
    sc.payoff_name = "w2_to_target";
    ScenarioConstants c;
    c.C0 = 1.0;
    c.L = 0.0;
    c.omega_f = Modulus::zero();
    c.omega_g = Modulus::linear(1.0);
    sc.declared_constants = c;
    return sc;
}

std::vector<DeskInstance> desk_instances() {
    std::vector<DeskInstance> out;
    out.push_back({"two-particle 3x3",
                   make_split_linear({-1, 0, 1}, {-0.5, 0, 0.5}, 0.3, 0.0,
                                     EmpiricalMeasure::dirac(wrap({0.5}))),
                   cloud({0.1, 0.35}), 3, 0.05, 0.05});
    out.push_back({"one-particle 3x3",
                   make_split_linear({-1, 0, 1}, {-0.5, 0, 0.5}, 0.3, 0.0,
                                     EmpiricalMeasure::dirac(wrap({0.25}))),
                   EmpiricalMeasure::dirac(wrap({0.1})), 3, 0.05, 0.05});
    out.push_back({"two-particle 2x2",
                   make_split_linear({-1, 1}, {-0.5, 0.5}, 0.3, 0.0,
                                     EmpiricalMeasure::dirac(wrap({0.5}))),
                   cloud({0.1, 0.35}), 3, 0.05, 0.05});
    out.push_back({"bilinear non-Isaacs", bilinear_scenario(),
                   EmpiricalMeasure::dirac(wrap({0.3})), 2, 0.05, 0.05});
    return out;
}

IterateResult solve_desk(const DeskInstance& inst, ReachableGraph& graph, std::size_t max_k = 12) {
    TimeGrid grid = TimeGrid::uniform(0.0, inst.sc.horizon, inst.cells);
    graph = build_graph(inst.sc, 0.0, inst.m0, grid, inst.resolution, 200000, inst.step);
    PimOptions opts;
    opts.resolution = inst.resolution;
    opts.step = inst.step;
    opts.max_k = max_k;
    opts.mixture_probes = 8;
    opts.seed = 17;
    return iterate(inst.sc, graph, opts);
}

double terminal_range(const Scenario& sc, const ReachableGraph& g) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& node : g.layers.back()) {
        double v = payoff(sc, node.rep);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return hi - lo;
}

// exhaustive first-player opponent sweep of a second-player memory strategy
double exhaustive_memory_worst(const Scenario& sc, const EmpiricalMeasure& m0,
                               const MemoryStrategy& strat, double step) {
    double worst = std::numeric_limits<double>::infinity();
    const TimeGrid& grid = strat.grid;
    std::function<void(std::size_t, EmpiricalMeasure, std::vector<EmpiricalMeasure>)> dfs =
        [&](std::size_t cell, EmpiricalMeasure m, std::vector<EmpiricalMeasure> history) {
            if (cell + 1 >= grid.nodes.size()) {
                worst = std::min(worst, payoff(sc, m));
                return;
            }
            const double ta = grid.nodes[cell], tb = grid.nodes[cell + 1];
            ControlField field = strat.rule(cell, history);
            std::vector<std::size_t> assign(m.size(), 0);
            while (true) {
                std::vector<RelaxedSchedule> resp(m.size());
                for (std::size_t p = 0; p < m.size(); ++p)
                    resp[p] = RelaxedSchedule::constant_atom(sc.grid_u.size(), assign[p], ta, tb);
                auto joint = join_with_uniform_response(field, resp, ta, tb);
                auto flow = generate_flow(sc, ta, m, joint, step, tb);
                auto next_history = history;
                next_history.push_back(flow.terminal());
                dfs(cell + 1, flow.terminal(), next_history);
                std::size_t slot = assign.size();
                bool done = true;
                while (slot > 0) {
                    --slot;
                    if (++assign[slot] < sc.grid_u.size()) {
                        done = false;
                        break;
                    }
                    assign[slot] = 0;
                }
                if (done) break;
            }
        };
    dfs(0, m0, {m0});
    return worst;
}

// ---- criteria ------------------------------------------------------------------

Outcome criterion_1() {
    Outcome out;
    SeedStream ss(900001);
    auto g = ss.stream("acc_w2");
    double max_diff = 0.0;
    for (int t = 0; t < 500; ++t) {
        std::size_t d = 1 + uniform_index(g, 2);
        std::size_t n = 1 + uniform_index(g, 6);
        std::vector<TorusPoint> p1, p2;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> c1(d), c2(d);
            for (auto& x : c1) x = uniform01(g);
            for (auto& x : c2) x = uniform01(g);
            p1.push_back(wrap(c1));
            p2.push_back(wrap(c2));
        }
        auto m1 = EmpiricalMeasure::uniform(p1);
        auto m2 = EmpiricalMeasure::uniform(p2);
        double diff = std::abs(w2_exact(m1, m2).distance - w2_bruteforce(m1, m2));
        max_diff = std::max(max_diff, diff);
        if (diff > 1e-9) {
            out.pass = false;
            out.detail = "instance " + std::to_string(t) + " diff " + fmt(diff);
            return out;
        }
    }
    out.detail = "500 instances, max diff " + fmt(max_diff);
    return out;
}

Outcome criterion_2() {
    Outcome out;
    SeedStream ss(900002);
    auto g = ss.stream("acc_metric");
    double worst_triangle = -1e300;
    for (int t = 0; t < 500; ++t) {
        std::size_t d = 1 + uniform_index(g, 2);
        std::size_t n = 1 + uniform_index(g, 5);
        auto sample = [&]() {
            std::vector<TorusPoint> pts;
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> c(d);
                for (auto& x : c) x = uniform01(g);
                pts.push_back(wrap(c));
            }
            return EmpiricalMeasure::uniform(std::move(pts));
        };
        auto a = sample(), b = sample(), c = sample();
        double excess = w2_distance(a, b) - w2_distance(a, c) - w2_distance(c, b);
        worst_triangle = std::max(worst_triangle, excess);
        if (excess > 1e-9) {
            out.pass = false;
            out.detail = "triangle violated by " + fmt(excess);
            return out;
        }
    }
    // projection inequality on sampled trajectory couplings
    auto sc = make_split_linear({-1, 0, 1}, {-0.5, 0, 0.5}, 0.4, 0.0,
                                EmpiricalMeasure::dirac(wrap({0.5})));
    auto gp = ss.stream("acc_projection");
    double worst_proj = -1e300;
    for (int t = 0; t < 200; ++t) {
        std::size_t n = 1 + uniform_index(gp, 4);
        auto sample_flow = [&]() {
            std::vector<TorusPoint> pts;
            for (std::size_t i = 0; i < n; ++i) pts.push_back(wrap({uniform01(gp)}));
            auto m = EmpiricalMeasure::uniform(std::move(pts));
            std::vector<std::size_t> ua(n), va(n);
            for (auto& a : ua) a = uniform_index(gp, 3);
            for (auto& b : va) b = uniform_index(gp, 3);
            auto joint = joint_pure_field(ua, va, 3, 3, 0.0, 0.4);
            return generate_flow(sc, 0.0, m, joint, 0.02);
        };
        auto f1 = sample_flow(), f2 = sample_flow();
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
        detail::lap_solve(cost, total);
        double path_w2 = std::sqrt(total / static_cast<double>(n));
        for (std::size_t s = 0; s < f1.time_grid.size(); s += 4) {
            double et = w2_distance(f1.measures[s], f2.measures[s]);
            worst_proj = std::max(worst_proj, et - path_w2);
            if (et > path_w2 + 1e-9) {
                out.pass = false;
                out.detail = "projection violated by " + fmt(et - path_w2);
                return out;
            }
        }
    }
    out.detail = "500 triples (worst excess " + fmt(worst_triangle) +
                 "), 200 couplings (worst excess " + fmt(worst_proj) + ")";
    return out;
}

Outcome criterion_3(double& elapsed) {
    Outcome out;
    auto t0 = Clock::now();
    auto split = make_split_linear({-1, 0, 1}, {-0.5, 0, 0.5}, 0.4, 0.0,
                                   EmpiricalMeasure::dirac(wrap({0.5})));
    auto pursuit = make_pursuit_circle({-0.5, 0, 0.5}, {-0.25, 0, 0.25}, 0.5, 0.5, 0.5, 0.5,
                                       EmpiricalMeasure::dirac(wrap({0.5})));
    auto rep1 = verify_lemma_agent(split, 1000, 777001, 1e-3);
    auto rep2 = verify_lemma_agent(pursuit, 1000, 777002, 1e-3);
    elapsed = seconds_since(t0);
    out.pass = rep1.violations == 0 && rep2.violations == 0 && elapsed < 60.0;
    out.detail = "split " + std::to_string(rep1.violations) + "/1000, pursuit " +
                 std::to_string(rep2.violations) + "/1000, max slack " +
                 fmt(std::max(rep1.max_slack, rep2.max_slack));
    if (elapsed >= 60.0) out.detail += ", over time budget";
    return out;
}

Outcome criterion_4(double& elapsed) {
    Outcome out;
    auto t0 = Clock::now();
    auto split = make_split_linear({-1, 0, 1}, {-0.5, 0, 0.5}, 0.4, 0.0,
                                   EmpiricalMeasure::dirac(wrap({0.5})));
    auto pursuit = make_pursuit_circle({-0.5, 0, 0.5}, {-0.25, 0, 0.25}, 0.5, 0.5, 0.5, 0.5,
                                       EmpiricalMeasure::dirac(wrap({0.5})));
    auto rep1 = verify_lemma_flow(split, 500, 778001, 1e-3, 4);
    auto rep2 = verify_lemma_flow(pursuit, 500, 778002, 1e-3, 4);
    elapsed = seconds_since(t0);
    out.pass = rep1.violations == 0 && rep2.violations == 0 && elapsed < 120.0;
    out.detail = "split " + std::to_string(rep1.violations) + "/500, pursuit " +
                 std::to_string(rep2.violations) + "/500, max slack " +
                 fmt(std::max(rep1.max_slack, rep2.max_slack));
    if (elapsed >= 120.0) out.detail += ", over time budget";
    return out;
}

struct DeskSolved {
    DeskInstance inst;
    ReachableGraph graph;
    IterateResult res;
};

std::vector<DeskSolved>& solved_desks() {
    static std::vector<DeskSolved> cache;
    if (cache.empty()) {
        for (auto& inst : desk_instances()) {
            DeskSolved s;
            s.inst = inst;
            s.res = solve_desk(inst, s.graph);
            cache.push_back(std::move(s));
        }
    }
    return cache;
}

Outcome criterion_5(double& elapsed) {
    Outcome out;
    auto t0 = Clock::now();
    std::size_t nodes_checked = 0;
    for (auto& s : solved_desks()) {
        const auto& res = s.res;
        for (std::size_t k = 1; k < res.lower_tables.size(); ++k)
            for (std::size_t l = 0; l < s.graph.layers.size(); ++l)
                for (std::size_t n = 0; n < s.graph.layers[l].size(); ++n) {
                    ++nodes_checked;
                    if (!(res.lower_tables[k].values[l][n] >=
                          res.lower_tables[k - 1].values[l][n]) ||
                        !(res.upper_tables[k].values[l][n] <=
                          res.upper_tables[k - 1].values[l][n])) {
                        out.pass = false;
                        out.detail = s.inst.name + ": monotonicity violated at layer " +
                                     std::to_string(l);
                        return out;
                    }
                }
        const std::size_t last = s.graph.layers.size() - 1;
        for (const auto& table :
             {std::cref(res.lower_tables.back()), std::cref(res.upper_tables.back())})
            for (std::size_t n = 0; n < s.graph.layers[last].size(); ++n)
                if (table.get().values[last][n] !=
                    payoff(s.inst.sc, s.graph.layers[last][n].rep)) {
                    out.pass = false;
                    out.detail = s.inst.name + ": terminal layer differs from g";
                    return out;
                }
    }
    elapsed = seconds_since(t0);
    out.pass = elapsed < 300.0;
    out.detail = std::to_string(solved_desks().size()) + " instances, " +
                 std::to_string(nodes_checked) + " node checks, all exact";
    if (!out.pass) out.detail += ", over time budget";
    return out;
}

Outcome criterion_6() {
    Outcome out;
    std::ostringstream detail;
    for (auto& s : solved_desks()) {
        const auto& res = s.res;
        for (std::size_t l = 0; l < s.graph.layers.size(); ++l)
            for (std::size_t n = 0; n < s.graph.layers[l].size(); ++n)
                if (res.lower_tables.back().values[l][n] >
                    res.upper_tables.back().values[l][n] + 1e-9) {
                    out.pass = false;
                    out.detail = s.inst.name + ": bracketing violated";
                    return out;
                }
        double range = terminal_range(s.inst.sc, s.graph);
        auto isaacs = isaacs_check_sampled(s.inst.sc, 64, 99);
        if (isaacs.max_gap > 1e-9) {
            // exempt from the gap bound; report both gaps
            detail << s.inst.name << ": root gap " << fmt(s.res.root_gap) << " with Isaacs gap "
                   << fmt(isaacs.max_gap) << " (exempt); ";
            continue;
        }
        if (s.res.root_gap > 0.05 * range + 1e-12) {
            out.pass = false;
            out.detail = s.inst.name + ": root gap " + fmt(s.res.root_gap) + " exceeds 5% of " +
                         fmt(range);
            return out;
        }
        detail << s.inst.name << ": gap " << fmt(s.res.root_gap) << " <= " << fmt(0.05 * range)
               << "; ";
    }
    out.detail = detail.str();
    return out;
}

Outcome criterion_7() {
    Outcome out;
    std::ostringstream detail;
    for (auto& s : solved_desks()) {
        PimOptions opts;
        opts.resolution = s.inst.resolution;
        opts.step = s.inst.step;
        opts.mixture_probes = 0;
        auto stab = check_stability(s.inst.sc, s.graph, opts, s.res.lower_tables.back(),
                                    s.res.upper_tables.back());
        if (!stab.ok(1e-9)) {
            out.pass = false;
            out.detail = s.inst.name + ": stability excess " + fmt(stab.max_excess_lower) + "/" +
                         fmt(stab.max_excess_upper);
            return out;
        }
        detail << s.inst.name << ": excess " << fmt(stab.max_excess_lower) << "/"
               << fmt(stab.max_excess_upper) << "; ";
    }
    out.detail = detail.str();
    return out;
}

Outcome criterion_8() {
    Outcome out;
    struct Preset {
        std::string name;
        Scenario sc;
        EmpiricalMeasure m0;
        std::size_t fine_cells;
        double resolution;
        double step;
    };
    std::vector<Preset> presets;
    presets.push_back({"one-particle drift-free",
                       make_split_linear({-1, 0, 1}, {-0.5, 0, 0.5}, 0.4, 0.0,
                                         EmpiricalMeasure::dirac(wrap({0.5}))),
                       EmpiricalMeasure::dirac(wrap({0.1})), 8, 0.025, 0.025});
    presets.push_back({"two-particle 2x2",
                       make_split_linear({-1, 1}, {-0.5, 0.5}, 0.2, 0.0,
                                         EmpiricalMeasure::dirac(wrap({0.6}))),
                       cloud({0.1, 0.35}), 4, 0.025, 0.025});
    presets.push_back({"one-particle drifted",
                       make_split_linear({-1, 0, 1}, {-0.5, 0, 0.5}, 0.4, 0.25,
                                         EmpiricalMeasure::dirac(wrap({0.9}))),
                       EmpiricalMeasure::dirac(wrap({0.5})), 8, 0.0125, 0.025});
    const std::vector<double> eps_list = {0.2, 0.1, 0.05};

    std::size_t monotone_presets = 0;
    std::ostringstream detail;
    for (auto& p : presets) {
        TimeGrid fine = TimeGrid::uniform(0.0, p.sc.horizon, p.fine_cells);
        auto graph = build_graph(p.sc, 0.0, p.m0, fine, p.resolution, 200000, p.step);
        PimOptions opts;
        opts.resolution = p.resolution;
        opts.step = p.step;
        opts.mixture_probes = 0;
        opts.max_k = 12;
        auto res = iterate(p.sc, graph, opts);
        const ValueTable& psi1 = res.lower_tables.back();
        ScenarioConstants cst = p.sc.constants();

        auto layer_of = [&](double t) {
            for (std::size_t i = 0; i < graph.grid.nodes.size(); ++i)
                if (std::abs(graph.grid.nodes[i] - t) < 1e-9) return i;
            throw GridError("criterion 8: partition node missing from the table grid");
        };
        auto value_fn = [&](double t, const EmpiricalMeasure& m) {
            std::size_t layer = layer_of(t);
            auto idx = graph.find(layer, canonical_key(m, p.resolution));
            return idx ? psi1.values[layer][*idx] : std::numeric_limits<double>::infinity();
        };
        auto candidates_at = [&](double t) {
            std::size_t layer = layer_of(t);
            std::vector<EmpiricalMeasure> cands;
            for (const auto& node : graph.layers[layer]) cands.push_back(node.rep);
            return cands;
        };
        double range = terminal_range(p.sc, graph);

        std::vector<double> excesses;
        for (double eps : eps_list) {
            auto cells = static_cast<std::size_t>(std::llround(p.sc.horizon / eps));
            TimeGrid partition = TimeGrid::uniform(0.0, p.sc.horizon, cells);
            if (partition.fineness() > eps + 1e-12) {
                out.pass = false;
                out.detail = p.name + ": partition fineness exceeds eps";
                return out;
            }
            FeedbackStrategy strat =
                make_extremal_strategy(p.sc, Player::First, eps, cst, value_fn, candidates_at);
            auto j1 = estimate_j1(p.sc, 0.0, p.m0, strat, partition, SearchMode::Exhaustive,
                                  p.step, 2000000);
            ShiftConstants shift{eps, cst, p.sc.dim};
            double bound = psi1.root_value() +
                           cst.omega_g(std::sqrt(shift.rho(eps, p.sc.horizon))) + 0.05 * range;
            if (j1.value > bound + 1e-9) {
                out.pass = false;
                out.detail = p.name + " eps " + fmt(eps) + ": J1 " + fmt(j1.value) +
                             " exceeds bound " + fmt(bound);
                return out;
            }
            excesses.push_back(j1.value - psi1.root_value());
        }
        bool monotone = true;
        for (std::size_t i = 1; i < excesses.size(); ++i)
            if (excesses[i] > excesses[i - 1] + 1e-12) monotone = false;
        if (monotone) ++monotone_presets;
        detail << p.name << ": excess";
        for (double e : excesses) detail << " " << fmt(e);
        detail << (monotone ? " (monotone); " : " (not monotone); ");
    }
    if (monotone_presets < 2) {
        out.pass = false;
        out.detail =
            "excess monotone on only " + std::to_string(monotone_presets) + " of 3 presets: " +
            detail.str();
        return out;
    }
    out.detail = detail.str() + "monotone on " + std::to_string(monotone_presets) + "/3";
    return out;
}

Outcome criterion_9() {
    Outcome out;
    const double eps = 0.05;
    std::ostringstream detail;
    for (std::size_t which : {std::size_t(0), std::size_t(1)}) {  // two desk instances
        auto& s = solved_desks()[which];
        for (std::size_t k = 0; k <= 2 && k < s.res.lower_tables.size(); ++k) {
            std::vector<ValueTable> tables(s.res.lower_tables.begin(),
                                           s.res.lower_tables.begin() + k + 1);
            auto q = build_q_strategy(s.inst.sc, s.graph, tables, eps);
            double worst = exhaustive_memory_worst(s.inst.sc, s.inst.m0, q, s.inst.step);
            double need = s.res.lower_tables[k].root_value() - 2.0 * eps - 1e-9;
            if (worst < need) {
                out.pass = false;
                out.detail = s.inst.name + " k=" + std::to_string(k) + ": worst " + fmt(worst) +
                             " below " + fmt(need);
                return out;
            }
            detail << s.inst.name << " k=" << k << ": worst " << fmt(worst) << " vs omega_k "
                   << fmt(s.res.lower_tables[k].root_value()) << "; ";
        }
    }
    out.detail = detail.str();
    return out;
}

Outcome criterion_10() {
    Outcome out;
    fs::path base = fs::temp_directory_path() / "mfdg_acceptance_repro";
    fs::remove_all(base);
    fs::create_directories(base);
    const std::string scenario_text =
        "dim = 1\nhorizon = 0.4\ngrid_u = -1 0 1\ngrid_v = -0.5 0 0.5\n"
        "dynamics = split_linear\ndrift = 0\npayoff = w2_to_target\ntarget = 0.5 : 1\n"
        "constants_c0 = 1.5\nconstants_l = 0\nomega_f = zero\nomega_g = linear 1.0\n";
    std::ofstream(base / "scenario.cfg") << scenario_text;

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    auto run_pair = [&](const std::string& tag, std::vector<std::string> args) {
        for (const char* sub : {"x", "y"}) {
            auto full = args;
            full.push_back("--out");
            full.push_back((base / (tag + "_" + sub)).string());
            if (cli::run(full) != cli::kOk) return std::string("command failed: " + tag);
        }
        for (const auto& entry : fs::directory_iterator(base / (tag + "_x"))) {
            auto name = entry.path().filename();
            if (slurp(entry.path()) != slurp(base / (tag + "_y") / name))
                return std::string(tag + ": " + name.string() + " differs");
        }
        return std::string();
    };

    std::string err = run_pair(
        "simulate", {"simulate", "--scenario", (base / "scenario.cfg").string(), "--particles",
                     "2", "--cells", "2", "--step", "0.05", "--strategy-u", "2", "--opponent-v",
                     "1", "--seed", "12345", "--step-halving"});
    if (err.empty())
        err = run_pair("iterate",
                       {"iterate", "--scenario", (base / "scenario.cfg").string(), "--particles",
                        "2", "--cells", "2", "--resolution", "0.05", "--step", "0.05", "--seed",
                        "12345"});
    if (!err.empty()) {
        out.pass = false;
        out.detail = err;
        return out;
    }
    out.detail = "simulate and iterate artifacts byte-identical across reruns";
    return out;
}

}  // namespace

int main() {
    struct Row {
        int id;
        const char* name;
        std::function<Outcome(double&)> run;
    };
    auto plain = [](Outcome (*f)()) {
        return [f](double&) { return f(); };
    };
    std::vector<Row> rows = {
        {1, "OT oracle equivalence", plain(&criterion_1)},
        {2, "metric and projection properties", plain(&criterion_2)},
        {3, "agent-level shift estimate suite", [](double& t) { return criterion_3(t); }},
        {4, "flow-level shift estimate suite", [](double& t) { return criterion_4(t); }},
        {5, "value iteration structure", [](double& t) { return criterion_5(t); }},
        {6, "value bracketing and gap", plain(&criterion_6)},
        {7, "discrete stability handoff", plain(&criterion_7)},
        {8, "extremal-shift guarantee", plain(&criterion_8)},
        {9, "q-strategy guarantee", plain(&criterion_9)},
        {10, "seeded reproducibility", plain(&criterion_10)},
    };

    int failures = 0;
    for (auto& row : rows) {
        auto t0 = Clock::now();
        Outcome out;
        double inner_elapsed = -1.0;
        try {
            out = row.run(inner_elapsed);
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        double elapsed = seconds_since(t0);
        std::printf("[%s] criterion %2d: %s (%s; %.1f s)\n", out.pass ? "PASS" : "FAIL", row.id,
                    row.name, out.detail.c_str(), elapsed);
        std::fflush(stdout);
        if (!out.pass) ++failures;
    }
    if (failures == 0) {
        std::printf("all 10 acceptance criteria passed\n");
    } else {
        std::printf("%d acceptance criteria FAILED\n", failures);
    }
    return failures;
}
