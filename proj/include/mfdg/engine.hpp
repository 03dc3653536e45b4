#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfdg/control.hpp"
#include "mfdg/dynamics.hpp"
#include "mfdg/errors.hpp"
#include "mfdg/measure.hpp"
#include "mfdg/rng.hpp"
#include "mfdg/shift.hpp"

namespace mfdg {

struct TimeGrid {
    std::vector<double> nodes;

    static TimeGrid uniform(double t0, double t1, std::size_t cells) {
        TimeGrid g;
        g.nodes.resize(cells + 1);
        for (std::size_t i = 0; i <= cells; ++i)
            g.nodes[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(cells);
        g.nodes.back() = t1;
        return g;
    }

    std::size_t cells() const { return nodes.empty() ? 0 : nodes.size() - 1; }

    double fineness() const {
        double d = 0.0;
        for (std::size_t i = 0; i + 1 < nodes.size(); ++i) d = std::max(d, nodes[i + 1] - nodes[i]);
        return d;
    }

    void check(double t0, double horizon) const {
        if (nodes.empty()) throw GridError("empty time grid");
        if (std::abs(nodes.front() - t0) > 1e-12) throw GridError("grid does not start at t0");
        if (std::abs(nodes.back() - horizon) > 1e-12) throw GridError("grid does not end at T");
        for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
            if (!(nodes[i + 1] > nodes[i])) throw GridError("grid nodes not increasing");
    }
};

// Feedback strategy in the stepwise (Krasovskii-Subbotin) sense: at each
// partition node it reads the current measure and commits a constant field.
struct FeedbackStrategy {
    Player player = Player::First;
    std::function<ControlField(double t, const EmpiricalMeasure& m)> rule;
};

// Stepwise strategy with memory: the field on [t_i, t_{i+1}) may depend on the
// whole observed history of measures at grid nodes up to t_i.
struct MemoryStrategy {
    Player player = Player::Second;
    TimeGrid grid;
    std::function<ControlField(std::size_t cell, std::span<const EmpiricalMeasure> history)> rule;
};

// Pure per-particle opponent atoms for one cell, chosen knowing the current
// measure (deterministic rollouts make this equivalent to flat assignments).
using OpponentRule =
    std::function<std::vector<std::size_t>(std::size_t cell, const EmpiricalMeasure& m)>;

inline OpponentRule constant_opponent(std::size_t atom) {
    return [atom](std::size_t, const EmpiricalMeasure& m) {
        return std::vector<std::size_t>(m.size(), atom);
    };
}

inline OpponentRule tabled_opponent(std::vector<std::vector<std::size_t>> per_cell,
                                    std::size_t fallback_atom = 0) {
    return [table = std::move(per_cell), fallback_atom](std::size_t cell,
                                                        const EmpiricalMeasure& m) {
        std::vector<std::size_t> atoms(m.size(), fallback_atom);
        if (cell < table.size())
            for (std::size_t i = 0; i < m.size() && i < table[cell].size(); ++i)
                atoms[i] = table[cell][i];
        return atoms;
    };
}

struct RolloutRecord {
    TimeGrid grid;
    std::vector<MeasureFlow> cell_flows;
    std::vector<JointControlField> controls;
    double outcome = 0.0;

    const EmpiricalMeasure& terminal() const { return cell_flows.back().terminal(); }

    const EmpiricalMeasure& measure_at_node(std::size_t i) const {
        if (i == 0) return cell_flows.front().measures.front();
        return cell_flows[i - 1].terminal();
    }
};

namespace detail {

inline RolloutRecord rollout_impl(const Scenario& sc, double t0, const EmpiricalMeasure& m0,
                                  const FeedbackStrategy& strat, const TimeGrid& grid,
                                  const OpponentRule& opponent, double step) {
    grid.check(t0, sc.horizon);
    RolloutRecord rec;
    rec.grid = grid;
    EmpiricalMeasure m = m0;
    const std::size_t other_grid =
        strat.player == Player::First ? sc.grid_v.size() : sc.grid_u.size();
    for (std::size_t i = 0; i + 1 < grid.nodes.size(); ++i) {
        const double ta = grid.nodes[i], tb = grid.nodes[i + 1];
        ControlField field = strat.rule(ta, m);
        if (field.player != strat.player || field.particles() != m.size())
            throw Error("rollout: strategy field does not cover the current measure");
        std::vector<std::size_t> opp = opponent(i, m);
        if (opp.size() != m.size()) throw Error("rollout: opponent assignment wrong size");
        std::vector<RelaxedSchedule> resp(m.size());
        for (std::size_t p = 0; p < m.size(); ++p) {
            if (opp[p] >= other_grid) throw UnknownAtom("rollout: opponent atom out of grid");
            resp[p] = RelaxedSchedule::constant_atom(other_grid, opp[p], ta, tb);
        }
        JointControlField joint = join_with_uniform_response(field, resp, ta, tb);
        MeasureFlow flow = generate_flow(sc, ta, m, joint, step, tb);
        m = flow.terminal();
        rec.cell_flows.push_back(std::move(flow));
        rec.controls.push_back(std::move(joint));
    }
    if (rec.cell_flows.empty()) {
        // degenerate horizon: t0 == T, no motion
        JointControlField empty;
        MeasureFlow flow;
        flow.time_grid = {t0};
        flow.measures = {m};
        rec.cell_flows.push_back(std::move(flow));
    }
    rec.outcome = payoff(sc, m);
    return rec;
}

}  // namespace detail

// Upper game rollout: first player plays stepwise, second player is free
// (pure per-cell responses here).
inline RolloutRecord rollout_upper(const Scenario& sc, double t0, const EmpiricalMeasure& m0,
                                   const FeedbackStrategy& strat, const TimeGrid& grid,
                                   const OpponentRule& opponent, double step) {
    if (strat.player != Player::First) throw Error("rollout_upper: strategy must be first player");
    return detail::rollout_impl(sc, t0, m0, strat, grid, opponent, step);
}

inline RolloutRecord rollout_lower(const Scenario& sc, double t0, const EmpiricalMeasure& m0,
                                   const FeedbackStrategy& strat, const TimeGrid& grid,
                                   const OpponentRule& opponent, double step) {
    if (strat.player != Player::Second)
        throw Error("rollout_lower: strategy must be second player");
    return detail::rollout_impl(sc, t0, m0, strat, grid, opponent, step);
}

// Memory-strategy rollout (Def. of stepwise strategies with memory): the
// strategy sees the whole node history.
inline RolloutRecord rollout_memory(const Scenario& sc, double s, const EmpiricalMeasure& mu,
                                    const MemoryStrategy& strat, const OpponentRule& opponent,
                                    double step) {
    strat.grid.check(s, sc.horizon);
    RolloutRecord rec;
    rec.grid = strat.grid;
    std::vector<EmpiricalMeasure> history{mu};
    EmpiricalMeasure m = mu;
    const std::size_t other_grid =
        strat.player == Player::First ? sc.grid_v.size() : sc.grid_u.size();
    for (std::size_t i = 0; i + 1 < strat.grid.nodes.size(); ++i) {
        const double ta = strat.grid.nodes[i], tb = strat.grid.nodes[i + 1];
        ControlField field = strat.rule(i, history);
        if (field.particles() != m.size())
            throw Error("rollout_memory: field does not cover the current measure");
        std::vector<std::size_t> opp = opponent(i, m);
        std::vector<RelaxedSchedule> resp(m.size());
        for (std::size_t p = 0; p < m.size(); ++p)
            resp[p] = RelaxedSchedule::constant_atom(other_grid, opp[p], ta, tb);
        JointControlField joint = join_with_uniform_response(field, resp, ta, tb);
        MeasureFlow flow = generate_flow(sc, ta, m, joint, step, tb);
        m = flow.terminal();
        history.push_back(m);
        rec.cell_flows.push_back(std::move(flow));
        rec.controls.push_back(std::move(joint));
    }
    rec.outcome = payoff(sc, m);
    return rec;
}

// ---- adversarial estimation of J1 / J2 ----------------------------------------

enum class SearchMode { Exhaustive, Heuristic };

struct SearchOutcome {
    double value = 0.0;
    bool exhaustive = true;  // heuristic results are bounds, not exact values
    std::size_t evaluations = 0;
    std::vector<std::vector<std::size_t>> witness;  // extremal opponent table
};

namespace detail {

struct AdversarySearch {
    const Scenario& sc;
    double t0;
    const EmpiricalMeasure& m0;
    const FeedbackStrategy& strat;
    const TimeGrid& grid;
    double step;
    std::size_t cap;
    bool maximize;
    std::size_t atoms;

    std::size_t evals = 0;
    double best = 0.0;
    std::vector<std::vector<std::size_t>> best_table = {};

    double run_assignment(const std::vector<std::vector<std::size_t>>& table) {
        auto opp = tabled_opponent(table);
        RolloutRecord rec = rollout_impl(sc, t0, m0, strat, grid, opp, step);
        ++evals;
        return rec.outcome;
    }

    // depth-first enumeration over cells, adapting to the particle count of
    // each branch's own flow
    void dfs(std::size_t cell, const EmpiricalMeasure& m,
             std::vector<std::vector<std::size_t>>& chosen) {
        if (cell + 1 >= grid.nodes.size()) {
            double g = payoff(sc, m);
            ++evals;
            if (maximize ? g > best : g < best) {
                best = g;
                best_table = chosen;
            }
            return;
        }
        const double ta = grid.nodes[cell], tb = grid.nodes[cell + 1];
        ControlField field = strat.rule(ta, m);
        std::vector<std::size_t> assign(m.size(), 0);
        while (true) {
            if (evals > cap)
                throw SearchSpaceTooLarge("estimate_j: opponent space exceeds cap");
            std::vector<RelaxedSchedule> resp(m.size());
            const std::size_t other = atoms;
            for (std::size_t p = 0; p < m.size(); ++p)
                resp[p] = RelaxedSchedule::constant_atom(other, assign[p], ta, tb);
            JointControlField joint = join_with_uniform_response(field, resp, ta, tb);
            MeasureFlow flow = generate_flow(sc, ta, m, joint, step, tb);
            chosen.push_back(assign);
            dfs(cell + 1, flow.terminal(), chosen);
            chosen.pop_back();
            // odometer over this cell's assignment
            std::size_t slot = assign.size();
            bool done = true;
            while (slot > 0) {
                --slot;
                if (++assign[slot] < atoms) {
                    done = false;
                    break;
                }
                assign[slot] = 0;
            }
            if (done) break;
        }
    }
};

}  // namespace detail

// sup over the discretized opponent class of the rollout outcome (J1 for a
// first-player strategy). Exhaustive mode is exact over pure per-cell
// per-particle assignments; heuristic mode (coordinate ascent, seeded
// restarts) reports a bound and is flagged as such.
inline SearchOutcome estimate_j1(const Scenario& sc, double t0, const EmpiricalMeasure& m0,
                                 const FeedbackStrategy& strat, const TimeGrid& grid,
                                 SearchMode mode, double step, std::size_t cap = 1'000'000,
                                 std::uint64_t seed = 1, std::size_t restarts = 8) {
    if (strat.player != Player::First) throw Error("estimate_j1: first-player strategy required");
    grid.check(t0, sc.horizon);
    const std::size_t atoms = sc.grid_v.size();
    if (mode == SearchMode::Exhaustive) {
        double count = std::pow(static_cast<double>(atoms),
                                static_cast<double>(m0.size() * grid.cells()));
        if (count > static_cast<double>(cap))
            throw SearchSpaceTooLarge("estimate_j1: |V|^(N*cells) exceeds cap");
        detail::AdversarySearch search{sc, t0, m0, strat, grid, step, cap, true, atoms};
        search.best = -std::numeric_limits<double>::infinity();
        std::vector<std::vector<std::size_t>> chosen;
        search.dfs(0, m0, chosen);
        return {search.best, true, search.evals, search.best_table};
    }
    // heuristic coordinate ascent on flat tables
    SeedStream ss(seed);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::vector<std::size_t>> best_table;
    std::size_t evals = 0;
    detail::AdversarySearch search{sc, t0, m0, strat, grid, step, cap, true, atoms};
    for (std::size_t restart = 0; restart < restarts; ++restart) {
        auto g = ss.stream("j1_restart", restart);
        std::vector<std::vector<std::size_t>> table(grid.cells(),
                                                    std::vector<std::size_t>(m0.size()));
        for (auto& row : table)
            for (auto& a : row) a = restart == 0 ? 0 : uniform_index(g, atoms);
        double cur = search.run_assignment(table);
        bool improved = true;
        while (improved) {
            improved = false;
            for (std::size_t c = 0; c < table.size(); ++c)
                for (std::size_t p = 0; p < table[c].size(); ++p) {
                    std::size_t keep = table[c][p];
                    for (std::size_t a = 0; a < atoms; ++a) {
                        if (a == keep) continue;
                        table[c][p] = a;
                        double val = search.run_assignment(table);
                        if (val > cur + 1e-15) {
                            cur = val;
                            keep = a;
                            improved = true;
                        }
                    }
                    table[c][p] = keep;
                }
        }
        if (cur > best) {
            best = cur;
            best_table = table;
        }
        evals = search.evals;
    }
    return {best, false, evals, best_table};
}

inline SearchOutcome estimate_j2(const Scenario& sc, double t0, const EmpiricalMeasure& m0,
                                 const FeedbackStrategy& strat, const TimeGrid& grid,
                                 SearchMode mode, double step, std::size_t cap = 1'000'000,
                                 std::uint64_t seed = 1, std::size_t restarts = 8) {
    if (strat.player != Player::Second)
        throw Error("estimate_j2: second-player strategy required");
    grid.check(t0, sc.horizon);
    const std::size_t atoms = sc.grid_u.size();
    if (mode == SearchMode::Exhaustive) {
        double count = std::pow(static_cast<double>(atoms),
                                static_cast<double>(m0.size() * grid.cells()));
        if (count > static_cast<double>(cap))
            throw SearchSpaceTooLarge("estimate_j2: |U|^(N*cells) exceeds cap");
        detail::AdversarySearch search{sc, t0, m0, strat, grid, step, cap, false, atoms};
        search.best = std::numeric_limits<double>::infinity();
        std::vector<std::vector<std::size_t>> chosen;
        search.dfs(0, m0, chosen);
        return {search.best, true, search.evals, search.best_table};
    }
    SeedStream ss(seed);
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::vector<std::size_t>> best_table;
    std::size_t evals = 0;
    detail::AdversarySearch search{sc, t0, m0, strat, grid, step, cap, false, atoms};
    for (std::size_t restart = 0; restart < restarts; ++restart) {
        auto g = ss.stream("j2_restart", restart);
        std::vector<std::vector<std::size_t>> table(grid.cells(),
                                                    std::vector<std::size_t>(m0.size()));
        for (auto& row : table)
            for (auto& a : row) a = restart == 0 ? 0 : uniform_index(g, atoms);
        double cur = search.run_assignment(table);
        bool improved = true;
        while (improved) {
            improved = false;
            for (std::size_t c = 0; c < table.size(); ++c)
                for (std::size_t p = 0; p < table[c].size(); ++p) {
                    std::size_t keep = table[c][p];
                    for (std::size_t a = 0; a < atoms; ++a) {
                        if (a == keep) continue;
                        table[c][p] = a;
                        double val = search.run_assignment(table);
                        if (val < cur - 1e-15) {
                            cur = val;
                            keep = a;
                            improved = true;
                        }
                    }
                    table[c][p] = keep;
                }
        }
        if (cur < best) {
            best = cur;
            best_table = table;
        }
        evals = search.evals;
    }
    return {best, false, evals, best_table};
}

// ---- gamma estimates ------------------------------------------------------------

struct GammaRow {
    double eps = 0.0;
    std::size_t cells = 0;
    double value = 0.0;
    bool exhaustive = true;
};

struct GammaTable {
    std::vector<GammaRow> rows;
    double best = 0.0;  // running min (Gamma1) / max (Gamma2) over the table
};

inline GammaTable estimate_gamma1(const Scenario& sc, double t0, const EmpiricalMeasure& m0,
                                  const std::function<FeedbackStrategy(double eps)>& strategy_for,
                                  std::span<const double> eps_list,
                                  std::span<const std::size_t> cell_counts, SearchMode mode,
                                  double step, std::size_t cap = 1'000'000,
                                  std::uint64_t seed = 1) {
    GammaTable table;
    table.best = std::numeric_limits<double>::infinity();
    for (double eps : eps_list) {
        FeedbackStrategy strat = strategy_for(eps);
        for (std::size_t cells : cell_counts) {
            TimeGrid grid = TimeGrid::uniform(t0, sc.horizon, cells);
            SearchOutcome out = estimate_j1(sc, t0, m0, strat, grid, mode, step, cap, seed);
            table.rows.push_back({eps, cells, out.value, out.exhaustive});
            table.best = std::min(table.best, out.value);
        }
    }
    return table;
}

inline GammaTable estimate_gamma2(const Scenario& sc, double t0, const EmpiricalMeasure& m0,
                                  const std::function<FeedbackStrategy(double eps)>& strategy_for,
                                  std::span<const double> eps_list,
                                  std::span<const std::size_t> cell_counts, SearchMode mode,
                                  double step, std::size_t cap = 1'000'000,
                                  std::uint64_t seed = 1) {
    GammaTable table;
    table.best = -std::numeric_limits<double>::infinity();
    for (double eps : eps_list) {
        FeedbackStrategy strat = strategy_for(eps);
        for (std::size_t cells : cell_counts) {
            TimeGrid grid = TimeGrid::uniform(t0, sc.horizon, cells);
            SearchOutcome out = estimate_j2(sc, t0, m0, strat, grid, mode, step, cap, seed);
            table.rows.push_back({eps, cells, out.value, out.exhaustive});
            table.best = std::max(table.best, out.value);
        }
    }
    return table;
}

// ---- extremal shift as a feedback strategy --------------------------------------

// value_fn(t, m) is the claimed stable function (lower table for the first
// player, upper table for the second); candidates_at(t) is the finite search
// set for the target measure. The returned strategy holds a reference to the
// scenario and must not outlive it.
inline FeedbackStrategy make_extremal_strategy(
    const Scenario& sc, Player player, double eps, const ScenarioConstants& constants,
    std::function<double(double, const EmpiricalMeasure&)> value_fn,
    std::function<std::vector<EmpiricalMeasure>(double)> candidates_at) {
    FeedbackStrategy strat;
    strat.player = player;
    strat.rule = [=, &sc](double t, const EmpiricalMeasure& m) {
        ShiftConstants k{eps, constants, sc.dim};
        std::vector<EmpiricalMeasure> cands = candidates_at(t);
        auto objective = [&](const EmpiricalMeasure& mm) {
            double v = value_fn(t, mm);
            return player == Player::First ? v : -v;
        };
        TargetChoice choice = select_target(objective, t, m, k, cands);
        if (player == Player::First)
            return extremal_first_field(sc, t, m, choice.nu, choice.plan);
        return extremal_second_own_field(sc, t, m, choice.nu, choice.plan);
    };
    return strat;
}

// ---- rollout trace export ---------------------------------------------------------

// CSV trace: t, particle id, coords, u-atom, v-atom (-1 for mixed/relaxed
// components), then a summary row with the outcome.
inline void write_rollout_csv(std::ostream& os, const RolloutRecord& rec,
                              const std::vector<std::string>& header_comments = {}) {
    for (const auto& line : header_comments) os << "# " << line << "\n";
    os << "t,particle,";
    std::size_t dim = rec.cell_flows.front().measures.front().dim();
    for (std::size_t c = 0; c < dim; ++c) os << "x" << c << ",";
    os << "u_atom,v_atom\n";
    char buf[64];
    for (std::size_t cell = 0; cell < rec.cell_flows.size(); ++cell) {
        const MeasureFlow& flow = rec.cell_flows[cell];
        // component atoms per sub-particle, in generate_flow's order
        std::vector<std::pair<long, long>> atoms;
        if (cell < rec.controls.size()) {
            for (const auto& comps : rec.controls[cell].particles)
                for (const auto& comp : comps) {
                    if (comp.weight <= 0.0) continue;
                    auto ua = comp.u_schedule.pure_constant_atom();
                    auto va = comp.v_schedule.pure_constant_atom();
                    atoms.push_back({ua ? static_cast<long>(*ua) : -1,
                                     va ? static_cast<long>(*va) : -1});
                }
        }
        for (std::size_t n = 0; n < flow.time_grid.size(); ++n) {
            if (cell > 0 && n == 0) continue;  // node shared with previous cell
            for (std::size_t p = 0; p < flow.trajectories.size(); ++p) {
                std::snprintf(buf, sizeof(buf), "%.12g", flow.time_grid[n]);
                os << buf << "," << p << ",";
                for (std::size_t c = 0; c < dim; ++c) {
                    std::snprintf(buf, sizeof(buf), "%.12g",
                                  flow.trajectories[p].states[n][c]);
                    os << buf << ",";
                }
                long ua = p < atoms.size() ? atoms[p].first : -1;
                long va = p < atoms.size() ? atoms[p].second : -1;
                os << ua << "," << va << "\n";
            }
        }
    }
    std::snprintf(buf, sizeof(buf), "%.17g", rec.outcome);
    os << "# outcome," << buf << "\n";
}

}  // namespace mfdg
