#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mfdg/control.hpp"
#include "mfdg/dynamics.hpp"
#include "mfdg/engine.hpp"
#include "mfdg/errors.hpp"
#include "mfdg/measure.hpp"
#include "mfdg/rng.hpp"

namespace mfdg {

struct PimOptions {
    double resolution = 0.0125;
    double step = 0.0125;            // integrator step inside one cell
    std::size_t enum_cap = 1000000;  // per-node field/response enumeration
    double tol = 1e-9;
    std::size_t max_k = 16;
    std::size_t mixture_probes = 32;
    std::uint64_t seed = 1;
};

struct GraphNode {
    std::string key;
    EmpiricalMeasure rep;  // quantized, sorted, unmerged representative
};

// Finite domain for the value iteration: one node set per time-grid layer,
// keyed by canonical quantization, expanded by all pure per-particle joint
// cell assignments.
struct ReachableGraph {
    TimeGrid grid;
    double resolution = 0.0;
    std::vector<std::vector<GraphNode>> layers;
    std::vector<std::unordered_map<std::string, std::size_t>> index;
    // edges[layer][node][joint assignment rank] -> successor node index,
    // rank = u_rank * |V|^n + v_rank
    std::vector<std::vector<std::vector<std::size_t>>> edges;

    std::vector<std::size_t> layer_sizes() const {
        std::vector<std::size_t> s;
        for (const auto& l : layers) s.push_back(l.size());
        return s;
    }
    std::size_t node_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.size();
        return n;
    }
    std::optional<std::size_t> find(std::size_t layer, const std::string& key) const {
        auto it = index[layer].find(key);
        if (it == index[layer].end()) return std::nullopt;
        return it->second;
    }
};

namespace pim_detail {

// Quantized particle configuration: lattice cells + weights + a committed
// control label per particle (the constant field being held fixed).
struct Config {
    std::size_t dim = 1;
    std::vector<long long> cells;  // n*dim lattice coordinates
    std::vector<double> weights;
    std::vector<int> labels;  // committed atom per particle, -1 when none

    std::size_t particles() const { return weights.size(); }

    std::string key_with_labels() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < particles(); ++i) {
            for (std::size_t c = 0; c < dim; ++c) os << cells[i * dim + c] << ",";
            os << detail::format_weight(weights[i]) << "|" << labels[i] << ";";
        }
        return os.str();
    }
};

inline long long quantize_coord(double x, double resolution) {
    const double inv = 1.0 / resolution;
    const long long lattice = std::llround(inv);
    long long q = std::llround(x * inv);
    if (std::abs(inv - static_cast<double>(lattice)) < 1e-9) q = ((q % lattice) + lattice) % lattice;
    return q;
}

inline void sort_config(Config& cfg) {
    const std::size_t n = cfg.particles();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        for (std::size_t c = 0; c < cfg.dim; ++c) {
            if (cfg.cells[a * cfg.dim + c] != cfg.cells[b * cfg.dim + c])
                return cfg.cells[a * cfg.dim + c] < cfg.cells[b * cfg.dim + c];
        }
        if (cfg.weights[a] != cfg.weights[b]) return cfg.weights[a] < cfg.weights[b];
        return cfg.labels[a] < cfg.labels[b];
    });
    Config out = cfg;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < cfg.dim; ++c)
            out.cells[i * cfg.dim + c] = cfg.cells[order[i] * cfg.dim + c];
        out.weights[i] = cfg.weights[order[i]];
        out.labels[i] = cfg.labels[order[i]];
    }
    cfg = std::move(out);
}

inline Config config_from_measure(const EmpiricalMeasure& m, double resolution) {
    Config cfg;
    cfg.dim = m.dim();
    cfg.cells.resize(m.size() * m.dim());
    cfg.weights = m.weights;
    cfg.labels.assign(m.size(), -1);
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t c = 0; c < m.dim(); ++c)
            cfg.cells[i * m.dim() + c] = quantize_coord(m.points[i][c], resolution);
    sort_config(cfg);
    return cfg;
}

inline EmpiricalMeasure measure_from_config(const Config& cfg, double resolution) {
    EmpiricalMeasure m;
    m.weights = cfg.weights;
    m.points.reserve(cfg.particles());
    for (std::size_t i = 0; i < cfg.particles(); ++i) {
        std::vector<double> coords(cfg.dim);
        for (std::size_t c = 0; c < cfg.dim; ++c)
            coords[c] = wrap_coord(static_cast<double>(cfg.cells[i * cfg.dim + c]) * resolution);
        m.points.push_back(TorusPoint(std::move(coords)));
    }
    return m;
}

inline std::string strip_key(const Config& cfg, double resolution) {
    return canonical_key(measure_from_config(cfg, resolution), resolution);
}

// One-cell hop: integrate the configuration under pure per-particle atoms,
// then re-quantize and sort (labels travel with their particles).
inline Config cell_hop(const Scenario& sc, const TimeGrid& grid, double resolution, double step,
                       std::size_t layer, const Config& from,
                       const std::vector<std::size_t>& u_atoms,
                       const std::vector<std::size_t>& v_atoms) {
    const double ta = grid.nodes[layer], tb = grid.nodes[layer + 1];
    EmpiricalMeasure m = measure_from_config(from, resolution);
    JointControlField joint =
        joint_pure_field(u_atoms, v_atoms, sc.grid_u.size(), sc.grid_v.size(), ta, tb);
    MeasureFlow flow = generate_flow(sc, ta, m, joint, step, tb);
    const EmpiricalMeasure& end = flow.terminal();
    Config out;
    out.dim = from.dim;
    out.weights = from.weights;
    out.labels = from.labels;
    out.cells.resize(from.cells.size());
    for (std::size_t i = 0; i < end.size(); ++i)
        for (std::size_t c = 0; c < from.dim; ++c)
            out.cells[i * from.dim + c] = quantize_coord(end.points[i][c], resolution);
    sort_config(out);
    return out;
}

// odometer over per-particle atom assignments; resets to all-zero on wrap
inline bool next_assignment(std::vector<std::size_t>& a, std::size_t base) {
    std::size_t slot = a.size();
    while (slot > 0) {
        --slot;
        if (++a[slot] < base) return true;
        a[slot] = 0;
    }
    return false;
}

}  // namespace pim_detail

inline ReachableGraph build_graph(const Scenario& sc, double t0, const EmpiricalMeasure& m0,
                                  const TimeGrid& grid, double resolution, std::size_t cap,
                                  double step) {
    grid.check(t0, sc.horizon);
    m0.validate();
    ReachableGraph g;
    g.grid = grid;
    g.resolution = resolution;
    const std::size_t layers = grid.nodes.size();
    g.layers.resize(layers);
    g.index.resize(layers);
    g.edges.resize(layers);

    auto insert_node = [&](std::size_t layer, const pim_detail::Config& cfg) -> std::size_t {
        EmpiricalMeasure rep = pim_detail::measure_from_config(cfg, resolution);
        std::string key = canonical_key(rep, resolution);
        auto it = g.index[layer].find(key);
        if (it != g.index[layer].end()) return it->second;
        g.layers[layer].push_back({key, rep});
        std::size_t idx = g.layers[layer].size() - 1;
        g.index[layer][key] = idx;
        return idx;
    };

    insert_node(0, pim_detail::config_from_measure(m0, resolution));

    auto layer_diag = [&]() {
        std::string s = "layer sizes";
        for (const auto& layer : g.layers) s += " " + std::to_string(layer.size());
        return s;
    };
    const std::size_t nu = sc.grid_u.size(), nv = sc.grid_v.size();
    for (std::size_t layer = 0; layer + 1 < layers; ++layer) {
        g.edges[layer].resize(g.layers[layer].size());
        for (std::size_t node = 0; node < g.layers[layer].size(); ++node) {
            pim_detail::Config cfg =
                pim_detail::config_from_measure(g.layers[layer][node].rep, resolution);
            const std::size_t n = cfg.particles();
            double joint_count = std::pow(static_cast<double>(nu * nv), static_cast<double>(n));
            if (joint_count > static_cast<double>(cap))
                throw GraphTooLarge("build_graph: joint assignment count exceeds cap; " +
                                    layer_diag());
            std::vector<std::size_t> ua(n, 0), va(n, 0);
            std::vector<std::size_t>& out = g.edges[layer][node];
            while (true) {
                pim_detail::Config succ =
                    pim_detail::cell_hop(sc, grid, resolution, step, layer, cfg, ua, va);
                out.push_back(insert_node(layer + 1, succ));
                if (g.node_count() > cap)
                    throw GraphTooLarge("build_graph: node cap exceeded; " + layer_diag());
                if (!pim_detail::next_assignment(va, nv)) {
                    if (!pim_detail::next_assignment(ua, nu)) break;
                }
            }
        }
    }
    return g;
}

// ---- value tables ----------------------------------------------------------------

struct Witness {
    bool has = false;
    std::size_t r_index = 0;                  // switch layer; r = s encodes "descend in place"
    std::vector<std::size_t> committed;       // committed atoms (beta for lower, alpha for upper)
    std::vector<std::size_t> first_response;  // lexicographic-first optimal response, first cell
};

struct ValueTable {
    enum class Kind { Lower, Upper };
    Kind kind = Kind::Lower;
    std::size_t iteration = 0;
    std::vector<std::vector<double>> values;
    std::vector<std::vector<Witness>> witnesses;
    bool converged = false;

    double root_value() const { return values.at(0).at(0); }
};

namespace pim_detail {

// Random-mixture probe: the committed field stays fixed, the searching side
// plays a random mixture of pure piecewise-constant schedules; particles
// split once and the ensemble follows the same quantized hops.
inline double mixture_probe_value(const Scenario& sc, const ReachableGraph& g,
                                  std::size_t start_layer, const Config& start, bool lower,
                                  std::mt19937_64& rng, double step) {
    const std::size_t last = g.grid.nodes.size() - 1;
    const std::size_t cells = last - start_layer;
    const std::size_t search_base = lower ? sc.grid_u.size() : sc.grid_v.size();

    struct SubPlan {
        std::vector<std::size_t> plan;
        double weight;
        std::size_t origin;
    };
    std::vector<SubPlan> subs;
    for (std::size_t i = 0; i < start.particles(); ++i) {
        double w = uniform01(rng);
        for (int comp = 0; comp < 2; ++comp) {
            SubPlan sp;
            sp.origin = i;
            sp.weight = comp == 0 ? w : 1.0 - w;
            sp.plan.resize(cells);
            for (auto& a : sp.plan) a = uniform_index(rng, search_base);
            if (sp.weight > 0.0) subs.push_back(std::move(sp));
        }
    }
    Config cfg;
    cfg.dim = start.dim;
    for (const auto& sp : subs) {
        for (std::size_t c = 0; c < start.dim; ++c)
            cfg.cells.push_back(start.cells[sp.origin * start.dim + c]);
        cfg.weights.push_back(start.weights[sp.origin] * sp.weight);
        cfg.labels.push_back(start.labels[sp.origin]);
    }
    for (std::size_t cell = 0; cell < cells; ++cell) {
        std::size_t layer = start_layer + cell;
        const double ta = g.grid.nodes[layer], tb = g.grid.nodes[layer + 1];
        EmpiricalMeasure m = measure_from_config(cfg, g.resolution);
        double tot = 0.0;
        for (double w : m.weights) tot += w;
        for (double& w : m.weights) w /= tot;
        std::vector<std::size_t> ua(subs.size()), va(subs.size());
        for (std::size_t s = 0; s < subs.size(); ++s) {
            std::size_t searching = subs[s].plan[cell];
            std::size_t held = static_cast<std::size_t>(cfg.labels[s]);
            ua[s] = lower ? searching : held;
            va[s] = lower ? held : searching;
        }
        JointControlField joint =
            joint_pure_field(ua, va, sc.grid_u.size(), sc.grid_v.size(), ta, tb);
        MeasureFlow flow = generate_flow(sc, ta, m, joint, step, tb);
        const EmpiricalMeasure& end = flow.terminal();
        for (std::size_t s = 0; s < subs.size(); ++s)
            for (std::size_t c = 0; c < cfg.dim; ++c)
                cfg.cells[s * cfg.dim + c] = quantize_coord(end.points[s][c], g.resolution);
    }
    EmpiricalMeasure terminal = measure_from_config(cfg, g.resolution);
    double tot = 0.0;
    for (double w : terminal.weights) tot += w;
    for (double& w : terminal.weights) w /= tot;
    return payoff(sc, terminal);
}

}  // namespace pim_detail

struct BaseSolveReport {
    double mixture_gap = 0.0;  // best improvement any sampled mixture achieved
    std::size_t probes_run = 0;
};

namespace pim_detail {

// Globally interned labeled-state space, one per machinery side. Every
// (node, committed field) start seeds a state at its layer; each state is
// expanded exactly once over the searching side's assignments. Operator
// sweeps are then backward passes over this fixed space, so iterating to
// stall costs little beyond the one-time expansion.
class SweepEngine {
  public:
    SweepEngine(const Scenario& sc, const ReachableGraph& g, const PimOptions& opts)
        : sc_(sc), g_(g), opts_(opts) {}

    ValueTable base(bool lower, BaseSolveReport* report = nullptr) {
        Space& sp = space(lower);
        const std::size_t last = g_.grid.nodes.size() - 1;
        ValueTable table = empty_table(lower, 0);

        std::vector<double> boundary(sp.states[last].size());
        for (std::size_t si = 0; si < sp.states[last].size(); ++si)
            boundary[si] = payoff(sc_, measure_from_config(sp.states[last][si], g_.resolution));
        auto back = backward(sp, lower, last, boundary);

        for (std::size_t node = 0; node < g_.layers[last].size(); ++node) {
            table.values[last][node] = payoff(sc_, g_.layers[last][node].rep);
            table.witnesses[last][node] = {};
        }
        for (std::size_t layer = 0; layer < last; ++layer)
            for (std::size_t node = 0; node < g_.layers[layer].size(); ++node) {
                double best = lower ? -std::numeric_limits<double>::infinity()
                                    : std::numeric_limits<double>::infinity();
                Witness witness;
                for (std::size_t beta = 0; beta < sp.seeds[layer][node].size(); ++beta) {
                    double v = back[layer][sp.seeds[layer][node][beta]];
                    if (lower ? v > best + 1e-15 : v < best - 1e-15) {
                        best = v;
                        witness = make_witness(sp, lower, layer, node, beta, last, back);
                    }
                }
                table.values[layer][node] = best;
                table.witnesses[layer][node] = std::move(witness);
            }

        if (report) run_probes(table, lower, *report);
        return table;
    }

    ValueTable apply(const ValueTable& prev) {
        const bool lower = prev.kind == ValueTable::Kind::Lower;
        Space& sp = space(lower);
        const std::size_t last = g_.grid.nodes.size() - 1;
        ValueTable table = empty_table(lower, prev.iteration + 1);

        // r = s branch: the empty evolution keeps the previous value, so
        // monotonicity is exact
        for (std::size_t layer = 0; layer <= last; ++layer)
            for (std::size_t node = 0; node < g_.layers[layer].size(); ++node) {
                table.values[layer][node] = prev.values[layer][node];
                Witness w;
                w.has = true;
                w.r_index = layer;
                table.witnesses[layer][node] = std::move(w);
            }

        for (std::size_t r = 1; r <= last; ++r) {
            std::vector<double> boundary(sp.states[r].size());
            for (std::size_t si = 0; si < sp.states[r].size(); ++si)
                boundary[si] = prev.values[r][sp.node_of[r][si]];
            auto back = backward(sp, lower, r, boundary);
            for (std::size_t layer = 0; layer < r; ++layer)
                for (std::size_t node = 0; node < g_.layers[layer].size(); ++node) {
                    for (std::size_t beta = 0; beta < sp.seeds[layer][node].size(); ++beta) {
                        double v = back[layer][sp.seeds[layer][node][beta]];
                        double& best = table.values[layer][node];
                        if (lower ? v > best + 1e-15 : v < best - 1e-15) {
                            best = v;
                            table.witnesses[layer][node] =
                                make_witness(sp, lower, layer, node, beta, r, back);
                        }
                    }
                }
        }
        return table;
    }

  private:
    struct Space {
        bool built = false;
        std::vector<std::vector<Config>> states;                   // [layer]
        std::vector<std::unordered_map<std::string, std::size_t>> ids;
        std::vector<std::vector<std::vector<std::size_t>>> trans;  // [layer][state][rank]
        std::vector<std::vector<std::size_t>> node_of;             // [layer][state] -> node
        std::vector<std::vector<std::vector<std::size_t>>> seeds;  // [layer][node][beta_rank]
    };

    const Scenario& sc_;
    const ReachableGraph& g_;
    PimOptions opts_;
    Space lower_space_, upper_space_;

    ValueTable empty_table(bool lower, std::size_t iteration) const {
        ValueTable t;
        t.kind = lower ? ValueTable::Kind::Lower : ValueTable::Kind::Upper;
        t.iteration = iteration;
        t.values.resize(g_.layers.size());
        t.witnesses.resize(g_.layers.size());
        for (std::size_t l = 0; l < g_.layers.size(); ++l) {
            t.values[l].resize(g_.layers[l].size());
            t.witnesses[l].resize(g_.layers[l].size());
        }
        return t;
    }

    std::size_t intern(Space& sp, std::size_t layer, Config cfg) {
        std::string key = cfg.key_with_labels();
        auto it = sp.ids[layer].find(key);
        if (it != sp.ids[layer].end()) return it->second;
        auto node = g_.find(layer, strip_key(cfg, g_.resolution));
        if (!node) throw TableIncomplete("pim: reached configuration missing from graph");
        std::size_t id = sp.states[layer].size();
        sp.states[layer].push_back(std::move(cfg));
        sp.node_of[layer].push_back(*node);
        sp.ids[layer].emplace(std::move(key), id);
        return id;
    }

    Config hop_once(std::size_t layer, const Config& from, const std::vector<std::size_t>& search,
                    bool lower) const {
        const std::size_t n = from.particles();
        std::vector<std::size_t> ua(n), va(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t held = static_cast<std::size_t>(from.labels[i]);
            ua[i] = lower ? search[i] : held;
            va[i] = lower ? held : search[i];
        }
        return cell_hop(sc_, g_.grid, g_.resolution, opts_.step, layer, from, ua, va);
    }

    Space& space(bool lower) {
        Space& sp = lower ? lower_space_ : upper_space_;
        if (sp.built) return sp;
        const std::size_t layers = g_.grid.nodes.size();
        const std::size_t last = layers - 1;
        const std::size_t commit_base = lower ? sc_.grid_v.size() : sc_.grid_u.size();
        const std::size_t search_base = lower ? sc_.grid_u.size() : sc_.grid_v.size();
        sp.states.resize(layers);
        sp.ids.resize(layers);
        sp.trans.resize(layers);
        sp.node_of.resize(layers);
        sp.seeds.resize(layers);
        for (std::size_t layer = 0; layer < layers; ++layer) {
            if (layer < last) {
                sp.seeds[layer].resize(g_.layers[layer].size());
                for (std::size_t node = 0; node < g_.layers[layer].size(); ++node) {
                    Config base_cfg =
                        config_from_measure(g_.layers[layer][node].rep, g_.resolution);
                    const std::size_t n = base_cfg.particles();
                    double count =
                        std::pow(static_cast<double>(commit_base), static_cast<double>(n));
                    if (count > static_cast<double>(opts_.enum_cap))
                        throw SearchSpaceTooLarge("pim: committed-field enumeration exceeds cap");
                    std::vector<std::size_t> committed(n, 0);
                    do {
                        Config seeded = base_cfg;
                        for (std::size_t i = 0; i < n; ++i)
                            seeded.labels[i] = static_cast<int>(committed[i]);
                        sort_config(seeded);
                        sp.seeds[layer][node].push_back(intern(sp, layer, std::move(seeded)));
                    } while (next_assignment(committed, commit_base));
                }
            }
            if (layer == last) break;
            sp.trans[layer].resize(sp.states[layer].size());
            for (std::size_t si = 0; si < sp.states[layer].size(); ++si) {
                const Config& state = sp.states[layer][si];
                const std::size_t n = state.particles();
                double count = std::pow(static_cast<double>(search_base), static_cast<double>(n));
                if (count > static_cast<double>(opts_.enum_cap))
                    throw SearchSpaceTooLarge("pim: response enumeration exceeds cap");
                std::vector<std::size_t> assign(n, 0);
                do {
                    Config succ = hop_once(layer, state, assign, lower);
                    sp.trans[layer][si].push_back(intern(sp, layer + 1, std::move(succ)));
                } while (next_assignment(assign, search_base));
            }
        }
        sp.built = true;
        return sp;
    }

    // back[j][state] for j <= r: optimal-response value toward the boundary
    // at layer r. Deterministic dynamics make adaptive and open-loop
    // responses equivalent, so the dynamic program is exact for the inf/sup
    // over pure piecewise-constant responses.
    std::vector<std::vector<double>> backward(const Space& sp, bool lower, std::size_t r,
                                              const std::vector<double>& boundary) const {
        std::vector<std::vector<double>> back(r + 1);
        back[r] = boundary;
        for (std::size_t j = r; j-- > 0;) {
            back[j].resize(sp.states[j].size());
            for (std::size_t si = 0; si < sp.states[j].size(); ++si) {
                const auto& row = sp.trans[j][si];
                double best = lower ? std::numeric_limits<double>::infinity()
                                    : -std::numeric_limits<double>::infinity();
                for (std::size_t id : row) {
                    double v = back[j + 1][id];
                    if (lower ? v < best : v > best) best = v;
                }
                back[j][si] = best;
            }
        }
        return back;
    }

    static std::vector<std::size_t> decode_rank(std::size_t rank, std::size_t base,
                                                std::size_t digits) {
        std::vector<std::size_t> out(digits, 0);
        for (std::size_t i = digits; i-- > 0;) {
            out[i] = rank % base;
            rank /= base;
        }
        return out;
    }

    Witness make_witness(const Space& sp, bool lower, std::size_t layer, std::size_t node,
                         std::size_t beta_rank, std::size_t r,
                         const std::vector<std::vector<double>>& back) const {
        const std::size_t commit_base = lower ? sc_.grid_v.size() : sc_.grid_u.size();
        const std::size_t search_base = lower ? sc_.grid_u.size() : sc_.grid_v.size();
        const std::size_t seed = sp.seeds[layer][node][beta_rank];
        const std::size_t n = sp.states[layer][seed].particles();
        Witness w;
        w.has = true;
        w.r_index = r;
        w.committed = decode_rank(beta_rank, commit_base, n);
        const auto& row = sp.trans[layer][seed];
        double best = lower ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
        std::size_t best_rank = 0;
        for (std::size_t rank = 0; rank < row.size(); ++rank) {
            double v = back[layer + 1][row[rank]];
            if (lower ? v < best : v > best) {
                best = v;
                best_rank = rank;
            }
        }
        w.first_response = decode_rank(best_rank, search_base, n);
        return w;
    }

    void run_probes(const ValueTable& table, bool lower, BaseSolveReport& report) {
        if (opts_.mixture_probes == 0) return;
        SeedStream ss(opts_.seed);
        report.mixture_gap = 0.0;
        report.probes_run = 0;
        for (std::size_t layer = 0; layer + 1 < g_.layers.size(); ++layer)
            for (std::size_t node = 0; node < g_.layers[layer].size(); ++node) {
                if (!table.witnesses[layer][node].has) continue;
                Config start = config_from_measure(g_.layers[layer][node].rep, g_.resolution);
                const auto& committed = table.witnesses[layer][node].committed;
                if (committed.size() != start.particles()) continue;
                for (std::size_t i = 0; i < start.particles(); ++i)
                    start.labels[i] = static_cast<int>(committed[i]);
                sort_config(start);
                auto rng = ss.stream("mixture_probe", layer * 1000003ull + node);
                for (std::size_t p = 0; p < opts_.mixture_probes; ++p) {
                    double v = mixture_probe_value(sc_, g_, layer, start, lower, rng, opts_.step);
                    double gap =
                        lower ? table.values[layer][node] - v : v - table.values[layer][node];
                    report.mixture_gap = std::max(report.mixture_gap, gap);
                    ++report.probes_run;
                }
            }
    }
};

}  // namespace pim_detail

inline ValueTable omega_base(const Scenario& sc, const ReachableGraph& g, const PimOptions& opts,
                             bool lower, BaseSolveReport* report = nullptr) {
    pim_detail::SweepEngine engine(sc, g, opts);
    return engine.base(lower, report);
}

inline ValueTable omega_lower_0(const Scenario& sc, const ReachableGraph& g,
                                const PimOptions& opts, BaseSolveReport* report = nullptr) {
    return omega_base(sc, g, opts, true, report);
}

inline ValueTable omega_upper_0(const Scenario& sc, const ReachableGraph& g,
                                const PimOptions& opts, BaseSolveReport* report = nullptr) {
    return omega_base(sc, g, opts, false, report);
}

inline ValueTable apply_operator(const Scenario& sc, const ReachableGraph& g,
                                 const PimOptions& opts, const ValueTable& prev) {
    pim_detail::SweepEngine engine(sc, g, opts);
    return engine.apply(prev);
}

inline ValueTable apply_phi(const Scenario& sc, const ReachableGraph& g, const PimOptions& opts,
                            const ValueTable& prev) {
    if (prev.kind != ValueTable::Kind::Lower) throw Error("apply_phi: lower table required");
    return apply_operator(sc, g, opts, prev);
}

inline ValueTable apply_psi(const Scenario& sc, const ReachableGraph& g, const PimOptions& opts,
                            const ValueTable& prev) {
    if (prev.kind != ValueTable::Kind::Upper) throw Error("apply_psi: upper table required");
    return apply_operator(sc, g, opts, prev);
}

struct GapRow {
    std::size_t k = 0;
    double delta_lower = 0.0;
    double delta_upper = 0.0;
    double root_gap = 0.0;
};

struct IterateResult {
    std::vector<ValueTable> lower_tables;  // omega_0 .. omega_K
    std::vector<ValueTable> upper_tables;
    std::vector<GapRow> gap_history;
    bool converged = false;
    double root_gap = 0.0;
    double mixture_gap = 0.0;
};

inline double table_delta(const ValueTable& a, const ValueTable& b) {
    double d = 0.0;
    for (std::size_t l = 0; l < a.values.size(); ++l)
        for (std::size_t n = 0; n < a.values[l].size(); ++n)
            d = std::max(d, std::abs(a.values[l][n] - b.values[l][n]));
    return d;
}

// Alternate Phi and Psi sweeps on independent tables until both stall or
// max_k; non-convergence is reported, not thrown. The labeled-state spaces
// are built once and reused by every sweep.
inline IterateResult iterate(const Scenario& sc, const ReachableGraph& g, const PimOptions& opts) {
    IterateResult res;
    pim_detail::SweepEngine engine(sc, g, opts);
    BaseSolveReport lo_rep, up_rep;
    res.lower_tables.push_back(engine.base(true, &lo_rep));
    res.upper_tables.push_back(engine.base(false, &up_rep));
    res.mixture_gap = std::max(lo_rep.mixture_gap, up_rep.mixture_gap);
    res.gap_history.push_back(
        {0, 0.0, 0.0,
         res.upper_tables.back().root_value() - res.lower_tables.back().root_value()});
    for (std::size_t k = 1; k <= opts.max_k; ++k) {
        ValueTable lo = engine.apply(res.lower_tables.back());
        ValueTable up = engine.apply(res.upper_tables.back());
        double dl = table_delta(lo, res.lower_tables.back());
        double du = table_delta(up, res.upper_tables.back());
        res.lower_tables.push_back(std::move(lo));
        res.upper_tables.push_back(std::move(up));
        res.gap_history.push_back(
            {k, dl, du,
             res.upper_tables.back().root_value() - res.lower_tables.back().root_value()});
        if (dl < opts.tol && du < opts.tol) {
            res.converged = true;
            break;
        }
    }
    res.lower_tables.back().converged = res.converged;
    res.upper_tables.back().converged = res.converged;
    res.root_gap = res.upper_tables.back().root_value() - res.lower_tables.back().root_value();
    return res;
}

// ---- discrete stability checks -----------------------------------------------------

struct StabilityReport {
    double max_excess_lower = 0.0;  // max over nodes of Phi[psi1] - psi1
    double max_excess_upper = 0.0;  // max over nodes of psi2 - Psi[psi2]
    bool ok(double tol) const { return max_excess_lower <= tol && max_excess_upper <= tol; }
};

inline StabilityReport check_stability(const Scenario& sc, const ReachableGraph& g,
                                       const PimOptions& opts, const ValueTable& lower,
                                       const ValueTable& upper) {
    StabilityReport rep;
    ValueTable phi = apply_phi(sc, g, opts, lower);
    ValueTable psi = apply_psi(sc, g, opts, upper);
    for (std::size_t l = 0; l < g.layers.size(); ++l)
        for (std::size_t node = 0; node < g.layers[l].size(); ++node) {
            rep.max_excess_lower =
                std::max(rep.max_excess_lower, phi.values[l][node] - lower.values[l][node]);
            rep.max_excess_upper =
                std::max(rep.max_excess_upper, upper.values[l][node] - psi.values[l][node]);
        }
    return rep;
}

// ---- q-strategies from the iterates -------------------------------------------------

namespace pim_detail {

// Map a committed assignment (indexed by the node representative's sorted
// particle order) onto the observed measure's particle order.
inline ControlField committed_field_for(const Scenario& sc,
                                        const std::vector<std::size_t>& committed,
                                        const EmpiricalMeasure& current, double resolution) {
    if (committed.size() != current.size())
        throw TableIncomplete("q-strategy: witness does not cover the observed measure");
    const std::size_t n = current.size();
    std::vector<long long> cells(n * current.dim());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < current.dim(); ++c)
            cells[i * current.dim() + c] = quantize_coord(current.points[i][c], resolution);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        for (std::size_t c = 0; c < current.dim(); ++c) {
            if (cells[a * current.dim() + c] != cells[b * current.dim() + c])
                return cells[a * current.dim() + c] < cells[b * current.dim() + c];
        }
        return current.weights[a] < current.weights[b];
    });
    std::vector<std::size_t> atoms(n, 0);
    for (std::size_t rank = 0; rank < n; ++rank) atoms[order[rank]] = committed[rank];
    return ControlField::constant_pure(Player::Second, atoms, sc.grid_v.size());
}

}  // namespace pim_detail

// Stepwise memory strategy of the second player built from the argmax
// witnesses: play the committed field of the top level until its recorded
// switch layer, then recurse one level down from the observed measure. The
// strategy references the scenario and graph and must not outlive them.
inline MemoryStrategy build_q_strategy(const Scenario& sc, const ReachableGraph& g,
                                       std::span<const ValueTable> lower_tables, double eps) {
    if (lower_tables.empty()) throw TableIncomplete("build_q_strategy: no tables");
    for (const auto& t : lower_tables)
        if (t.kind != ValueTable::Kind::Lower)
            throw TableIncomplete("build_q_strategy: lower tables required");
    (void)eps;  // exhaustive witnesses are exact maximizers; eps only scales the guarantee

    const std::size_t k_max = lower_tables.size() - 1;
    const double resolution = g.resolution;
    std::vector<ValueTable> tables(lower_tables.begin(), lower_tables.end());

    MemoryStrategy q;
    q.player = Player::Second;
    q.grid = g.grid;
    q.rule = [&sc, &g, tables = std::move(tables), k_max,
              resolution](std::size_t cell, std::span<const EmpiricalMeasure> history)
        -> ControlField {
        auto node_of = [&](std::size_t layer, const EmpiricalMeasure& m) {
            auto idx = g.find(layer, canonical_key(m, resolution));
            if (!idx) throw TableIncomplete("q-strategy: observed measure not a graph node");
            return *idx;
        };
        std::size_t level = k_max;
        std::size_t seg_layer = 0;
        std::size_t seg_node = node_of(0, history[0]);
        while (level > 0) {
            const Witness& w = tables[level].witnesses[seg_layer][seg_node];
            if (!w.has) throw TableIncomplete("q-strategy: missing witness");
            if (w.r_index <= seg_layer) {
                --level;  // r = s branch: descend in place
                continue;
            }
            if (cell < w.r_index)
                return pim_detail::committed_field_for(sc, w.committed, history[cell], resolution);
            seg_layer = w.r_index;
            seg_node = node_of(seg_layer, history[w.r_index]);
            --level;
        }
        const Witness& w0 = tables[0].witnesses[seg_layer][seg_node];
        if (!w0.has) throw TableIncomplete("q-strategy: missing base witness");
        return pim_detail::committed_field_for(sc, w0.committed, history[cell], resolution);
    };
    return q;
}

// ---- persistence ---------------------------------------------------------------------

inline void save_table(std::ostream& os, const ReachableGraph& g, const ValueTable& t) {
    os << "# mfdg-table kind=" << (t.kind == ValueTable::Kind::Lower ? "lower" : "upper")
       << " k=" << t.iteration << " layers=" << g.layers.size() << "\n";
    os << "# columns: layer node_key time k value witness_r witness_committed witness_response\n";
    char buf[64];
    auto join = [](const std::vector<std::size_t>& v) {
        if (v.empty()) return std::string("-");
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            s += std::to_string(v[i]);
            if (i + 1 < v.size()) s += ",";
        }
        return s;
    };
    for (std::size_t l = 0; l < g.layers.size(); ++l)
        for (std::size_t node = 0; node < g.layers[l].size(); ++node) {
            const Witness& w = t.witnesses[l][node];
            std::snprintf(buf, sizeof(buf), "%.17g", t.values[l][node]);
            os << l << " " << g.layers[l][node].key << " " << g.grid.nodes[l] << " "
               << t.iteration << " " << buf << " " << (w.has ? std::to_string(w.r_index) : "-")
               << " " << join(w.committed) << " " << join(w.first_response) << "\n";
        }
}

inline ValueTable load_table(std::istream& is, const ReachableGraph& g) {
    ValueTable t;
    std::string line;
    bool header = false;
    t.values.resize(g.layers.size());
    t.witnesses.resize(g.layers.size());
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        t.values[l].assign(g.layers[l].size(), std::numeric_limits<double>::quiet_NaN());
        t.witnesses[l].resize(g.layers[l].size());
    }
    auto split_ints = [](const std::string& s) {
        std::vector<std::size_t> v;
        if (s == "-") return v;
        std::istringstream is2(s);
        std::string tok;
        while (std::getline(is2, tok, ',')) v.push_back(std::stoul(tok));
        return v;
    };
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.find("mfdg-table") != std::string::npos) {
                header = true;
                t.kind = line.find("kind=lower") != std::string::npos ? ValueTable::Kind::Lower
                                                                      : ValueTable::Kind::Upper;
                auto pos = line.find(" k=");
                if (pos != std::string::npos) t.iteration = std::stoul(line.substr(pos + 3));
            }
            continue;
        }
        std::istringstream row(line);
        std::size_t layer, k;
        std::string key, wr, wc, wresp;
        double time, value;
        if (!(row >> layer >> key >> time >> k >> value >> wr >> wc >> wresp))
            throw TableIncomplete("load_table: malformed row");
        auto idx = g.find(layer, key);
        if (!idx) throw TableIncomplete("load_table: node key not in graph");
        t.values[layer][*idx] = value;
        Witness w;
        if (wr != "-") {
            w.has = true;
            w.r_index = std::stoul(wr);
            w.committed = split_ints(wc);
            w.first_response = split_ints(wresp);
        }
        t.witnesses[layer][*idx] = std::move(w);
    }
    if (!header) throw TableIncomplete("load_table: missing header");
    for (std::size_t l = 0; l < g.layers.size(); ++l)
        for (double v : t.values[l])
            if (std::isnan(v)) throw TableIncomplete("load_table: node without value");
    return t;
}

}  // namespace mfdg
