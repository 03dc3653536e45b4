#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mfdg/errors.hpp"
#include "mfdg/torus.hpp"

namespace mfdg {

// Weighted particle cloud on the torus. Duplicate points are allowed; the
// represented measure is the same whether or not coincident atoms are merged.
struct EmpiricalMeasure {
    std::vector<TorusPoint> points;
    std::vector<double> weights;

    EmpiricalMeasure() = default;
    EmpiricalMeasure(std::vector<TorusPoint> p, std::vector<double> w)
        : points(std::move(p)), weights(std::move(w)) {}

    static EmpiricalMeasure uniform(std::vector<TorusPoint> p) {
        std::size_t n = p.size();
        return EmpiricalMeasure(std::move(p), std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    static EmpiricalMeasure dirac(TorusPoint p) {
        return EmpiricalMeasure({std::move(p)}, {1.0});
    }

    std::size_t size() const { return points.size(); }
    std::size_t dim() const { return points.empty() ? 0 : points[0].dim(); }

    void validate() const {
        if (points.empty()) throw InvalidMeasure("empty measure");
        if (points.size() != weights.size()) throw InvalidMeasure("points/weights size mismatch");
        double s = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (points[i].dim() != dim()) throw InvalidMeasure("mixed dimensions");
            if (!(weights[i] > 0.0)) throw InvalidMeasure("non-positive weight");
            s += weights[i];
        }
        if (std::abs(s - 1.0) > 1e-12) throw InvalidMeasure("weights do not sum to 1");
    }

    bool is_uniform(double tol = 1e-12) const {
        double w0 = 1.0 / static_cast<double>(size());
        for (double w : weights)
            if (std::abs(w - w0) > tol) return false;
        return true;
    }
};

struct PlanEntry {
    std::size_t row = 0;
    std::size_t col = 0;
    double mass = 0.0;
};

// Coupling between two empirical measures, stored sparsely.
struct TransportPlan {
    std::vector<PlanEntry> entries;
    EmpiricalMeasure source;
    EmpiricalMeasure target;

    static TransportPlan identity(const EmpiricalMeasure& m) {
        TransportPlan p;
        p.source = m;
        p.target = m;
        p.entries.reserve(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) p.entries.push_back({i, i, m.weights[i]});
        return p;
    }

    std::vector<double> row_marginals() const {
        std::vector<double> r(source.size(), 0.0);
        for (const auto& e : entries) r[e.row] += e.mass;
        return r;
    }
    std::vector<double> col_marginals() const {
        std::vector<double> c(target.size(), 0.0);
        for (const auto& e : entries) c[e.col] += e.mass;
        return c;
    }

    double cost(const std::function<double(std::size_t, std::size_t)>& c) const {
        double s = 0.0;
        for (const auto& e : entries) s += e.mass * c(e.row, e.col);
        return s;
    }
};

namespace detail {

// Shortest-augmenting-path linear assignment (Jonker-Volgenant flavour),
// O(n^3), deterministic. Returns row -> column.
inline std::vector<std::size_t> lap_solve(const std::vector<std::vector<double>>& cost,
                                          double& total) {
    const std::size_t n = cost.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            std::size_t i0 = p[j0], j1 = 0;
            double delta = inf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> rowsol(n, 0);
    total = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
        if (p[j] == 0) continue;
        rowsol[p[j] - 1] = j - 1;
        total += cost[p[j] - 1][j - 1];
    }
    return rowsol;
}

// Transportation simplex on the complete bipartite graph. Bland entering rule
// (first negative reduced cost in fixed arc order) plus lexicographic leaving
// rule, so degenerate instances terminate deterministically.
inline std::vector<PlanEntry> transport_simplex(const std::vector<double>& supply,
                                                const std::vector<double>& demand,
                                                const std::vector<std::vector<double>>& cost,
                                                double& total) {
    const std::size_t m = supply.size(), n = demand.size();
    const std::size_t nodes = m + n;
    struct Arc {
        std::size_t i, j;
        double x;
        bool basic;
    };
    std::vector<Arc> arcs;
    arcs.reserve(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) arcs.push_back({i, j, 0.0, false});
    auto arc_id = [n](std::size_t i, std::size_t j) { return i * n + j; };

    // balance demand against supply drift
    double sa = std::accumulate(supply.begin(), supply.end(), 0.0);
    double sb = std::accumulate(demand.begin(), demand.end(), 0.0);
    std::vector<double> b = demand;
    for (double& x : b) x *= sa / sb;

    // northwest-corner start: exactly m+n-1 basic arcs
    {
        std::vector<double> a = supply;
        std::size_t i = 0, j = 0;
        while (true) {
            double q = std::min(a[i], b[j]);
            Arc& e = arcs[arc_id(i, j)];
            e.x = q;
            e.basic = true;
            a[i] -= q;
            b[j] -= q;
            if (i + 1 == m && j + 1 == n) break;
            if (i + 1 == m) ++j;
            else if (j + 1 == n) ++i;
            else if (a[i] <= b[j]) ++i;
            else ++j;
        }
    }

    double cmax = 0.0;
    for (const auto& row : cost)
        for (double c : row) cmax = std::max(cmax, std::abs(c));
    const double tol = 1e-11 * (1.0 + cmax);

    std::vector<double> pot(nodes, 0.0);
    std::vector<std::size_t> parent(nodes, 0), parent_arc(nodes, 0);
    std::vector<int> order(nodes, -1);
    std::vector<std::vector<std::size_t>> adj(nodes);

    const std::size_t max_pivots = 64 * (m + 1) * (n + 1) + 1024;
    for (std::size_t pivot = 0;; ++pivot) {
        if (pivot > max_pivots) throw Error("transport_simplex: pivot cap exceeded");
        // duals from the basis tree
        for (auto& av : adj) av.clear();
        for (std::size_t id = 0; id < arcs.size(); ++id) {
            if (!arcs[id].basic) continue;
            adj[arcs[id].i].push_back(id);
            adj[m + arcs[id].j].push_back(id);
        }
        std::fill(order.begin(), order.end(), -1);
        std::vector<std::size_t> stack{0};
        pot[0] = 0.0;
        order[0] = 0;
        int seen = 1;
        while (!stack.empty()) {
            std::size_t v = stack.back();
            stack.pop_back();
            for (std::size_t id : adj[v]) {
                const Arc& e = arcs[id];
                std::size_t w = (v < m) ? m + e.j : e.i;
                if (order[w] >= 0) continue;
                pot[w] = cost[e.i][e.j] - pot[v];  // u_i + v_j = c_ij on basic arcs
                order[w] = seen++;
                parent[w] = v;
                parent_arc[w] = id;
                stack.push_back(w);
            }
        }
        if (seen != static_cast<int>(nodes)) throw Error("transport_simplex: basis not spanning");

        // Bland entering arc
        std::size_t enter = arcs.size();
        for (std::size_t id = 0; id < arcs.size(); ++id) {
            if (arcs[id].basic) continue;
            double rc = cost[arcs[id].i][arcs[id].j] - pot[arcs[id].i] - pot[m + arcs[id].j];
            if (rc < -tol) {
                enter = id;
                break;
            }
        }
        if (enter == arcs.size()) break;  // optimal

        // cycle: entering arc + tree path between its endpoints
        std::size_t a = arcs[enter].i, bnode = m + arcs[enter].j;
        std::vector<std::size_t> path_a, path_b;
        {
            // walk both endpoints to the root, then trim to the junction
            std::vector<char> on_a(nodes, 0);
            std::size_t v = a;
            while (true) {
                path_a.push_back(v);
                on_a[v] = 1;
                if (v == 0 && order[v] == 0) break;
                if (order[v] == 0) break;
                v = parent[v];
            }
            v = bnode;
            while (!on_a[v]) {
                path_b.push_back(v);
                v = parent[v];
            }
            // v is the junction; cut path_a at it
            std::size_t cut = 0;
            while (path_a[cut] != v) ++cut;
            path_a.resize(cut + 1);
        }
        // cycle arcs with alternating signs; entering arc has sign +1
        std::vector<std::pair<std::size_t, int>> cyc;
        cyc.push_back({enter, +1});
        int sign = -1;
        for (std::size_t t = 0; t + 1 < path_a.size(); ++t) {
            cyc.push_back({parent_arc[path_a[t]], sign});
            sign = -sign;
        }
        sign = -1;
        for (std::size_t t = 0; t + 1 <= path_b.size(); ++t) {
            // walk from bnode toward the junction: sign alternates starting at -1
            cyc.push_back({parent_arc[path_b[t]], sign});
            sign = -sign;
        }
        // theta = min mass over negative arcs; leaving = lexicographically smallest
        double theta = std::numeric_limits<double>::infinity();
        for (auto [id, sg] : cyc)
            if (sg < 0) theta = std::min(theta, arcs[id].x);
        std::size_t leave = arcs.size();
        for (auto [id, sg] : cyc) {
            if (sg >= 0) continue;
            if (arcs[id].x <= theta + 1e-18) {
                if (leave == arcs.size() || id < leave) leave = id;
            }
        }
        for (auto [id, sg] : cyc) arcs[id].x += sg > 0 ? theta : -theta;
        arcs[enter].basic = true;
        arcs[leave].basic = false;
        arcs[leave].x = 0.0;
    }

    total = 0.0;
    std::vector<PlanEntry> out;
    for (const auto& e : arcs) {
        if (e.x > 1e-15) {
            out.push_back({e.i, e.j, e.x});
            total += e.x * cost[e.i][e.j];
        }
    }
    return out;
}

inline std::vector<std::vector<double>> sq_dist_matrix(const EmpiricalMeasure& m1,
                                                       const EmpiricalMeasure& m2) {
    std::vector<std::vector<double>> c(m1.size(), std::vector<double>(m2.size()));
    for (std::size_t i = 0; i < m1.size(); ++i)
        for (std::size_t j = 0; j < m2.size(); ++j) {
            double d = torus_distance(m1.points[i], m2.points[j]);
            c[i][j] = d * d;
        }
    return c;
}

}  // namespace detail

struct W2Result {
    double distance = 0.0;
    TransportPlan plan;
};

// Exact W2 on the torus. Uniform equal-cardinality pairs go through the
// assignment solver (plan is a permutation); everything else through the
// transportation simplex.
inline W2Result w2_exact(const EmpiricalMeasure& m1, const EmpiricalMeasure& m2) {
    m1.validate();
    m2.validate();
    if (m1.dim() != m2.dim()) throw DimError("w2_exact: dimension mismatch");
    auto cost = detail::sq_dist_matrix(m1, m2);
    W2Result res;
    res.plan.source = m1;
    res.plan.target = m2;
    double total = 0.0;
    if (m1.size() == m2.size() && m1.is_uniform() && m2.is_uniform()) {
        auto rowsol = detail::lap_solve(cost, total);
        double w = 1.0 / static_cast<double>(m1.size());
        for (std::size_t i = 0; i < m1.size(); ++i)
            res.plan.entries.push_back({i, rowsol[i], w});
        total *= w;
    } else {
        res.plan.entries = detail::transport_simplex(m1.weights, m2.weights, cost, total);
    }
    res.distance = std::sqrt(std::max(0.0, total));
    return res;
}

inline double w2_distance(const EmpiricalMeasure& m1, const EmpiricalMeasure& m2) {
    return w2_exact(m1, m2).distance;
}

// Test oracle: exact minimum over all permutations, uniform equal-cardinality
// measures only.
inline double w2_bruteforce(const EmpiricalMeasure& m1, const EmpiricalMeasure& m2) {
    m1.validate();
    m2.validate();
    if (m1.dim() != m2.dim()) throw DimError("w2_bruteforce: dimension mismatch");
    if (m1.size() != m2.size() || !m1.is_uniform() || !m2.is_uniform())
        throw OracleTooLarge("w2_bruteforce: requires uniform equal-cardinality measures");
    if (m1.size() > 8) throw OracleTooLarge("w2_bruteforce: N > 8");
    auto cost = detail::sq_dist_matrix(m1, m2);
    std::vector<std::size_t> perm(m1.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i) s += cost[i][perm[i]];
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best / static_cast<double>(m1.size()));
}

enum class PlanSide { Source, Target };

// Conditional distributions pi(.|x_i) (or pi(.|y_j)): for each particle on the
// chosen side, pairs (other-side index, probability).
inline std::vector<std::vector<std::pair<std::size_t, double>>> disintegrate(
    const TransportPlan& plan, PlanSide side) {
    const EmpiricalMeasure& base = side == PlanSide::Source ? plan.source : plan.target;
    std::vector<std::vector<std::pair<std::size_t, double>>> cond(base.size());
    for (std::size_t i = 0; i < base.size(); ++i)
        if (!(base.weights[i] > 0.0)) throw DegenerateMarginal("zero-weight particle");
    for (const auto& e : plan.entries) {
        if (side == PlanSide::Source)
            cond[e.row].push_back({e.col, e.mass / base.weights[e.row]});
        else
            cond[e.col].push_back({e.row, e.mass / base.weights[e.col]});
    }
    return cond;
}

inline EmpiricalMeasure push_forward(const EmpiricalMeasure& m,
                                     const std::function<TorusPoint(const TorusPoint&)>& map) {
    EmpiricalMeasure out;
    out.weights = m.weights;
    out.points.reserve(m.size());
    for (const auto& p : m.points) {
        TorusPoint q = map(p);
        for (double c : q.coords)
            if (!std::isfinite(c) || c < 0.0 || c >= 1.0)
                throw InvalidPoint("push_forward: map produced invalid point");
        out.points.push_back(std::move(q));
    }
    return out;
}

struct ProductAtom {
    TorusPoint point;
    std::size_t label = 0;
    double weight = 0.0;
};

// m * b: joint measure on torus x labels from a per-particle label kernel.
inline std::vector<ProductAtom> star_product(const EmpiricalMeasure& m,
                                             const std::vector<std::vector<double>>& kernel) {
    m.validate();
    if (kernel.size() != m.size()) throw InvalidKernel("kernel not defined on every particle");
    std::vector<ProductAtom> atoms;
    for (std::size_t i = 0; i < m.size(); ++i) {
        double s = 0.0;
        for (double p : kernel[i]) {
            if (p < -1e-15) throw InvalidKernel("negative kernel probability");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-12) throw InvalidKernel("kernel row does not sum to 1");
        for (std::size_t l = 0; l < kernel[i].size(); ++l)
            if (kernel[i][l] > 0.0) atoms.push_back({m.points[i], l, m.weights[i] * kernel[i][l]});
    }
    return atoms;
}

// ---- canonical quantization -------------------------------------------------

namespace detail {

inline std::string format_weight(double w) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", w);
    return std::string(buf);
}

}  // namespace detail

struct CanonicalForm {
    std::string key;            // hashable node identity
    EmpiricalMeasure merged;    // rounded atoms, coincident cells merged
    EmpiricalMeasure rounded;   // rounded atoms, unmerged, sorted
};

// Round coordinates to multiples of `resolution` (mod 1), sort atoms, merge
// coincident cells for the key. Key equality only guarantees closeness at the
// rounding scale; distinct measures may collide.
inline CanonicalForm canonical_form(const EmpiricalMeasure& m, double resolution) {
    m.validate();
    if (!(resolution > 0.0)) throw Error("canonical_form: resolution must be positive");
    const double inv = 1.0 / resolution;
    const long long lattice = std::llround(inv);
    const bool exact_ring = std::abs(inv - static_cast<double>(lattice)) < 1e-9;

    const std::size_t d = m.dim();
    struct QAtom {
        std::vector<long long> cell;
        double weight;
    };
    std::vector<QAtom> atoms(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        atoms[i].cell.resize(d);
        for (std::size_t c = 0; c < d; ++c) {
            long long q = std::llround(m.points[i][c] * inv);
            if (exact_ring) q = ((q % lattice) + lattice) % lattice;
            atoms[i].cell[c] = q;
        }
        atoms[i].weight = m.weights[i];
    }
    std::sort(atoms.begin(), atoms.end(), [](const QAtom& a, const QAtom& b) {
        if (a.cell != b.cell) return a.cell < b.cell;
        return a.weight < b.weight;
    });

    CanonicalForm cf;
    auto cell_point = [&](const std::vector<long long>& cell) {
        std::vector<double> coords(d);
        for (std::size_t c = 0; c < d; ++c) coords[c] = wrap_coord(static_cast<double>(cell[c]) * resolution);
        return TorusPoint(std::move(coords));
    };
    for (const auto& a : atoms) {
        cf.rounded.points.push_back(cell_point(a.cell));
        cf.rounded.weights.push_back(a.weight);
    }
    // merge runs of equal cells
    std::ostringstream key;
    key << "d" << d << ";r" << detail::format_weight(resolution) << ";";
    for (std::size_t i = 0; i < atoms.size();) {
        std::size_t j = i;
        double w = 0.0;
        while (j < atoms.size() && atoms[j].cell == atoms[i].cell) w += atoms[j++].weight;
        cf.merged.points.push_back(cell_point(atoms[i].cell));
        cf.merged.weights.push_back(w);
        for (std::size_t c = 0; c < d; ++c) key << atoms[i].cell[c] << (c + 1 < d ? "," : "");
        key << ":" << detail::format_weight(w) << ";";
        i = j;
    }
    cf.key = key.str();
    return cf;
}

inline std::string canonical_key(const EmpiricalMeasure& m, double resolution) {
    return canonical_form(m, resolution).key;
}

// ---- plain text serialization ------------------------------------------------

inline void write_measure(std::ostream& os, const EmpiricalMeasure& m) {
    os << "# dim=" << m.dim() << " n=" << m.size() << "\n";
    char buf[40];
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t c = 0; c < m.dim(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", m.points[i][c]);
            os << buf << " ";
        }
        std::snprintf(buf, sizeof(buf), "%.17g", m.weights[i]);
        os << buf << "\n";
    }
}

inline std::string measure_to_text(const EmpiricalMeasure& m) {
    std::ostringstream os;
    write_measure(os, m);
    return os.str();
}

inline EmpiricalMeasure read_measure(std::istream& is) {
    std::string line;
    std::size_t dim = 0, n = 0;
    if (!std::getline(is, line)) throw InvalidMeasure("empty measure file");
    if (std::sscanf(line.c_str(), "# dim=%zu n=%zu", &dim, &n) != 2)
        throw InvalidMeasure("bad measure header, expected '# dim=<d> n=<N>'");
    EmpiricalMeasure m;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        std::vector<double> coords(dim);
        double w = 0.0;
        for (std::size_t c = 0; c < dim; ++c)
            if (!(row >> coords[c])) throw InvalidMeasure("short row in measure file");
        if (!(row >> w)) throw InvalidMeasure("missing weight in measure file");
        m.points.push_back(wrap(coords));
        m.weights.push_back(w);
    }
    if (m.size() != n) throw InvalidMeasure("row count does not match header");
    m.validate();
    return m;
}

inline EmpiricalMeasure measure_from_text(const std::string& text) {
    std::istringstream is(text);
    return read_measure(is);
}

}  // namespace mfdg
