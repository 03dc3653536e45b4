#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mfdg/control.hpp"
#include "mfdg/dynamics.hpp"
#include "mfdg/errors.hpp"
#include "mfdg/measure.hpp"
#include "mfdg/rng.hpp"

namespace mfdg {

// Derived moduli of the extremal-shift machinery:
//   varpi1(e) = 2 sqrt(d) omega_f(e) + 4 sqrt(d) L C0 e
//   varpi2(e) = 2 varpi1(e) + 4 C0^2 e
//   rho(e, t) = (e + varpi2(e) t) exp(4 L t)
struct ShiftConstants {
    double epsilon = 0.1;
    ScenarioConstants base;
    std::size_t dim = 1;

    double varpi1(double eps) const {
        double sd = std::sqrt(static_cast<double>(dim));
        return 2.0 * sd * base.omega_f(eps) + 4.0 * sd * base.L * base.C0 * eps;
    }
    double varpi2(double eps) const { return 2.0 * varpi1(eps) + 4.0 * base.C0 * base.C0 * eps; }
    double rho(double eps, double t) const {
        return (eps + varpi2(eps) * t) * std::exp(4.0 * base.L * t);
    }
};

namespace detail {

// <w, f(s,x,m,u,v)> over the full grid pair table
inline std::vector<std::vector<double>> inner_product_table(const Scenario& sc, double s,
                                                            const TorusPoint& x,
                                                            const EmpiricalMeasure& m,
                                                            std::span<const double> w) {
    std::vector<std::vector<double>> tab(sc.grid_u.size(), std::vector<double>(sc.grid_v.size()));
    for (std::size_t a = 0; a < sc.grid_u.size(); ++a)
        for (std::size_t b = 0; b < sc.grid_v.size(); ++b) {
            auto f = eval_velocity(sc, s, x, m, sc.grid_u.atom(a), sc.grid_v.atom(b));
            double dot = 0.0;
            for (std::size_t c = 0; c < sc.dim; ++c) dot += w[c] * f[c];
            tab[a][b] = dot;
        }
    return tab;
}

inline std::size_t argmin_of_max(const std::vector<std::vector<double>>& tab) {
    std::size_t best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < tab.size(); ++a) {
        double mx = -std::numeric_limits<double>::infinity();
        for (double x : tab[a]) mx = std::max(mx, x);
        if (mx < best_val - 1e-15) {
            best_val = mx;
            best = a;
        }
    }
    return best;
}

inline std::size_t argmax_of_min(const std::vector<std::vector<double>>& tab) {
    std::size_t best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    const std::size_t nv = tab.empty() ? 0 : tab[0].size();
    for (std::size_t b = 0; b < nv; ++b) {
        double mn = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < tab.size(); ++a) mn = std::min(mn, tab[a][b]);
        if (mn > best_val + 1e-15) {
            best_val = mn;
            best = b;
        }
    }
    return best;
}

}  // namespace detail

// u_hat = argmin_u max_v <x'-y', f(s,x,m,u,v)>, ties to the lowest grid index.
inline std::size_t u_hat(const Scenario& sc, double s, const TorusPoint& x, const TorusPoint& y,
                         const EmpiricalMeasure& m) {
    LiftedPair lp = lift_pair(x, y);
    std::vector<double> w(sc.dim);
    for (std::size_t c = 0; c < sc.dim; ++c) w[c] = lp.x_rep[c] - lp.y_rep[c];
    return detail::argmin_of_max(detail::inner_product_table(sc, s, x, m, w));
}

// v_hat = argmax_v min_u <x'-y', f(s,x,m,u,v)>, ties to the lowest grid index.
inline std::size_t v_hat(const Scenario& sc, double s, const TorusPoint& x, const TorusPoint& y,
                         const EmpiricalMeasure& m) {
    LiftedPair lp = lift_pair(x, y);
    std::vector<double> w(sc.dim);
    for (std::size_t c = 0; c < sc.dim; ++c) w[c] = lp.x_rep[c] - lp.y_rep[c];
    return detail::argmax_of_min(detail::inner_product_table(sc, s, x, m, w));
}

// Mirror selector for the maximizer's own strategy (players interchanged):
// argmax_v min_u <y'-x', f(s,x,m,u,v)> with x the real particle.
inline std::size_t v_hat_mirror(const Scenario& sc, double s, const TorusPoint& x,
                                const TorusPoint& y, const EmpiricalMeasure& m) {
    LiftedPair lp = lift_pair(x, y);
    std::vector<double> w(sc.dim);
    for (std::size_t c = 0; c < sc.dim; ++c) w[c] = lp.y_rep[c] - lp.x_rep[c];
    return detail::argmax_of_min(detail::inner_product_table(sc, s, x, m, w));
}

// ---- target selection ----------------------------------------------------------

struct TargetChoice {
    EmpiricalMeasure nu;
    TransportPlan plan;
    double value = std::numeric_limits<double>::infinity();
    bool fell_back = false;          // nu == m because no candidate was feasible/better
    std::size_t candidate_index = 0;  // meaningful when !fell_back
};

// nu = argmin value_fn over {candidates within the W2^2 <= rho(eps,s) ball} + m
// itself; m is always feasible. Ties keep the first candidate in order.
inline TargetChoice select_target(const std::function<double(const EmpiricalMeasure&)>& value_fn,
                                  double s, const EmpiricalMeasure& m, const ShiftConstants& k,
                                  std::span<const EmpiricalMeasure> candidates) {
    const double radius_sq = k.rho(k.epsilon, s);
    TargetChoice choice;
    double own_value = value_fn(m);
    choice.value = own_value;
    choice.fell_back = true;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        double d = w2_distance(m, candidates[i]);
        if (d * d > radius_sq + 1e-15) continue;
        double val = value_fn(candidates[i]);
        if (val < choice.value - 1e-15) {
            choice.value = val;
            choice.candidate_index = i;
            choice.fell_back = false;
        }
    }
    if (choice.fell_back) {
        choice.nu = m;
        choice.plan = TransportPlan::identity(m);
        choice.value = own_value;
    } else {
        choice.nu = candidates[choice.candidate_index];
        choice.plan = w2_exact(m, choice.nu).plan;
    }
    return choice;
}

// ---- extremal fields -----------------------------------------------------------

// First player's field on m's particles: push pi(.|x_i) through y -> u_hat.
inline ControlField extremal_first_field(const Scenario& sc, double s, const EmpiricalMeasure& m,
                                         const EmpiricalMeasure& nu, const TransportPlan& plan) {
    if (plan.source.size() != m.size() || plan.target.size() != nu.size())
        throw PlanMismatch("extremal_first_field: plan does not couple m and nu");
    auto cond = disintegrate(plan, PlanSide::Source);
    std::vector<std::vector<double>> mixtures(m.size(),
                                              std::vector<double>(sc.grid_u.size(), 0.0));
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (const auto& [j, p] : cond[i]) {
            std::size_t a = u_hat(sc, s, m.points[i], nu.points[j], m);
            mixtures[i][a] += p;
        }
        double tot = 0.0;
        for (double p : mixtures[i]) tot += p;
        for (double& p : mixtures[i]) p /= tot;
    }
    ControlField f = ControlField::constant_mixed(Player::First, std::move(mixtures));
    return f;
}

// Companion field on nu's particles, used by the flow-level estimate and the
// phantom flow: push pi(.|y_j) through x -> v_hat(s, x, y_j, m).
inline ControlField extremal_second_field(const Scenario& sc, double s, const EmpiricalMeasure& m,
                                          const EmpiricalMeasure& nu, const TransportPlan& plan) {
    if (plan.source.size() != m.size() || plan.target.size() != nu.size())
        throw PlanMismatch("extremal_second_field: plan does not couple m and nu");
    auto cond = disintegrate(plan, PlanSide::Target);
    std::vector<std::vector<double>> mixtures(nu.size(),
                                              std::vector<double>(sc.grid_v.size(), 0.0));
    for (std::size_t j = 0; j < nu.size(); ++j) {
        for (const auto& [i, p] : cond[j]) {
            std::size_t b = v_hat(sc, s, m.points[i], nu.points[j], m);
            mixtures[j][b] += p;
        }
        double tot = 0.0;
        for (double p : mixtures[j]) tot += p;
        for (double& p : mixtures[j]) p /= tot;
    }
    ControlField f = ControlField::constant_mixed(Player::Second, std::move(mixtures));
    return f;
}

// Second player's own strategy field on m's particles (mirror construction).
inline ControlField extremal_second_own_field(const Scenario& sc, double s,
                                              const EmpiricalMeasure& m,
                                              const EmpiricalMeasure& nu,
                                              const TransportPlan& plan) {
    if (plan.source.size() != m.size() || plan.target.size() != nu.size())
        throw PlanMismatch("extremal_second_own_field: plan does not couple m and nu");
    auto cond = disintegrate(plan, PlanSide::Source);
    std::vector<std::vector<double>> mixtures(m.size(),
                                              std::vector<double>(sc.grid_v.size(), 0.0));
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (const auto& [j, p] : cond[i]) {
            std::size_t b = v_hat_mirror(sc, s, m.points[i], nu.points[j], m);
            mixtures[i][b] += p;
        }
        double tot = 0.0;
        for (double p : mixtures[i]) tot += p;
        for (double& p : mixtures[i]) p /= tot;
    }
    ControlField f = ControlField::constant_mixed(Player::Second, std::move(mixtures));
    return f;
}

// ---- lemma verifiers -----------------------------------------------------------

struct LemmaTrialRow {
    std::size_t trial = 0;
    double s = 0.0, r = 0.0;
    double lhs = 0.0, rhs = 0.0, slack = 0.0;
    bool violated = false;
};

struct LemmaReport {
    std::size_t trials = 0;
    std::size_t violations = 0;
    double max_slack = -std::numeric_limits<double>::infinity();  // max (lhs - rhs) before tolerance
    std::vector<LemmaTrialRow> rows;

    std::string to_text() const {
        std::ostringstream os;
        os << "# trial s r lhs rhs slack violated\n";
        char buf[160];
        for (const auto& row : rows) {
            std::snprintf(buf, sizeof(buf), "%zu %.6f %.6f %.12g %.12g %.12g %d\n", row.trial,
                          row.s, row.r, row.lhs, row.rhs, row.slack, row.violated ? 1 : 0);
            os << buf;
        }
        return os.str();
    }
};

namespace detail {

inline double snap(double t, double h) { return std::round(t / h) * h; }

// random C0-Lipschitz flow over [t0, t1]: random initial cloud, random pure
// constant joint controls
inline MeasureFlow random_flow(const Scenario& sc, std::mt19937_64& g, double t0, double t1,
                               double step) {
    std::size_t n = 1 + uniform_index(g, 3);
    EmpiricalMeasure m0 = random_measure(g, sc.dim, n);
    std::vector<std::size_t> ua(n), va(n);
    for (auto& a : ua) a = uniform_index(g, sc.grid_u.size());
    for (auto& b : va) b = uniform_index(g, sc.grid_v.size());
    auto joint = joint_pure_field(ua, va, sc.grid_u.size(), sc.grid_v.size(), t0, t1);
    return generate_flow(sc, t0, m0, joint, step, t1);
}

inline RelaxedSchedule random_schedule(std::mt19937_64& g, std::size_t grid_size, double t0,
                                       double t1, std::size_t max_cells = 4) {
    std::size_t cells = 1 + uniform_index(g, max_cells);
    RelaxedSchedule s;
    s.time_grid.resize(cells + 1);
    for (std::size_t c = 0; c <= cells; ++c)
        s.time_grid[c] = t0 + (t1 - t0) * static_cast<double>(c) / static_cast<double>(cells);
    s.mixtures.assign(cells, std::vector<double>(grid_size, 0.0));
    for (auto& mix : s.mixtures) {
        double tot = 0.0;
        for (auto& p : mix) {
            p = uniform01(g) + 1e-3;
            tot += p;
        }
        for (auto& p : mix) p /= tot;
    }
    return s;
}

}  // namespace detail

// Agent-level extremal shift estimate: x(.) driven by (u_hat, any zeta) along
// m(.), y(.) driven by (any xi, v_hat) along nu(.), then
//   ||x(r)-y(r)||^2 <= ||x*-y*||^2 (1+3L(r-s)) + L W2^2(m(s),nu(s)) (r-s)
//                      + varpi2(r-s) (r-s).
inline LemmaReport verify_lemma_agent(const Scenario& sc, std::size_t trials, std::uint64_t seed,
                                      double step) {
    ScenarioConstants cst = constants_or_estimate(sc);
    ShiftConstants shift{0.1, cst, sc.dim};
    SeedStream ss(seed);
    LemmaReport rep;
    rep.trials = trials;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        auto g = ss.stream("lemma_agent", trial);
        double s = detail::snap(uniform_in(g, 0.0, sc.horizon * 0.5), step);
        double r = detail::snap(uniform_in(g, s + step, sc.horizon), step);
        if (r <= s) r = s + step;

        std::vector<double> xc(sc.dim), yc(sc.dim);
        for (auto& c : xc) c = uniform01(g);
        for (auto& c : yc) c = uniform01(g);
        TorusPoint xs = wrap(xc), ys = wrap(yc);

        MeasureFlow mflow = detail::random_flow(sc, g, s, r, step);
        MeasureFlow nflow = detail::random_flow(sc, g, s, r, step);

        std::size_t us = u_hat(sc, s, xs, ys, mflow.measure_at(s));
        std::size_t vs = v_hat(sc, s, xs, ys, mflow.measure_at(s));

        RelaxedSchedule zeta = detail::random_schedule(g, sc.grid_v.size(), s, r);
        RelaxedSchedule xi = detail::random_schedule(g, sc.grid_u.size(), s, r);
        RelaxedSchedule du = RelaxedSchedule::constant_atom(sc.grid_u.size(), us, s, r);
        RelaxedSchedule dv = RelaxedSchedule::constant_atom(sc.grid_v.size(), vs, s, r);

        ParticleTrajectory x = integrate_agent(sc, s, xs, mflow, du, zeta, step);
        ParticleTrajectory y = integrate_agent(sc, s, ys, nflow, xi, dv, step);

        double lhs = torus_distance(x.at(r), y.at(r));
        lhs *= lhs;
        double d0 = torus_distance(xs, ys);
        double w0 = w2_distance(mflow.measure_at(s), nflow.measure_at(s));
        double rhs = d0 * d0 * (1.0 + 3.0 * cst.L * (r - s)) + cst.L * w0 * w0 * (r - s) +
                     shift.varpi2(r - s) * (r - s);
        double tol = 10.0 * cst.C0 * step * (r - s) + 1e-12;

        LemmaTrialRow row{trial, s, r, lhs, rhs, lhs - rhs, lhs > rhs + tol};
        rep.max_slack = std::max(rep.max_slack, row.slack);
        if (row.violated) ++rep.violations;
        rep.rows.push_back(row);
    }
    return rep;
}

// Flow-level extremal shift estimate:
//   W2^2(m(r),nu(r)) <= W2^2(m*,nu*) (1+4L(r-s)) + varpi2(r-s) (r-s),
// with alpha*/beta* built from an optimal plan and arbitrary consistent
// responses (pure here).
inline LemmaReport verify_lemma_flow(const Scenario& sc, std::size_t trials, std::uint64_t seed,
                                     double step, std::size_t max_particles = 4) {
    ScenarioConstants cst = constants_or_estimate(sc);
    ShiftConstants shift{0.1, cst, sc.dim};
    SeedStream ss(seed);
    LemmaReport rep;
    rep.trials = trials;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        auto g = ss.stream("lemma_flow", trial);
        double s = detail::snap(uniform_in(g, 0.0, sc.horizon * 0.5), step);
        double r = detail::snap(uniform_in(g, s + step, sc.horizon), step);
        if (r <= s) r = s + step;

        std::size_t nm = 1 + uniform_index(g, max_particles);
        std::size_t nn = uniform01(g) < 0.5 ? nm : 1 + uniform_index(g, max_particles);
        EmpiricalMeasure ms = detail::random_measure(g, sc.dim, nm);
        EmpiricalMeasure ns = detail::random_measure(g, sc.dim, nn);

        TransportPlan plan = w2_exact(ms, ns).plan;
        ControlField alpha = extremal_first_field(sc, s, ms, ns, plan);
        ControlField beta = extremal_second_field(sc, s, ms, ns, plan);

        // pure responses inside D1[alpha*] / D2[beta*]
        std::vector<std::vector<RelaxedSchedule>> respV(alpha.particles());
        for (std::size_t i = 0; i < alpha.particles(); ++i) {
            respV[i].reserve(sc.grid_u.size());
            for (std::size_t a = 0; a < sc.grid_u.size(); ++a)
                respV[i].push_back(RelaxedSchedule::constant_atom(
                    sc.grid_v.size(), uniform_index(g, sc.grid_v.size()), s, r));
        }
        std::vector<std::vector<RelaxedSchedule>> respU(beta.particles());
        for (std::size_t j = 0; j < beta.particles(); ++j) {
            respU[j].reserve(sc.grid_v.size());
            for (std::size_t b = 0; b < sc.grid_v.size(); ++b)
                respU[j].push_back(RelaxedSchedule::constant_atom(
                    sc.grid_u.size(), uniform_index(g, sc.grid_u.size()), s, r));
        }
        JointControlField kappa = join_with_response(alpha, respV, s, r);
        JointControlField theta = join_with_response(beta, respU, s, r);

        MeasureFlow mflow = generate_flow(sc, s, ms, kappa, step, r);
        MeasureFlow nflow = generate_flow(sc, s, ns, theta, step, r);

        double w0 = w2_distance(ms, ns);
        double wr = w2_distance(mflow.terminal(), nflow.terminal());
        double lhs = wr * wr;
        double rhs = w0 * w0 * (1.0 + 4.0 * cst.L * (r - s)) + shift.varpi2(r - s) * (r - s);
        double tol = 10.0 * cst.C0 * step * (r - s) + 1e-12;

        LemmaTrialRow row{trial, s, r, lhs, rhs, lhs - rhs, lhs > rhs + tol};
        rep.max_slack = std::max(rep.max_slack, row.slack);
        if (row.violated) ++rep.violations;
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace mfdg
