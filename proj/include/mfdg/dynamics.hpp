#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfdg/control.hpp"
#include "mfdg/errors.hpp"
#include "mfdg/measure.hpp"
#include "mfdg/rng.hpp"
#include "mfdg/torus.hpp"

namespace mfdg {

// Modulus of continuity from a small named family (vanishes at 0,
// nondecreasing).
struct Modulus {
    enum class Family { Zero, Linear, Power };
    Family family = Family::Zero;
    double coef = 0.0;
    double exponent = 1.0;

    double operator()(double delta) const {
        delta = std::abs(delta);
        switch (family) {
            case Family::Zero: return 0.0;
            case Family::Linear: return coef * delta;
            case Family::Power: return coef * std::pow(delta, exponent);
        }
        return 0.0;
    }

    static Modulus zero() { return {}; }
    static Modulus linear(double c) { return {Family::Linear, c, 1.0}; }
    static Modulus power(double c, double p) { return {Family::Power, c, p}; }

    std::string to_string() const {
        switch (family) {
            case Family::Zero: return "zero";
            case Family::Linear: return "linear " + std::to_string(coef);
            case Family::Power:
                return "power " + std::to_string(coef) + " " + std::to_string(exponent);
        }
        return "zero";
    }
};

struct ScenarioConstants {
    double C0 = 0.0;       // bound on ||f||
    double L = 0.0;        // Lipschitz constant of f in (x, m)
    Modulus omega_f;       // modulus of f in t
    Modulus omega_g;       // modulus of g in W2
    enum class Provenance { Declared, Estimated } provenance = Provenance::Declared;
};

using VelocityFn = std::function<void(double t, const TorusPoint& x, const EmpiricalMeasure& m,
                                      std::span<const double> u, std::span<const double> v,
                                      std::span<double> out)>;
using PayoffFn = std::function<double(const EmpiricalMeasure&)>;

struct Scenario {
    std::size_t dim = 1;
    double horizon = 1.0;
    ControlGrid grid_u;
    ControlGrid grid_v;
    VelocityFn velocity;
    PayoffFn terminal_payoff;
    std::optional<ScenarioConstants> declared_constants;
    std::string dynamics_name;
    std::string payoff_name;
    std::string source_text;  // raw config when loaded from file

    ScenarioConstants constants() const {
        if (!declared_constants) throw DynamicsError("scenario has no declared constants");
        return *declared_constants;
    }
};

inline double payoff(const Scenario& sc, const EmpiricalMeasure& m) {
    m.validate();
    double g = sc.terminal_payoff(m);
    if (!std::isfinite(g)) throw DynamicsError("payoff returned non-finite value");
    return g;
}

namespace detail {

inline std::vector<double> eval_velocity(const Scenario& sc, double t, const TorusPoint& x,
                                         const EmpiricalMeasure& m, std::span<const double> u,
                                         std::span<const double> v) {
    std::vector<double> out(sc.dim, 0.0);
    sc.velocity(t, x, m, u, v, out);
    for (double c : out)
        if (!std::isfinite(c)) throw DynamicsError("dynamics produced non-finite velocity");
    return out;
}

inline EmpiricalMeasure random_measure(std::mt19937_64& g, std::size_t dim, std::size_t n) {
    std::vector<TorusPoint> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> c(dim);
        for (auto& x : c) x = uniform01(g);
        pts.push_back(wrap(c));
    }
    return EmpiricalMeasure::uniform(std::move(pts));
}

}  // namespace detail

// Sampling-based constants for scenarios without a declared block; a 1.1
// safety factor keeps the estimates valid rather than tight.
inline ScenarioConstants estimate_constants(const Scenario& sc, std::size_t sample_budget,
                                            std::uint64_t seed = 20240101ull) {
    if (sample_budget < 1000) throw Error("estimate_constants: sample_budget must be >= 1000");
    SeedStream ss(seed);
    auto g = ss.stream("estimate_constants");
    double c0 = 0.0, lip = 0.0, wf = 0.0, wg = 0.0;
    for (std::size_t k = 0; k < sample_budget; ++k) {
        double t = uniform_in(g, 0.0, sc.horizon);
        std::size_t n = 2 + uniform_index(g, 4);
        EmpiricalMeasure m = detail::random_measure(g, sc.dim, n);
        const auto& u = sc.grid_u.atom(uniform_index(g, sc.grid_u.size()));
        const auto& v = sc.grid_v.atom(uniform_index(g, sc.grid_v.size()));
        std::vector<double> xc(sc.dim);
        for (auto& c : xc) c = uniform01(g);
        TorusPoint x = wrap(xc);

        auto f0 = detail::eval_velocity(sc, t, x, m, u, v);
        double norm = 0.0;
        for (double c : f0) norm += c * c;
        c0 = std::max(c0, std::sqrt(norm));

        // space/measure difference quotient
        std::vector<double> xc2(sc.dim);
        for (std::size_t c = 0; c < sc.dim; ++c) xc2[c] = xc[c] + uniform_in(g, -0.2, 0.2);
        TorusPoint x2 = wrap(xc2);
        EmpiricalMeasure m2 = detail::random_measure(g, sc.dim, n);
        auto f1 = detail::eval_velocity(sc, t, x2, m2, u, v);
        double fd = 0.0;
        for (std::size_t c = 0; c < sc.dim; ++c) fd += (f1[c] - f0[c]) * (f1[c] - f0[c]);
        double denom = torus_distance(x, x2) + w2_distance(m, m2);
        if (denom > 1e-9) lip = std::max(lip, std::sqrt(fd) / denom);

        // time increment envelope (linear fit)
        double t2 = uniform_in(g, 0.0, sc.horizon);
        if (std::abs(t2 - t) > 1e-9) {
            auto f2 = detail::eval_velocity(sc, t2, x, m, u, v);
            double td = 0.0;
            for (std::size_t c = 0; c < sc.dim; ++c) td += (f2[c] - f0[c]) * (f2[c] - f0[c]);
            wf = std::max(wf, std::sqrt(td) / std::abs(t2 - t));
        }

        // payoff increment envelope
        if (sc.terminal_payoff) {
            double gd = std::abs(payoff(sc, m) - payoff(sc, m2));
            double wdist = w2_distance(m, m2);
            if (wdist > 1e-9) wg = std::max(wg, gd / wdist);
        }
    }
    ScenarioConstants out;
    out.C0 = 1.1 * c0;
    out.L = 1.1 * lip;
    out.omega_f = wf > 0.0 ? Modulus::linear(1.1 * wf) : Modulus::zero();
    out.omega_g = wg > 0.0 ? Modulus::linear(1.1 * wg) : Modulus::zero();
    out.provenance = ScenarioConstants::Provenance::Estimated;
    return out;
}

inline ScenarioConstants constants_or_estimate(const Scenario& sc,
                                               std::size_t budget = 2000,
                                               std::uint64_t seed = 20240101ull) {
    if (sc.declared_constants) return *sc.declared_constants;
    return estimate_constants(sc, budget, seed);
}

// ---- Isaacs condition --------------------------------------------------------

struct IsaacsSample {
    double t = 0.0;
    TorusPoint x;
    EmpiricalMeasure m;
    std::vector<double> w;
};

struct IsaacsReport {
    double max_gap = 0.0;
    std::size_t worst_index = 0;
    std::vector<double> gaps;
};

// gap = min_u max_v <w,f> - max_v min_u <w,f>, always >= 0 up to rounding.
inline IsaacsReport isaacs_check(const Scenario& sc, std::span<const IsaacsSample> samples) {
    IsaacsReport rep;
    rep.gaps.reserve(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto& s = samples[k];
        std::vector<std::vector<double>> inner(sc.grid_u.size(),
                                               std::vector<double>(sc.grid_v.size()));
        for (std::size_t a = 0; a < sc.grid_u.size(); ++a)
            for (std::size_t b = 0; b < sc.grid_v.size(); ++b) {
                auto f = detail::eval_velocity(sc, s.t, s.x, s.m, sc.grid_u.atom(a),
                                               sc.grid_v.atom(b));
                double dot = 0.0;
                for (std::size_t c = 0; c < sc.dim; ++c) dot += s.w[c] * f[c];
                inner[a][b] = dot;
            }
        double minmax = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < sc.grid_u.size(); ++a) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < sc.grid_v.size(); ++b) mx = std::max(mx, inner[a][b]);
            minmax = std::min(minmax, mx);
        }
        double maxmin = -std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < sc.grid_v.size(); ++b) {
            double mn = std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < sc.grid_u.size(); ++a) mn = std::min(mn, inner[a][b]);
            maxmin = std::max(maxmin, mn);
        }
        double gap = minmax - maxmin;
        rep.gaps.push_back(gap);
        if (gap > rep.max_gap) {
            rep.max_gap = gap;
            rep.worst_index = k;
        }
    }
    return rep;
}

inline IsaacsReport isaacs_check_sampled(const Scenario& sc, std::size_t samples,
                                         std::uint64_t seed) {
    SeedStream ss(seed);
    auto g = ss.stream("isaacs");
    std::vector<IsaacsSample> rows;
    rows.reserve(samples);
    for (std::size_t k = 0; k < samples; ++k) {
        IsaacsSample s;
        s.t = uniform_in(g, 0.0, sc.horizon);
        std::vector<double> xc(sc.dim);
        for (auto& c : xc) c = uniform01(g);
        s.x = wrap(xc);
        s.m = detail::random_measure(g, sc.dim, 2 + uniform_index(g, 3));
        s.w.resize(sc.dim);
        for (auto& c : s.w) c = uniform_in(g, -1.0, 1.0);
        rows.push_back(std::move(s));
    }
    return isaacs_check(sc, rows);
}

// ---- trajectories and flows ---------------------------------------------------

enum class Integrator { Euler, RK4 };

struct ParticleTrajectory {
    std::vector<double> time_grid;
    std::vector<TorusPoint> states;

    double t_begin() const { return time_grid.front(); }
    double t_end() const { return time_grid.back(); }

    const TorusPoint& at(double t) const {
        // nearest recorded node (grid-aligned callers hit nodes exactly)
        if (t <= time_grid.front()) return states.front();
        if (t >= time_grid.back()) return states.back();
        auto it = std::lower_bound(time_grid.begin(), time_grid.end(), t - 1e-12);
        return states[static_cast<std::size_t>(it - time_grid.begin())];
    }
};

struct MeasureFlow {
    std::vector<double> time_grid;
    std::vector<EmpiricalMeasure> measures;
    std::vector<ParticleTrajectory> trajectories;  // the path-space lift
    std::vector<double> trajectory_weights;
    double lipschitz_const = 0.0;

    double t_begin() const { return time_grid.front(); }
    double t_end() const { return time_grid.back(); }
    const EmpiricalMeasure& terminal() const { return measures.back(); }

    const EmpiricalMeasure& measure_at(double t) const {
        if (t <= time_grid.front() + 1e-15) return measures.front();
        if (t >= time_grid.back() - 1e-15) return measures.back();
        // latest node <= t (piecewise-constant reading between nodes)
        auto it = std::upper_bound(time_grid.begin(), time_grid.end(), t + 1e-12);
        std::size_t idx = static_cast<std::size_t>(it - time_grid.begin());
        return measures[idx == 0 ? 0 : idx - 1];
    }
};

namespace detail {

// mixture-averaged drift of (sys:agent_gen)
inline std::vector<double> relaxed_drift(const Scenario& sc, double t, const TorusPoint& x,
                                         const EmpiricalMeasure& m, const RelaxedSchedule& xi,
                                         const RelaxedSchedule& zeta) {
    const auto& pu = xi.mixture_at(t);
    const auto& pv = zeta.mixture_at(t);
    std::vector<double> drift(sc.dim, 0.0);
    for (std::size_t a = 0; a < pu.size(); ++a) {
        if (pu[a] <= 0.0) continue;
        for (std::size_t b = 0; b < pv.size(); ++b) {
            if (pv[b] <= 0.0) continue;
            auto f = eval_velocity(sc, t, x, m, sc.grid_u.atom(a), sc.grid_v.atom(b));
            double w = pu[a] * pv[b];
            for (std::size_t c = 0; c < sc.dim; ++c) drift[c] += w * f[c];
        }
    }
    return drift;
}

inline TorusPoint step_point(const TorusPoint& x, std::span<const double> drift, double h) {
    std::vector<double> c(x.coords);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += h * drift[i];
    return wrap(c);
}

}  // namespace detail

// Motion of one representative agent along a given measure flow under a joint
// relaxed control (u-schedule, v-schedule).
inline ParticleTrajectory integrate_agent(const Scenario& sc, double s, const TorusPoint& y,
                                          const MeasureFlow& flow, const RelaxedSchedule& xi,
                                          const RelaxedSchedule& zeta, double step,
                                          Integrator method = Integrator::Euler) {
    if (!(step > 0.0)) throw Error("integrate_agent: step must be positive");
    if (s < flow.t_begin() - 1e-12 || s > flow.t_end() + 1e-12)
        throw FlowDomainError("integrate_agent: start time outside flow domain");
    ParticleTrajectory traj;
    traj.time_grid.push_back(s);
    traj.states.push_back(y);
    double t = s;
    const double t_end = flow.t_end();
    while (t < t_end - 1e-12) {
        double h = std::min(step, t_end - t);
        const TorusPoint& x = traj.states.back();
        const EmpiricalMeasure& m = flow.measure_at(t);
        TorusPoint next;
        if (method == Integrator::Euler) {
            auto drift = detail::relaxed_drift(sc, t, x, m, xi, zeta);
            next = detail::step_point(x, drift, h);
        } else {
            // RK4 with the ambient measure frozen over the step
            auto k1 = detail::relaxed_drift(sc, t, x, m, xi, zeta);
            auto k2 = detail::relaxed_drift(sc, t + 0.5 * h, detail::step_point(x, k1, 0.5 * h), m,
                                            xi, zeta);
            auto k3 = detail::relaxed_drift(sc, t + 0.5 * h, detail::step_point(x, k2, 0.5 * h), m,
                                            xi, zeta);
            auto k4 = detail::relaxed_drift(sc, t + h, detail::step_point(x, k3, h), m, xi, zeta);
            std::vector<double> drift(sc.dim);
            for (std::size_t c = 0; c < sc.dim; ++c)
                drift[c] = (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) / 6.0;
            next = detail::step_point(x, drift, h);
        }
        t += h;
        traj.time_grid.push_back(t);
        traj.states.push_back(std::move(next));
    }
    return traj;
}

// Flow of probabilities generated by a distribution of joint relaxed controls:
// particles split by mixture components and the whole ensemble is stepped
// simultaneously, each step reading the current empirical measure.
inline MeasureFlow generate_flow(const Scenario& sc, double s, const EmpiricalMeasure& m_star,
                                 const JointControlField& k, double step, double t_end = -1.0,
                                 Integrator method = Integrator::Euler) {
    m_star.validate();
    if (k.size() != m_star.size())
        throw Error("generate_flow: joint field not defined on the measure's particles");
    if (t_end < 0.0) t_end = sc.horizon;
    if (!(step > 0.0)) throw Error("generate_flow: step must be positive");
    if (sc.declared_constants && sc.declared_constants->C0 * step > 0.5)
        throw StepTooLarge("generate_flow: C0*h > 0.5");

    struct Sub {
        TorusPoint pos;
        double weight;
        const RelaxedSchedule* xi;
        const RelaxedSchedule* zeta;
    };
    std::vector<Sub> subs;
    for (std::size_t i = 0; i < m_star.size(); ++i) {
        double wsum = 0.0;
        for (const auto& comp : k.particles[i]) wsum += comp.weight;
        if (std::abs(wsum - 1.0) > 1e-12)
            throw Error("generate_flow: particle mixture weights do not sum to 1");
        for (const auto& comp : k.particles[i])
            if (comp.weight > 0.0)
                subs.push_back({m_star.points[i], m_star.weights[i] * comp.weight,
                                &comp.u_schedule, &comp.v_schedule});
    }

    MeasureFlow flow;
    flow.trajectory_weights.reserve(subs.size());
    flow.trajectories.resize(subs.size());
    for (std::size_t i = 0; i < subs.size(); ++i) {
        flow.trajectory_weights.push_back(subs[i].weight);
        flow.trajectories[i].time_grid.push_back(s);
        flow.trajectories[i].states.push_back(subs[i].pos);
    }
    auto snapshot = [&]() {
        EmpiricalMeasure m;
        m.points.reserve(subs.size());
        m.weights.reserve(subs.size());
        for (const auto& sub : subs) {
            m.points.push_back(sub.pos);
            m.weights.push_back(sub.weight);
        }
        return m;
    };
    flow.time_grid.push_back(s);
    flow.measures.push_back(snapshot());

    double max_speed = 0.0;
    double t = s;
    while (t < t_end - 1e-12) {
        double h = std::min(step, t_end - t);
        const EmpiricalMeasure frame = snapshot();
        std::vector<TorusPoint> next(subs.size());
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (method == Integrator::Euler) {
                auto drift =
                    detail::relaxed_drift(sc, t, subs[i].pos, frame, *subs[i].xi, *subs[i].zeta);
                double sp = 0.0;
                for (double c : drift) sp += c * c;
                max_speed = std::max(max_speed, std::sqrt(sp));
                next[i] = detail::step_point(subs[i].pos, drift, h);
            } else {
                auto k1 = detail::relaxed_drift(sc, t, subs[i].pos, frame, *subs[i].xi,
                                                *subs[i].zeta);
                auto k2 = detail::relaxed_drift(sc, t + 0.5 * h,
                                                detail::step_point(subs[i].pos, k1, 0.5 * h),
                                                frame, *subs[i].xi, *subs[i].zeta);
                auto k3 = detail::relaxed_drift(sc, t + 0.5 * h,
                                                detail::step_point(subs[i].pos, k2, 0.5 * h),
                                                frame, *subs[i].xi, *subs[i].zeta);
                auto k4 = detail::relaxed_drift(sc, t + h, detail::step_point(subs[i].pos, k3, h),
                                                frame, *subs[i].xi, *subs[i].zeta);
                std::vector<double> drift(sc.dim);
                for (std::size_t c = 0; c < sc.dim; ++c)
                    drift[c] = (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) / 6.0;
                double sp = 0.0;
                for (double c : drift) sp += c * c;
                max_speed = std::max(max_speed, std::sqrt(sp));
                next[i] = detail::step_point(subs[i].pos, drift, h);
            }
        }
        for (std::size_t i = 0; i < subs.size(); ++i) {
            subs[i].pos = next[i];
            flow.trajectories[i].time_grid.push_back(t + h);
            flow.trajectories[i].states.push_back(subs[i].pos);
        }
        t += h;
        flow.time_grid.push_back(t);
        flow.measures.push_back(snapshot());
    }
    flow.lipschitz_const =
        sc.declared_constants ? sc.declared_constants->C0 : max_speed;
    return flow;
}

// ---- built-in dynamics and payoffs -------------------------------------------

// f = drift + u + v (position/measure independent)
inline VelocityFn split_linear_velocity(std::vector<double> drift) {
    return [drift = std::move(drift)](double, const TorusPoint&, const EmpiricalMeasure&,
                                      std::span<const double> u, std::span<const double> v,
                                      std::span<double> out) {
        for (std::size_t c = 0; c < out.size(); ++c) {
            double a = c < drift.size() ? drift[c] : 0.0;
            out[c] = a + u[c] + v[c];
        }
    };
}

// f_c = kappa/(2pi) * sum_j w_j sin(2pi(x_j - x)_c) + u + v
inline VelocityFn barycenter_attraction_velocity(double kappa) {
    return [kappa](double, const TorusPoint& x, const EmpiricalMeasure& m,
                   std::span<const double> u, std::span<const double> v, std::span<double> out) {
        constexpr double two_pi = 6.283185307179586476925286766559;
        for (std::size_t c = 0; c < out.size(); ++c) {
            double pull = 0.0;
            for (std::size_t j = 0; j < m.size(); ++j)
                pull += m.weights[j] * std::sin(two_pi * (m.points[j][c] - x[c]));
            out[c] = kappa * pull / two_pi + u[c] + v[c];
        }
    };
}

// anchor pull + mean-field attraction + u + v
inline VelocityFn pursuit_circle_velocity(double anchor_strength, std::vector<double> anchor,
                                          double interaction) {
    return [=](double, const TorusPoint& x, const EmpiricalMeasure& m, std::span<const double> u,
               std::span<const double> v, std::span<double> out) {
        constexpr double two_pi = 6.283185307179586476925286766559;
        for (std::size_t c = 0; c < out.size(); ++c) {
            double a = c < anchor.size() ? anchor[c] : 0.0;
            double pull = anchor_strength * std::sin(two_pi * (a - x[c]));
            for (std::size_t j = 0; j < m.size(); ++j)
                pull += interaction * m.weights[j] * std::sin(two_pi * (m.points[j][c] - x[c]));
            out[c] = pull / two_pi + u[c] + v[c];
        }
    };
}

inline PayoffFn w2_to_target_payoff(EmpiricalMeasure target) {
    return [target = std::move(target)](const EmpiricalMeasure& m) {
        double d = w2_distance(m, target);
        return d * d;
    };
}

// W2^2 to the Dirac at the arithmetic barycenter of canonical coordinates.
inline PayoffFn spread_payoff() {
    return [](const EmpiricalMeasure& m) {
        std::vector<double> bary(m.dim(), 0.0);
        for (std::size_t i = 0; i < m.size(); ++i)
            for (std::size_t c = 0; c < m.dim(); ++c) bary[c] += m.weights[i] * m.points[i][c];
        TorusPoint b = wrap(bary);
        double s = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) {
            double d = torus_distance(m.points[i], b);
            s += m.weights[i] * d * d;
        }
        return s;
    };
}

}  // namespace mfdg
