#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mfdg/errors.hpp"
#include "mfdg/measure.hpp"

namespace mfdg {

enum class Player { First, Second };

inline const char* player_name(Player p) { return p == Player::First ? "first" : "second"; }

// Finite control grid; atoms are control vectors.
struct ControlGrid {
    std::vector<std::vector<double>> atoms;
    std::string label;  // "U" or "V"

    std::size_t size() const { return atoms.size(); }
    std::size_t control_dim() const { return atoms.empty() ? 0 : atoms[0].size(); }
    const std::vector<double>& atom(std::size_t i) const { return atoms[i]; }
};

// Relaxed control: piecewise-constant (in time) probability mixtures over the
// atoms of one grid.
struct RelaxedSchedule {
    std::vector<double> time_grid;                // cell boundaries, size cells()+1
    std::vector<std::vector<double>> mixtures;    // per cell, probability over atoms

    std::size_t cells() const { return mixtures.size(); }

    static RelaxedSchedule constant_atom(std::size_t grid_size, std::size_t atom,
                                         double t0, double t1) {
        RelaxedSchedule s;
        s.time_grid = {t0, t1};
        s.mixtures.assign(1, std::vector<double>(grid_size, 0.0));
        s.mixtures[0][atom] = 1.0;
        return s;
    }

    static RelaxedSchedule constant_mixture(std::vector<double> mixture, double t0, double t1) {
        RelaxedSchedule s;
        s.time_grid = {t0, t1};
        s.mixtures.push_back(std::move(mixture));
        return s;
    }

    static RelaxedSchedule piecewise_pure(std::vector<double> time_grid,
                                          const std::vector<std::size_t>& atom_per_cell,
                                          std::size_t grid_size) {
        RelaxedSchedule s;
        s.time_grid = std::move(time_grid);
        s.mixtures.assign(atom_per_cell.size(), std::vector<double>(grid_size, 0.0));
        for (std::size_t c = 0; c < atom_per_cell.size(); ++c) s.mixtures[c][atom_per_cell[c]] = 1.0;
        return s;
    }

    const std::vector<double>& mixture_at(double t) const {
        // cell containing t; times past the end read the last cell
        std::size_t c = 0;
        while (c + 1 < mixtures.size() && t >= time_grid[c + 1] - 1e-15) ++c;
        return mixtures[c];
    }

    // point mass on a single atom in every cell
    std::optional<std::size_t> pure_constant_atom(double tol = 1e-12) const {
        std::optional<std::size_t> atom;
        for (const auto& mix : mixtures) {
            std::size_t best = 0;
            for (std::size_t a = 1; a < mix.size(); ++a)
                if (mix[a] > mix[best]) best = a;
            if (std::abs(mix[best] - 1.0) > tol) return std::nullopt;
            if (atom && *atom != best) return std::nullopt;
            atom = best;
        }
        return atom;
    }

    bool is_pure(double tol = 1e-12) const {
        for (const auto& mix : mixtures) {
            double mx = 0.0;
            for (double p : mix) mx = std::max(mx, p);
            if (std::abs(mx - 1.0) > tol) return false;
        }
        return true;
    }

    bool approx_equal(const RelaxedSchedule& o, double tol = 1e-10) const {
        if (time_grid.size() != o.time_grid.size() || mixtures.size() != o.mixtures.size())
            return false;
        for (std::size_t i = 0; i < time_grid.size(); ++i)
            if (std::abs(time_grid[i] - o.time_grid[i]) > tol) return false;
        for (std::size_t c = 0; c < mixtures.size(); ++c) {
            if (mixtures[c].size() != o.mixtures[c].size()) return false;
            for (std::size_t a = 0; a < mixtures[c].size(); ++a)
                if (std::abs(mixtures[c][a] - o.mixtures[c][a]) > tol) return false;
        }
        return true;
    }
};

// Per-particle control assignment for one player. Constant fields carry a
// probability vector over grid atoms per particle (distributions of constant
// controls); non-constant fields carry one relaxed schedule per particle.
struct ControlField {
    Player player = Player::First;
    bool constant_flag = true;
    std::vector<std::vector<double>> constant_mixtures;  // when constant_flag
    std::vector<RelaxedSchedule> schedules;              // otherwise

    std::size_t particles() const {
        return constant_flag ? constant_mixtures.size() : schedules.size();
    }

    static ControlField constant_pure(Player p, const std::vector<std::size_t>& atoms,
                                      std::size_t grid_size) {
        ControlField f;
        f.player = p;
        f.constant_flag = true;
        f.constant_mixtures.assign(atoms.size(), std::vector<double>(grid_size, 0.0));
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            if (atoms[i] >= grid_size) throw UnknownAtom("atom index out of grid");
            f.constant_mixtures[i][atoms[i]] = 1.0;
        }
        return f;
    }

    static ControlField constant_mixed(Player p, std::vector<std::vector<double>> mixtures) {
        ControlField f;
        f.player = p;
        f.constant_flag = true;
        f.constant_mixtures = std::move(mixtures);
        return f;
    }
};

inline ControlField make_constant_field(const EmpiricalMeasure& m,
                                        const std::vector<std::size_t>& assignment,
                                        const ControlGrid& grid, Player player) {
    if (assignment.size() != m.size())
        throw Error("make_constant_field: assignment not total on particles");
    for (std::size_t a : assignment)
        if (a >= grid.size()) throw UnknownAtom("make_constant_field: atom not in grid");
    return ControlField::constant_pure(player, assignment, grid.size());
}

// One component of a per-particle joint mixture: a pair of relaxed schedules
// with a probability weight.
struct JointComponent {
    double weight = 1.0;
    RelaxedSchedule u_schedule;
    RelaxedSchedule v_schedule;
};

struct JointControlField {
    std::vector<std::vector<JointComponent>> particles;
    std::optional<std::pair<Player, ControlField>> declared_marginal;

    std::size_t size() const { return particles.size(); }
};

// Join a constant base field with a response of the other player: one relaxed
// schedule per (particle, base atom). The declared marginal holds by
// construction; pure responses land in the D1^0 / D2^0 subclasses.
inline JointControlField join_with_response(
    const ControlField& base, const std::vector<std::vector<RelaxedSchedule>>& response,
    double t0, double t1) {
    if (!base.constant_flag)
        throw Error("join_with_response: base must be a constant field");
    if (response.size() != base.particles())
        throw IncompleteResponse("join_with_response: response missing particles");
    JointControlField joint;
    joint.particles.resize(base.particles());
    const std::size_t grid_size =
        base.particles() ? base.constant_mixtures[0].size() : 0;
    for (std::size_t i = 0; i < base.particles(); ++i) {
        for (std::size_t a = 0; a < base.constant_mixtures[i].size(); ++a) {
            double p = base.constant_mixtures[i][a];
            if (p <= 0.0) continue;
            if (a >= response[i].size())
                throw IncompleteResponse("join_with_response: response missing for atom");
            JointComponent comp;
            comp.weight = p;
            RelaxedSchedule own = RelaxedSchedule::constant_atom(grid_size, a, t0, t1);
            if (base.player == Player::First) {
                comp.u_schedule = std::move(own);
                comp.v_schedule = response[i][a];
            } else {
                comp.v_schedule = std::move(own);
                comp.u_schedule = response[i][a];
            }
            joint.particles[i].push_back(std::move(comp));
        }
    }
    joint.declared_marginal = {base.player, base};
    return joint;
}

// Convenience: every base atom gets the same response schedule.
inline JointControlField join_with_uniform_response(const ControlField& base,
                                                    const std::vector<RelaxedSchedule>& per_particle,
                                                    double t0, double t1) {
    const std::size_t grid_size = base.particles() ? base.constant_mixtures[0].size() : 0;
    std::vector<std::vector<RelaxedSchedule>> resp(base.particles());
    for (std::size_t i = 0; i < base.particles(); ++i)
        resp[i].assign(grid_size, per_particle[i]);
    return join_with_response(base, resp, t0, t1);
}

// Pure joint field: one (u,v) atom pair per particle, constant over [t0,t1].
inline JointControlField joint_pure_field(const std::vector<std::size_t>& u_atoms,
                                          const std::vector<std::size_t>& v_atoms,
                                          std::size_t u_grid, std::size_t v_grid,
                                          double t0, double t1) {
    JointControlField joint;
    joint.particles.resize(u_atoms.size());
    for (std::size_t i = 0; i < u_atoms.size(); ++i) {
        JointComponent comp;
        comp.weight = 1.0;
        comp.u_schedule = RelaxedSchedule::constant_atom(u_grid, u_atoms[i], t0, t1);
        comp.v_schedule = RelaxedSchedule::constant_atom(v_grid, v_atoms[i], t0, t1);
        joint.particles[i].push_back(std::move(comp));
    }
    return joint;
}

// Check that the per-particle marginal of the declared player matches the
// declared field (membership in D1[alpha] / D2[beta]).
inline bool validate_consistency(const JointControlField& k, double tol = 1e-10) {
    if (!k.declared_marginal) throw Error("validate_consistency: no declared marginal");
    const auto& [player, field] = *k.declared_marginal;
    if (field.particles() != k.size()) return false;
    for (std::size_t i = 0; i < k.size(); ++i) {
        double wsum = 0.0;
        for (const auto& comp : k.particles[i]) wsum += comp.weight;
        if (std::abs(wsum - 1.0) > tol) return false;

        if (field.constant_flag) {
            std::vector<double> marginal(field.constant_mixtures[i].size(), 0.0);
            for (const auto& comp : k.particles[i]) {
                const RelaxedSchedule& own =
                    player == Player::First ? comp.u_schedule : comp.v_schedule;
                auto atom = own.pure_constant_atom();
                if (!atom) return false;  // not a distribution over constant atoms
                if (*atom >= marginal.size()) return false;
                marginal[*atom] += comp.weight;
            }
            for (std::size_t a = 0; a < marginal.size(); ++a)
                if (std::abs(marginal[a] - field.constant_mixtures[i][a]) > tol) return false;
        } else {
            for (const auto& comp : k.particles[i]) {
                const RelaxedSchedule& own =
                    player == Player::First ? comp.u_schedule : comp.v_schedule;
                if (!own.approx_equal(field.schedules[i], tol)) return false;
            }
        }
    }
    return true;
}

// True when every component of every particle is a pure (point-mass) schedule
// for the given player.
inline bool is_pure_for(const JointControlField& k, Player player, double tol = 1e-12) {
    for (const auto& comps : k.particles)
        for (const auto& comp : comps) {
            const RelaxedSchedule& s = player == Player::First ? comp.u_schedule : comp.v_schedule;
            if (!s.is_pure(tol)) return false;
        }
    return true;
}

// Exhaustive enumeration of pure per-particle piecewise-constant assignments:
// assignment[particle][cell] = atom index, lexicographic odometer order with
// the last slot fastest.
class PureFieldEnumerator {
  public:
    PureFieldEnumerator(std::size_t grid_size, std::size_t n_particles, std::size_t time_cells,
                        std::size_t cap = 1'000'000)
        : grid_(grid_size), particles_(n_particles), cells_(time_cells) {
        double count = std::pow(static_cast<double>(grid_size),
                                static_cast<double>(n_particles * time_cells));
        if (count > static_cast<double>(cap))
            throw SearchSpaceTooLarge("enumerate_pure_fields: |grid|^(N*cells) exceeds cap");
        total_ = static_cast<std::size_t>(count + 0.5);
        flat_.assign(n_particles * time_cells, 0);
    }

    std::size_t total() const { return total_; }

    // returns false when exhausted
    bool next(std::vector<std::vector<std::size_t>>& assignment) {
        if (done_) return false;
        assignment.assign(particles_, std::vector<std::size_t>(cells_, 0));
        for (std::size_t p = 0; p < particles_; ++p)
            for (std::size_t c = 0; c < cells_; ++c) assignment[p][c] = flat_[p * cells_ + c];
        // odometer increment
        std::size_t slot = flat_.size();
        while (slot > 0) {
            --slot;
            if (++flat_[slot] < grid_) break;
            flat_[slot] = 0;
            if (slot == 0) done_ = true;
        }
        if (flat_.empty()) done_ = true;
        return true;
    }

  private:
    std::size_t grid_, particles_, cells_, total_ = 1;
    std::vector<std::size_t> flat_;
    bool done_ = false;
};

inline PureFieldEnumerator enumerate_pure_fields(const ControlGrid& grid, std::size_t n_particles,
                                                 std::size_t time_cells,
                                                 std::size_t cap = 1'000'000) {
    return PureFieldEnumerator(grid.size(), n_particles, time_cells, cap);
}

}  // namespace mfdg
