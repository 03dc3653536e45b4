#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mfdg/errors.hpp"

namespace mfdg {

// Point on the flat torus [0,1)^d with coordinates stored as the canonical
// representative of its equivalence class.
struct TorusPoint {
    std::vector<double> coords;

    TorusPoint() = default;
    explicit TorusPoint(std::vector<double> c) : coords(std::move(c)) {}

    std::size_t dim() const { return coords.size(); }
    double operator[](std::size_t i) const { return coords[i]; }

    bool operator==(const TorusPoint& o) const { return coords == o.coords; }
};

inline double wrap_coord(double c) {
    double w = c - std::floor(c);
    if (w >= 1.0) w = 0.0;  // rounding at the seam
    return w;
}

inline TorusPoint wrap(const std::vector<double>& raw) {
    std::vector<double> c(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!std::isfinite(raw[i])) throw InvalidPoint("wrap: non-finite coordinate");
        c[i] = wrap_coord(raw[i]);
    }
    return TorusPoint(std::move(c));
}

// Signed per-coordinate difference y - x reduced to [-1/2, 1/2].
// Ties at exactly 1/2 resolve to -1/2 (shift toward the smaller representative).
inline double torus_delta(double x, double y) {
    double dx = y - x;
    return dx - std::floor(dx + 0.5);
}

inline void check_same_dim(const TorusPoint& x, const TorusPoint& y) {
    if (x.dim() != y.dim()) throw DimError("dimension mismatch");
}

inline double torus_distance(const TorusPoint& x, const TorusPoint& y) {
    check_same_dim(x, y);
    double s = 0.0;
    for (std::size_t i = 0; i < x.dim(); ++i) {
        double d = torus_delta(x[i], y[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

// Representatives x', y' in R^d with ||x'-y'|| equal to the torus distance.
// x' is the canonical representative of x; y' = x' + delta.
struct LiftedPair {
    std::vector<double> x_rep;
    std::vector<double> y_rep;
    double distance = 0.0;
};

inline LiftedPair lift_pair(const TorusPoint& x, const TorusPoint& y) {
    check_same_dim(x, y);
    LiftedPair lp;
    lp.x_rep = x.coords;
    lp.y_rep.resize(y.dim());
    double s = 0.0;
    for (std::size_t i = 0; i < x.dim(); ++i) {
        double d = torus_delta(x[i], y[i]);
        lp.y_rep[i] = x[i] + d;
        s += d * d;
    }
    lp.distance = std::sqrt(s);
    return lp;
}

}  // namespace mfdg
