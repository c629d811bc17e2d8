#pragma once

// Projection onto {l <= y <= u, sum(y) = c} in the norm induced by D^{-1}:
//
//     argmin_y (h - y)^T D^{-1} (h - y),   D diagonal and positive.
//
// The KKT conditions give y_i(lambda) = clamp(h_i - lambda * D_i, l_i, u_i),
// and lambda* is the root of the continuous, nonincreasing, piecewise linear
// residual r(lambda) = sum_i y_i(lambda) - c. The root is located with a
// safeguarded secant iteration in the style of Dai and Fletcher; each call is
// linear in the dimension per iteration and needs no sorting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "blindsgp/error.hpp"
#include "blindsgp/grid.hpp"

namespace blindsgp {

struct ProjectionProblem {
    std::span<const double> point;    // h
    std::span<const double> scaling;  // diagonal of D
    const ConstraintSpec& constraint;
};

struct ProjectionReport {
    double multiplier = 0.0;  // lambda*
    int iterations = 0;
    double residual = 0.0;  // sum(y) - c
};

namespace detail {

inline void check_problem(const ProjectionProblem& prob)
{
    const std::size_t n = prob.constraint.dimension();
    if (prob.point.size() != n || prob.scaling.size() != n)
        throw Error("project: point/scaling length does not match the constraint dimension");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(prob.scaling[i] > 0.0) || !std::isfinite(prob.scaling[i]))
            throw Error("project: scaling entries must be positive and finite");
        if (!std::isfinite(prob.point[i])) throw Error("project: non-finite point");
    }
}

struct ResidualEval {
    double residual;        // sum(y(lambda)) - c
    double free_scaling;    // sum of D_i over unclamped entries (minus the slope)
    double free_point;      // sum of h_i over unclamped entries
    double clamped_sum;     // sum of bounds over clamped entries
};

inline ResidualEval evaluate(const ProjectionProblem& prob, double lambda)
{
    const auto& con = prob.constraint;
    ResidualEval e{0.0, 0.0, 0.0, 0.0};
    double total = 0.0;
    for (std::size_t i = 0; i < prob.point.size(); ++i) {
        const double v = prob.point[i] - lambda * prob.scaling[i];
        const double lo = con.lower(i), hi = con.upper(i);
        if (v <= lo) {
            total += lo;
            e.clamped_sum += lo;
        } else if (v >= hi) {
            total += hi;
            e.clamped_sum += hi;
        } else {
            total += v;
            e.free_scaling += prob.scaling[i];
            e.free_point += prob.point[i];
        }
    }
    e.residual = total - con.sum_target();
    return e;
}

inline void fill_solution(const ProjectionProblem& prob, double lambda, std::span<double> out)
{
    const auto& con = prob.constraint;
    for (std::size_t i = 0; i < prob.point.size(); ++i)
        out[i] = std::clamp(prob.point[i] - lambda * prob.scaling[i], con.lower(i), con.upper(i));
}

/// Bracket [lo, hi] with r(lo) >= 0 >= r(hi), from the bound extremes.
inline std::pair<double, double> initial_bracket(const ProjectionProblem& prob)
{
    const auto& con = prob.constraint;
    double hi = -std::numeric_limits<double>::infinity();
    double lo_finite = std::numeric_limits<double>::infinity();
    double lo_lower = std::numeric_limits<double>::infinity();
    double inf_point = 0.0, inf_scaling = 0.0, fin_upper = 0.0;
    bool any_infinite = false;
    for (std::size_t i = 0; i < prob.point.size(); ++i) {
        const double h = prob.point[i], d = prob.scaling[i];
        hi = std::max(hi, (h - con.lower(i)) / d);  // every entry at its lower bound
        lo_lower = std::min(lo_lower, (h - con.lower(i)) / d);
        if (std::isinf(con.upper(i))) {
            any_infinite = true;
            inf_point += h;
            inf_scaling += d;
        } else {
            lo_finite = std::min(lo_finite, (h - con.upper(i)) / d);
            fin_upper += con.upper(i);
        }
    }
    double lo = lo_finite;
    if (any_infinite) {
        // Below min((h-l)/D) and min((h-u)/D) every entry with an infinite
        // cap is free and every finite cap is active, so r is linear there.
        lo = std::min(lo_lower, lo_finite);
        const double linear_root = (inf_point + fin_upper - con.sum_target()) / inf_scaling;
        lo = std::min(lo, linear_root);
    }
    return {lo, hi};
}

}  // namespace detail

/// Writes the projection of prob.point into `out`. |sum(out) - c| is driven to
/// at most tol * max(1, |c|); the final active set is solved exactly, so in
/// practice the residual sits at rounding level.
inline ProjectionReport project_into(const ProjectionProblem& prob, std::span<double> out, double tol = 1e-10)
{
    detail::check_problem(prob);
    if (!(tol > 0.0)) throw Error("project: tolerance must be positive");
    if (out.size() != prob.point.size()) throw Error("project: output length mismatch");

    const double c = prob.constraint.sum_target();
    const double target_tol = tol * std::max(1.0, std::abs(c));
    ProjectionReport rep;

    // Feasible points are fixed points (lambda* = 0).
    {
        const auto e0 = detail::evaluate(prob, 0.0);
        if (std::abs(e0.residual) <= target_tol) {
            detail::fill_solution(prob, 0.0, out);
            rep.residual = e0.residual;
            return rep;
        }
    }

    auto [lo, hi] = detail::initial_bracket(prob);
    auto elo = detail::evaluate(prob, lo);
    auto ehi = detail::evaluate(prob, hi);
    if (!std::isfinite(lo) || !std::isfinite(hi) || elo.residual < -target_tol || ehi.residual > target_tol)
        throw Error("project: no bracket for the multiplier (infeasible constraint?)");

    // Newton polish on the current linear piece: exact when the active set
    // does not change.
    auto piece_root = [&](const detail::ResidualEval& e) {
        return (e.free_point + e.clamped_sum - c) / e.free_scaling;
    };

    double lambda = 0.0;
    detail::ResidualEval e{};
    bool done = false;
    if (std::abs(elo.residual) <= target_tol) {
        lambda = lo, e = elo, done = true;
    } else if (std::abs(ehi.residual) <= target_tol) {
        lambda = hi, e = ehi, done = true;
    }

    double rlo = elo.residual, rhi = ehi.residual;  // rlo > 0 > rhi
    int side = 0;                                   // Illinois bookkeeping
    constexpr int max_iter = 500;
    while (!done && rep.iterations < max_iter) {
        ++rep.iterations;
        double trial = hi - rhi * (hi - lo) / (rhi - rlo);
        // Fall back to bisection if the secant point leaves the open bracket.
        if (!(trial > lo && trial < hi)) trial = 0.5 * (lo + hi);
        e = detail::evaluate(prob, trial);
        lambda = trial;
        if (std::abs(e.residual) <= target_tol) break;
        if (e.free_scaling > 0.0) {
            // Try the exact root of this piece before shrinking the bracket.
            const double cand = piece_root(e);
            if (cand > lo && cand < hi) {
                const auto ec = detail::evaluate(prob, cand);
                if (std::abs(ec.residual) <= target_tol) {
                    lambda = cand, e = ec;
                    break;
                }
            }
        }
        if (e.residual > 0.0) {
            lo = trial, rlo = e.residual;
            if (side == -1) rhi *= 0.5;
            side = -1;
        } else {
            hi = trial, rhi = e.residual;
            if (side == 1) rlo *= 0.5;
            side = 1;
        }
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi))) break;
    }

    if (e.free_scaling > 0.0 && e.residual != 0.0) {
        const double cand = piece_root(e);
        const auto ec = detail::evaluate(prob, cand);
        if (std::abs(ec.residual) < std::abs(e.residual)) lambda = cand, e = ec;
    }
    detail::fill_solution(prob, lambda, out);
    rep.multiplier = lambda;
    rep.residual = e.residual;
    if (std::abs(e.residual) > target_tol)
        throw Error("project: multiplier search did not reach the sum tolerance");
    return rep;
}

inline std::vector<double> project(const ProjectionProblem& prob, double tol = 1e-10)
{
    std::vector<double> out(prob.point.size());
    project_into(prob, out, tol);
    return out;
}

/// Reference solution by plain bisection on r(lambda): 200 halvings of the
/// bracket spanned by the bound extremes. Intended for small test problems.
inline std::vector<double> project_oracle(const ProjectionProblem& prob)
{
    detail::check_problem(prob);
    const auto& con = prob.constraint;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < prob.point.size(); ++i) {
        const double h = prob.point[i], d = prob.scaling[i];
        lo = std::min(lo, (h - con.lower(i)) / d);
        hi = std::max(hi, (h - con.lower(i)) / d);
        if (std::isfinite(con.upper(i))) lo = std::min(lo, (h - con.upper(i)) / d);
    }
    auto residual = [&](double lambda) {
        double s = 0.0;
        for (std::size_t i = 0; i < prob.point.size(); ++i)
            s += std::clamp(prob.point[i] - lambda * prob.scaling[i], con.lower(i), con.upper(i));
        return s - con.sum_target();
    };
    // Unbounded entries: step the lower end down until r >= 0.
    double step = std::max(1.0, std::abs(lo));
    while (residual(lo) < 0.0) {
        lo -= step;
        step *= 2.0;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (residual(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    const double lambda = 0.5 * (lo + hi);
    std::vector<double> y(prob.point.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = std::clamp(prob.point[i] - lambda * prob.scaling[i], con.lower(i), con.upper(i));
    return y;
}

}  // namespace blindsgp
