#pragma once

// Scaled gradient projection (SGP) for min J(h) over a box with one sum
// equality. Each step builds the diagonal scaling D_k = clamp(h, L1, L2),
// picks a steplength by alternating the two scaled Barzilai-Borwein rules,
// projects h - alpha D grad J in the D^{-1} norm and backtracks along the
// resulting feasible direction with a monotone Armijo rule.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "blindsgp/error.hpp"
#include "blindsgp/grid.hpp"
#include "blindsgp/projection.hpp"

namespace blindsgp {

/// Anything exposing J and (J, grad J) over a flat array.
template <class E>
concept Objective = requires(E& e, std::span<const double> x, std::span<double> g) {
    { e.value(x) } -> std::convertible_to<double>;
    { e.value_and_gradient(x, g) } -> std::convertible_to<double>;
};

struct SgpOptions {
    double scaling_lower = 1e-10;  // L1
    double scaling_upper = 1e10;   // L2
    double alpha_init = 1.3;
    double alpha_min = 1e-5;
    double alpha_max = 1e5;
    double tau_init = 0.5;
    std::size_t bb2_memory = 3;
    double beta = 0.4;    // backtracking factor
    double gamma = 1e-4;  // Armijo constant
    int max_backtracks = 50;
    double projection_tol = 1e-10;
    double stationarity = -1e-14;  // grad^T d at or above this means "stationary"
    std::ostream* log = nullptr;   // per-iteration CSV records when set
};

struct SgpState {
    std::vector<double> iterate;
    std::vector<double> gradient;
    double value = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> prev_step;       // s = h_k - h_{k-1}
    std::vector<double> prev_grad_diff;  // z = grad_k - grad_{k-1}
    bool has_history = false;
    double alpha = 1.3;
    double tau = 0.5;
    std::deque<double> bb2_memory;
    bool stationary = false;
    std::size_t iterations = 0;

    static SgpState start(std::vector<double> initial, const SgpOptions& opt)
    {
        SgpState s;
        s.gradient.assign(initial.size(), 0.0);
        s.iterate = std::move(initial);
        s.alpha = std::clamp(opt.alpha_init, opt.alpha_min, opt.alpha_max);
        s.tau = opt.tau_init;
        return s;
    }
};

struct StepRecord {
    std::size_t iteration = 0;
    double objective = 0.0;
    double alpha = 0.0;
    double lambda = 0.0;
    int backtracks = 0;
    bool stationary = false;
};

inline std::vector<double> scaling_matrix(std::span<const double> iterate, double lower, double upper)
{
    if (!(lower > 0.0 && lower < upper)) throw Error("scaling_matrix: need 0 < L1 < L2");
    std::vector<double> d(iterate.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::min(upper, std::max(lower, iterate[i]));
    return d;
}

/// Scaled BB steplengths. An empty optional means the rule is not usable
/// (nonpositive or non-finite ratio) and the caller falls back to alpha_max.
struct BbSteps {
    std::optional<double> bb1;
    std::optional<double> bb2;
};

inline BbSteps bb_steplengths(std::span<const double> s, std::span<const double> z, std::span<const double> d)
{
    double num1 = 0.0, den1 = 0.0, num2 = 0.0, den2 = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double s_over_d = s[i] / d[i];
        num1 += s_over_d * s_over_d;
        den1 += s_over_d * z[i];
        const double dz = d[i] * z[i];
        num2 += s[i] * dz;
        den2 += dz * dz;
    }
    BbSteps out;
    auto usable = [](double num, double den) -> std::optional<double> {
        if (!(den > 0.0) || !(num > 0.0)) return std::nullopt;
        const double r = num / den;
        if (!std::isfinite(r)) return std::nullopt;
        return r;
    };
    out.bb1 = usable(num1, den1);
    out.bb2 = usable(num2, den2);
    return out;
}

/// Alternation of the BB rules: when BB2/BB1 <= tau take the smallest BB2 in
/// the recent memory (current value included) and shrink tau by 0.9,
/// otherwise take BB1 and grow tau by 1.1. Mutates tau and the memory.
inline double alpha_select(SgpState& st, const BbSteps& bb, const SgpOptions& opt)
{
    const double a1 = std::clamp(bb.bb1.value_or(opt.alpha_max), opt.alpha_min, opt.alpha_max);
    const double a2 = std::clamp(bb.bb2.value_or(opt.alpha_max), opt.alpha_min, opt.alpha_max);
    st.bb2_memory.push_back(a2);
    while (st.bb2_memory.size() > std::max<std::size_t>(1, opt.bb2_memory)) st.bb2_memory.pop_front();
    double alpha;
    if (a2 / a1 <= st.tau) {
        alpha = *std::min_element(st.bb2_memory.begin(), st.bb2_memory.end());
        st.tau *= 0.9;
    } else {
        alpha = a1;
        st.tau *= 1.1;
    }
    return std::clamp(alpha, opt.alpha_min, opt.alpha_max);
}

/// Recomputes value and gradient at the current iterate (needed whenever the
/// objective changed, e.g. after another block was updated).
template <Objective E>
void refresh(SgpState& st, E& objective)
{
    st.gradient.resize(st.iterate.size());
    st.value = objective.value_and_gradient(st.iterate, st.gradient);
    st.stationary = false;
}

/// One SGP iteration. Requires a feasible iterate and an up-to-date gradient.
template <Objective E>
StepRecord sgp_step(SgpState& st, E& objective, const ConstraintSpec& constraint, const SgpOptions& opt = {})
{
    const std::size_t n = st.iterate.size();
    if (n != constraint.dimension()) throw Error("sgp_step: iterate/constraint dimension mismatch");
    if (!std::isfinite(st.value)) refresh(st, objective);

    const std::vector<double> d = scaling_matrix(st.iterate, opt.scaling_lower, opt.scaling_upper);
    if (st.has_history) st.alpha = alpha_select(st, bb_steplengths(st.prev_step, st.prev_grad_diff, d), opt);

    std::vector<double> trial(n);
    for (std::size_t i = 0; i < n; ++i) trial[i] = st.iterate[i] - st.alpha * d[i] * st.gradient[i];
    std::vector<double> projected(n);
    project_into({trial, d, constraint}, projected, opt.projection_tol);

    std::vector<double> dir(n);
    double slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dir[i] = projected[i] - st.iterate[i];
        slope += st.gradient[i] * dir[i];
    }

    StepRecord rec;
    rec.iteration = st.iterations;
    rec.alpha = st.alpha;
    if (!(slope < opt.stationarity)) {
        st.stationary = true;
        rec.objective = st.value;
        rec.stationary = true;
        return rec;
    }

    // The first trial computes the gradient too: lambda = 1 is accepted in
    // the vast majority of steps.
    std::vector<double> new_grad(n);
    double lambda = 1.0;
    double new_value = 0.0;
    bool accepted = false;
    bool have_grad = false;
    int backtracks = 0;
    for (;;) {
        for (std::size_t i = 0; i < n; ++i) trial[i] = st.iterate[i] + lambda * dir[i];
        if (backtracks == 0) {
            new_value = objective.value_and_gradient(trial, new_grad);
            have_grad = true;
        } else {
            new_value = objective.value(trial);
            have_grad = false;
        }
        if (new_value <= st.value + opt.gamma * lambda * slope) {
            accepted = true;
            break;
        }
        if (backtracks == opt.max_backtracks) break;
        lambda *= opt.beta;
        ++backtracks;
    }
    if (!accepted)
        throw Error("sgp_step: line search exhausted " + std::to_string(opt.max_backtracks) +
                    " backtracks (inconsistent gradient or projection)");
    if (!have_grad) new_value = objective.value_and_gradient(trial, new_grad);

    st.prev_step.resize(n);
    st.prev_grad_diff.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        st.prev_step[i] = trial[i] - st.iterate[i];
        st.prev_grad_diff[i] = new_grad[i] - st.gradient[i];
    }
    st.has_history = true;
    st.iterate.swap(trial);
    st.gradient.swap(new_grad);
    st.value = new_value;
    ++st.iterations;

    rec.objective = new_value;
    rec.lambda = lambda;
    rec.backtracks = backtracks;
    if (opt.log)
        *opt.log << rec.iteration << ',' << rec.objective << ',' << rec.alpha << ',' << rec.lambda << ','
                 << rec.backtracks << '\n';
    return rec;
}

/// Runs up to n_iters SGP steps (fewer if a stationary point is flagged).
/// Returns the number of accepted steps.
template <Objective E>
std::size_t run_sgp(SgpState& st, E& objective, const ConstraintSpec& constraint, std::size_t n_iters,
                    const SgpOptions& opt = {})
{
    if (n_iters == 0) return 0;
    const double sum_tol = 1e-8 * std::max(1.0, std::abs(constraint.sum_target()));
    if (!constraint.contains(st.iterate, sum_tol)) throw Error("run_sgp: initial iterate is not feasible");
    refresh(st, objective);
    std::size_t done = 0;
    for (; done < n_iters; ++done) {
        const StepRecord rec = sgp_step(st, objective, constraint, opt);
        if (rec.stationary) break;
    }
    return done;
}

template <Objective E>
std::vector<double> run_sgp(std::vector<double> initial, E& objective, const ConstraintSpec& constraint,
                            std::size_t n_iters, const SgpOptions& opt = {})
{
    SgpState st = SgpState::start(std::move(initial), opt);
    run_sgp(st, objective, constraint, n_iters, opt);
    return st.iterate;
}

}  // namespace blindsgp
