#include "ipwfront/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "ipwfront/frontier.hpp"
#include "ipwfront/ipw_eval.hpp"
#include "ipwfront/parallel.hpp"

namespace ipwfront {

void project_to_simplex(std::span<double> v) {
    const int n = static_cast<int>(v.size());
    std::vector<double> u(v.begin(), v.end());
    std::sort(u.begin(), u.end(), std::greater<double>());
    double csum = 0.0, theta = 0.0;
    for (int j = 0; j < n; ++j) {
        csum += u[j];
        const double t = (csum - 1.0) / (j + 1);
        if (u[j] - t > 0.0) theta = t;
    }
    for (double& x : v) x = std::max(x - theta, 0.0);
}

namespace {

// Objective and gradient of one unit's contribution to
// s^2(pi) - (xi/N) * sum_t mu_t * (pi_t - obs_t), as a function of that
// unit's propensity row alone (the trade-off separates across units).
struct UnitProblem {
    std::vector<double> m2;   // second moments
    std::vector<double> mu;
    std::vector<double> po;
    double inv_n2 = 0.0;      // 1/N^2
    double xi_over_n = 0.0;   // xi/N

    UnitProblem(const CounterfactualModel& model, const Policy& obs, int n, double xi) {
        const int A = model.n_arms();
        m2.resize(A);
        mu.resize(A);
        po.resize(A);
        for (int t = 0; t < A; ++t) {
            m2[t] = model.second_moment(n, t);
            mu[t] = model.mu.at(n, t);
            po[t] = obs.probs.at(n, t);
        }
        const double N = model.n_units();
        inv_n2 = 1.0 / (N * N);
        xi_over_n = xi / N;
    }

    double value(std::span<const double> x) const {
        double quad = 0.0, dot = 0.0;
        for (size_t t = 0; t < m2.size(); ++t) {
            const double d = x[t] - po[t];
            quad += m2[t] * d * d / po[t];
            dot += mu[t] * d;
        }
        return inv_n2 * (quad - dot * dot) - xi_over_n * dot;
    }

    void gradient(std::span<const double> x, std::span<double> g) const {
        double dot = 0.0;
        for (size_t t = 0; t < m2.size(); ++t) dot += mu[t] * (x[t] - po[t]);
        for (size_t t = 0; t < m2.size(); ++t)
            g[t] = 2.0 * inv_n2 * (m2[t] * (x[t] - po[t]) / po[t] - mu[t] * dot) -
                   xi_over_n * mu[t];
    }

    // Upper bound on the Hessian spectral norm (diagonal part dominates).
    double lipschitz() const {
        double m = 0.0;
        for (size_t t = 0; t < m2.size(); ++t) m = std::max(m, m2[t] / po[t]);
        return 2.0 * inv_n2 * m;
    }
};

// Uniform shifts of the gradient are invisible on the simplex (the
// projection absorbs them into its threshold), but their floating-point
// footprint is not: near a stationary point the informative part of the
// gradient is the deviation from its mean, many orders of magnitude below
// the mean itself.  Removing the mean first keeps descent tests and
// residuals accurate at tolerances near machine precision.
void center_gradient(std::span<const double> g, std::span<double> gc) {
    double mean = 0.0;
    for (double v : g) mean += v;
    mean /= static_cast<double>(g.size());
    for (size_t t = 0; t < g.size(); ++t) gc[t] = g[t] - mean;
}

// Reference residual: distance moved by one unit-step projected gradient.
double projected_residual(std::span<const double> x, std::span<const double> g) {
    std::vector<double> gc(g.size());
    center_gradient(g, gc);
    std::vector<double> y(x.begin(), x.end());
    for (size_t t = 0; t < y.size(); ++t) y[t] -= gc[t];
    project_to_simplex(y);
    double r2 = 0.0;
    for (size_t t = 0; t < y.size(); ++t) {
        const double d = y[t] - x[t];
        r2 += d * d;
    }
    return std::sqrt(r2);
}

struct UnitSolveResult {
    long iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

// Projected gradient descent with a spectral (Barzilai-Borwein) trial step,
// backtracking against the exact quadratic objective, and an exact line
// search along the projected direction.  Backtracking is floored at the
// inverse curvature bound, where the sufficient-decrease condition holds by
// convexity, so every iteration accepts a step.
UnitSolveResult solve_unit(const UnitProblem& prob, std::span<double> x, double tolerance,
                           long max_iter) {
    const int A = static_cast<int>(prob.m2.size());
    std::vector<double> g(A), gc(A), y(A), x_prev(A), g_prev(A);
    const double lip = prob.lipschitz();
    const double eta_safe = 1.0 / lip;
    double eta = eta_safe;
    bool have_prev = false;
    int stuck = 0;

    UnitSolveResult res;
    long it = 0;
    for (; it < max_iter; ++it) {
        prob.gradient(x, g);
        res.residual = projected_residual(x, g);
        res.iterations = it;
        if (res.residual <= tolerance) {
            res.converged = true;
            return res;
        }
        center_gradient(g, gc);

        if (have_prev) {
            // Spectral step: fits the step size to the curvature actually
            // seen between the last two iterates.
            double ss = 0.0, sg = 0.0;
            for (int t = 0; t < A; ++t) {
                const double sx = x[t] - x_prev[t];
                ss += sx * sx;
                sg += sx * (g[t] - g_prev[t]);
            }
            if (sg > 0.0) eta = std::clamp(ss / sg, 0.01 / lip, 1e6 / lip);
        }

        // Backtrack until the quadratic upper model certifies the trial
        // point (always true at eta_safe); the slack keeps rounding noise
        // from rejecting steps once objective differences shrink below it.
        const double f0 = prob.value(x);
        const double slack = 1e-15 * (1.0 + std::abs(f0));
        double gd = 0.0, dd = 0.0;
        while (true) {
            for (int t = 0; t < A; ++t) y[t] = x[t] - eta * gc[t];
            project_to_simplex(y);
            gd = dd = 0.0;
            for (int t = 0; t < A; ++t) {
                const double d = y[t] - x[t];
                gd += gc[t] * d;
                dd += d * d;
            }
            if (eta <= eta_safe) break;
            if (prob.value(y) <= f0 + gd + dd / (2.0 * eta) + slack) break;
            eta *= 0.5;
        }

        // Exact minimizer along the projected direction (the objective is
        // quadratic in alpha), used only while the directional curvature is
        // resolvable above rounding noise.
        const double curv = 2.0 * (prob.value(y) - f0 - gd);
        double alpha = 1.0;
        if (gd < 0.0 && curv > 1e-13 * (1.0 + std::abs(f0)))
            alpha = std::min(1.0, -gd / curv);

        std::copy(x.begin(), x.end(), x_prev.begin());
        std::copy(g.begin(), g.end(), g_prev.begin());
        have_prev = true;
        bool moved = false;
        for (int t = 0; t < A; ++t) {
            const double next = x[t] + alpha * (y[t] - x[t]);
            moved = moved || next != x[t];
            x[t] = next;
        }
        if (moved) {
            stuck = 0;
        } else if (++stuck >= 3) {
            break; // fixed point at working precision; report the residual
        } else {
            eta = eta_safe; // retry from the guaranteed-descent step
            have_prev = false;
        }
    }
    prob.gradient(x, g);
    res.residual = projected_residual(x, g);
    res.iterations = it;
    res.converged = res.residual <= tolerance;
    return res;
}

} // namespace

OracleSolution solve_at_xi(const CounterfactualModel& model, const Policy& obs, double xi,
                           const OracleOptions& opts) {
    validate_model(model);
    validate_policy(obs, /*require_positive=*/true);
    require_same_shape(model, obs, "solve_at_xi");
    if (opts.tol <= 0.0) fail(ErrorCode::NonPositiveInput, "tolerance must be positive");
    if (xi < 0.0) fail(ErrorCode::NegativeXi, "xi must be nonnegative");
    if (opts.init) require_same_shape(*opts.init, obs, "solve_at_xi init");

    const int N = model.n_units();
    const int A = model.n_arms();
    OracleSolution sol;
    sol.policy.probs = Matrix(N, A);

    std::vector<UnitSolveResult> unit_res(N);
    parallel_for(opts.n_threads, N, [&](int n) {
        UnitProblem prob(model, obs, n, xi);
        std::vector<double> x(A);
        for (int t = 0; t < A; ++t)
            x[t] = opts.init ? opts.init->probs.at(n, t) : obs.probs.at(n, t);
        project_to_simplex(x);
        unit_res[n] = solve_unit(prob, x, opts.tol, opts.max_iter);
        for (int t = 0; t < A; ++t) sol.policy.probs.at(n, t) = x[t];
    });

    KahanSum objective;
    for (int n = 0; n < N; ++n) {
        UnitProblem prob(model, obs, n, xi);
        objective.add(prob.value(sol.policy.probs.row(n)));
        sol.iterations += unit_res[n].iterations;
        sol.grad_residual = std::max(sol.grad_residual, unit_res[n].residual);
        if (!unit_res[n].converged) {
            std::ostringstream msg;
            msg << "unit " << n << " stopped at projected-gradient norm "
                << unit_res[n].residual << " after " << unit_res[n].iterations
                << " iterations (tol " << opts.tol << ")";
            fail(ErrorCode::NoConvergence, msg.str());
        }
    }
    sol.objective = objective.value();
    return sol;
}

Matrix grad_variance(const CounterfactualModel& model, const Policy& obs, const Policy& candidate) {
    require_same_shape(model, obs, "grad_variance obs");
    require_same_shape(model, candidate, "grad_variance candidate");
    const int N = model.n_units();
    const int A = model.n_arms();
    Matrix g(N, A);
    for (int n = 0; n < N; ++n) {
        double dot = 0.0;
        for (int v = 0; v < A; ++v)
            dot += model.mu.at(n, v) * (candidate.probs.at(n, v) - obs.probs.at(n, v));
        for (int t = 0; t < A; ++t) {
            const double d = candidate.probs.at(n, t) - obs.probs.at(n, t);
            g.at(n, t) = 2.0 / (static_cast<double>(N) * N) *
                         (model.second_moment(n, t) * d / obs.probs.at(n, t) -
                          model.mu.at(n, t) * dot);
        }
    }
    return g;
}

Matrix grad_tau(const CounterfactualModel& model) {
    const int N = model.n_units();
    Matrix g(N, model.n_arms());
    for (int n = 0; n < N; ++n)
        for (int t = 0; t < model.n_arms(); ++t) g.at(n, t) = model.mu.at(n, t) / N;
    return g;
}

double gradient_check(const CounterfactualModel& model, const Policy& obs, const Policy& policy,
                      double h) {
    if (h <= 0.0) fail(ErrorCode::NonPositiveInput, "finite-difference step must be positive");
    for (double v : policy.probs.data)
        if (v < h)
            fail(ErrorCode::BoundaryPolicy,
                 "policy must be at least h from the boundary for central differences");

    const Matrix gv = grad_variance(model, obs, policy);
    const Matrix gt = grad_tau(model);
    double worst = 0.0;
    Policy perturbed = policy;
    for (int n = 0; n < model.n_units(); ++n) {
        for (int t = 0; t < model.n_arms(); ++t) {
            double& cell = perturbed.probs.at(n, t);
            const double orig = cell;
            cell = orig + h;
            const double var_hi = true_variance(model, obs, perturbed);
            const double tau_hi = true_tau(model, obs, perturbed);
            cell = orig - h;
            const double var_lo = true_variance(model, obs, perturbed);
            const double tau_lo = true_tau(model, obs, perturbed);
            cell = orig;

            const double fd_var = (var_hi - var_lo) / (2.0 * h);
            const double fd_tau = (tau_hi - tau_lo) / (2.0 * h);
            const double ev = std::abs(gv.at(n, t) - fd_var) /
                              std::max({1.0, std::abs(gv.at(n, t)), std::abs(fd_var)});
            const double et = std::abs(gt.at(n, t) - fd_tau) /
                              std::max({1.0, std::abs(gt.at(n, t)), std::abs(fd_tau)});
            worst = std::max({worst, ev, et});
        }
    }
    return worst;
}

KktReport kkt_residuals(const CounterfactualModel& model, const Policy& obs, const Policy& policy,
                        double xi) {
    const Matrix gv = grad_variance(model, obs, policy);
    const int N = model.n_units();
    const int A = model.n_arms();
    KktReport report;
    for (int n = 0; n < N; ++n) {
        // Stationarity: grad s^2 - xi * grad tau = beta on active arms and
        // beta + kappa (kappa >= 0) on eliminated arms.
        double beta = 0.0;
        int active = 0;
        for (int t = 0; t < A; ++t) {
            if (policy.probs.at(n, t) <= 0.0) continue;
            beta += gv.at(n, t) - xi * model.mu.at(n, t) / N;
            ++active;
        }
        beta /= active;
        for (int t = 0; t < A; ++t) {
            const double lag = gv.at(n, t) - xi * model.mu.at(n, t) / N - beta;
            if (policy.probs.at(n, t) > 0.0)
                report.max_stationarity_residual =
                    std::max(report.max_stationarity_residual, std::abs(lag));
            else
                report.min_kappa = std::min(report.min_kappa, lag);
        }
    }
    return report;
}

std::vector<LambdaPoint> sweep_lambda(const CounterfactualModel& model, const Policy& obs,
                                      const std::vector<double>& lambdas,
                                      const OracleOptions& opts) {
    const double t_max = tau_max(model, obs);
    KnotTable knots = build_knot_table(model, obs);
    // Only a scalar crosses over from the closed-form path: the end of its
    // knot interval seeds the bisection bracket.
    double bracket_hi = knots.xi_max ? 2.0 * *knots.xi_max : 1.0;
    if (bracket_hi <= 0.0) bracket_hi = 1.0;

    std::vector<LambdaPoint> out;
    out.reserve(lambdas.size());
    for (double lambda : lambdas) {
        if (!(lambda >= 0.0 && lambda <= t_max + 1e-12))
            fail(ErrorCode::LambdaOutOfRange,
                 "lambda " + std::to_string(lambda) + " outside [0, " + std::to_string(t_max) + "]");
        LambdaPoint pt;
        pt.lambda = lambda;
        if (lambda == 0.0) {
            pt.policy = obs;
            pt.s2 = 0.0;
            pt.xi = 0.0;
            out.push_back(std::move(pt));
            continue;
        }

        OracleOptions unit_opts = opts;
        Policy warm = obs;
        unit_opts.init = &warm;
        auto tau_at = [&](double xi) {
            OracleSolution sol = solve_at_xi(model, obs, xi, unit_opts);
            warm = sol.policy;
            return std::pair<double, Policy>(true_tau(model, obs, sol.policy), sol.policy);
        };

        double lo = 0.0, hi = bracket_hi;
        auto [tau_hi, pol_hi] = tau_at(hi);
        int expand = 0;
        while (tau_hi < lambda && expand++ < 60) {
            hi *= 2.0;
            std::tie(tau_hi, pol_hi) = tau_at(hi);
        }
        Policy best = pol_hi;
        double best_tau = tau_hi;
        pt.xi = hi;
        for (int it = 0; it < 200 && std::abs(best_tau - lambda) > 1e-6; ++it) {
            const double mid = 0.5 * (lo + hi);
            auto [tau_mid, pol_mid] = tau_at(mid);
            best = pol_mid;
            best_tau = tau_mid;
            if (tau_mid < lambda)
                lo = mid;
            else
                hi = mid;
            pt.xi = mid;
        }
        if (std::abs(best_tau - lambda) > 1e-6)
            fail(ErrorCode::NoConvergence,
                 "bisection did not reach the improvement target " + std::to_string(lambda));
        pt.policy = best;
        pt.s2 = true_variance(model, obs, best);
        out.push_back(std::move(pt));
    }
    return out;
}

} // namespace ipwfront
