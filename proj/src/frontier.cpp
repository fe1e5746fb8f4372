#include "ipwfront/frontier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ipwfront/ipw_eval.hpp"
#include "ipwfront/parallel.hpp"

namespace ipwfront {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-unit scratch shared by the knot procedure and the path evaluation.
// rho[t] = obs propensity over second moment -- the weight every closed-form
// expression attaches to arm t.  q is the unit-level normalizer computed
// over ALL arms once; it is positive for any validated model unless the
// variance structure collapses entirely (all-zero variances with
// mean-reciprocal weights summing to zero), which we reject.
struct UnitContext {
    std::vector<double> rho;
    std::vector<double> mu;
    std::vector<double> po;
    double q = 0.0;

    UnitContext(const CounterfactualModel& model, const Policy& obs, int n) {
        const int A = model.n_arms();
        rho.resize(A);
        mu.resize(A);
        po.resize(A);
        double rho_sum = 0.0, rho_mu = 0.0, rho_mu2 = 0.0;
        for (int t = 0; t < A; ++t) {
            mu[t] = model.mu.at(n, t);
            po[t] = obs.probs.at(n, t);
            rho[t] = po[t] / model.second_moment(n, t);
            rho_sum += rho[t];
            rho_mu += rho[t] * mu[t];
            rho_mu2 += rho[t] * mu[t] * mu[t];
        }
        // q = 1 - sum rho*mu*(mu - mu_tilde) with mu_tilde the rho-weighted
        // mean; the second form avoids cancellation when means are large.
        q = (1.0 - rho_mu2) + rho_mu * rho_mu / rho_sum;
        if (!(q > 0.0))
            fail(ErrorCode::DegenerateSE,
                 "unit " + std::to_string(n) +
                     " has a degenerate variance structure (unit normalizer <= 0); the "
                     "variance-vs-improvement trade-off is not well posed for it");
    }
};

std::vector<KnotEvent> knot_events_for_unit(const UnitContext& ctx, int N) {
    const int A = static_cast<int>(ctx.mu.size());
    std::vector<KnotEvent> events;
    std::vector<bool> eliminated(A, false);
    double omega0 = 0.0;
    double zero_mass = 0.0; // sum of obs propensities over eliminated arms

    std::vector<double> omega_hat(A);
    while (true) {
        // Stop once every surviving arm shares one mean (always true with a
        // single survivor).
        double mu_lo = kInf, mu_hi = -kInf;
        double r_act = 0.0, s_act = 0.0;
        for (int t = 0; t < A; ++t) {
            if (eliminated[t]) continue;
            mu_lo = std::min(mu_lo, ctx.mu[t]);
            mu_hi = std::max(mu_hi, ctx.mu[t]);
            r_act += ctx.rho[t];
            s_act += ctx.rho[t] * ctx.mu[t];
        }
        if (mu_lo == mu_hi) break;

        // Threshold at which each active arm's propensity would reach zero
        // on the current linear piece.  Arms at or above the active weighted
        // mean get a nonpositive or infinite value and are skipped by the
        // "exceeds the current threshold" filter.
        double omega_next = kInf;
        for (int t = 0; t < A; ++t) {
            if (eliminated[t]) continue;
            const double denom = N * (s_act - ctx.mu[t] * r_act);
            const double numer = 2.0 * ctx.q * (ctx.po[t] / ctx.rho[t] * r_act + zero_mass);
            omega_hat[t] = numer / denom;
            if (omega_hat[t] > omega0) omega_next = std::min(omega_next, omega_hat[t]);
        }
        if (!std::isfinite(omega_next))
            fail(ErrorCode::DegenerateSE,
                 "elimination procedure stalled (no finite threshold exceeds the current one)");

        KnotEvent ev;
        ev.omega_hat = omega_next;
        for (int t = 0; t < A; ++t) {
            if (eliminated[t] || !(omega_hat[t] > omega0)) continue;
            if (omega_hat[t] <= omega_next * (1.0 + tol::knot_tie_rel))
                ev.eliminated_arms.push_back(t);
        }

        // Trade-off value at which this event occurs, evaluated with the
        // pre-event active set (the map is continuous across the event).
        const double mu_bar = s_act / r_act;
        double spread = 0.0;
        for (int t = 0; t < A; ++t) {
            if (eliminated[t]) continue;
            const double d = ctx.mu[t] - mu_bar;
            spread += ctx.rho[t] * d * d;
        }
        double shift = 0.0;
        for (const KnotEvent& past : events)
            for (int t : past.eliminated_arms) shift += ctx.po[t] * (ctx.mu[t] - mu_bar);
        ev.xi_knot = (1.0 - spread) * omega_next / ctx.q + 2.0 / N * shift;

        for (int t : ev.eliminated_arms) {
            eliminated[t] = true;
            zero_mass += ctx.po[t];
        }
        omega0 = omega_next;
        events.push_back(std::move(ev));
    }
    return events;
}

} // namespace

GridSpec GridSpec::explicit_list(std::vector<double> xs) {
    GridSpec g;
    g.kind = Kind::ExplicitList;
    g.values = std::move(xs);
    return g;
}

GridSpec GridSpec::knots_plus_log(int n_fill) {
    GridSpec g;
    g.kind = Kind::KnotsPlusLog;
    g.n_fill = n_fill;
    return g;
}

Policy binary_policy_at_xi(const CounterfactualModel& model, const Policy& obs, double xi) {
    validate_model(model);
    validate_policy(obs, /*require_positive=*/true);
    require_same_shape(model, obs, "binary_policy_at_xi");
    if (model.n_arms() != 2)
        fail(ErrorCode::NotBinary,
             "binary closed form requires exactly 2 arms, got " + std::to_string(model.n_arms()));
    if (xi < 0.0) fail(ErrorCode::NegativeXi, "xi must be nonnegative");

    const int N = model.n_units();
    Policy out;
    out.probs = Matrix(N, 2);
    for (int n = 0; n < N; ++n) {
        double p1;
        if (xi == 0.0) {
            p1 = obs.probs.at(n, 1);
        } else {
            const double gap = model.mu.at(n, 1) - model.mu.at(n, 0);
            const double denom = model.second_moment(n, 0) / obs.probs.at(n, 0) +
                                 model.second_moment(n, 1) / obs.probs.at(n, 1) - gap * gap;
            p1 = obs.probs.at(n, 1) + N * xi * gap / (2.0 * denom);
            // Clip to the simplex before taking the complement.
            p1 = std::min(std::max(p1, 0.0), 1.0);
        }
        out.probs.at(n, 1) = p1;
        out.probs.at(n, 0) = 1.0 - p1;
    }
    snap_policy(out);
    return out;
}

KnotTable build_knot_table(const CounterfactualModel& model, const Policy& obs, int n_threads) {
    validate_model(model);
    validate_policy(obs, /*require_positive=*/true);
    require_same_shape(model, obs, "build_knot_table");

    const int N = model.n_units();
    KnotTable table;
    table.unit_events.resize(N);
    parallel_for(n_threads, N, [&](int n) {
        UnitContext ctx(model, obs, n);
        table.unit_events[n] = knot_events_for_unit(ctx, N);
    });
    for (const auto& events : table.unit_events) {
        for (const KnotEvent& ev : events) {
            if (!table.xi_min || ev.xi_knot < *table.xi_min) table.xi_min = ev.xi_knot;
            if (!table.xi_max || ev.xi_knot > *table.xi_max) table.xi_max = ev.xi_knot;
        }
    }
    return table;
}

FrontierPoint policy_at_xi(const CounterfactualModel& model, const Policy& obs,
                           const KnotTable& knots, double xi) {
    validate_model(model);
    validate_policy(obs, /*require_positive=*/true);
    require_same_shape(model, obs, "policy_at_xi");
    if (knots.n_units() != model.n_units())
        fail(ErrorCode::DimensionMismatch, "knot table does not match the model's unit count");
    if (xi < 0.0) fail(ErrorCode::NegativeXi, "xi must be nonnegative");

    const int N = model.n_units();
    const int A = model.n_arms();
    FrontierPoint point;
    point.xi = xi;
    point.policy.probs = Matrix(N, A);
    for (int n = 0; n < N; ++n) {
        UnitContext ctx(model, obs, n);
        std::vector<bool> zeroed(A, false);
        for (int t : knots.zero_set_at(n, xi)) zeroed[t] = true;

        double r_act = 0.0, s_act = 0.0, zero_mass = 0.0;
        for (int t = 0; t < A; ++t) {
            if (zeroed[t]) {
                zero_mass += ctx.po[t];
            } else {
                r_act += ctx.rho[t];
                s_act += ctx.rho[t] * ctx.mu[t];
            }
        }
        const double mu_bar = s_act / r_act;
        double spread = 0.0, shift = 0.0;
        for (int t = 0; t < A; ++t) {
            const double d = ctx.mu[t] - mu_bar;
            if (zeroed[t])
                shift += ctx.po[t] * d;
            else
                spread += ctx.rho[t] * d * d;
        }
        // Reparameterized multiplier for this xi on the current piece.
        const double omega = ctx.q * (xi - 2.0 / N * shift) / (1.0 - spread);
        for (int t = 0; t < A; ++t) {
            if (zeroed[t]) {
                point.policy.probs.at(n, t) = 0.0;
                continue;
            }
            // Observational base + share of the eliminated arms' mass +
            // mean-deviation tilt.
            point.policy.probs.at(n, t) = ctx.po[t] + ctx.rho[t] / r_act * zero_mass +
                                          (ctx.mu[t] - mu_bar) * N * omega * ctx.rho[t] /
                                              (2.0 * ctx.q);
        }
    }
    snap_policy(point.policy);

    point.zero_sets.resize(N);
    for (int n = 0; n < N; ++n)
        for (int t = 0; t < A; ++t)
            if (point.policy.probs.at(n, t) == 0.0) point.zero_sets[n].push_back(t);

    point.tau = true_tau(model, obs, point.policy);
    const double var = true_variance(model, obs, point.policy);
    point.s = var > 0.0 ? std::sqrt(var) : 0.0;
    if (point.s > 0.0) point.expected_z = point.tau / point.s;
    return point;
}

std::vector<FrontierPoint> pareto_frontier(const CounterfactualModel& model, const Policy& obs,
                                           const GridSpec& grid, int n_threads) {
    KnotTable knots = build_knot_table(model, obs, n_threads);
    if (!knots.xi_min)
        fail(ErrorCode::EmptyFrontier,
             "every unit's arms share one mean; no arm is ever eliminated and the frontier "
             "degenerates to the observational policy");
    const double lo = *knots.xi_min;
    const double hi = *knots.xi_max;

    std::vector<double> xis;
    if (grid.kind == GridSpec::Kind::ExplicitList) {
        for (double x : grid.values) {
            if (x < 0.0) fail(ErrorCode::NegativeXi, "grid values must be nonnegative");
            if (x >= lo && x <= hi) xis.push_back(x);
        }
    } else {
        for (const auto& events : knots.unit_events)
            for (const KnotEvent& ev : events)
                if (ev.xi_knot >= lo && ev.xi_knot <= hi) xis.push_back(ev.xi_knot);
        if (hi > lo && grid.n_fill > 1) {
            const double la = std::log(lo), lb = std::log(hi);
            for (int i = 0; i < grid.n_fill; ++i)
                xis.push_back(std::exp(la + (lb - la) * i / (grid.n_fill - 1)));
        }
    }
    xis.push_back(lo);
    xis.push_back(hi);
    std::sort(xis.begin(), xis.end());
    // Drop duplicates (relative 1e-12): repeated xi would break the strict
    // tau monotonicity promised to callers.
    std::vector<double> keep;
    for (double x : xis)
        if (keep.empty() || x - keep.back() > 1e-12 * std::max(1.0, x)) keep.push_back(x);
    if (std::abs(keep.back() - hi) > 1e-12 * std::max(1.0, hi)) keep.push_back(hi);

    std::vector<FrontierPoint> points(keep.size());
    parallel_for(n_threads, static_cast<int>(keep.size()),
                 [&](int i) { points[i] = policy_at_xi(model, obs, knots, keep[i]); });
    return points;
}

double select_xi(double lambda_target, double z_min) {
    if (!std::isfinite(lambda_target) || !std::isfinite(z_min))
        fail(ErrorCode::NonFiniteInput, "lambda and z_min must be finite");
    if (lambda_target <= 0.0 || z_min <= 0.0)
        fail(ErrorCode::NonPositiveInput, "lambda and z_min must be positive");
    return 2.0 * lambda_target / (z_min * z_min);
}

Policy generalize_policy(const CounterfactualModel& model_new_units, const Policy& obs_new_units,
                         double xi) {
    KnotTable knots = build_knot_table(model_new_units, obs_new_units);
    return policy_at_xi(model_new_units, obs_new_units, knots, xi).policy;
}

double tau_max(const CounterfactualModel& model, const Policy& obs) {
    validate_model(model);
    validate_policy(obs, /*require_positive=*/true);
    require_same_shape(model, obs, "tau_max");
    KahanSum total;
    for (int n = 0; n < model.n_units(); ++n) {
        double best = -kInf;
        KahanSum base;
        for (int t = 0; t < model.n_arms(); ++t) {
            best = std::max(best, model.mu.at(n, t));
            base.add(model.mu.at(n, t) * obs.probs.at(n, t));
        }
        total.add(best - base.value());
    }
    return total.value() / model.n_units();
}

} // namespace ipwfront
