#pragma once

#include "adaclab/common.hpp"
#include "adaclab/controller.hpp"
#include "adaclab/explore.hpp"
#include "adaclab/hankel.hpp"
#include "adaclab/learner.hpp"
#include "adaclab/lti.hpp"

#include <cmath>
#include <optional>

namespace adaclab {

// ============================================================================
// Run traces and regret reports
// ============================================================================

struct RunTrace {
    std::int64_t T = 0;   // recorded steps
    std::int64_t Ts = 0;  // stage boundary (0 for clean runs)
    int signal_dim = 0;
    int input_dim = 0;
    bool output_mode = false;
    bool stage1_recorded = true;  // false when resumed from a saved batch
    std::uint64_t seed = 0;
    std::string config_hash;

    std::vector<double> costs;    // c_t at the visited pair
    Mat signals;                  // q x T, signal at decision time
    Mat inputs;                   // m x T
    Mat w_hats;                   // q x T, zero during stage 1
    std::vector<double> m_norms;  // max block operator norm of the iterate
    std::vector<int> stage;       // 1 = exploration, 2 = commitment

    void reserve(std::int64_t t_rows) {
        costs.reserve(t_rows);
        m_norms.reserve(t_rows);
        stage.reserve(t_rows);
        signals = Mat::Zero(signal_dim, t_rows);
        inputs = Mat::Zero(input_dim, t_rows);
        w_hats = Mat::Zero(signal_dim, t_rows);
    }

    double learner_cost(bool include_stage1 = true) const {
        double total = 0.0;
        for (std::size_t i = 0; i < costs.size(); ++i)
            if (include_stage1 || stage[i] == 2) total += costs[i];
        return total;
    }

    double max_signal_norm(int stage_filter = 0) const {
        double worst = 0.0;
        for (Eigen::Index i = 0; i < signals.cols(); ++i)
            if (stage_filter == 0 || stage[static_cast<std::size_t>(i)] == stage_filter)
                worst = std::max(worst, signals.col(i).norm());
        return worst;
    }
};

struct RegretReport {
    double learner_cost = 0.0;
    double comparator_cost = 0.0;
    double regret = 0.0;  // learner - comparator, reported as-is (may be negative)
    bool partial = false;  // comparator horizon does not cover stage 1 (resumed run)
};

// ============================================================================
// Commitment loop (shared by the clean-trajectory and ETC pipelines)
// ============================================================================

struct CommitConfig {
    int L = 0;
    double D = 1.0;
    double G = 10.0;
    double lambda = 0.0;           // <= 0 resolves to 2 L D / (G sqrt(T_total))
    std::int64_t T_total = 0;      // horizon entering the step-size rule
    std::int64_t steps = 0;        // loop length
    std::int64_t global_offset = 0;  // cost index of the first loop step
    std::int64_t window = 0;       // sensitivity truncation (0 = full history)
};

namespace detail {

inline void record_row(RunTrace& trace, std::int64_t row, const Vec& sig, const Vec& u, const Vec& w_hat, double c,
                       double m_norm, int stage_id) {
    trace.signals.col(row) = sig;
    trace.inputs.col(row) = u;
    trace.w_hats.col(row) = w_hat;
    trace.costs.push_back(c);
    trace.m_norms.push_back(m_norm);
    trace.stage.push_back(stage_id);
}

}  // namespace detail

// Adaptive controller loop: play the disturbance-action input, reconstruct the
// accumulated disturbance, assemble the surrogate's exact gradient through the
// affine counterfactual map, take a projected gradient step.
inline void commit_loop(Environment& env, const HankelPair& h, const CostOracle& cost, const CommitConfig& cc,
                        RunTrace& trace, std::int64_t first_row) {
    const int l = cc.L;
    const int m = h.input_dim();
    const int q = h.signal_dim();
    require(l == h.window(), "commit_loop: controller lag count must match the Hankel window");
    require(env.input_dim() == m && env.signal_dim() == q, "commit_loop: environment dimension mismatch");
    const double lambda =
        cc.lambda > 0.0 ? cc.lambda
                        : 2.0 * l * cc.D / (cc.G * std::sqrt(static_cast<double>(std::max<std::int64_t>(cc.T_total, 1))));

    AdacParams params = AdacParams::zeros(l, m, q, cc.D);
    AccHistory hist(l, q);
    std::vector<Vec> w_hist;
    w_hist.reserve(static_cast<std::size_t>(cc.steps));
    std::vector<Vec> sig_hist;
    sig_hist.reserve(static_cast<std::size_t>(cc.steps) + 1);
    std::vector<Vec> u_hist;
    u_hist.reserve(static_cast<std::size_t>(cc.steps));
    SensitivityBuilder builder(h, cc.window);

    Vec sig = env.reset();
    sig_hist.push_back(sig);
    for (std::int64_t tau = 0; tau < cc.steps; ++tau) {
        const std::int64_t t_global = cc.global_offset + tau;
        const Vec u = adac_control(params, hist);

        double max_acc = 0.0;
        for (int i = 1; i <= l; ++i) max_acc = std::max(max_acc, hist.lag(i).norm());
        if (u.norm() > static_cast<double>(l) * cc.D * max_acc + 1e-9)
            throw NumericalFailure("commit_loop: control bound violated at step " + std::to_string(t_global));

        const Vec next = env.step(u);
        const double c = cost.value(t_global, u, sig);
        if (!std::isfinite(c) || !next.allFinite())
            throw NumericalFailure("commit_loop: non-finite trajectory at step " + std::to_string(t_global));

        // Input window u_{tau-L+2:tau}; the final entry is this step's input,
        // which is not in u_hist yet.
        Vec u_window_full = Vec::Zero(static_cast<Eigen::Index>(m) * (l - 1));
        for (int i = 0; i < l - 1; ++i) {
            const std::int64_t idx = tau - l + 2 + i;
            if (idx == tau)
                u_window_full.segment(static_cast<Eigen::Index>(i) * m, m) = u;
            else if (idx >= 0)
                u_window_full.segment(static_cast<Eigen::Index>(i) * m, m) = u_hist[static_cast<std::size_t>(idx)];
        }
        const Vec s_old = at_or_zero(sig_hist, tau - l + 2, q);
        const Vec w_prev = at_or_zero(w_hist, tau - l + 1, q);
        const Vec w_hat = acc_noise(u_window_full, s_old, next, w_prev, h);

        const SensitivityMap smap = builder.at(w_hist, tau);
        const SurrogateEval eval = evaluate_surrogate(params, smap, cost, t_global);
        params = ogd_step(params, eval.grad, lambda);
        if (!params.feasible(1e-9))
            throw NumericalFailure("commit_loop: projected iterate left the feasible set at step " +
                                   std::to_string(t_global));

        detail::record_row(trace, first_row + tau, sig, u, w_hat, c, params.max_block_norm(), 2);
        w_hist.push_back(w_hat);
        hist.push(w_hat);
        u_hist.push_back(u);
        sig_hist.push_back(next);
        sig = next;
    }
}

// ============================================================================
// Clean-trajectory pipeline
// ============================================================================

// Runs the adaptive controller against env given a noise-free trajectory
// {u^d, s^d}. pe_order is the excitation order the probe must satisfy (L + 2n).
inline RunTrace run_clean(Environment& env, const std::vector<Vec>& u_d, const std::vector<Vec>& s_d,
                          const CostOracle& cost, std::int64_t horizon, int l_window, double d_bound, double g_bound,
                          int pe_order, std::int64_t window = 0, double lambda_override = 0.0) {
    require(horizon >= 1, "run_clean: horizon must be positive");
    if (!persistently_exciting(u_d, pe_order))
        throw ContractViolation("run_clean: trajectory input is not persistently exciting of order " +
                                std::to_string(pe_order));
    HankelPair h(u_d, s_d, l_window);

    RunTrace trace;
    trace.T = horizon;
    trace.Ts = 0;
    trace.signal_dim = h.signal_dim();
    trace.input_dim = h.input_dim();
    trace.reserve(horizon);

    CommitConfig cc;
    cc.L = l_window;
    cc.D = d_bound;
    cc.G = g_bound;
    cc.lambda = lambda_override;
    cc.T_total = horizon;
    cc.steps = horizon;
    cc.global_offset = 0;
    cc.window = window;
    commit_loop(env, h, cost, cc, trace, 0);
    return trace;
}

// ============================================================================
// Explore-then-commit pipeline
// ============================================================================

struct EtcArtifacts {
    RunTrace trace;
    EtcSchedule sched;
    RolloutBatch batch;
    ProbeInput probe;
    std::vector<Vec> clean_estimate;
    double h2_norm = 0.0;  // spectral norm of the estimated window map
};

// Stage 1: +-1 rollouts, Phi estimation, synthetic clean trajectory; Stage 2:
// the commitment loop on the estimated Hankel pair. pe_order = L + 2n comes
// from the configuration (the learner itself never sees n).
inline EtcArtifacts run_etc(Environment& env, const CostOracle& cost, std::int64_t horizon, const EtcSchedule& sched,
                            double d_bound, double g_bound, int pe_order, std::uint64_t run_seed,
                            std::int64_t window = 0, const RolloutBatch* resume_batch = nullptr,
                            double lambda_override = 0.0) {
    require(horizon > sched.Ts, "run_etc: horizon must exceed the exploration budget");
    const int m = env.input_dim();
    const int q = env.signal_dim();

    EtcArtifacts art;
    art.sched = sched;

    RunTrace& trace = art.trace;
    trace.Ts = sched.Ts;
    trace.signal_dim = q;
    trace.input_dim = m;
    trace.seed = run_seed;
    trace.stage1_recorded = resume_batch == nullptr;
    trace.T = trace.stage1_recorded ? horizon : horizon - sched.Ts;
    trace.reserve(trace.T);

    // ---- Stage 1: online exploration ----
    if (resume_batch) {
        require(resume_batch->rollouts == sched.I0 && resume_batch->steps == sched.N,
                "run_etc: resumed batch does not match the schedule");
        require(resume_batch->input_dim == m && resume_batch->signal_dim == q,
                "run_etc: resumed batch dimension mismatch");
        art.batch = *resume_batch;
    } else {
        Rng pm1(derive_seed(run_seed, 0xE1));
        art.batch = collect_rollouts(env, static_cast<int>(sched.I0), static_cast<int>(sched.N), pm1);
        // Exploration rows: decision-time signal, +-1 input, realized cost.
        std::int64_t row = 0;
        for (int k = 0; k < art.batch.rollouts; ++k) {
            for (int t = 0; t < art.batch.steps; ++t, ++row) {
                const Vec u = art.batch.U.block(static_cast<Eigen::Index>(m) * t, k, m, 1);
                const Vec sig = t == 0 ? Vec::Zero(q)
                                       : Vec(art.batch.X.block(static_cast<Eigen::Index>(q) * (t - 1), k, q, 1));
                detail::record_row(trace, row, sig, u, Vec::Zero(q), cost.value(row, u, sig), 0.0, 1);
            }
        }
    }

    // Probe + estimated clean trajectory; re-probe on a rank-deficient stack.
    Rng probe_rng(derive_seed(run_seed, 0xE2));
    std::optional<HankelPair> h;
    for (int attempt = 0; attempt < 5 && !h; ++attempt) {
        art.probe = sample_persistently_exciting_probe(static_cast<int>(sched.N), m, pe_order, probe_rng);
        art.clean_estimate = synthesize_clean(art.batch, art.probe);
        // The estimate holds states at times 1..N; the Hankel pair needs
        // same-time pairs (u_t, x_t), so shift behind the known x_0 = 0.
        std::vector<Vec> aligned;
        aligned.reserve(art.clean_estimate.size());
        aligned.push_back(Vec::Zero(q));
        aligned.insert(aligned.end(), art.clean_estimate.begin(), art.clean_estimate.end() - 1);
        try {
            h.emplace(art.probe.u, aligned, sched.L);
        } catch (const SingularRepresentation&) {
            h.reset();
        }
    }
    if (!h) throw NumericalFailure("run_etc: estimated representation stayed rank deficient after re-probing");
    art.h2_norm = operator_norm(h->lstep().h2);
    if (art.h2_norm >= 1.0)
        throw NumericalFailure("run_etc: estimated window map is unstable (||H2|| = " + std::to_string(art.h2_norm) +
                               " >= 1); increase the exploration budget I0");

    // ---- Stage 2: commitment ----
    CommitConfig cc;
    cc.L = sched.L;
    cc.D = d_bound;
    cc.G = g_bound;
    cc.lambda = lambda_override;
    cc.T_total = horizon;
    cc.steps = horizon - sched.Ts;
    cc.global_offset = sched.Ts;
    cc.window = window;
    commit_loop(env, *h, cost, cc, trace, trace.stage1_recorded ? sched.Ts : 0);
    return art;
}

// Output-feedback variant: identical control flow on the output signal; the
// environment must emit outputs and the cost must act on (u, y).
inline EtcArtifacts run_output_etc(Environment& env, const CostOracle& cost, std::int64_t horizon,
                                   const EtcSchedule& sched, double d_bound, double g_bound, int pe_order,
                                   std::uint64_t run_seed, std::int64_t window = 0,
                                   const RolloutBatch* resume_batch = nullptr, double lambda_override = 0.0) {
    EtcArtifacts art =
        run_etc(env, cost, horizon, sched, d_bound, g_bound, pe_order, run_seed, window, resume_batch, lambda_override);
    art.trace.output_mode = true;
    return art;
}

// ============================================================================
// Hindsight comparator (oracle mode): offline projected gradient descent on
// the convex total cost of a fixed parameter against the recorded disturbances
// ============================================================================

struct ComparatorResult {
    AdacParams params;
    double cost = 0.0;
    bool converged = false;
    int iterations = 0;
};

namespace detail {

// u_t = sum_i M^(i) acc_{t-i}, raw accumulation.
inline void comparator_input(const AdacParams& params, const std::vector<Vec>& acc_seq, std::int64_t t, Vec& u) {
    u.setZero();
    const int m = params.input_dim();
    const int q = params.signal_dim();
    double* ud = u.data();
    for (int i = 1; i <= params.lag_count; ++i) {
        const std::int64_t k = t - i;
        if (k < 0 || k >= static_cast<std::int64_t>(acc_seq.size())) continue;
        const double* wk = acc_seq[static_cast<std::size_t>(k)].data();
        const double* bd = params.blocks[static_cast<std::size_t>(i - 1)].data();
        for (int c = 0; c < q; ++c) {
            const double wc = wk[c];
            if (wc == 0.0) continue;
            for (int r = 0; r < m; ++r) ud[r] += bd[c * m + r] * wc;
        }
    }
}

struct ComparatorWorkspace {
    std::vector<Vec> states;   // x_0..x_T
    std::vector<Vec> inputs;   // u_0..u_{T-1}
    std::vector<Vec> signals;  // cost-facing signal per step
};

// Forward pass: counterfactual trajectory of a fixed parameter against the
// recorded raw disturbances; returns the total cost.
inline double comparator_forward(const AdacParams& params, const LtiSystem& sys, const std::vector<Vec>& w_log,
                                 const std::vector<Vec>& acc_seq, const CostOracle& cost, std::int64_t horizon,
                                 bool output_signal, ComparatorWorkspace& ws) {
    const int m = sys.m();
    ws.states.assign(1, Vec::Zero(sys.n()));
    ws.inputs.clear();
    ws.signals.clear();
    double total = 0.0;
    Vec u(m);
    for (std::int64_t t = 0; t < horizon; ++t) {
        comparator_input(params, acc_seq, t, u);
        const Vec sig = output_signal ? Vec(sys.C() * ws.states.back()) : ws.states.back();
        total += cost.value(t, u, sig);
        ws.inputs.push_back(u);
        ws.signals.push_back(sig);
        ws.states.push_back(sys.A() * ws.states.back() + sys.B() * u + w_log[static_cast<std::size_t>(t)]);
    }
    return total;
}

// Reverse (adjoint) pass producing the exact gradient blocks of the total cost.
inline std::vector<Mat> comparator_adjoint(const AdacParams& params, const LtiSystem& sys,
                                           const std::vector<Vec>& acc_seq, const CostOracle& cost,
                                           std::int64_t horizon, bool output_signal,
                                           const ComparatorWorkspace& ws) {
    const int m = sys.m();
    const int q = params.signal_dim();
    std::vector<Mat> grad(static_cast<std::size_t>(params.lag_count), Mat::Zero(m, q));
    Vec lambda = Vec::Zero(sys.n());
    for (std::int64_t t = horizon - 1; t >= 0; --t) {
        const auto [g_u, g_s] = cost.gradient(t, ws.inputs[static_cast<std::size_t>(t)],
                                              ws.signals[static_cast<std::size_t>(t)]);
        const Vec du = g_u + sys.B().transpose() * lambda;  // dJ/du_t
        for (int i = 1; i <= params.lag_count; ++i) {
            const std::int64_t k = t - i;
            if (k < 0 || k >= static_cast<std::int64_t>(acc_seq.size())) continue;
            grad[static_cast<std::size_t>(i - 1)] += du * acc_seq[static_cast<std::size_t>(k)].transpose();
        }
        const Vec g_x = output_signal ? Vec(sys.C().transpose() * g_s) : g_s;
        lambda = g_x + sys.A().transpose() * lambda;
    }
    return grad;
}

inline double blocks_dot(const std::vector<Mat>& a, const std::vector<Mat>& b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += (a[i].array() * b[i].array()).sum();
    return dot;
}

inline double blocks_dist2(const AdacParams& a, const AdacParams& b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.blocks.size(); ++i) d2 += (a.blocks[i] - b.blocks[i]).squaredNorm();
    return d2;
}

}  // namespace detail

// Best fixed parameter in hindsight and its cost, by projected gradient
// descent until the unit-step gradient mapping drops below grad_tol or the
// iteration cap is reached (the incumbent is returned either way).
inline ComparatorResult comparator_oracle(const LtiSystem& sys, const std::vector<Vec>& w_log,
                                          const std::vector<Vec>& acc_seq, const CostOracle& cost,
                                          std::int64_t horizon, int lag_count, double d_bound, bool output_signal,
                                          double grad_tol = 1e-8, int max_iter = 10000) {
    require(static_cast<std::int64_t>(w_log.size()) >= horizon, "comparator_oracle: disturbance log too short");
    require(static_cast<std::int64_t>(acc_seq.size()) >= horizon, "comparator_oracle: accumulated sequence too short");
    const int q = output_signal ? sys.p() : sys.n();

    ComparatorResult res;
    res.params = AdacParams::zeros(lag_count, sys.m(), q, d_bound);
    detail::ComparatorWorkspace ws;
    double j_cur = detail::comparator_forward(res.params, sys, w_log, acc_seq, cost, horizon, output_signal, ws);

    double eta = 1.0;
    for (int it = 1; it <= max_iter; ++it) {
        res.iterations = it;
        const std::vector<Mat> grad = detail::comparator_adjoint(res.params, sys, acc_seq, cost, horizon,
                                                                 output_signal, ws);
        // Unit-step gradient mapping as the stationarity measure.
        AdacParams probe = res.params;
        for (std::size_t i = 0; i < grad.size(); ++i) probe.blocks[i] -= grad[i];
        probe = project_M(probe);
        if (std::sqrt(detail::blocks_dist2(res.params, probe)) <= grad_tol) {
            res.converged = true;
            break;
        }
        // Backtracking projected step.
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            AdacParams cand = res.params;
            for (std::size_t i = 0; i < grad.size(); ++i) cand.blocks[i] -= eta * grad[i];
            cand = project_M(cand);
            const double j_cand = detail::comparator_forward(cand, sys, w_log, acc_seq, cost, horizon,
                                                             output_signal, ws);
            const double decrease = j_cur - j_cand;
            const double move2 = detail::blocks_dist2(res.params, cand);
            if (move2 <= 1e-32) {  // projection pinned the iterate
                accepted = true;
                res.converged = true;
                break;
            }
            if (decrease >= 0.25 / eta * move2 - 1e-15) {
                res.params = cand;
                j_cur = j_cand;
                eta *= 1.4;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if (!accepted) break;  // line search exhausted at machine precision
        if (res.converged) break;
    }
    // Final forward pass so the reported cost matches the returned parameters.
    res.cost = detail::comparator_forward(res.params, sys, w_log, acc_seq, cost, horizon, output_signal, ws);
    return res;
}

// Policy regret of a recorded run against a comparator evaluated on the same
// realization. Negative values are reported as-is.
inline RegretReport regret(const RunTrace& trace, const ComparatorResult& comparator, bool include_stage1 = true) {
    RegretReport rep;
    rep.learner_cost = trace.learner_cost(include_stage1);
    rep.comparator_cost = comparator.cost;
    rep.regret = rep.learner_cost - rep.comparator_cost;
    rep.partial = !trace.stage1_recorded || !include_stage1;
    return rep;
}

// ============================================================================
// Slope diagnostics
// ============================================================================

struct SlopeFit {
    double exponent = 0.0;
    double intercept = 0.0;
    int clamped = 0;      // regrets raised to the 1e-9 floor before the log fit
    bool flagged = false; // any nonpositive regret encountered
};

inline SlopeFit slope_fit(const std::vector<double>& horizons, const std::vector<double>& regrets) {
    require(horizons.size() == regrets.size(), "slope_fit: length mismatch");
    require(horizons.size() >= 4, "slope_fit: need at least 4 points");
    std::vector<double> lx, ly;
    SlopeFit fit;
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        require(horizons[i] > 0.0, "slope_fit: horizons must be positive");
        double r = regrets[i];
        if (r <= 1e-9) {
            r = 1e-9;
            ++fit.clamped;
            fit.flagged = true;
        }
        lx.push_back(std::log(horizons[i]));
        ly.push_back(std::log(r));
    }
    fit.exponent = ls_slope(lx, ly);
    const double n = static_cast<double>(lx.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    fit.intercept = my / n - fit.exponent * mx / n;
    return fit;
}

// Empirical stability envelope for commitment-stage states (oracle side).
inline double adac_state_envelope(double norm_b, int lag_count, double d_bound, double eps, double rho) {
    const double denom = 1.0 - rho;
    return 10.0 * (norm_b * lag_count * d_bound * eps / (denom * denom) + eps / denom);
}

}  // namespace adaclab
