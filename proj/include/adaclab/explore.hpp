#pragma once

#include "adaclab/common.hpp"
#include "adaclab/hankel.hpp"
#include "adaclab/lti.hpp"

#include <cmath>

namespace adaclab {

// ============================================================================
// The online interface the learner is allowed to see: reset to the origin and
// step with an input, observing only the signal (state or output). Ground
// truth stays behind concrete implementations.
// ============================================================================

class Environment {
public:
    virtual ~Environment() = default;
    virtual int input_dim() const = 0;
    virtual int signal_dim() const = 0;
    // Re-seats the state at the origin and returns the initial signal.
    virtual Vec reset() = 0;
    // Applies u, advances one step, returns the next signal.
    virtual Vec step(const Vec& u) = 0;
};

// Simulation-backed environment. The oracle accessors (system, disturbance and
// noise logs) are not part of Environment and stay invisible to the learner.
class LtiEnv : public Environment {
public:
    LtiEnv(LtiSystem sys, DisturbanceGen dist, std::optional<DisturbanceGen> meas = std::nullopt,
           bool output_signal = false)
        : sys_(std::move(sys)), dist_(std::move(dist)), meas_(std::move(meas)), output_signal_(output_signal) {
        require(dist_.dim() == sys_.n(), "LtiEnv: disturbance dimension mismatch");
        if (meas_) require(meas_->dim() == sys_.p(), "LtiEnv: measurement noise dimension mismatch");
        x_ = Vec::Zero(sys_.n());
    }

    int input_dim() const override { return sys_.m(); }
    int signal_dim() const override { return output_signal_ ? sys_.p() : sys_.n(); }

    Vec reset() override {
        x_ = Vec::Zero(sys_.n());
        return observe();
    }

    Vec step(const Vec& u) override {
        require(u.size() == sys_.m(), "LtiEnv::step: input dimension mismatch");
        const Vec w = dist_.next(clock_, x_);
        w_log_.push_back(w);
        x_ = adaclab::step(sys_, x_, u, w);
        ++clock_;
        ++step_count_;
        return observe();
    }

    // ---- oracle side (tests and evaluation only) ----
    const LtiSystem& system_oracle() const { return sys_; }
    const std::vector<Vec>& disturbance_log() const { return w_log_; }
    const std::vector<Vec>& measurement_log() const { return e_log_; }
    std::int64_t step_count() const { return step_count_; }
    const Vec& state_oracle() const { return x_; }

private:
    Vec observe() {
        if (!output_signal_) {
            if (meas_) e_log_.push_back(Vec::Zero(sys_.p()));
            return x_;
        }
        Vec e = meas_ ? meas_->next(static_cast<std::int64_t>(e_log_.size()), x_) : Vec::Zero(sys_.p());
        e_log_.push_back(e);
        return sys_.C() * x_ + e;
    }

    LtiSystem sys_;
    DisturbanceGen dist_;
    std::optional<DisturbanceGen> meas_;
    bool output_signal_;
    Vec x_;
    std::int64_t clock_ = 0;       // disturbance time index, continuous across resets
    std::int64_t step_count_ = 0;  // total env queries
    std::vector<Vec> w_log_;
    std::vector<Vec> e_log_;
};

// ============================================================================
// Stage-1 exploration: +-1 rollouts, Phi estimation, probe construction
// ============================================================================

struct RolloutBatch {
    Mat X;  // (q N) x I0 stacked signal trajectories (signals after each step)
    Mat U;  // (m N) x I0 stacked +-1 inputs
    int rollouts = 0;    // I0
    int steps = 0;       // N
    int input_dim = 0;   // m
    int signal_dim = 0;  // q
};

// I0 independent length-N rollouts from the origin with i.i.d. +-1 inputs.
// The environment is queried exactly I0 * N times.
inline RolloutBatch collect_rollouts(Environment& env, int rollouts, int steps, Rng& rng) {
    require(rollouts >= 1 && steps >= 1, "collect_rollouts: I0 and N must be positive");
    const int m = env.input_dim();
    const int q = env.signal_dim();
    RolloutBatch batch;
    batch.rollouts = rollouts;
    batch.steps = steps;
    batch.input_dim = m;
    batch.signal_dim = q;
    batch.X = Mat(static_cast<Eigen::Index>(q) * steps, rollouts);
    batch.U = Mat(static_cast<Eigen::Index>(m) * steps, rollouts);
    std::bernoulli_distribution coin(0.5);
    for (int k = 0; k < rollouts; ++k) {
        env.reset();
        for (int t = 0; t < steps; ++t) {
            Vec u(m);
            for (int i = 0; i < m; ++i) u(i) = coin(rng) ? 1.0 : -1.0;
            batch.U.block(static_cast<Eigen::Index>(m) * t, k, m, 1) = u;
            batch.X.block(static_cast<Eigen::Index>(q) * t, k, q, 1) = env.step(u);
        }
    }
    return batch;
}

// Phi estimate (1/I0) X U^T.
inline Mat estimate_phi(const RolloutBatch& batch) {
    require(batch.rollouts >= 1, "estimate_phi: empty batch");
    return (batch.X * batch.U.transpose()) / static_cast<double>(batch.rollouts);
}

namespace oracle {

// Ground-truth lower block-triangular convolution map: block (i,j), i >= j, is
// C A^{i-j} B (A^{i-j} B in state-signal mode). Test/oracle use only.
inline Mat toeplitz_phi(const LtiSystem& sys, int steps, bool output_signal = false) {
    require(steps >= 1, "toeplitz_phi: N must be positive");
    const int q = output_signal ? sys.p() : sys.n();
    const int m = sys.m();
    Mat phi = Mat::Zero(static_cast<Eigen::Index>(q) * steps, static_cast<Eigen::Index>(m) * steps);
    Mat block = output_signal ? Mat(sys.C() * sys.B()) : sys.B();  // C A^d B along diagonal d
    Mat power = sys.B();
    for (int d = 0; d < steps; ++d) {
        for (int i = d; i < steps; ++i)
            phi.block(static_cast<Eigen::Index>(q) * i, static_cast<Eigen::Index>(m) * (i - d), q, m) = block;
        power = sys.A() * power;
        block = output_signal ? Mat(sys.C() * power) : power;
    }
    return phi;
}

}  // namespace oracle

// Probe input: N draws from the radius 1/sqrt(N) sphere, so the stacked probe
// has unit norm.
struct ProbeInput {
    std::vector<Vec> u;  // length N, each of norm 1/sqrt(N)
    std::uint64_t seed = 0;
};

inline ProbeInput sample_probe(int steps, int input_dim, Rng& rng, std::uint64_t seed_tag = 0) {
    require(steps >= 1 && input_dim >= 1, "sample_probe: dimensions must be positive");
    ProbeInput probe;
    probe.seed = seed_tag;
    probe.u.reserve(static_cast<std::size_t>(steps));
    const double radius = 1.0 / std::sqrt(static_cast<double>(steps));
    for (int t = 0; t < steps; ++t) probe.u.push_back(radius * random_unit_vector(input_dim, rng));
    return probe;
}

// Samples probes until one is persistently exciting of the requested order.
// Bounded retries; exhaustion is a numerical failure, never a silent pass.
inline ProbeInput sample_persistently_exciting_probe(int steps, int input_dim, int order, Rng& rng,
                                                     int max_retries = 10) {
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        ProbeInput probe = sample_probe(steps, input_dim, rng);
        if (persistently_exciting(probe.u, order)) return probe;
    }
    throw NumericalFailure("sample_persistently_exciting_probe: no persistently exciting probe after " +
                           std::to_string(max_retries) + " retries (order " + std::to_string(order) + ", N " +
                           std::to_string(steps) + ")");
}

// Estimated clean signal trajectory Phi_hat * u^d, returned as N stacked q-vectors.
inline std::vector<Vec> synthesize_clean(const RolloutBatch& batch, const ProbeInput& probe) {
    require(static_cast<int>(probe.u.size()) == batch.steps, "synthesize_clean: probe length mismatch");
    require(!probe.u.empty() && probe.u.front().size() == batch.input_dim,
            "synthesize_clean: probe input dimension mismatch");
    const Vec ud = stack_window(probe.u, 0, batch.steps - 1, batch.input_dim);
    const Vec xd = estimate_phi(batch) * ud;
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(batch.steps));
    for (int t = 0; t < batch.steps; ++t)
        out.push_back(xd.segment(static_cast<Eigen::Index>(batch.signal_dim) * t, batch.signal_dim));
    return out;
}

// ============================================================================
// Explore-then-commit schedule
// ============================================================================

struct EtcSchedule {
    int L = 0;
    std::int64_t N = 0;
    std::int64_t I0 = 0;
    std::int64_t Ts = 0;  // N * I0
};

// Defaults: L = max(ceil(log T), 2n), N the smallest window-compatible length
// (m+n+1)L, I0 = ceil(T^{2/3} / N), so Ts = N I0 tracks T^{2/3}. Explicit
// overrides are validated, not adjusted.
inline EtcSchedule resolve_schedule(std::int64_t horizon, int n, int m, int l_override = -1,
                                    std::int64_t n_override = -1, std::int64_t i0_override = -1) {
    require(horizon >= 2, "resolve_schedule: horizon too short");
    EtcSchedule s;
    s.L = l_override > 0 ? l_override
                         : std::max<int>(static_cast<int>(std::ceil(std::log(static_cast<double>(horizon)))), 2 * n);
    s.N = n_override > 0 ? n_override : static_cast<std::int64_t>(m + n + 1) * s.L;
    const double ts_target = std::pow(static_cast<double>(horizon), 2.0 / 3.0);
    s.I0 = i0_override > 0 ? i0_override : static_cast<std::int64_t>(std::ceil(ts_target / static_cast<double>(s.N)));
    s.Ts = s.N * s.I0;
    return s;
}

}  // namespace adaclab
