#pragma once

#include "adaclab/common.hpp"

#include <cmath>
#include <optional>

namespace adaclab {

// ============================================================================
// Ground-truth linear system x_{t+1} = A x_t + B u_t + w_t, y_t = C x_t + e_t.
// The learner never sees this type; it backs simulation, oracles and tests.
// ============================================================================

// Largest k-th root of ||A^k|| over k = 1..k_check. Throws UnstableSystem,
// naming the violating power, as soon as some ||A^k|| >= 1.
inline double certify_stability(const Mat& a, int k_check) {
    require(a.rows() == a.cols(), "certify_stability: A must be square");
    require(k_check >= static_cast<int>(a.rows()), "certify_stability: K_check >= n required");
    Mat pw = Mat::Identity(a.rows(), a.cols());
    double rho_hat = 0.0;
    for (int k = 1; k <= k_check; ++k) {
        pw = pw * a;
        const double nk = operator_norm(pw);
        if (nk >= 1.0)
            throw UnstableSystem("stability certification failed: ||A^" + std::to_string(k) +
                                 "|| = " + std::to_string(nk) + " >= 1");
        rho_hat = std::max(rho_hat, std::pow(nk, 1.0 / k));
    }
    return rho_hat;
}

class LtiSystem {
public:
    // C = identity selects state feedback (p = n).
    LtiSystem(Mat a, Mat b, Mat c, double rho) : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), rho_(rho) {
        require(a_.rows() == a_.cols() && a_.rows() >= 1, "LtiSystem: A must be square");
        require(b_.rows() == a_.rows() && b_.cols() >= 1, "LtiSystem: B row count must match A");
        require(c_.cols() == a_.rows() && c_.rows() >= 1, "LtiSystem: C column count must match A");
        require(rho_ > 0.0 && rho_ < 1.0, "LtiSystem: rho must lie in (0,1)");
        validate_decay();
        validate_controllability();
    }

    static LtiSystem state_feedback(Mat a, Mat b, double rho) {
        const Eigen::Index n = a.rows();
        return LtiSystem(std::move(a), std::move(b), Mat::Identity(n, n), rho);
    }

    // Random controllable system with ||A|| = rho_target, so ||A^k|| <= rho^k holds
    // for every k. p < 0 gives C = I; otherwise C is a random p x n map, unit norm.
    static LtiSystem random(int n, int m, double rho_target, Rng& rng, int p = -1) {
        require(n >= 1 && m >= 1, "LtiSystem::random: dimensions must be positive");
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int attempt = 0; attempt < 32; ++attempt) {
            Mat a(n, n), b(n, m);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
            const double na = operator_norm(a);
            if (na < 1e-12) continue;
            a *= rho_target / na;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) b(i, j) = gauss(rng);
            b /= std::max(1.0, operator_norm(b));
            Mat c;
            if (p < 0) {
                c = Mat::Identity(n, n);
            } else {
                c = Mat(p, n);
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < n; ++j) c(i, j) = gauss(rng);
                c /= std::max(1e-12, operator_norm(c));
            }
            try {
                return LtiSystem(std::move(a), std::move(b), std::move(c), rho_target);
            } catch (const std::exception&) {
                continue;  // controllability resample
            }
        }
        throw NumericalFailure("LtiSystem::random: failed to draw a controllable stable system");
    }

    const Mat& A() const { return a_; }
    const Mat& B() const { return b_; }
    const Mat& C() const { return c_; }
    double rho() const { return rho_; }
    int n() const { return static_cast<int>(a_.rows()); }
    int m() const { return static_cast<int>(b_.cols()); }
    int p() const { return static_cast<int>(c_.rows()); }
    bool identity_output() const { return c_.rows() == c_.cols() && c_.isIdentity(1e-15); }

private:
    void validate_decay() const {
        const int k_check = std::max(50, 4 * n());
        Mat pw = Mat::Identity(n(), n());
        double bound = 1.0;
        for (int k = 1; k <= k_check; ++k) {
            pw = pw * a_;
            bound *= rho_;
            if (operator_norm(pw) > bound * (1.0 + 1e-9))
                throw UnstableSystem("LtiSystem: ||A^" + std::to_string(k) + "|| exceeds rho^k for declared rho=" +
                                     std::to_string(rho_));
        }
    }

    void validate_controllability() const {
        Mat ctrb(n(), n() * m());
        Mat pw = Mat::Identity(n(), n());
        for (int k = 0; k < n(); ++k) {
            ctrb.middleCols(k * m(), m()) = pw * b_;
            pw = pw * a_;
        }
        Eigen::JacobiSVD<Mat> svd(ctrb);
        const auto& sv = svd.singularValues();
        if (sv(sv.size() - 1) <= 1e-10 * std::max(sv(0), 1e-300))
            throw ContractViolation("LtiSystem: (A,B) fails the controllability rank test");
    }

    Mat a_, b_, c_;
    double rho_;
};

// One transition. Exact up to floating point.
inline Vec step(const LtiSystem& sys, const Vec& x, const Vec& u, const Vec& w) {
    require(x.size() == sys.n(), "step: state dimension mismatch");
    require(u.size() == sys.m(), "step: input dimension mismatch");
    require(w.size() == sys.n(), "step: disturbance dimension mismatch");
    return sys.A() * x + sys.B() * u + w;
}

// ============================================================================
// Disturbance generators. Every kind emits ||w_t|| <= epsilon.
// ============================================================================

enum class DisturbanceKind { zero, constant, sinusoid, uniform_random, sign_flip_adversary };

inline DisturbanceKind disturbance_kind_from_string(const std::string& s) {
    if (s == "zero") return DisturbanceKind::zero;
    if (s == "constant") return DisturbanceKind::constant;
    if (s == "sinusoid") return DisturbanceKind::sinusoid;
    if (s == "uniform_random") return DisturbanceKind::uniform_random;
    if (s == "sign_flip_adversary") return DisturbanceKind::sign_flip_adversary;
    throw ConfigError("unknown disturbance kind: " + s);
}

class DisturbanceGen {
public:
    DisturbanceGen(DisturbanceKind kind, int dim, double epsilon, std::uint64_t seed, double frequency = 0.13)
        : kind_(kind), dim_(dim), epsilon_(epsilon), seed_(seed), frequency_(frequency), engine_(seed) {
        require(dim_ >= 1, "DisturbanceGen: dim must be positive");
        require(epsilon_ >= 0.0, "DisturbanceGen: epsilon must be nonnegative");
        Rng setup(derive_seed(seed, 0xD157));
        direction_ = random_unit_vector(dim_, setup);
        std::uniform_real_distribution<double> uphase(0.0, 2.0 * M_PI);
        phase_ = Vec(dim_);
        for (int i = 0; i < dim_; ++i) phase_(i) = uphase(setup);
    }

    static DisturbanceGen zero(int dim) { return DisturbanceGen(DisturbanceKind::zero, dim, 0.0, 0); }

    DisturbanceKind kind() const { return kind_; }
    double epsilon() const { return epsilon_; }
    int dim() const { return dim_; }

    // w_t as a function of the time index and (for the adversary) the current state.
    Vec next(std::int64_t t, const Vec& state) {
        switch (kind_) {
            case DisturbanceKind::zero:
                return Vec::Zero(dim_);
            case DisturbanceKind::constant:
                return epsilon_ * direction_;
            case DisturbanceKind::sinusoid: {
                Vec w(dim_);
                for (int i = 0; i < dim_; ++i) w(i) = std::sin(frequency_ * static_cast<double>(t) + phase_(i));
                return (epsilon_ / std::sqrt(static_cast<double>(dim_))) * w;
            }
            case DisturbanceKind::uniform_random: {
                Vec dir = random_unit_vector(dim_, engine_);
                std::uniform_real_distribution<double> u01(0.0, 1.0);
                const double r = std::pow(u01(engine_), 1.0 / dim_);
                return epsilon_ * r * dir;
            }
            case DisturbanceKind::sign_flip_adversary: {
                // Push against the sign pattern of the current state; alternate when at rest.
                Vec w(dim_);
                bool all_zero = true;
                for (int i = 0; i < dim_; ++i) {
                    const double s = state.size() == dim_ ? state(i) : 0.0;
                    if (s > 1e-14) {
                        w(i) = -1.0;
                        all_zero = false;
                    } else if (s < -1e-14) {
                        w(i) = 1.0;
                        all_zero = false;
                    } else {
                        w(i) = 0.0;
                    }
                }
                if (all_zero)
                    for (int i = 0; i < dim_; ++i) w(i) = (t % 2 == 0) ? 1.0 : -1.0;
                return (epsilon_ / std::sqrt(static_cast<double>(dim_))) * w;
            }
        }
        throw ContractViolation("DisturbanceGen: unreachable kind");
    }

private:
    DisturbanceKind kind_;
    int dim_;
    double epsilon_;
    std::uint64_t seed_;
    double frequency_;
    Rng engine_;
    Vec direction_;
    Vec phase_;
};

// ============================================================================
// Cost oracles. Convex, differentiable, gradient clipped to G on a declared
// reachable box at construction.
// ============================================================================

enum class CostKind { quadratic_tracking, timevarying_linear_quadratic };

inline CostKind cost_kind_from_string(const std::string& s) {
    if (s == "quadratic_tracking") return CostKind::quadratic_tracking;
    if (s == "timevarying_linear_quadratic") return CostKind::timevarying_linear_quadratic;
    throw ConfigError("unknown cost kind: " + s);
}

class CostOracle {
public:
    // box_x / box_u bound the (x, u) region on which ||grad c_t|| <= G is enforced.
    CostOracle(CostKind kind, int signal_dim, int input_dim, double grad_bound, double box_x, double box_u,
               std::uint64_t seed = 0, double state_weight = 1.0, double input_weight = 1.0,
               double target_amplitude = 0.0, double target_frequency = 0.05)
        : kind_(kind),
          q_(signal_dim),
          m_(input_dim),
          g_(grad_bound),
          box_x_(box_x),
          box_u_(box_u),
          seed_(seed),
          qw_(state_weight),
          rw_(input_weight),
          target_amp_(target_amplitude),
          target_freq_(target_frequency) {
        require(q_ >= 1 && m_ >= 1, "CostOracle: dimensions must be positive");
        require(g_ > 0.0, "CostOracle: gradient bound G must be positive");
        require(box_x_ > 0.0 && box_u_ > 0.0, "CostOracle: reachable box must be positive");
        require(qw_ >= 0.0 && rw_ >= 0.0, "CostOracle: weights must be nonnegative");
        Rng setup(derive_seed(seed, 0xC057));
        target_dir_ = random_unit_vector(q_, setup);
        // Worst-case gradient over the box; 1.5 covers the time-varying weight range.
        const double wmax = std::max(qw_, rw_) * (kind_ == CostKind::timevarying_linear_quadratic ? 1.5 : 1.0);
        const double reach = std::hypot(box_x_ + std::abs(target_amp_), box_u_);
        const double worst = 2.0 * wmax * reach;
        scale_ = (worst > g_) ? g_ / worst : 1.0;
    }

    double value(std::int64_t t, const Vec& u, const Vec& x) const {
        check_dims(u, x);
        const Vec dx = x - target(t);
        return sq(t) * dx.squaredNorm() + sr(t) * u.squaredNorm();
    }

    // (grad_u, grad_x).
    std::pair<Vec, Vec> gradient(std::int64_t t, const Vec& u, const Vec& x) const {
        check_dims(u, x);
        const Vec dx = x - target(t);
        return {2.0 * sr(t) * u, 2.0 * sq(t) * dx};
    }

    Vec target(std::int64_t t) const {
        if (target_amp_ == 0.0) return Vec::Zero(q_);
        return target_amp_ * std::sin(target_freq_ * static_cast<double>(t)) * target_dir_;
    }

    double grad_bound() const { return g_; }
    double box_x() const { return box_x_; }
    double box_u() const { return box_u_; }
    CostKind kind() const { return kind_; }

private:
    void check_dims(const Vec& u, const Vec& x) const {
        require(u.size() == m_ && x.size() == q_, "CostOracle: argument dimension mismatch");
    }

    // Deterministic in (seed, t): time-varying weights stay in [0.5, 1.5] x base.
    double jitter(std::int64_t t, std::uint64_t salt) const {
        const std::uint64_t h = splitmix64(seed_ ^ splitmix64(static_cast<std::uint64_t>(t) * 2654435761ULL + salt));
        return 0.5 + static_cast<double>(h >> 11) / static_cast<double>(1ULL << 53);
    }

    double sq(std::int64_t t) const {
        return scale_ * qw_ * (kind_ == CostKind::timevarying_linear_quadratic ? jitter(t, 0x51) : 1.0);
    }
    double sr(std::int64_t t) const {
        return scale_ * rw_ * (kind_ == CostKind::timevarying_linear_quadratic ? jitter(t, 0x52) : 1.0);
    }

    CostKind kind_;
    int q_, m_;
    double g_, box_x_, box_u_;
    std::uint64_t seed_;
    double qw_, rw_, target_amp_, target_freq_;
    Vec target_dir_;
    double scale_ = 1.0;
};

// ============================================================================
// Trajectories
// ============================================================================

struct Trajectory {
    std::vector<Vec> states;        // length T+1 (includes x_0)
    std::vector<Vec> inputs;        // length T
    std::vector<Vec> outputs;       // length T+1, y_t = C x_t + e_t
    std::vector<Vec> disturbances;  // length T
    std::vector<Vec> meas_noise;    // length T+1
    std::int64_t length = 0;
};

inline Trajectory simulate(const LtiSystem& sys, const std::vector<Vec>& u_seq, DisturbanceGen dist, const Vec& x0,
                           std::int64_t t_steps, std::optional<DisturbanceGen> meas = std::nullopt) {
    require(t_steps >= 1, "simulate: T must be >= 1");
    require(static_cast<std::int64_t>(u_seq.size()) >= t_steps, "simulate: input sequence shorter than T");
    require(x0.size() == sys.n(), "simulate: x0 dimension mismatch");
    require(dist.dim() == sys.n(), "simulate: disturbance dimension mismatch");
    if (meas) require(meas->dim() == sys.p(), "simulate: measurement noise dimension mismatch");

    Trajectory traj;
    traj.length = t_steps;
    traj.states.reserve(t_steps + 1);
    traj.states.push_back(x0);
    for (std::int64_t t = 0; t < t_steps; ++t) {
        const Vec e = meas ? meas->next(t, traj.states.back()) : Vec::Zero(sys.p());
        traj.meas_noise.push_back(e);
        traj.outputs.push_back(sys.C() * traj.states.back() + e);
        const Vec w = dist.next(t, traj.states.back());
        traj.disturbances.push_back(w);
        traj.inputs.push_back(u_seq[static_cast<std::size_t>(t)]);
        traj.states.push_back(step(sys, traj.states.back(), traj.inputs.back(), w));
    }
    const Vec e = meas ? meas->next(t_steps, traj.states.back()) : Vec::Zero(sys.p());
    traj.meas_noise.push_back(e);
    traj.outputs.push_back(sys.C() * traj.states.back() + e);
    return traj;
}

// Max replay residual max_t ||x_{t+1} - (A x_t + B u_t + w_t)||.
inline double replay_residual(const LtiSystem& sys, const Trajectory& traj) {
    double worst = 0.0;
    for (std::int64_t t = 0; t < traj.length; ++t) {
        const Vec pred = step(sys, traj.states[t], traj.inputs[t], traj.disturbances[t]);
        worst = std::max(worst, (traj.states[t + 1] - pred).norm());
    }
    return worst;
}

namespace oracle {

// Accumulated disturbance sum_{i=0}^{t} A^i w_{t-i}, evaluated literally with
// explicit matrix powers. Ground-truth reference for the reconstruction tests.
inline Vec accumulated_disturbance(const LtiSystem& sys, const std::vector<Vec>& w_seq, std::int64_t t) {
    require(t >= 0 && t < static_cast<std::int64_t>(w_seq.size()), "accumulated_disturbance: t out of range");
    Vec acc = Vec::Zero(sys.n());
    Mat pw = Mat::Identity(sys.n(), sys.n());
    for (std::int64_t i = 0; i <= t; ++i) {
        acc += pw * w_seq[static_cast<std::size_t>(t - i)];
        pw = pw * sys.A();
    }
    return acc;
}

// Whole accumulated-disturbance sequence via the recursion acc_t = A acc_{t-1} + w_t.
inline std::vector<Vec> accumulated_sequence(const LtiSystem& sys, const std::vector<Vec>& w_seq) {
    std::vector<Vec> acc;
    acc.reserve(w_seq.size());
    Vec cur = Vec::Zero(sys.n());
    for (const Vec& w : w_seq) {
        cur = sys.A() * cur + w;
        acc.push_back(cur);
    }
    return acc;
}

// Observed accumulated disturbance: what the output-signal reconstruction targets.
// With y_t = C x_t + e_t this is C acc_t + e_{t+1}; e_seq must reach index t+1.
inline Vec observed_disturbance(const LtiSystem& sys, const std::vector<Vec>& w_seq, const std::vector<Vec>& e_seq,
                                std::int64_t t) {
    require(t + 1 < static_cast<std::int64_t>(e_seq.size()), "observed_disturbance: e sequence too short");
    return sys.C() * accumulated_disturbance(sys, w_seq, t) + e_seq[static_cast<std::size_t>(t + 1)];
}

inline std::vector<Vec> observed_sequence(const LtiSystem& sys, const std::vector<Vec>& w_seq,
                                          const std::vector<Vec>& e_seq) {
    require(e_seq.size() >= w_seq.size() + 1, "observed_sequence: e sequence too short");
    std::vector<Vec> acc = accumulated_sequence(sys, w_seq);
    std::vector<Vec> out;
    out.reserve(acc.size());
    for (std::size_t t = 0; t < acc.size(); ++t) out.push_back(sys.C() * acc[t] + e_seq[t + 1]);
    return out;
}

}  // namespace oracle

}  // namespace adaclab
