#pragma once

#include "adaclab/common.hpp"

#include <deque>

namespace adaclab {

// Relative singular-value threshold below which a stacked representation is
// declared rank deficient; failures re-probe, never continue silently.
inline constexpr double kRankThreshold = 1e-8;
// Cutoff for the orthogonal-decomposition least-norm solve.
inline constexpr double kSolveCutoff = 1e-10;

// ============================================================================
// Hankel construction and excitation tests
// ============================================================================

// Block Hankel matrix of a d-vector sequence: column j stacks seq[j..j+L-1].
inline Mat build_hankel(const std::vector<Vec>& seq, int window) {
    require(window >= 1, "build_hankel: L must be >= 1");
    const auto len = static_cast<std::int64_t>(seq.size());
    require(len >= window, "build_hankel: sequence shorter than window");
    const Eigen::Index d = seq.front().size();
    for (const Vec& v : seq) require(v.size() == d, "build_hankel: inconsistent element dimension");
    Mat h(d * window, len - window + 1);
    for (std::int64_t j = 0; j + window <= len; ++j)
        for (int i = 0; i < window; ++i) h.block(i * d, j, d, 1) = seq[static_cast<std::size_t>(j + i)];
    return h;
}

// True iff the order-k Hankel matrix of the input has full row rank.
// A sequence too short to form the matrix is simply not exciting.
inline bool persistently_exciting(const std::vector<Vec>& u_seq, int order) {
    require(order >= 1, "persistently_exciting: order must be >= 1");
    if (static_cast<int>(u_seq.size()) < order) return false;
    const Mat h = build_hankel(u_seq, order);
    if (h.rows() > h.cols()) return false;
    Eigen::JacobiSVD<Mat> svd(h);
    const auto& sv = svd.singularValues();
    return sv(sv.size() - 1) > kRankThreshold * std::max(sv(0), 1e-300);
}

// Minimum-norm solution of a full-row-rank system, via SVD with a relative
// singular-value cutoff (the normal-equations form is fragile for
// ill-conditioned probes). Throws SingularRepresentation on rank deficiency.
inline Vec least_norm_solve(const Mat& a, const Vec& rhs) {
    require(a.rows() == rhs.size(), "least_norm_solve: rhs dimension mismatch");
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (a.rows() > a.cols() || sv(sv.size() - 1) <= kRankThreshold * std::max(sv(0), 1e-300))
        throw SingularRepresentation("least_norm_solve: matrix is not full row rank");
    const double cutoff = kSolveCutoff * sv(0);
    Vec coeffs = svd.matrixU().transpose() * rhs;
    for (Eigen::Index i = 0; i < sv.size(); ++i) coeffs(i) = sv(i) > cutoff ? coeffs(i) / sv(i) : 0.0;
    return svd.matrixV() * coeffs;
}

// ============================================================================
// L-step model (the representation collapsed to one linear recursion)
// ============================================================================

struct LStepModel {
    Mat h1;  // q x m(L-1): coefficients of the input window u_{t-L+2:t}
    Mat h0;  // q x m:      coefficient of the padded input u_{t+1}
    Mat h2;  // q x q:      coefficient of the window-start signal
    int window = 0;
    int input_dim = 0;
    int signal_dim = 0;
};

// One step of the window recursion x_{t+1} = H2 x_{t-L+2} + H1 u_window + v.
inline Vec lstep_step(const LStepModel& mdl, const Vec& x_old, const Vec& u_window, const Vec& v) {
    require(x_old.size() == mdl.h2.cols(), "lstep_step: signal dimension mismatch");
    require(u_window.size() == mdl.h1.cols(), "lstep_step: input window dimension mismatch");
    require(v.size() == mdl.h2.rows(), "lstep_step: residual dimension mismatch");
    return mdl.h2 * x_old + mdl.h1 * u_window + v;
}

// ============================================================================
// HankelPair: the non-parametric model {H_L(u^d), H_L(s^d)}
// ============================================================================

class HankelPair {
public:
    // Builds both Hankel matrices and verifies the stacked [Hu; Hs[1,:]] matrix
    // has full row rank. Throws SingularRepresentation otherwise (caller
    // re-probes with a fresh input sequence).
    HankelPair(const std::vector<Vec>& u_seq, const std::vector<Vec>& s_seq, int window)
        : window_(window),
          source_len_(static_cast<int>(u_seq.size())),
          input_dim_(u_seq.empty() ? 0 : static_cast<int>(u_seq.front().size())),
          signal_dim_(s_seq.empty() ? 0 : static_cast<int>(s_seq.front().size())) {
        require(window_ >= 2, "HankelPair: window length L must be >= 2");
        require(u_seq.size() == s_seq.size(), "HankelPair: input/signal length mismatch");
        hu_ = build_hankel(u_seq, window_);
        hs_ = build_hankel(s_seq, window_);
        finish_init();
    }

    // Reassemble from already-built matrices (deserialization path).
    HankelPair(Mat hu, Mat hs, int window, int input_dim, int signal_dim)
        : window_(window), input_dim_(input_dim), signal_dim_(signal_dim), hu_(std::move(hu)), hs_(std::move(hs)) {
        require(window_ >= 2, "HankelPair: window length L must be >= 2");
        require(hu_.rows() == static_cast<Eigen::Index>(input_dim_) * window_, "HankelPair: Hu row count mismatch");
        require(hs_.rows() == static_cast<Eigen::Index>(signal_dim_) * window_, "HankelPair: Hs row count mismatch");
        require(hu_.cols() == hs_.cols(), "HankelPair: column count mismatch");
        source_len_ = static_cast<int>(hu_.cols()) + window_ - 1;
        finish_init();
    }

    const Mat& Hu() const { return hu_; }
    const Mat& Hs() const { return hs_; }
    int window() const { return window_; }
    int source_len() const { return source_len_; }
    int input_dim() const { return input_dim_; }
    int signal_dim() const { return signal_dim_; }
    Eigen::Index cols() const { return hu_.cols(); }

    // Block row k (1-based) of the signal Hankel matrix.
    Mat signal_row(int k) const {
        require(k >= 1 && k <= window_, "HankelPair: block row out of range");
        return hs_.middleRows(static_cast<Eigen::Index>(k - 1) * signal_dim_, signal_dim_);
    }

    // Stacked [Hu; Hs[1,:]] system matrix.
    const Mat& stacked() const { return stacked_; }

    // Minimum-norm alpha with stacked() * alpha = rhs, via the cached decomposition.
    Vec least_norm(const Vec& rhs) const {
        require(rhs.size() == stacked_.rows(), "HankelPair::least_norm: rhs dimension mismatch");
        Vec coeffs = svd_u_.transpose() * rhs;
        for (Eigen::Index i = 0; i < sv_inv_.size(); ++i) coeffs(i) *= sv_inv_(i);
        return svd_v_ * coeffs;
    }

    // The collapsed window map P = Hs[L,:] pinv(stacked), split [H1 | H0 | H2].
    const LStepModel& lstep() const { return lstep_; }

    double conditioning() const { return cond_; }

private:
    void finish_init() {
        stacked_ = Mat(hu_.rows() + signal_dim_, hu_.cols());
        stacked_.topRows(hu_.rows()) = hu_;
        stacked_.bottomRows(signal_dim_) = hs_.topRows(signal_dim_);
        if (stacked_.rows() > stacked_.cols())
            throw SingularRepresentation("HankelPair: too few columns for a full-row-rank representation");

        Eigen::JacobiSVD<Mat> svd(stacked_, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        if (sv(sv.size() - 1) <= kRankThreshold * std::max(sv(0), 1e-300))
            throw SingularRepresentation("HankelPair: stacked [Hu; Hs[1,:]] matrix is rank deficient");
        cond_ = sv(0) / sv(sv.size() - 1);
        svd_u_ = svd.matrixU();
        svd_v_ = svd.matrixV();
        const double cutoff = kSolveCutoff * sv(0);
        sv_inv_ = sv;
        for (Eigen::Index i = 0; i < sv_inv_.size(); ++i) sv_inv_(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;

        // P = Hs[L,:] V S^-1 U^T, independent of any particular rhs.
        const Mat pinv = svd_v_ * sv_inv_.asDiagonal() * svd_u_.transpose();
        const Mat p = signal_row(window_) * pinv;
        lstep_.window = window_;
        lstep_.input_dim = input_dim_;
        lstep_.signal_dim = signal_dim_;
        lstep_.h1 = p.leftCols(static_cast<Eigen::Index>(input_dim_) * (window_ - 1));
        lstep_.h0 = p.middleCols(static_cast<Eigen::Index>(input_dim_) * (window_ - 1), input_dim_);
        lstep_.h2 = p.rightCols(signal_dim_);
    }

    int window_ = 0;
    int source_len_ = 0;
    int input_dim_ = 0;
    int signal_dim_ = 0;
    Mat hu_, hs_, stacked_;
    Mat svd_u_, svd_v_;
    Vec sv_inv_;
    double cond_ = 0.0;
    LStepModel lstep_;
};

// The three window blocks of the representation.
inline LStepModel extract_lstep(const HankelPair& h) { return h.lstep(); }

// ============================================================================
// Accumulated-disturbance reconstruction and counterfactual simulation
// ============================================================================

// Reconstructed accumulated disturbance at time t.
//   u_window: stacked u_{t-L+2:t} ((L-1) inputs, zero-padded at negative times)
//   s_old:    signal s_{t-L+2}
//   s_new:    signal s_{t+1}
//   w_prev:   previous reconstruction acc_{t-L+1}
// Solves the stacked window system with the trailing input padded to zero
// (the padded value cannot influence the window's final signal) and returns
// s_{t+1} - Hs[L,:] alpha.
inline Vec acc_noise(const Vec& u_window, const Vec& s_old, const Vec& s_new, const Vec& w_prev, const HankelPair& h) {
    const int l = h.window();
    const int m = h.input_dim();
    const int q = h.signal_dim();
    require(u_window.size() == static_cast<Eigen::Index>(m) * (l - 1), "acc_noise: input window dimension mismatch");
    require(s_old.size() == q && s_new.size() == q && w_prev.size() == q, "acc_noise: signal dimension mismatch");
    Vec rhs(static_cast<Eigen::Index>(m) * l + q);
    rhs.head(static_cast<Eigen::Index>(m) * (l - 1)) = u_window;
    rhs.segment(static_cast<Eigen::Index>(m) * (l - 1), m).setZero();
    rhs.tail(q) = s_old - w_prev;
    const Vec alpha = h.least_norm(rhs);
    return s_new - h.signal_row(l) * alpha;
}

// Counterfactual state of the policy that plays the parameter blocks at every
// step against the recorded accumulated disturbances. w_hist holds acc_0..acc_{t-1};
// indices at or below zero are zero. blocks[i] multiplies acc_{tau-1-i}.
// history_window > 0 truncates the rollout to the last history_window steps.
inline Vec pi_traj(const std::vector<Vec>& w_hist, const std::vector<Mat>& blocks, const HankelPair& h,
                   std::int64_t t, std::int64_t history_window = 0) {
    const int l = h.window();
    const int m = h.input_dim();
    const int q = h.signal_dim();
    require(static_cast<std::int64_t>(w_hist.size()) >= t, "pi_traj: history shorter than t");
    require(!blocks.empty(), "pi_traj: empty parameter blocks");
    for (const Mat& b : blocks) require(b.rows() == m && b.cols() == q, "pi_traj: block dimension mismatch");
    if (t <= 0) return Vec::Zero(q);

    const auto lag_count = static_cast<std::int64_t>(blocks.size());
    // With truncation everything before `start` (inputs, states and recorded
    // accumulated disturbances) is treated as zero, exploiting forgetting.
    const std::int64_t start = history_window > 0 ? std::max<std::int64_t>(0, t - history_window) : 0;

    // Counterfactual inputs u~_tau = sum_i M^(i) acc_{tau-i} for tau = start..t.
    std::vector<Vec> u_sim(static_cast<std::size_t>(t + 1 - start), Vec::Zero(m));
    for (std::int64_t tau = start; tau <= t; ++tau) {
        Vec u = Vec::Zero(m);
        for (std::int64_t i = 1; i <= lag_count; ++i) {
            const std::int64_t k = tau - i;
            if (k >= start && k < t) u += blocks[static_cast<std::size_t>(i - 1)] * w_hist[static_cast<std::size_t>(k)];
        }
        u_sim[static_cast<std::size_t>(tau - start)] = u;
    }
    auto u_at = [&](std::int64_t tau) -> Vec {
        if (tau < start || tau > t) return Vec::Zero(m);
        return u_sim[static_cast<std::size_t>(tau - start)];
    };

    std::vector<Vec> x_sim(static_cast<std::size_t>(t + 1 - start), Vec::Zero(q));
    auto x_at = [&](std::int64_t tau) -> Vec {
        if (tau < start || tau > t) return Vec::Zero(q);
        return x_sim[static_cast<std::size_t>(tau - start)];
    };
    auto acc_at = [&](std::int64_t k) -> Vec {
        if (k < start || k >= t) return Vec::Zero(q);
        return w_hist[static_cast<std::size_t>(k)];
    };

    Vec rhs(static_cast<Eigen::Index>(m) * l + q);
    for (std::int64_t tau = start; tau < t; ++tau) {
        for (int i = 0; i < l; ++i) rhs.segment(static_cast<Eigen::Index>(i) * m, m) = u_at(tau - l + 2 + i);
        rhs.tail(q) = x_at(tau - l + 2) - acc_at(tau - l + 1);
        const Vec alpha = h.least_norm(rhs);
        x_sim[static_cast<std::size_t>(tau + 1 - start)] = h.signal_row(l) * alpha + acc_at(tau);
    }
    return x_at(t);
}

// ============================================================================
// AccHistory: ring buffer of the last L reconstructions, zero before time 0
// ============================================================================

class AccHistory {
public:
    AccHistory(int window, int signal_dim) : window_(window), zero_(Vec::Zero(signal_dim)) {
        require(window_ >= 1, "AccHistory: window must be positive");
        require(signal_dim >= 1, "AccHistory: signal dimension must be positive");
    }

    // Record acc_t for the next time index; keeps only the last L entries.
    void push(const Vec& w_hat) {
        require(w_hat.size() == zero_.size(), "AccHistory: entry dimension mismatch");
        ring_.push_back(w_hat);
        if (static_cast<int>(ring_.size()) > window_) ring_.pop_front();
        ++count_;
    }

    // acc_{t-i} for lag i = 1..L, where t is the number of entries pushed.
    const Vec& lag(std::int64_t i) const {
        require(i >= 1 && i <= window_, "AccHistory: lag out of range");
        const std::int64_t idx = count_ - i;  // global time index of the requested entry
        if (idx < 0) return zero_;
        return ring_[ring_.size() - static_cast<std::size_t>(i)];
    }

    int window() const { return window_; }
    std::int64_t count() const { return count_; }

private:
    int window_;
    Vec zero_;
    std::deque<Vec> ring_;
    std::int64_t count_ = 0;
};

}  // namespace adaclab
