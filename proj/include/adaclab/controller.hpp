#pragma once

#include "adaclab/common.hpp"
#include "adaclab/hankel.hpp"

namespace adaclab {

// ============================================================================
// Perturbation-based controller parameters: L blocks M^(1..L), each m x q,
// constrained to the product of operator-norm balls of radius D.
// ============================================================================

struct AdacParams {
    std::vector<Mat> blocks;  // blocks[i-1] = M^(i), m x q
    double bound = 1.0;       // per-block operator-norm radius D
    int lag_count = 0;        // L

    static AdacParams zeros(int lag_count, int input_dim, int signal_dim, double bound) {
        require(lag_count >= 1, "AdacParams: L must be positive");
        require(bound > 0.0, "AdacParams: D must be positive");
        AdacParams p;
        p.lag_count = lag_count;
        p.bound = bound;
        p.blocks.assign(static_cast<std::size_t>(lag_count), Mat::Zero(input_dim, signal_dim));
        return p;
    }

    int input_dim() const { return blocks.empty() ? 0 : static_cast<int>(blocks.front().rows()); }
    int signal_dim() const { return blocks.empty() ? 0 : static_cast<int>(blocks.front().cols()); }

    double max_block_norm() const {
        double worst = 0.0;
        for (const Mat& b : blocks) worst = std::max(worst, operator_norm(b));
        return worst;
    }

    bool feasible(double slack = 1e-12) const { return max_block_norm() <= bound * (1.0 + slack); }
};

// u_t = sum_i M^(i) acc_{t-i} over the reconstruction ring buffer.
inline Vec adac_control(const AdacParams& m, const AccHistory& hist) {
    require(hist.window() >= m.lag_count, "adac_control: history shorter than the controller lag count");
    Vec u = Vec::Zero(m.input_dim());
    for (int i = 1; i <= m.lag_count; ++i) u += m.blocks[static_cast<std::size_t>(i - 1)] * hist.lag(i);
    return u;
}

// Exact Euclidean projection onto the spectral-norm ball of radius D:
// singular values are clipped at D, everything else is untouched. Feasible
// blocks are returned bit-identical so the projection is exactly idempotent.
inline AdacParams project_M(const AdacParams& m) {
    AdacParams out = m;
    for (Mat& block : out.blocks) {
        if (block.size() == 0) continue;
        Eigen::JacobiSVD<Mat> svd(block, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Vec sv = svd.singularValues();
        if (sv(0) <= m.bound * (1.0 + 1e-12)) continue;
        for (Eigen::Index i = 0; i < sv.size(); ++i) sv(i) = std::min(sv(i), m.bound);
        block = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
    }
    return out;
}

// Model-aware baseline u_t = K x_t + sum_i M^(i) w_{t-i} on the raw disturbance
// history; benchmark use only (requires oracle access to the true w sequence).
inline Vec dac_control(const Mat& gain, const AdacParams& m, const Vec& x, const std::vector<Vec>& w_hist) {
    require(gain.cols() == x.size(), "dac_control: gain/state dimension mismatch");
    require(gain.rows() == m.input_dim(), "dac_control: gain/input dimension mismatch");
    Vec u = gain * x;
    const auto t = static_cast<std::int64_t>(w_hist.size());
    for (int i = 1; i <= m.lag_count; ++i) {
        const std::int64_t k = t - i;
        if (k >= 0) u += m.blocks[static_cast<std::size_t>(i - 1)] * w_hist[static_cast<std::size_t>(k)];
    }
    return u;
}

}  // namespace adaclab
