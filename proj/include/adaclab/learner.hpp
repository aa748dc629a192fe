#pragma once

#include "adaclab/common.hpp"
#include "adaclab/controller.hpp"
#include "adaclab/hankel.hpp"
#include "adaclab/lti.hpp"

#include <memory>

namespace adaclab {

// ============================================================================
// Affine sensitivity of the counterfactual rollout.
//
// The window recursion behind pi_traj is linear in the controller blocks, so
// the counterfactual state unrolls into an impulse form
//
//   x~_t(M) = sum_{g=0}^{t-start-1} F[g] u~_{t-g}(M) + acc_{t-1},
//   u~_s(M) = sum_i M^(i) acc_{s-i},
//
// where F[0] = H0, and for lag g >= 1 with level k = ceil(g/(L-1)) and block
// offset b = k(L-1) - g:  F[g] = H2^{k-1} H1[:, block b] (+ H2^k H0 at b = 0).
// Evaluating the map and contracting its adjoint against cost gradients gives
// exact surrogate values and gradients in O(t) per step.
// ============================================================================

struct SensitivityMap {
    std::int64_t t = 0;      // step the map was built for
    std::int64_t start = 0;  // first unmasked history index (truncation; 0 = full)
    int m = 0, q = 0;
    const std::vector<Vec>* w_hist = nullptr;         // borrowed: acc_0..acc_{t-1}
    std::shared_ptr<const std::vector<Mat>> table;    // impulse coefficients F[g], q x m
    std::int64_t lags = 0;                            // number of table entries in play
    Vec offset;                                       // acc_{t-1} (zero at t = 0)

    // acc_k with the truncation mask applied.
    const double* acc_ptr(std::int64_t k) const {
        if (k < start || k >= t) return nullptr;
        return (*w_hist)[static_cast<std::size_t>(k)].data();
    }

    // u_t(M) = sum_i M^(i) acc_{t-i}.
    Vec input(const AdacParams& params) const {
        Vec u = Vec::Zero(m);
        accumulate_input(params, t, u.data());
        return u;
    }

    // x~_t(M) through the impulse form.
    Vec state(const AdacParams& params) const {
        Vec x = offset;
        if (lags == 0) return x;
        Vec u(m);
        double* ud = u.data();
        double* xd = x.data();
        for (std::int64_t g = 0; g < lags; ++g) {
            for (int r = 0; r < m; ++r) ud[r] = 0.0;
            if (!accumulate_input(params, t - g, ud)) continue;
            const double* f = (*table)[static_cast<std::size_t>(g)].data();  // q x m col-major
            for (int c = 0; c < m; ++c) {
                const double uc = ud[c];
                if (uc == 0.0) continue;
                for (int r = 0; r < q; ++r) xd[r] += f[c * q + r] * uc;
            }
        }
        return x;
    }

    // Gradient blocks of M -> c(u_t(M), x~_t(M)) given the cost gradients at
    // the evaluation point: grad_i = g_u acc_{t-i}^T + sum_g (F[g]^T g_x) acc_{t-g-i}^T.
    std::vector<Mat> contract(const Vec& g_u, const Vec& g_x, int lag_count) const {
        require(g_u.size() == m && g_x.size() == q, "SensitivityMap::contract: gradient dimension mismatch");
        std::vector<Mat> grad(static_cast<std::size_t>(lag_count), Mat::Zero(m, q));
        for (int i = 1; i <= lag_count; ++i) {
            const double* wk = acc_ptr(t - i);
            if (!wk) continue;
            double* gd = grad[static_cast<std::size_t>(i - 1)].data();
            for (int c = 0; c < q; ++c)
                for (int r = 0; r < m; ++r) gd[c * m + r] += g_u(r) * wk[c];
        }
        Vec psi(m);
        double* pd = psi.data();
        const double* gx = g_x.data();
        for (std::int64_t g = 0; g < lags; ++g) {
            const double* f = (*table)[static_cast<std::size_t>(g)].data();
            for (int c = 0; c < m; ++c) {
                double acc = 0.0;
                for (int r = 0; r < q; ++r) acc += f[c * q + r] * gx[r];
                pd[c] = acc;
            }
            const std::int64_t s = t - g;  // gradient of u~_s flows into every block
            for (int i = 1; i <= lag_count; ++i) {
                const double* wk = acc_ptr(s - i);
                if (!wk) continue;
                double* gd = grad[static_cast<std::size_t>(i - 1)].data();
                for (int c = 0; c < q; ++c) {
                    const double wc = wk[c];
                    for (int r = 0; r < m; ++r) gd[c * m + r] += pd[r] * wc;
                }
            }
        }
        return grad;
    }

    // Explicit affine coefficient of vec(M^(i)) in x~_t(M) (column-major vec);
    // test-facing materialization of the map.
    Mat state_block_coefficient(int lag_index) const {
        Mat coef = Mat::Zero(q, static_cast<Eigen::Index>(m) * q);
        for (std::int64_t g = 0; g < lags; ++g) {
            const double* wk = acc_ptr(t - g - lag_index);
            if (!wk) continue;
            const Mat& f = (*table)[static_cast<std::size_t>(g)];
            for (int c = 0; c < q; ++c) coef.middleCols(static_cast<Eigen::Index>(c) * m, m) += wk[c] * f;
        }
        return coef;
    }

private:
    // out += sum_i M^(i) acc_{s-i}; returns false when every lag was masked.
    bool accumulate_input(const AdacParams& params, std::int64_t s, double* out) const {
        bool any = false;
        for (int i = 1; i <= params.lag_count; ++i) {
            const double* wk = acc_ptr(s - i);
            if (!wk) continue;
            any = true;
            const double* bd = params.blocks[static_cast<std::size_t>(i - 1)].data();  // m x q col-major
            for (int c = 0; c < q; ++c) {
                const double wc = wk[c];
                if (wc == 0.0) continue;
                for (int r = 0; r < m; ++r) out[r] += bd[c * m + r] * wc;
            }
        }
        return any;
    }
};

// Builds sensitivity maps for successive steps, growing the impulse table once
// per run instead of once per step.
class SensitivityBuilder {
public:
    explicit SensitivityBuilder(const HankelPair& h, std::int64_t history_window = 0)
        : lstep_(h.lstep()), window_(history_window), table_(std::make_shared<std::vector<Mat>>()) {
        theta_ = lstep_.h1;
        theta0_ = lstep_.h0;
    }

    SensitivityMap at(const std::vector<Vec>& w_hist, std::int64_t t) {
        require(static_cast<std::int64_t>(w_hist.size()) >= t, "SensitivityBuilder: history shorter than t");
        SensitivityMap map;
        map.t = t;
        map.start = window_ > 0 ? std::max<std::int64_t>(0, t - window_) : 0;
        map.m = lstep_.input_dim;
        map.q = lstep_.signal_dim;
        map.w_hist = &w_hist;
        map.lags = std::max<std::int64_t>(0, t - map.start);
        extend_table(map.lags);
        map.table = table_;
        map.offset = t >= 1 ? w_hist[static_cast<std::size_t>(t - 1)] : Vec::Zero(lstep_.signal_dim);
        return map;
    }

private:
    void extend_table(std::int64_t lags_needed) {
        const int lw = lstep_.window;
        while (static_cast<std::int64_t>(table_->size()) < lags_needed) {
            const auto g = static_cast<std::int64_t>(table_->size());
            if (g == 0) {
                table_->push_back(lstep_.h0);
                continue;
            }
            const std::int64_t k = (g - 1) / (lw - 1) + 1;
            const std::int64_t b = k * (lw - 1) - g;
            if (k > level_) {
                theta_ = lstep_.h2 * theta_;
                theta0_ = lstep_.h2 * theta0_;
                ++level_;
            }
            Mat f = theta_.middleCols(b * lstep_.input_dim, lstep_.input_dim);
            if (b == 0) f += lstep_.h2 * theta0_;
            table_->push_back(std::move(f));
        }
    }

    LStepModel lstep_;
    std::int64_t window_;
    std::shared_ptr<std::vector<Mat>> table_;
    Mat theta_, theta0_;
    std::int64_t level_ = 1;
};

// One-shot construction of the affine map for step t.
inline SensitivityMap build_sensitivity(const std::vector<Vec>& w_hist, const HankelPair& h, std::int64_t t,
                                        std::int64_t history_window = 0) {
    SensitivityBuilder builder(h, history_window);
    return builder.at(w_hist, t);
}

// ============================================================================
// Surrogate loss and online gradient descent
// ============================================================================

struct SurrogateEval {
    Vec u;                   // u_t(M)
    Vec state;               // x~_t(M)
    double value = 0.0;      // c_t(u_t(M), x~_t(M))
    std::vector<Mat> grad;   // exact gradient blocks
};

// Exact evaluation of the surrogate f_t(M) = c_t(u_t(M), x~_t(M)); the chain
// rule flows through both cost arguments.
inline SurrogateEval evaluate_surrogate(const AdacParams& params, const SensitivityMap& s, const CostOracle& cost,
                                        std::int64_t t) {
    SurrogateEval out;
    out.u = s.input(params);
    out.state = s.state(params);
    out.value = cost.value(t, out.u, out.state);
    const auto [g_u, g_x] = cost.gradient(t, out.u, out.state);
    out.grad = s.contract(g_u, g_x, params.lag_count);
    return out;
}

inline std::vector<Mat> grad_f(const AdacParams& params, const SensitivityMap& s, const CostOracle& cost,
                               std::int64_t t) {
    return evaluate_surrogate(params, s, cost, t).grad;
}

// Projected gradient step M <- Proj(M - lambda grad).
inline AdacParams ogd_step(const AdacParams& params, const std::vector<Mat>& grad, double lambda) {
    require(grad.size() == params.blocks.size(), "ogd_step: gradient block count mismatch");
    AdacParams next = params;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        require(grad[i].rows() == params.blocks[i].rows() && grad[i].cols() == params.blocks[i].cols(),
                "ogd_step: gradient block shape mismatch");
        next.blocks[i] -= lambda * grad[i];
    }
    return project_M(next);
}

}  // namespace adaclab
