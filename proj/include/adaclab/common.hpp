#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace adaclab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

// ============================================================================
// Error taxonomy
// ============================================================================

// Precondition / dimension-mismatch violations.
class ContractViolation : public std::invalid_argument {
public:
    explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// Stacked representation lost full row rank; caller should re-probe.
class SingularRepresentation : public std::runtime_error {
public:
    explicit SingularRepresentation(const std::string& what) : std::runtime_error(what) {}
};

// Stability certification failure (names the violating power).
class UnstableSystem : public std::runtime_error {
public:
    explicit UnstableSystem(const std::string& what) : std::runtime_error(what) {}
};

// Configuration rejected; message names the violated assumption.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Runtime numerical breakdown (divergence, exhausted retries, NaN).
class NumericalFailure : public std::runtime_error {
public:
    explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}

// ============================================================================
// Seed derivation
// ============================================================================

// splitmix64: cheap, well-mixed stream derivation from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 0x1234567811223344ULL));
}

// FNV-1a over a string; used to stamp traces with a config fingerprint.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// ============================================================================
// Small numeric helpers
// ============================================================================

inline double operator_norm(const Mat& a) {
    if (a.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Mat>(a).singularValues()(0);
}

// seq[idx] with zero padding for indices outside [0, size).
inline Vec at_or_zero(const std::vector<Vec>& seq, std::int64_t idx, Eigen::Index dim) {
    if (idx >= 0 && idx < static_cast<std::int64_t>(seq.size())) return seq[static_cast<std::size_t>(idx)];
    return Vec::Zero(dim);
}

// Stacked column [seq[from]; ...; seq[to]], zero-padded outside the sequence.
inline Vec stack_window(const std::vector<Vec>& seq, std::int64_t from, std::int64_t to, Eigen::Index dim) {
    require(to >= from, "stack_window: empty range");
    Vec out = Vec::Zero((to - from + 1) * dim);
    for (std::int64_t k = from; k <= to; ++k) {
        if (k >= 0 && k < static_cast<std::int64_t>(seq.size()))
            out.segment((k - from) * dim, dim) = seq[static_cast<std::size_t>(k)];
    }
    return out;
}

inline double median(std::vector<double> v) {
    require(!v.empty(), "median: empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Least-squares slope of y against x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "ls_slope: need >= 2 paired points");
    const double nn = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double denom = nn * sxx - sx * sx;
    require(std::abs(denom) > 1e-300, "ls_slope: degenerate abscissae");
    return (nn * sxy - sx * sy) / denom;
}

inline Vec random_unit_vector(int dim, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec v(dim);
    double norm2 = 0.0;
    do {
        for (int i = 0; i < dim; ++i) v(i) = gauss(rng);
        norm2 = v.squaredNorm();
    } while (norm2 < 1e-24);
    return v / std::sqrt(norm2);
}

}  // namespace adaclab
