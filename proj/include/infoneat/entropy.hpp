#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "infoneat/errors.hpp"

namespace infoneat {

// Trace-normalized kernel Gram matrix: symmetric, positive semidefinite,
// unit trace, diagonal 1/n. The substrate of every entropy estimate here.
struct GramMatrix {
    Eigen::MatrixXd data;

    int size() const { return static_cast<int>(data.rows()); }
};

struct KernelSpec {
    enum class Kind { gaussian, partition };

    Kind kind = Kind::gaussian;
    // Gaussian width; ignored for partition kernels. A non-positive value is
    // the "resolve per column via the median pairwise distance" request and
    // is only honored by activation_gram; gram_matrix itself rejects it.
    double bandwidth = 1.0;

    static KernelSpec partition() { return {Kind::partition, 0.0}; }
    static KernelSpec gaussian(double sigma) { return {Kind::gaussian, sigma}; }
    static KernelSpec gaussian_auto() { return {Kind::gaussian, -1.0}; }
};

struct EntropyValue {
    double bits = 0.0;
};

namespace detail {

constexpr double eig_negative_floor = -1e-9;
constexpr double entropy_noise_floor = -1e-6;

inline Eigen::MatrixXd trace_normalized(Eigen::MatrixXd m) {
    const double tr = m.trace();
    if (!(tr > 0.0) || !std::isfinite(tr)) {
        throw NumericError("Gram product has non-positive trace; cannot renormalize");
    }
    m /= tr;
    return m;
}

}  // namespace detail

// Builds the normalized matrix A_ij = K_ij / (n * sqrt(K_ii * K_jj)) from raw
// kernel evaluations. Partition kernels compare samples for exact equality;
// Gaussian kernels use exp(-|xi - xj|^2 / (2 sigma^2)).
inline GramMatrix gram_matrix(const Eigen::MatrixXd& samples, const KernelSpec& kernel) {
    const int n = static_cast<int>(samples.rows());
    if (n < 2) throw SizeError("gram_matrix needs at least 2 samples, got " + std::to_string(n));
    if (!samples.allFinite()) throw InputError("gram_matrix: non-finite sample entries");

    Eigen::MatrixXd a(n, n);
    if (kernel.kind == KernelSpec::Kind::partition) {
        const double inv_n = 1.0 / n;
        for (int i = 0; i < n; ++i) {
            a(i, i) = inv_n;
            for (int j = i + 1; j < n; ++j) {
                const double v = (samples.row(i) == samples.row(j)) ? inv_n : 0.0;
                a(i, j) = v;
                a(j, i) = v;
            }
        }
    } else {
        if (!(kernel.bandwidth > 0.0)) {
            throw InputError("gram_matrix: gaussian bandwidth must be positive");
        }
        const double scale = -0.5 / (kernel.bandwidth * kernel.bandwidth);
        const double inv_n = 1.0 / n;
        for (int i = 0; i < n; ++i) {
            a(i, i) = inv_n;  // exp(0) / n; K_ii = 1 for the Gaussian kernel
            for (int j = i + 1; j < n; ++j) {
                const double d2 = (samples.row(i) - samples.row(j)).squaredNorm();
                const double v = std::exp(scale * d2) * inv_n;
                a(i, j) = v;
                a(j, i) = v;
            }
        }
    }
    return GramMatrix{std::move(a)};
}

// Spectrum of a unit-trace Gram matrix with round-off eigenvalues clamped
// into [0, 1]. Values below the -1e-9 floor indicate genuinely invalid input.
inline std::vector<double> gram_eigenvalues(const Eigen::MatrixXd& unit_trace) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.compute(unit_trace, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw NumericError("eigendecomposition failed on a Gram matrix");
    }
    std::vector<double> lambda(solver.eigenvalues().data(),
                               solver.eigenvalues().data() + solver.eigenvalues().size());
    for (double& v : lambda) {
        if (v < detail::eig_negative_floor) {
            throw NumericError("Gram matrix is not positive semidefinite (eigenvalue " +
                               std::to_string(v) + ")");
        }
        v = std::clamp(v, 0.0, 1.0);
    }
    return lambda;
}

inline std::vector<double> gram_eigenvalues(const GramMatrix& a) {
    return gram_eigenvalues(a.data);
}

namespace detail {

inline double spectral_entropy_bits(const Eigen::MatrixXd& unit_trace, double alpha) {
    const std::vector<double> lambda = gram_eigenvalues(unit_trace);
    double sum = 0.0;
    for (double v : lambda) {
        if (v > 0.0) sum += std::pow(v, alpha);
    }
    if (!(sum > 0.0)) throw NumericError("degenerate spectrum: sum of lambda^alpha is zero");
    double bits = std::log2(sum) / (1.0 - alpha);
    if (bits < 0.0 && bits > entropy_noise_floor) bits = 0.0;
    return bits;
}

inline void check_alpha(double alpha) {
    if (!(alpha > 0.0) || alpha == 1.0) {
        throw InputError("entropy order alpha must be positive and != 1");
    }
}

}  // namespace detail

// S_alpha(A) = log2(sum_i lambda_i^alpha) / (1 - alpha).
inline EntropyValue renyi_entropy(const GramMatrix& a, double alpha = 1.01) {
    detail::check_alpha(alpha);
    return EntropyValue{detail::spectral_entropy_bits(a.data, alpha)};
}

// Joint entropy of k variables: S_alpha of the Hadamard product of their
// Gram matrices, renormalized to unit trace.
inline EntropyValue joint_entropy(std::span<const GramMatrix> mats, double alpha = 1.01) {
    detail::check_alpha(alpha);
    if (mats.empty()) throw InputError("joint_entropy: empty matrix list");
    const int n = mats[0].size();
    Eigen::MatrixXd prod = mats[0].data;
    for (std::size_t i = 1; i < mats.size(); ++i) {
        if (mats[i].size() != n) throw InputError("joint_entropy: Gram matrix size mismatch");
        prod = prod.cwiseProduct(mats[i].data);
    }
    return EntropyValue{detail::spectral_entropy_bits(detail::trace_normalized(std::move(prod)), alpha)};
}

inline EntropyValue joint_entropy(std::initializer_list<std::reference_wrapper<const GramMatrix>> mats,
                                  double alpha = 1.01) {
    std::vector<GramMatrix> copy;
    copy.reserve(mats.size());
    for (const auto& m : mats) copy.push_back(m.get());
    return joint_entropy(std::span<const GramMatrix>(copy), alpha);
}

// Conditional mutual information I(C; B | A) via the four-term combination
//   S(A.C) + S(A.B) - S(A) - S(A.B.C)
// where "." is the Hadamard product followed by trace renormalization.
// Small negative results (above -1e-6) are round-off and floored to zero.
inline double cmi(std::span<const GramMatrix> c_set, const GramMatrix& b,
                  std::span<const GramMatrix> a_set, double alpha = 1.01) {
    detail::check_alpha(alpha);
    if (c_set.empty() || a_set.empty()) throw InputError("cmi: C and A sets must be nonempty");
    const int n = b.size();
    auto product_of = [n](std::span<const GramMatrix> mats, const Eigen::MatrixXd* init) {
        Eigen::MatrixXd prod;
        bool started = false;
        if (init) {
            prod = *init;
            started = true;
        }
        for (const GramMatrix& m : mats) {
            if (m.size() != n) throw InputError("cmi: Gram matrix size mismatch");
            if (!started) {
                prod = m.data;
                started = true;
            } else {
                prod = prod.cwiseProduct(m.data);
            }
        }
        return prod;
    };

    const Eigen::MatrixXd a_prod = product_of(a_set, nullptr);
    const Eigen::MatrixXd ac = product_of(c_set, &a_prod);
    const Eigen::MatrixXd ab = a_prod.cwiseProduct(b.data);
    const Eigen::MatrixXd abc = product_of(c_set, &ab);

    const double s_ac = detail::spectral_entropy_bits(detail::trace_normalized(ac), alpha);
    const double s_ab = detail::spectral_entropy_bits(detail::trace_normalized(ab), alpha);
    const double s_a = detail::spectral_entropy_bits(detail::trace_normalized(a_prod), alpha);
    const double s_abc = detail::spectral_entropy_bits(detail::trace_normalized(abc), alpha);

    double value = s_ac + s_ab - s_a - s_abc;
    if (value < 0.0 && value > detail::entropy_noise_floor) value = 0.0;
    return value;
}

// Median of all pairwise absolute differences in a column; the stock
// bandwidth heuristic for continuous one-dimensional activations.
inline double median_pairwise_distance(const Eigen::VectorXd& column) {
    const int n = static_cast<int>(column.size());
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            dist.push_back(std::abs(column[i] - column[j]));
        }
    }
    if (dist.empty()) return 0.0;
    const std::size_t mid = dist.size() / 2;
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
    return dist[mid];
}

// One Gram matrix per unit column of a layer's activations, ready to act as
// the A or C set of cmi(). Gaussian bandwidth <= 0 selects the per-column
// median heuristic (falling back to 1.0 for near-constant columns).
inline std::vector<GramMatrix> activation_gram(const Eigen::MatrixXd& activations,
                                               const KernelSpec& kernel = KernelSpec::gaussian_auto()) {
    const int units = static_cast<int>(activations.cols());
    if (units < 1) throw InputError("activation_gram: need at least one unit column");
    std::vector<GramMatrix> grams;
    grams.reserve(static_cast<std::size_t>(units));
    for (int u = 0; u < units; ++u) {
        const Eigen::MatrixXd col = activations.col(u);
        KernelSpec resolved = kernel;
        if (kernel.kind == KernelSpec::Kind::gaussian && !(kernel.bandwidth > 0.0)) {
            const double med = median_pairwise_distance(col.col(0));
            resolved.bandwidth = med > 0.0 ? med : 1.0;
        }
        grams.push_back(gram_matrix(col, resolved));
    }
    return grams;
}

// Class labels enter the CMI as one partition Gram matrix: two samples are
// kernel-equal exactly when their one-hot label rows coincide.
inline GramMatrix label_gram(std::span<const int> labels) {
    const int n = static_cast<int>(labels.size());
    Eigen::MatrixXd col(n, 1);
    for (int i = 0; i < n; ++i) col(i, 0) = static_cast<double>(labels[i]);
    return gram_matrix(col, KernelSpec::partition());
}

inline GramMatrix label_gram(std::span<const std::uint8_t> labels) {
    std::vector<int> widened(labels.begin(), labels.end());
    return label_gram(std::span<const int>(widened));
}

// Invariant audit used by tests and loaders: symmetry, 1/n diagonal, unit
// trace, PSD spectrum.
inline void validate_gram(const GramMatrix& a) {
    const int n = a.size();
    if (n < 2 || a.data.cols() != n) throw SizeError("gram matrix must be square, n >= 2");
    const double inv_n = 1.0 / n;
    for (int i = 0; i < n; ++i) {
        if (std::abs(a.data(i, i) - inv_n) > 1e-12) {
            throw NumericError("gram diagonal entry differs from 1/n");
        }
        for (int j = i + 1; j < n; ++j) {
            if (std::abs(a.data(i, j) - a.data(j, i)) > 1e-12) {
                throw NumericError("gram matrix is not symmetric");
            }
        }
    }
    if (std::abs(a.data.trace() - 1.0) > 1e-9) throw NumericError("gram trace differs from 1");
    gram_eigenvalues(a);  // throws below the PSD floor
}

}  // namespace infoneat
