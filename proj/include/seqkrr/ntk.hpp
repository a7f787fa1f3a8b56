#pragma once

#include <Eigen/Dense>

#include "seqkrr/errors.hpp"

namespace seqkrr {

/// Architecture of the fully connected ReLU network whose infinite-width
/// NTK we evaluate. `depth` counts affine layers (depth=1 is a single
/// affine map, i.e. a linear kernel).
struct KernelParams {
    int depth = 3;
    double sigma_w_sq = 2.0;
    double sigma_b_sq = 0.0;
    int input_dim = 10;

    void validate() const;
};

/// Evaluate the deep ReLU NTK at a cosine z = x.x' for unit-norm inputs,
/// via the arc-cosine recursion. Inputs within 1e-12 of +-1 are clamped;
/// anything further out is a domain error.
double ntk_eval(const KernelParams& params, double z);

/// A positive-definite kernel on the unit sphere that depends on its two
/// arguments only through z = x.x'. Covers the deep ReLU NTK plus the
/// monomial fixtures z^degree used by the spectral pipeline tests.
class DotProductKernel {
public:
    /// Defaults to the linear kernel Theta(z) = z on S^1.
    DotProductKernel() : kind_(Kind::Monomial), degree_(1), input_dim_(2), theta1_(1.0) {}

    static DotProductKernel relu_ntk(const KernelParams& params);
    /// Theta(z) = z^degree (degree 0 gives the constant kernel).
    static DotProductKernel monomial(int degree, int input_dim);

    double operator()(double z) const;

    /// Elementwise kernel map applied in place to a matrix of cosines.
    /// Values are clamped to [-1, 1]; callers are expected to have produced
    /// them as dot products of (approximately) unit-norm rows.
    void apply(Eigen::Ref<Eigen::MatrixXd> z) const;

    double theta1() const { return theta1_; }
    int input_dim() const { return input_dim_; }
    bool is_ntk() const { return kind_ == Kind::Ntk; }
    const KernelParams& params() const { return params_; }
    int monomial_degree() const { return degree_; }

private:
    enum class Kind { Ntk, Monomial };

    Kind kind_ = Kind::Ntk;
    KernelParams params_{};
    int degree_ = 1;
    int input_dim_ = 10;
    double theta1_ = 0.0;
};

/// Cross-Gram matrix, entry (i,j) = Theta(X.row(i) . Xp.row(j)).
/// Rows must be unit norm within 1e-9.
Eigen::MatrixXd gram_matrix(const DotProductKernel& kernel,
                            const Eigen::Ref<const Eigen::MatrixXd>& X,
                            const Eigen::Ref<const Eigen::MatrixXd>& Xp);

/// Symmetric Gram matrix over one point set.
Eigen::MatrixXd gram_matrix(const DotProductKernel& kernel,
                            const Eigen::Ref<const Eigen::MatrixXd>& X);

}  // namespace seqkrr
