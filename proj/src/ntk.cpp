#include "seqkrr/ntk.hpp"

#include <cmath>
#include <string>

namespace seqkrr {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// One arc-cosine step for the covariance of a ReLU layer:
// given c = Sigma(z)/Sigma(1), returns the angular factors
//   J1(c) = (sqrt(1-c^2) + (pi - acos c) * c) / (2 pi)   (for Sigma)
//   J0(c) = (pi - acos c) / (2 pi)                        (for Sigma-dot)
inline void arccos_factors(double c, double& j1, double& j0) {
    c = std::clamp(c, -1.0, 1.0);
    const double th = std::acos(c);
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    j1 = (s + (M_PI - th) * c) / kTwoPi;
    j0 = (M_PI - th) / kTwoPi;
}

}  // namespace

void KernelParams::validate() const {
    if (depth < 1) throw ConfigError("KernelParams: depth L must be >= 1");
    if (!(sigma_w_sq > 0.0)) throw ConfigError("KernelParams: sigma_w_sq must be > 0");
    if (sigma_b_sq < 0.0) throw ConfigError("KernelParams: sigma_b_sq must be >= 0");
    if (input_dim < 2) throw ConfigError("KernelParams: input_dim D must be >= 2");
}

double ntk_eval(const KernelParams& params, double z) {
    params.validate();
    if (std::abs(z) > 1.0 + 1e-12)
        throw ConfigError("ntk_eval: |z| exceeds 1 beyond tolerance, z=" + std::to_string(z));
    z = std::clamp(z, -1.0, 1.0);

    // First affine layer with the 1/D scaling folded into unit-norm inputs.
    double sig = params.sigma_w_sq * z + params.sigma_b_sq;
    double sig1 = params.sigma_w_sq + params.sigma_b_sq;
    double theta = sig;
    for (int l = 1; l < params.depth; ++l) {
        if (sig1 == 0.0) throw ConfigError("ntk_eval: Sigma^l(1) vanished (degenerate parameters)");
        double j1, j0;
        arccos_factors(sig / sig1, j1, j0);
        const double sig_next = params.sigma_w_sq * sig1 * j1 + params.sigma_b_sq;
        const double sigdot_next = params.sigma_w_sq * j0;
        theta = sig_next + theta * sigdot_next;
        sig = sig_next;
        sig1 = params.sigma_w_sq * sig1 * 0.5 + params.sigma_b_sq;  // J1(1) = 1/2
    }
    return theta;
}

DotProductKernel DotProductKernel::relu_ntk(const KernelParams& params) {
    params.validate();
    DotProductKernel k;
    k.kind_ = Kind::Ntk;
    k.params_ = params;
    k.input_dim_ = params.input_dim;
    k.theta1_ = ntk_eval(params, 1.0);
    return k;
}

DotProductKernel DotProductKernel::monomial(int degree, int input_dim) {
    if (degree < 0) throw ConfigError("monomial kernel: degree must be >= 0");
    if (input_dim < 2) throw ConfigError("monomial kernel: input_dim must be >= 2");
    DotProductKernel k;
    k.kind_ = Kind::Monomial;
    k.degree_ = degree;
    k.input_dim_ = input_dim;
    k.theta1_ = 1.0;
    return k;
}

double DotProductKernel::operator()(double z) const {
    if (kind_ == Kind::Ntk) return ntk_eval(params_, z);
    if (std::abs(z) > 1.0 + 1e-12)
        throw ConfigError("kernel: |z| exceeds 1 beyond tolerance");
    return std::pow(std::clamp(z, -1.0, 1.0), degree_);
}

void DotProductKernel::apply(Eigen::Ref<Eigen::MatrixXd> z) const {
    auto a = z.array();
    a = a.cwiseMax(-1.0).cwiseMin(1.0);
    if (kind_ == Kind::Monomial) {
        if (degree_ == 0)
            a.setConstant(1.0);
        else if (degree_ > 1)
            a = a.pow(degree_);
        return;
    }
    const double sw2 = params_.sigma_w_sq, sb2 = params_.sigma_b_sq;
    Eigen::ArrayXXd sig = sw2 * a + sb2;
    double sig1 = sw2 + sb2;
    Eigen::ArrayXXd theta = sig;
    for (int l = 1; l < params_.depth; ++l) {
        Eigen::ArrayXXd c = (sig / sig1).cwiseMax(-1.0).cwiseMin(1.0);
        Eigen::ArrayXXd th = c.acos();
        Eigen::ArrayXXd j1 = ((1.0 - c.square()).cwiseMax(0.0).sqrt() + (M_PI - th) * c) / kTwoPi;
        sig = sw2 * sig1 * j1 + sb2;
        theta = sig + theta * (sw2 * (M_PI - th) / kTwoPi);
        sig1 = sw2 * sig1 * 0.5 + sb2;
    }
    a = theta;
}

namespace {

void check_unit_rows(const Eigen::Ref<const Eigen::MatrixXd>& X, const char* name) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        if (std::abs(X.row(i).norm() - 1.0) > 1e-9)
            throw ConfigError(std::string("gram_matrix: row ") + std::to_string(i) + " of " +
                              name + " is not unit norm");
    }
}

}  // namespace

Eigen::MatrixXd gram_matrix(const DotProductKernel& kernel,
                            const Eigen::Ref<const Eigen::MatrixXd>& X,
                            const Eigen::Ref<const Eigen::MatrixXd>& Xp) {
    if (X.cols() != Xp.cols())
        throw ConfigError("gram_matrix: dimension mismatch between point sets");
    check_unit_rows(X, "X");
    check_unit_rows(Xp, "X'");
    Eigen::MatrixXd z = X * Xp.transpose();
    kernel.apply(z);
    return z;
}

Eigen::MatrixXd gram_matrix(const DotProductKernel& kernel,
                            const Eigen::Ref<const Eigen::MatrixXd>& X) {
    check_unit_rows(X, "X");
    Eigen::MatrixXd z = X * X.transpose();
    kernel.apply(z);
    return z;
}

}  // namespace seqkrr
