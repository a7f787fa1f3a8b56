#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seqkrr/ntk.hpp"

namespace seqkrr {

/// Gauss rule for the measure dtau(z) = (1-z^2)^((d-3)/2) dz on [-1,1].
struct QuadratureRule {
    int order = 0;
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;

    double weight_sum() const { return weights.sum(); }
};

/// Nodes/weights via the symmetric-tridiagonal (recurrence-coefficient)
/// eigen method for the ultraspherical weight with alpha = (d-3)/2.
QuadratureRule build_quadrature(int d, int r);

/// Dimension of the degree-k spherical-harmonic space on S^{d-1}:
/// N(d,k) = (2k+d-2) Gamma(k+d-2) / (Gamma(k+1) Gamma(d-1)), N(d,0) = 1.
double sphere_multiplicity(int d, int k);

/// Gegenbauer polynomials normalized to P_k(1) = 1, evaluated at z for
/// k = 0..k_max (three-term recurrence; raw C_k^alpha would overflow).
void gegenbauer_normalized(int k_max, int d, double z, std::vector<double>& out);

struct SpectrumLevel {
    int k = 0;
    double eta = 0.0;
    double mult = 1.0;
};

/// Mercer eigenvalues of a dot-product kernel on S^{d-1}, one entry per
/// degree level; level k carries mult = N(d,k) degenerate modes. Level 0
/// is zeroed after decomposition (eta0 is reported separately).
struct Spectrum {
    int dim = 0;  // ambient dimension d; 0 when loaded from CSV without context
    std::vector<SpectrumLevel> levels;

    int k_max() const { return levels.empty() ? -1 : levels.back().k; }
    double trace() const;
    double max_eta() const;
    /// Total multiplicity of levels with eta > 0.
    double positive_modes() const;
    void validate() const;
};

struct DecomposeResult {
    Spectrum spectrum;
    double eta0_raw = 0.0;              // level-0 eigenvalue before zeroing
    double trace_before_zeroing = 0.0;  // sum_{k<=k_max} mult_k eta_k including level 0
    double theta1 = 0.0;
    double max_recon_rel_err = 0.0;     // vs Theta at nodes, pre-zeroing, / Theta(1)
    double tail_mass = 0.0;             // unresolved trace parked at level k_max+1
};

/// Project the kernel on the first k_max+1 Gegenbauer levels with the given
/// rule. Self-normalizing estimator:
///   eta_k = (1/N(d,k)) * [sum_j w_j Theta(z_j) P_k(z_j)] / [sum_j w_j P_k(z_j)^2].
/// Requires r >= max(4*k_max, 64). Trace must match Theta(1) within 5%
/// before zeroing, else a spectral-resolution error is raised.
DecomposeResult decompose(const DotProductKernel& kernel, int d, int k_max,
                          const QuadratureRule& rule);

/// CSV schema: header "k,eta,mult", one row per level, full precision.
void save_spectrum_csv(const Spectrum& spectrum, const std::string& path);
Spectrum load_spectrum_csv(const std::string& path);

}  // namespace seqkrr
