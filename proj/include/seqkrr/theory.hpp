#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqkrr/spectrum.hpp"

namespace seqkrr {

/// Solution of the ridge-less self-consistency at sample size N:
///   1 = sum_k mult_k eta_k / (kappa + N eta_k),
///   gamma = sum_k mult_k N eta_k^2 / (kappa + N eta_k)^2,
///   q_k = kappa / (kappa + N eta_k),   q~_k = eta_k q_k^2.
/// All mode sums are degeneracy-weighted per level.
struct SelfConsistency {
    double sample_size = 0;
    double kappa = 0.0;
    double gamma = 0.0;
    std::vector<double> q;
    std::vector<double> q_tilde;
};

/// Bisection on the strictly decreasing defining equation, 1e-12 relative.
/// Requires more positive modes than samples (ridge-less regime); otherwise
/// throws ModeDeficitError.
SelfConsistency solve_kappa(const Spectrum& spectrum, std::int64_t N);

/// Task-pair target statistics. Default is the Gaussian ensemble
///   <w_k^2> = eta_k,  <w_{A,k} w_{B,k}> = rho eta_k;
/// explicit per-level coefficients override the ensemble second moments.
struct TargetEnsemble {
    double rho = 1.0;
    double sigma_sq = 0.0;
    std::optional<std::vector<double>> coeffs;  // explicit w per level

    static TargetEnsemble gaussian(double rho, double sigma_sq) {
        return {rho, sigma_sq, std::nullopt};
    }
    static TargetEnsemble explicit_coeffs(std::vector<double> w, double sigma_sq) {
        return {1.0, sigma_sq, std::move(w)};
    }
};

/// Single-task generalization error:
///   E1 = (1/(1-gamma)) sum_k mult_k eta_k <w_k^2> q_k^2 + gamma sigma^2/(1-gamma).
double e_single(const SelfConsistency& sc, const Spectrum& spectrum,
                const TargetEnsemble& target);

/// Replica cost for arbitrary per-level weights phi and shifts u over a
/// single-task posterior (degeneracy-weighted form of the general lemma).
double lemma2_cost(const SelfConsistency& sc_A, const Spectrum& spectrum,
                   const std::vector<double>& w_A, const std::vector<double>& u,
                   const std::vector<double>& phi, double sigma_sq);

/// Forward transfer error E_{A->B}(rho) with the full noise term.
double e_transfer(const Spectrum& spectrum, std::int64_t N_A, std::int64_t N_B,
                  double rho, double sigma_sq);

/// Backward transfer error E^back_{A->B}(rho); at rho=1 identical to
/// e_transfer by construction.
double e_backward(const Spectrum& spectrum, std::int64_t N_A, std::int64_t N_B,
                  double rho, double sigma_sq);

/// Critical similarity rho* = sqrt(gamma_A)/(1+sqrt(gamma_A)); transfer is
/// negative for all rho below it, for any sample sizes.
double critical_similarity(const Spectrum& spectrum, std::int64_t N_A);

/// Model-average error (noise-less only); general per-level coefficients
/// supported, ensemble moments by default:
///   E_ave = (1/4) sum_k mult_k eta_k <((1-q_A)w_A - (1+q_B)w_B)^2>
///           + (gamma_A/4) E_A + (gamma_B/4) E_B.
double e_average(const Spectrum& spectrum, std::int64_t N_A, std::int64_t N_B, double rho,
                 double sigma_sq = 0.0,
                 const std::optional<std::pair<std::vector<double>, std::vector<double>>>&
                     coeff_pair = std::nullopt);

struct LearningCurveResult {
    /// errors[t-1] = generalization error after t tasks (t = 1..K).
    std::vector<double> errors;
    /// noise_multipliers[t-1] = R_t; error = signal + R_t sigma^2.
    std::vector<double> noise_multipliers;
    /// Infinite-norm bound on the per-task contraction for equal sizes,
    /// max_k (1 + N eta_k / kappa) q_k^2; NaN for unequal sizes.
    double q_norm_bound = 0.0;
};

/// K-task curve via the per-level vector recursion (general unequal sizes);
/// never materializes the mode-space matrix power.
LearningCurveResult learning_curve(const Spectrum& spectrum,
                                   const std::vector<std::int64_t>& sizes, double sigma_sq);

struct AsymptoticRatios {
    double forward_ratio = 0.0;          // 2(1-rho)
    double self_negative_ratio = 0.0;    // 1/(1-gamma_A)
    double self_forgetting_ratio = 0.0;  // 1/(1-gamma_B)
};

AsymptoticRatios asymptotic_ratios(const Spectrum& spectrum, std::int64_t N_A,
                                   std::int64_t N_B, double rho);

/// One theory-table row; serialized as label,N_A,N_B,n,rho,sigma_sq,value.
struct CurvePoint {
    std::string label;  // E1 | E_AB | E_AB_back | E_ave | E_n
    double N_A = 0, N_B = 0;
    int n = 0;
    double rho = 1.0, sigma_sq = 0.0;
    double value = 0.0;
};

void save_curve_points_csv(const std::vector<CurvePoint>& points, const std::string& path);

}  // namespace seqkrr
