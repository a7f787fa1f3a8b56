#include "seqkrr/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unordered_map>

namespace seqkrr {

namespace {

double defining_residual(const Spectrum& s, double N, double kappa) {
    double g = 0.0;
    for (const auto& lv : s.levels) g += lv.mult * lv.eta / (kappa + N * lv.eta);
    return g - 1.0;
}

void check_levels(const Spectrum& s, const std::vector<double>& v, const char* name) {
    if (v.size() != s.levels.size())
        throw ConfigError(std::string("theory: ") + name + " length " + std::to_string(v.size()) +
                          " does not match spectrum level count " + std::to_string(s.levels.size()));
}

// Shared noise factor of Theorem 1:
//   (1/((1-gA)(1-gB))) (N_A/kappa_A^2) sum_k mult_k eta_k^2 q_A^2 q_B^2 + gB/(1-gB)
double transfer_noise_multiplier(const Spectrum& s, const SelfConsistency& A,
                                 const SelfConsistency& B) {
    double cross = 0.0;
    for (std::size_t k = 0; k < s.levels.size(); ++k) {
        const double eta = s.levels[k].eta;
        cross += s.levels[k].mult * eta * eta * A.q[k] * A.q[k] * B.q[k] * B.q[k];
    }
    return cross * A.sample_size / (A.kappa * A.kappa) / ((1.0 - A.gamma) * (1.0 - B.gamma)) +
           B.gamma / (1.0 - B.gamma);
}

}  // namespace

SelfConsistency solve_kappa(const Spectrum& spectrum, std::int64_t N) {
    spectrum.validate();
    if (N < 1) throw ConfigError("solve_kappa: N must be a positive integer");
    const double modes = spectrum.positive_modes();
    if (!(modes > static_cast<double>(N)))
        throw ModeDeficitError(
            "solve_kappa: ridge-less solution requires more positive modes than samples "
            "(positive modes = " + std::to_string(modes) + ", N = " + std::to_string(N) +
            "); add levels or reduce N");

    const double Nd = static_cast<double>(N);
    double hi = spectrum.trace();          // g(trace) < 0
    double lo = 1e-300;                    // g(0+) = positive_modes/N - 1 > 0
    // Log-space bisection: kappa spans many decades across spectra.
    for (int it = 0; it < 2000 && (hi - lo) > 1e-13 * hi; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (defining_residual(spectrum, Nd, mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }

    SelfConsistency sc;
    sc.sample_size = Nd;
    sc.kappa = std::sqrt(lo * hi);
    sc.gamma = 0.0;
    sc.q.resize(spectrum.levels.size());
    sc.q_tilde.resize(spectrum.levels.size());
    for (std::size_t k = 0; k < spectrum.levels.size(); ++k) {
        const double eta = spectrum.levels[k].eta;
        const double denom = sc.kappa + Nd * eta;
        sc.q[k] = sc.kappa / denom;
        sc.q_tilde[k] = eta * sc.q[k] * sc.q[k];
        sc.gamma += spectrum.levels[k].mult * Nd * eta * eta / (denom * denom);
    }
    return sc;
}

double e_single(const SelfConsistency& sc, const Spectrum& spectrum,
                const TargetEnsemble& target) {
    if (target.coeffs) check_levels(spectrum, *target.coeffs, "coeffs");
    double signal = 0.0;
    for (std::size_t k = 0; k < spectrum.levels.size(); ++k) {
        const double eta = spectrum.levels[k].eta;
        const double w2 = target.coeffs ? (*target.coeffs)[k] * (*target.coeffs)[k] : eta;
        signal += spectrum.levels[k].mult * eta * w2 * sc.q[k] * sc.q[k];
    }
    return signal / (1.0 - sc.gamma) + sc.gamma * target.sigma_sq / (1.0 - sc.gamma);
}

double lemma2_cost(const SelfConsistency& sc_A, const Spectrum& spectrum,
                   const std::vector<double>& w_A, const std::vector<double>& u,
                   const std::vector<double>& phi, double sigma_sq) {
    check_levels(spectrum, w_A, "w_A");
    check_levels(spectrum, u, "u");
    check_levels(spectrum, phi, "phi");
    for (double p : phi)
        if (p < 0.0) throw ConfigError("lemma2_cost: phi weights must be non-negative");

    double fitted = 0.0;  // sum_j mult_j eta_j w_{A,j}^2 q_{A,j}^2
    for (std::size_t j = 0; j < spectrum.levels.size(); ++j)
        fitted += spectrum.levels[j].mult * spectrum.levels[j].eta * w_A[j] * w_A[j] *
                  sc_A.q[j] * sc_A.q[j];
    const double amp = (fitted + sigma_sq) * sc_A.sample_size /
                       ((1.0 - sc_A.gamma) * sc_A.kappa * sc_A.kappa);

    double cost = 0.0;
    for (std::size_t k = 0; k < spectrum.levels.size(); ++k) {
        const double eta = spectrum.levels[k].eta;
        const double diff = w_A[k] - u[k];
        const double q = sc_A.q[k];
        const double bracket =
            diff * diff - 2.0 * w_A[k] * diff * q + (w_A[k] * w_A[k] + eta * amp) * q * q;
        cost += spectrum.levels[k].mult * phi[k] * bracket;
    }
    return cost;
}

double e_transfer(const Spectrum& spectrum, std::int64_t N_A, std::int64_t N_B,
                  double rho, double sigma_sq) {
    const SelfConsistency A = solve_kappa(spectrum, N_A);
    const SelfConsistency B = solve_kappa(spectrum, N_B);
    double value = 0.0;
    for (std::size_t k = 0; k < spectrum.levels.size(); ++k) {
        const double eta = spectrum.levels[k].eta;
        const double EBk = B.q[k] * B.q[k] * eta * eta / (1.0 - B.gamma);
        const double qA = A.q[k];
        value += spectrum.levels[k].mult *
                 (2.0 * (1.0 - rho) * (1.0 - qA) * EBk + qA * qA / (1.0 - A.gamma) * EBk);
    }
    return value + sigma_sq * transfer_noise_multiplier(spectrum, A, B);
}

double e_backward(const Spectrum& spectrum, std::int64_t N_A, std::int64_t N_B,
                  double rho, double sigma_sq) {
    const SelfConsistency A = solve_kappa(spectrum, N_A);
    const SelfConsistency B = solve_kappa(spectrum, N_B);
    double value = 0.0;
    for (std::size_t k = 0; k < spectrum.levels.size(); ++k) {
        const double eta = spectrum.levels[k].eta;
        const double EBk = B.q[k] * B.q[k] * eta * eta / (1.0 - B.gamma);
        const double qA = A.q[k], qB = B.q[k];
        // F_gamma_B(a,b) = b(a-2) + b^2 (1-a)/(1-gamma_B)
        const double F = qB * (qA - 2.0) + qB * qB * (1.0 - qA) / (1.0 - B.gamma);
        value += spectrum.levels[k].mult *
                 (2.0 * (1.0 - rho) * (1.0 + F) * eta * eta + qA * qA / (1.0 - A.gamma) * EBk);
    }
    return value + sigma_sq * transfer_noise_multiplier(spectrum, A, B);
}

double critical_similarity(const Spectrum& spectrum, std::int64_t N_A) {
    const SelfConsistency A = solve_kappa(spectrum, N_A);
    const double s = std::sqrt(A.gamma);
    return s / (1.0 + s);
}

double e_average(const Spectrum& spectrum, std::int64_t N_A, std::int64_t N_B, double rho,
                 double sigma_sq,
                 const std::optional<std::pair<std::vector<double>, std::vector<double>>>&
                     coeff_pair) {
    if (sigma_sq != 0.0)
        throw ConfigError("e_average: sigma_sq > 0 is unsupported (noise-less derivation only)");
    const SelfConsistency A = solve_kappa(spectrum, N_A);
    const SelfConsistency B = solve_kappa(spectrum, N_B);
    if (coeff_pair) {
        check_levels(spectrum, coeff_pair->first, "w_A");
        check_levels(spectrum, coeff_pair->second, "w_B");
    }

    double mismatch = 0.0;  // sum_k mult_k eta_k <((1-qA) wA - (1+qB) wB)^2>
    double EA = 0.0, EB = 0.0;
    for (std::size_t k = 0; k < spectrum.levels.size(); ++k) {
        const double eta = spectrum.levels[k].eta;
        const double mult = spectrum.levels[k].mult;
        const double a = 1.0 - A.q[k], b = 1.0 + B.q[k];
        double second;
        double wA2, wB2;
        if (coeff_pair) {
            const double wA = coeff_pair->first[k], wB = coeff_pair->second[k];
            const double diff = a * wA - b * wB;
            second = diff * diff;
            wA2 = wA * wA;
            wB2 = wB * wB;
        } else {
            second = eta * (a * a + b * b - 2.0 * rho * a * b);
            wA2 = eta;
            wB2 = eta;
        }
        mismatch += mult * eta * second;
        EA += mult * eta * wA2 * A.q[k] * A.q[k];
        EB += mult * eta * wB2 * B.q[k] * B.q[k];
    }
    EA /= (1.0 - A.gamma);
    EB /= (1.0 - B.gamma);
    return 0.25 * mismatch + 0.25 * A.gamma * EA + 0.25 * B.gamma * EB;
}

LearningCurveResult learning_curve(const Spectrum& spectrum,
                                   const std::vector<std::int64_t>& sizes, double sigma_sq) {
    if (sizes.empty()) throw ConfigError("learning_curve: at least one task size required");
    std::unordered_map<std::int64_t, SelfConsistency> cache;
    for (std::int64_t n : sizes)
        if (!cache.count(n)) cache.emplace(n, solve_kappa(spectrum, n));

    const std::size_t L = spectrum.levels.size();
    LearningCurveResult result;
    result.errors.reserve(sizes.size());
    result.noise_multipliers.reserve(sizes.size());

    for (std::size_t t = 1; t <= sizes.size(); ++t) {
        // Tasks 1..t; the recursion consumes them last-to-first.
        const SelfConsistency& last = cache.at(sizes[t - 1]);
        std::vector<double> phi(L);
        for (std::size_t k = 0; k < L; ++k)
            phi[k] = spectrum.levels[k].eta * last.q[k] * last.q[k] / (1.0 - last.gamma);
        double R = last.gamma / (1.0 - last.gamma);

        for (std::size_t m = 1; m < t; ++m) {
            const SelfConsistency& sc = cache.at(sizes[t - 1 - m]);
            double inner = 0.0;  // sum_j mult_j eta_j phi_j q_j^2
            for (std::size_t j = 0; j < L; ++j)
                inner += spectrum.levels[j].mult * spectrum.levels[j].eta * phi[j] *
                         sc.q[j] * sc.q[j];
            const double pump = sc.sample_size / (sc.kappa * sc.kappa * (1.0 - sc.gamma));
            for (std::size_t k = 0; k < L; ++k) {
                const double q2 = sc.q[k] * sc.q[k];
                phi[k] = phi[k] * q2 + pump * spectrum.levels[k].eta * q2 * inner;
            }
            R += pump * inner;
        }

        double err = 0.0;  // ensemble <w^2> = eta
        for (std::size_t k = 0; k < L; ++k)
            err += spectrum.levels[k].mult * phi[k] * spectrum.levels[k].eta;
        result.errors.push_back(err + R * sigma_sq);
        result.noise_multipliers.push_back(R);
    }

    const bool equal_sizes =
        std::all_of(sizes.begin(), sizes.end(), [&](std::int64_t n) { return n == sizes[0]; });
    if (equal_sizes) {
        const SelfConsistency& sc = cache.at(sizes[0]);
        double bound = 0.0;
        for (std::size_t k = 0; k < L; ++k) {
            const double eta = spectrum.levels[k].eta;
            bound = std::max(bound, (1.0 + sc.sample_size * eta / sc.kappa) * sc.q[k] * sc.q[k]);
        }
        result.q_norm_bound = bound;
    } else {
        result.q_norm_bound = std::numeric_limits<double>::quiet_NaN();
    }
    return result;
}

AsymptoticRatios asymptotic_ratios(const Spectrum& spectrum, std::int64_t N_A,
                                   std::int64_t N_B, double rho) {
    AsymptoticRatios r;
    r.forward_ratio = 2.0 * (1.0 - rho);
    r.self_negative_ratio = 1.0 / (1.0 - solve_kappa(spectrum, N_A).gamma);
    r.self_forgetting_ratio = 1.0 / (1.0 - solve_kappa(spectrum, N_B).gamma);
    return r;
}

void save_curve_points_csv(const std::vector<CurvePoint>& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("save_curve_points_csv: cannot open " + path);
    out << "label,N_A,N_B,n,rho,sigma_sq,value\n";
    char buf[256];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%d,%.17g,%.17g,%.17g\n", p.label.c_str(),
                      p.N_A, p.N_B, p.n, p.rho, p.sigma_sq, p.value);
        out << buf;
    }
}

}  // namespace seqkrr
