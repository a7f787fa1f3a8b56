#include "seqkrr/spectrum.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace seqkrr {

QuadratureRule build_quadrature(int d, int r) {
    if (d < 2) throw ConfigError("build_quadrature: d must be >= 2");
    if (r < 2) throw ConfigError("build_quadrature: r must be >= 2");

    const double alpha = (d - 3) / 2.0;  // weight (1-z^2)^alpha
    // Monic three-term recurrence p_{k+1} = z p_k - beta_k p_{k-1} for the
    // symmetric Jacobi(alpha, alpha) weight. beta_0 is the total measure.
    Eigen::VectorXd beta(r);
    beta[0] = std::sqrt(M_PI) * std::exp(std::lgamma(alpha + 1.0) - std::lgamma(alpha + 1.5));
    if (d == 2) {
        // Chebyshev case: the generic formula is 0/0 at k=1.
        if (r > 1) beta[1] = 0.5;
        for (int k = 2; k < r; ++k) beta[k] = 0.25;
    } else {
        for (int k = 1; k < r; ++k)
            beta[k] = k * (k + 2.0 * alpha) /
                      ((2.0 * k + 2.0 * alpha + 1.0) * (2.0 * k + 2.0 * alpha - 1.0));
    }

    Eigen::VectorXd diag = Eigen::VectorXd::Zero(r);
    Eigen::VectorXd subdiag(r - 1);
    for (int k = 0; k + 1 < r; ++k) subdiag[k] = std::sqrt(beta[k + 1]);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, subdiag, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw ConfigError("build_quadrature: tridiagonal eigen solve failed to converge");

    QuadratureRule rule;
    rule.order = r;
    rule.nodes = solver.eigenvalues();
    rule.weights.resize(r);
    // Christoffel weights: w_j = 1 / sum_k ptilde_k(x_j)^2 with orthonormal
    // ptilde (includes the beta_0 normalization, so sum w = beta_0).
    for (int j = 0; j < r; ++j) {
        const double x = rule.nodes[j];
        double pkm1 = 0.0;
        double pk = 1.0 / std::sqrt(beta[0]);
        double s = pk * pk;
        for (int k = 0; k + 1 < r; ++k) {
            const double bnext = std::sqrt(beta[k + 1]);
            const double bprev = (k >= 1) ? std::sqrt(beta[k]) : 0.0;
            const double pnext = (x * pk - bprev * pkm1) / bnext;
            pkm1 = pk;
            pk = pnext;
            s += pk * pk;
        }
        rule.weights[j] = 1.0 / s;
    }
    return rule;
}

double sphere_multiplicity(int d, int k) {
    if (d < 2) throw ConfigError("sphere_multiplicity: d must be >= 2");
    if (k < 0) throw ConfigError("sphere_multiplicity: k must be >= 0");
    if (k == 0) return 1.0;
    // (2k+d-2)/(k+d-2) * binom(k+d-2, k); the binomial prefixes stay integral,
    // so values below 2^53 come out exact.
    double binom = 1.0;
    for (int i = 1; i <= k; ++i) binom = binom * (d - 2 + i) / i;
    double value = binom * (2.0 * k + d - 2.0) / (k + d - 2.0);
    if (value < 9.007199254740992e15) value = std::round(value);
    return value;
}

void gegenbauer_normalized(int k_max, int d, double z, std::vector<double>& out) {
    const double lambda = (d - 2) / 2.0;
    out.assign(static_cast<std::size_t>(k_max) + 1, 0.0);
    out[0] = 1.0;
    if (k_max >= 1) out[1] = z;
    for (int k = 2; k <= k_max; ++k)
        out[k] = (2.0 * (k + lambda - 1.0) * z * out[k - 1] - (k - 1.0) * out[k - 2]) /
                 (2.0 * lambda + k - 1.0);
}

double Spectrum::trace() const {
    double s = 0.0;
    for (const auto& lv : levels) s += lv.mult * lv.eta;
    return s;
}

double Spectrum::max_eta() const {
    double m = 0.0;
    for (const auto& lv : levels) m = std::max(m, lv.eta);
    return m;
}

double Spectrum::positive_modes() const {
    double s = 0.0;
    for (const auto& lv : levels)
        if (lv.eta > 0.0) s += lv.mult;
    return s;
}

void Spectrum::validate() const {
    if (levels.empty()) throw ConfigError("Spectrum: no levels");
    for (const auto& lv : levels) {
        if (lv.eta < 0.0) throw ConfigError("Spectrum: negative eigenvalue at level " + std::to_string(lv.k));
        if (!(lv.mult >= 1.0)) throw ConfigError("Spectrum: multiplicity < 1 at level " + std::to_string(lv.k));
    }
}

DecomposeResult decompose(const DotProductKernel& kernel, int d, int k_max,
                          const QuadratureRule& rule) {
    if (d < 2) throw ConfigError("decompose: d must be >= 2");
    if (k_max < 0) throw ConfigError("decompose: k_max must be >= 0");
    if (rule.order < std::max(4 * k_max, 64))
        throw ConfigError("decompose: quadrature order r=" + std::to_string(rule.order) +
                          " below resolution safeguard max(4*k_max, 64)");

    const int r = rule.order;
    Eigen::VectorXd theta(r);
    for (int j = 0; j < r; ++j) theta[j] = kernel(rule.nodes[j]);

    // P[k][j] built per node with the normalized recurrence.
    Eigen::MatrixXd P(k_max + 1, r);
    std::vector<double> col;
    for (int j = 0; j < r; ++j) {
        gegenbauer_normalized(k_max, d, rule.nodes[j], col);
        for (int k = 0; k <= k_max; ++k) P(k, j) = col[k];
    }

    Eigen::VectorXd wtheta = rule.weights.cwiseProduct(theta);
    Eigen::VectorXd num = P * wtheta;
    Eigen::VectorXd den = (P.array().square().matrix() * rule.weights);

    DecomposeResult result;
    result.theta1 = kernel.theta1();
    result.spectrum.dim = d;
    result.spectrum.levels.resize(k_max + 1);
    double eta_max = 0.0;
    for (int k = 0; k <= k_max; ++k) {
        result.spectrum.levels[k] = {k, num[k] / den[k] / sphere_multiplicity(d, k),
                                     sphere_multiplicity(d, k)};
        eta_max = std::max(eta_max, result.spectrum.levels[k].eta);
    }
    for (auto& lv : result.spectrum.levels) {
        if (lv.eta < 0.0) {
            if (lv.eta < -1e-10 * eta_max)
                throw NumericsError("decompose: eigenvalue at level " + std::to_string(lv.k) +
                                    " is negative beyond tolerance; increase r or reduce k_max");
            lv.eta = 0.0;
        }
    }

    result.eta0_raw = result.spectrum.levels[0].eta;
    result.trace_before_zeroing = result.spectrum.trace();

    const double t1 = result.theta1;
    if (result.trace_before_zeroing > t1 * 1.05 || result.trace_before_zeroing < t1 * 0.95)
        throw NumericsError(
            "decompose: trace consistency violated (sum mult*eta = " +
            std::to_string(result.trace_before_zeroing) + " vs Theta(1) = " + std::to_string(t1) +
            "); increase r and/or k_max");

    // Reconstruction diagnostic at the nodes, before zeroing level 0.
    double max_err = 0.0;
    for (int j = 0; j < r; ++j) {
        double rec = 0.0;
        for (int k = 0; k <= k_max; ++k)
            rec += result.spectrum.levels[k].mult * result.spectrum.levels[k].eta * P(k, j);
        max_err = std::max(max_err, std::abs(rec - theta[j]));
    }
    result.max_recon_rel_err = max_err / t1;

    // The trace beyond k_max acts on the self-consistency as an effective
    // ridge (each unresolved mode contributes mult*eta/kappa). Park it in one
    // extra level at k_max+1 whose per-mode eta sits far below anything a
    // desk-scale sample size can resolve; kappa then matches the untruncated
    // kernel and the theory values stop drifting with k_max.
    const double tail = t1 - result.trace_before_zeroing;
    if (tail > 1e-9 * t1) {
        const double mult = sphere_multiplicity(d, k_max + 1);
        result.spectrum.levels.push_back({k_max + 1, tail / mult, mult});
        result.tail_mass = tail;
    }

    result.spectrum.levels[0].eta = 0.0;  // main-text convention
    return result;
}

void save_spectrum_csv(const Spectrum& spectrum, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("save_spectrum_csv: cannot open " + path);
    out << "k,eta,mult\n";
    char buf[128];
    for (const auto& lv : spectrum.levels) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", lv.k, lv.eta, lv.mult);
        out << buf;
    }
}

Spectrum load_spectrum_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_spectrum_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("load_spectrum_csv: empty file " + path);
    if (line != "k,eta,mult")
        throw ConfigError("load_spectrum_csv: bad header in " + path + " (expected 'k,eta,mult')");
    Spectrum spectrum;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string a, b, c;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
            throw ConfigError("load_spectrum_csv: " + path + ":" + std::to_string(lineno) +
                              ": expected 3 comma-separated fields");
        try {
            spectrum.levels.push_back({std::stoi(a), std::stod(b), std::stod(c)});
        } catch (const std::exception&) {
            throw ConfigError("load_spectrum_csv: " + path + ":" + std::to_string(lineno) +
                              ": unparsable numeric field");
        }
    }
    spectrum.validate();
    return spectrum;
}

}  // namespace seqkrr
