#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seqkrr/ntk.hpp"
#include "seqkrr/rng.hpp"
#include "seqkrr/spectrum.hpp"

namespace seqkrr {

/// i.i.d. standard Gaussian rows scaled to unit norm; deterministic per seed.
Eigen::MatrixXd sample_inputs(int n, int d, std::uint64_t seed);

/// Target in dual representation: f(x) = sum_j alpha_j (Theta(x'_j . x) - c0).
/// c0 = 0 gives the raw kernel; passing the level-0 eigenvalue removes the
/// constant mode so targets match the eta_0 = 0 theory convention.
struct TargetFunction {
    std::shared_ptr<const Eigen::MatrixXd> anchor_points;  // P' x D, unit rows
    Eigen::VectorXd alpha;
    DotProductKernel kernel;
    double constant_offset = 0.0;

    const Eigen::MatrixXd& anchors() const { return *anchor_points; }
    Eigen::VectorXd eval(const Eigen::Ref<const Eigen::MatrixXd>& points) const;
};

/// Pair of targets with shared anchors; per-anchor coefficients are jointly
/// Gaussian with covariance [[1, rho], [rho, 1]] / P'.
std::pair<TargetFunction, TargetFunction> sample_target_pair(const DotProductKernel& kernel,
                                                             int d, double rho, int p_prime,
                                                             std::uint64_t seed,
                                                             double constant_offset = 0.0);

/// Evaluate two targets that share their anchor set with a single streamed
/// kernel-matrix pass.
std::pair<Eigen::VectorXd, Eigen::VectorXd> eval_target_pair(
    const TargetFunction& a, const TargetFunction& b,
    const Eigen::Ref<const Eigen::MatrixXd>& points);

struct TaskData {
    Eigen::MatrixXd X;  // N x D, unit rows
    Eigen::VectorXd y;
};

/// Fresh inputs + labels y = f(X) + eps, eps ~ N(0, sigma_sq) i.i.d.
TaskData make_task(const TargetFunction& target, int n, double sigma_sq, std::uint64_t seed);

/// Sequentially trained kernel regressor: a sum of per-task dual blocks,
/// f(x) = sum_t Theta(x, X_t) c_t.
struct Predictor {
    struct Block {
        Eigen::MatrixXd X;
        Eigen::VectorXd coef;
    };
    std::vector<Block> blocks;
    DotProductKernel kernel;
    double jitter_used = 0.0;           // largest per-block jitter that was needed
    double max_interp_residual = 0.0;   // max |f(X_n) - y_n| / max|y_n| over fits

    Eigen::VectorXd eval(const Eigen::Ref<const Eigen::MatrixXd>& points) const;
};

/// Ridge-less solve as an SPD solve of (Theta(X) + jitter I), with
/// jitter = 1e-10 trace/N, escalated x10 up to 1e-6 trace/N on factorization
/// failure. The same policy is shared by every fit so the sequential/block
/// equivalence is exact.
Predictor fit_krr(const DotProductKernel& kernel, const TaskData& task);

/// Residual update of the sequential model, one KRR stage per task.
Predictor fit_sequential(const DotProductKernel& kernel, const std::vector<TaskData>& tasks);

/// Same model through the lower-block-triangular system, solved by forward
/// block substitution; independent oracle for fit_sequential.
Predictor fit_block(const DotProductKernel& kernel, const std::vector<TaskData>& tasks);

/// Pointwise mean of two predictors over the same kernel.
Predictor model_average(const Predictor& a, const Predictor& b);

struct ErrorEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Monte Carlo estimate of the mean squared gap between two function
/// evaluators over fresh unit-sphere test points.
ErrorEstimate estimate_error_between(
    const std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::MatrixXd>&)>& f,
    const std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::MatrixXd>&)>& g, int d,
    int n_test, std::uint64_t seed);

ErrorEstimate estimate_error(const Predictor& predictor, const TargetFunction& target,
                             int n_test, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiment driver

enum class Protocol { Single, Transfer, Sequential, Block };

Protocol protocol_from_string(const std::string& name);
std::string to_string(Protocol p);

struct ExperimentSpec {
    Protocol protocol = Protocol::Transfer;
    std::vector<std::int64_t> n_a_grid{100};
    std::vector<std::int64_t> n_b_grid{100};
    std::vector<std::int64_t> n_list{};  // sequential/block task sizes
    std::vector<double> rho_grid{1.0};
    std::vector<double> sigma_sq_grid{0.0};
    int trials = 50;
    int n_test = 4000;
    int p_prime = 10000;
    std::uint64_t seed = 1;
};

/// One aggregated report row; the protocol column names the measured
/// quantity (single_a, single_b, transfer, backward, average, sequential,
/// block).
struct ReportRow {
    std::string protocol;
    int n_task = 1;
    double N_A = 0, N_B = 0;
    double rho = 1.0, sigma_sq = 0.0;
    double mc_mean = 0, mc_q25 = 0, mc_q75 = 0, mc_stderr = 0;
    double theory_value = 0;
};

/// Trials are independent work units; each derives its RNG streams from
/// (seed, grid point, trial) so results do not depend on scheduling.
std::vector<ReportRow> run_experiment(const DotProductKernel& kernel,
                                      const DecomposeResult& spectral,
                                      const ExperimentSpec& spec, int threads);

void save_report_csv(const std::vector<ReportRow>& rows, const std::string& path);

}  // namespace seqkrr
