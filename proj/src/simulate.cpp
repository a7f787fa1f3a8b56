#include "seqkrr/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

#include <Eigen/Cholesky>

#include "seqkrr/theory.hpp"

namespace seqkrr {

namespace {

constexpr int kChunk = 384;  // row block for kernel-matrix streaming

constexpr std::uint64_t kPurposeAnchors = 1;
constexpr std::uint64_t kPurposeAlpha = 2;
constexpr std::uint64_t kPurposeTaskBase = 16;   // + 2*t for inputs, + 2*t+1 for noise
constexpr std::uint64_t kPurposeTest = 8;

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= count || failed.load()) return;
                try {
                    body(i);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failed.load()) std::rethrow_exception(error);
}

/// (Theta(points, X) - offset) * coef, streamed in row chunks.
Eigen::VectorXd kernel_matvec(const DotProductKernel& kernel,
                              const Eigen::Ref<const Eigen::MatrixXd>& points,
                              const Eigen::Ref<const Eigen::MatrixXd>& X,
                              const Eigen::Ref<const Eigen::VectorXd>& coef, double offset) {
    Eigen::VectorXd out(points.rows());
    const double shift = offset * coef.sum();
    for (Eigen::Index r0 = 0; r0 < points.rows(); r0 += kChunk) {
        const Eigen::Index rows = std::min<Eigen::Index>(kChunk, points.rows() - r0);
        Eigen::MatrixXd z = points.middleRows(r0, rows) * X.transpose();
        kernel.apply(z);
        out.segment(r0, rows) = z * coef;
    }
    if (shift != 0.0) out.array() -= shift;
    return out;
}

struct SpdSolveResult {
    Eigen::VectorXd coef;
    double jitter = 0.0;
};

/// (G + jitter I) coef = rhs with the declared escalation ladder.
SpdSolveResult spd_solve(Eigen::MatrixXd G, const Eigen::Ref<const Eigen::VectorXd>& rhs) {
    const double base = 1e-10 * G.trace() / static_cast<double>(G.rows());
    const double cap = 1e-6 * G.trace() / static_cast<double>(G.rows());
    for (double jitter = base;; jitter *= 10.0) {
        Eigen::MatrixXd A = G;
        A.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() == Eigen::Success) return {llt.solve(rhs), jitter};
        if (jitter >= cap)
            throw NumericsError("fit: Gram factorization failed up to jitter cap 1e-6*trace/N");
    }
}

double stage_residual(double jitter, const Eigen::VectorXd& coef, const Eigen::VectorXd& y) {
    const double ymax = y.cwiseAbs().maxCoeff();
    if (ymax == 0.0) return 0.0;
    return jitter * coef.cwiseAbs().maxCoeff() / ymax;
}

/// One sequential stage: fit the residual of `task` under the running
/// predictor and append the new dual block.
void fit_stage(Predictor& predictor, const TaskData& task) {
    Eigen::VectorXd rhs = task.y;
    if (!predictor.blocks.empty()) rhs -= predictor.eval(task.X);
    auto solved = spd_solve(gram_matrix(predictor.kernel, task.X), rhs);
    predictor.jitter_used = std::max(predictor.jitter_used, solved.jitter);
    predictor.max_interp_residual =
        std::max(predictor.max_interp_residual, stage_residual(solved.jitter, solved.coef, task.y));
    predictor.blocks.push_back({task.X, std::move(solved.coef)});
}

}  // namespace

Eigen::MatrixXd sample_inputs(int n, int d, std::uint64_t seed) {
    if (n < 1) throw ConfigError("sample_inputs: n must be >= 1");
    if (d < 2) throw ConfigError("sample_inputs: d must be >= 2");
    Rng rng(seed);
    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) X(i, j) = rng.gaussian();
        X.row(i).normalize();
    }
    return X;
}

Eigen::VectorXd TargetFunction::eval(const Eigen::Ref<const Eigen::MatrixXd>& points) const {
    return kernel_matvec(kernel, points, anchors(), alpha, constant_offset);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> eval_target_pair(
    const TargetFunction& a, const TargetFunction& b,
    const Eigen::Ref<const Eigen::MatrixXd>& points) {
    if (a.anchor_points != b.anchor_points)
        throw ConfigError("eval_target_pair: targets do not share an anchor set");
    const Eigen::MatrixXd& anchors = a.anchors();
    Eigen::VectorXd fa(points.rows()), fb(points.rows());
    for (Eigen::Index r0 = 0; r0 < points.rows(); r0 += kChunk) {
        const Eigen::Index rows = std::min<Eigen::Index>(kChunk, points.rows() - r0);
        Eigen::MatrixXd z = points.middleRows(r0, rows) * anchors.transpose();
        a.kernel.apply(z);
        fa.segment(r0, rows) = z * a.alpha;
        fb.segment(r0, rows) = z * b.alpha;
    }
    if (a.constant_offset != 0.0) fa.array() -= a.constant_offset * a.alpha.sum();
    if (b.constant_offset != 0.0) fb.array() -= b.constant_offset * b.alpha.sum();
    return {std::move(fa), std::move(fb)};
}

std::pair<TargetFunction, TargetFunction> sample_target_pair(const DotProductKernel& kernel,
                                                             int d, double rho, int p_prime,
                                                             std::uint64_t seed,
                                                             double constant_offset) {
    if (p_prime < 1) throw ConfigError("sample_target_pair: P' must be >= 1");
    if (std::abs(rho) > 1.0) throw ConfigError("sample_target_pair: |rho| must be <= 1");
    std::uint64_t sm = seed;
    const std::uint64_t anchor_seed = splitmix64(sm) ^ kPurposeAnchors;
    auto anchors = std::make_shared<const Eigen::MatrixXd>(sample_inputs(p_prime, d, anchor_seed));

    Rng rng(splitmix64(sm) ^ kPurposeAlpha);
    const double scale = 1.0 / std::sqrt(static_cast<double>(p_prime));
    const double mix = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    Eigen::VectorXd alpha_a(p_prime), alpha_b(p_prime);
    for (int j = 0; j < p_prime; ++j) {
        const double g1 = rng.gaussian();
        const double g2 = rng.gaussian();
        alpha_a[j] = scale * g1;
        alpha_b[j] = scale * (rho * g1 + mix * g2);
    }

    TargetFunction a{anchors, std::move(alpha_a), kernel, constant_offset};
    TargetFunction b{std::move(anchors), std::move(alpha_b), kernel, constant_offset};
    return {std::move(a), std::move(b)};
}

TaskData make_task(const TargetFunction& target, int n, double sigma_sq, std::uint64_t seed) {
    std::uint64_t sm = seed;
    TaskData task;
    task.X = sample_inputs(n, static_cast<int>(target.anchors().cols()), splitmix64(sm));
    task.y = target.eval(task.X);
    if (sigma_sq > 0.0) {
        Rng rng(splitmix64(sm));
        const double sd = std::sqrt(sigma_sq);
        for (int i = 0; i < n; ++i) task.y[i] += sd * rng.gaussian();
    }
    return task;
}

Eigen::VectorXd Predictor::eval(const Eigen::Ref<const Eigen::MatrixXd>& points) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(points.rows());
    for (const auto& block : blocks)
        out += kernel_matvec(kernel, points, block.X, block.coef, 0.0);
    return out;
}

Predictor fit_krr(const DotProductKernel& kernel, const TaskData& task) {
    if (task.X.rows() < 1) throw ConfigError("fit_krr: empty task");
    Predictor p;
    p.kernel = kernel;
    fit_stage(p, task);
    return p;
}

Predictor fit_sequential(const DotProductKernel& kernel, const std::vector<TaskData>& tasks) {
    if (tasks.empty()) throw ConfigError("fit_sequential: at least one task required");
    Predictor p;
    p.kernel = kernel;
    for (const auto& task : tasks) fit_stage(p, task);
    return p;
}

Predictor fit_block(const DotProductKernel& kernel, const std::vector<TaskData>& tasks) {
    if (tasks.empty()) throw ConfigError("fit_block: at least one task required");
    Predictor p;
    p.kernel = kernel;
    // Forward substitution on the lower-block-triangular system: the diagonal
    // blocks are factorized with the shared jitter policy, the off-diagonal
    // cross-Gram blocks are assembled explicitly.
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        Eigen::VectorXd rhs = tasks[t].y;
        for (std::size_t s = 0; s < t; ++s)
            rhs -= gram_matrix(kernel, tasks[t].X, tasks[s].X) * p.blocks[s].coef;
        auto solved = spd_solve(gram_matrix(kernel, tasks[t].X), rhs);
        p.jitter_used = std::max(p.jitter_used, solved.jitter);
        p.max_interp_residual = std::max(p.max_interp_residual,
                                         stage_residual(solved.jitter, solved.coef, tasks[t].y));
        p.blocks.push_back({tasks[t].X, std::move(solved.coef)});
    }
    return p;
}

Predictor model_average(const Predictor& a, const Predictor& b) {
    if (a.kernel.is_ntk() != b.kernel.is_ntk() ||
        std::abs(a.kernel.theta1() - b.kernel.theta1()) > 0.0 ||
        a.kernel.input_dim() != b.kernel.input_dim())
        throw ConfigError("model_average: predictors use different kernels");
    Predictor avg;
    avg.kernel = a.kernel;
    avg.jitter_used = std::max(a.jitter_used, b.jitter_used);
    avg.max_interp_residual = std::max(a.max_interp_residual, b.max_interp_residual);
    for (const auto& blk : a.blocks) avg.blocks.push_back({blk.X, 0.5 * blk.coef});
    for (const auto& blk : b.blocks) avg.blocks.push_back({blk.X, 0.5 * blk.coef});
    return avg;
}

ErrorEstimate estimate_error_between(
    const std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::MatrixXd>&)>& f,
    const std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::MatrixXd>&)>& g, int d,
    int n_test, std::uint64_t seed) {
    if (n_test < 2) throw ConfigError("estimate_error: n_test must be >= 2");
    const Eigen::MatrixXd pts = sample_inputs(n_test, d, seed);
    const Eigen::VectorXd diff = f(pts) - g(pts);
    const Eigen::ArrayXd sq = diff.array().square();
    ErrorEstimate est;
    est.mean = sq.mean();
    const double var = (sq - est.mean).square().sum() / (n_test - 1);
    est.std_error = std::sqrt(var / n_test);
    return est;
}

ErrorEstimate estimate_error(const Predictor& predictor, const TargetFunction& target,
                             int n_test, std::uint64_t seed) {
    return estimate_error_between(
        [&](const Eigen::Ref<const Eigen::MatrixXd>& p) { return target.eval(p); },
        [&](const Eigen::Ref<const Eigen::MatrixXd>& p) { return predictor.eval(p); },
        static_cast<int>(target.anchors().cols()), n_test, seed);
}

// ---------------------------------------------------------------------------

Protocol protocol_from_string(const std::string& name) {
    if (name == "single") return Protocol::Single;
    if (name == "transfer") return Protocol::Transfer;
    if (name == "sequential") return Protocol::Sequential;
    if (name == "block") return Protocol::Block;
    throw ConfigError("unknown protocol '" + name +
                      "' (expected single | transfer | sequential | block)");
}

std::string to_string(Protocol p) {
    switch (p) {
        case Protocol::Single: return "single";
        case Protocol::Transfer: return "transfer";
        case Protocol::Sequential: return "sequential";
        case Protocol::Block: return "block";
    }
    return "?";
}

namespace {

struct Aggregate {
    double mean = 0, q25 = 0, q75 = 0, stderr_ = 0;
};

double percentile(std::vector<double> sorted, double p) {
    const std::size_t n = sorted.size();
    const double pos = p * (n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - lo;
    if (lo + 1 >= n) return sorted[n - 1];
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    const double n = static_cast<double>(values.size());
    for (double v : values) a.mean += v;
    a.mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stderr_ = values.size() > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    a.q25 = percentile(sorted, 0.25);
    a.q75 = percentile(sorted, 0.75);
    return a;
}

double mean_sq_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace

std::vector<ReportRow> run_experiment(const DotProductKernel& kernel,
                                      const DecomposeResult& spectral,
                                      const ExperimentSpec& spec, int threads) {
    if (spec.trials < 1) throw ConfigError("experiment: trials must be >= 1");
    if (spec.n_test < 2) throw ConfigError("experiment: n_test must be >= 2");
    if (spec.p_prime < 1) throw ConfigError("experiment: P_prime must be >= 1");
    const int d = kernel.input_dim();
    const Spectrum& spectrum = spectral.spectrum;
    const double offset = spectral.eta0_raw;

    std::vector<ReportRow> rows;
    std::uint64_t grid_counter = 0;

    auto grid_master = [&](std::uint64_t g) {
        std::uint64_t sm = spec.seed ^ (0x517cc1b727220a95ULL + g * 0x2545f4914f6cdd1dULL);
        return splitmix64(sm);
    };

    if (spec.protocol == Protocol::Single) {
        for (double sigma_sq : spec.sigma_sq_grid) {
            for (std::int64_t N : spec.n_a_grid) {
                const std::uint64_t master = grid_master(grid_counter++);
                std::vector<double> e1(spec.trials);
                parallel_for(spec.trials, threads, [&](int t) {
                    const std::uint64_t ut = static_cast<std::uint64_t>(t);
                    auto pair = sample_target_pair(kernel, d, 1.0, spec.p_prime,
                                                   derive_stream(master, ut, 0).next_u64(), offset);
                    const TargetFunction& target = pair.first;
                    TaskData task = make_task(target, static_cast<int>(N), sigma_sq,
                                              derive_stream(master, ut, kPurposeTaskBase).next_u64());
                    Predictor p = fit_krr(kernel, task);
                    const Eigen::MatrixXd pts = sample_inputs(
                        spec.n_test, d, derive_stream(master, ut, kPurposeTest).next_u64());
                    e1[t] = mean_sq_diff(target.eval(pts), p.eval(pts));
                });
                const Aggregate a = aggregate(e1);
                const SelfConsistency sc = solve_kappa(spectrum, N);
                rows.push_back({"single", 1, static_cast<double>(N), 0.0, 1.0, sigma_sq, a.mean,
                                a.q25, a.q75, a.stderr_,
                                e_single(sc, spectrum, TargetEnsemble::gaussian(1.0, sigma_sq))});
            }
        }
        return rows;
    }

    if (spec.protocol == Protocol::Sequential || spec.protocol == Protocol::Block) {
        if (spec.n_list.empty())
            throw ConfigError("experiment: sequential/block protocol requires N_list");
        const int K = static_cast<int>(spec.n_list.size());
        for (double sigma_sq : spec.sigma_sq_grid) {
            const std::uint64_t master = grid_master(grid_counter++);
            std::vector<std::vector<double>> per_task(K, std::vector<double>(spec.trials));
            parallel_for(spec.trials, threads, [&](int t) {
                const std::uint64_t ut = static_cast<std::uint64_t>(t);
                auto pair = sample_target_pair(kernel, d, 1.0, spec.p_prime,
                                               derive_stream(master, ut, 0).next_u64(), offset);
                const TargetFunction& target = pair.first;
                std::vector<TaskData> tasks;
                tasks.reserve(K);
                for (int k = 0; k < K; ++k)
                    tasks.push_back(make_task(target, static_cast<int>(spec.n_list[k]), sigma_sq,
                                              derive_stream(master, ut, kPurposeTaskBase + 2 * k)
                                                  .next_u64()));
                const Eigen::MatrixXd pts = sample_inputs(
                    spec.n_test, d, derive_stream(master, ut, kPurposeTest).next_u64());
                const Eigen::VectorXd truth = target.eval(pts);
                if (spec.protocol == Protocol::Sequential) {
                    Predictor p;
                    p.kernel = kernel;
                    Eigen::VectorXd acc = Eigen::VectorXd::Zero(spec.n_test);
                    for (int k = 0; k < K; ++k) {
                        fit_stage(p, tasks[k]);
                        const auto& blk = p.blocks.back();
                        acc += kernel_matvec(kernel, pts, blk.X, blk.coef, 0.0);
                        per_task[k][t] = mean_sq_diff(truth, acc);
                    }
                } else {
                    Predictor p = fit_block(kernel, tasks);
                    Eigen::VectorXd acc = Eigen::VectorXd::Zero(spec.n_test);
                    for (int k = 0; k < K; ++k) {
                        acc += kernel_matvec(kernel, pts, p.blocks[k].X, p.blocks[k].coef, 0.0);
                        per_task[k][t] = mean_sq_diff(truth, acc);
                    }
                }
            });
            const LearningCurveResult curve = learning_curve(spectrum, spec.n_list, sigma_sq);
            for (int k = 0; k < K; ++k) {
                const Aggregate a = aggregate(per_task[k]);
                rows.push_back({to_string(spec.protocol), k + 1,
                                static_cast<double>(spec.n_list[0]),
                                static_cast<double>(spec.n_list[k]), 1.0, sigma_sq, a.mean, a.q25,
                                a.q75, a.stderr_, curve.errors[k]});
            }
        }
        return rows;
    }

    // Transfer protocol: per grid point measure E_A, E_B, E_{A->B},
    // E^back_{A->B} and E_ave from the same trial draws.
    for (double sigma_sq : spec.sigma_sq_grid) {
        for (std::int64_t NA : spec.n_a_grid) {
            for (std::int64_t NB : spec.n_b_grid) {
                for (double rho : spec.rho_grid) {
                    const std::uint64_t master = grid_master(grid_counter++);
                    std::vector<double> ea(spec.trials), eb(spec.trials), eab(spec.trials),
                        eback(spec.trials), eave(spec.trials);
                    parallel_for(spec.trials, threads, [&](int t) {
                        const std::uint64_t ut = static_cast<std::uint64_t>(t);
                        auto [ta, tb] = sample_target_pair(
                            kernel, d, rho, spec.p_prime,
                            derive_stream(master, ut, 0).next_u64(), offset);
                        TaskData task_a = make_task(ta, static_cast<int>(NA), sigma_sq,
                                                    derive_stream(master, ut, kPurposeTaskBase)
                                                        .next_u64());
                        TaskData task_b = make_task(tb, static_cast<int>(NB), sigma_sq,
                                                    derive_stream(master, ut, kPurposeTaskBase + 2)
                                                        .next_u64());
                        Predictor pa = fit_krr(kernel, task_a);
                        Predictor pb = fit_krr(kernel, task_b);
                        Predictor pab = pa;
                        fit_stage(pab, task_b);

                        const Eigen::MatrixXd pts = sample_inputs(
                            spec.n_test, d, derive_stream(master, ut, kPurposeTest).next_u64());
                        const auto [truth_a, truth_b] = eval_target_pair(ta, tb, pts);
                        const Eigen::VectorXd fa = pa.eval(pts);
                        const Eigen::VectorXd fb = pb.eval(pts);
                        const auto& blk = pab.blocks.back();
                        const Eigen::VectorXd fab =
                            fa + kernel_matvec(kernel, pts, blk.X, blk.coef, 0.0);

                        ea[t] = mean_sq_diff(truth_a, fa);
                        eb[t] = mean_sq_diff(truth_b, fb);
                        eab[t] = mean_sq_diff(truth_b, fab);
                        eback[t] = mean_sq_diff(truth_a, fab);
                        eave[t] = mean_sq_diff(truth_b, 0.5 * (fa + fb));
                    });

                    const SelfConsistency sa = solve_kappa(spectrum, NA);
                    const SelfConsistency sb = solve_kappa(spectrum, NB);
                    const TargetEnsemble ens = TargetEnsemble::gaussian(rho, sigma_sq);
                    const double na = static_cast<double>(NA), nb = static_cast<double>(NB);
                    auto push = [&](const char* name, const std::vector<double>& v, double theory) {
                        const Aggregate a = aggregate(v);
                        rows.push_back({name, 2, na, nb, rho, sigma_sq, a.mean, a.q25, a.q75,
                                        a.stderr_, theory});
                    };
                    push("single_a", ea, e_single(sa, spectrum, ens));
                    push("single_b", eb, e_single(sb, spectrum, ens));
                    push("transfer", eab, e_transfer(spectrum, NA, NB, rho, sigma_sq));
                    push("backward", eback, e_backward(spectrum, NA, NB, rho, sigma_sq));
                    push("average", eave,
                         sigma_sq == 0.0 ? e_average(spectrum, NA, NB, rho)
                                         : std::numeric_limits<double>::quiet_NaN());
                }
            }
        }
    }
    return rows;
}

void save_report_csv(const std::vector<ReportRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("save_report_csv: cannot open " + path);
    out << "protocol,n_task,N_A,N_B,rho,sigma_sq,mc_mean,mc_q25,mc_q75,mc_stderr,theory_value\n";
    char buf[384];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.protocol.c_str(), r.n_task, r.N_A, r.N_B, r.rho, r.sigma_sq, r.mc_mean,
                      r.mc_q25, r.mc_q75, r.mc_stderr, r.theory_value);
        out << buf;
    }
}

}  // namespace seqkrr
