#include <doctest.h>

#include <cmath>
#include <vector>

#include "seqkrr/simulate.hpp"
#include "seqkrr/theory.hpp"

using namespace seqkrr;

namespace {

const DotProductKernel kKernel10 = DotProductKernel::relu_ntk({3, 2.0, 0.0, 10});

}  // namespace

TEST_CASE("sample_inputs: determinism and unit norms") {
    const auto a = sample_inputs(3, 5, 7);
    const auto b = sample_inputs(3, 5, 7);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    CHECK((sample_inputs(3, 5, 8) - a).cwiseAbs().maxCoeff() > 0.0);
    for (int i = 0; i < a.rows(); ++i) CHECK(std::abs(a.row(i).norm() - 1.0) < 1e-12);
}

TEST_CASE("sample_inputs: row dots concentrate around zero") {
    const int pairs = 10000, d = 50;
    const auto x = sample_inputs(pairs, d, 11);
    const auto y = sample_inputs(pairs, d, 12);
    double mean = 0.0;
    for (int i = 0; i < pairs; ++i) mean += x.row(i).dot(y.row(i));
    mean /= pairs;
    CHECK(std::abs(mean) < 3.0 / std::sqrt(double(pairs) * d));
}

TEST_CASE("sample_target_pair: rho=1 collapses, rho=0 decorrelates") {
    {
        const auto [a, b] = sample_target_pair(kKernel10, 10, 1.0, 500, 3);
        CHECK((a.alpha - b.alpha).cwiseAbs().maxCoeff() == 0.0);
        CHECK(a.anchor_points == b.anchor_points);
    }
    {
        const int pp = 10000;
        const auto [a, b] = sample_target_pair(kKernel10, 10, 0.0, pp, 4);
        const double corr = a.alpha.dot(b.alpha) / (a.alpha.norm() * b.alpha.norm());
        CHECK(std::abs(corr) < 0.03);
    }
    CHECK_THROWS_AS(sample_target_pair(kKernel10, 10, 1.5, 10, 1), ConfigError);
}

TEST_CASE("sample_target_pair: dual RKHS-norm proxy has ensemble mean Theta(1)") {
    // alpha' Theta(X', X') alpha averages to trace/P' = Theta(1). A linear
    // kernel keeps the 50-draw check cheap; a small deep-NTK run spot-checks
    // the same statistic.
    const auto lin = DotProductKernel::relu_ntk({1, 2.0, 0.0, 10});
    double acc = 0.0;
    const int draws = 50, pp = 10000;
    for (int i = 0; i < draws; ++i) {
        const auto [a, b] = sample_target_pair(lin, 10, 1.0, pp, 100 + i);
        acc += a.alpha.dot(gram_matrix(lin, a.anchors()) * a.alpha);
    }
    CHECK(acc / draws == doctest::Approx(lin.theta1()).epsilon(0.10));

    double acc3 = 0.0;
    const int pp3 = 2000;
    for (int i = 0; i < 8; ++i) {
        const auto [a, b] = sample_target_pair(kKernel10, 10, 1.0, pp3, 200 + i);
        acc3 += a.alpha.dot(gram_matrix(kKernel10, a.anchors()) * a.alpha);
    }
    CHECK(acc3 / 8 == doctest::Approx(kKernel10.theta1()).epsilon(0.25));
}

TEST_CASE("fit_krr: scalar task, zero labels, interpolation") {
    {
        // N=1: f(x') = Theta(x', x1) y1 / Theta(x1, x1). The diagonal entry is
        // evaluated at z = |x1|^2, one ulp below 1, and the kernel's sqrt(1-z)
        // kink makes that differ from Theta(1) at the 1e-9 level, so compare
        // against the assembled diagonal.
        TaskData task;
        task.X = sample_inputs(1, 10, 5);
        task.y.resize(1);
        task.y[0] = 2.5;
        const Predictor p = fit_krr(kKernel10, task);
        const double diag = gram_matrix(kKernel10, task.X)(0, 0);
        const auto pts = sample_inputs(7, 10, 6);
        const auto got = p.eval(pts);
        for (int i = 0; i < 7; ++i) {
            const double z = pts.row(i).dot(task.X.row(0));
            const double expect = kKernel10(z) * 2.5 / (diag + p.jitter_used);
            CHECK(got[i] == doctest::Approx(expect).epsilon(1e-9));
        }
    }
    {
        TaskData task;
        task.X = sample_inputs(12, 10, 8);
        task.y = Eigen::VectorXd::Zero(12);
        const Predictor p = fit_krr(kKernel10, task);
        CHECK(p.eval(sample_inputs(20, 10, 9)).cwiseAbs().maxCoeff() == 0.0);
    }
    {
        const auto [target, unused] = sample_target_pair(kKernel10, 10, 1.0, 2000, 10);
        TaskData task;
        task.X = sample_inputs(50, 10, 11);
        task.y = target.eval(task.X);
        const Predictor p = fit_krr(kKernel10, task);
        const double err = (p.eval(task.X) - task.y).cwiseAbs().maxCoeff();
        CHECK(err <= 1e-6 * task.y.cwiseAbs().maxCoeff());
        CHECK(p.max_interp_residual <= 1e-6);
    }
}

TEST_CASE("fit_sequential: repeated task is a fixed point; single task = krr") {
    const auto [target, unused] = sample_target_pair(kKernel10, 10, 1.0, 1000, 21);
    TaskData task;
    task.X = sample_inputs(25, 10, 22);
    task.y = target.eval(task.X);

    const Predictor once = fit_sequential(kKernel10, {task});
    const Predictor twice = fit_sequential(kKernel10, {task, task});
    const Predictor krr = fit_krr(kKernel10, task);
    const auto pts = sample_inputs(60, 10, 23);
    CHECK((once.eval(pts) - krr.eval(pts)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((twice.eval(pts) - once.eval(pts)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("fit_sequential equals fit_block; order matters for distinct targets") {
    std::vector<TaskData> tasks;
    const auto [ta, tb] = sample_target_pair(kKernel10, 10, 0.3, 1500, 31);
    for (int t = 0; t < 3; ++t) {
        TaskData task;
        task.X = sample_inputs(30, 10, 32 + t);
        task.y = (t % 2 == 0 ? ta : tb).eval(task.X);
        tasks.push_back(std::move(task));
    }
    const Predictor seq = fit_sequential(kKernel10, tasks);
    const Predictor blk = fit_block(kKernel10, tasks);
    const auto pts = sample_inputs(100, 10, 40);
    CHECK((seq.eval(pts) - blk.eval(pts)).cwiseAbs().maxCoeff() <= 1e-6);

    const Predictor single_blk = fit_block(kKernel10, {tasks[0]});
    const Predictor single_krr = fit_krr(kKernel10, tasks[0]);
    CHECK((single_blk.eval(pts) - single_krr.eval(pts)).cwiseAbs().maxCoeff() < 1e-12);

    std::vector<TaskData> reversed{tasks[2], tasks[1], tasks[0]};
    const Predictor rev = fit_sequential(kKernel10, reversed);
    CHECK((rev.eval(pts) - seq.eval(pts)).cwiseAbs().maxCoeff() > 1e-4);
}

TEST_CASE("model_average: idempotent and halving") {
    const auto [target, unused] = sample_target_pair(kKernel10, 10, 1.0, 800, 51);
    TaskData task;
    task.X = sample_inputs(20, 10, 52);
    task.y = target.eval(task.X);
    const Predictor p = fit_krr(kKernel10, task);
    const auto pts = sample_inputs(50, 10, 53);

    const Predictor same = model_average(p, p);
    CHECK((same.eval(pts) - p.eval(pts)).cwiseAbs().maxCoeff() < 1e-12);

    Predictor zero;
    zero.kernel = kKernel10;
    const Predictor halved = model_average(p, zero);
    CHECK((halved.eval(pts) - 0.5 * p.eval(pts)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("estimate_error: exact evaluator, determinism, zero-predictor oracle") {
    const auto rule = build_quadrature(10, 256);
    const auto spectral = decompose(kKernel10, 10, 40, rule);
    const auto [target, unused] =
        sample_target_pair(kKernel10, 10, 1.0, 1500, 61, spectral.eta0_raw);

    {
        auto f = [&](const Eigen::Ref<const Eigen::MatrixXd>& p) { return target.eval(p); };
        const auto est = estimate_error_between(f, f, 10, 500, 62);
        CHECK(est.mean == 0.0);
        CHECK(est.std_error == 0.0);
    }
    {
        Predictor zero;
        zero.kernel = kKernel10;
        const auto a = estimate_error(zero, target, 1000, 63);
        const auto b = estimate_error(zero, target, 1000, 63);
        CHECK(a.mean == b.mean);
        CHECK(a.std_error == b.std_error);

        // Independent oracle: integral of the squared target equals the
        // quadratic form of the spectral second-moment kernel
        // M(z) = sum_k mult_k eta_k^2 P_k(z) over the anchors.
        const auto& anchors = target.anchors();
        const auto& levels = spectral.spectrum.levels;
        std::vector<double> pk;
        double quad = 0.0;
        for (Eigen::Index i = 0; i < anchors.rows(); ++i) {
            for (Eigen::Index j = 0; j < anchors.rows(); ++j) {
                const double z =
                    std::clamp(anchors.row(i).dot(anchors.row(j)), -1.0, 1.0);
                gegenbauer_normalized(static_cast<int>(levels.size()) - 1, 10, z, pk);
                double m = 0.0;
                for (std::size_t k = 0; k < levels.size(); ++k)
                    m += levels[k].mult * levels[k].eta * levels[k].eta * pk[k];
                quad += target.alpha[i] * target.alpha[j] * m;
            }
        }
        const auto est = estimate_error(zero, target, 4000, 64);
        CHECK(std::abs(est.mean - quad) <= 3.0 * est.std_error);
    }
}

TEST_CASE("run_experiment: smoke grid is reproducible and complete") {
    const auto kernel = DotProductKernel::relu_ntk({3, 2.0, 0.0, 5});
    const auto spectral = decompose(kernel, 5, 40, build_quadrature(5, 256));
    ExperimentSpec spec;
    spec.protocol = Protocol::Transfer;
    spec.n_a_grid = {20};
    spec.n_b_grid = {20};
    spec.rho_grid = {0.0, 1.0};
    spec.trials = 5;
    spec.n_test = 400;
    spec.p_prime = 800;
    spec.seed = 99;
    const auto rows = run_experiment(kernel, spectral, spec, 2);
    CHECK(rows.size() == 2 * 5);  // five quantities per rho
    const auto again = run_experiment(kernel, spectral, spec, 1);
    REQUIRE(again.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].mc_mean == again[i].mc_mean);
        CHECK(rows[i].mc_stderr == again[i].mc_stderr);
        CHECK(rows[i].theory_value == again[i].theory_value);
    }
    for (const auto& row : rows) {
        CHECK(row.mc_mean > 0.0);
        CHECK(row.mc_q25 <= row.mc_q75);
        CHECK(std::isfinite(row.theory_value));
    }
}

TEST_CASE("run_experiment: sequential protocol tracks the theory curve shape") {
    const auto kernel = DotProductKernel::relu_ntk({3, 2.0, 0.0, 5});
    const auto spectral = decompose(kernel, 5, 40, build_quadrature(5, 256));
    ExperimentSpec spec;
    spec.protocol = Protocol::Sequential;
    spec.n_list = {25, 25, 25, 25};
    spec.trials = 8;
    spec.n_test = 600;
    spec.p_prime = 1000;
    spec.seed = 7;
    const auto rows = run_experiment(kernel, spectral, spec, 2);
    REQUIRE(rows.size() == 4);
    for (int t = 0; t < 4; ++t) {
        CHECK(rows[t].n_task == t + 1);
        CHECK(rows[t].theory_value > 0.0);
    }
    // Monte Carlo means decrease along the curve within loose noise bands.
    CHECK(rows[3].mc_mean < rows[0].mc_mean);
}
