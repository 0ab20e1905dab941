// acceptance driver: one numbered check per invocation argument, one
// PASS/FAIL line each, nonzero exit iff something failed
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mfsgd/harness.hpp"
#include "mfsgd/stats.hpp"

using namespace mfsgd;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

TestFunction random_quadratic(std::size_t d, RngStream& rng) {
    Matrix A(d, d);
    std::vector<double> a(d);
    for (std::size_t i = 0; i < d; ++i) {
        a[i] = 0.5 * rng.normal();
        for (std::size_t j = 0; j < d; ++j) A(i, j) = 0.3 * rng.normal();
    }
    return TestFunction::quadratic(std::move(A), std::move(a), rng.normal());
}

// 1: one-step decomposition identity with the drift sample injected as batch
Outcome criterion1() {
    SGDConfig cfg;
    cfg.n_neurons = 64;
    cfg.dim = 3;
    cfg.alpha = 0.25;
    const DataModel model = DataModel::default_mixture(cfg.dim);
    const auto act = ActivationSpec::ramp();
    auto streams = RunStreams::make(101, 0);
    NetworkState st = init_state(cfg, streams.init);

    RngStream prng(101, 1, StreamPurpose::Quadrature);
    const TestFunction probes[3] = {TestFunction::square(), random_quadratic(cfg.dim, prng),
                                    random_quadratic(cfg.dim, prng)};
    double max_gap = 0.0;
    bool centered = true;
    const std::size_t q = 16;
    Matrix sx(q, cfg.dim);
    std::vector<double> sy(q);
    for (int k = 0; k < 100; ++k) {
        for (std::size_t i = 0; i < q; ++i) model.sample(streams.quad, sx.row(i), sy[i]);
        const auto dec =
            decompose_step(cfg, st, model, act, probes[k % 3], streams, sx, sy, true);
        const double gap =
            std::fabs(dec.total - (dec.d_term + dec.m_term + dec.r_term + dec.noise_term));
        max_gap = std::max(max_gap, gap);
        centered = centered && dec.m_term == 0.0;
    }
    Outcome o;
    o.pass = max_gap <= 1e-10 && centered;
    o.detail = fmt("step identity over 100 random steps: max gap %.3g (tol 1e-10), "
                   "centered term %s zero",
                   max_gap, centered ? "exactly" : "NOT");
    return o;
}

// 2: affine observables have no second-order remainder, bit-exactly
Outcome criterion2() {
    SGDConfig cfg;
    cfg.n_neurons = 48;
    cfg.dim = 2;
    cfg.batch = BatchSchedule::fixed(2);
    const DataModel model = DataModel::default_mixture(cfg.dim);
    const auto act = ActivationSpec::ramp();
    auto streams = RunStreams::make(102, 0);
    NetworkState st = init_state(cfg, streams.init);

    RngStream prng(102, 1, StreamPurpose::Quadrature);
    std::vector<double> a0(cfg.dim), a1(cfg.dim);
    prng.fill_normal(a0);
    prng.fill_normal(a1);
    const TestFunction probes[2] = {TestFunction::affine(a0, prng.normal()),
                                    TestFunction::affine(a1, prng.normal())};
    const std::size_t q = 8;
    Matrix sx(q, cfg.dim);
    std::vector<double> sy(q);
    bool all_zero = true;
    double max_gap = 0.0;
    for (int k = 0; k < 50; ++k) {
        for (std::size_t i = 0; i < q; ++i) model.sample(streams.quad, sx.row(i), sy[i]);
        const auto dec =
            decompose_step(cfg, st, model, act, probes[k % 2], streams, sx, sy, false);
        all_zero = all_zero && dec.r_term == 0.0;
        max_gap = std::max(max_gap, std::fabs(dec.total - (dec.d_term + dec.m_term +
                                                           dec.r_term + dec.noise_term)));
    }
    Outcome o;
    o.pass = all_zero && max_gap <= 1e-10;
    o.detail = fmt("affine remainder %s zero over 50 sampled-batch steps; identity gap %.3g",
                   all_zero ? "exactly" : "NOT", max_gap);
    return o;
}

// 3: the centered batch term is a mean-zero martingale at the terminal time
Outcome criterion3() {
    SGDConfig cfg;
    cfg.n_neurons = 500;
    cfg.dim = 1;
    const DataModel model = DataModel::default_mixture(cfg.dim);
    const auto act = ActivationSpec::ramp();
    const auto probe = TestFunction::square();
    const int reps = 2000;
    RunningStats rs;
    for (int r = 0; r < reps; ++r) {
        const auto tr = martingale_trace(cfg, model, act, probe, 0.5, 32, 103, r);
        rs.add(tr.values.back());
    }
    const double se = rs.stddev() / std::sqrt(static_cast<double>(reps));
    Outcome o;
    o.pass = std::fabs(rs.mean) <= 3.0 * se;
    o.detail = fmt("terminal centered term over %d runs: mean %.3g vs 3 SE %.3g", reps, rs.mean,
                   3.0 * se);
    return o;
}

// 4: limit covariance scales exactly as 1/batch, and the simulated centered
// term reproduces the quarter variance at batch 4
Outcome criterion4() {
    const auto act = ActivationSpec::ramp();
    const DataModel model = DataModel::default_mixture(1);
    RngStream qrng(104, kReferenceRep, StreamPurpose::Quadrature);
    const auto sample = QuadratureSample::draw(model, 500, qrng);
    RngStream irng(104, kReferenceRep, StreamPurpose::Init);
    Matrix init(200, 1);
    for (std::size_t i = 0; i < init.size(); ++i) init.data()[i] = 0.8 * irng.normal();
    const auto ref =
        integrate_meanfield(std::move(init), sample, act, 0.1, 1.0, 0.01, Integrator::Rk4, 10);
    const auto f = TestFunction::square();
    const auto c1 =
        gprocess_covariance(f, f, 1.0, 1.0, ref, sample, act, 0.1, BatchSchedule::fixed(1));
    const auto c4 =
        gprocess_covariance(f, f, 1.0, 1.0, ref, sample, act, 0.1, BatchSchedule::fixed(4));
    const double rel = std::fabs(c1.value - 4.0 * c4.value) / std::fabs(c1.value);

    SGDConfig cfg;
    cfg.n_neurons = 200;
    cfg.dim = 1;
    const int reps = 2000;
    RunningStats v1, v4;
    for (int r = 0; r < reps; ++r) {
        v1.add(martingale_trace(cfg, model, act, f, 0.5, 128, 104, r).values.back());
    }
    cfg.batch = BatchSchedule::fixed(4);
    for (int r = 0; r < reps; ++r) {
        v4.add(martingale_trace(cfg, model, act, f, 0.5, 128, 104, r).values.back());
    }
    const double ratio = v4.variance() / v1.variance();

    Outcome o;
    o.pass = rel <= 1e-12 && ratio >= 0.20 && ratio <= 0.32;
    o.detail = fmt("limit covariance 1/batch deviation %.3g (tol 1e-12); simulated variance "
                   "ratio batch 4/1 = %.3f (band [0.20, 0.32])",
                   rel, ratio);
    return o;
}

// 5: terminal variance of the norm observable falls with the batch size
Outcome criterion5() {
    ExperimentConfig cfg = preset_config(ExperimentKind::Variance, ScalePreset::Desk);
    cfg.seed = 105;
    cfg.threads = 1;
    cfg.bootstrap = 0;
    const VarianceReport rep = run_variance_experiment(cfg);
    Outcome o;
    o.pass = rep.spearman <= -0.8;
    std::string vals;
    for (double v : rep.v_hat) vals += fmt(" %.3g", v);
    o.detail = fmt("variance across batch sizes {1,2,4,8,16}:%s; rank correlation %.3f "
                   "(need <= -0.8)",
                   vals.c_str(), rep.spearman);
    return o;
}

// 6: empirical-measure distance between independent runs shrinks with width
Outcome criterion6() {
    const DataModel model = DataModel::default_mixture(1);
    const auto act = ActivationSpec::ramp();
    const TestFunction probe = TestFunction::square();
    auto mean_gap = [&](std::size_t neurons) {
        SGDConfig cfg;
        cfg.n_neurons = neurons;
        cfg.dim = 1;
        double acc = 0.0;
        std::vector<double> wa(neurons), wb(neurons);
        for (int p = 0; p < 50; ++p) {
            const auto ra = run_trajectory(cfg, model, act, 0.5, {&probe, 1}, 106,
                                           static_cast<std::uint32_t>(2 * p));
            const auto rb = run_trajectory(cfg, model, act, 0.5, {&probe, 1}, 106,
                                           static_cast<std::uint32_t>(2 * p + 1));
            for (std::size_t i = 0; i < neurons; ++i) {
                wa[i] = ra.final_state.weights(i, 0);
                wb[i] = rb.final_state.weights(i, 0);
            }
            acc += wasserstein1_1d(wa, wb);
        }
        return acc / 50.0;
    };
    const double narrow = mean_gap(200);
    const double wide = mean_gap(2000);
    const double ratio = narrow / wide;
    Outcome o;
    o.pass = ratio >= 2.0;
    o.detail = fmt("mean transport distance over 50 run pairs: %.4g at width 200 vs %.4g at "
                   "2000, ratio %.2f (need >= 2)",
                   narrow, wide, ratio);
    return o;
}

// 7: the limit ODE matches a wide noiseless run driven by the same sample
Outcome criterion7() {
    const DataModel model = DataModel::default_mixture(1);
    const auto act = ActivationSpec::ramp();
    const auto f = TestFunction::square();
    RngStream qrng(107, kReferenceRep, StreamPurpose::Quadrature);
    const auto sample = QuadratureSample::draw(model, 2000, qrng);

    SGDConfig pc;
    pc.n_neurons = 2000;
    pc.dim = 1;
    RngStream irng(107, kReferenceRep, StreamPurpose::Init);
    NetworkState cloud = init_state(pc, irng);
    const auto traj = integrate_meanfield(std::move(cloud.weights), sample, act, 0.1, 1.0,
                                          1.0 / 200.0, Integrator::Rk4, 100);
    const auto ode = reference_trace(traj, f);

    SGDConfig sc;
    sc.n_neurons = 4000;
    sc.dim = 1;
    sc.noise_std = 0.0;
    RngStream srng(107, 0, StreamPurpose::Init);
    NetworkState st = init_state(sc, srng);
    double half = 0.0, full = 0.0;
    const long steps = 4000;
    for (long k = 0; k < steps; ++k) {
        sgd_step_with_batch(sc, st, sample.xs, sample.ys, act, nullptr);
        if (k + 1 == steps / 2) half = bracket(f, st.weights);
    }
    full = bracket(f, st.weights);

    const double d_half = std::fabs(ode.value_at(0.5) - half);
    const double d_full = std::fabs(ode.value_at(1.0) - full);
    Outcome o;
    o.pass = d_half <= 5e-2 && d_full <= 5e-2;
    o.detail = fmt("limit ODE vs width-4000 full-sample run: |gap| %.4g at t=0.5, %.4g at "
                   "t=1 (tol 5e-2)",
                   d_half, d_full);
    return o;
}

// 8: mean scaled-fluctuation bands for the two noise exponents overlap
Outcome criterion8() {
    ExperimentConfig cfg = preset_config(ExperimentKind::Clt, ScalePreset::Desk);
    cfg.seed = 108;
    cfg.threads = 1;
    cfg.thin = 1000;  // every 0.5 time units at width 2000
    const CltReport rep = run_clt_experiment(cfg);
    const auto& a = rep.ensembles[0];
    const auto& b = rep.ensembles[1];
    double min_margin = 1e300;
    for (std::size_t g = 0; g < a.grid.size(); ++g) {
        const double margin =
            std::min(a.ci_hi[g], b.ci_hi[g]) - std::max(a.ci_lo[g], b.ci_lo[g]);
        min_margin = std::min(min_margin, margin);
    }
    Outcome o;
    o.pass = min_margin >= 0.0;
    o.detail = fmt("band overlap for exponents 1 and 2 over %zu grid times: worst margin "
                   "%.3g (need >= 0)",
                   a.grid.size(), min_margin);
    return o;
}

// 9: the 3/4 exponent adds a linear trend with the predicted slope
Outcome criterion9() {
    ExperimentConfig cfg = preset_config(ExperimentKind::Drift, ScalePreset::Desk);
    cfg.seed = 109;
    cfg.threads = 1;
    cfg.thin = 250;
    const DriftReport rep = run_drift_check(cfg);
    Outcome o;
    o.pass = rep.slope_mean >= 0.0075 && rep.slope_mean <= 0.0125;
    o.detail = fmt("coupled-gap slope %.5f +- %.5f over %d runs (band [0.0075, 0.0125], "
                   "crude prediction %.4f)",
                   rep.slope_mean, rep.slope_stderr, rep.replications, rep.predicted_slope);
    return o;
}

// 10: engineering invariants: reproducible bytes, thread invariance, config
// round-trip, non-negative covariance spectrum, analytic gradients
Outcome criterion10() {
    std::vector<std::string> fails;

    // config round-trip across every preset
    for (ExperimentKind k :
         {ExperimentKind::SingleRun, ExperimentKind::MeanFieldRun, ExperimentKind::Variance,
          ExperimentKind::Clt, ExperimentKind::Drift})
        for (ScalePreset s : {ScalePreset::Desk, ScalePreset::Paper}) {
            const ExperimentConfig cfg = preset_config(k, s);
            if (!(parse_config(serialize_config(cfg)) == cfg)) fails.push_back("round-trip");
        }

    // identical bytes from repeated runs, and from serial vs parallel farms
    ExperimentConfig vc = preset_config(ExperimentKind::Variance, ScalePreset::Desk);
    vc.sgd.n_neurons = 32;
    vc.sgd.dim = 2;
    vc.t_obs = 0.25;
    vc.replications = 12;
    vc.bootstrap = 5;
    vc.batch_sizes = {1, 2};
    vc.seed = 110;
    vc.threads = 1;
    const auto dir = std::filesystem::temp_directory_path() / "mfsgd_acceptance";
    ensure_directory(dir.string());
    auto emit = [&](const char* name, const VarianceReport& r) {
        const std::string p = (dir / name).string();
        write_variance_csv(p, r);
        std::ifstream in(p, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    const std::string bytes1 = emit("a.csv", run_variance_experiment(vc));
    const std::string bytes2 = emit("b.csv", run_variance_experiment(vc));
    vc.threads = 4;
    const std::string bytes3 = emit("c.csv", run_variance_experiment(vc));
    if (bytes1.empty() || bytes1 != bytes2) fails.push_back("repeat-bytes");
    if (bytes1 != bytes3) fails.push_back("thread-bytes");

    // covariance matrix over probes and times has a non-negative spectrum
    const auto act = ActivationSpec::ramp();
    const DataModel model = DataModel::default_mixture(1);
    RngStream qrng(110, kReferenceRep, StreamPurpose::Quadrature);
    const auto sample = QuadratureSample::draw(model, 100, qrng);
    RngStream irng(110, kReferenceRep, StreamPurpose::Init);
    Matrix init(50, 1);
    for (std::size_t i = 0; i < init.size(); ++i) init.data()[i] = 0.8 * irng.normal();
    const auto ref =
        integrate_meanfield(std::move(init), sample, act, 0.1, 0.5, 0.02, Integrator::Rk4, 1);
    const TestFunction probes[] = {TestFunction::square(), TestFunction::coordinate(0)};
    const double times[] = {0.25, 0.5};
    const Matrix C =
        gprocess_covariance_matrix(probes, times, ref, sample, act, 0.1, BatchSchedule::fixed(2));
    double min_eig = 1e300;
    for (double e : jacobi_eigenvalues(C)) min_eig = std::min(min_eig, e);
    if (!(min_eig >= -1e-10)) fails.push_back("spectrum");

    // analytic gradients vs central differences away from the kinks
    RngStream rng(110, 1, StreamPurpose::Data);
    const std::size_t d = 3;
    const auto quad = random_quadratic(d, rng);
    const auto nr = TestFunction::norm2();
    std::vector<double> w(d), x(d), g(d), wp(d), wm(d);
    double max_rel = 0.0;
    const double h = 1e-6;
    int done = 0;
    while (done < 100) {
        for (auto& v : w) v = rng.normal();
        for (auto& v : x) v = rng.normal();
        const double p = dot(w, x);
        const auto a = ActivationSpec::ramp();
        if (std::fabs(p - a.t_lo) < 0.05 || std::fabs(p - a.t_hi) < 0.05) continue;
        double nw = 0.0;
        for (double v : w) nw += v * v;
        if (nw < 0.01) continue;

        grad_sigma_star(a, w, x, g);
        for (std::size_t j = 0; j < d; ++j) {
            wp = w;
            wm = w;
            wp[j] += h;
            wm[j] -= h;
            const double fd = (sigma_star(a, wp, x) - sigma_star(a, wm, x)) / (2.0 * h);
            max_rel = std::max(max_rel, std::fabs(fd - g[j]) / std::max(1.0, std::fabs(g[j])));
        }
        for (const TestFunction* f : {&quad, &nr}) {
            f->gradient(w, g);
            for (std::size_t j = 0; j < d; ++j) {
                wp = w;
                wm = w;
                wp[j] += h;
                wm[j] -= h;
                const double fd = ((*f)(wp) - (*f)(wm)) / (2.0 * h);
                max_rel =
                    std::max(max_rel, std::fabs(fd - g[j]) / std::max(1.0, std::fabs(g[j])));
            }
        }
        ++done;
    }
    if (!(max_rel <= 1e-5)) fails.push_back("gradient");

    Outcome o;
    o.pass = fails.empty();
    if (o.pass) {
        o.detail = fmt("round-trip, byte-stable reruns, thread-invariant bytes, spectrum min "
                       "%.2g, gradient max rel err %.2g",
                       min_eig, max_rel);
    } else {
        o.detail = "failed:";
        for (const auto& f : fails) o.detail += " " + f;
    }
    return o;
}

struct Entry {
    Outcome (*run)();
    double budget;  // seconds; 0 = no cap pinned
};

const Entry kEntries[10] = {{criterion1, 1.0},   {criterion2, 0.0},    {criterion3, 60.0},
                            {criterion4, 0.0},   {criterion5, 300.0},  {criterion6, 120.0},
                            {criterion7, 180.0}, {criterion8, 1200.0}, {criterion9, 1200.0},
                            {criterion10, 30.0}};

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
    if (which.empty())
        for (int i = 1; i <= 10; ++i) which.push_back(i);

    int failures = 0;
    for (int idx : which) {
        if (idx < 1 || idx > 10) {
            std::fprintf(stderr, "no such criterion: %d\n", idx);
            return 2;
        }
        const Entry& e = kEntries[idx - 1];
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = e.run();
        } catch (const std::exception& ex) {
            o.pass = false;
            o.detail = std::string("exception: ") + ex.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool in_budget = e.budget <= 0.0 || secs <= e.budget;
        const bool pass = o.pass && in_budget;
        std::printf("%s criterion %02d: %s [%.1f s%s]\n", pass ? "PASS" : "FAIL", idx,
                    o.detail.c_str(), secs,
                    e.budget > 0.0 ? fmt(", cap %.0f s", e.budget).c_str() : "");
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
