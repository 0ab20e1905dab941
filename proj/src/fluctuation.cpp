#include "mfsgd/fluctuation.hpp"

#include <cmath>

#include "mfsgd/errors.hpp"

namespace mfsgd {

TraceSeries fluctuation_trace(const TraceSeries& run, const TraceSeries& reference) {
    run.validate();
    reference.validate();
    if (run.n <= 0)
        throw ConfigError("fluctuation: the run trace needs a positive particle count");
    TraceSeries out = run;
    const double scale = std::sqrt(static_cast<double>(run.n));
    for (std::size_t i = 0; i < run.grid.size(); ++i)
        out.values[i] = scale * (run.values[i] - reference.value_at(run.grid[i]));
    return out;
}

double q_kernel(const TestFunction& f, const ActivationSpec& act, const Matrix& mu,
                std::span<const double> x, double y) {
    const PairBracket pb = residual_brackets(act, mu, x, f);
    return (y - pb.sig) * pb.grad;
}

namespace {

// Cov over the sample of (Q_v[fi], Q_v[fj]) at each trajectory node with
// time <= lo, plus an interpolated node at lo itself when it falls between
// snapshots
void kernel_covariance_nodes(const TestFunction& fi, const TestFunction& fj, double lo,
                             const MeanFieldTrajectory& ref, const QuadratureSample& sample,
                             const ActivationSpec& act, std::vector<double>& nodes,
                             std::vector<double>& vals) {
    const std::size_t Q = sample.size();
    const double slack = 1e-12 * std::max(1.0, lo);
    auto node_value = [&](const Matrix& snap) {
        double sa = 0.0, sb = 0.0, sab = 0.0;
        for (std::size_t q = 0; q < Q; ++q) {
            const double a = q_kernel(fi, act, snap, sample.xs.row(q), sample.ys[q]);
            const double b = q_kernel(fj, act, snap, sample.xs.row(q), sample.ys[q]);
            sa += a;
            sb += b;
            sab += a * b;
        }
        const double invQ = 1.0 / static_cast<double>(Q);
        return sab * invQ - (sa * invQ) * (sb * invQ);
    };
    nodes.clear();
    vals.clear();
    std::size_t idx = 0;
    for (; idx < ref.times.size() && ref.times[idx] <= lo + slack; ++idx) {
        nodes.push_back(ref.times[idx]);
        vals.push_back(node_value(ref.snapshots[idx]));
    }
    if (nodes.empty()) throw ConfigError("covariance: trajectory does not start at time zero");
    if (nodes.back() < lo - slack) {
        if (idx >= ref.times.size())
            throw ConfigError("covariance: time beyond the trajectory span");
        const double t0 = nodes.back(), t1 = ref.times[idx];
        const double v1 = node_value(ref.snapshots[idx]);
        const double u = (lo - t0) / (t1 - t0);
        nodes.push_back(lo);
        vals.push_back(vals.back() + u * (v1 - vals.back()));
    }
}

double trapezoid(std::span<const double> nodes, std::span<const double> vals, double lo) {
    double acc = 0.0;
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        if (nodes[i] <= lo) {
            acc += 0.5 * (vals[i] + vals[i - 1]) * (nodes[i] - nodes[i - 1]);
        } else {
            // partial last segment, integrand interpolated
            const double u = (lo - nodes[i - 1]) / (nodes[i] - nodes[i - 1]);
            const double vl = vals[i - 1] + u * (vals[i] - vals[i - 1]);
            acc += 0.5 * (vl + vals[i - 1]) * (lo - nodes[i - 1]);
            break;
        }
    }
    return acc;
}

void check_cov_inputs(const MeanFieldTrajectory& ref, const QuadratureSample& sample,
                      const ActivationSpec& act, const BatchSchedule& batch) {
    act.validate();
    batch.validate();
    if (ref.times.empty() || ref.times.size() != ref.snapshots.size())
        throw ConfigError("covariance: malformed trajectory");
    if (sample.size() < 2) throw ConfigError("covariance: need at least two sample points");
}

}  // namespace

CovarianceEstimate gprocess_covariance(const TestFunction& fi, const TestFunction& fj, double s,
                                       double t, const MeanFieldTrajectory& ref,
                                       const QuadratureSample& sample, const ActivationSpec& act,
                                       double alpha, const BatchSchedule& batch) {
    check_cov_inputs(ref, sample, act, batch);
    if (!(s >= 0.0) || !(t >= 0.0)) throw ConfigError("covariance: times must be non-negative");
    const double lo = std::min(s, t);
    if (lo > ref.times.back() + 1e-12 * std::max(1.0, lo))
        throw ConfigError("covariance: time beyond the trajectory span");
    CovarianceEstimate est;
    est.s = s;
    est.t = t;
    kernel_covariance_nodes(fi, fj, lo, ref, sample, act, est.nodes, est.integrand);
    est.value = alpha * alpha * batch.mean_inverse_tail() *
                trapezoid(est.nodes, est.integrand, lo);
    return est;
}

Matrix gprocess_covariance_matrix(std::span<const TestFunction> probes,
                                  std::span<const double> times,
                                  const MeanFieldTrajectory& ref, const QuadratureSample& sample,
                                  const ActivationSpec& act, double alpha,
                                  const BatchSchedule& batch) {
    check_cov_inputs(ref, sample, act, batch);
    if (probes.empty() || times.empty())
        throw ConfigError("covariance matrix: need probes and times");
    double tmax = 0.0;
    for (double v : times) {
        if (!(v >= 0.0)) throw ConfigError("covariance matrix: times must be non-negative");
        tmax = std::max(tmax, v);
    }
    if (tmax > ref.times.back() + 1e-12 * std::max(1.0, tmax))
        throw ConfigError("covariance matrix: time beyond the trajectory span");
    const std::size_t P = probes.size(), T = times.size(), n = P * T;
    Matrix cov(n, n);
    std::vector<double> nodes, vals;
    for (std::size_t pi = 0; pi < P; ++pi)
        for (std::size_t pj = pi; pj < P; ++pj) {
            kernel_covariance_nodes(probes[pi], probes[pj], tmax, ref, sample, act, nodes, vals);
            const double pref = alpha * alpha * batch.mean_inverse_tail();
            for (std::size_t a = 0; a < T; ++a)
                for (std::size_t b = 0; b < T; ++b) {
                    const double lo = std::min(times[a], times[b]);
                    const double v = pref * trapezoid(nodes, vals, lo);
                    cov(pi * T + a, pj * T + b) = v;
                    cov(pj * T + b, pi * T + a) = v;
                }
        }
    return cov;
}

DriftFit drift_fit(const TraceSeries& a, const TraceSeries& b) {
    a.validate();
    b.validate();
    if (a.grid.size() != b.grid.size())
        throw DimensionError("drift fit: traces must share a grid");
    const double slack = 1e-12 * std::max(1.0, std::fabs(a.grid.back()));
    for (std::size_t i = 0; i < a.grid.size(); ++i)
        if (std::fabs(a.grid[i] - b.grid[i]) > slack)
            throw DimensionError("drift fit: traces must share a grid");
    std::vector<double> diff(a.grid.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a.values[i] - b.values[i];
    const OlsFit fit = ols_fit(a.grid, diff);
    return {fit.slope, fit.intercept, fit.stderr_slope, fit.r2};
}

}  // namespace mfsgd
