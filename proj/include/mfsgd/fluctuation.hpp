#pragma once
#include <span>
#include <vector>

#include "mfsgd/matrix.hpp"
#include "mfsgd/meanfield.hpp"
#include "mfsgd/measure.hpp"
#include "mfsgd/model.hpp"
#include "mfsgd/stats.hpp"

namespace mfsgd {

// sqrt(N)-scaled gap between a finite-N probe trace and a limit reference,
// sampled on the run's grid (the reference is interpolated)
TraceSeries fluctuation_trace(const TraceSeries& run, const TraceSeries& reference);

// centered-residual kernel against a fixed cloud:
// (y - <sigma*(.,x), mu>) <grad f . grad sigma*(.,x), mu>
double q_kernel(const TestFunction& f, const ActivationSpec& act, const Matrix& mu,
                std::span<const double> x, double y);

struct CovarianceEstimate {
    double s = 0.0, t = 0.0;
    double value = 0.0;
    std::vector<double> nodes;      // time nodes of the trapezoid rule
    std::vector<double> integrand;  // kernel covariance under the data law at each node
};

// limit covariance of the accumulated batch fluctuation between probe fi at
// time t and probe fj at time s:
//   alpha^2 E[1/m_inf] int_0^min(s,t) Cov(Q_v[fi], Q_v[fj]) dv
// with the time integral on the trajectory's snapshot grid and the data
// covariance estimated over the supplied sample
CovarianceEstimate gprocess_covariance(const TestFunction& fi, const TestFunction& fj, double s,
                                       double t, const MeanFieldTrajectory& ref,
                                       const QuadratureSample& sample, const ActivationSpec& act,
                                       double alpha, const BatchSchedule& batch);

// covariance over all (probe, time) pairs, ordered probe-major; symmetric and
// positive semi-definite up to roundoff
Matrix gprocess_covariance_matrix(std::span<const TestFunction> probes,
                                  std::span<const double> times,
                                  const MeanFieldTrajectory& ref, const QuadratureSample& sample,
                                  const ActivationSpec& act, double alpha,
                                  const BatchSchedule& batch);

struct DriftFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
    double r2 = 0.0;
};
// least-squares line through the pointwise gap a - b on a shared grid
DriftFit drift_fit(const TraceSeries& a, const TraceSeries& b);

}  // namespace mfsgd
