#include "mfsgd/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mfsgd/errors.hpp"

namespace mfsgd {

ActivationSpec ActivationSpec::smooth_ramp(double half_width) {
    ActivationSpec a;
    a.kind = ActivationKind::SmoothRamp;
    a.h = half_width;
    a.validate();
    return a;
}

void ActivationSpec::validate() const {
    if (!(t_lo < t_hi)) throw ConfigError("activation: t_lo must be < t_hi");
    if (!(slope > 0.0)) throw ConfigError("activation: slope must be positive");
    if (!(lo < hi)) throw ConfigError("activation: lo must be < hi");
    const double rise = lo + slope * (t_hi - t_lo);
    if (std::fabs(rise - hi) > 1e-9 * std::max(1.0, std::fabs(hi)))
        throw ConfigError("activation: hi must equal lo + slope*(t_hi - t_lo)");
    if (kind == ActivationKind::SmoothRamp) {
        if (!(h > 0.0)) throw ConfigError("activation: smoothing half-width must be positive");
        if (!(h < 0.5 * (t_hi - t_lo)))
            throw ConfigError("activation: smoothing half-width too large for the ramp");
    }
}

double ActivationSpec::sup_abs() const { return std::max(std::fabs(lo), std::fabs(hi)); }

double ActivationSpec::deriv_bound() const { return slope; }

double ramp_eval(const ActivationSpec& a, double t) {
    if (a.kind == ActivationKind::Ramp)
        return std::clamp(a.lo + a.slope * (t - a.t_lo), a.lo, a.hi);
    // corner blends: each kink becomes a quadratic on [corner-h, corner+h]
    const double h = a.h, c = a.slope / (4.0 * h);
    if (t <= a.t_lo - h) return a.lo;
    if (t < a.t_lo + h) {
        const double u = t - (a.t_lo - h);
        return a.lo + c * u * u;
    }
    if (t <= a.t_hi - h) return a.lo + a.slope * (t - a.t_lo);
    if (t < a.t_hi + h) {
        const double u = (a.t_hi + h) - t;
        return a.hi - c * u * u;
    }
    return a.hi;
}

double ramp_deriv(const ActivationSpec& a, double t) {
    if (a.kind == ActivationKind::Ramp)
        return (t > a.t_lo && t <= a.t_hi) ? a.slope : 0.0;
    const double h = a.h;
    if (t <= a.t_lo - h || t >= a.t_hi + h) return 0.0;
    if (t < a.t_lo + h) return a.slope / (2.0 * h) * (t - (a.t_lo - h));
    if (t <= a.t_hi - h) return a.slope;
    return a.slope / (2.0 * h) * ((a.t_hi + h) - t);
}

double sigma_star(const ActivationSpec& a, std::span<const double> w, std::span<const double> x) {
    if (w.size() != x.size()) throw DimensionError("sigma_star: weight/input dimension mismatch");
    return ramp_eval(a, dot(w, x));
}

void grad_sigma_star(const ActivationSpec& a, std::span<const double> w,
                     std::span<const double> x, std::span<double> out) {
    if (w.size() != x.size() || out.size() != x.size())
        throw DimensionError("grad_sigma_star: dimension mismatch");
    const double fp = ramp_deriv(a, dot(w, x));
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = fp * x[j];
}

double network_output(const ActivationSpec& a, const Matrix& weights, std::span<const double> x) {
    if (weights.cols() != x.size())
        throw DimensionError("network_output: weight/input dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < weights.rows(); ++i) s += ramp_eval(a, dot(weights.row(i), x));
    return s / static_cast<double>(weights.rows());
}

DataModel DataModel::default_mixture(std::size_t d) {
    DataModel m;
    m.dim = d;
    m.components = {{0.5, 1.0, 1.2, {}}, {0.5, -1.0, 0.8, {}}};
    return m;
}

void DataModel::validate() const {
    if (dim == 0) throw ConfigError("data model: dimension must be positive");
    if (components.empty()) throw ConfigError("data model: needs at least one component");
    double total = 0.0;
    for (const auto& c : components) {
        if (!(c.weight > 0.0)) throw ConfigError("data model: component weights must be positive");
        if (!(c.sigma > 0.0)) throw ConfigError("data model: component sigma must be positive");
        if (!c.mean.empty() && c.mean.size() != dim)
            throw DimensionError("data model: component mean has wrong dimension");
        total += c.weight;
    }
    if (std::fabs(total - 1.0) > 1e-12)
        throw ConfigError("data model: component weights must sum to 1, got " +
                          std::to_string(total));
}

void DataModel::sample(RngStream& rng, std::span<double> x_out, double& y_out) const {
    if (x_out.size() != dim) throw DimensionError("data sample: output buffer has wrong dimension");
    const double u = rng.uniform();
    double acc = 0.0;
    const MixtureComponent* pick = &components.back();
    for (const auto& c : components) {
        acc += c.weight;
        if (u < acc) {
            pick = &c;
            break;
        }
    }
    y_out = pick->label;
    if (pick->mean.empty()) {
        for (std::size_t j = 0; j < dim; ++j) x_out[j] = pick->sigma * rng.normal();
    } else {
        for (std::size_t j = 0; j < dim; ++j) x_out[j] = pick->mean[j] + pick->sigma * rng.normal();
    }
}

double DataModel::max_abs_label() const {
    double m = 0.0;
    for (const auto& c : components) m = std::max(m, std::fabs(c.label));
    return m;
}

BatchSchedule BatchSchedule::fixed(int m) {
    BatchSchedule s;
    s.tail_ = m;
    s.validate();
    return s;
}

BatchSchedule BatchSchedule::sequence(std::vector<int> head, int tail) {
    BatchSchedule s;
    s.head_ = std::move(head);
    s.tail_ = tail;
    s.validate();
    return s;
}

void BatchSchedule::validate() const {
    if (tail_ < 1) throw ConfigError("batch schedule: tail size must be >= 1");
    for (int m : head_)
        if (m < 1) throw ConfigError("batch schedule: sizes must be >= 1");
}

}  // namespace mfsgd
