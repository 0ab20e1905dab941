#pragma once
#include <cstddef>
#include <span>
#include <vector>

#include "mfsgd/matrix.hpp"
#include "mfsgd/rng.hpp"

namespace mfsgd {

enum class ActivationKind { Ramp, SmoothRamp };

// bounded piecewise-linear unit: value lo below t_lo, hi above t_hi, linear
// with the given slope in between; SmoothRamp replaces each corner with a
// quadratic blend of half-width h (C^1, same bounds, derivative in [0,slope])
struct ActivationSpec {
    ActivationKind kind = ActivationKind::Ramp;
    double lo = -2.5;
    double hi = 7.5;
    double slope = 10.0;
    double t_lo = 0.5;
    double t_hi = 1.5;
    double h = 0.0;

    static ActivationSpec ramp() { return {}; }
    static ActivationSpec smooth_ramp(double half_width);

    void validate() const;
    double sup_abs() const;     // sup |f|
    double deriv_bound() const; // sup |f'|

    bool operator==(const ActivationSpec&) const = default;
};

double ramp_eval(const ActivationSpec& a, double t);
// convention at the ramp kinks: left derivative (f' = slope on (t_lo, t_hi])
double ramp_deriv(const ActivationSpec& a, double t);

double sigma_star(const ActivationSpec& a, std::span<const double> w, std::span<const double> x);
void grad_sigma_star(const ActivationSpec& a, std::span<const double> w, std::span<const double> x,
                     std::span<double> out);
// averaged unit output (1/N) sum_i sigma*(W_i, x)
double network_output(const ActivationSpec& a, const Matrix& weights, std::span<const double> x);

// isotropic Gaussian mixture over (x, y): pick a component by weight, emit its
// fixed label y and x ~ N(mean, sigma^2 I_d)
struct MixtureComponent {
    double weight = 0.5;
    double label = 1.0;
    double sigma = 1.0;
    std::vector<double> mean;  // empty = origin

    bool operator==(const MixtureComponent&) const = default;
};

struct DataModel {
    std::size_t dim = 1;
    std::vector<MixtureComponent> components;

    // the two-class model used throughout: y=+1 with x ~ N(0, 1.2^2 I),
    // y=-1 with x ~ N(0, 0.8^2 I), equal weights
    static DataModel default_mixture(std::size_t d);

    void validate() const;
    // draw order per point is fixed: one uniform (component), then d normals
    void sample(RngStream& rng, std::span<double> x_out, double& y_out) const;
    double max_abs_label() const;

    bool operator==(const DataModel&) const = default;
};

// deterministic mini-batch size schedule: an explicit head, then a constant
// tail value (the batch size "at infinity")
class BatchSchedule {
public:
    BatchSchedule() = default;
    static BatchSchedule fixed(int m);
    static BatchSchedule sequence(std::vector<int> head, int tail);

    int at(long step) const {
        return step < static_cast<long>(head_.size()) ? head_[static_cast<std::size_t>(step)]
                                                      : tail_;
    }
    int tail() const { return tail_; }
    double mean_inverse_tail() const { return 1.0 / tail_; }
    const std::vector<int>& head() const { return head_; }

    void validate() const;

    bool operator==(const BatchSchedule&) const = default;

private:
    std::vector<int> head_;
    int tail_ = 1;
};

}  // namespace mfsgd
