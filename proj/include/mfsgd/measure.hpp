#pragma once
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mfsgd/matrix.hpp"
#include "mfsgd/model.hpp"

namespace mfsgd {

// point cloud standing in for an empirical measure (1/M) sum_i delta_{points_i}
struct EmpiricalSnapshot {
    Matrix points;
    double time_tag = 0.0;
};

// observable f : R^d -> R paired against empirical/limit measures
class TestFunction {
public:
    enum class Kind { Norm2, Square, Coordinate, Affine, Quadratic, Activation };

    static TestFunction norm2();                  // f(w) = |w|
    static TestFunction square();                 // f(w) = |w|^2
    static TestFunction coordinate(std::size_t j);
    static TestFunction affine(std::vector<double> a, double b);  // a.w + b
    // w'Aw + a.w + b
    static TestFunction quadratic(Matrix A, std::vector<double> a, double b);
    static TestFunction activation_probe(ActivationSpec act, std::vector<double> x0);

    Kind kind() const { return kind_; }
    const std::string& name() const { return name_; }
    std::size_t coordinate_index() const { return index_; }

    double operator()(std::span<const double> w) const;
    void gradient(std::span<const double> w, std::span<double> out) const;

    // kinds with a constant Hessian (Square/Affine/Quadratic) support the
    // exact quadratic form dw' H dw; others throw ProbeError
    bool constant_hessian() const;
    double hessian_form(std::span<const double> dw) const;

    // payload access for specialized kernels
    const std::vector<double>& linear_part() const { return a_; }
    const Matrix& quadratic_part() const { return A_; }
    const ActivationSpec& probe_activation() const { return act_; }
    const std::vector<double>& probe_input() const { return x0_; }

    void check_dim(std::size_t d) const;

private:
    explicit TestFunction(Kind k) : kind_(k) {}

    Kind kind_;
    std::string name_;
    std::size_t index_ = 0;
    std::vector<double> a_;
    double b_ = 0.0;
    Matrix A_;
    ActivationSpec act_;
    std::vector<double> x0_;
};

double bracket(const TestFunction& f, const Matrix& points);
double bracket(const TestFunction& f, const EmpiricalSnapshot& snap);
// mean of |w|^p over the cloud
double moment(const EmpiricalSnapshot& snap, int p);

// exact 1-d Wasserstein-1 distance between two empirical measures
// (unequal sample counts allowed)
double wasserstein1_1d(std::span<const double> a, std::span<const double> b);

// one pass over the cloud: sig = <sigma*(., x), nu>, grad = <grad f . grad sigma*(., x), nu>
struct PairBracket {
    double sig = 0.0;
    double grad = 0.0;
};
PairBracket residual_brackets(const ActivationSpec& act, const Matrix& points,
                              std::span<const double> x, const TestFunction& f);

// scalar observable sampled on a strictly increasing time grid, with the run
// metadata needed to emit/aggregate it later
struct TraceSeries {
    std::vector<double> grid;
    std::vector<double> values;
    std::string probe;
    double beta = 1.0;
    long n = 0;  // particle/neuron count behind the trace (0 = analytic limit)
    std::uint64_t seed = 0;
    std::uint32_t replication = 0;

    void validate() const;
    double value_at(double t) const;  // linear interpolation inside the grid span
    TraceSeries thinned(std::size_t stride) const;
};

}  // namespace mfsgd
