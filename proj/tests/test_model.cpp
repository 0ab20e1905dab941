#include <cmath>

#include "doctest.h"
#include "mfsgd/errors.hpp"
#include "mfsgd/model.hpp"
#include "mfsgd/rng.hpp"

using namespace mfsgd;

TEST_SUITE("model") {

TEST_CASE("ramp values at hand-checked points") {
    const auto a = ActivationSpec::ramp();
    CHECK(ramp_eval(a, 0.0) == -2.5);
    CHECK(ramp_eval(a, 0.5) == -2.5);
    CHECK(ramp_eval(a, 0.75) == 0.0);
    CHECK(ramp_eval(a, 1.0) == 2.5);
    CHECK(ramp_eval(a, 1.5) == 7.5);
    CHECK(ramp_eval(a, 2.0) == 7.5);
    CHECK(ramp_eval(a, -100.0) == -2.5);
    CHECK(ramp_eval(a, 100.0) == 7.5);
}

TEST_CASE("ramp derivative uses the left convention at kinks") {
    const auto a = ActivationSpec::ramp();
    CHECK(ramp_deriv(a, 0.4) == 0.0);
    CHECK(ramp_deriv(a, 0.5) == 0.0);   // kink: left derivative
    CHECK(ramp_deriv(a, 0.6) == 10.0);
    CHECK(ramp_deriv(a, 1.0) == 10.0);
    CHECK(ramp_deriv(a, 1.5) == 10.0);  // kink: left derivative
    CHECK(ramp_deriv(a, 1.6) == 0.0);
}

TEST_CASE("smoothed ramp matches the hand-derived blend at h = 0.1") {
    const auto a = ActivationSpec::smooth_ramp(0.1);
    CHECK(ramp_eval(a, 0.5) == doctest::Approx(-2.25).epsilon(1e-12));
    CHECK(ramp_deriv(a, 0.5) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(ramp_deriv(a, 0.4) == doctest::Approx(0.0));
    CHECK(ramp_deriv(a, 0.6) == doctest::Approx(10.0).epsilon(1e-12));
    // outside the blend bands it is the plain ramp
    CHECK(ramp_eval(a, 0.3) == -2.5);
    CHECK(ramp_eval(a, 1.0) == 2.5);
    CHECK(ramp_eval(a, 2.0) == 7.5);
    // C^1 across the band edges
    CHECK(ramp_eval(a, 0.4) == doctest::Approx(-2.5).epsilon(1e-12));
    CHECK(ramp_eval(a, 1.6) == doctest::Approx(7.5).epsilon(1e-12));
}

TEST_CASE("activation validation catches inconsistent shapes") {
    auto a = ActivationSpec::ramp();
    CHECK_NOTHROW(a.validate());
    a.slope = 0.0;
    CHECK_THROWS_AS(a.validate(), ConfigError);
    a = ActivationSpec::ramp();
    a.hi = 5.0;  // breaks hi = lo + slope (t_hi - t_lo)
    CHECK_THROWS_AS(a.validate(), ConfigError);
    a = ActivationSpec::ramp();
    a.kind = ActivationKind::SmoothRamp;
    a.h = 0.0;
    CHECK_THROWS_AS(a.validate(), ConfigError);
    a.h = 10.0;  // wider than half the linear stretch
    CHECK_THROWS_AS(a.validate(), ConfigError);
}

TEST_CASE("activation bounds") {
    const auto a = ActivationSpec::ramp();
    CHECK(a.sup_abs() == 7.5);
    CHECK(a.deriv_bound() == 10.0);
}

TEST_CASE("unit output and gradient through the inner product") {
    const auto a = ActivationSpec::ramp();
    const double w[2] = {0.5, 0.25};
    const double x[2] = {1.0, 2.0};  // w.x = 1 -> f = 2.5, f' = 10
    CHECK(sigma_star(a, w, x) == 2.5);
    double g[2];
    grad_sigma_star(a, w, x, g);
    CHECK(g[0] == 10.0);
    CHECK(g[1] == 20.0);

    const double x1[1] = {1.0};
    CHECK_THROWS_AS(sigma_star(a, w, x1), DimensionError);
}

TEST_CASE("network output averages the units") {
    const auto a = ActivationSpec::ramp();
    Matrix w(2, 1);
    w(0, 0) = 0.75;  // f = 0
    w(1, 0) = 1.0;   // f = 2.5
    const double x[1] = {1.0};
    CHECK(network_output(a, w, x) == 1.25);
}

TEST_CASE("default mixture moments match the closed forms") {
    const std::size_t d = 3;
    const DataModel model = DataModel::default_mixture(d);
    model.validate();
    CHECK(model.max_abs_label() == 1.0);

    RngStream rng(7, 0, StreamPurpose::Data);
    const int n = 200000;
    std::vector<double> x(d);
    double y = 0.0;
    double sum_y = 0.0, sum_x2 = 0.0;
    for (int i = 0; i < n; ++i) {
        model.sample(rng, x, y);
        CHECK((y == 1.0 || y == -1.0));
        double s2 = 0.0;
        for (double v : x) s2 += v * v;
        sum_y += y;
        sum_x2 += s2;
    }
    // E[y] = 0 and E|x|^2 = (1.44 + 0.64)/2 * d = 1.04 d
    CHECK(std::abs(sum_y / n) < 0.01);
    CHECK(sum_x2 / n == doctest::Approx(1.04 * d).epsilon(0.02));
}

TEST_CASE("mixture validation requires unit total weight") {
    DataModel m = DataModel::default_mixture(2);
    m.components[0].weight = 0.7;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m.components[0].weight = 0.5;
    m.components[1].sigma = 0.0;
    CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("batch schedule head then constant tail") {
    const auto fixed = BatchSchedule::fixed(3);
    CHECK(fixed.at(0) == 3);
    CHECK(fixed.at(1000000) == 3);
    CHECK(fixed.tail() == 3);
    CHECK(fixed.mean_inverse_tail() == doctest::Approx(1.0 / 3.0));

    const auto seq = BatchSchedule::sequence({4, 2}, 1);
    CHECK(seq.at(0) == 4);
    CHECK(seq.at(1) == 2);
    CHECK(seq.at(2) == 1);
    CHECK(seq.at(100) == 1);
    CHECK(seq.tail() == 1);

    CHECK_THROWS_AS(BatchSchedule::fixed(0).validate(), ConfigError);
    CHECK_THROWS_AS(BatchSchedule::sequence({1, 0}, 2).validate(), ConfigError);
}

}  // TEST_SUITE
