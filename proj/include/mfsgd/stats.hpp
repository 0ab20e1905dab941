#pragma once
#include <span>
#include <vector>

#include "mfsgd/matrix.hpp"

namespace mfsgd {

double mean_of(std::span<const double> v);
double variance_population(std::span<const double> v);

struct RunningStats {
    long count = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void add(double x);
    double variance() const;  // population
    double stddev() const;
};

struct OlsFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
    double r2 = 0.0;
};
OlsFit ols_fit(std::span<const double> x, std::span<const double> y);

// rank correlation; ties get midranks
double spearman_rho(std::span<const double> a, std::span<const double> b);

// eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending
std::vector<double> jacobi_eigenvalues(Matrix a);

}  // namespace mfsgd
