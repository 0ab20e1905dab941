#include "mfsgd/measure.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mfsgd/errors.hpp"

namespace mfsgd {

TestFunction TestFunction::norm2() {
    TestFunction f(Kind::Norm2);
    f.name_ = "norm2";
    return f;
}

TestFunction TestFunction::square() {
    TestFunction f(Kind::Square);
    f.name_ = "square";
    return f;
}

TestFunction TestFunction::coordinate(std::size_t j) {
    TestFunction f(Kind::Coordinate);
    f.index_ = j;
    f.name_ = "coord" + std::to_string(j);
    return f;
}

TestFunction TestFunction::affine(std::vector<double> a, double b) {
    TestFunction f(Kind::Affine);
    f.a_ = std::move(a);
    f.b_ = b;
    f.name_ = "affine";
    return f;
}

TestFunction TestFunction::quadratic(Matrix A, std::vector<double> a, double b) {
    if (A.rows() != A.cols()) throw DimensionError("quadratic probe: A must be square");
    if (a.size() != A.rows()) throw DimensionError("quadratic probe: a/A dimension mismatch");
    TestFunction f(Kind::Quadratic);
    f.A_ = std::move(A);
    f.a_ = std::move(a);
    f.b_ = b;
    f.name_ = "quadratic";
    return f;
}

TestFunction TestFunction::activation_probe(ActivationSpec act, std::vector<double> x0) {
    act.validate();
    if (x0.empty()) throw DimensionError("activation probe: empty input point");
    TestFunction f(Kind::Activation);
    f.act_ = act;
    f.x0_ = std::move(x0);
    f.name_ = "act";
    return f;
}

void TestFunction::check_dim(std::size_t d) const {
    switch (kind_) {
        case Kind::Coordinate:
            if (index_ >= d) throw DimensionError("coordinate probe: index out of range");
            break;
        case Kind::Affine:
            if (a_.size() != d) throw DimensionError("affine probe: dimension mismatch");
            break;
        case Kind::Quadratic:
            if (a_.size() != d) throw DimensionError("quadratic probe: dimension mismatch");
            break;
        case Kind::Activation:
            if (x0_.size() != d) throw DimensionError("activation probe: dimension mismatch");
            break;
        default:
            break;
    }
}

double TestFunction::operator()(std::span<const double> w) const {
    check_dim(w.size());
    switch (kind_) {
        case Kind::Norm2: {
            double q = 0.0;
            for (double v : w) q += v * v;
            return std::sqrt(q);
        }
        case Kind::Square: {
            double q = 0.0;
            for (double v : w) q += v * v;
            return q;
        }
        case Kind::Coordinate:
            return w[index_];
        case Kind::Affine:
            return dot(a_, w) + b_;
        case Kind::Quadratic: {
            double q = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) q += w[i] * dot(A_.row(i), w);
            return q + dot(a_, w) + b_;
        }
        case Kind::Activation:
            return ramp_eval(act_, dot(x0_, w));
    }
    return 0.0;  // unreachable
}

void TestFunction::gradient(std::span<const double> w, std::span<double> out) const {
    check_dim(w.size());
    if (out.size() != w.size()) throw DimensionError("gradient: output buffer size mismatch");
    switch (kind_) {
        case Kind::Norm2: {
            double q = 0.0;
            for (double v : w) q += v * v;
            const double r = std::sqrt(q);
            if (r == 0.0) {
                std::fill(out.begin(), out.end(), 0.0);
            } else {
                for (std::size_t j = 0; j < w.size(); ++j) out[j] = w[j] / r;
            }
            return;
        }
        case Kind::Square:
            for (std::size_t j = 0; j < w.size(); ++j) out[j] = 2.0 * w[j];
            return;
        case Kind::Coordinate:
            std::fill(out.begin(), out.end(), 0.0);
            out[index_] = 1.0;
            return;
        case Kind::Affine:
            std::copy(a_.begin(), a_.end(), out.begin());
            return;
        case Kind::Quadratic:
            // f = w'Aw + a.w, so grad = (A + A')w + a
            for (std::size_t i = 0; i < w.size(); ++i) {
                double s = a_[i];
                for (std::size_t j = 0; j < w.size(); ++j) s += (A_(i, j) + A_(j, i)) * w[j];
                out[i] = s;
            }
            return;
        case Kind::Activation: {
            const double fp = ramp_deriv(act_, dot(x0_, w));
            for (std::size_t j = 0; j < w.size(); ++j) out[j] = fp * x0_[j];
            return;
        }
    }
}

bool TestFunction::constant_hessian() const {
    return kind_ == Kind::Square || kind_ == Kind::Affine || kind_ == Kind::Quadratic;
}

double TestFunction::hessian_form(std::span<const double> dw) const {
    switch (kind_) {
        case Kind::Square: {
            double q = 0.0;
            for (double v : dw) q += v * v;
            return 2.0 * q;
        }
        case Kind::Affine:
            return 0.0;
        case Kind::Quadratic: {
            check_dim(dw.size());
            double q = 0.0;
            for (std::size_t i = 0; i < dw.size(); ++i)
                for (std::size_t j = 0; j < dw.size(); ++j)
                    q += (A_(i, j) + A_(j, i)) * dw[i] * dw[j];
            return q;
        }
        default:
            throw ProbeError("probe '" + name_ + "' has no constant Hessian");
    }
}

double bracket(const TestFunction& f, const Matrix& points) {
    const std::size_t n = points.rows();
    if (n == 0) throw DimensionError("bracket: empty cloud");
    if (f.kind() == TestFunction::Kind::Square) {
        // |w|^2 summed over all entries, regardless of d
        double q = 0.0;
        const double* p = points.data();
        const std::size_t total = points.size();
        for (std::size_t i = 0; i < total; ++i) q += p[i] * p[i];
        return q / static_cast<double>(n);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += f(points.row(i));
    return s / static_cast<double>(n);
}

double bracket(const TestFunction& f, const EmpiricalSnapshot& snap) {
    return bracket(f, snap.points);
}

double moment(const EmpiricalSnapshot& snap, int p) {
    if (p < 0) throw ConfigError("moment: order must be non-negative");
    const std::size_t n = snap.points.rows();
    if (n == 0) throw DimensionError("moment: empty cloud");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double q = 0.0;
        for (double v : snap.points.row(i)) q += v * v;
        s += std::pow(std::sqrt(q), p);
    }
    return s / static_cast<double>(n);
}

double wasserstein1_1d(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw DimensionError("wasserstein1_1d: empty sample");
    std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    // integrate |F_a - F_b| over the merged support
    const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
    std::size_t i = 0, j = 0;
    double w1 = 0.0, prev = 0.0;
    bool first = true;
    while (i < sa.size() || j < sb.size()) {
        double next;
        if (i < sa.size() && (j >= sb.size() || sa[i] <= sb[j]))
            next = sa[i];
        else
            next = sb[j];
        if (!first) w1 += std::fabs(i / na - j / nb) * (next - prev);
        first = false;
        while (i < sa.size() && sa[i] == next) ++i;
        while (j < sb.size() && sb[j] == next) ++j;
        prev = next;
    }
    return w1;
}

PairBracket residual_brackets(const ActivationSpec& act, const Matrix& points,
                              std::span<const double> x, const TestFunction& f) {
    const std::size_t n = points.rows(), d = points.cols();
    if (d != x.size()) throw DimensionError("residual_brackets: input dimension mismatch");
    if (n == 0) throw DimensionError("residual_brackets: empty cloud");
    const double inv_n = 1.0 / static_cast<double>(n);
    double sig = 0.0, grad = 0.0;

    if (d == 1 && act.kind == ActivationKind::Ramp &&
        f.kind() == TestFunction::Kind::Square) {
        // hot path for ensemble runs: branchless so it vectorizes
        const double X = x[0], lo = act.lo, hi = act.hi, s = act.slope;
        const double tl = act.t_lo, th = act.t_hi;
        const double* w = points.data();
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = w[i] * X;
            sig += std::clamp(lo + s * (p - tl), lo, hi);
            acc += ((p > tl) & (p <= th)) ? p : 0.0;
        }
        return {sig * inv_n, 2.0 * s * acc * inv_n};
    }

    f.check_dim(d);
    switch (f.kind()) {
        case TestFunction::Kind::Square:
            for (std::size_t i = 0; i < n; ++i) {
                const double p = dot(points.row(i), x);
                sig += ramp_eval(act, p);
                grad += 2.0 * ramp_deriv(act, p) * p;
            }
            break;
        case TestFunction::Kind::Norm2:
            for (std::size_t i = 0; i < n; ++i) {
                const auto w = points.row(i);
                const double p = dot(w, x);
                sig += ramp_eval(act, p);
                const double r = std::sqrt(dot(w, w));
                if (r > 0.0) grad += ramp_deriv(act, p) * p / r;
            }
            break;
        case TestFunction::Kind::Coordinate: {
            const double xj = x[f.coordinate_index()];
            for (std::size_t i = 0; i < n; ++i) {
                const double p = dot(points.row(i), x);
                sig += ramp_eval(act, p);
                grad += ramp_deriv(act, p) * xj;
            }
            break;
        }
        case TestFunction::Kind::Affine: {
            const double ax = dot(f.linear_part(), x);
            for (std::size_t i = 0; i < n; ++i) {
                const double p = dot(points.row(i), x);
                sig += ramp_eval(act, p);
                grad += ramp_deriv(act, p) * ax;
            }
            break;
        }
        case TestFunction::Kind::Quadratic: {
            // grad f . x = w.(B'x) + a.x with B = A + A'
            const auto& A = f.quadratic_part();
            std::vector<double> z(d, 0.0);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) z[j] += (A(i, j) + A(j, i)) * x[i];
            const double ax = dot(f.linear_part(), x);
            for (std::size_t i = 0; i < n; ++i) {
                const auto w = points.row(i);
                const double p = dot(w, x);
                sig += ramp_eval(act, p);
                grad += ramp_deriv(act, p) * (dot(w, z) + ax);
            }
            break;
        }
        case TestFunction::Kind::Activation: {
            const auto& pact = f.probe_activation();
            const auto& x0 = f.probe_input();
            const double x0x = dot(x0, x);
            for (std::size_t i = 0; i < n; ++i) {
                const auto w = points.row(i);
                const double p = dot(w, x);
                sig += ramp_eval(act, p);
                grad += ramp_deriv(act, p) * ramp_deriv(pact, dot(w, x0)) * x0x;
            }
            break;
        }
    }
    return {sig * inv_n, grad * inv_n};
}

void TraceSeries::validate() const {
    if (grid.empty()) throw ConfigError("trace: empty grid");
    if (grid.size() != values.size()) throw ConfigError("trace: grid/value size mismatch");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw ConfigError("trace: grid must be strictly increasing");
}

double TraceSeries::value_at(double t) const {
    // hot; callers validate() once up front
    if (grid.empty()) throw ConfigError("trace: empty grid");
    const double slack = 1e-12 * std::max(1.0, std::fabs(grid.back()));
    if (t < grid.front() - slack || t > grid.back() + slack)
        throw ConfigError("trace: interpolation time outside the grid span");
    if (t <= grid.front()) return values.front();
    if (t >= grid.back()) return values.back();
    const auto it = std::upper_bound(grid.begin(), grid.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - grid.begin());
    const std::size_t lo = hi - 1;
    const double u = (t - grid[lo]) / (grid[hi] - grid[lo]);
    return values[lo] + u * (values[hi] - values[lo]);
}

TraceSeries TraceSeries::thinned(std::size_t stride) const {
    if (stride == 0) throw ConfigError("trace: thinning stride must be positive");
    validate();
    TraceSeries out = *this;
    out.grid.clear();
    out.values.clear();
    for (std::size_t i = 0; i < grid.size(); i += stride) {
        out.grid.push_back(grid[i]);
        out.values.push_back(values[i]);
    }
    if ((grid.size() - 1) % stride != 0) {  // keep the endpoint
        out.grid.push_back(grid.back());
        out.values.push_back(values.back());
    }
    return out;
}

}  // namespace mfsgd
