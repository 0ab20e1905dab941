#include "mfsgd/meanfield.hpp"

#include <cmath>
#include <limits>

#include "mfsgd/errors.hpp"

namespace mfsgd {

QuadratureSample QuadratureSample::draw(const DataModel& model, std::size_t count,
                                        RngStream& rng) {
    model.validate();
    if (count == 0) throw ConfigError("quadrature sample: count must be positive");
    QuadratureSample s;
    s.xs = Matrix(count, model.dim);
    s.ys.resize(count);
    for (std::size_t q = 0; q < count; ++q) model.sample(rng, s.xs.row(q), s.ys[q]);
    return s;
}

void meanfield_drift(const ActivationSpec& act, const Matrix& particles,
                     const QuadratureSample& sample, double alpha, Matrix& out) {
    const std::size_t P = particles.rows(), d = particles.cols(), Q = sample.size();
    if (P == 0 || Q == 0) throw DimensionError("meanfield drift: empty cloud or sample");
    if (sample.xs.cols() != d) throw DimensionError("meanfield drift: dimension mismatch");
    if (out.rows() != P || out.cols() != d) out = Matrix(P, d);
    out.fill(0.0);
    const double invP = 1.0 / static_cast<double>(P);
    const double aQ = alpha / static_cast<double>(Q);
    if (d == 1 && act.kind == ActivationKind::Ramp) {
        const double lo = act.lo, hi = act.hi, s = act.slope, tl = act.t_lo, th = act.t_hi;
        const double* w = particles.data();
        double* o = out.data();
        for (std::size_t q = 0; q < Q; ++q) {
            const double X = sample.xs(q, 0);
            double g = 0.0;
            for (std::size_t i = 0; i < P; ++i) g += std::clamp(lo + s * (w[i] * X - tl), lo, hi);
            g *= invP;
            const double c = aQ * (sample.ys[q] - g) * s * X;
            for (std::size_t i = 0; i < P; ++i) {
                const double p = w[i] * X;
                o[i] += ((p > tl) & (p <= th)) ? c : 0.0;
            }
        }
        return;
    }
    std::vector<double> prod(P);
    for (std::size_t q = 0; q < Q; ++q) {
        const auto x = sample.xs.row(q);
        double g = 0.0;
        for (std::size_t i = 0; i < P; ++i) {
            prod[i] = dot(particles.row(i), x);
            g += ramp_eval(act, prod[i]);
        }
        g *= invP;
        const double c = aQ * (sample.ys[q] - g);
        for (std::size_t i = 0; i < P; ++i) {
            const double fp = ramp_deriv(act, prod[i]);
            if (fp != 0.0) {
                const double cf = c * fp;
                double* o = out.row(i).data();
                for (std::size_t j = 0; j < d; ++j) o[j] += cf * x[j];
            }
        }
    }
}

MeanFieldTrajectory integrate_meanfield(Matrix init_particles, const QuadratureSample& sample,
                                        const ActivationSpec& act, double alpha, double t_end,
                                        double dt, Integrator method,
                                        std::size_t snapshot_stride) {
    act.validate();
    const std::size_t P = init_particles.rows(), d = init_particles.cols();
    if (P == 0) throw DimensionError("meanfield: empty particle cloud");
    if (sample.size() == 0 || sample.xs.cols() != d)
        throw DimensionError("meanfield: malformed quadrature sample");
    if (!(t_end >= 0.0)) throw ConfigError("meanfield: end time must be non-negative");
    if (snapshot_stride == 0) throw ConfigError("meanfield: snapshot stride must be positive");
    if (dt <= 0.0) dt = 1.0 / (2.0 * static_cast<double>(P));

    MeanFieldTrajectory traj;
    traj.times.push_back(0.0);
    traj.snapshots.push_back(init_particles);
    if (t_end == 0.0) return traj;

    const long nsteps = std::max<long>(1, static_cast<long>(std::ceil(t_end / dt - 1e-9)));
    dt = t_end / static_cast<double>(nsteps);

    Matrix X = std::move(init_particles);
    Matrix k1, k2, k3, k4, tmp(P, d);
    for (long s = 1; s <= nsteps; ++s) {
        if (method == Integrator::Euler) {
            meanfield_drift(act, X, sample, alpha, k1);
            double* x = X.data();
            const double* v = k1.data();
            for (std::size_t i = 0; i < X.size(); ++i) x[i] += dt * v[i];
        } else {
            meanfield_drift(act, X, sample, alpha, k1);
            for (std::size_t i = 0; i < X.size(); ++i)
                tmp.data()[i] = X.data()[i] + 0.5 * dt * k1.data()[i];
            meanfield_drift(act, tmp, sample, alpha, k2);
            for (std::size_t i = 0; i < X.size(); ++i)
                tmp.data()[i] = X.data()[i] + 0.5 * dt * k2.data()[i];
            meanfield_drift(act, tmp, sample, alpha, k3);
            for (std::size_t i = 0; i < X.size(); ++i)
                tmp.data()[i] = X.data()[i] + dt * k3.data()[i];
            meanfield_drift(act, tmp, sample, alpha, k4);
            for (std::size_t i = 0; i < X.size(); ++i)
                X.data()[i] += dt / 6.0 *
                               (k1.data()[i] + 2.0 * k2.data()[i] + 2.0 * k3.data()[i] +
                                k4.data()[i]);
        }
        if (s % static_cast<long>(snapshot_stride) == 0 || s == nsteps) {
            traj.times.push_back(s == nsteps ? t_end : static_cast<double>(s) * dt);
            traj.snapshots.push_back(X);
        }
    }
    return traj;
}

TraceSeries reference_trace(const MeanFieldTrajectory& traj, const TestFunction& f) {
    if (traj.times.empty() || traj.times.size() != traj.snapshots.size())
        throw ConfigError("reference trace: malformed trajectory");
    TraceSeries tr;
    tr.probe = f.name();
    tr.beta = std::numeric_limits<double>::infinity();
    tr.n = static_cast<long>(traj.snapshots.front().rows());
    tr.replication = kReferenceRep;
    tr.grid = traj.times;
    tr.values.reserve(traj.times.size());
    for (const auto& snap : traj.snapshots) tr.values.push_back(bracket(f, snap));
    return tr;
}

}  // namespace mfsgd
