#include "mfsgd/sgd.hpp"

#include <cmath>
#include <string>

#include "mfsgd/errors.hpp"

namespace mfsgd {

namespace {

[[noreturn]] void throw_nonfinite(const Matrix& W, long step) {
    for (std::size_t i = 0; i < W.rows(); ++i)
        for (double v : W.row(i))
            if (!std::isfinite(v))
                throw NumericError("non-finite weight at step " + std::to_string(step) +
                                       ", neuron " + std::to_string(i),
                                   step, static_cast<long>(i));
    throw NumericError("non-finite network output at step " + std::to_string(step), step, -1);
}

struct StepScratch {
    Matrix delta, batch_x;
    std::vector<double> batch_y, prod, nz;
    void ensure(std::size_t n, std::size_t d, std::size_t m) {
        if (delta.rows() != n || delta.cols() != d) delta = Matrix(n, d);
        if (batch_x.rows() != m || batch_x.cols() != d) batch_x = Matrix(m, d);
        batch_y.resize(m);
        prod.resize(n);
    }
};

// drift part of one step for the given batch, accumulated into delta
void batch_increment(const ActivationSpec& act, const Matrix& W, const Matrix& bx,
                     std::span<const double> by, double pref, long step,
                     std::vector<double>& prod, Matrix& delta) {
    const std::size_t n = W.rows(), d = W.cols(), m = bx.rows();
    if (d == 1 && act.kind == ActivationKind::Ramp) {
        const double lo = act.lo, hi = act.hi, s = act.slope, tl = act.t_lo, th = act.t_hi;
        const double* w = W.data();
        double* dl = delta.data();
        for (std::size_t b = 0; b < m; ++b) {
            const double X = bx(b, 0);
            double g = 0.0;
            for (std::size_t i = 0; i < n; ++i) g += std::clamp(lo + s * (w[i] * X - tl), lo, hi);
            g /= static_cast<double>(n);
            if (!std::isfinite(g)) throw_nonfinite(W, step);
            const double c = pref * (by[b] - g) * s * X;
            for (std::size_t i = 0; i < n; ++i) {
                const double p = w[i] * X;
                dl[i] += ((p > tl) & (p <= th)) ? c : 0.0;
            }
        }
        return;
    }
    for (std::size_t b = 0; b < m; ++b) {
        const auto x = bx.row(b);
        double g = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            prod[i] = dot(W.row(i), x);
            g += ramp_eval(act, prod[i]);
        }
        g /= static_cast<double>(n);
        if (!std::isfinite(g)) throw_nonfinite(W, step);
        const double c = pref * (by[b] - g);
        for (std::size_t i = 0; i < n; ++i) {
            const double fp = ramp_deriv(act, prod[i]);
            if (fp != 0.0) {
                const double cf = c * fp;
                double* dl = delta.row(i).data();
                for (std::size_t j = 0; j < d; ++j) dl[j] += cf * x[j];
            }
        }
    }
}

void add_noise(Matrix& W, double full_scale, double noise_std, RngStream& noise,
               StepScratch& ws, StepRecord* rec) {
    const std::size_t total = W.size();
    ws.nz.resize(total);
    noise.fill_normal(ws.nz);
    double* w = W.data();
    for (std::size_t i = 0; i < total; ++i) w[i] += full_scale * ws.nz[i];
    if (rec) {
        rec->noise = Matrix(W.rows(), W.cols());
        double* e = rec->noise.data();
        for (std::size_t i = 0; i < total; ++i) e[i] = noise_std * ws.nz[i];
    }
}

void step_core(const SGDConfig& cfg, NetworkState& st, const DataModel& model,
               const ActivationSpec& act, RunStreams& streams, StepScratch& ws,
               StepRecord* rec) {
    const std::size_t n = cfg.n_neurons, d = cfg.dim;
    const std::size_t m = static_cast<std::size_t>(cfg.batch.at(st.step));
    ws.ensure(n, d, m);
    for (std::size_t b = 0; b < m; ++b)
        model.sample(streams.data, ws.batch_x.row(b), ws.batch_y[b]);
    if (rec) {
        rec->batch_x = ws.batch_x;
        rec->batch_y = ws.batch_y;
    }
    const double pref = cfg.alpha / (static_cast<double>(n) * static_cast<double>(m));
    Matrix& W = st.weights;
    if (m == 1 && d == 1 && act.kind == ActivationKind::Ramp) {
        // fused path: no increment buffer needed for a single batch point
        const double lo = act.lo, hi = act.hi, s = act.slope, tl = act.t_lo, th = act.t_hi;
        const double X = ws.batch_x(0, 0), Y = ws.batch_y[0];
        double* w = W.data();
        double g = 0.0;
        for (std::size_t i = 0; i < n; ++i) g += std::clamp(lo + s * (w[i] * X - tl), lo, hi);
        g /= static_cast<double>(n);
        if (!std::isfinite(g)) throw_nonfinite(W, st.step);
        const double c = pref * (Y - g) * s * X;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = w[i] * X;
            w[i] += ((p > tl) & (p <= th)) ? c : 0.0;
        }
    } else {
        ws.delta.fill(0.0);
        batch_increment(act, W, ws.batch_x, ws.batch_y, pref, st.step, ws.prod, ws.delta);
        double* w = W.data();
        const double* dl = ws.delta.data();
        for (std::size_t i = 0; i < W.size(); ++i) w[i] += dl[i];
    }
    const double full = cfg.noise_scale();
    if (full > 0.0)
        add_noise(W, full, cfg.noise_std, streams.noise, ws, rec);
    else if (rec)
        rec->noise = Matrix(n, d, 0.0);
    ++st.step;
}

void check_run_inputs(const SGDConfig& cfg, const DataModel& model, const ActivationSpec& act,
                      double t_end) {
    cfg.validate();
    model.validate();
    act.validate();
    if (model.dim != cfg.dim) throw DimensionError("run: data/model dimension mismatch");
    if (!(t_end >= 0.0)) throw ConfigError("run: end time must be non-negative");
}

long step_count(double t_end, std::size_t n) {
    return static_cast<long>(std::floor(t_end * static_cast<double>(n) + 1e-9));
}

}  // namespace

double InitSpec::std_for(std::size_t d) const {
    return gaussian_std > 0.0 ? gaussian_std : 0.8 / std::sqrt(static_cast<double>(d));
}

void InitSpec::validate(std::size_t d) const {
    switch (law) {
        case InitLaw::Gaussian:
            if (gaussian_std < 0.0 || !std::isfinite(gaussian_std))
                throw ConfigError("init: gaussian std must be finite and non-negative");
            break;
        case InitLaw::UniformBall:
            if (!(ball_radius > 0.0)) throw ConfigError("init: ball radius must be positive");
            break;
        case InitLaw::Point:
            if (point.size() != d) throw DimensionError("init: point has wrong dimension");
            break;
    }
}

void SGDConfig::validate() const {
    if (n_neurons == 0) throw ConfigError("sgd: need at least one neuron");
    if (dim == 0) throw ConfigError("sgd: dimension must be positive");
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw ConfigError("sgd: learning rate must be positive and finite");
    if (!(beta > 0.0)) throw ConfigError("sgd: noise exponent must be positive");
    if (noise_std < 0.0 || !std::isfinite(noise_std))
        throw ConfigError("sgd: noise std must be finite and non-negative");
    batch.validate();
    init.validate(dim);
}

double SGDConfig::noise_scale() const {
    if (noise_std == 0.0 || !std::isfinite(beta)) return 0.0;
    return noise_std * std::pow(static_cast<double>(n_neurons), -beta);
}

NetworkState init_state(const SGDConfig& cfg, RngStream& init_rng) {
    cfg.validate();
    NetworkState st{Matrix(cfg.n_neurons, cfg.dim), 0};
    Matrix& W = st.weights;
    switch (cfg.init.law) {
        case InitLaw::Gaussian: {
            const double s = cfg.init.std_for(cfg.dim);
            double* w = W.data();
            for (std::size_t i = 0; i < W.size(); ++i) w[i] = s * init_rng.normal();
            break;
        }
        case InitLaw::UniformBall: {
            const double R = cfg.init.ball_radius;
            const double inv_d = 1.0 / static_cast<double>(cfg.dim);
            for (std::size_t i = 0; i < W.rows(); ++i) {
                auto row = W.row(i);
                double nrm = 0.0;
                do {
                    for (auto& v : row) v = init_rng.normal();
                    nrm = std::sqrt(dot(row, row));
                } while (nrm == 0.0);
                const double r = R * std::pow(init_rng.uniform(), inv_d) / nrm;
                for (auto& v : row) v *= r;
            }
            break;
        }
        case InitLaw::Point:
            for (std::size_t i = 0; i < W.rows(); ++i)
                std::copy(cfg.init.point.begin(), cfg.init.point.end(), W.row(i).begin());
            break;
    }
    return st;
}

void sgd_step_inplace(const SGDConfig& cfg, NetworkState& state, const DataModel& model,
                      const ActivationSpec& act, RunStreams& streams, StepRecord* rec) {
    if (state.weights.rows() != cfg.n_neurons || state.weights.cols() != cfg.dim)
        throw DimensionError("sgd step: state does not match the configuration");
    if (model.dim != cfg.dim) throw DimensionError("sgd step: data dimension mismatch");
    StepScratch ws;
    step_core(cfg, state, model, act, streams, ws, rec);
}

NetworkState sgd_step(const SGDConfig& cfg, const NetworkState& state, const DataModel& model,
                      const ActivationSpec& act, RunStreams& streams, StepRecord* rec) {
    NetworkState next = state;
    sgd_step_inplace(cfg, next, model, act, streams, rec);
    return next;
}

void sgd_step_with_batch(const SGDConfig& cfg, NetworkState& state, const Matrix& batch_x,
                         std::span<const double> batch_y, const ActivationSpec& act,
                         RngStream* noise_rng, StepRecord* rec) {
    const std::size_t n = cfg.n_neurons, d = cfg.dim, m = batch_x.rows();
    if (state.weights.rows() != n || state.weights.cols() != d)
        throw DimensionError("sgd step: state does not match the configuration");
    if (m == 0 || batch_x.cols() != d || batch_y.size() != m)
        throw DimensionError("sgd step: malformed batch");
    if (rec) {
        rec->batch_x = batch_x;
        rec->batch_y.assign(batch_y.begin(), batch_y.end());
    }
    StepScratch ws;
    ws.ensure(n, d, m);
    ws.delta.fill(0.0);
    const double pref = cfg.alpha / (static_cast<double>(n) * static_cast<double>(m));
    batch_increment(act, state.weights, batch_x, batch_y, pref, state.step, ws.prod, ws.delta);
    double* w = state.weights.data();
    const double* dl = ws.delta.data();
    for (std::size_t i = 0; i < state.weights.size(); ++i) w[i] += dl[i];
    const double full = noise_rng ? cfg.noise_scale() : 0.0;
    if (full > 0.0)
        add_noise(state.weights, full, cfg.noise_std, *noise_rng, ws, rec);
    else if (rec)
        rec->noise = Matrix(n, d, 0.0);
    ++state.step;
}

TrajectoryResult run_trajectory(const SGDConfig& cfg, const DataModel& model,
                                const ActivationSpec& act, double t_end,
                                std::span<const TestFunction> probes, std::uint64_t master,
                                std::uint32_t replication) {
    check_run_inputs(cfg, model, act, t_end);
    if (probes.empty()) throw ConfigError("run: need at least one probe");
    const std::size_t n = cfg.n_neurons;
    const long steps = step_count(t_end, n);
    RunStreams streams = RunStreams::make(master, replication);
    NetworkState st = init_state(cfg, streams.init);
    TrajectoryResult out;
    out.traces.resize(probes.size());
    for (std::size_t p = 0; p < probes.size(); ++p) {
        auto& tr = out.traces[p];
        tr.probe = probes[p].name();
        tr.beta = cfg.beta;
        tr.n = static_cast<long>(n);
        tr.seed = master;
        tr.replication = replication;
        tr.grid.reserve(steps + 1);
        tr.values.reserve(steps + 1);
    }
    StepScratch ws;
    for (long j = 0; j <= steps; ++j) {
        const double t = static_cast<double>(j) / static_cast<double>(n);
        for (std::size_t p = 0; p < probes.size(); ++p) {
            const double v = bracket(probes[p], st.weights);
            if (!std::isfinite(v)) throw_nonfinite(st.weights, j);
            out.traces[p].grid.push_back(t);
            out.traces[p].values.push_back(v);
        }
        if (j < steps) step_core(cfg, st, model, act, streams, ws, nullptr);
    }
    out.final_state = std::move(st);
    return out;
}

std::vector<TraceSeries> run_coupled(const SGDConfig& base, std::span<const double> betas,
                                     const DataModel& model, const ActivationSpec& act,
                                     double t_end, const TestFunction& probe,
                                     std::uint64_t master, std::uint32_t replication) {
    check_run_inputs(base, model, act, t_end);
    if (betas.empty()) throw ConfigError("coupled run: need at least one noise exponent");
    for (double b : betas)
        if (!(b > 0.0)) throw ConfigError("coupled run: noise exponents must be positive");
    const std::size_t n = base.n_neurons, d = base.dim, K = betas.size();
    const long steps = step_count(t_end, n);
    RunStreams streams = RunStreams::make(master, replication);
    NetworkState st0 = init_state(base, streams.init);
    std::vector<Matrix> W(K, st0.weights);
    std::vector<double> full(K);
    bool any_noise = false;
    for (std::size_t c = 0; c < K; ++c) {
        SGDConfig cc = base;
        cc.beta = betas[c];
        full[c] = cc.noise_scale();
        any_noise = any_noise || full[c] > 0.0;
    }
    std::vector<TraceSeries> traces(K);
    for (std::size_t c = 0; c < K; ++c) {
        auto& tr = traces[c];
        tr.probe = probe.name();
        tr.beta = betas[c];
        tr.n = static_cast<long>(n);
        tr.seed = master;
        tr.replication = replication;
        tr.grid.reserve(steps + 1);
        tr.values.reserve(steps + 1);
    }
    StepScratch ws;
    for (long j = 0; j <= steps; ++j) {
        const double t = static_cast<double>(j) / static_cast<double>(n);
        for (std::size_t c = 0; c < K; ++c) {
            const double v = bracket(probe, W[c]);
            if (!std::isfinite(v)) throw_nonfinite(W[c], j);
            traces[c].grid.push_back(t);
            traces[c].values.push_back(v);
        }
        if (j == steps) break;
        const std::size_t m = static_cast<std::size_t>(base.batch.at(j));
        ws.ensure(n, d, m);
        for (std::size_t b = 0; b < m; ++b)
            model.sample(streams.data, ws.batch_x.row(b), ws.batch_y[b]);
        const double pref = base.alpha / (static_cast<double>(n) * static_cast<double>(m));
        for (std::size_t c = 0; c < K; ++c) {
            if (m == 1 && d == 1 && act.kind == ActivationKind::Ramp) {
                const double lo = act.lo, hi = act.hi, s = act.slope;
                const double tl = act.t_lo, th = act.t_hi;
                const double X = ws.batch_x(0, 0), Y = ws.batch_y[0];
                double* w = W[c].data();
                double g = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    g += std::clamp(lo + s * (w[i] * X - tl), lo, hi);
                g /= static_cast<double>(n);
                if (!std::isfinite(g)) throw_nonfinite(W[c], j);
                const double cc = pref * (Y - g) * s * X;
                for (std::size_t i = 0; i < n; ++i) {
                    const double p = w[i] * X;
                    w[i] += ((p > tl) & (p <= th)) ? cc : 0.0;
                }
            } else {
                ws.delta.fill(0.0);
                batch_increment(act, W[c], ws.batch_x, ws.batch_y, pref, j, ws.prod, ws.delta);
                double* w = W[c].data();
                const double* dl = ws.delta.data();
                for (std::size_t i = 0; i < W[c].size(); ++i) w[i] += dl[i];
            }
        }
        if (any_noise) {
            ws.nz.resize(n * d);
            streams.noise.fill_normal(ws.nz);
            for (std::size_t c = 0; c < K; ++c) {
                if (full[c] <= 0.0) continue;
                double* w = W[c].data();
                const double fc = full[c];
                for (std::size_t i = 0; i < n * d; ++i) w[i] += fc * ws.nz[i];
            }
        }
    }
    return traces;
}

StepDecomposition decompose_step(const SGDConfig& cfg, NetworkState& state,
                                 const DataModel& model, const ActivationSpec& act,
                                 const TestFunction& f, RunStreams& streams,
                                 const Matrix& sample_x, std::span<const double> sample_y,
                                 bool inject_batch) {
    const std::size_t n = cfg.n_neurons, d = cfg.dim, Q = sample_x.rows();
    if (state.weights.rows() != n || state.weights.cols() != d)
        throw DimensionError("decompose: state does not match the configuration");
    if (model.dim != d) throw DimensionError("decompose: data dimension mismatch");
    if (Q == 0 || sample_x.cols() != d || sample_y.size() != Q)
        throw DimensionError("decompose: malformed drift sample");
    if (!f.constant_hessian())
        throw ProbeError("decompose_step needs a probe with constant Hessian "
                         "(square/affine/quadratic)");
    Matrix& W = state.weights;
    const double base = bracket(f, W);

    double dsum = 0.0;
    for (std::size_t q = 0; q < Q; ++q) {
        const PairBracket pb = residual_brackets(act, W, sample_x.row(q), f);
        dsum += (sample_y[q] - pb.sig) * pb.grad;
    }
    const double d_term = cfg.alpha / static_cast<double>(n) * (dsum / static_cast<double>(Q));

    Matrix drawn_x;
    std::vector<double> drawn_y;
    const Matrix* bx = &sample_x;
    std::span<const double> by = sample_y;
    double batch_term, m_term;
    if (inject_batch) {
        // identical sample, identical mean: the centered term vanishes exactly
        batch_term = d_term;
        m_term = 0.0;
    } else {
        const std::size_t m = static_cast<std::size_t>(cfg.batch.at(state.step));
        drawn_x = Matrix(m, d);
        drawn_y.resize(m);
        for (std::size_t b = 0; b < m; ++b)
            model.sample(streams.data, drawn_x.row(b), drawn_y[b]);
        double bsum = 0.0;
        for (std::size_t b = 0; b < m; ++b) {
            const PairBracket pb = residual_brackets(act, W, drawn_x.row(b), f);
            bsum += (drawn_y[b] - pb.sig) * pb.grad;
        }
        batch_term = cfg.alpha / static_cast<double>(n) * (bsum / static_cast<double>(m));
        m_term = batch_term - d_term;
        bx = &drawn_x;
        by = drawn_y;
    }

    const std::size_t m = bx->rows();
    Matrix delta(n, d);
    std::vector<double> prod(n);
    batch_increment(act, W, *bx, by, cfg.alpha / (static_cast<double>(n) * static_cast<double>(m)),
                    state.step, prod, delta);

    const double full = cfg.noise_scale();
    Matrix z;
    if (full > 0.0) {
        z = Matrix(n, d);
        streams.noise.fill_normal({z.data(), z.size()});
    }

    std::vector<double> gradbuf(d), dw(d);
    double nsum = 0.0, rsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        f.gradient(W.row(i), gradbuf);
        for (std::size_t jj = 0; jj < d; ++jj) {
            const double e = full > 0.0 ? full * z(i, jj) : 0.0;
            dw[jj] = delta(i, jj) + e;
            nsum += gradbuf[jj] * e;
        }
        rsum += f.hessian_form(dw);
    }
    const double noise_term = nsum / static_cast<double>(n);
    const double r_term = rsum / (2.0 * static_cast<double>(n));

    double* w = W.data();
    const double* dl = delta.data();
    for (std::size_t i = 0; i < W.size(); ++i) w[i] += dl[i];
    if (full > 0.0) {
        const double* zz = z.data();
        for (std::size_t i = 0; i < W.size(); ++i) w[i] += full * zz[i];
    }
    ++state.step;

    const double total = bracket(f, W) - base;
    return {d_term, m_term, r_term, noise_term, total};
}

TraceSeries martingale_trace(const SGDConfig& cfg, const DataModel& model,
                             const ActivationSpec& act, const TestFunction& f, double t_end,
                             int center_sample, std::uint64_t master, std::uint32_t replication) {
    check_run_inputs(cfg, model, act, t_end);
    if (center_sample < 1) throw ConfigError("martingale trace: centering sample must be >= 1");
    const std::size_t n = cfg.n_neurons, d = cfg.dim;
    const long steps = step_count(t_end, n);
    RunStreams streams = RunStreams::make(master, replication);
    NetworkState st = init_state(cfg, streams.init);
    TraceSeries tr;
    tr.probe = f.name();
    tr.beta = cfg.beta;
    tr.n = static_cast<long>(n);
    tr.seed = master;
    tr.replication = replication;
    tr.grid.reserve(steps + 1);
    tr.values.reserve(steps + 1);
    tr.grid.push_back(0.0);
    tr.values.push_back(0.0);
    StepScratch ws;
    std::vector<double> xq(d);
    double cum = 0.0;
    const double an = cfg.alpha / static_cast<double>(n);
    for (long k = 0; k < steps; ++k) {
        const std::size_t m = static_cast<std::size_t>(cfg.batch.at(k));
        ws.ensure(n, d, m);
        for (std::size_t b = 0; b < m; ++b)
            model.sample(streams.data, ws.batch_x.row(b), ws.batch_y[b]);
        double bsum = 0.0;
        for (std::size_t b = 0; b < m; ++b) {
            const PairBracket pb = residual_brackets(act, st.weights, ws.batch_x.row(b), f);
            bsum += (ws.batch_y[b] - pb.sig) * pb.grad;
        }
        double csum = 0.0;
        for (int q = 0; q < center_sample; ++q) {
            double yq;
            model.sample(streams.quad, xq, yq);
            const PairBracket pb = residual_brackets(act, st.weights, xq, f);
            csum += (yq - pb.sig) * pb.grad;
        }
        cum += an * (bsum / static_cast<double>(m) - csum / static_cast<double>(center_sample));
        if (!std::isfinite(cum)) throw_nonfinite(st.weights, k);
        const double pref = cfg.alpha / (static_cast<double>(n) * static_cast<double>(m));
        ws.delta.fill(0.0);
        batch_increment(act, st.weights, ws.batch_x, ws.batch_y, pref, k, ws.prod, ws.delta);
        double* w = st.weights.data();
        const double* dl = ws.delta.data();
        for (std::size_t i = 0; i < st.weights.size(); ++i) w[i] += dl[i];
        const double full = cfg.noise_scale();
        if (full > 0.0) add_noise(st.weights, full, cfg.noise_std, streams.noise, ws, nullptr);
        ++st.step;
        tr.grid.push_back(static_cast<double>(k + 1) / static_cast<double>(n));
        tr.values.push_back(cum);
    }
    return tr;
}

}  // namespace mfsgd
