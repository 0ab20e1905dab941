#include "mfsgd/harness.hpp"

#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "mfsgd/errors.hpp"
#include "mfsgd/stats.hpp"

namespace mfsgd {

namespace {

std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    const std::string s = trim(v);
    if (s.empty()) throw ConfigError("empty value for " + key);
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw ConfigError("bad number for " + key + ": " + v);
    return x;
}

long to_long(const std::string& key, const std::string& v) {
    const std::string s = trim(v);
    if (s.empty()) throw ConfigError("empty value for " + key);
    char* end = nullptr;
    const long x = std::strtol(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size()) throw ConfigError("bad integer for " + key + ": " + v);
    return x;
}

std::size_t to_size(const std::string& key, const std::string& v) {
    const long x = to_long(key, v);
    if (x < 0) throw ConfigError("negative value for " + key + ": " + v);
    return static_cast<std::size_t>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    const std::string s = trim(v);
    if (s.empty()) throw ConfigError("empty value for " + key);
    char* end = nullptr;
    const std::uint64_t x = std::strtoull(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size()) throw ConfigError("bad integer for " + key + ": " + v);
    return x;
}

std::vector<double> to_dlist(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& part : split(v, ',')) out.push_back(to_double(key, part));
    return out;
}

std::vector<int> to_ilist(const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (const auto& part : split(v, ','))
        out.push_back(static_cast<int>(to_long(key, part)));
    return out;
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join_dlist(std::span<const double> v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += fmt17(v[i]);
    }
    return s;
}

std::string join_ilist(std::span<const int> v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

const char* kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::SingleRun: return "single-run";
        case ExperimentKind::MeanFieldRun: return "meanfield-run";
        case ExperimentKind::Variance: return "variance";
        case ExperimentKind::Clt: return "clt";
        case ExperimentKind::Drift: return "drift";
    }
    return "single-run";
}

ExperimentKind kind_from(const std::string& s) {
    if (s == "single-run") return ExperimentKind::SingleRun;
    if (s == "meanfield-run") return ExperimentKind::MeanFieldRun;
    if (s == "variance") return ExperimentKind::Variance;
    if (s == "clt") return ExperimentKind::Clt;
    if (s == "drift") return ExperimentKind::Drift;
    throw ConfigError("unknown experiment kind: " + s);
}

std::string batch_spec(const BatchSchedule& b) {
    if (b.head().empty()) return "fixed:" + std::to_string(b.tail());
    return "seq:" + join_ilist(b.head()) + ":" + std::to_string(b.tail());
}

BatchSchedule batch_from(const std::string& key, const std::string& v) {
    if (v.rfind("fixed:", 0) == 0)
        return BatchSchedule::fixed(static_cast<int>(to_long(key, v.substr(6))));
    if (v.rfind("seq:", 0) == 0) {
        const std::string rest = v.substr(4);
        const auto parts = split(rest, ':');
        if (parts.size() != 2) throw ConfigError("bad batch spec for " + key + ": " + v);
        return BatchSchedule::sequence(to_ilist(key, parts[0]),
                                       static_cast<int>(to_long(key, parts[1])));
    }
    throw ConfigError("bad batch spec for " + key + ": " + v);
}

std::string components_spec(std::span<const MixtureComponent> comps) {
    std::string s;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        if (i) s += ';';
        s += fmt17(comps[i].weight) + ":" + fmt17(comps[i].label) + ":" + fmt17(comps[i].sigma);
        if (!comps[i].mean.empty()) s += ":" + join_dlist(comps[i].mean);
    }
    return s;
}

std::vector<MixtureComponent> components_from(const std::string& key, const std::string& v) {
    std::vector<MixtureComponent> out;
    for (const auto& part : split(v, ';')) {
        const auto fields = split(part, ':');
        if (fields.size() != 3 && fields.size() != 4)
            throw ConfigError("bad mixture component for " + key + ": " + part);
        MixtureComponent c;
        c.weight = to_double(key, fields[0]);
        c.label = to_double(key, fields[1]);
        c.sigma = to_double(key, fields[2]);
        if (fields.size() == 4) c.mean = to_dlist(key, fields[3]);
        out.push_back(std::move(c));
    }
    return out;
}

void apply_key(ExperimentConfig& c, const std::string& key, const std::string& val) {
    if (key == "experiment") c.kind = kind_from(val);
    else if (key == "seed") c.seed = to_u64(key, val);
    else if (key == "threads") c.threads = static_cast<int>(to_long(key, val));
    else if (key == "out") c.out_dir = val;
    else if (key == "sgd.n") c.sgd.n_neurons = to_size(key, val);
    else if (key == "sgd.d") c.sgd.dim = to_size(key, val);
    else if (key == "sgd.alpha") c.sgd.alpha = to_double(key, val);
    else if (key == "sgd.beta") c.sgd.beta = to_double(key, val);
    else if (key == "sgd.noise_std") c.sgd.noise_std = to_double(key, val);
    else if (key == "sgd.batch") c.sgd.batch = batch_from(key, val);
    else if (key == "init.law") {
        if (val == "gaussian") c.sgd.init.law = InitLaw::Gaussian;
        else if (val == "ball") c.sgd.init.law = InitLaw::UniformBall;
        else if (val == "point") c.sgd.init.law = InitLaw::Point;
        else throw ConfigError("unknown init law: " + val);
    } else if (key == "init.std") c.sgd.init.gaussian_std = to_double(key, val);
    else if (key == "init.radius") c.sgd.init.ball_radius = to_double(key, val);
    else if (key == "init.point") c.sgd.init.point = to_dlist(key, val);
    else if (key == "act.kind") {
        if (val == "ramp") c.act.kind = ActivationKind::Ramp;
        else if (val == "smooth") c.act.kind = ActivationKind::SmoothRamp;
        else throw ConfigError("unknown activation kind: " + val);
    } else if (key == "act.h") c.act.h = to_double(key, val);
    else if (key == "act.lo") c.act.lo = to_double(key, val);
    else if (key == "act.hi") c.act.hi = to_double(key, val);
    else if (key == "act.slope") c.act.slope = to_double(key, val);
    else if (key == "act.t_lo") c.act.t_lo = to_double(key, val);
    else if (key == "act.t_hi") c.act.t_hi = to_double(key, val);
    else if (key == "data.components") c.components = components_from(key, val);
    else if (key == "probes") {
        c.probes.clear();
        for (const auto& p : split(val, ',')) c.probes.push_back(trim(p));
    } else if (key == "t_end") c.t_end = to_double(key, val);
    else if (key == "t_obs") c.t_obs = to_double(key, val);
    else if (key == "replications") c.replications = static_cast<int>(to_long(key, val));
    else if (key == "bootstrap") c.bootstrap = static_cast<int>(to_long(key, val));
    else if (key == "thin") c.thin = static_cast<int>(to_long(key, val));
    else if (key == "batch_sizes") c.batch_sizes = to_ilist(key, val);
    else if (key == "betas") c.betas = to_dlist(key, val);
    else if (key == "ref.kind") {
        if (val == "large-n") c.ref_kind = ReferenceKind::LargeN;
        else if (val == "ode") c.ref_kind = ReferenceKind::Ode;
        else throw ConfigError("unknown reference kind: " + val);
    } else if (key == "ref.factor") c.ref_factor = to_double(key, val);
    else if (key == "ref.particles") c.ref_particles = to_size(key, val);
    else if (key == "ref.quadrature")
        c.ref_quadrature = to_size(key, val);
    else if (key == "ref.dt") c.ref_dt = to_double(key, val);
    else if (key == "ref.method") {
        if (val == "euler") c.ref_method = Integrator::Euler;
        else if (val == "rk4") c.ref_method = Integrator::Rk4;
        else throw ConfigError("unknown integrator: " + val);
    } else if (key == "ref.stride") c.ref_stride = to_size(key, val);
    else throw ConfigError("unknown config key: " + key);
}

}  // namespace

DataModel ExperimentConfig::data_model() const {
    DataModel m;
    m.dim = sgd.dim;
    m.components = components;
    return m;
}

std::vector<TestFunction> ExperimentConfig::probe_functions() const {
    std::vector<TestFunction> out;
    for (const auto& name : probes) {
        if (name == "square") out.push_back(TestFunction::square());
        else if (name == "norm2") out.push_back(TestFunction::norm2());
        else if (name.rfind("coord", 0) == 0) {
            const std::string idx = name.substr(5);
            if (idx.empty()) throw ConfigError("bad probe name: " + name);
            out.push_back(TestFunction::coordinate(to_size(name, idx)));
        } else {
            throw ConfigError("unknown probe: " + name);
        }
    }
    return out;
}

void ExperimentConfig::validate() const {
    sgd.validate();
    act.validate();
    data_model().validate();
    if (probes.empty()) throw ConfigError("config: need at least one probe");
    for (const auto& f : probe_functions())
        if (f.kind() == TestFunction::Kind::Coordinate && f.coordinate_index() >= sgd.dim)
            throw ConfigError("config: coordinate probe index out of range");
    if (!(t_end >= 0.0)) throw ConfigError("config: t_end must be non-negative");
    if (!(t_obs >= 0.0)) throw ConfigError("config: t_obs must be non-negative");
    if (replications < 1) throw ConfigError("config: need at least one replication");
    if (bootstrap < 0) throw ConfigError("config: bootstrap count must be non-negative");
    if (thin < 1) throw ConfigError("config: thinning stride must be positive");
    if (batch_sizes.empty()) throw ConfigError("config: need at least one batch size");
    for (int b : batch_sizes)
        if (b < 1) throw ConfigError("config: batch sizes must be positive");
    if (betas.empty()) throw ConfigError("config: need at least one beta");
    for (double b : betas)
        if (!(b > 0.0)) throw ConfigError("config: betas must be positive");
    if (!(ref_factor >= 1.0)) throw ConfigError("config: reference factor must be >= 1");
    if (ref_particles == 0 || ref_quadrature == 0)
        throw ConfigError("config: reference sizes must be positive");
    if (ref_dt < 0.0) throw ConfigError("config: reference dt must be non-negative");
    if (ref_stride == 0) throw ConfigError("config: reference stride must be positive");
    if (threads < 0) throw ConfigError("config: thread count must be non-negative");
    if (out_dir.empty()) throw ConfigError("config: output directory must be set");
}

ExperimentConfig preset_config(ExperimentKind kind, ScalePreset scale) {
    ExperimentConfig c;
    c.kind = kind;
    const bool paper = scale == ScalePreset::Paper;
    switch (kind) {
        case ExperimentKind::SingleRun:
            c.sgd.n_neurons = paper ? 20000 : 1000;
            c.t_end = paper ? 8.0 : 1.0;
            break;
        case ExperimentKind::MeanFieldRun:
            c.ref_particles = c.ref_quadrature = paper ? 10000 : 2000;
            c.t_end = paper ? 8.0 : 1.0;
            c.ref_dt = paper ? 5e-4 : 0.0;
            c.ref_stride = paper ? 80 : 20;
            break;
        case ExperimentKind::Variance:
            c.sgd.n_neurons = paper ? 800 : 200;
            c.sgd.dim = paper ? 40 : 10;
            c.probes = {"norm2"};
            c.t_obs = 1.25;
            c.replications = paper ? 1000 : 200;
            break;
        case ExperimentKind::Clt:
            c.sgd.n_neurons = paper ? 20000 : 2000;
            c.t_end = 8.0;
            c.replications = paper ? 20000 : 2000;
            c.betas = {1.0, 2.0};
            c.ref_kind = ReferenceKind::LargeN;
            c.ref_factor = paper ? 12.5 : 10.0;
            break;
        case ExperimentKind::Drift:
            c.sgd.n_neurons = paper ? 20000 : 2000;
            // short window: the injected-noise term grows linearly from t=0, but over
            // long horizons the gradient flow partially relaxes the coupled gap and
            // the fitted slope sags below the injection rate
            c.t_end = paper ? 8.0 : 2.0;
            c.replications = paper ? 20000 : 2000;
            c.betas = {0.75, 1.0};
            break;
    }
    return c;
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
        apply_key(base, key, val);
    }
    return base;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config", path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), std::move(base));
}

std::string serialize_config(const ExperimentConfig& c) {
    std::string s;
    auto put = [&](const std::string& key, const std::string& val) {
        s += key + " = " + val + "\n";
    };
    put("experiment", kind_name(c.kind));
    put("seed", std::to_string(c.seed));
    put("threads", std::to_string(c.threads));
    put("out", c.out_dir);
    put("sgd.n", std::to_string(c.sgd.n_neurons));
    put("sgd.d", std::to_string(c.sgd.dim));
    put("sgd.alpha", fmt17(c.sgd.alpha));
    put("sgd.beta", fmt17(c.sgd.beta));
    put("sgd.noise_std", fmt17(c.sgd.noise_std));
    put("sgd.batch", batch_spec(c.sgd.batch));
    switch (c.sgd.init.law) {
        case InitLaw::Gaussian: put("init.law", "gaussian"); break;
        case InitLaw::UniformBall: put("init.law", "ball"); break;
        case InitLaw::Point: put("init.law", "point"); break;
    }
    put("init.std", fmt17(c.sgd.init.gaussian_std));
    put("init.radius", fmt17(c.sgd.init.ball_radius));
    if (!c.sgd.init.point.empty()) put("init.point", join_dlist(c.sgd.init.point));
    put("act.kind", c.act.kind == ActivationKind::Ramp ? "ramp" : "smooth");
    put("act.h", fmt17(c.act.h));
    put("act.lo", fmt17(c.act.lo));
    put("act.hi", fmt17(c.act.hi));
    put("act.slope", fmt17(c.act.slope));
    put("act.t_lo", fmt17(c.act.t_lo));
    put("act.t_hi", fmt17(c.act.t_hi));
    put("data.components", components_spec(c.components));
    {
        std::string p;
        for (std::size_t i = 0; i < c.probes.size(); ++i) {
            if (i) p += ',';
            p += c.probes[i];
        }
        put("probes", p);
    }
    put("t_end", fmt17(c.t_end));
    put("t_obs", fmt17(c.t_obs));
    put("replications", std::to_string(c.replications));
    put("bootstrap", std::to_string(c.bootstrap));
    put("thin", std::to_string(c.thin));
    put("batch_sizes", join_ilist(c.batch_sizes));
    put("betas", join_dlist(c.betas));
    put("ref.kind", c.ref_kind == ReferenceKind::LargeN ? "large-n" : "ode");
    put("ref.factor", fmt17(c.ref_factor));
    put("ref.particles", std::to_string(c.ref_particles));
    put("ref.quadrature", std::to_string(c.ref_quadrature));
    put("ref.dt", fmt17(c.ref_dt));
    put("ref.method", c.ref_method == Integrator::Rk4 ? "rk4" : "euler");
    put("ref.stride", std::to_string(c.ref_stride));
    return s;
}

void parallel_replications(int count, int threads, const std::function<void(int)>& work) {
    if (count <= 0) return;
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 1;
    threads = std::min(threads, count);
    if (threads == 1) {
        for (int i = 0; i < count; ++i) work(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex mu;
    std::exception_ptr first_error;
    auto body = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= count) return;
            {
                std::lock_guard<std::mutex> lk(mu);
                if (first_error) return;
            }
            try {
                work(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

VarianceReport run_variance_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const DataModel model = cfg.data_model();
    const auto probes = cfg.probe_functions();
    const TestFunction& probe = probes.front();
    const int L = cfg.replications;
    VarianceReport rep;
    rep.batch_sizes = cfg.batch_sizes;
    for (std::size_t bi = 0; bi < cfg.batch_sizes.size(); ++bi) {
        SGDConfig sc = cfg.sgd;
        sc.batch = BatchSchedule::fixed(cfg.batch_sizes[bi]);
        std::vector<double> m(L);
        parallel_replications(L, cfg.threads, [&](int r) {
            auto res = run_trajectory(sc, model, cfg.act, cfg.t_obs, {&probe, 1}, cfg.seed,
                                      static_cast<std::uint32_t>(r));
            m[static_cast<std::size_t>(r)] = res.traces.front().values.back();
        });
        rep.v_hat.push_back(variance_population(m));
        RngStream bs(cfg.seed, static_cast<std::uint32_t>(bi), StreamPurpose::Bootstrap);
        std::vector<double> resample(m.size());
        std::vector<double> boots;
        for (int b = 0; b < cfg.bootstrap; ++b) {
            for (auto& v : resample) v = m[bs.below(m.size())];
            boots.push_back(variance_population(resample));
        }
        rep.bootstrap.push_back(std::move(boots));
    }
    if (rep.v_hat.size() >= 2) {
        std::vector<double> bsz(rep.batch_sizes.begin(), rep.batch_sizes.end());
        rep.spearman = spearman_rho(bsz, rep.v_hat);
    }
    return rep;
}

namespace {

std::vector<std::size_t> thin_indices(long steps, int thin) {
    std::vector<std::size_t> idx;
    for (long j = 0; j <= steps; j += thin) idx.push_back(static_cast<std::size_t>(j));
    if (idx.back() != static_cast<std::size_t>(steps))
        idx.push_back(static_cast<std::size_t>(steps));
    return idx;
}

TraceSeries reference_for(const ExperimentConfig& cfg, const DataModel& model,
                          const TestFunction& probe) {
    if (cfg.ref_kind == ReferenceKind::LargeN) {
        SGDConfig rc = cfg.sgd;
        rc.n_neurons = static_cast<std::size_t>(
            std::llround(cfg.ref_factor * static_cast<double>(cfg.sgd.n_neurons)));
        auto res = run_trajectory(rc, model, cfg.act, cfg.t_end, {&probe, 1}, cfg.seed,
                                  kReferenceRep);
        return std::move(res.traces.front());
    }
    RngStream qs(cfg.seed, kReferenceRep, StreamPurpose::Quadrature);
    const QuadratureSample sample = QuadratureSample::draw(model, cfg.ref_quadrature, qs);
    SGDConfig pc = cfg.sgd;
    pc.n_neurons = cfg.ref_particles;
    RngStream is(cfg.seed, kReferenceRep, StreamPurpose::Init);
    NetworkState st = init_state(pc, is);
    const auto traj = integrate_meanfield(std::move(st.weights), sample, cfg.act, cfg.sgd.alpha,
                                          cfg.t_end, cfg.ref_dt, cfg.ref_method, cfg.ref_stride);
    TraceSeries tr = reference_trace(traj, probe);
    tr.seed = cfg.seed;
    return tr;
}

}  // namespace

CltReport run_clt_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const DataModel model = cfg.data_model();
    const auto probes = cfg.probe_functions();
    const TestFunction& probe = probes.front();
    const std::size_t N = cfg.sgd.n_neurons;
    const long steps =
        static_cast<long>(std::floor(cfg.t_end * static_cast<double>(N) + 1e-9));
    const auto idx = thin_indices(steps, cfg.thin);
    const std::size_t G = idx.size();
    std::vector<double> grid(G);
    for (std::size_t g = 0; g < G; ++g)
        grid[g] = static_cast<double>(idx[g]) / static_cast<double>(N);

    TraceSeries ref = reference_for(cfg, model, probe);
    ref.validate();

    const int R = cfg.replications;
    const std::size_t K = cfg.betas.size();
    std::vector<Matrix> store(K, Matrix(static_cast<std::size_t>(R), G));
    parallel_replications(R, cfg.threads, [&](int r) {
        const auto traces = run_coupled(cfg.sgd, cfg.betas, model, cfg.act, cfg.t_end, probe,
                                        cfg.seed, static_cast<std::uint32_t>(r));
        for (std::size_t c = 0; c < K; ++c) {
            const TraceSeries fl = fluctuation_trace(traces[c], ref);
            for (std::size_t g = 0; g < G; ++g)
                store[c](static_cast<std::size_t>(r), g) = fl.values[idx[g]];
        }
    });

    CltReport out;
    for (std::size_t c = 0; c < K; ++c) {
        EnsembleSummary es;
        es.beta = cfg.betas[c];
        es.grid = grid;
        es.replications = R;
        es.mean.resize(G);
        es.ci_lo.resize(G);
        es.ci_hi.resize(G);
        for (std::size_t g = 0; g < G; ++g) {
            RunningStats rs;
            for (int r = 0; r < R; ++r) rs.add(store[c](static_cast<std::size_t>(r), g));
            const double half = 1.96 * rs.stddev() / std::sqrt(static_cast<double>(R));
            es.mean[g] = rs.mean;
            es.ci_lo[g] = rs.mean - half;
            es.ci_hi[g] = rs.mean + half;
        }
        out.ensembles.push_back(std::move(es));
    }
    TraceSeries refg = ref;
    refg.grid = grid;
    refg.values.resize(G);
    for (std::size_t g = 0; g < G; ++g) refg.values[g] = ref.value_at(grid[g]);
    out.reference = std::move(refg);
    return out;
}

DriftReport run_drift_check(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.betas.size() < 2)
        throw ConfigError("drift check: need two noise exponents (anomalous first)");
    const DataModel model = cfg.data_model();
    const auto probes = cfg.probe_functions();
    const TestFunction& probe = probes.front();
    const std::size_t N = cfg.sgd.n_neurons;
    const long steps =
        static_cast<long>(std::floor(cfg.t_end * static_cast<double>(N) + 1e-9));
    const auto idx = thin_indices(steps, cfg.thin);
    const std::size_t G = idx.size();
    std::vector<double> grid(G);
    for (std::size_t g = 0; g < G; ++g)
        grid[g] = static_cast<double>(idx[g]) / static_cast<double>(N);

    const int R = cfg.replications;
    const double scale = std::sqrt(static_cast<double>(N));
    Matrix diffs(static_cast<std::size_t>(R), G);
    std::vector<double> slopes(static_cast<std::size_t>(R));
    const double pair[2] = {cfg.betas[0], cfg.betas[1]};
    parallel_replications(R, cfg.threads, [&](int r) {
        const auto traces = run_coupled(cfg.sgd, pair, model, cfg.act, cfg.t_end, probe,
                                        cfg.seed, static_cast<std::uint32_t>(r));
        std::vector<double> d(G);
        for (std::size_t g = 0; g < G; ++g)
            d[g] = scale * (traces[0].values[idx[g]] - traces[1].values[idx[g]]);
        slopes[static_cast<std::size_t>(r)] = ols_fit(grid, d).slope;
        for (std::size_t g = 0; g < G; ++g) diffs(static_cast<std::size_t>(r), g) = d[g];
    });

    DriftReport rep;
    rep.replications = R;
    EnsembleSummary es;
    es.beta = cfg.betas[0];
    es.grid = grid;
    es.replications = R;
    es.mean.resize(G);
    es.ci_lo.resize(G);
    es.ci_hi.resize(G);
    for (std::size_t g = 0; g < G; ++g) {
        RunningStats rs;
        for (int r = 0; r < R; ++r) rs.add(diffs(static_cast<std::size_t>(r), g));
        const double half = 1.96 * rs.stddev() / std::sqrt(static_cast<double>(R));
        es.mean[g] = rs.mean;
        es.ci_lo[g] = rs.mean - half;
        es.ci_hi[g] = rs.mean + half;
    }
    RunningStats ss;
    for (double s : slopes) ss.add(s);
    rep.slope_mean = ss.mean;
    rep.slope_stderr =
        ss.count > 1 ? std::sqrt(ss.m2 / static_cast<double>(ss.count - 1) /
                                 static_cast<double>(ss.count))
                     : 0.0;
    rep.predicted_slope =
        static_cast<double>(cfg.sgd.dim) * cfg.sgd.noise_std * cfg.sgd.noise_std;
    const OlsFit fit = ols_fit(es.grid, es.mean);
    rep.mean_fit = {fit.slope, fit.intercept, fit.stderr_slope, fit.r2};
    rep.difference = std::move(es);
    return rep;
}

namespace {
struct File {
    FILE* f = nullptr;
    ~File() {
        if (f) std::fclose(f);
    }
};
}  // namespace

void ensure_directory(const std::string& path) {
    if (path.empty() || path == ".") return;
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory", path);
}

void write_trace_csv(const std::string& path, std::span<const TraceSeries> traces) {
    File fh;
    fh.f = std::fopen(path.c_str(), "w");
    if (!fh.f) throw IoError("cannot open for writing", path);
    std::fprintf(fh.f, "t,value,replication,probe,beta,N,seed\n");
    for (const auto& tr : traces) {
        tr.validate();
        for (std::size_t i = 0; i < tr.grid.size(); ++i)
            std::fprintf(fh.f, "%.17g,%.17g,%u,%s,%.17g,%ld,%" PRIu64 "\n", tr.grid[i],
                         tr.values[i], tr.replication, tr.probe.c_str(), tr.beta, tr.n, tr.seed);
    }
    std::fflush(fh.f);
    if (std::ferror(fh.f)) throw IoError("write failed", path);
}

void write_variance_csv(const std::string& path, const VarianceReport& report) {
    if (report.batch_sizes.size() != report.v_hat.size() ||
        report.batch_sizes.size() != report.bootstrap.size())
        throw ConfigError("variance report: inconsistent sizes");
    File fh;
    fh.f = std::fopen(path.c_str(), "w");
    if (!fh.f) throw IoError("cannot open for writing", path);
    std::fprintf(fh.f, "batch_size,V_hat,bootstrap_id\n");
    for (std::size_t i = 0; i < report.batch_sizes.size(); ++i) {
        std::fprintf(fh.f, "%d,%.17g,-1\n", report.batch_sizes[i], report.v_hat[i]);
        for (std::size_t b = 0; b < report.bootstrap[i].size(); ++b)
            std::fprintf(fh.f, "%d,%.17g,%zu\n", report.batch_sizes[i], report.bootstrap[i][b],
                         b);
    }
    std::fflush(fh.f);
    if (std::ferror(fh.f)) throw IoError("write failed", path);
}

void write_summary_csv(const std::string& path, std::span<const EnsembleSummary> ensembles) {
    File fh;
    fh.f = std::fopen(path.c_str(), "w");
    if (!fh.f) throw IoError("cannot open for writing", path);
    std::fprintf(fh.f, "t,beta,mean,ci_lo,ci_hi,R\n");
    for (const auto& es : ensembles) {
        if (es.grid.size() != es.mean.size() || es.grid.size() != es.ci_lo.size() ||
            es.grid.size() != es.ci_hi.size())
            throw ConfigError("summary: inconsistent sizes");
        for (std::size_t g = 0; g < es.grid.size(); ++g)
            std::fprintf(fh.f, "%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", es.grid[g], es.beta,
                         es.mean[g], es.ci_lo[g], es.ci_hi[g], es.replications);
    }
    std::fflush(fh.f);
    if (std::ferror(fh.f)) throw IoError("write failed", path);
}

}  // namespace mfsgd
