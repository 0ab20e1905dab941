#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mfsgd/errors.hpp"
#include "mfsgd/harness.hpp"

using namespace mfsgd;

namespace {

struct CliOpts {
    std::string config;
    std::string out;
    std::string scale = "desk";
    long long seed = -1;
    int threads = -1;
};

void add_common(CLI::App* sub, CliOpts& o) {
    sub->add_option("--config", o.config, "key = value config file overlaid on the preset");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--threads", o.threads, "worker threads (0 = hardware)");
    sub->add_option("--scale", o.scale, "preset scale: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
}

std::string joined(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void save_effective_config(const ExperimentConfig& cfg) {
    const std::string path = joined(cfg.out_dir, "config.txt");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing", path);
    out << serialize_config(cfg);
    if (!out) throw IoError("write failed", path);
}

void run_single(const ExperimentConfig& cfg) {
    const auto probes = cfg.probe_functions();
    auto res = run_trajectory(cfg.sgd, cfg.data_model(), cfg.act, cfg.t_end, probes, cfg.seed, 0);
    std::vector<TraceSeries> thinned;
    thinned.reserve(res.traces.size());
    for (auto& tr : res.traces) thinned.push_back(tr.thinned(static_cast<std::size_t>(cfg.thin)));
    write_trace_csv(joined(cfg.out_dir, "trace.csv"), thinned);
    std::printf("single-run: N=%zu d=%zu t_end=%.17g\n", cfg.sgd.n_neurons, cfg.sgd.dim,
                cfg.t_end);
    for (const auto& tr : thinned)
        std::printf("  %s(t=%.17g) = %.17g\n", tr.probe.c_str(), tr.grid.back(),
                    tr.values.back());
}

void run_meanfield(const ExperimentConfig& cfg) {
    RngStream qs(cfg.seed, kReferenceRep, StreamPurpose::Quadrature);
    const QuadratureSample sample = QuadratureSample::draw(cfg.data_model(), cfg.ref_quadrature, qs);
    SGDConfig pc = cfg.sgd;
    pc.n_neurons = cfg.ref_particles;
    RngStream is(cfg.seed, kReferenceRep, StreamPurpose::Init);
    NetworkState st = init_state(pc, is);
    const auto traj = integrate_meanfield(std::move(st.weights), sample, cfg.act, cfg.sgd.alpha,
                                          cfg.t_end, cfg.ref_dt, cfg.ref_method, cfg.ref_stride);
    std::vector<TraceSeries> traces;
    for (const auto& f : cfg.probe_functions()) {
        TraceSeries tr = reference_trace(traj, f);
        tr.seed = cfg.seed;
        traces.push_back(std::move(tr));
    }
    write_trace_csv(joined(cfg.out_dir, "meanfield.csv"), traces);
    std::printf("meanfield-run: particles=%zu quadrature=%zu t_end=%.17g\n", cfg.ref_particles,
                cfg.ref_quadrature, cfg.t_end);
    for (const auto& tr : traces)
        std::printf("  %s(t=%.17g) = %.17g\n", tr.probe.c_str(), tr.grid.back(),
                    tr.values.back());
}

void run_variance(const ExperimentConfig& cfg) {
    const VarianceReport rep = run_variance_experiment(cfg);
    write_variance_csv(joined(cfg.out_dir, "variance.csv"), rep);
    std::printf("variance: N=%zu d=%zu t_obs=%.17g replications=%d\n", cfg.sgd.n_neurons,
                cfg.sgd.dim, cfg.t_obs, cfg.replications);
    for (std::size_t i = 0; i < rep.batch_sizes.size(); ++i)
        std::printf("  |B|=%d  V_hat=%.17g\n", rep.batch_sizes[i], rep.v_hat[i]);
    std::printf("  spearman=%.17g\n", rep.spearman);
}

void run_clt(const ExperimentConfig& cfg) {
    const CltReport rep = run_clt_experiment(cfg);
    write_summary_csv(joined(cfg.out_dir, "clt_summary.csv"), rep.ensembles);
    write_trace_csv(joined(cfg.out_dir, "clt_reference.csv"), {&rep.reference, 1});
    std::printf("clt: N=%zu replications=%d channels=%zu\n", cfg.sgd.n_neurons,
                cfg.replications, rep.ensembles.size());
    for (const auto& es : rep.ensembles)
        std::printf("  beta=%.17g  mean(t=%.17g)=%.17g  ci=[%.17g, %.17g]\n", es.beta,
                    es.grid.back(), es.mean.back(), es.ci_lo.back(), es.ci_hi.back());
}

void run_drift(const ExperimentConfig& cfg) {
    const DriftReport rep = run_drift_check(cfg);
    write_summary_csv(joined(cfg.out_dir, "drift_summary.csv"), {&rep.difference, 1});
    std::printf("drift: N=%zu replications=%d betas=%.17g,%.17g\n", cfg.sgd.n_neurons,
                rep.replications, cfg.betas[0], cfg.betas[1]);
    std::printf("  slope=%.17g  stderr=%.17g  predicted=%.17g\n", rep.slope_mean,
                rep.slope_stderr, rep.predicted_slope);
    std::printf("  mean-trace fit: slope=%.17g r2=%.17g\n", rep.mean_fit.slope, rep.mean_fit.r2);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mini-batch noisy SGD simulator for wide two-layer networks"};
    app.require_subcommand(1);
    CliOpts opts;
    struct Entry {
        const char* name;
        ExperimentKind kind;
        const char* help;
    };
    const Entry entries[] = {
        {"single-run", ExperimentKind::SingleRun, "one SGD trajectory, probe trace to CSV"},
        {"meanfield-run", ExperimentKind::MeanFieldRun, "limit ODE on a particle cloud"},
        {"variance", ExperimentKind::Variance, "terminal probe variance across batch sizes"},
        {"clt", ExperimentKind::Clt, "scaled fluctuation ensembles against a limit reference"},
        {"drift", ExperimentKind::Drift, "coupled-pair gap growth for an anomalous exponent"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name, e.help);
        add_common(sub, opts);
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help/version are fine, bad usage is a config error
    }

    try {
        ExperimentKind kind = ExperimentKind::SingleRun;
        for (std::size_t i = 0; i < subs.size(); ++i)
            if (subs[i]->parsed()) kind = entries[i].kind;
        const ScalePreset scale =
            opts.scale == "paper" ? ScalePreset::Paper : ScalePreset::Desk;
        ExperimentConfig cfg = preset_config(kind, scale);
        if (!opts.config.empty()) cfg = load_config(opts.config, cfg);
        cfg.kind = kind;  // the subcommand wins over any experiment key in the file
        if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
        if (opts.threads >= 0) cfg.threads = opts.threads;
        if (!opts.out.empty()) cfg.out_dir = opts.out;
        cfg.validate();
        ensure_directory(cfg.out_dir);
        save_effective_config(cfg);

        switch (kind) {
            case ExperimentKind::SingleRun: run_single(cfg); break;
            case ExperimentKind::MeanFieldRun: run_meanfield(cfg); break;
            case ExperimentKind::Variance: run_variance(cfg); break;
            case ExperimentKind::Clt: run_clt(cfg); break;
            case ExperimentKind::Drift: run_drift(cfg); break;
        }
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }
    return 0;
}
