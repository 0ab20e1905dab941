#pragma once
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfsgd/fluctuation.hpp"
#include "mfsgd/meanfield.hpp"
#include "mfsgd/measure.hpp"
#include "mfsgd/model.hpp"
#include "mfsgd/sgd.hpp"

namespace mfsgd {

enum class ExperimentKind { SingleRun, MeanFieldRun, Variance, Clt, Drift };
enum class ScalePreset { Desk, Paper };
enum class ReferenceKind { LargeN, Ode };

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::SingleRun;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out_dir = ".";

    SGDConfig sgd;
    ActivationSpec act;
    std::vector<MixtureComponent> components = DataModel::default_mixture(1).components;
    std::vector<std::string> probes = {"square"};

    double t_end = 1.0;
    double t_obs = 1.25;
    int replications = 100;
    int bootstrap = 10;
    int thin = 20;
    std::vector<int> batch_sizes = {1, 2, 4, 8, 16};
    std::vector<double> betas = {1.0};

    ReferenceKind ref_kind = ReferenceKind::LargeN;
    double ref_factor = 10.0;
    std::size_t ref_particles = 2000;
    std::size_t ref_quadrature = 2000;
    double ref_dt = 0.0;  // 0 = integrator default
    Integrator ref_method = Integrator::Rk4;
    std::size_t ref_stride = 1;

    DataModel data_model() const;  // dim follows sgd.dim
    std::vector<TestFunction> probe_functions() const;
    void validate() const;

    bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig preset_config(ExperimentKind kind, ScalePreset scale);

// flat "key = value" text, '#' comments; keys not present keep base values
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});
std::string serialize_config(const ExperimentConfig& cfg);

// runs work(0..count-1) on the given number of threads; results must land in
// per-index slots so serial and parallel execution agree bitwise
void parallel_replications(int count, int threads, const std::function<void(int)>& work);

struct VarianceReport {
    std::vector<int> batch_sizes;
    std::vector<double> v_hat;
    std::vector<std::vector<double>> bootstrap;  // per batch size
    double spearman = 0.0;
};
VarianceReport run_variance_experiment(const ExperimentConfig& cfg);

struct EnsembleSummary {
    double beta = 1.0;
    std::vector<double> grid, mean, ci_lo, ci_hi;  // 95% band for the ensemble mean
    int replications = 0;
};
struct CltReport {
    std::vector<EnsembleSummary> ensembles;  // one per requested beta
    TraceSeries reference;                   // limit trace on the ensemble grid
};
CltReport run_clt_experiment(const ExperimentConfig& cfg);

struct DriftReport {
    EnsembleSummary difference;  // mean sqrt(N)-scaled gap between the two channels
    double slope_mean = 0.0;     // average of per-replication fitted slopes
    double slope_stderr = 0.0;
    double predicted_slope = 0.0;  // d * noise_std^2
    DriftFit mean_fit;             // line fit of the mean gap trace
    int replications = 0;
};
DriftReport run_drift_check(const ExperimentConfig& cfg);

void ensure_directory(const std::string& path);
void write_trace_csv(const std::string& path, std::span<const TraceSeries> traces);
void write_variance_csv(const std::string& path, const VarianceReport& report);
void write_summary_csv(const std::string& path, std::span<const EnsembleSummary> ensembles);

}  // namespace mfsgd
