#pragma once
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mfsgd/matrix.hpp"
#include "mfsgd/measure.hpp"
#include "mfsgd/model.hpp"
#include "mfsgd/rng.hpp"

namespace mfsgd {

// beta sentinel: disables the per-step noise term entirely
inline constexpr double kNoiselessBeta = std::numeric_limits<double>::infinity();

// the random streams one replication consumes; keyed so that two runs with the
// same (master, replication) see identical draws regardless of other settings
struct RunStreams {
    RngStream init, data, batch, noise, quad;
    static RunStreams make(std::uint64_t master, std::uint32_t replication) {
        return {RngStream(master, replication, StreamPurpose::Init),
                RngStream(master, replication, StreamPurpose::Data),
                RngStream(master, replication, StreamPurpose::BatchSize),
                RngStream(master, replication, StreamPurpose::Noise),
                RngStream(master, replication, StreamPurpose::Quadrature)};
    }
};

enum class InitLaw { Gaussian, UniformBall, Point };

struct InitSpec {
    InitLaw law = InitLaw::Gaussian;
    double gaussian_std = 0.0;  // <= 0 picks the default 0.8/sqrt(d)
    double ball_radius = 1.0;
    std::vector<double> point;

    double std_for(std::size_t d) const;
    void validate(std::size_t d) const;

    bool operator==(const InitSpec&) const = default;
};

struct SGDConfig {
    std::size_t n_neurons = 1000;
    std::size_t dim = 1;
    double alpha = 0.1;
    double beta = 1.0;
    double noise_std = 0.1;
    BatchSchedule batch = BatchSchedule::fixed(1);
    InitSpec init;

    void validate() const;
    // full multiplier applied to a standard normal draw: noise_std * N^-beta
    double noise_scale() const;

    bool operator==(const SGDConfig&) const = default;
};

struct NetworkState {
    Matrix weights;  // N x d
    long step = 0;
};

NetworkState init_state(const SGDConfig& cfg, RngStream& init_rng);

// draws made during one step, for decomposition/diagnostic use; noise holds
// the sigma-scaled draws (the update applies them with the extra N^-beta)
struct StepRecord {
    Matrix batch_x;
    std::vector<double> batch_y;
    Matrix noise;
};

void sgd_step_inplace(const SGDConfig& cfg, NetworkState& state, const DataModel& model,
                      const ActivationSpec& act, RunStreams& streams, StepRecord* rec = nullptr);
NetworkState sgd_step(const SGDConfig& cfg, const NetworkState& state, const DataModel& model,
                      const ActivationSpec& act, RunStreams& streams, StepRecord* rec = nullptr);

// step with a caller-supplied batch (decomposition probes, deterministic
// references); pass noise_rng = nullptr for a noiseless step
void sgd_step_with_batch(const SGDConfig& cfg, NetworkState& state, const Matrix& batch_x,
                         std::span<const double> batch_y, const ActivationSpec& act,
                         RngStream* noise_rng, StepRecord* rec = nullptr);

struct TrajectoryResult {
    std::vector<TraceSeries> traces;  // one per probe, sampled every step
    NetworkState final_state;
};
TrajectoryResult run_trajectory(const SGDConfig& cfg, const DataModel& model,
                                const ActivationSpec& act, double t_end,
                                std::span<const TestFunction> probes, std::uint64_t master,
                                std::uint32_t replication);

// several noise exponents advanced in one pass over shared init/data/noise
// draws; returns one probe trace per entry of betas
std::vector<TraceSeries> run_coupled(const SGDConfig& base, std::span<const double> betas,
                                     const DataModel& model, const ActivationSpec& act,
                                     double t_end, const TestFunction& probe,
                                     std::uint64_t master, std::uint32_t replication);

// one-step split of the probe increment: total = d + m + r + noise exactly
// (m is defined as the batch term minus d, and r is the exact second-order
// remainder, so the identity holds to roundoff for constant-Hessian probes)
struct StepDecomposition {
    double d_term = 0.0;      // drift estimated from the supplied sample
    double m_term = 0.0;      // centered batch term
    double r_term = 0.0;      // second-order remainder
    double noise_term = 0.0;  // first-order noise contribution
    double total = 0.0;       // recomputed probe increment
};
StepDecomposition decompose_step(const SGDConfig& cfg, NetworkState& state,
                                 const DataModel& model, const ActivationSpec& act,
                                 const TestFunction& f, RunStreams& streams,
                                 const Matrix& sample_x, std::span<const double> sample_y,
                                 bool inject_batch);

// cumulative centered batch term along a run; the centering draws a fresh
// size-center_sample batch from the quadrature stream each step, so the
// conditional mean of every increment vanishes identically
TraceSeries martingale_trace(const SGDConfig& cfg, const DataModel& model,
                             const ActivationSpec& act, const TestFunction& f, double t_end,
                             int center_sample, std::uint64_t master, std::uint32_t replication);

}  // namespace mfsgd
