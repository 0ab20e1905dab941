#pragma once
#include <cstddef>
#include <vector>

#include "mfsgd/matrix.hpp"
#include "mfsgd/measure.hpp"
#include "mfsgd/model.hpp"
#include "mfsgd/rng.hpp"

namespace mfsgd {

// fixed material sample of the data law, reused as an integration measure
struct QuadratureSample {
    Matrix xs;
    std::vector<double> ys;

    static QuadratureSample draw(const DataModel& model, std::size_t count, RngStream& rng);
    std::size_t size() const { return ys.size(); }
};

enum class Integrator { Euler, Rk4 };

struct MeanFieldTrajectory {
    std::vector<double> times;
    std::vector<Matrix> snapshots;
};

// limit vector field evaluated on a particle cloud, O(particles * sample)
void meanfield_drift(const ActivationSpec& act, const Matrix& particles,
                     const QuadratureSample& sample, double alpha, Matrix& out);

// advance the cloud to t_end; dt <= 0 picks 1/(2 * particles), and the step
// is adjusted to land on t_end exactly; snapshots are kept every
// snapshot_stride steps plus the endpoints
MeanFieldTrajectory integrate_meanfield(Matrix init_particles, const QuadratureSample& sample,
                                        const ActivationSpec& act, double alpha, double t_end,
                                        double dt, Integrator method,
                                        std::size_t snapshot_stride);

// probe values along the snapshot times (metadata marks it as a limit trace)
TraceSeries reference_trace(const MeanFieldTrajectory& traj, const TestFunction& f);

}  // namespace mfsgd
