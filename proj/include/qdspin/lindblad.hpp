#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qdspin/constants.hpp"
#include "qdspin/physics_core.hpp"

namespace qdspin {

using Matrix4c = Eigen::Matrix<cplx, 4, 4>;
/// Superoperator acting on column-major vec(rho): index i + 4 j holds rho(i, j).
using Superop = Eigen::Matrix<cplx, 16, 16>;
using VecRho = Eigen::Matrix<cplx, 16, 1>;

/// 4x4 density matrix in the level basis of a LevelDiagram.
struct DensityMatrix {
    Matrix4c m = Matrix4c::Zero();

    static DensityMatrix pure(int level);
    static DensityMatrix from_ket(const Eigen::Vector4cd& ket);
    /// Equal mixture of the two ground states.
    static DensityMatrix mixed_ground();

    double population(int level) const { return m(level, level).real(); }
    cplx trace() const { return m.trace(); }
    double purity() const { return (m * m).trace().real(); }

    VecRho vec() const;
    static DensityMatrix from_vec(const VecRho& v);
};

struct StateDiagnostics {
    double hermiticity_defect = 0.0;  ///< max |rho - rho^dagger| element
    double trace_defect = 0.0;        ///< |Tr rho - 1|
    double min_eigenvalue = 0.0;      ///< of the Hermitian part
};

StateDiagnostics validate_state(const DensityMatrix& rho);

/// Incoherent rates, all in 1/ns.
struct RateSet {
    double gamma_decay = 0.0;
    /// branching[i][j]: fraction of trion (2 + i) decaying to ground j.
    std::array<std::array<double, 2>, 2> branching{{{0.5, 0.5}, {0.5, 0.5}}};
    double kappa_spinflip = 0.0;
    /// Incoherent excitation rate from `repump_from` into each trion.
    double gamma_repump = 0.0;
    int repump_from = kGround1;
    double gamma_spin_dephasing = 0.0;

    void validate() const;
    double max_rate() const;
};

/// Coherent drive on one transition of a LevelDiagram.
struct DriveTerm {
    int transition = 0;
    /// Rabi frequency envelope, rad/ns, >= 0.
    std::function<double(double)> rabi_envelope;
    /// Laser angular frequency minus the transition frequency, rad/ns.
    double detuning = 0.0;
    /// Polarization overlap <dipole, field>; multiplies the Rabi frequency.
    cplx coupling{1.0, 0.0};
};

/// Lindblad generator for a fixed rate set. Collapse operators:
/// sqrt(Gamma b_ij)|g_j><T_i|, sqrt(kappa)|g0><g1|, sqrt(kappa)|g1><g0|,
/// sqrt(gamma_repump)|T_k><g_repump|, sqrt(gamma_phi/2)(|g0><g0| - |g1><g1|).
class Liouvillian {
public:
    explicit Liouvillian(const RateSet& rates);

    Matrix4c apply(const Matrix4c& hamiltonian, const Matrix4c& rho) const;
    /// Full generator as a 16x16 matrix on vec(rho).
    Superop superoperator(const Matrix4c& hamiltonian) const;
    /// Dissipative part only.
    const Superop& dissipator() const { return dissipator_; }

private:
    struct Transfer {
        int from;
        int to;
        double rate;
    };
    std::vector<Transfer> transfers_;
    Eigen::Vector4d dephasing_ = Eigen::Vector4d::Zero();
    Eigen::Vector4d loss_ = Eigen::Vector4d::Zero();  // diag of sum L^dagger L
    Superop dissipator_;
};

/// -i[H, rho] + sum_k (L_k rho L_k^dagger - {L_k^dagger L_k, rho}/2).
/// Throws DomainError when H is not Hermitian within 1e-10.
Matrix4c liouvillian_apply(const Matrix4c& hamiltonian, const RateSet& rates, const Matrix4c& rho);

struct EvolveOptions {
    /// Angular frequency of the rotating frame applied to the trions, relative
    /// to the mean trion line. Defaults to the laser frequency of the first drive.
    std::optional<double> frame_frequency;
    /// Quasi-static shift added to the ground splitting (rad/ns).
    double extra_ground_splitting = 0.0;
    /// Run even when dt * max(|H|, rates) >= 0.1.
    bool allow_coarse_step = false;
    /// Keep every n-th state (the final state is always kept).
    int record_stride = 1;
    /// Skip the per-step eigenvalue check (superoperator propagation).
    bool check_positivity = true;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<DensityMatrix> states;
    std::vector<double> emission_rate;  ///< Gamma * trion population, 1/ns
    int renormalizations = 0;
    double max_trace_drift = 0.0;
    double max_hermiticity_defect = 0.0;
    double min_eigenvalue = 0.0;
    double step_product = 0.0;  ///< dt * max(|H|, rates) over the run
    double dt = 0.0;

    const DensityMatrix& final_state() const { return states.back(); }
};

/// Time-dependent Hamiltonian in the rotating frame:
/// diag(E_g0, E_g1, E_T0 - w_frame, E_T1 - w_frame) + drives.
Matrix4c hamiltonian_at(const LevelDiagram& diagram, const std::vector<DriveTerm>& drives,
                        double t, double frame_frequency, double extra_ground_splitting = 0.0);

double default_frame_frequency(const LevelDiagram& diagram, const std::vector<DriveTerm>& drives);

/// Fixed-step RK4 integration of the master equation over [t0, t1].
/// The step is dt rounded down so that it divides the span.
Trajectory evolve(const DensityMatrix& rho0, const LevelDiagram& diagram,
                  const std::vector<DriveTerm>& drives, const RateSet& rates, double t0, double t1,
                  double dt, const EvolveOptions& options = {});

/// RK4 propagation of the full superoperator over [t0, t1] (16 basis states
/// integrated together); same stepping rules as evolve.
Superop propagate_superoperator(const LevelDiagram& diagram, const std::vector<DriveTerm>& drives,
                                const RateSet& rates, double t0, double t1, double dt,
                                const EvolveOptions& options = {});

/// exp(L * duration) for a time-independent generator.
Superop exact_propagator(const Superop& generator, double duration);

/// CSV: time_ns, rho_ij_re, rho_ij_im (row-major over i, j), emission_rate.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace qdspin
