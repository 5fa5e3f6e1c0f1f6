#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qdspin/fitting.hpp"
#include "qdspin/lindblad.hpp"
#include "qdspin/physics_core.hpp"
#include "qdspin/pulses.hpp"

namespace qdspin {

// --- frozen defaults ----------------------------------------------------------
// Values below are calibrated once (see calibrate_* functions and the tests that
// pin them) and then used as defaults.

/// Trion decay rate, 2 pi x 0.2 GHz lifetime-limited linewidth (1/ns).
inline constexpr double kDefaultGammaDecay = 2.0 * kPi * 0.2;
/// Cotunneling-limited spin-flip rate, 0.2 per us (1/ns).
inline constexpr double kDefaultSpinFlip = 2e-4;
/// Homogeneous linewidth entering the off-resonant repump, 2 pi x 1.8 GHz.
inline constexpr double kDefaultGammaLine = 2.0 * kPi * 1.8;
/// Resonant-laser Rabi frequency giving steady-state F_init = 0.90 without the
/// rotation laser (calibrate_pump_rabi).
inline constexpr double kDefaultPumpRabi = 6.6837102438841089;
/// Spin flips added by the rotation laser, 90 per us (1/ns).
inline constexpr double kDefaultAddedSpinFlip = 0.09;
/// Per-pulse trion kick giving a rotation fidelity of 0.99.
inline constexpr double kDefaultTrionExcitation = 4.0 / 3.0 * (1.0 - 0.99 * 0.99);
/// Repump linewidth broadening under the rotation laser giving steady-state
/// F_init = 0.54 (calibrate_repump_broadening); the voltage-width ratio alone
/// suggests about 5.
inline constexpr double kDefaultRepumpBroadening = 7.9955037697400275;
inline constexpr double kDefaultCollectionEfficiency = 0.8;
/// In-plane electron g of this dot at 2 T: 12.70 GHz Larmor frequency.
inline constexpr double kDefaultElectronG = -12.70 / (2.0 * kBohrMagnetonGHzPerTesla);
/// Peak Rabi frequency of the default pi/2 rotation pulse (6 ps, -0.8 THz).
double default_rotation_rabi();
RotationPulse default_rotation_pulse();

// --- system -------------------------------------------------------------------

/// Physical inputs shared by the experiments.
struct SystemParams {
    Geometry geometry = Geometry::Voigt;
    double field_tesla = 2.0;
    GFactors g{kDefaultElectronG};
    double impurity = 0.0;
    double gamma_decay = kDefaultGammaDecay;
    std::array<std::array<double, 2>, 2> branching{{{0.5, 0.5}, {0.5, 0.5}}};
    double kappa_spinflip = kDefaultSpinFlip;
    double gamma_line = kDefaultGammaLine;
    double gamma_spin_dephasing = 0.0;
    /// Rabi frequency of the resonant init/readout laser on each target.
    double resonant_rabi = kDefaultPumpRabi;
    /// Off-resonant repumping through the lower-energy transitions.
    bool repump = true;

    LevelDiagram diagram() const;
    void validate() const;
};

struct RotationLaserSideEffects {
    double trion_excitation_prob = kDefaultTrionExcitation;
    double added_spinflip_rate = kDefaultAddedSpinFlip;  ///< 1/ns
    double repump_broadening_factor = kDefaultRepumpBroadening;

    void validate() const;
    /// No trion kick, no added flips, no broadening.
    static RotationLaserSideEffects none() { return {0.0, 0.0, 1.0}; }
};

/// Lorentzian off-resonant excitation rate (Omega^2/2)(g/2)/((g/2)^2 + delta^2), 1/ns.
double repump_rate(double rabi, double detuning, double linewidth);

/// Transitions driven by the resonant laser: the two starting at ground 0
/// (the higher-energy pair).
std::array<int, 2> readout_transitions(const LevelDiagram& diagram);

/// Laser frequency of the resonant laser (frame of all experiments).
double readout_frame(const LevelDiagram& diagram);

/// Repump rate of the resonant laser into each trion from ground 1: mean of the
/// Lorentzians of the two lower-energy transitions.
double pumping_repump_rate(const SystemParams& sys, const LevelDiagram& diagram,
                           const RotationLaserSideEffects& side);

/// Rates during a segment; `laser_on` enables the repump channel.
RateSet segment_rates(const SystemParams& sys, const LevelDiagram& diagram,
                      const RotationLaserSideEffects& side, bool laser_on);

/// Constant resonant drive terms over all time.
std::vector<DriveTerm> resonant_drive_terms(const LevelDiagram& diagram, double rabi);

// --- optical pumping ----------------------------------------------------------

struct ReadoutModel {
    double collection_efficiency = kDefaultCollectionEfficiency;
    /// Integration window relative to the start of the readout pulse (ns);
    /// empty means the whole pulse.
    std::optional<std::pair<double, double>> window;
    /// Constant additive background per shot (raw signal units).
    double background = 0.0;

    void validate(double readout_duration) const;
    std::pair<double, double> resolved_window(double readout_duration) const;
};

struct PumpingResult {
    Trajectory trajectory;
    double init_fidelity = 0.0;     ///< population of ground 1 at the end
    double collected_counts = 0.0;  ///< efficiency x integrated emission
    double pumping_rate = 0.0;      ///< fitted 1/e rate of ground-0 depletion, 1/ns
    double rabi = 0.0;
    bool rabi_resolved = false;     ///< Rabi frequency exceeds decay and pumping rates
};

/// Pump from rho0 with the resonant drive for `duration`; F_init is the
/// population of the non-driven ground state at the end.
PumpingResult run_optical_pumping(const LevelDiagram& diagram, const RateSet& rates,
                                  const ResonantDrive& drive, const ReadoutModel& readout,
                                  double duration, double dt = 1e-3,
                                  const DensityMatrix& rho0 = DensityMatrix::mixed_ground());

/// Pumping with the system's own rates and drive, optionally with the
/// rotation laser present.
PumpingResult simulate_pumping(const SystemParams& sys, const RotationLaserSideEffects& side,
                               double duration, const ReadoutModel& readout = {},
                               double dt = 1e-3);

/// Generator of the resonant-laser segments (drive, repump, decay, flips).
Superop pumping_generator(const SystemParams& sys, const LevelDiagram& diagram,
                          const RotationLaserSideEffects& side, double overhauser_shift = 0.0);

/// Null vector of a trace-preserving generator, normalized to unit trace.
VecRho steady_state(const Superop& generator);

/// F_init from the exact propagator starting in the mixed ground state; an
/// infinite duration gives the steady-state value.
double pumping_fidelity(const SystemParams& sys, const RotationLaserSideEffects& side,
                        double duration = std::numeric_limits<double>::infinity());

/// Resonant Rabi frequency giving steady-state F_init = target without the
/// rotation laser, on the strong side of the fidelity maximum.
double calibrate_pump_rabi(SystemParams sys, double target_fidelity);

/// Repump broadening factor giving steady-state F_init = target with the
/// rotation laser present (all other side effects as given).
double calibrate_repump_broadening(const SystemParams& sys, RotationLaserSideEffects side,
                                   double target_fidelity);

// --- Overhauser field ------------------------------------------------------------

struct OverhauserModel {
    double sigma_delta = 0.0;  ///< rad/ns
    std::uint64_t seed = 1;

    /// sigma_delta = sqrt(2) / T2*.
    static OverhauserModel from_t2star(double t2star_ns, std::uint64_t seed);
};

/// n Gaussian draws; draw i depends only on (seed, i).
std::vector<double> sample_overhauser(const OverhauserModel& model, std::size_t n);

/// Normal variate of stream (seed, index).
double seeded_normal(std::uint64_t seed, std::uint64_t index);

/// Ensemble-averaged coherence |<exp(-i delta tau)>| of a superposition under
/// exact free evolution (no decay), with its Monte-Carlo standard error.
struct CoherencePoint {
    double tau = 0.0;
    double coherence = 0.0;
    double stderr_ = 0.0;
};
std::vector<CoherencePoint> ensemble_coherence(const SystemParams& sys, const OverhauserModel& model,
                                               std::size_t n, const std::vector<double>& taus,
                                               unsigned threads = 0);

// --- Ramsey -------------------------------------------------------------------

enum class SimulationMode { Effective, FullIntegration };
std::string to_string(SimulationMode m);
SimulationMode mode_from_string(const std::string& s);

struct RamseyConfig {
    SystemParams system;
    RotationPulse rotation = default_rotation_pulse();
    double init_duration = 5.0;
    double readout_duration = 5.0;
    RamseyTiming timing;
    std::vector<double> delays;
    SimulationMode mode = SimulationMode::Effective;
    std::size_t ensemble_size = 2000;
    OverhauserModel overhauser = OverhauserModel::from_t2star(2.2, 1);
    /// Empty: no rotation-laser side effects.
    std::optional<RotationLaserSideEffects> side_effects;
    ReadoutModel readout;
    unsigned threads = 0;
    /// Start the init pulse from the pumping steady state (the strong-pumping
    /// limit); otherwise from the mixed ground state.
    bool init_from_steady_state = true;
    /// Refuse ensemble x delays above the guard unless set.
    bool allow_long_run = false;

    void validate() const;
};

/// ensemble x delays limits before the run guard trips.
inline constexpr double kEffectiveWorkLimit = 5e7;
inline constexpr double kFullWorkLimit = 2e6;

struct RamseyTrace {
    std::vector<double> delays;
    std::vector<double> signal;
    std::vector<double> signal_stderr;
    std::size_t ensemble_size = 0;
    SimulationMode mode = SimulationMode::Effective;
    /// Ground-1 population after the init pulse, averaged over the ensemble.
    double init_fidelity = 0.0;

    DataSeries series() const;
};

RamseyTrace run_ramsey(const RamseyConfig& config);

/// Delay grid of n points spanning [start, stop].
std::vector<double> linear_grid(double start, double stop, std::size_t n);

/// Signal with mean removed, as in background-subtracted traces.
std::vector<double> mean_centered(const std::vector<double>& v);

/// Gaussian noise of std fraction x (max - min)/2 of the clean signal, from
/// stream seed (draw i per delay i); stderr is raised in quadrature.
RamseyTrace with_noise(const RamseyTrace& trace, double fraction, std::uint64_t seed);

/// Contrast (Imax - Imin)/(Imax + Imin) over the first fringe period; the
/// period comes from a Gauss-cosine fit (or is given).
double ramsey_contrast(const RamseyTrace& trace);
double ramsey_contrast(const RamseyTrace& trace, double angular_frequency);

// --- rotation fidelity --------------------------------------------------------

/// Realized ground-subspace map of a rotation pulse (4x4 on vec of the 2x2
/// ground block, column-major), after the trion population relaxes back.
/// Effective mode: unitary, then trion kick. Full mode: RK4 over the pulse
/// window with free precession removed (toggling frame) and renormalized by
/// the retained ground trace.
Eigen::Matrix4cd rotation_ground_map(const RotationPulse& pulse, const LevelDiagram& diagram,
                                     const RotationLaserSideEffects& side, const RateSet& rates,
                                     SimulationMode mode);

/// F = sqrt(Tr(S_U^dagger S_M)) / 2 with S_U the ideal unitary superoperator;
/// reduces to |Tr(U^dagger K)|/2 for a single-Kraus map.
double map_fidelity(const Eigen::Matrix2cd& ideal, const Eigen::Matrix4cd& map);

/// Rotation angle of the best orthogonal part of the map's Bloch matrix.
double map_rotation_angle(const Eigen::Matrix4cd& map);

double rotation_fidelity(const RotationPulse& pulse, const LevelDiagram& diagram,
                         const RotationLaserSideEffects& side, const RateSet& rates = {},
                         SimulationMode mode = SimulationMode::Effective);

/// p_T giving the target fidelity in effective mode: (4/3)(1 - F^2).
double trion_excitation_for_fidelity(double target_fidelity);

/// Full-integration superoperator of a pulse centred at t = 0 in the frame of
/// the resonant laser.
Superop full_pulse_superop(const RotationPulse& pulse, const LevelDiagram& diagram,
                           const RateSet& rates, double t_from, double t_to, double frame);

// --- Larmor series --------------------------------------------------------------

struct LarmorRow {
    double field_tesla = 0.0;
    double larmor_ghz = 0.0;
    double larmor_ghz_err = 0.0;
    double t2star_ns = 0.0;
    double g_factor = 0.0;
    bool fit_ok = false;
    std::string message;
};

std::vector<LarmorRow> extract_larmor_series(
    const std::vector<std::pair<double, RamseyTrace>>& traces);

void write_ramsey_csv(const RamseyTrace& trace, const std::string& path);

}  // namespace qdspin
