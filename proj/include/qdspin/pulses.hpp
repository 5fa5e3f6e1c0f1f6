#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "qdspin/errors.hpp"
#include "qdspin/jones.hpp"
#include "qdspin/lindblad.hpp"
#include "qdspin/physics_core.hpp"

namespace qdspin {

/// How the quoted pulse width maps onto the Gaussian field envelope.
enum class PulseWidthConvention {
    FieldFwhm,      ///< width is the FWHM of |Omega(t)|
    IntensityFwhm,  ///< width is the FWHM of |Omega(t)|^2
};

struct ResonantDrive {
    double duration = 5.0;  ///< ns
    double rabi = 0.0;      ///< rad/ns on each target
    std::vector<int> targets{0, 1};
};

/// Far-detuned Gaussian pulse, Omega(t) = Omega0 exp(-4 ln2 t^2 / t_p^2).
struct RotationPulse {
    double peak_rabi = 0.0;  ///< Omega0, rad/ns
    double width = 0.006;    ///< quoted width, ns
    double detuning = 0.0;   ///< laser minus mean trion line, rad/ns
    JonesVector drive_dipole = JonesVector::sigma_plus();
    PulseWidthConvention convention = PulseWidthConvention::FieldFwhm;
    /// Integration window in units of the field FWHM, centred on the pulse.
    double window_fwhms = 4.0;

    double field_fwhm() const;
    double window() const { return window_fwhms * field_fwhm(); }
    double envelope(double t_from_center) const;
};

struct Delay {
    double duration = 0.0;
};

struct PulseSegment {
    std::variant<ResonantDrive, RotationPulse, Delay> kind;
    double dt_hint = 1e-3;  ///< ns

    /// Time this segment occupies on the sequence axis. A rotation pulse is a
    /// marker at its centre and occupies none; its envelope extends window/2
    /// into the neighbouring segments.
    double duration() const;
    bool is_rotation() const { return std::holds_alternative<RotationPulse>(kind); }
};

struct PulseSequence {
    std::vector<PulseSegment> segments;

    double total_duration() const;
    /// Sequence times of every rotation-pulse centre.
    std::vector<double> rotation_centers() const;
    /// Start time of segment i.
    double segment_start(std::size_t i) const;
};

/// Single-qubit rotation of the ground-state spin in the |E+>, |E-> basis.
struct EffectiveRotation {
    double angle = 0.0;
    std::array<double, 3> axis{1.0, 0.0, 0.0};
    Eigen::Matrix2cd unitary = Eigen::Matrix2cd::Identity();
};

/// exp(-i angle (axis . sigma) / 2).
Eigen::Matrix2cd rotation_unitary(double angle, const std::array<double, 3>& axis);

/// Rotation angle of a 2x2 unitary up to global phase, in [0, pi].
double rotation_angle_of(const Eigen::Matrix2cd& u);

/// theta = Omega0^2 t_p sqrt(pi / (8 ln 2)) / (2 |Delta|).
double rotation_angle(const RotationPulse& pulse);

/// Peak Rabi frequency giving `angle` for the pulse's width and detuning.
double peak_rabi_for_angle(double angle, const RotationPulse& pulse);

struct PolarizationOverlaps {
    double sigma_plus;
    double sigma_minus;
};
PolarizationOverlaps circular_overlaps(const JonesVector& field);

/// Raised when a rotation pulse does not address a single circular dipole.
class ImpurePolarizationError : public DomainError {
public:
    ImpurePolarizationError(const std::string& what, PolarizationOverlaps o)
        : DomainError(what), overlaps_(o) {}
    PolarizationOverlaps overlaps() const noexcept { return overlaps_; }

private:
    PolarizationOverlaps overlaps_;
};

/// AC-Stark rotation about the z axis of the spin basis (x of the |E+->
/// Bloch sphere). The sign follows the helicity and the sign of Delta.
EffectiveRotation effective_rotation(const RotationPulse& pulse, const LevelDiagram& diagram);

/// Drive terms realizing the pulse on every transition of `diagram`, centred at `center`.
std::vector<DriveTerm> rotation_drive_terms(const RotationPulse& pulse, const LevelDiagram& diagram,
                                            double center);

/// Default calibration coefficient: pi/2 at 25 uW, rad per sqrt(uW).
inline constexpr double kDefaultPowerCoefficient = (kPi / 2.0) / 5.0;

/// P = (angle / a)^2 in uW.
double calibrate_power(double target_angle, double coefficient = kDefaultPowerCoefficient);
/// angle = a sqrt(P).
double angle_from_power(double power_uw, double coefficient = kDefaultPowerCoefficient);

struct RamseyTiming {
    double guard_before = 5.0;  ///< init end to first pulse centre, ns
    double guard_after = 2.0;   ///< second pulse centre to readout start, ns
    double resonant_dt = 1e-3;
    double delay_dt = 1e-3;
};

/// [ResonantDrive(init), Delay, Rotation, Delay(tau), Rotation, Delay, ResonantDrive(readout)].
/// tau is the centre-to-centre separation of the rotation pulses.
PulseSequence build_ramsey_sequence(double tau, double init_duration, double readout_duration,
                                    const RotationPulse& rotation, const ResonantDrive& drive = {},
                                    const RamseyTiming& timing = {});

/// Step size resolving the pulse's carrier and peak Rabi frequency.
double rotation_dt_hint(const RotationPulse& pulse, double frame_frequency);

/// INI-style description of the sequence ([sequence] section).
std::string describe_sequence(const PulseSequence& seq);

}  // namespace qdspin
