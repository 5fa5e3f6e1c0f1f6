#include "qdspin/pulses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

namespace qdspin {

namespace {

const double kFourLn2 = 4.0 * std::log(2.0);

}  // namespace

double RotationPulse::field_fwhm() const {
    return convention == PulseWidthConvention::FieldFwhm ? width : std::sqrt(2.0) * width;
}

double RotationPulse::envelope(double t) const {
    const double tp = field_fwhm();
    return peak_rabi * std::exp(-kFourLn2 * t * t / (tp * tp));
}

double PulseSegment::duration() const {
    return std::visit(
        [](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RotationPulse>) {
                return 0.0;
            } else {
                return s.duration;
            }
        },
        kind);
}

double PulseSequence::total_duration() const {
    double total = 0.0;
    for (const auto& s : segments) total += s.duration();
    return total;
}

double PulseSequence::segment_start(std::size_t i) const {
    double t = 0.0;
    for (std::size_t k = 0; k < i && k < segments.size(); ++k) t += segments[k].duration();
    return t;
}

std::vector<double> PulseSequence::rotation_centers() const {
    std::vector<double> out;
    double t = 0.0;
    for (const auto& s : segments) {
        if (s.is_rotation()) out.push_back(t);
        t += s.duration();
    }
    return out;
}

Eigen::Matrix2cd rotation_unitary(double angle, const std::array<double, 3>& axis) {
    const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    const double nx = axis[0] / n, ny = axis[1] / n, nz = axis[2] / n;
    const double c = std::cos(0.5 * angle), s = std::sin(0.5 * angle);
    const cplx i{0.0, 1.0};
    Eigen::Matrix2cd u;
    u(0, 0) = c - i * s * nz;
    u(0, 1) = -i * s * (nx - i * ny);
    u(1, 0) = -i * s * (nx + i * ny);
    u(1, 1) = c + i * s * nz;
    return u;
}

double rotation_angle_of(const Eigen::Matrix2cd& u) {
    const double half_trace = std::min(1.0, std::abs(u.trace()) / 2.0);
    return 2.0 * std::acos(half_trace);
}

double rotation_angle(const RotationPulse& pulse) {
    if (pulse.detuning == 0.0) throw DomainError("rotation pulse detuning must be nonzero");
    const double tp = pulse.field_fwhm();
    return pulse.peak_rabi * pulse.peak_rabi * tp * std::sqrt(kPi / (2.0 * kFourLn2)) /
           (2.0 * std::abs(pulse.detuning));
}

double peak_rabi_for_angle(double angle, const RotationPulse& pulse) {
    if (angle < 0.0) throw DomainError("rotation angle must be >= 0");
    RotationPulse unit = pulse;
    unit.peak_rabi = 1.0;
    return std::sqrt(angle / rotation_angle(unit));
}

PolarizationOverlaps circular_overlaps(const JonesVector& field) {
    const JonesVector e = field.normalized();
    return {std::norm(inner(JonesVector::sigma_plus(), e)),
            std::norm(inner(JonesVector::sigma_minus(), e))};
}

EffectiveRotation effective_rotation(const RotationPulse& pulse, const LevelDiagram& diagram) {
    (void)diagram;
    const double angle = rotation_angle(pulse);
    const PolarizationOverlaps o = circular_overlaps(pulse.drive_dipole);
    if (std::max(o.sigma_plus, o.sigma_minus) <= 0.99)
        throw ImpurePolarizationError(
            fmt::format("rotation pulse polarization is not circular enough: overlaps "
                        "sigma+ = {:.4f}, sigma- = {:.4f} (need > 0.99)",
                        o.sigma_plus, o.sigma_minus),
            o);
    // The addressed spin state is light-shifted by Omega^2 / (2 Delta); the
    // relative phase rotates the |E+-> sphere about +-x.
    const double helicity = o.sigma_plus > o.sigma_minus ? -1.0 : 1.0;
    const double sign = pulse.detuning < 0.0 ? helicity : -helicity;
    EffectiveRotation r;
    r.angle = angle;
    r.axis = {sign, 0.0, 0.0};
    r.unitary = rotation_unitary(angle, r.axis);
    return r;
}

std::vector<DriveTerm> rotation_drive_terms(const RotationPulse& pulse, const LevelDiagram& diagram,
                                            double center) {
    std::vector<DriveTerm> out;
    const JonesVector field = pulse.drive_dipole.normalized();
    for (int k = 0; k < static_cast<int>(diagram.transitions.size()); ++k) {
        const Transition& tr = diagram.transitions[k];
        DriveTerm d;
        d.transition = k;
        d.detuning = pulse.detuning - tr.frequency_offset;
        d.coupling = inner(tr.dipole, field);
        d.rabi_envelope = [pulse, center](double t) { return pulse.envelope(t - center); };
        out.push_back(std::move(d));
    }
    return out;
}

double calibrate_power(double target_angle, double coefficient) {
    if (!(coefficient > 0.0)) throw DomainError("calibration coefficient must be > 0");
    if (target_angle < 0.0) throw DomainError("target angle must be >= 0");
    const double r = target_angle / coefficient;
    return r * r;
}

double angle_from_power(double power_uw, double coefficient) {
    if (!(coefficient > 0.0)) throw DomainError("calibration coefficient must be > 0");
    if (power_uw < 0.0) throw DomainError("power must be >= 0");
    return coefficient * std::sqrt(power_uw);
}

double rotation_dt_hint(const RotationPulse& pulse, double frame_frequency) {
    const double scale = std::abs(pulse.detuning - frame_frequency) + std::abs(pulse.detuning) +
                         pulse.peak_rabi;
    return 0.05 / scale;
}

PulseSequence build_ramsey_sequence(double tau, double init_duration, double readout_duration,
                                    const RotationPulse& rotation, const ResonantDrive& drive,
                                    const RamseyTiming& timing) {
    if (tau < 0.0) throw DomainError("Ramsey delay must be >= 0");
    if (!(init_duration > 0.0) || !(readout_duration > 0.0))
        throw DomainError("resonant pulse durations must be > 0");
    PulseSequence seq;
    ResonantDrive init = drive;
    init.duration = init_duration;
    ResonantDrive readout = drive;
    readout.duration = readout_duration;
    const double rot_dt = rotation_dt_hint(rotation, 0.0);

    seq.segments.push_back({init, timing.resonant_dt});
    seq.segments.push_back({Delay{timing.guard_before}, timing.delay_dt});
    seq.segments.push_back({rotation, rot_dt});
    if (tau > 0.0) seq.segments.push_back({Delay{tau}, timing.delay_dt});
    seq.segments.push_back({rotation, rot_dt});
    seq.segments.push_back({Delay{timing.guard_after}, timing.delay_dt});
    seq.segments.push_back({readout, timing.resonant_dt});
    return seq;
}

std::string describe_sequence(const PulseSequence& seq) {
    std::ostringstream out;
    out << "[sequence]\n";
    for (std::size_t i = 0; i < seq.segments.size(); ++i) {
        const auto& s = seq.segments[i];
        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, ResonantDrive>) {
                    std::string targets;
                    for (int t : k.targets) targets += (targets.empty() ? "" : " ") + std::to_string(t);
                    out << fmt::format("segment_{} = resonant duration_ns={:.17g} rabi={:.17g} "
                                       "targets={} dt_ns={:.17g}\n",
                                       i, k.duration, k.rabi, targets, s.dt_hint);
                } else if constexpr (std::is_same_v<T, RotationPulse>) {
                    out << fmt::format("segment_{} = rotation peak_rabi={:.17g} width_ns={:.17g} "
                                       "detuning={:.17g} dt_ns={:.17g}\n",
                                       i, k.peak_rabi, k.width, k.detuning, s.dt_hint);
                } else {
                    out << fmt::format("segment_{} = delay duration_ns={:.17g} dt_ns={:.17g}\n", i,
                                       k.duration, s.dt_hint);
                }
            },
            s.kind);
    }
    out << fmt::format("total_duration_ns = {:.17g}\n", seq.total_duration());
    return out.str();
}

}  // namespace qdspin
