#pragma once

#include <string>
#include <vector>

#include "qdspin/jones.hpp"

namespace qdspin {

enum class WaveplateKind { Half, Quarter };

/// R(theta) diag(1, e^{i delta}) R(-theta), delta = pi (half) or pi/2 (quarter).
JonesMatrix waveplate(WaveplateKind kind, double fast_axis_angle);

/// Order in which the far-field beam meets the two plates.
enum class PlateOrder { HalfThenQuarter, QuarterThenHalf };

struct WaveplateSetting {
    double hwp_angle = 0.0;  ///< radians, reduced to [0, pi)
    double qwp_angle = 0.0;

    static WaveplateSetting reduced(double hwp, double qwp);
};

/// T . QWP(q) . HWP(h) . e0 (or with the plates swapped).
JonesVector far_field_to_local(const JonesVector& e0, const WaveplateSetting& setting,
                               const JonesMatrix& transfer,
                               PlateOrder order = PlateOrder::HalfThenQuarter);

struct ExcitationRates {
    double r_plus = 0.0;
    double r_minus = 0.0;
};

/// Excitation of the two circular resonances by the local field E. Each
/// resonance is the strong circular dipole plus a weak opposite-helicity
/// channel of relative strength eps^2, summed incoherently and normalized:
/// R+- = (|<s+-, E>|^2 + eps^2 |<s-+, E>|^2) / (1 + eps^2).
ExcitationRates excitation_rates(const JonesVector& field, double impurity);

inline constexpr double kRatioFloor = 1e-15;

struct ContrastEntry {
    WaveplateSetting setting;
    double r_plus = 0.0;
    double r_minus = 0.0;
    double ratio = 0.0;  ///< r_plus / max(r_minus, floor * r_plus)
    bool floored = false;
};

/// Row-major over hwp, then qwp.
struct ContrastMap {
    std::vector<ContrastEntry> entries;
    std::size_t hwp_steps = 0;
    std::size_t qwp_steps = 0;
    double grid_step = 0.0;
};

/// Ratio with the underflow floor; returns {ratio, floored}.
std::pair<double, bool> floored_ratio(double numerator, double denominator);

/// Evaluate every (hwp, qwp) on a grid of step `grid_step` over [0, pi)^2.
/// grid_step must divide pi. `threads` = 0 uses the hardware concurrency.
ContrastMap contrast_scan(const JonesVector& e0, const JonesMatrix& transfer, double impurity,
                          double grid_step, PlateOrder order = PlateOrder::HalfThenQuarter,
                          unsigned threads = 1, double hwp_offset = 0.0);

enum class ContrastTarget { MaximizeRplus, MaximizeRminus };

struct OptimalSetting {
    WaveplateSetting setting;
    double ratio = 0.0;
    std::size_t index = 0;
};

/// argmax of R+/R- (or R-/R+); ties go to the earliest grid point.
OptimalSetting optimal_setting(const ContrastMap& map, ContrastTarget target);

/// Stand-in for the far-field to dot transfer matrix: diattenuation 2:1 with
/// 30 degree retardance about axes rotated by 20 degrees (condition number 2).
JonesMatrix default_transfer_matrix();

void write_contrast_csv(const ContrastMap& map, const std::string& path);
/// Heat map of log10(ratio) over the waveplate grid.
void write_contrast_svg(const ContrastMap& map, const std::string& path);

}  // namespace qdspin
