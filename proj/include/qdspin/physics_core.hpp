#pragma once

#include <array>
#include <string>
#include <vector>

#include "qdspin/jones.hpp"

namespace qdspin {

enum class Geometry { Voigt, Faraday };

std::string to_string(Geometry g);
Geometry geometry_from_string(const std::string& s);

/// Electron and hole g-factors. The longitudinal values have no measured
/// anchor and default to placeholders.
struct GFactors {
    double electron_inplane = -0.5;
    double hole_inplane = 0.0;
    double electron_longitudinal = -0.5;  // placeholder
    double hole_longitudinal = 1.0;       // placeholder

    void validate() const;
};

enum class PolarizationLabel { H, V, SigmaPlus, SigmaMinus };
std::string to_string(PolarizationLabel p);

enum class TransitionKind { Vertical, Diagonal };

// Level indices. Ground 0 is the lower-energy spin state; trion 2 is the
// partner of ground 0 along the vertical transition, trion 3 of ground 1.
inline constexpr int kGround0 = 0;
inline constexpr int kGround1 = 1;
inline constexpr int kTrion0 = 2;
inline constexpr int kTrion1 = 3;
inline constexpr int kNumLevels = 4;

struct Transition {
    int from_level = 0;
    int to_level = 2;
    /// Transition frequency relative to the mean trion line (rad/ns).
    double frequency_offset = 0.0;
    /// Unit-norm dipole in the dot's transverse plane.
    JonesVector dipole;
    double relative_strength = 1.0;
    PolarizationLabel label = PolarizationLabel::H;
    TransitionKind kind = TransitionKind::Vertical;
};

/// Four-level structure (two electron spin ground states, two trions).
struct LevelDiagram {
    Geometry geometry = Geometry::Voigt;
    double field_tesla = 0.0;
    double ground_splitting = 0.0;   ///< rad/ns
    double excited_splitting = 0.0;  ///< rad/ns
    std::array<double, kNumLevels> energies{};  ///< rad/ns, trion energies relative to the mean line
    std::array<std::string, kNumLevels> labels{};
    std::vector<Transition> transitions;

    /// Trion reached from `ground` along the vertical transition.
    int vertical_partner(int ground) const { return ground == kGround0 ? kTrion0 : kTrion1; }
    /// Indices of the two transitions starting at `ground`.
    std::array<int, 2> transitions_from(int ground) const;
};

/// |g| * (mu_B/h) * B, in GHz.
double zeeman_splitting(double g, double field_tesla);

/// Build the level diagram for a field along x (Voigt) or z (Faraday).
/// Voigt ground states are |E+-> = (|up> +- |down>)/sqrt(2) with level 0 = |E+>.
/// Faraday weak diagonals carry amplitude `impurity` (strength impurity^2).
LevelDiagram build_level_diagram(Geometry geometry, double field_tesla, const GFactors& g,
                                 double impurity);

}  // namespace qdspin
