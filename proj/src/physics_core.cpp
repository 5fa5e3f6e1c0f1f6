#include "qdspin/physics_core.hpp"

#include <cmath>
#include <stdexcept>

#include "qdspin/errors.hpp"

namespace qdspin {

std::string to_string(Geometry g) { return g == Geometry::Voigt ? "voigt" : "faraday"; }

Geometry geometry_from_string(const std::string& s) {
    if (s == "voigt") return Geometry::Voigt;
    if (s == "faraday") return Geometry::Faraday;
    throw DomainError("unknown geometry '" + s + "' (expected voigt or faraday)");
}

std::string to_string(PolarizationLabel p) {
    switch (p) {
        case PolarizationLabel::H: return "H";
        case PolarizationLabel::V: return "V";
        case PolarizationLabel::SigmaPlus: return "sigma+";
        case PolarizationLabel::SigmaMinus: return "sigma-";
    }
    return "?";
}

void GFactors::validate() const {
    for (double g : {electron_inplane, hole_inplane, electron_longitudinal, hole_longitudinal}) {
        if (!std::isfinite(g) || std::abs(g) > 10.0)
            throw DomainError("g-factor must be finite with magnitude <= 10");
    }
}

std::array<int, 2> LevelDiagram::transitions_from(int ground) const {
    std::array<int, 2> out{-1, -1};
    int n = 0;
    for (int i = 0; i < static_cast<int>(transitions.size()) && n < 2; ++i)
        if (transitions[i].from_level == ground) out[n++] = i;
    return out;
}

double zeeman_splitting(double g, double field_tesla) {
    if (!(field_tesla >= 0.0)) throw DomainError("magnetic field must be >= 0");
    return std::abs(g) * kBohrMagnetonGHzPerTesla * field_tesla;
}

namespace {

Transition make_transition(const LevelDiagram& d, int from, int to, JonesVector dipole,
                           double strength, PolarizationLabel label, TransitionKind kind) {
    Transition t;
    t.from_level = from;
    t.to_level = to;
    t.frequency_offset = d.energies[to] - d.energies[from];
    t.dipole = dipole;
    t.relative_strength = strength;
    t.label = label;
    t.kind = kind;
    return t;
}

}  // namespace

LevelDiagram build_level_diagram(Geometry geometry, double field_tesla, const GFactors& g,
                                 double impurity) {
    if (!(field_tesla >= 0.0)) throw DomainError("magnetic field must be >= 0");
    if (!(impurity >= 0.0 && impurity < 0.5))
        throw DomainError("dipole impurity must lie in [0, 0.5)");
    g.validate();

    LevelDiagram d;
    d.geometry = geometry;
    d.field_tesla = field_tesla;
    const bool voigt = geometry == Geometry::Voigt;
    const double ge = voigt ? g.electron_inplane : g.electron_longitudinal;
    const double gh = voigt ? g.hole_inplane : g.hole_longitudinal;
    d.ground_splitting = ghz_to_angular(zeeman_splitting(ge, field_tesla));
    d.excited_splitting = ghz_to_angular(zeeman_splitting(gh, field_tesla));
    d.energies = {-0.5 * d.ground_splitting, 0.5 * d.ground_splitting,
                  -0.5 * d.excited_splitting, 0.5 * d.excited_splitting};

    using PL = PolarizationLabel;
    using TK = TransitionKind;
    if (voigt) {
        d.labels = {"E+", "E-", "T+", "T-"};
        // Circular dipoles of the z basis projected on the hybridized states:
        // verticals are x-polarized, diagonals y-polarized (with phase i).
        const JonesVector h = JonesVector::horizontal();
        const JonesVector v{0.0, cplx{0.0, 1.0}};
        d.transitions = {
            make_transition(d, kGround0, kTrion0, h, 1.0, PL::H, TK::Vertical),
            make_transition(d, kGround0, kTrion1, v, 1.0, PL::V, TK::Diagonal),
            make_transition(d, kGround1, kTrion0, v, 1.0, PL::V, TK::Diagonal),
            make_transition(d, kGround1, kTrion1, h, 1.0, PL::H, TK::Vertical),
        };
    } else {
        d.labels = {"up", "down", "T_up", "T_down"};
        const JonesVector sp = JonesVector::sigma_plus();
        const JonesVector sm = JonesVector::sigma_minus();
        const double weak = impurity * impurity;
        // A weak diagonal carries the helicity of the trion it ends on.
        d.transitions = {
            make_transition(d, kGround0, kTrion0, sp, 1.0, PL::SigmaPlus, TK::Vertical),
            make_transition(d, kGround0, kTrion1, sm, weak, PL::SigmaMinus, TK::Diagonal),
            make_transition(d, kGround1, kTrion0, sp, weak, PL::SigmaPlus, TK::Diagonal),
            make_transition(d, kGround1, kTrion1, sm, 1.0, PL::SigmaMinus, TK::Vertical),
        };
    }
    return d;
}

}  // namespace qdspin
