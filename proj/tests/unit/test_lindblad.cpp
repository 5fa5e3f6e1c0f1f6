#include "doctest.h"

#include <cmath>

#include "qdspin/errors.hpp"
#include "qdspin/experiments.hpp"
#include "qdspin/lindblad.hpp"

using namespace qdspin;

namespace {

LevelDiagram voigt(double field = 2.0) { return build_level_diagram(Geometry::Voigt, field, GFactors{}, 0.0); }

DriveTerm constant_drive(int transition, double rabi, double detuning = 0.0) {
    DriveTerm d;
    d.transition = transition;
    d.detuning = detuning;
    d.rabi_envelope = [rabi](double) { return rabi; };
    return d;
}

// Two-level resonant Rabi with radiative damping (Torrey solution, Omega > Gamma/4).
double damped_rabi_excited(double omega, double gamma, double t) {
    const double lambda = std::sqrt(omega * omega - gamma * gamma / 16.0);
    return omega * omega / (2.0 * omega * omega + gamma * gamma) *
           (1.0 - std::exp(-0.75 * gamma * t) *
                      (std::cos(lambda * t) + 0.75 * gamma / lambda * std::sin(lambda * t)));
}

RateSet closed_two_level(double gamma) {
    RateSet r;
    r.gamma_decay = gamma;
    r.branching = {{{1.0, 0.0}, {0.0, 1.0}}};
    return r;
}

}  // namespace

TEST_CASE("liouvillian basics") {
    const Matrix4c zero = Matrix4c::Zero();
    const DensityMatrix mixed = DensityMatrix::mixed_ground();
    CHECK(liouvillian_apply(zero, RateSet{}, mixed.m).norm() == 0.0);

    RateSet decay;
    decay.gamma_decay = 1.7;
    const Matrix4c d = liouvillian_apply(zero, decay, DensityMatrix::pure(kTrion0).m);
    CHECK(d(kTrion0, kTrion0).real() == doctest::Approx(-1.7).epsilon(1e-14));
    CHECK(std::abs(d.trace()) < 1e-14);

    RateSet all;
    all.gamma_decay = 1.2;
    all.kappa_spinflip = 0.3;
    all.gamma_repump = 0.4;
    all.gamma_spin_dephasing = 0.2;
    Matrix4c h = Matrix4c::Random();
    h = (h + h.adjoint()).eval();
    Eigen::Vector4cd ket = Eigen::Vector4cd::Random().normalized();
    const Matrix4c out = liouvillian_apply(h, all, DensityMatrix::from_ket(ket).m);
    CHECK(std::abs(out.trace()) < 1e-10);
    CHECK((out - out.adjoint()).cwiseAbs().maxCoeff() < 1e-12);

    Matrix4c bad = Matrix4c::Zero();
    bad(0, 1) = 1.0;
    CHECK_THROWS_AS(liouvillian_apply(bad, RateSet{}, mixed.m), DomainError);
}

TEST_CASE("superoperator matches apply") {
    RateSet r;
    r.gamma_decay = 1.0;
    r.kappa_spinflip = 0.1;
    r.gamma_repump = 0.05;
    r.gamma_spin_dephasing = 0.3;
    Matrix4c h = Matrix4c::Random();
    h = (h + h.adjoint()).eval();
    const Liouvillian l(r);
    const DensityMatrix rho = DensityMatrix::from_ket(Eigen::Vector4cd::Random().normalized());
    const VecRho a = l.superoperator(h) * rho.vec();
    const Matrix4c b = l.apply(h, rho.m);
    CHECK((DensityMatrix::from_vec(a).m - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("validate_state") {
    DensityMatrix id;
    id.m = Matrix4c::Identity() / 4.0;
    auto s = validate_state(id);
    CHECK(s.hermiticity_defect == 0.0);
    CHECK(s.trace_defect == doctest::Approx(0.0));
    CHECK(s.min_eigenvalue == doctest::Approx(0.25));
    s = validate_state(DensityMatrix::pure(kGround0));
    CHECK(s.min_eigenvalue == doctest::Approx(0.0));
    DensityMatrix heavy = DensityMatrix::pure(kGround0);
    heavy.m(0, 0) = 1.001;
    CHECK(validate_state(heavy).trace_defect == doctest::Approx(0.001));
}

TEST_CASE("exponential decay oracle") {
    RateSet r;
    r.gamma_decay = 1.0;
    const Trajectory t = evolve(DensityMatrix::pure(kTrion0), voigt(), {}, r, 0.0, 5.0, 1e-3);
    for (std::size_t i = 0; i < t.times.size(); i += 250)
        CHECK(std::abs(t.states[i].population(kTrion0) - std::exp(-t.times[i])) < 1e-6);
    // purity falls until the ground states are repopulated
    for (std::size_t i = 1; i < t.times.size() && t.times[i] < 0.5; ++i)
        CHECK(t.states[i].purity() <= t.states[i - 1].purity() + 1e-8);
}

TEST_CASE("undamped Rabi oracle") {
    const LevelDiagram d = voigt();
    const double omega = 2.0 * M_PI;
    const Trajectory t = evolve(DensityMatrix::pure(kGround0), d, {constant_drive(0, omega)}, RateSet{}, 0.0,
                                3.0, 1e-3);
    double worst = 0.0, purity = 0.0;
    for (std::size_t i = 0; i < t.times.size(); ++i) {
        const int partner = d.transitions[0].to_level;
        worst = std::max(worst, std::abs(t.states[i].population(partner) -
                                         std::pow(std::sin(0.5 * omega * t.times[i]), 2)));
        purity = std::max(purity, std::abs(t.states[i].purity() - 1.0));
    }
    CHECK(worst < 1e-8);
    CHECK(purity < 1e-9);
}

TEST_CASE("damped Rabi closed form") {
    const LevelDiagram d = voigt();
    const double omega = 2.0 * M_PI * 1.0, gamma = 1.3;
    const Trajectory t = evolve(DensityMatrix::pure(kGround0), d, {constant_drive(0, omega)},
                                closed_two_level(gamma), 0.0, 10.0, 5e-4);
    const int partner = d.transitions[0].to_level;
    double worst = 0.0;
    for (std::size_t i = 0; i < t.times.size(); ++i)
        worst = std::max(worst, std::abs(t.states[i].population(partner) -
                                         damped_rabi_excited(omega, gamma, t.times[i])));
    CHECK(worst < 1e-5);
    CHECK(t.max_trace_drift < 1e-9);
    CHECK(t.max_hermiticity_defect < 1e-10);
    CHECK(t.min_eigenvalue > -1e-8);
}

TEST_CASE("RK4 self-convergence on the pumping scenario") {
    const SystemParams sys;
    const LevelDiagram d = sys.diagram();
    const RateSet r = segment_rates(sys, d, RotationLaserSideEffects::none(), true);
    const auto drives = resonant_drive_terms(d, sys.resonant_rabi);
    const auto a = evolve(DensityMatrix::mixed_ground(), d, drives, r, 0.0, 5.0, 2e-3);
    const auto b = evolve(DensityMatrix::mixed_ground(), d, drives, r, 0.0, 5.0, 1e-3);
    CHECK((a.final_state().m - b.final_state().m).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(b.max_trace_drift < 1e-9);
    CHECK(b.max_hermiticity_defect < 1e-10);
    CHECK(b.min_eigenvalue > -1e-8);
}

TEST_CASE("step-size guard") {
    const LevelDiagram d = voigt();
    CHECK_THROWS_AS(evolve(DensityMatrix::pure(kGround0), d, {constant_drive(0, 500.0)}, RateSet{}, 0.0,
                           1.0, 1e-3),
                    StepSizeError);
    EvolveOptions o;
    o.allow_coarse_step = true;
    CHECK_NOTHROW(evolve(DensityMatrix::pure(kGround0), d, {constant_drive(0, 150.0)}, RateSet{}, 0.0, 0.01,
                         1e-3, o));
}

TEST_CASE("exact propagator agrees with RK4") {
    const SystemParams sys;
    const LevelDiagram d = sys.diagram();
    const RateSet r = segment_rates(sys, d, RotationLaserSideEffects::none(), true);
    const auto drives = resonant_drive_terms(d, sys.resonant_rabi);
    const double frame = default_frame_frequency(d, drives);
    const Superop l = Liouvillian(r).superoperator(hamiltonian_at(d, drives, 0.0, frame));
    const VecRho exact = exact_propagator(l, 3.0) * DensityMatrix::mixed_ground().vec();
    const auto rk = evolve(DensityMatrix::mixed_ground(), d, drives, r, 0.0, 3.0, 1e-3);
    CHECK((DensityMatrix::from_vec(exact).m - rk.final_state().m).cwiseAbs().maxCoeff() < 1e-9);
}
