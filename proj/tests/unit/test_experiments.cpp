#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qdspin/errors.hpp"
#include "qdspin/experiments.hpp"

using namespace qdspin;

namespace {

SystemParams ideal_system() {
    SystemParams s;
    s.repump = false;
    s.kappa_spinflip = 0.0;
    return s;
}

RamseyConfig small_config(std::size_t ensemble, std::size_t points, double stop = 1.0) {
    RamseyConfig c;
    c.delays = linear_grid(0.0, stop, points);
    c.ensemble_size = ensemble;
    return c;
}

RamseyTrace trace_of(std::vector<double> y) {
    RamseyTrace t;
    t.signal = std::move(y);
    for (std::size_t i = 0; i < t.signal.size(); ++i) t.delays.push_back(0.01 * i);
    t.signal_stderr.assign(t.signal.size(), 0.0);
    return t;
}

}  // namespace

TEST_CASE("frozen defaults") {
    CHECK(kDefaultTrionExcitation == doctest::Approx(0.026533333333).epsilon(1e-9));
    CHECK(trion_excitation_for_fidelity(0.99) == doctest::Approx(kDefaultTrionExcitation).epsilon(1e-14));
    CHECK(std::abs(kDefaultElectronG) * 2.0 * kBohrMagnetonGHzPerTesla == doctest::Approx(12.70).epsilon(1e-12));
    CHECK(rotation_angle(default_rotation_pulse()) == doctest::Approx(M_PI / 2.0).epsilon(1e-12));
}

TEST_CASE("Overhauser sampling") {
    const OverhauserModel m = OverhauserModel::from_t2star(2.2, 3);
    CHECK(m.sigma_delta == doctest::Approx(0.6428243465).epsilon(1e-9));
    for (double d : sample_overhauser({0.0, 9}, 10)) CHECK(d == 0.0);
    const std::size_t n = 10000;
    const auto v = sample_overhauser(m, n);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / (n - 1));
    CHECK(std::abs(mean) < 5.0 * m.sigma_delta / std::sqrt(double(n)));
    CHECK(std::abs(sd - m.sigma_delta) < 5.0 * m.sigma_delta / std::sqrt(double(n)));
    // draw i depends only on (seed, i)
    const auto head = sample_overhauser(m, 17);
    CHECK(std::equal(head.begin(), head.end(), v.begin()));
    CHECK(sample_overhauser(m, 5) != sample_overhauser({m.sigma_delta, 4}, 5));
    CHECK_THROWS_AS(sample_overhauser(m, 0), DomainError);
    CHECK_THROWS_AS(OverhauserModel::from_t2star(0.0, 1), DomainError);
}

TEST_CASE("Gaussian envelope emerges from the ensemble") {
    const OverhauserModel m = OverhauserModel::from_t2star(2.2, 42);
    const auto taus = linear_grid(0.0, 4.0, 10);
    const auto pts = ensemble_coherence(SystemParams{}, m, 10000, taus);
    for (const auto& p : pts) {
        const double oracle = std::exp(-std::pow(p.tau / 2.2, 2));
        CHECK(std::abs(p.coherence - oracle) <= 3.0 * p.stderr_ + 1e-12);
    }
}

TEST_CASE("pumping limits and anchors") {
    const ReadoutModel readout;
    // no flips, no repump: complete pumping
    CHECK(simulate_pumping(ideal_system(), RotationLaserSideEffects::none(), 60.0, readout).init_fidelity >=
          1.0 - 1e-4);
    CHECK(pumping_fidelity(ideal_system(), RotationLaserSideEffects::none()) == doctest::Approx(1.0).epsilon(1e-9));

    const SystemParams sys;
    CHECK(pumping_fidelity(sys, RotationLaserSideEffects::none()) == doctest::Approx(0.90).epsilon(1e-6));
    CHECK(pumping_fidelity(sys, RotationLaserSideEffects{}) == doctest::Approx(0.54).epsilon(1e-6));
    const PumpingResult r = simulate_pumping(sys, RotationLaserSideEffects::none(), 50.0, readout);
    CHECK(std::abs(r.init_fidelity - 0.90) <= 0.02);
    CHECK(r.trajectory.max_trace_drift < 1e-9);
    CHECK(r.trajectory.min_eigenvalue > -1e-8);
    CHECK(r.collected_counts > 0.0);
    CHECK(r.rabi_resolved);
    const PumpingResult w = simulate_pumping(sys, RotationLaserSideEffects{}, 50.0, readout);
    CHECK(std::abs(w.init_fidelity - 0.54) <= 0.03);
    CHECK(w.collected_counts > r.collected_counts);
}

TEST_CASE("calibrations reproduce the frozen constants") {
    SystemParams sys;
    const double rabi = calibrate_pump_rabi(sys, 0.90);
    CHECK(rabi == doctest::Approx(kDefaultPumpRabi).epsilon(1e-6));
    sys.resonant_rabi = rabi;
    const double b = calibrate_repump_broadening(sys, RotationLaserSideEffects{}, 0.54);
    CHECK(b == doctest::Approx(kDefaultRepumpBroadening).epsilon(1e-6));
    CHECK_THROWS_AS(calibrate_pump_rabi(sys, 0.999), DomainError);
}

TEST_CASE("rotation fidelity") {
    const SystemParams sys;
    const LevelDiagram d = sys.diagram();
    const RotationPulse p = default_rotation_pulse();
    CHECK(rotation_fidelity(p, d, RotationLaserSideEffects::none()) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(rotation_fidelity(p, d, RotationLaserSideEffects{}) - 0.99) <= 0.005);
    // a single-Kraus map reduces to |Tr(U^dagger K)| / 2
    const Eigen::Matrix2cd u = rotation_unitary(0.9, {1, 0, 0});
    const Eigen::Matrix2cd k = rotation_unitary(1.0, {1, 0, 0});
    Eigen::Matrix4cd m;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c)
                for (int e = 0; e < 2; ++e) m(a + 2 * b, c + 2 * e) = k(a, c) * std::conj(k(b, e));
    CHECK(map_fidelity(u, m) == doctest::Approx(std::abs((u.adjoint() * k).trace()) / 2.0).epsilon(1e-12));
    CHECK(map_rotation_angle(m) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("full-integration fidelity falls as Omega0/|Delta| grows") {
    const SystemParams sys;
    const LevelDiagram d = sys.diagram();
    const RateSet rates = segment_rates(sys, d, RotationLaserSideEffects::none(), false);
    double previous = 1.0;
    // |Delta| down a 5-point ladder at fixed angle and width
    for (double scale : {4.0, 2.0, 1.0, 0.5, 0.25}) {
        RotationPulse p = default_rotation_pulse();
        p.detuning *= scale;
        p.peak_rabi = peak_rabi_for_angle(M_PI / 2.0, p);
        const double f = rotation_fidelity(p, d, RotationLaserSideEffects::none(), rates,
                                           SimulationMode::FullIntegration);
        CHECK(f < previous);
        previous = f;
    }
}

TEST_CASE("contrast arithmetic") {
    std::vector<double> y;
    const double w = 2.0 * M_PI / 0.2;
    for (int i = 0; i < 60; ++i) y.push_back(0.5 + 0.02 * std::cos(w * 0.01 * i));
    CHECK(ramsey_contrast(trace_of(y), w) == doctest::Approx(0.04).epsilon(1e-9));
    for (double& v : y) v = 0.5 + 0.5 * ((v - 0.5) / 0.02);
    CHECK(ramsey_contrast(trace_of(y), w) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(ramsey_contrast(trace_of(std::vector<double>(30, 0.7))) == 0.0);
    CHECK_THROWS_AS(ramsey_contrast(trace_of(std::vector<double>(y.begin(), y.begin() + 10)), w), DomainError);
}

TEST_CASE("ideal Ramsey: Gaussian-averaged fringe") {
    RamseyConfig c = small_config(2000, 400, 3.0);
    c.system = ideal_system();
    const RamseyTrace t = run_ramsey(c);
    CHECK(t.init_fidelity == doctest::Approx(1.0).epsilon(1e-9));
    const double w = c.system.diagram().ground_splitting;
    Eigen::MatrixXd a(400, 2);
    Eigen::VectorXd y(400);
    for (int i = 0; i < 400; ++i) {
        a(i, 0) = 1.0;
        a(i, 1) = std::cos(w * t.delays[i]) * std::exp(-std::pow(t.delays[i] / 2.2, 2));
        y(i) = t.signal[i];
    }
    const Eigen::Vector2d coef = a.colPivHouseholderQr().solve(y);
    for (int i = 0; i < 400; ++i)
        CHECK(std::abs(y(i) - a.row(i).dot(coef)) <= 3.0 * t.signal_stderr[i] + 0.02 * std::abs(coef(1)));
    // tau = 0: two pi/2 pulses invert the pumped spin, the fringe maximum
    CHECK(t.signal[0] == doctest::Approx(*std::max_element(t.signal.begin(), t.signal.end())));
}

TEST_CASE("paper-default imperfections: contrast in band") {
    RamseyConfig c = small_config(2000, 400, 3.0);
    c.side_effects = RotationLaserSideEffects{};
    const RamseyTrace t = run_ramsey(c);
    CHECK(std::abs(t.init_fidelity - 0.54) <= 0.03);
    const double contrast = ramsey_contrast(t);
    CHECK(contrast >= 0.02);
    CHECK(contrast <= 0.08);
}

TEST_CASE("contrast is non-increasing in kappa and in 1 - F_init") {
    const double w = SystemParams{}.diagram().ground_splitting;
    double previous = 1.0;
    for (double kappa : {0.0, 0.05, 0.2}) {
        RamseyConfig c = small_config(300, 120, 0.3);
        c.side_effects = RotationLaserSideEffects{};
        c.side_effects->added_spinflip_rate = kappa;
        const double contrast = ramsey_contrast(run_ramsey(c), w);
        CHECK(contrast <= previous + 1e-12);
        previous = contrast;
    }
    previous = 1.0;
    for (double broadening : {1.0, 4.0, 8.0}) {  // F_init falls along this ladder
        RamseyConfig c = small_config(300, 120, 0.3);
        c.side_effects = RotationLaserSideEffects{};
        c.side_effects->repump_broadening_factor = broadening;
        const RamseyTrace t = run_ramsey(c);
        const double contrast = ramsey_contrast(t, w);
        CHECK(contrast <= previous + 1e-12);
        previous = contrast;
    }
}

TEST_CASE("signals are positive and thread-count independent") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        RamseyConfig c = small_config(64, 50, 2.0);
        c.overhauser.seed = seed;
        c.side_effects = RotationLaserSideEffects{};
        c.side_effects->trion_excitation_prob = 0.3 * seed;
        c.system.kappa_spinflip = 0.01 * seed;
        c.readout.window = std::pair{0.5 * seed, 4.0};
        c.threads = 1;
        const RamseyTrace a = run_ramsey(c);
        c.threads = 5;
        const RamseyTrace b = run_ramsey(c);
        CHECK(a.signal == b.signal);
        CHECK(a.signal_stderr == b.signal_stderr);
        for (double s : a.signal) CHECK(s >= 0.0);
    }
}

TEST_CASE("run guard") {
    RamseyConfig c = small_config(200000, 400, 3.0);
    CHECK_THROWS_AS(run_ramsey(c), DomainError);
    c.ensemble_size = 0;
    CHECK_THROWS_AS(run_ramsey(c), DomainError);
}

TEST_CASE("noise helper") {
    RamseyTrace t = trace_of({0.0, 1.0, 2.0, 1.0, 0.0});
    const RamseyTrace a = with_noise(t, 0.1, 9), b = with_noise(t, 0.1, 9);
    CHECK(a.signal == b.signal);
    CHECK(a.signal != t.signal);
    CHECK(a.signal_stderr[0] == doctest::Approx(0.1));
    CHECK(with_noise(t, 0.0, 9).signal == t.signal);
}

TEST_CASE("Larmor series") {
    const std::vector<std::pair<double, double>> fields = {{0.5, 3.37}, {1.0, 6.41}, {2.0, 12.70}};
    std::vector<std::pair<double, RamseyTrace>> traces;
    for (auto [b, nu] : fields) {
        RamseyConfig c = small_config(400, 400, 3.0);
        c.system = ideal_system();
        c.system.field_tesla = b;
        c.system.g.electron_inplane = -nu / (kBohrMagnetonGHzPerTesla * b);
        traces.emplace_back(b, run_ramsey(c));
    }
    const auto rows = extract_larmor_series(traces);
    REQUIRE(rows.size() == 3);
    const double expected_g[] = {0.48, 0.46, 0.45};
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(rows[i].fit_ok);
        CHECK(std::abs(rows[i].larmor_ghz - fields[i].second) <= 0.02);
        CHECK(std::round(rows[i].g_factor * 100.0) / 100.0 == doctest::Approx(expected_g[i]));
    }
    CHECK(extract_larmor_series({traces.back()}).size() == 1);
    RamseyTrace flat = trace_of(std::vector<double>(3, 1.0));
    const auto bad = extract_larmor_series({{2.0, flat}});
    REQUIRE(bad.size() == 1);
    CHECK_FALSE(bad[0].fit_ok);
    CHECK_FALSE(bad[0].message.empty());
}

TEST_CASE("effective and full modes agree for weak, short pulses") {
    // Omega0/|Delta| = 0.05 and omega_L t_p = 0.08 at 2 T
    RamseyConfig c = small_config(2000, 80, 2.0);
    c.delays = linear_grid(0.05, 2.0, 80);
    c.rotation.width = 0.001;
    c.rotation.peak_rabi = peak_rabi_for_angle(M_PI / 2.0, c.rotation);
    // angle ~ Omega0^2 / Delta, so Omega0/|Delta| scales as |Delta|^(-1/2)
    const double ratio = 0.05;
    const double start = c.rotation.peak_rabi / std::abs(c.rotation.detuning);
    c.rotation.detuning *= (start / ratio) * (start / ratio);
    c.rotation.peak_rabi = peak_rabi_for_angle(M_PI / 2.0, c.rotation);
    REQUIRE(c.rotation.peak_rabi / std::abs(c.rotation.detuning) == doctest::Approx(ratio).epsilon(1e-6));
    const RamseyTrace e = run_ramsey(c);
    c.mode = SimulationMode::FullIntegration;
    const RamseyTrace f = run_ramsey(c);
    const auto [lo, hi] = std::minmax_element(e.signal.begin(), e.signal.end());
    const double amplitude = 0.5 * (*hi - *lo);
    for (std::size_t i = 0; i < e.signal.size(); ++i)
        CHECK(std::abs(e.signal[i] - f.signal[i]) <= 0.03 * amplitude);
}
