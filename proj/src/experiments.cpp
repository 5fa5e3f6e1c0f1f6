#include "qdspin/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "qdspin/errors.hpp"
#include "qdspin/parallel.hpp"

namespace qdspin {

using RowVec16 = Eigen::Matrix<cplx, 1, 16>;

namespace {

constexpr int vec_index(int i, int j) { return i + 4 * j; }

// Superoperator of rho -> f(rho), built column by column.
template <typename F>
Superop superop_from(F&& f) {
    Superop s;
    for (int b = 0; b < 4; ++b)
        for (int a = 0; a < 4; ++a) {
            Matrix4c basis = Matrix4c::Zero();
            basis(a, b) = 1.0;
            const Matrix4c out = f(basis);
            s.col(vec_index(a, b)) = Eigen::Map<const VecRho>(out.data());
        }
    return s;
}

Superop unitary_superop(const Matrix4c& u) {
    return superop_from([&](const Matrix4c& x) -> Matrix4c { return u * x * u.adjoint(); });
}

// -i[H, .] for the quasi-static shift H = (delta/2)(|g1><g1| - |g0><g0|).
Superop shift_generator(double delta) {
    Superop s = Superop::Zero();
    const double e[4] = {-0.5 * delta, 0.5 * delta, 0.0, 0.0};
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) s(vec_index(i, j), vec_index(i, j)) = cplx{0.0, -(e[i] - e[j])};
    return s;
}

Superop diagonal_expm(const Superop& diag_gen, double t) {
    Superop s = Superop::Zero();
    for (int k = 0; k < 16; ++k) s(k, k) = std::exp(diag_gen(k, k) * t);
    return s;
}

// Trions fully relaxed into the ground states along the branching ratios.
Superop trion_relaxation(const RateSet& rates) {
    return superop_from([&](const Matrix4c& x) -> Matrix4c {
        Matrix4c out = Matrix4c::Zero();
        out.topLeftCorner<2, 2>() = x.topLeftCorner<2, 2>();
        for (int i = 0; i < 2; ++i) {
            const cplx p = x(kTrion0 + i, kTrion0 + i);
            out(kGround0, kGround0) += rates.branching[i][0] * p;
            out(kGround1, kGround1) += rates.branching[i][1] * p;
        }
        return out;
    });
}

// Incoherent transfer of probability p from each ground state to its vertical trion.
Superop trion_kick(const LevelDiagram& diagram, double p) {
    if (p == 0.0) return Superop::Identity();
    Matrix4c k0 = Matrix4c::Zero();
    k0(kGround0, kGround0) = k0(kGround1, kGround1) = std::sqrt(1.0 - p);
    k0(kTrion0, kTrion0) = k0(kTrion1, kTrion1) = 1.0;
    std::array<Matrix4c, 2> k{Matrix4c::Zero(), Matrix4c::Zero()};
    for (int g = 0; g < 2; ++g) k[g](diagram.vertical_partner(g), g) = std::sqrt(p);
    return superop_from([&](const Matrix4c& x) -> Matrix4c {
        Matrix4c out = k0 * x * k0.adjoint();
        for (const auto& kk : k) out += kk * x * kk.adjoint();
        return out;
    });
}

Eigen::Matrix4cd ground_block(const Superop& s) {
    Eigen::Matrix4cd m;
    for (int b = 0; b < 4; ++b)
        for (int a = 0; a < 4; ++a)
            m(a, b) = s(vec_index(a % 2, a / 2), vec_index(b % 2, b / 2));
    return m;
}

Eigen::Matrix4cd ground_unitary_superop(const Eigen::Matrix2cd& u) {
    Eigen::Matrix4cd s;
    for (int b = 0; b < 4; ++b) {
        Eigen::Matrix2cd basis = Eigen::Matrix2cd::Zero();
        basis(b % 2, b / 2) = 1.0;
        const Eigen::Matrix2cd out = u * basis * u.adjoint();
        s.col(b) = Eigen::Map<const Eigen::Vector4cd>(out.data());
    }
    return s;
}

Matrix4c embed_ground(const Eigen::Matrix2cd& u) {
    Matrix4c m = Matrix4c::Identity();
    m.topLeftCorner<2, 2>() = u;
    return m;
}

// Left functional eta Gamma r^T int_a^b exp(L s) ds on vec(rho).
RowVec16 emission_functional(const Superop& l, double gamma, double efficiency, double a,
                             double b) {
    Eigen::Matrix<cplx, 32, 32> block = Eigen::Matrix<cplx, 32, 32>::Zero();
    block.topLeftCorner<16, 16>() = l * (b - a);
    block.topRightCorner<16, 16>() = Superop::Identity() * (b - a);
    const Eigen::Matrix<cplx, 32, 32> e = block.exp();
    const Superop integral = e.topRightCorner<16, 16>();
    RowVec16 r = RowVec16::Zero();
    r(vec_index(kTrion0, kTrion0)) = r(vec_index(kTrion1, kTrion1)) = efficiency * gamma;
    RowVec16 w = r * integral;
    if (a > 0.0) w = w * exact_propagator(l, a);
    return w;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double population1(const VecRho& v) { return v(vec_index(kGround1, kGround1)).real(); }

}  // namespace

// --- defaults -------------------------------------------------------------------

RotationPulse default_rotation_pulse() {
    RotationPulse p;
    p.width = ps_to_ns(6.0);
    p.detuning = -thz_to_angular(0.8);
    p.drive_dipole = JonesVector::sigma_plus();
    p.peak_rabi = peak_rabi_for_angle(kPi / 2.0, p);
    return p;
}

double default_rotation_rabi() { return default_rotation_pulse().peak_rabi; }

// --- system -------------------------------------------------------------------

LevelDiagram SystemParams::diagram() const {
    return build_level_diagram(geometry, field_tesla, g, impurity);
}

void SystemParams::validate() const {
    g.validate();
    if (!(field_tesla >= 0.0)) throw DomainError("field_tesla must be >= 0");
    if (!(impurity >= 0.0 && impurity < 0.5)) throw DomainError("impurity must lie in [0, 0.5)");
    for (double r : {gamma_decay, kappa_spinflip, gamma_spin_dephasing, resonant_rabi})
        if (!(r >= 0.0) || !std::isfinite(r)) throw DomainError("rates and Rabi frequencies must be >= 0");
    if (!(gamma_line > 0.0)) throw DomainError("gamma_line must be > 0");
    RateSet probe;
    probe.branching = branching;
    probe.validate();
}

void RotationLaserSideEffects::validate() const {
    if (!(trion_excitation_prob >= 0.0 && trion_excitation_prob <= 1.0))
        throw DomainError("trion_excitation_prob must lie in [0, 1]");
    if (!(added_spinflip_rate >= 0.0)) throw DomainError("added_spinflip_rate must be >= 0");
    if (!(repump_broadening_factor >= 1.0))
        throw DomainError("repump_broadening_factor must be >= 1");
}

double repump_rate(double rabi, double detuning, double linewidth) {
    if (!(linewidth > 0.0)) throw DomainError("linewidth must be > 0");
    const double hw = 0.5 * linewidth;
    return 0.5 * rabi * rabi * hw / (hw * hw + detuning * detuning);
}

std::array<int, 2> readout_transitions(const LevelDiagram& diagram) {
    return diagram.transitions_from(kGround0);
}

double readout_frame(const LevelDiagram& diagram) {
    return diagram.transitions.at(readout_transitions(diagram)[0]).frequency_offset;
}

double pumping_repump_rate(const SystemParams& sys, const LevelDiagram& diagram,
                           const RotationLaserSideEffects& side) {
    if (!sys.repump) return 0.0;
    const double laser = readout_frame(diagram);
    const double width = sys.gamma_line * side.repump_broadening_factor;
    double sum = 0.0;
    for (int k : diagram.transitions_from(kGround1)) {
        const Transition& t = diagram.transitions.at(k);
        sum += t.relative_strength * repump_rate(sys.resonant_rabi, laser - t.frequency_offset, width);
    }
    return 0.5 * sum;
}

RateSet segment_rates(const SystemParams& sys, const LevelDiagram& diagram,
                      const RotationLaserSideEffects& side, bool laser_on) {
    RateSet r;
    r.gamma_decay = sys.gamma_decay;
    r.branching = sys.branching;
    r.kappa_spinflip = sys.kappa_spinflip + side.added_spinflip_rate;
    r.gamma_spin_dephasing = sys.gamma_spin_dephasing;
    r.repump_from = kGround1;
    r.gamma_repump = laser_on ? pumping_repump_rate(sys, diagram, side) : 0.0;
    return r;
}

std::vector<DriveTerm> resonant_drive_terms(const LevelDiagram& diagram, double rabi) {
    std::vector<DriveTerm> out;
    const double laser = readout_frame(diagram);
    for (int k : readout_transitions(diagram)) {
        DriveTerm d;
        d.transition = k;
        d.detuning = laser - diagram.transitions.at(k).frequency_offset;
        d.rabi_envelope = [rabi](double) { return rabi; };
        out.push_back(std::move(d));
    }
    return out;
}

// --- pumping ------------------------------------------------------------------

void ReadoutModel::validate(double readout_duration) const {
    if (!(collection_efficiency >= 0.0 && collection_efficiency <= 1.0))
        throw DomainError("collection_efficiency must lie in [0, 1]");
    if (!(background >= 0.0)) throw DomainError("background must be >= 0");
    if (window) {
        const auto [a, b] = *window;
        if (!(a >= 0.0 && b > a && b <= readout_duration * (1.0 + 1e-12)))
            throw DomainError(fmt::format(
                "readout window ({}, {}) must lie inside the readout pulse [0, {}]", a, b,
                readout_duration));
    }
}

std::pair<double, double> ReadoutModel::resolved_window(double readout_duration) const {
    return window.value_or(std::pair<double, double>{0.0, readout_duration});
}

PumpingResult run_optical_pumping(const LevelDiagram& diagram, const RateSet& rates,
                                  const ResonantDrive& drive, const ReadoutModel& readout,
                                  double duration, double dt, const DensityMatrix& rho0) {
    if (drive.targets.empty()) throw DomainError("pumping drive has no target transitions");
    std::array<bool, 2> driven{false, false};
    for (int k : drive.targets) {
        const Transition& t = diagram.transitions.at(k);
        driven[t.from_level] = true;
    }
    if (driven[0] == driven[1])
        throw DomainError("pumping drive must address transitions from exactly one ground state");
    const int dark = driven[0] ? kGround1 : kGround0;
    readout.validate(duration);

    std::vector<DriveTerm> drives;
    const double laser = diagram.transitions.at(drive.targets.front()).frequency_offset;
    for (int k : drive.targets) {
        DriveTerm d;
        d.transition = k;
        d.detuning = laser - diagram.transitions.at(k).frequency_offset;
        const double rabi = drive.rabi;
        d.rabi_envelope = [rabi](double) { return rabi; };
        drives.push_back(std::move(d));
    }
    PumpingResult res;
    res.rabi = drive.rabi;
    res.trajectory = evolve(rho0, diagram, drives, rates, 0.0, duration, dt);
    const Trajectory& tr = res.trajectory;
    res.init_fidelity = tr.final_state().population(dark);

    const auto [a, b] = readout.resolved_window(duration);
    double counts = 0.0;
    for (std::size_t n = 1; n < tr.times.size(); ++n) {
        const double lo = std::max(a, tr.times[n - 1]);
        const double hi = std::min(b, tr.times[n]);
        if (hi <= lo) continue;
        const double span = tr.times[n] - tr.times[n - 1];
        const double fa = (lo - tr.times[n - 1]) / span, fb = (hi - tr.times[n - 1]) / span;
        const double ya = tr.emission_rate[n - 1] + fa * (tr.emission_rate[n] - tr.emission_rate[n - 1]);
        const double yb = tr.emission_rate[n - 1] + fb * (tr.emission_rate[n] - tr.emission_rate[n - 1]);
        counts += 0.5 * (ya + yb) * (hi - lo);
    }
    res.collected_counts = readout.collection_efficiency * counts;

    // 1/e time of the population outside the dark state; a bare ground-0
    // population would also count the coherent transfer into the trion.
    auto outside = [&](const DensityMatrix& r) { return 1.0 - r.population(dark); };
    const double p_start = outside(tr.states.front());
    const double p_end = outside(tr.final_state());
    const double target = p_end + (p_start - p_end) / std::exp(1.0);
    for (std::size_t n = 1; n < tr.times.size(); ++n) {
        if (outside(tr.states[n]) <= target && tr.times[n] > 0.0) {
            res.pumping_rate = 1.0 / tr.times[n];
            break;
        }
    }
    // Oscillations survive when the drive outpaces both damping channels.
    res.rabi_resolved = drive.rabi > std::max(res.pumping_rate, rates.gamma_decay);
    return res;
}

PumpingResult simulate_pumping(const SystemParams& sys, const RotationLaserSideEffects& side,
                               double duration, const ReadoutModel& readout, double dt) {
    sys.validate();
    side.validate();
    const LevelDiagram diagram = sys.diagram();
    const RateSet rates = segment_rates(sys, diagram, side, true);
    ResonantDrive drive;
    drive.duration = duration;
    drive.rabi = sys.resonant_rabi;
    const auto targets = readout_transitions(diagram);
    drive.targets = {targets[0], targets[1]};
    return run_optical_pumping(diagram, rates, drive, readout, duration, dt);
}

Superop pumping_generator(const SystemParams& sys, const LevelDiagram& diagram,
                          const RotationLaserSideEffects& side, double overhauser_shift) {
    const RateSet rates = segment_rates(sys, diagram, side, true);
    const Matrix4c h = hamiltonian_at(diagram, resonant_drive_terms(diagram, sys.resonant_rabi), 0.0,
                                      readout_frame(diagram), overhauser_shift);
    return Liouvillian(rates).superoperator(h);
}

VecRho steady_state(const Superop& generator) {
    Superop a = generator;
    Eigen::Matrix<cplx, 16, 1> rhs = Eigen::Matrix<cplx, 16, 1>::Zero();
    // Replace the first equation by the trace condition.
    a.row(0).setZero();
    for (int i = 0; i < 4; ++i) a(0, vec_index(i, i)) = 1.0;
    rhs(0) = 1.0;
    return a.fullPivLu().solve(rhs);
}

double pumping_fidelity(const SystemParams& sys, const RotationLaserSideEffects& side,
                        double duration) {
    const LevelDiagram diagram = sys.diagram();
    const Superop l = pumping_generator(sys, diagram, side);
    if (std::isinf(duration)) return population1(steady_state(l));
    const VecRho v = exact_propagator(l, duration) * DensityMatrix::mixed_ground().vec();
    return population1(v);
}

namespace {

// Root of a decreasing function f(x) = target on [lo, hi] by bisection.
template <typename F>
double bisect_decreasing(F&& f, double lo, double hi, double target) {
    for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double calibrate_pump_rabi(SystemParams sys, double target) {
    const auto none = RotationLaserSideEffects::none();
    auto f = [&](double rabi) {
        sys.resonant_rabi = rabi;
        return pumping_fidelity(sys, none);
    };
    // Weak drives lose to spin flips; start from the fidelity maximum.
    double lo = 1e-3, best = f(lo);
    for (double r = lo; r < 1e4; r *= 1.1) {
        const double v = f(r);
        if (v > best) {
            best = v;
            lo = r;
        }
    }
    const double hi = 1e4;
    if (!(best > target && f(hi) < target))
        throw DomainError(fmt::format(
            "steady-state pumping fidelity {} is out of reach (maximum {:.4f})", target, best));
    return bisect_decreasing(f, lo, hi, target);
}

double calibrate_repump_broadening(const SystemParams& sys, RotationLaserSideEffects side,
                                   double target) {
    auto f = [&](double factor) {
        side.repump_broadening_factor = factor;
        return pumping_fidelity(sys, side);
    };
    // The repump peaks once the half-width reaches the detuning; stay below that.
    const double lo = 1.0;
    double hi = lo, worst = f(lo);
    for (double x = lo; x < 1e3; x *= 1.05) {
        const double v = f(x);
        if (v < worst) {
            worst = v;
            hi = x;
        }
    }
    if (!(f(lo) > target && worst < target))
        throw DomainError(fmt::format(
            "steady-state fidelity {} with the rotation laser is out of reach (range {:.4f} to "
            "{:.4f})",
            target, worst, f(lo)));
    return bisect_decreasing(f, lo, hi, target);
}

// --- Overhauser -----------------------------------------------------------------

OverhauserModel OverhauserModel::from_t2star(double t2star_ns, std::uint64_t seed) {
    if (!(t2star_ns > 0.0)) throw DomainError("T2* must be > 0");
    return {std::sqrt(2.0) / t2star_ns, seed};
}

double seeded_normal(std::uint64_t seed, std::uint64_t index) {
    std::mt19937_64 rng(splitmix64(splitmix64(seed) ^ index));
    std::normal_distribution<double> normal(0.0, 1.0);
    return normal(rng);
}

std::vector<double> sample_overhauser(const OverhauserModel& model, std::size_t n) {
    if (n < 1) throw DomainError("need at least one Overhauser sample");
    if (!(model.sigma_delta >= 0.0)) throw DomainError("sigma_delta must be >= 0");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = model.sigma_delta == 0.0 ? 0.0 : model.sigma_delta * seeded_normal(model.seed, i);
    return out;
}

std::vector<CoherencePoint> ensemble_coherence(const SystemParams& sys, const OverhauserModel& model,
                                               std::size_t n, const std::vector<double>& taus,
                                               unsigned threads) {
    const LevelDiagram diagram = sys.diagram();
    const auto deltas = sample_overhauser(model, n);
    const double frame = readout_frame(diagram);
    const Liouvillian free_gen(RateSet{});
    Eigen::Vector4cd ket = Eigen::Vector4cd::Zero();
    ket(kGround0) = ket(kGround1) = 1.0 / std::sqrt(2.0);
    const VecRho rho0 = DensityMatrix::from_ket(ket).vec();
    const double wl = diagram.ground_splitting;

    // coherence[k][i]: 2 rho_01 with the mean Larmor phase removed.
    std::vector<std::vector<cplx>> samples(n, std::vector<cplx>(taus.size()));
    parallel_for(n, threads, [&](std::size_t k) {
        const Superop l =
            free_gen.superoperator(hamiltonian_at(diagram, {}, 0.0, frame, deltas[k]));
        for (std::size_t i = 0; i < taus.size(); ++i) {
            const VecRho v = exact_propagator(l, taus[i]) * rho0;
            samples[k][i] = 2.0 * v(vec_index(kGround0, kGround1)) *
                            std::exp(cplx{0.0, -wl * taus[i]});
        }
    });
    std::vector<CoherencePoint> out;
    for (std::size_t i = 0; i < taus.size(); ++i) {
        cplx mean{0.0, 0.0};
        for (std::size_t k = 0; k < n; ++k) mean += samples[k][i];
        mean /= static_cast<double>(n);
        const double mag = std::abs(mean);
        const cplx dir = mag > 0.0 ? mean / mag : cplx{1.0, 0.0};
        double var = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double proj = (samples[k][i] * std::conj(dir)).real() - mag;
            var += proj * proj;
        }
        var /= static_cast<double>(std::max<std::size_t>(1, n - 1));
        out.push_back({taus[i], mag, std::sqrt(var / static_cast<double>(n))});
    }
    return out;
}

// --- Ramsey -------------------------------------------------------------------

std::string to_string(SimulationMode m) {
    return m == SimulationMode::Effective ? "effective" : "full";
}

SimulationMode mode_from_string(const std::string& s) {
    if (s == "effective") return SimulationMode::Effective;
    if (s == "full") return SimulationMode::FullIntegration;
    throw DomainError("unknown simulation mode '" + s + "' (expected effective or full)");
}

void RamseyConfig::validate() const {
    system.validate();
    if (side_effects) side_effects->validate();
    if (ensemble_size < 1) throw DomainError("ensemble_size must be >= 1");
    if (delays.empty()) throw DomainError("delay grid is empty");
    if (delays.front() < 0.0) throw DomainError("delays must be >= 0");
    for (std::size_t i = 1; i < delays.size(); ++i)
        if (!(delays[i] > delays[i - 1])) throw DomainError("delays must be strictly increasing");
    if (!(init_duration > 0.0) || !(readout_duration > 0.0))
        throw DomainError("resonant pulse durations must be > 0");
    if (timing.guard_before < 0.0 || timing.guard_after < 0.0)
        throw DomainError("guard delays must be >= 0");
    if (!(overhauser.sigma_delta >= 0.0)) throw DomainError("sigma_delta must be >= 0");
    readout.validate(readout_duration);
    if (mode == SimulationMode::FullIntegration) {
        const double half = 0.5 * rotation.window();
        if (timing.guard_before < half || timing.guard_after < half)
            throw DomainError(fmt::format(
                "guard delays must cover half the pulse window ({:.4g} ns) in full mode", half));
    }
    const double work = static_cast<double>(ensemble_size) * static_cast<double>(delays.size());
    const double limit = mode == SimulationMode::Effective ? kEffectiveWorkLimit : kFullWorkLimit;
    if (work > limit && !allow_long_run)
        throw DomainError(fmt::format("ensemble_size x delays = {:.3g} exceeds the run guard {:.3g} "
                                      "for {} mode; set allow_long_run to override",
                                      work, limit, to_string(mode)));
}

DataSeries RamseyTrace::series() const {
    DataSeries d;
    d.x = delays;
    d.y = signal;
    return d;
}

std::vector<double> linear_grid(double start, double stop, std::size_t n) {
    if (n == 0) return {};
    if (n == 1) return {start};
    std::vector<double> g(n);
    const double h = (stop - start) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) g[i] = start + h * static_cast<double>(i);
    g.back() = stop;
    return g;
}

std::vector<double> mean_centered(const std::vector<double>& v) {
    if (v.empty()) return {};
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    std::vector<double> out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), [m](double x) { return x - m; });
    return out;
}

RamseyTrace with_noise(const RamseyTrace& trace, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0)) throw DomainError("noise fraction must be >= 0");
    RamseyTrace out = trace;
    if (fraction == 0.0 || trace.signal.empty()) return out;
    const auto [lo, hi] = std::minmax_element(trace.signal.begin(), trace.signal.end());
    const double sigma = fraction * 0.5 * (*hi - *lo);
    const std::uint64_t stream = splitmix64(seed ^ 0x6e6f697365ULL);
    for (std::size_t i = 0; i < out.signal.size(); ++i) {
        out.signal[i] += sigma * seeded_normal(stream, i);
        out.signal_stderr[i] = std::hypot(out.signal_stderr[i], sigma);
    }
    return out;
}

Superop full_pulse_superop(const RotationPulse& pulse, const LevelDiagram& diagram,
                           const RateSet& rates, double t_from, double t_to, double frame) {
    EvolveOptions opt;
    opt.frame_frequency = frame;
    opt.check_positivity = false;
    return propagate_superoperator(diagram, rotation_drive_terms(pulse, diagram, 0.0), rates, t_from,
                                   t_to, rotation_dt_hint(pulse, frame), opt);
}

namespace {

// Superoperator of a pulse pair centred at 0 and tau, integrated jointly.
Superop pulse_pair_superop(const RotationPulse& pulse, const LevelDiagram& diagram,
                           const RateSet& rates, double tau, double frame) {
    auto drives = rotation_drive_terms(pulse, diagram, 0.0);
    for (auto& d : rotation_drive_terms(pulse, diagram, tau)) drives.push_back(std::move(d));
    EvolveOptions opt;
    opt.frame_frequency = frame;
    opt.check_positivity = false;
    const double half = 0.5 * pulse.window();
    return propagate_superoperator(diagram, drives, rates, -half, tau + half,
                                   rotation_dt_hint(pulse, frame), opt);
}

// Phases of vec entries for moving a pulse from centre 0 to centre c:
// S_c = D S_0 D^*, D = diag(P_i conj(P_j)), P = diag(1, 1, e^{-i w c}, e^{-i w c}).
VecRho frame_phases(double carrier, double c) {
    const cplx ph = std::exp(cplx{0.0, -carrier * c});
    const cplx p[4] = {1.0, 1.0, ph, ph};
    VecRho d;
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) d(vec_index(i, j)) = p[i] * std::conj(p[j]);
    return d;
}

struct StepCache {
    double step = -1.0;
    Superop prop;
    const Superop& get(const Superop& l, double dt) {
        if (std::abs(dt - step) > 1e-13) {
            step = dt;
            prop = exact_propagator(l, dt);
        }
        return prop;
    }
};

}  // namespace

RamseyTrace run_ramsey(const RamseyConfig& cfg) {
    cfg.validate();
    const SystemParams& sys = cfg.system;
    const LevelDiagram diagram = sys.diagram();
    const RotationLaserSideEffects side = cfg.side_effects.value_or(RotationLaserSideEffects::none());
    const RateSet rates_on = segment_rates(sys, diagram, side, true);
    const RateSet rates_off = segment_rates(sys, diagram, side, false);
    const Liouvillian gen_on(rates_on), gen_off(rates_off);
    const double frame = readout_frame(diagram);
    const auto drives = resonant_drive_terms(diagram, sys.resonant_rabi);
    const auto deltas = sample_overhauser(cfg.overhauser, cfg.ensemble_size);
    const auto [win_a, win_b] = cfg.readout.resolved_window(cfg.readout_duration);
    const VecRho rho0 = DensityMatrix::mixed_ground().vec();
    const std::size_t m = cfg.delays.size();
    const bool full = cfg.mode == SimulationMode::FullIntegration;

    // Effective mode: instantaneous rotation followed by the trion kick.
    Superop rot = Superop::Identity();
    // Full mode: pulse at centre 0, phase factors, and jointly integrated overlapping pairs.
    Superop pulse0 = Superop::Identity();
    const double w = full ? cfg.rotation.window() : 0.0;
    const double carrier = cfg.rotation.detuning - frame;
    std::map<std::size_t, Superop> pairs;
    if (full) {
        pulse0 = full_pulse_superop(cfg.rotation, diagram, rates_off, -0.5 * w, 0.5 * w, frame);
        for (std::size_t i = 0; i < m; ++i)
            if (cfg.delays[i] < w)
                pairs.emplace(i, pulse_pair_superop(cfg.rotation, diagram, rates_off, cfg.delays[i], frame));
    } else {
        const EffectiveRotation er = effective_rotation(cfg.rotation, diagram);
        rot = trion_kick(diagram, side.trion_excitation_prob) *
              unitary_superop(embed_ground(er.unitary));
    }
    const double c1 = cfg.init_duration + cfg.timing.guard_before;
    const VecRho d1 = frame_phases(carrier, c1);

    std::vector<std::vector<double>> signals(cfg.ensemble_size, std::vector<double>(m));
    std::vector<double> init_pop(cfg.ensemble_size);

    parallel_for(cfg.ensemble_size, cfg.threads, [&](std::size_t k) {
        const double delta = deltas[k];
        const Superop l_on = gen_on.superoperator(hamiltonian_at(diagram, drives, 0.0, frame, delta));
        const Superop l_off = gen_off.superoperator(hamiltonian_at(diagram, {}, 0.0, frame, delta));
        const VecRho start = cfg.init_from_steady_state ? steady_state(l_on) : rho0;
        const VecRho after_init = exact_propagator(l_on, cfg.init_duration) * start;
        init_pop[k] = population1(after_init);
        const RowVec16 readout =
            emission_functional(l_on, sys.gamma_decay, cfg.readout.collection_efficiency, win_a, win_b);
        const double gb = cfg.timing.guard_before - 0.5 * w;
        const double ga = cfg.timing.guard_after - 0.5 * w;
        const RowVec16 left = readout * exact_propagator(l_off, ga);
        VecRho base = exact_propagator(l_off, gb) * after_init;

        StepCache cache;
        if (!full) {
            base = rot * base;
            const RowVec16 u = left * rot;
            VecRho v = base;
            double t_prev = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                v = cache.get(l_off, cfg.delays[i] - t_prev) * v;
                t_prev = cfg.delays[i];
                signals[k][i] = (u * v)(0).real() + cfg.readout.background;
            }
            return;
        }

        // Full mode: quasi-static shift split symmetrically around each pulse window.
        const Superop shift = shift_generator(delta);
        auto dressed = [&](const Superop& s, double span) {
            const Superop half = diagonal_expm(shift, 0.5 * span);
            return Superop(half * s * half);
        };
        auto move = [&](const Superop& s, const VecRho& d) {
            Superop out = s;
            for (int b = 0; b < 16; ++b)
                for (int a = 0; a < 16; ++a) out(a, b) *= d(a) * std::conj(d(b));
            return out;
        };
        const Superop p1 = dressed(move(pulse0, d1), w);
        const Superop p0_dressed = dressed(pulse0, w);
        VecRho v = p1 * base;
        double t_prev = w;
        for (std::size_t i = 0; i < m; ++i) {
            const double tau = cfg.delays[i];
            const VecRho d2 = frame_phases(carrier, c1 + tau);
            if (auto it = pairs.find(i); it != pairs.end()) {
                const VecRho out = dressed(move(it->second, d1), tau + w) * base;
                signals[k][i] = (left * out)(0).real() + cfg.readout.background;
                continue;
            }
            v = cache.get(l_off, (tau - w) - (t_prev - w)) * v;
            t_prev = tau;
            // left * D S0' D^* v
            VecRho y = v;
            for (int a = 0; a < 16; ++a) y(a) *= std::conj(d2(a));
            VecRho z = p0_dressed * y;
            for (int a = 0; a < 16; ++a) z(a) *= d2(a);
            signals[k][i] = (left * z)(0).real() + cfg.readout.background;
        }
    });

    RamseyTrace trace;
    trace.delays = cfg.delays;
    trace.ensemble_size = cfg.ensemble_size;
    trace.mode = cfg.mode;
    trace.signal.assign(m, 0.0);
    trace.signal_stderr.assign(m, 0.0);
    const double n = static_cast<double>(cfg.ensemble_size);
    for (std::size_t k = 0; k < cfg.ensemble_size; ++k)
        for (std::size_t i = 0; i < m; ++i) trace.signal[i] += signals[k][i];
    for (double& s : trace.signal) s /= n;
    if (cfg.ensemble_size > 1) {
        for (std::size_t i = 0; i < m; ++i) {
            double var = 0.0;
            for (std::size_t k = 0; k < cfg.ensemble_size; ++k) {
                const double d = signals[k][i] - trace.signal[i];
                var += d * d;
            }
            trace.signal_stderr[i] = std::sqrt(var / (n - 1.0) / n);
        }
    }
    for (double p : init_pop) trace.init_fidelity += p;
    trace.init_fidelity /= n;
    return trace;
}

double ramsey_contrast(const RamseyTrace& trace, double angular_frequency) {
    if (trace.signal.empty()) throw DomainError("empty trace");
    const auto [lo_it, hi_it] = std::minmax_element(trace.signal.begin(), trace.signal.end());
    if (*lo_it == *hi_it) return 0.0;
    if (!(angular_frequency > 0.0)) throw DomainError("fringe frequency must be > 0");
    const double period = kTwoPi / angular_frequency;
    const double t0 = trace.delays.front();
    if (trace.delays.back() - t0 < period * (1.0 - 1e-9))
        throw DomainError(fmt::format("trace spans {:.4g} ns, shorter than one fringe period {:.4g} ns",
                                      trace.delays.back() - t0, period));
    double imax = -std::numeric_limits<double>::infinity();
    double imin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < trace.delays.size() && trace.delays[i] <= t0 + period * (1.0 + 1e-9);
         ++i) {
        imax = std::max(imax, trace.signal[i]);
        imin = std::min(imin, trace.signal[i]);
    }
    if (imax + imin <= 0.0) throw DomainError("contrast undefined for non-positive intensities");
    return (imax - imin) / (imax + imin);
}

double ramsey_contrast(const RamseyTrace& trace) {
    if (trace.signal.empty()) throw DomainError("empty trace");
    const auto [lo_it, hi_it] = std::minmax_element(trace.signal.begin(), trace.signal.end());
    if (*lo_it == *hi_it) return 0.0;
    const FitResult fit = fit_gauss_cosine(trace.series());
    return ramsey_contrast(trace, fit.params[1]);
}

// --- rotation fidelity --------------------------------------------------------

Eigen::Matrix4cd rotation_ground_map(const RotationPulse& pulse, const LevelDiagram& diagram,
                                     const RotationLaserSideEffects& side, const RateSet& rates,
                                     SimulationMode mode) {
    const Superop relax = trion_relaxation(rates);
    if (mode == SimulationMode::Effective) {
        const EffectiveRotation er = effective_rotation(pulse, diagram);
        const Superop s =
            relax * trion_kick(diagram, side.trion_excitation_prob) * unitary_superop(embed_ground(er.unitary));
        return ground_block(s);
    }
    const double w = pulse.window();
    const double frame = readout_frame(diagram);
    const Superop s = relax * full_pulse_superop(pulse, diagram, rates, -0.5 * w, 0.5 * w, frame);
    // Remove free precession over each half window (toggling frame).
    Eigen::Matrix2cd back = Eigen::Matrix2cd::Zero();
    back(0, 0) = std::exp(cplx{0.0, diagram.energies[kGround0] * 0.5 * w});
    back(1, 1) = std::exp(cplx{0.0, diagram.energies[kGround1] * 0.5 * w});
    const Eigen::Matrix4cd g = ground_unitary_superop(back);
    Eigen::Matrix4cd m = g * ground_block(s) * g;
    // Renormalize by the ground trace retained from the maximally mixed input.
    const Eigen::Vector4cd half_identity(0.5, 0.0, 0.0, 0.5);
    const Eigen::Vector4cd out = m * half_identity;
    const double retained = (out(0) + out(3)).real();
    if (retained > 0.0) m /= retained;
    return m;
}

double map_fidelity(const Eigen::Matrix2cd& ideal, const Eigen::Matrix4cd& map) {
    const Eigen::Matrix4cd su = ground_unitary_superop(ideal);
    const double overlap = (su.adjoint() * map).trace().real();
    return std::sqrt(std::max(0.0, overlap)) / 2.0;
}

double map_rotation_angle(const Eigen::Matrix4cd& map) {
    const std::array<Eigen::Matrix2cd, 3> pauli = [] {
        Eigen::Matrix2cd x, y, z;
        x << 0, 1, 1, 0;
        y << 0, cplx{0, -1}, cplx{0, 1}, 0;
        z << 1, 0, 0, -1;
        return std::array<Eigen::Matrix2cd, 3>{x, y, z};
    }();
    Eigen::Matrix3d r;
    for (int j = 0; j < 3; ++j) {
        const Eigen::Vector4cd in = Eigen::Map<const Eigen::Vector4cd>(pauli[j].data());
        const Eigen::Vector4cd outv = map * in;
        const Eigen::Matrix2cd out = Eigen::Map<const Eigen::Matrix2cd>(outv.data());
        for (int i = 0; i < 3; ++i) r(i, j) = 0.5 * (pauli[i] * out).trace().real();
    }
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    if ((u * svd.matrixV().transpose()).determinant() < 0.0) u.col(2) *= -1.0;
    const Eigen::Matrix3d o = u * svd.matrixV().transpose();
    return std::acos(std::clamp(0.5 * (o.trace() - 1.0), -1.0, 1.0));
}

double rotation_fidelity(const RotationPulse& pulse, const LevelDiagram& diagram,
                         const RotationLaserSideEffects& side, const RateSet& rates,
                         SimulationMode mode) {
    side.validate();
    const EffectiveRotation er = effective_rotation(pulse, diagram);
    return map_fidelity(er.unitary, rotation_ground_map(pulse, diagram, side, rates, mode));
}

double trion_excitation_for_fidelity(double target) {
    if (!(target >= 0.5 && target <= 1.0))
        throw DomainError("target rotation fidelity must lie in [0.5, 1]");
    return 4.0 / 3.0 * (1.0 - target * target);
}

// --- Larmor series --------------------------------------------------------------

std::vector<LarmorRow> extract_larmor_series(
    const std::vector<std::pair<double, RamseyTrace>>& traces) {
    std::vector<LarmorRow> rows;
    for (const auto& [field, trace] : traces) {
        LarmorRow row;
        row.field_tesla = field;
        try {
            GaussCosineFitOptions opt;
            opt.background_subtract = true;
            const FitResult fit = fit_gauss_cosine(trace.series(), opt);
            row.larmor_ghz = angular_to_ghz(fit.params[1]);
            row.larmor_ghz_err = angular_to_ghz(fit.uncertainties[1]);
            row.t2star_ns = fit.params[3];
            row.g_factor = extract_g_factor(row.larmor_ghz, field);
            row.fit_ok = fit.converged;
            if (!fit.converged) row.message = "fit did not converge";
        } catch (const std::exception& e) {
            row.fit_ok = false;
            row.message = e.what();
        }
        rows.push_back(row);
    }
    return rows;
}

void write_ramsey_csv(const RamseyTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "delay_ns,signal,signal_stderr\n";
    for (std::size_t i = 0; i < trace.delays.size(); ++i)
        out << fmt::format("{:.17g},{:.17g},{:.17g}\n", trace.delays[i], trace.signal[i],
                           trace.signal_stderr[i]);
}

}  // namespace qdspin
