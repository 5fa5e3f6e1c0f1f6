#include "qdspin/lindblad.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "qdspin/errors.hpp"

namespace qdspin {

DensityMatrix DensityMatrix::pure(int level) {
    DensityMatrix rho;
    rho.m(level, level) = 1.0;
    return rho;
}

DensityMatrix DensityMatrix::from_ket(const Eigen::Vector4cd& ket) {
    const Eigen::Vector4cd k = ket / ket.norm();
    return {k * k.adjoint()};
}

DensityMatrix DensityMatrix::mixed_ground() {
    DensityMatrix rho;
    rho.m(kGround0, kGround0) = 0.5;
    rho.m(kGround1, kGround1) = 0.5;
    return rho;
}

VecRho DensityMatrix::vec() const { return Eigen::Map<const VecRho>(m.data()); }

DensityMatrix DensityMatrix::from_vec(const VecRho& v) {
    DensityMatrix rho;
    rho.m = Eigen::Map<const Matrix4c>(v.data());
    return rho;
}

StateDiagnostics validate_state(const DensityMatrix& rho) {
    StateDiagnostics d;
    d.hermiticity_defect = (rho.m - rho.m.adjoint()).cwiseAbs().maxCoeff();
    d.trace_defect = std::abs(rho.m.trace() - 1.0);
    const Matrix4c herm = 0.5 * (rho.m + rho.m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(herm, Eigen::EigenvaluesOnly);
    d.min_eigenvalue = es.eigenvalues().minCoeff();
    return d;
}

void RateSet::validate() const {
    for (double r : {gamma_decay, kappa_spinflip, gamma_repump, gamma_spin_dephasing})
        if (!(r >= 0.0) || !std::isfinite(r)) throw DomainError("rates must be finite and >= 0");
    for (const auto& row : branching) {
        if (row[0] < 0.0 || row[1] < 0.0 || std::abs(row[0] + row[1] - 1.0) > 1e-12)
            throw DomainError("branching rows must be non-negative and sum to 1");
    }
    if (repump_from != kGround0 && repump_from != kGround1)
        throw DomainError("repump source must be a ground level");
}

double RateSet::max_rate() const {
    return std::max({gamma_decay, kappa_spinflip, gamma_repump, gamma_spin_dephasing});
}

Liouvillian::Liouvillian(const RateSet& rates) {
    rates.validate();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const double r = rates.gamma_decay * rates.branching[i][j];
            if (r > 0.0) transfers_.push_back({kTrion0 + i, kGround0 + j, r});
        }
    if (rates.kappa_spinflip > 0.0) {
        transfers_.push_back({kGround1, kGround0, rates.kappa_spinflip});
        transfers_.push_back({kGround0, kGround1, rates.kappa_spinflip});
    }
    if (rates.gamma_repump > 0.0) {
        transfers_.push_back({rates.repump_from, kTrion0, rates.gamma_repump});
        transfers_.push_back({rates.repump_from, kTrion1, rates.gamma_repump});
    }
    for (const auto& t : transfers_) loss_(t.from) += t.rate;
    if (rates.gamma_spin_dephasing > 0.0) {
        const double a = std::sqrt(0.5 * rates.gamma_spin_dephasing);
        dephasing_ = Eigen::Vector4d(a, -a, 0.0, 0.0);
        loss_(kGround0) += a * a;
        loss_(kGround1) += a * a;
    }
    dissipator_ = superoperator(Matrix4c::Zero());
}

Matrix4c Liouvillian::apply(const Matrix4c& h, const Matrix4c& rho) const {
    const cplx minus_i{0.0, -1.0};
    Matrix4c out = minus_i * (h * rho - rho * h);
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i)
            out(i, j) += (dephasing_(i) * dephasing_(j) - 0.5 * (loss_(i) + loss_(j))) * rho(i, j);
    for (const auto& t : transfers_) out(t.to, t.to) += t.rate * rho(t.from, t.from);
    return out;
}

Superop Liouvillian::superoperator(const Matrix4c& h) const {
    Superop s;
    for (int b = 0; b < 4; ++b)
        for (int a = 0; a < 4; ++a) {
            Matrix4c basis = Matrix4c::Zero();
            basis(a, b) = 1.0;
            const Matrix4c col = apply(h, basis);
            s.col(a + 4 * b) = Eigen::Map<const VecRho>(col.data());
        }
    return s;
}

Matrix4c liouvillian_apply(const Matrix4c& hamiltonian, const RateSet& rates, const Matrix4c& rho) {
    if ((hamiltonian - hamiltonian.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
        throw DomainError("Hamiltonian is not Hermitian");
    return Liouvillian(rates).apply(hamiltonian, rho);
}

double default_frame_frequency(const LevelDiagram& diagram, const std::vector<DriveTerm>& drives) {
    if (drives.empty()) return 0.0;
    const auto& d = drives.front();
    return diagram.transitions.at(d.transition).frequency_offset + d.detuning;
}

Matrix4c hamiltonian_at(const LevelDiagram& diagram, const std::vector<DriveTerm>& drives, double t,
                        double frame_frequency, double extra_ground_splitting) {
    Matrix4c h = Matrix4c::Zero();
    h(kGround0, kGround0) = diagram.energies[kGround0] - 0.5 * extra_ground_splitting;
    h(kGround1, kGround1) = diagram.energies[kGround1] + 0.5 * extra_ground_splitting;
    h(kTrion0, kTrion0) = diagram.energies[kTrion0] - frame_frequency;
    h(kTrion1, kTrion1) = diagram.energies[kTrion1] - frame_frequency;
    for (const auto& d : drives) {
        const Transition& tr = diagram.transitions.at(d.transition);
        const double rabi = d.rabi_envelope ? d.rabi_envelope(t) : 0.0;
        if (rabi == 0.0) continue;
        const double carrier = tr.frequency_offset + d.detuning - frame_frequency;
        const cplx c = 0.5 * rabi * std::sqrt(tr.relative_strength) * d.coupling *
                       std::exp(cplx{0.0, -carrier * t});
        h(tr.to_level, tr.from_level) += c;
        h(tr.from_level, tr.to_level) += std::conj(c);
    }
    return h;
}

namespace {

struct Stepping {
    long steps;
    double h;
};

Stepping make_stepping(double t0, double t1, double dt) {
    if (!(dt > 0.0)) throw DomainError("dt must be > 0");
    if (!(t1 > t0)) throw DomainError("evolution span must have t1 > t0");
    if (dt > (t1 - t0) * (1.0 + 1e-12)) throw DomainError("dt must not exceed the evolution span");
    const long n = std::max(1L, static_cast<long>(std::ceil((t1 - t0) / dt - 1e-9)));
    return {n, (t1 - t0) / static_cast<double>(n)};
}

// Largest frequency scale: ||H||_inf, active drive carriers, and rates.
double step_product(const LevelDiagram& diagram, const std::vector<DriveTerm>& drives,
                    const RateSet& rates, double t0, const Stepping& st, double frame,
                    double extra) {
    double scale = rates.max_rate();
    for (long n = 0; n <= 2 * st.steps; ++n) {
        const double t = t0 + 0.5 * static_cast<double>(n) * st.h;
        const Matrix4c h = hamiltonian_at(diagram, drives, t, frame, extra);
        scale = std::max(scale, h.cwiseAbs().rowwise().sum().maxCoeff());
        for (const auto& d : drives) {
            if (d.rabi_envelope && d.rabi_envelope(t) != 0.0) {
                const double carrier =
                    diagram.transitions.at(d.transition).frequency_offset + d.detuning - frame;
                scale = std::max(scale, std::abs(carrier));
            }
        }
    }
    return scale * st.h;
}

void check_step(double product, const EvolveOptions& options) {
    if (product >= 0.1 && !options.allow_coarse_step)
        throw StepSizeError(fmt::format("step too coarse: dt * max(|H|, rates) = {:.4g} >= 0.1; "
                                        "reduce dt or set allow_coarse_step",
                                        product),
                            product);
}

}  // namespace

Trajectory evolve(const DensityMatrix& rho0, const LevelDiagram& diagram,
                  const std::vector<DriveTerm>& drives, const RateSet& rates, double t0, double t1,
                  double dt, const EvolveOptions& options) {
    const Stepping st = make_stepping(t0, t1, dt);
    const double frame = options.frame_frequency.value_or(default_frame_frequency(diagram, drives));
    const double extra = options.extra_ground_splitting;
    const Liouvillian gen(rates);

    Trajectory traj;
    traj.dt = st.h;
    traj.step_product = step_product(diagram, drives, rates, t0, st, frame, extra);
    check_step(traj.step_product, options);

    const int stride = std::max(1, options.record_stride);
    auto record = [&](double t, const Matrix4c& rho) {
        traj.times.push_back(t);
        traj.states.push_back({rho});
        traj.emission_rate.push_back(rates.gamma_decay *
                                     (rho(kTrion0, kTrion0).real() + rho(kTrion1, kTrion1).real()));
    };

    Matrix4c rho = rho0.m;
    const StateDiagnostics d0 = validate_state(rho0);
    traj.min_eigenvalue = d0.min_eigenvalue;
    traj.max_hermiticity_defect = d0.hermiticity_defect;
    record(t0, rho);

    const double h = st.h;
    for (long n = 0; n < st.steps; ++n) {
        const double t = t0 + static_cast<double>(n) * h;
        const Matrix4c h0 = hamiltonian_at(diagram, drives, t, frame, extra);
        const Matrix4c hm = hamiltonian_at(diagram, drives, t + 0.5 * h, frame, extra);
        const Matrix4c h1 = hamiltonian_at(diagram, drives, t + h, frame, extra);
        const Matrix4c k1 = gen.apply(h0, rho);
        const Matrix4c k2 = gen.apply(hm, rho + 0.5 * h * k1);
        const Matrix4c k3 = gen.apply(hm, rho + 0.5 * h * k2);
        const Matrix4c k4 = gen.apply(h1, rho + h * k3);
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

        const cplx tr = rho.trace();
        const double drift = std::abs(tr - 1.0);
        traj.max_trace_drift = std::max(traj.max_trace_drift, drift);
        if (drift > 1e-12) {
            rho /= tr.real();
            ++traj.renormalizations;
        }
        const bool last = n + 1 == st.steps;
        if (options.check_positivity) {
            const StateDiagnostics diag = validate_state({rho});
            traj.min_eigenvalue = std::min(traj.min_eigenvalue, diag.min_eigenvalue);
            traj.max_hermiticity_defect =
                std::max(traj.max_hermiticity_defect, diag.hermiticity_defect);
            if (diag.min_eigenvalue < -1e-6)
                throw IntegrationError(fmt::format(
                    "positivity lost at t = {:.6g} ns (min eigenvalue {:.3g}); integration unstable",
                    t + h, diag.min_eigenvalue));
        }
        if (last) {
            record(t1, rho);
        } else if ((n + 1) % stride == 0) {
            record(t + h, rho);
        }
    }
    return traj;
}

Superop propagate_superoperator(const LevelDiagram& diagram, const std::vector<DriveTerm>& drives,
                                const RateSet& rates, double t0, double t1, double dt,
                                const EvolveOptions& options) {
    const Stepping st = make_stepping(t0, t1, dt);
    const double frame = options.frame_frequency.value_or(default_frame_frequency(diagram, drives));
    const double extra = options.extra_ground_splitting;
    check_step(step_product(diagram, drives, rates, t0, st, frame, extra), options);
    const Liouvillian gen(rates);
    const Superop& diss = gen.dissipator();

    // -i (I (x) H - H^T (x) I) + dissipator
    auto generator = [&](double t) {
        const Matrix4c hm = hamiltonian_at(diagram, drives, t, frame, extra);
        Superop l = diss;
        const cplx minus_i{0.0, -1.0};
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i)
                for (int k = 0; k < 4; ++k) {
                    l(i + 4 * j, k + 4 * j) += minus_i * hm(i, k);
                    l(i + 4 * j, i + 4 * k) -= minus_i * hm(k, j);
                }
        return l;
    };

    Superop s = Superop::Identity();
    const double h = st.h;
    for (long n = 0; n < st.steps; ++n) {
        const double t = t0 + static_cast<double>(n) * h;
        const Superop l0 = generator(t);
        const Superop lm = generator(t + 0.5 * h);
        const Superop l1 = generator(t + h);
        const Superop k1 = l0 * s;
        const Superop k2 = lm * (s + 0.5 * h * k1);
        const Superop k3 = lm * (s + 0.5 * h * k2);
        const Superop k4 = l1 * (s + h * k3);
        s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return s;
}

Superop exact_propagator(const Superop& generator, double duration) {
    if (duration == 0.0) return Superop::Identity();
    const Superop scaled = generator * duration;
    return scaled.exp();
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "time_ns";
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) out << fmt::format(",rho_{}{}_re,rho_{}{}_im", i, j, i, j);
    out << ",emission_rate\n";
    for (std::size_t n = 0; n < traj.times.size(); ++n) {
        out << fmt::format("{:.17g}", traj.times[n]);
        const Matrix4c& m = traj.states[n].m;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                out << fmt::format(",{:.17g},{:.17g}", m(i, j).real(), m(i, j).imag());
        out << fmt::format(",{:.17g}\n", traj.emission_rate[n]);
    }
}

}  // namespace qdspin
