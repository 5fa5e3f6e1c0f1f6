#include "qdspin/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "qdspin/config.hpp"
#include "qdspin/errors.hpp"
#include "qdspin/experiments.hpp"
#include "qdspin/fitting.hpp"
#include "qdspin/polarization.hpp"
#include "qdspin/svg.hpp"

namespace qdspin {

namespace fs = std::filesystem;

namespace {

ExperimentConfig load_config(const CliOptions& opt) {
    ExperimentConfig cfg = opt.config_path.empty() ? ExperimentConfig{}
                                                   : ExperimentConfig::load(opt.config_path);
    if (opt.seed) cfg.set("overhauser.seed", std::to_string(*opt.seed));
    if (opt.svg) cfg.set("output.svg", *opt.svg ? "true" : "false");
    return cfg;
}

std::string prepare_out(const CliOptions& opt, const ExperimentConfig& cfg) {
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec) throw DomainError(fmt::format("cannot create output directory {}: {}", opt.out_dir, ec.message()));
    const fs::path dir(opt.out_dir);
    std::ofstream(dir / "config.ini") << cfg.serialize();
    return dir.string();
}

std::string join(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
}

std::string deg(double rad) { return fmt::format("{:.6f}", rad * 180.0 / kPi); }

}  // namespace

int cmd_simulate_ramsey(const CliOptions& opt) {
    const ExperimentConfig cfg = load_config(opt);
    RamseyConfig rc = cfg.ramsey();
    rc.threads = opt.threads;
    const std::string dir = prepare_out(opt, cfg);

    RamseyTrace trace = run_ramsey(rc);
    trace = with_noise(trace, cfg.number("scan.noise_fraction"), rc.overhauser.seed);
    write_ramsey_csv(trace, join(dir, "trace.csv"));

    std::string report = fmt::format("mode = {}\nensemble_size = {}\ninit_fidelity = {:.10g}\n",
                                     to_string(trace.mode), trace.ensemble_size, trace.init_fidelity);
    FitResult fit;
    try {
        fit = fit_gauss_cosine(trace.series(), cfg.fit_options());
    } catch (const std::exception& e) {
        write_text(join(dir, "fit.txt"), report + fmt::format("status = failed\nmessage = {}\n", e.what()));
        std::cerr << "fit failed: " << e.what() << "\n";
        return kExitNumeric;
    }
    const double nu = angular_to_ghz(fit.param("omega_L"));
    report += fmt::format("status = {}\nlarmor_ghz = {:.10g}\nlarmor_ghz_err = {:.10g}\n",
                          fit.converged ? "converged" : "not_converged", nu,
                          angular_to_ghz(fit.uncertainty("omega_L")));
    report += fmt::format("t2star_ns = {:.10g}\nt2star_ns_err = {:.10g}\n", fit.param("T2star"),
                          fit.uncertainty("T2star"));
    if (rc.system.field_tesla > 0.0)
        report += fmt::format("g_factor = {:.10g}\n", extract_g_factor(nu, rc.system.field_tesla));
    try {
        report += fmt::format("contrast = {:.10g}\n", ramsey_contrast(trace, fit.param("omega_L")));
    } catch (const DomainError& e) {
        report += fmt::format("# contrast unavailable: {}\n", e.what());
    }
    report += fit_result_text(fit);
    write_text(join(dir, "fit.txt"), report);

    if (cfg.flag("output.svg")) {
        const auto series = trace.series();
        std::vector<double> y = cfg.fit_options().background_subtract ? mean_centered(series.y) : series.y;
        std::vector<double> fx, fy;
        const GaussCosineParams gp = gauss_cosine_params(fit);
        const double a = series.x.front(), b = series.x.back();
        for (int i = 0; i <= 1000; ++i) {
            const double t = a + (b - a) * i / 1000.0;
            fx.push_back(t);
            fy.push_back(model_gauss_cosine(gp, t));
        }
        write_plot_svg(join(dir, "fringe.svg"),
                       {{series.x, y, "#1f77b4", true}, {fx, fy, "#d62728", false}}, "delay (ns)",
                       "signal");
    }
    std::cout << fmt::format("larmor = {:.4f} GHz, T2* = {:.4f} ns, converged = {}\n", nu,
                             fit.param("T2star"), fit.converged);
    return fit.converged ? kExitOk : kExitNumeric;
}

int cmd_simulate_pumping(const CliOptions& opt) {
    const ExperimentConfig cfg = load_config(opt);
    const SystemParams sys = cfg.system();
    const bool rotation_laser = cfg.flag("pumping.rotation_laser");
    const RotationLaserSideEffects side =
        rotation_laser ? cfg.side_effects() : RotationLaserSideEffects::none();
    const ReadoutModel readout = [&] {
        ReadoutModel r;
        r.collection_efficiency = cfg.number("readout.collection_efficiency");
        r.background = cfg.number("readout.background");
        return r;
    }();
    const std::string dir = prepare_out(opt, cfg);

    const double duration = cfg.number("pumping.duration_ns");
    PumpingResult res = simulate_pumping(sys, side, duration, readout, cfg.number("pumping.dt_ns"));
    const auto stride = static_cast<std::size_t>(cfg.integer("pumping.record_stride"));
    if (stride > 1) {
        Trajectory& t = res.trajectory;
        Trajectory thin = t;
        thin.times.clear();
        thin.states.clear();
        thin.emission_rate.clear();
        for (std::size_t i = 0; i < t.times.size(); ++i)
            if (i % stride == 0 || i + 1 == t.times.size()) {
                thin.times.push_back(t.times[i]);
                thin.states.push_back(t.states[i]);
                thin.emission_rate.push_back(t.emission_rate[i]);
            }
        t = std::move(thin);
    }
    write_trajectory_csv(res.trajectory, join(dir, "trajectory.csv"));
    const double f_ss = pumping_fidelity(sys, side);
    const std::string report = fmt::format(
        "rotation_laser = {}\nduration_ns = {:.10g}\ninit_fidelity = {:.10g}\n"
        "steady_state_fidelity = {:.10g}\npumping_rate_per_ns = {:.10g}\nrabi_rad_per_ns = {:.10g}\n"
        "rabi_oscillations_resolved = {}\ncollected_counts = {:.10g}\nmax_trace_drift = {:.3e}\n"
        "min_eigenvalue = {:.3e}\n",
        rotation_laser, duration, res.init_fidelity, f_ss, res.pumping_rate, res.rabi,
        res.rabi_resolved, res.collected_counts, res.trajectory.max_trace_drift,
        res.trajectory.min_eigenvalue);
    write_text(join(dir, "fidelity.txt"), report);
    std::cout << fmt::format("F_init = {:.4f} (steady state {:.4f}), Rabi resolved = {}\n",
                             res.init_fidelity, f_ss, res.rabi_resolved);
    return kExitOk;
}

int cmd_scan_polarization(const CliOptions& opt) {
    const ExperimentConfig cfg = load_config(opt);
    const double step_deg = cfg.number("scan.waveplate_step_deg");
    const double n = 180.0 / step_deg;
    if (std::abs(n - std::round(n)) > 1e-9 * n)
        throw ConfigError(fmt::format("key 'scan.waveplate_step_deg': grid_step {} deg does not divide 180",
                                      step_deg),
                          0, "scan.waveplate_step_deg");
    const double eps = cfg.number("system.impurity");
    const JonesVector e0 = cfg.input_polarization();
    const JonesMatrix transfer = cfg.transfer_matrix();
    const PlateOrder order = cfg.plate_order();
    const std::string dir = prepare_out(opt, cfg);

    const ContrastMap map =
        contrast_scan(e0, transfer, eps, kPi / std::round(n), order, opt.threads);
    write_contrast_csv(map, join(dir, "contrast.csv"));
    if (cfg.flag("output.svg")) write_contrast_svg(map, join(dir, "heatmap.svg"));

    std::string report = fmt::format("impurity = {:.10g}\ngrid_step_deg = {:.10g}\n", eps, step_deg);
    std::string summary;
    for (const auto& [label, target] : {std::pair{"plus", ContrastTarget::MaximizeRplus},
                                       std::pair{"minus", ContrastTarget::MaximizeRminus}}) {
        const OptimalSetting best = optimal_setting(map, target);
        const ContrastEntry& e = map.entries[best.index];
        const JonesVector far = far_field_to_local(e0, best.setting, JonesMatrix::identity(), order);
        const JonesVector local = far_field_to_local(e0, best.setting, transfer, order);
        const Stokes sf = stokes(far), sl = stokes(local);
        report += fmt::format(
            "\n[optimum_{0}]\nhwp_deg = {1}\nqwp_deg = {2}\nratio = {3:.10g}\nfloored = {4}\n"
            "r_plus = {5:.10g}\nr_minus = {6:.10g}\nfar_field_stokes = {7:.6f} {8:.6f} {9:.6f}\n"
            "local_stokes = {10:.6f} {11:.6f} {12:.6f}\n",
            label, deg(best.setting.hwp_angle), deg(best.setting.qwp_angle), best.ratio, e.floored,
            e.r_plus, e.r_minus, sf.s1, sf.s2, sf.s3, sl.s1, sl.s2, sl.s3);
        summary += fmt::format("optimum {}: ratio {:.4g} at hwp {} qwp {}\n", label, best.ratio,
                               deg(best.setting.hwp_angle), deg(best.setting.qwp_angle));
    }
    write_text(join(dir, "optimum.txt"), report);
    std::cout << summary;
    return kExitOk;
}

int cmd_calibrate_rotation(const CliOptions& opt) {
    const ExperimentConfig cfg = load_config(opt);
    const SystemParams sys = cfg.system();
    const LevelDiagram diagram = sys.diagram();
    const double target = cfg.number("calibration.target_angle_deg") * kPi / 180.0;
    const double coef = cfg.number("pulses.power_coefficient");
    RotationPulse pulse = cfg.rotation();
    pulse.peak_rabi = peak_rabi_for_angle(target, pulse);
    const RotationLaserSideEffects side =
        cfg.side_effects_enabled() ? cfg.side_effects() : RotationLaserSideEffects::none();
    const RateSet rates = segment_rates(sys, diagram, side, false);
    const std::string dir = prepare_out(opt, cfg);

    const EffectiveRotation er = effective_rotation(pulse, diagram);
    std::string report = fmt::format(
        "target_angle_deg = {:.10g}\npower_uw = {:.10g}\npeak_rabi_rad_per_ns = {:.10g}\n"
        "rabi_over_detuning = {:.6g}\nfield_fwhm_ps = {:.10g}\neffective_angle_deg = {:.10g}\n"
        "effective_fidelity = {:.10g}\n",
        target * 180.0 / kPi, calibrate_power(target, coef), pulse.peak_rabi,
        pulse.peak_rabi / std::abs(pulse.detuning), pulse.field_fwhm() * 1e3,
        er.angle * 180.0 / kPi,
        rotation_fidelity(pulse, diagram, side, rates, SimulationMode::Effective));
    if (cfg.flag("calibration.full_integration")) {
        const auto map = rotation_ground_map(pulse, diagram, side, rates, SimulationMode::FullIntegration);
        const double angle = map_rotation_angle(map);
        report += fmt::format("full_angle_deg = {:.10g}\nfull_angle_rel_error = {:.6g}\nfull_fidelity = {:.10g}\n",
                              angle * 180.0 / kPi, (angle - er.angle) / er.angle,
                              map_fidelity(er.unitary, map));
    }
    write_text(join(dir, "calibration.txt"), report);
    std::cout << report;
    return kExitOk;
}

int cmd_fit(const CliOptions& opt, const std::string& data_path, const std::string& model_name) {
    if (model_name != "gauss_cosine" && model_name != "rabi_power")
        throw DomainError(fmt::format("unknown model '{}'; valid models: gauss_cosine, rabi_power",
                                      model_name));
    const ExperimentConfig cfg = load_config(opt);
    const DataSeries data = read_data_csv(data_path);
    const GaussCosineFitOptions gopt = cfg.fit_options();
    const std::string dir = prepare_out(opt, cfg);

    const FitResult fit =
        model_name == "gauss_cosine" ? fit_gauss_cosine(data, gopt) : fit_rabi_power(data, gopt.lm);
    write_text(join(dir, "fit.txt"), fmt::format("status = {}\n", fit.converged ? "converged" : "not_converged") +
                                         fit_result_text(fit));
    std::cout << fmt::format("{:<10} {:>18} {:>14}\n", "param", "value", "stderr");
    for (std::size_t i = 0; i < fit.names.size(); ++i)
        std::cout << fmt::format("{:<10} {:>18.10g} {:>14.4g}\n", fit.names[i], fit.params[i],
                                 fit.uncertainties[i]);
    std::cout << fmt::format("chi2_red = {:.6g}, converged = {}\n", fit.chi2_reduced, fit.converged);
    return fit.converged ? kExitOk : kExitNumeric;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Quantum-dot spin initialization, rotation and Ramsey simulator"};
    app.require_subcommand(1);
    CliOptions opt;
    std::string svg;
    std::uint64_t seed = 0;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "INI config file (defaults if omitted)")
            ->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out_dir, "output directory");
        sub->add_option("--seed", seed, "override overhauser.seed");
        sub->add_option("--threads", opt.threads, "worker threads (0 = all cores)");
        sub->add_option("--svg", svg, "write SVG plots")->check(CLI::IsMember({"on", "off"}));
    };
    auto* ramsey = app.add_subcommand("simulate-ramsey", "Ramsey fringe, fit and contrast");
    auto* pumping = app.add_subcommand("simulate-pumping", "optical pumping trajectory and F_init");
    auto* scan = app.add_subcommand("scan-polarization", "waveplate contrast map");
    auto* calib = app.add_subcommand("calibrate-rotation", "pulse power and rotation fidelity");
    auto* fit = app.add_subcommand("fit", "fit a CSV data file");
    for (auto* s : {ramsey, pumping, scan, calib, fit}) common(s);
    std::string data_path, model_name;
    fit->add_option("data", data_path, "CSV with x,y[,sigma]")->required();
    fit->add_option("model", model_name, "gauss_cosine | rabi_power")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }
    for (auto* s : {ramsey, pumping, scan, calib, fit})
        if (s->parsed() && s->count("--seed")) opt.seed = seed;
    if (!svg.empty()) opt.svg = svg == "on";

    try {
        if (ramsey->parsed()) return cmd_simulate_ramsey(opt);
        if (pumping->parsed()) return cmd_simulate_pumping(opt);
        if (scan->parsed()) return cmd_scan_polarization(opt);
        if (calib->parsed()) return cmd_calibrate_rotation(opt);
        return cmd_fit(opt, data_path, model_name);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitInput;
    } catch (const CsvError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitInput;
    } catch (const FitError& e) {
        std::cerr << "fit failed: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const IntegrationError& e) {
        std::cerr << "integration failed: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
}

}  // namespace qdspin
