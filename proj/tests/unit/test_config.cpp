#include "doctest.h"

#include <string>

#include "qdspin/config.hpp"
#include "qdspin/errors.hpp"

using namespace qdspin;

namespace {

ConfigError parse_error(const std::string& text) {
    try {
        ExperimentConfig::parse(text, "t.ini");
    } catch (const ConfigError& e) {
        return e;
    }
    FAIL("no ConfigError for: " << text);
    return ConfigError("", 0, "");
}

}  // namespace

TEST_CASE("defaults assemble the standard experiment") {
    const ExperimentConfig c;
    const SystemParams s = c.system();
    CHECK(s.field_tesla == 2.0);
    CHECK(s.g.electron_inplane == doctest::Approx(kDefaultElectronG).epsilon(1e-15));
    CHECK(s.resonant_rabi == doctest::Approx(kDefaultPumpRabi).epsilon(1e-12));
    CHECK(s.kappa_spinflip == doctest::Approx(kDefaultSpinFlip).epsilon(1e-12));
    CHECK(s.gamma_decay == doctest::Approx(kDefaultGammaDecay).epsilon(1e-12));
    CHECK(c.rotation().peak_rabi == doctest::Approx(default_rotation_rabi()).epsilon(1e-12));
    CHECK(c.overhauser().sigma_delta == doctest::Approx(std::sqrt(2.0) / 2.2).epsilon(1e-14));
    const RamseyConfig r = c.ramsey();
    CHECK(r.delays.size() == 400);
    CHECK(r.delays.back() == doctest::Approx(3.0));
    CHECK(r.ensemble_size == 2000);
    CHECK_FALSE(r.side_effects.has_value());
    const RotationLaserSideEffects side = c.side_effects();
    CHECK(side.trion_excitation_prob == doctest::Approx(kDefaultTrionExcitation).epsilon(1e-14));
    CHECK(side.repump_broadening_factor == doctest::Approx(kDefaultRepumpBroadening).epsilon(1e-14));
    CHECK(c.plate_order() == PlateOrder::HalfThenQuarter);
}

TEST_CASE("serialize then parse is the identity") {
    const ExperimentConfig d;
    CHECK(ExperimentConfig::parse(d.serialize()).serialize() == d.serialize());
    const std::string text =
        "[system]\nfield_tesla = 1.0\ngeometry = faraday\nimpurity = 0.316 # eps\n"
        "[overhauser]\nsigma_delta = 0.5\nseed = 77\n"
        "[pulses]\nrotation_peak_rabi = 700\nmode = full\n"
        "[readout]\nwindow_start_ns = 0.5\nwindow_end_ns = 4\n"
        "[polarization]\ntransfer = custom\nt00_re = 1\nt00_im = 0\nt01_re = 0\nt01_im = 0.1\n"
        "t10_re = 0\nt10_im = 0\nt11_re = 0.5\nt11_im = 0\n"
        "[side_effects]\nenabled = true\n";
    const ExperimentConfig c = ExperimentConfig::parse(text);
    const ExperimentConfig back = ExperimentConfig::parse(c.serialize());
    CHECK(back.serialize() == c.serialize());
    CHECK(back.overhauser().sigma_delta == 0.5);
    CHECK(back.overhauser().seed == 77);
    CHECK(back.rotation().peak_rabi == 700.0);
    CHECK(back.ramsey().mode == SimulationMode::FullIntegration);
    CHECK(back.ramsey().side_effects.has_value());
    CHECK(back.readout().window->second == 4.0);
    CHECK(back.transfer_matrix().m(0, 1) == cplx(0.0, 0.1));
    CHECK(back.system().geometry == Geometry::Faraday);
}

TEST_CASE("syntax errors name the line and key") {
    ConfigError e = parse_error("[scan]\n\nbogus = 1\n");
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);

    e = parse_error("[nowhere]\n");
    CHECK(e.line() == 1);
    e = parse_error("[scan]\ntau_points = 10\ntau_points = 20\n");
    CHECK(e.line() == 3);
    CHECK(e.key() == "scan.tau_points");
    e = parse_error("[scan]\ntau_points = many\n");
    CHECK(e.key() == "scan.tau_points");
    e = parse_error("[scan]\ntau_points = 2.5\n");
    CHECK(e.line() == 2);
    e = parse_error("[system]\nfield_tesla =\n");
    CHECK(e.key() == "system.field_tesla");
    e = parse_error("[system]\nimpurity = 0.9\n");
    CHECK(e.key() == "system.impurity");
    e = parse_error("[system]\nrepump = maybe\n");
    CHECK(e.key() == "system.repump");
    e = parse_error("[system]\ngeometry = oblique\n");
    CHECK(e.key() == "system.geometry");
    e = parse_error("field_tesla = 1\n");
    CHECK(e.line() == 1);
    e = parse_error("[system\n");
    CHECK(e.line() == 1);
}

TEST_CASE("cross-key rules") {
    CHECK(parse_error("[overhauser]\nt2star_ns = 2\nsigma_delta = 0.7\n").key() == "overhauser.sigma_delta");
    CHECK(parse_error("[pulses]\nrotation_angle_deg = 90\nrotation_peak_rabi = 10\n").key() ==
          "pulses.rotation_peak_rabi");
    CHECK(parse_error("[readout]\nwindow_start_ns = 1\n").key() == "readout.window_start_ns");
    CHECK(parse_error("[polarization]\ntransfer = custom\nt00_re = 1\n").key().find("polarization.t") == 0);
    CHECK(parse_error("[polarization]\nt00_re = 1\n").key() == "polarization.t00_re");
    CHECK(parse_error("[scan]\ntau_start_ns = 2\ntau_stop_ns = 1\n").key() == "scan.tau_stop_ns");

    const std::string singular =
        "[polarization]\ntransfer = custom\nt00_re = 1\nt00_im = 0\nt01_re = 2\nt01_im = 0\n"
        "t10_re = 1\nt10_im = 0\nt11_re = 2\nt11_im = 0\n";
    CHECK_THROWS_AS(ExperimentConfig::parse(singular).transfer_matrix(), ConfigError);
}

TEST_CASE("builders report the offending key") {
    ExperimentConfig c;
    c.set("readout.window_start_ns", "3");
    c.set("readout.window_end_ns", "2");
    try {
        (void)c.readout();
        FAIL("inverted window accepted");
    } catch (const ConfigError& e) {
        CHECK(e.key().find("readout.window") == 0);
    }
    CHECK_THROWS_AS(c.set("scan.nope", "1"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/qdspin.ini"), ConfigError);
}
