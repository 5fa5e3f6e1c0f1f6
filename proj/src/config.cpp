#include "qdspin/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace qdspin {

namespace {

KeySpec num(std::string section, std::string key, std::string def, std::optional<double> min,
            std::optional<double> max, std::string comment, bool min_exclusive = false) {
    KeySpec k;
    k.section = std::move(section);
    k.key = std::move(key);
    k.type = KeyType::Number;
    k.default_value = std::move(def);
    k.min = min;
    k.max = max;
    k.min_exclusive = min_exclusive;
    k.comment = std::move(comment);
    return k;
}

KeySpec integer(std::string section, std::string key, std::string def, double min, std::string comment) {
    KeySpec k = num(std::move(section), std::move(key), std::move(def), min, std::nullopt,
                    std::move(comment));
    k.type = KeyType::Integer;
    return k;
}

KeySpec boolean(std::string section, std::string key, std::string def, std::string comment) {
    KeySpec k;
    k.section = std::move(section);
    k.key = std::move(key);
    k.type = KeyType::Bool;
    k.default_value = std::move(def);
    k.comment = std::move(comment);
    return k;
}

KeySpec choice(std::string section, std::string key, std::string def, std::vector<std::string> choices,
               std::string comment) {
    KeySpec k;
    k.section = std::move(section);
    k.key = std::move(key);
    k.type = KeyType::Choice;
    k.default_value = std::move(def);
    k.choices = std::move(choices);
    k.comment = std::move(comment);
    return k;
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

std::vector<KeySpec> build_schema() {
    const auto none = std::nullopt;
    std::vector<KeySpec> s = {
        // system
        choice("system", "geometry", "voigt", {"voigt", "faraday"}, "field orientation"),
        num("system", "field_tesla", "2", 0.0, none, "magnetic field (T)"),
        num("system", "g_electron_inplane", fmt_double(kDefaultElectronG), -10.0, 10.0,
            "electron in-plane g (12.70 GHz at 2 T)"),
        num("system", "g_hole_inplane", "0", -10.0, 10.0, "hole in-plane g"),
        num("system", "g_electron_longitudinal", "-0.5", -10.0, 10.0, "placeholder: not measured"),
        num("system", "g_hole_longitudinal", "1", -10.0, 10.0, "placeholder: not measured"),
        num("system", "impurity", "0", 0.0, 0.5, "weak-diagonal amplitude eps (Faraday)"),
        num("system", "trion_linewidth_ghz", "0.2", 0.0, none,
            "lifetime-limited linewidth; decay rate = 2 pi x this (inferred)"),
        num("system", "branching_to_ground0", "0.5", 0.0, 1.0, "trion decay fraction into ground 0"),
        num("system", "spinflip_per_us", fmt_double(kDefaultSpinFlip * 1e3), 0.0, none,
            "ground-state spin-flip rate"),
        num("system", "linewidth_ghz", "1.8", 0.0, none, "homogeneous linewidth for off-resonant repump",
            true),
        num("system", "spin_dephasing_per_ns", "0", 0.0, none, "Markovian spin dephasing"),
        num("system", "resonant_rabi", fmt_double(kDefaultPumpRabi), 0.0, none,
            "init/readout laser Rabi frequency (rad/ns)"),
        boolean("system", "repump", "true", "off-resonant repumping by the resonant laser"),
        // pulses
        num("pulses", "rotation_width_ps", "6", 0.0, none, "rotation pulse width", true),
        choice("pulses", "width_convention", "field", {"field", "intensity"},
               "width is the FWHM of the field or of the intensity"),
        num("pulses", "rotation_detuning_thz", "-0.8", none, none, "rotation laser detuning"),
        num("pulses", "rotation_angle_deg", "90", 0.0, none, "sets the peak Rabi frequency"),
        num("pulses", "rotation_peak_rabi", "", 0.0, none, "optional; overrides rotation_angle_deg"),
        choice("pulses", "rotation_helicity", "plus", {"plus", "minus"}, "circular polarization"),
        num("pulses", "window_fwhms", "4", 0.0, none, "integration window in field FWHMs", true),
        num("pulses", "init_duration_ns", "5", 0.0, none, "init pulse", true),
        num("pulses", "readout_duration_ns", "5", 0.0, none, "readout pulse", true),
        num("pulses", "guard_before_ns", "5", 0.0, none, "init end to first rotation centre"),
        num("pulses", "guard_after_ns", "2", 0.0, none, "second rotation centre to readout"),
        num("pulses", "power_coefficient", fmt_double(kDefaultPowerCoefficient), 0.0, none,
            "rotation angle per sqrt(uW)", true),
        choice("pulses", "mode", "effective", {"effective", "full"}, "Ramsey simulation mode"),
        boolean("pulses", "init_from_steady_state", "true", "init starts in the pumping steady state"),
        // overhauser
        num("overhauser", "t2star_ns", "2.2", 0.0, none, "sets sigma_delta = sqrt(2)/T2*", true),
        num("overhauser", "sigma_delta", "", 0.0, none, "optional; overrides t2star_ns (rad/ns)"),
        integer("overhauser", "seed", "1", 0.0, "ensemble seed"),
        // side effects
        boolean("side_effects", "enabled", "false", "rotation-laser side effects"),
        num("side_effects", "trion_excitation_prob", fmt_double(kDefaultTrionExcitation), 0.0, 1.0,
            "per-pulse trion kick"),
        num("side_effects", "added_spinflip_per_us", fmt_double(kDefaultAddedSpinFlip * 1e3), 0.0,
            none, "extra spin flips"),
        num("side_effects", "repump_broadening_factor", fmt_double(kDefaultRepumpBroadening), 1.0,
            none, "repump linewidth multiplier"),
        // readout
        num("readout", "collection_efficiency", fmt_double(kDefaultCollectionEfficiency), 0.0, 1.0,
            "beta-factor x detection"),
        num("readout", "window_start_ns", "", 0.0, none, "optional, relative to readout start"),
        num("readout", "window_end_ns", "", 0.0, none, "optional, relative to readout start"),
        num("readout", "background", "0", 0.0, none, "constant additive background"),
        // scan
        num("scan", "tau_start_ns", "0", 0.0, none, "first delay"),
        num("scan", "tau_stop_ns", "3", 0.0, none, "last delay"),
        integer("scan", "tau_points", "400", 1.0, "delay grid size"),
        integer("scan", "ensemble_size", "2000", 1.0, "Overhauser samples"),
        num("scan", "noise_fraction", "0", 0.0, none,
            "Gaussian noise, fraction of the fringe amplitude"),
        boolean("scan", "allow_long_run", "false", "bypass the run-size guard"),
        num("scan", "waveplate_step_deg", "1", 0.0, 180.0, "waveplate grid step; must divide 180",
            true),
        // polarization
        num("polarization", "input_angle_deg", "0", none, none, "linear far-field input"),
        choice("polarization", "plate_order", "hwp_qwp", {"hwp_qwp", "qwp_hwp"},
               "order the beam meets the plates"),
        choice("polarization", "transfer", "default", {"default", "identity", "custom"},
               "far-field to dot transfer matrix"),
    };
    for (const char* e : {"t00", "t01", "t10", "t11"})
        for (const char* part : {"re", "im"})
            s.push_back(num("polarization", fmt::format("{}_{}", e, part), "", none, none,
                            "custom transfer entry"));
    const std::vector<KeySpec> tail = {
        // pumping
        num("pumping", "duration_ns", "50", 0.0, none, "pumping window", true),
        num("pumping", "dt_ns", "0.001", 0.0, none, "RK4 step", true),
        boolean("pumping", "rotation_laser", "false", "include rotation-laser side effects"),
        integer("pumping", "record_stride", "10", 1.0, "keep every n-th state"),
        // calibration
        num("calibration", "target_angle_deg", "90", 0.0, none, "angle to calibrate"),
        boolean("calibration", "full_integration", "true", "also integrate the pulse in full"),
        // fit
        boolean("fit", "background_subtract", "true", "mean-centre and hold B = 0"),
        boolean("fit", "free_exponent", "false", "fit the envelope exponent (diagnostic)"),
        integer("fit", "max_iter", "500", 1.0, "LM iteration budget"),
        num("fit", "tol", "1e-10", 0.0, none, "LM tolerance", true),
        // output
        boolean("output", "svg", "true", "write SVG plots"),
    };
    s.insert(s.end(), tail.begin(), tail.end());
    return s;
}

const KeySpec* find_spec(const std::string& full) {
    for (const auto& k : config_schema())
        if (k.full_name() == full) return &k;
    return nullptr;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string& v) {
    double out = 0.0;
    const char* first = v.data();
    const char* last = v.data() + v.size();
    if (!v.empty() && v.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last || !std::isfinite(out)) return std::nullopt;
    return out;
}

std::optional<bool> parse_bool(const std::string& v) {
    if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "off" || v == "no" || v == "0") return false;
    return std::nullopt;
}

std::string where(int line) { return line > 0 ? fmt::format("line {}: ", line) : std::string(); }

// Canonical form of a validated value.
std::string canonical(const KeySpec& spec, const std::string& raw, int line) {
    const std::string name = spec.full_name();
    switch (spec.type) {
        case KeyType::Bool: {
            const auto b = parse_bool(raw);
            if (!b)
                throw ConfigError(fmt::format("{}key '{}': expected true/false, got '{}'", where(line), name, raw),
                                  line, name);
            return *b ? "true" : "false";
        }
        case KeyType::Choice: {
            if (std::find(spec.choices.begin(), spec.choices.end(), raw) == spec.choices.end()) {
                std::string opts;
                for (const auto& c : spec.choices) opts += (opts.empty() ? "" : ", ") + c;
                throw ConfigError(fmt::format("{}key '{}': '{}' is not one of {}", where(line), name, raw, opts),
                                  line, name);
            }
            return raw;
        }
        case KeyType::Number:
        case KeyType::Integer: {
            const auto d = parse_double(raw);
            if (!d)
                throw ConfigError(fmt::format("{}key '{}': '{}' is not a finite number", where(line), name, raw),
                                  line, name);
            if (spec.type == KeyType::Integer && (std::floor(*d) != *d || std::abs(*d) > 9e15))
                throw ConfigError(fmt::format("{}key '{}': '{}' is not an integer", where(line), name, raw),
                                  line, name);
            const bool below = spec.min && (spec.min_exclusive ? !(*d > *spec.min) : !(*d >= *spec.min));
            const bool above = spec.max && !(*d <= *spec.max);
            if (below || above) {
                std::string range;
                if (spec.min) range += fmt::format("{} {}", spec.min_exclusive ? ">" : ">=", *spec.min);
                if (spec.max) range += fmt::format("{}<= {}", range.empty() ? "" : " and ", *spec.max);
                throw ConfigError(fmt::format("{}key '{}': {} out of range (must be {})", where(line), name,
                                              raw, range),
                                  line, name);
            }
            return spec.type == KeyType::Integer ? fmt::format("{}", static_cast<std::int64_t>(*d))
                                                 : fmt_double(*d);
        }
    }
    return raw;
}

}  // namespace

const std::vector<KeySpec>& config_schema() {
    static const std::vector<KeySpec> schema = build_schema();
    return schema;
}

ExperimentConfig::ExperimentConfig() {
    for (const auto& k : config_schema())
        if (!k.default_value.empty()) values_[k.full_name()] = canonical(k, k.default_value, 0);
}

void ExperimentConfig::set(const std::string& full_key, const std::string& value, int line) {
    const KeySpec* spec = find_spec(full_key);
    if (!spec) throw ConfigError(fmt::format("{}unknown key '{}'", where(line), full_key), line, full_key);
    values_[full_key] = canonical(*spec, value, line);
    // the optional member of an exclusive pair replaces its defaulted partner
    static const std::map<std::string, std::string> replaces = {
        {"overhauser.sigma_delta", "overhauser.t2star_ns"},
        {"pulses.rotation_peak_rabi", "pulses.rotation_angle_deg"}};
    if (const auto it = replaces.find(full_key); it != replaces.end()) values_.erase(it->second);
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& source) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::set<std::string> seen;
    std::set<std::string> sections;
    for (const auto& k : config_schema()) sections.insert(k.section);
    int line = 0;
    try {
        while (std::getline(in, raw)) {
            ++line;
            std::string s = raw;
            if (const auto hash = s.find('#'); hash != std::string::npos) s.erase(hash);
            s = trim(s);
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    throw ConfigError(fmt::format("line {}: malformed section header '{}'", line, s), line, s);
                section = trim(s.substr(1, s.size() - 2));
                if (!sections.count(section))
                    throw ConfigError(fmt::format("line {}: unknown section [{}]", line, section), line, section);
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError(fmt::format("line {}: expected 'key = value', got '{}'", line, s), line, s);
            const std::string key = trim(s.substr(0, eq));
            const std::string value = trim(s.substr(eq + 1));
            if (section.empty())
                throw ConfigError(fmt::format("line {}: key '{}' appears before any [section]", line, key),
                                  line, key);
            const std::string full = section + "." + key;
            if (!find_spec(full))
                throw ConfigError(fmt::format("line {}: unknown key '{}' in [{}]", line, key, section), line, full);
            if (!seen.insert(full).second)
                throw ConfigError(fmt::format("line {}: duplicate key '{}'", line, full), line, full);
            if (value.empty())
                throw ConfigError(fmt::format("line {}: key '{}' has no value", line, full), line, full);
            cfg.set(full, value, line);
        }
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what(), e.line(), e.key());
    }
    auto both = [&](const char* a, const char* b) {
        if (seen.count(a) && seen.count(b))
            throw ConfigError(fmt::format("{}: keys '{}' and '{}' are mutually exclusive", source, a, b), 0, b);
    };
    both("overhauser.t2star_ns", "overhauser.sigma_delta");
    both("pulses.rotation_angle_deg", "pulses.rotation_peak_rabi");
    if (cfg.has("readout.window_start_ns") != cfg.has("readout.window_end_ns"))
        throw ConfigError(source + ": readout.window_start_ns and readout.window_end_ns must be given together",
                          0, "readout.window_start_ns");
    const bool custom = cfg.text("polarization.transfer") == "custom";
    for (const char* e : {"t00", "t01", "t10", "t11"})
        for (const char* part : {"re", "im"}) {
            const std::string k = fmt::format("polarization.{}_{}", e, part);
            if (custom && !cfg.has(k))
                throw ConfigError(fmt::format("{}: transfer = custom requires '{}'", source, k), 0, k);
            if (!custom && cfg.has(k))
                throw ConfigError(fmt::format("{}: key '{}' is only used with transfer = custom", source, k), 0, k);
        }
    if (cfg.number("scan.tau_stop_ns") < cfg.number("scan.tau_start_ns"))
        throw ConfigError(source + ": scan.tau_stop_ns must be >= scan.tau_start_ns", 0, "scan.tau_stop_ns");
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path, 0, "");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

bool ExperimentConfig::has(const std::string& k) const { return values_.count(k) != 0; }

const std::string& ExperimentConfig::text(const std::string& k) const {
    const auto it = values_.find(k);
    if (it == values_.end()) throw ConfigError("config key '" + k + "' is not set", 0, k);
    return it->second;
}

double ExperimentConfig::number(const std::string& k) const { return *parse_double(text(k)); }

std::int64_t ExperimentConfig::integer(const std::string& k) const {
    return static_cast<std::int64_t>(number(k));
}

bool ExperimentConfig::flag(const std::string& k) const { return text(k) == "true"; }

std::string ExperimentConfig::serialize() const {
    std::string out;
    std::string section;
    for (const auto& k : config_schema()) {
        if (k.section != section) {
            out += fmt::format("{}[{}]\n", section.empty() ? "" : "\n", k.section);
            section = k.section;
        }
        const auto it = values_.find(k.full_name());
        if (it == values_.end())
            out += fmt::format("# {} =   # {}\n", k.key, k.comment);
        else
            out += fmt::format("{} = {}   # {}\n", k.key, it->second, k.comment);
    }
    return out;
}

// --- assembly -------------------------------------------------------------------

namespace {

template <typename F>
auto with_key(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const DomainError& e) {
        throw ConfigError(fmt::format("key '{}': {}", key, e.what()), 0, key);
    }
}

}  // namespace

SystemParams ExperimentConfig::system() const {
    SystemParams s;
    s.geometry = geometry_from_string(text("system.geometry"));
    s.field_tesla = number("system.field_tesla");
    s.g.electron_inplane = number("system.g_electron_inplane");
    s.g.hole_inplane = number("system.g_hole_inplane");
    s.g.electron_longitudinal = number("system.g_electron_longitudinal");
    s.g.hole_longitudinal = number("system.g_hole_longitudinal");
    s.impurity = number("system.impurity");
    if (s.impurity >= 0.5)
        throw ConfigError("key 'system.impurity': must be < 0.5", 0, "system.impurity");
    s.gamma_decay = ghz_to_angular(number("system.trion_linewidth_ghz"));
    const double b0 = number("system.branching_to_ground0");
    s.branching = {{{b0, 1.0 - b0}, {b0, 1.0 - b0}}};
    s.kappa_spinflip = per_us_to_per_ns(number("system.spinflip_per_us"));
    s.gamma_line = ghz_to_angular(number("system.linewidth_ghz"));
    s.gamma_spin_dephasing = number("system.spin_dephasing_per_ns");
    s.resonant_rabi = number("system.resonant_rabi");
    s.repump = flag("system.repump");
    with_key("system", [&] {
        s.validate();
        return 0;
    });
    return s;
}

RotationPulse ExperimentConfig::rotation() const {
    RotationPulse p;
    p.width = ps_to_ns(number("pulses.rotation_width_ps"));
    p.convention = text("pulses.width_convention") == "field" ? PulseWidthConvention::FieldFwhm
                                                              : PulseWidthConvention::IntensityFwhm;
    p.detuning = thz_to_angular(number("pulses.rotation_detuning_thz"));
    p.drive_dipole = text("pulses.rotation_helicity") == "plus" ? JonesVector::sigma_plus()
                                                                : JonesVector::sigma_minus();
    p.window_fwhms = number("pulses.window_fwhms");
    if (p.detuning == 0.0)
        throw ConfigError("key 'pulses.rotation_detuning_thz': must be nonzero", 0,
                          "pulses.rotation_detuning_thz");
    if (has("pulses.rotation_peak_rabi")) {
        p.peak_rabi = number("pulses.rotation_peak_rabi");
    } else {
        p.peak_rabi = peak_rabi_for_angle(number("pulses.rotation_angle_deg") * kPi / 180.0, p);
    }
    return p;
}

bool ExperimentConfig::side_effects_enabled() const { return flag("side_effects.enabled"); }

RotationLaserSideEffects ExperimentConfig::side_effects() const {
    RotationLaserSideEffects s;
    s.trion_excitation_prob = number("side_effects.trion_excitation_prob");
    s.added_spinflip_rate = per_us_to_per_ns(number("side_effects.added_spinflip_per_us"));
    s.repump_broadening_factor = number("side_effects.repump_broadening_factor");
    with_key("side_effects", [&] {
        s.validate();
        return 0;
    });
    return s;
}

ReadoutModel ExperimentConfig::readout() const {
    ReadoutModel r;
    r.collection_efficiency = number("readout.collection_efficiency");
    r.background = number("readout.background");
    if (has("readout.window_start_ns"))
        r.window = std::pair<double, double>{number("readout.window_start_ns"),
                                             number("readout.window_end_ns")};
    with_key("readout.window_end_ns", [&] {
        r.validate(number("pulses.readout_duration_ns"));
        return 0;
    });
    return r;
}

OverhauserModel ExperimentConfig::overhauser() const {
    const auto seed = static_cast<std::uint64_t>(integer("overhauser.seed"));
    if (has("overhauser.sigma_delta")) return {number("overhauser.sigma_delta"), seed};
    return OverhauserModel::from_t2star(number("overhauser.t2star_ns"), seed);
}

RamseyConfig ExperimentConfig::ramsey() const {
    RamseyConfig c;
    c.system = system();
    c.rotation = rotation();
    c.init_duration = number("pulses.init_duration_ns");
    c.readout_duration = number("pulses.readout_duration_ns");
    c.timing.guard_before = number("pulses.guard_before_ns");
    c.timing.guard_after = number("pulses.guard_after_ns");
    c.delays = linear_grid(number("scan.tau_start_ns"), number("scan.tau_stop_ns"),
                           static_cast<std::size_t>(integer("scan.tau_points")));
    if (c.delays.size() > 1 && !(c.delays[1] > c.delays[0]))
        throw ConfigError("key 'scan.tau_stop_ns': delay grid must be strictly increasing", 0,
                          "scan.tau_stop_ns");
    c.mode = mode_from_string(text("pulses.mode"));
    c.ensemble_size = static_cast<std::size_t>(integer("scan.ensemble_size"));
    c.overhauser = overhauser();
    if (side_effects_enabled()) c.side_effects = side_effects();
    c.readout = readout();
    c.init_from_steady_state = flag("pulses.init_from_steady_state");
    c.allow_long_run = flag("scan.allow_long_run");
    with_key("scan", [&] {
        c.validate();
        return 0;
    });
    return c;
}

JonesVector ExperimentConfig::input_polarization() const {
    return JonesVector::linear(number("polarization.input_angle_deg") * kPi / 180.0);
}

JonesMatrix ExperimentConfig::transfer_matrix() const {
    const std::string& kind = text("polarization.transfer");
    if (kind == "identity") return JonesMatrix::identity();
    if (kind == "default") return default_transfer_matrix();
    JonesMatrix t;
    const char* names[2][2] = {{"t00", "t01"}, {"t10", "t11"}};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            t.m(i, j) = cplx{number(fmt::format("polarization.{}_re", names[i][j])),
                             number(fmt::format("polarization.{}_im", names[i][j]))};
    const double cond = t.condition_number();
    if (!std::isfinite(cond) || cond > 1e12)
        throw ConfigError(fmt::format("custom transfer matrix is singular (condition number {:.3g})", cond),
                          0, "polarization.t00_re");
    return t;
}

PlateOrder ExperimentConfig::plate_order() const {
    return text("polarization.plate_order") == "hwp_qwp" ? PlateOrder::HalfThenQuarter
                                                         : PlateOrder::QuarterThenHalf;
}

GaussCosineFitOptions ExperimentConfig::fit_options() const {
    GaussCosineFitOptions o;
    o.background_subtract = flag("fit.background_subtract");
    o.free_exponent = flag("fit.free_exponent");
    o.lm.max_iter = static_cast<int>(integer("fit.max_iter"));
    o.lm.tol = number("fit.tol");
    return o;
}

}  // namespace qdspin
