#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qdspin/experiments.hpp"
#include "qdspin/polarization.hpp"

namespace qdspin {

/// Schema or syntax violation in a config file; carries the line (0 when not
/// tied to one) and the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, int line, std::string key)
        : std::runtime_error(what), line_(line), key_(std::move(key)) {}
    int line() const noexcept { return line_; }
    const std::string& key() const noexcept { return key_; }

private:
    int line_;
    std::string key_;
};

enum class KeyType { Number, Integer, Bool, Choice };

struct KeySpec {
    std::string section;
    std::string key;
    KeyType type = KeyType::Number;
    /// Empty default means optional (unset unless given).
    std::string default_value;
    std::vector<std::string> choices;
    std::optional<double> min;
    std::optional<double> max;
    bool min_exclusive = false;
    std::string comment;

    std::string full_name() const { return section + "." + key; }
};

/// Every accepted key, in serialization order.
const std::vector<KeySpec>& config_schema();

/// Validated key/value store over the schema; unset optional keys are absent.
class ExperimentConfig {
public:
    /// All defaults.
    ExperimentConfig();

    static ExperimentConfig parse(const std::string& text, const std::string& source = "<config>");
    static ExperimentConfig load(const std::string& path);

    /// Set a value with the same checks as parsing ("section.key").
    void set(const std::string& full_key, const std::string& value, int line = 0);
    bool has(const std::string& full_key) const;
    double number(const std::string& full_key) const;
    std::int64_t integer(const std::string& full_key) const;
    bool flag(const std::string& full_key) const;
    const std::string& text(const std::string& full_key) const;

    /// Canonical INI text; parsing it gives back an identical config.
    std::string serialize() const;

    // Assembled inputs for the experiments.
    SystemParams system() const;
    RotationPulse rotation() const;
    /// Configured values, whether or not [side_effects] is enabled for Ramsey runs.
    RotationLaserSideEffects side_effects() const;
    bool side_effects_enabled() const;
    ReadoutModel readout() const;
    OverhauserModel overhauser() const;
    RamseyConfig ramsey() const;
    JonesVector input_polarization() const;
    JonesMatrix transfer_matrix() const;
    PlateOrder plate_order() const;
    GaussCosineFitOptions fit_options() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace qdspin
