#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "collapse/spectra.hpp"

namespace collapse::app {

inline constexpr int kConfigVersion = 1;

// Every offending field of a config, reported together.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<std::string> issues);
    const std::vector<std::string>& issues() const { return issues_; }

private:
    std::vector<std::string> issues_;
};

enum class Mode { theory, simulate, compare, iterate, pareto };
enum class SpectrumKind { isotropic, power_law, explicit_values };
enum class PriorKind { isotropic, explicit_values };
enum class ShiftKind { isotropic, inverse_covariance, explicit_values };

const char* mode_name(Mode m);

struct ModelSpec {
    SpectrumKind spectrum = SpectrumKind::isotropic;
    double exponent = 1.0;
    std::vector<double> spectrum_values;
    PriorKind prior = PriorKind::isotropic;
    double r2 = 1.0;
    std::vector<double> prior_values;
    ShiftKind shift = ShiftKind::isotropic;
    std::vector<double> shift_values;
    double sigma1 = 1.0;  // label noise standard deviations
    double sigma2 = 1.0;
};

struct RegimeSpec {
    int d = 0;
    std::vector<double> n;
    std::vector<double> phi;
    std::vector<double> m;
    std::vector<double> psi;
    std::vector<double> p2;
    std::vector<double> n2;
    std::vector<double> c2;
    std::vector<double> alpha;
    double lambda = 1e-8;
    int steps = 5;
};

struct Scenario {
    std::string name;
    Mode mode = Mode::theory;
    ModelSpec model;
    RegimeSpec regime;
    int trials = 5;
    std::uint64_t seed = 1;
};

struct Config {
    int version = kConfigVersion;
    std::vector<Scenario> scenarios;
    std::string out_dir = "results";
    bool plot_script = false;
};

Config parse_config(const nlohmann::json& doc);
Config parse_config_text(const std::string& text);
Config load_config(const std::string& path);

// Model at a given synthetic quality c2 = tr(Sigma Delta).
MixtureModel build_model(const ModelSpec& spec, int d, double c2);

// Shift prior at unit quality, the base for common random numbers across c2.
Array unit_shift(const ModelSpec& spec, const Array& sigma);

}  // namespace collapse::app
