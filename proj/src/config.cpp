#include "config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "grid.hpp"

namespace collapse::app {

using nlohmann::json;

namespace {

std::string join_issues(const std::vector<std::string>& issues) {
    std::string out = "invalid configuration:";
    for (const auto& s : issues) out += "\n  " + s;
    return out;
}

class Reader {
public:
    std::vector<std::string> issues;

    void fail(const std::string& where, const std::string& what) { issues.push_back(where + ": " + what); }

    template <class T>
    std::optional<T> get(const json& obj, const std::string& key, const std::string& where) {
        if (!obj.contains(key)) return std::nullopt;
        try {
            return obj.at(key).get<T>();
        } catch (const std::exception&) {
            fail(where + "." + key, "has the wrong type");
            return std::nullopt;
        }
    }

    std::vector<double> grid(const json& obj, const std::string& key, const std::string& where) {
        if (!obj.contains(key)) return {};
        try {
            return parse_grid(obj.at(key));
        } catch (const std::exception& e) {
            fail(where + "." + key, e.what());
            return {};
        }
    }

    std::vector<double> values(const json& obj, const std::string& where) {
        if (!obj.contains("values") || !obj.at("values").is_array()) {
            fail(where + ".values", "explicit kind needs a list of values");
            return {};
        }
        std::vector<double> out;
        for (const auto& v : obj.at("values")) {
            if (!v.is_number()) {
                fail(where + ".values", "must contain numbers only");
                return {};
            }
            out.push_back(v.get<double>());
        }
        return out;
    }
};

void check_grid(Reader& r, const std::vector<double>& g, const std::string& where, double lo, double hi,
                bool lo_open) {
    for (double v : g) {
        const bool ok = std::isfinite(v) && (lo_open ? v > lo : v >= lo) && v <= hi;
        if (!ok) {
            std::ostringstream os;
            os << "value " << v << " outside " << (lo_open ? "(" : "[") << lo << ", " << hi << "]";
            r.fail(where, os.str());
            return;
        }
    }
}

ModelSpec parse_model(Reader& r, const json& obj, const std::string& where) {
    ModelSpec m;
    if (!obj.is_object()) {
        r.fail(where, "must be an object");
        return m;
    }
    if (obj.contains("spectrum")) {
        const json& s = obj.at("spectrum");
        const std::string w = where + ".spectrum";
        const std::string kind = r.get<std::string>(s, "kind", w).value_or("isotropic");
        if (kind == "isotropic") m.spectrum = SpectrumKind::isotropic;
        else if (kind == "power_law") {
            m.spectrum = SpectrumKind::power_law;
            m.exponent = r.get<double>(s, "exponent", w).value_or(1.0);
            if (!(m.exponent >= 0.0)) r.fail(w + ".exponent", "must be nonnegative");
        } else if (kind == "explicit") {
            m.spectrum = SpectrumKind::explicit_values;
            m.spectrum_values = r.values(s, w);
        } else r.fail(w + ".kind", "unknown spectrum kind '" + kind + "'");
    }
    if (obj.contains("prior")) {
        const json& s = obj.at("prior");
        const std::string w = where + ".prior";
        const std::string kind = r.get<std::string>(s, "kind", w).value_or("isotropic");
        if (kind == "isotropic") {
            m.prior = PriorKind::isotropic;
            m.r2 = r.get<double>(s, "r2", w).value_or(1.0);
            if (!(m.r2 >= 0.0)) r.fail(w + ".r2", "must be nonnegative");
        } else if (kind == "explicit") {
            m.prior = PriorKind::explicit_values;
            m.prior_values = r.values(s, w);
        } else r.fail(w + ".kind", "unknown prior kind '" + kind + "'");
    }
    if (obj.contains("shift")) {
        const json& s = obj.at("shift");
        const std::string w = where + ".shift";
        const std::string kind = r.get<std::string>(s, "kind", w).value_or("isotropic");
        if (kind == "isotropic") m.shift = ShiftKind::isotropic;
        else if (kind == "inverse_covariance") m.shift = ShiftKind::inverse_covariance;
        else if (kind == "explicit") {
            m.shift = ShiftKind::explicit_values;
            m.shift_values = r.values(s, w);
        } else r.fail(w + ".kind", "unknown shift kind '" + kind + "'");
    }
    m.sigma1 = r.get<double>(obj, "sigma1", where).value_or(1.0);
    m.sigma2 = r.get<double>(obj, "sigma2", where).value_or(1.0);
    if (!(m.sigma1 >= 0.0)) r.fail(where + ".sigma1", "must be nonnegative");
    if (!(m.sigma2 >= 0.0)) r.fail(where + ".sigma2", "must be nonnegative");
    return m;
}

Scenario parse_scenario(Reader& r, const json& obj, const std::string& where) {
    Scenario sc;
    if (!obj.is_object()) {
        r.fail(where, "must be an object");
        return sc;
    }
    sc.name = r.get<std::string>(obj, "name", where).value_or("");
    if (sc.name.empty()) r.fail(where + ".name", "is required");

    const std::string mode = r.get<std::string>(obj, "mode", where).value_or("theory");
    if (mode == "theory") sc.mode = Mode::theory;
    else if (mode == "simulate") sc.mode = Mode::simulate;
    else if (mode == "compare") sc.mode = Mode::compare;
    else if (mode == "iterate") sc.mode = Mode::iterate;
    else if (mode == "pareto") sc.mode = Mode::pareto;
    else r.fail(where + ".mode", "unknown mode '" + mode + "'");

    sc.model = parse_model(r, obj.value("model", json::object()), where + ".model");

    const json reg = obj.value("regime", json::object());
    const std::string w = where + ".regime";
    RegimeSpec& g = sc.regime;
    g.d = r.get<int>(reg, "d", w).value_or(0);
    if (g.d < 1) r.fail(w + ".d", "is required and must be >= 1");
    g.n = r.grid(reg, "n", w);
    g.phi = r.grid(reg, "phi", w);
    g.m = r.grid(reg, "m", w);
    g.psi = r.grid(reg, "psi", w);
    g.p2 = r.grid(reg, "p2", w);
    g.n2 = r.grid(reg, "n2", w);
    g.c2 = r.grid(reg, "c2", w);
    g.alpha = r.grid(reg, "alpha", w);
    g.lambda = r.get<double>(reg, "lambda", w).value_or(1e-8);
    g.steps = r.get<int>(reg, "steps", w).value_or(5);

    if (g.n.empty() == g.phi.empty()) r.fail(w, "exactly one of n and phi is required");
    if (!g.m.empty() && !g.psi.empty()) r.fail(w, "m and psi are mutually exclusive");
    if (!g.p2.empty() && !g.n2.empty()) r.fail(w, "p2 and n2 are mutually exclusive");
    check_grid(r, g.n, w + ".n", 1.0, 1e9, false);
    check_grid(r, g.phi, w + ".phi", 0.0, 1e6, true);
    check_grid(r, g.m, w + ".m", 1.0, 1e9, false);
    check_grid(r, g.psi, w + ".psi", 0.0, 1e6, true);
    check_grid(r, g.p2, w + ".p2", 0.0, 1.0, false);
    check_grid(r, g.n2, w + ".n2", 0.0, 1e9, false);
    check_grid(r, g.c2, w + ".c2", 0.0, 1e6, false);
    check_grid(r, g.alpha, w + ".alpha", 0.0, 1.0, false);
    if (!(g.lambda >= 0.0) || !std::isfinite(g.lambda)) r.fail(w + ".lambda", "must be finite and nonnegative");
    if (g.steps < 1) r.fail(w + ".steps", "must be >= 1");
    if (!g.alpha.empty() && (!g.m.empty() || !g.psi.empty()))
        r.fail(w, "weighted mixing (alpha) is only defined for the classical model");
    if (sc.mode == Mode::iterate && (!g.m.empty() || !g.psi.empty() || !g.alpha.empty()))
        r.fail(w, "iterate mode takes neither m/psi nor alpha");

    sc.trials = r.get<int>(obj, "trials", where).value_or(5);
    const bool needs_trials = sc.mode != Mode::theory;
    if (sc.trials < (needs_trials ? 2 : 0)) r.fail(where + ".trials", needs_trials ? "must be >= 2" : "must be >= 0");
    sc.seed = r.get<std::uint64_t>(obj, "seed", where).value_or(1);

    const auto check_len = [&](const std::vector<double>& v, const std::string& what) {
        if (!v.empty() && static_cast<int>(v.size()) != g.d)
            r.fail(where + ".model." + what + ".values", "length must equal d");
    };
    check_len(sc.model.spectrum_values, "spectrum");
    check_len(sc.model.prior_values, "prior");
    check_len(sc.model.shift_values, "shift");
    return sc;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : std::runtime_error(join_issues(issues)), issues_(std::move(issues)) {}

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::theory: return "theory";
        case Mode::simulate: return "simulate";
        case Mode::compare: return "compare";
        case Mode::iterate: return "iterate";
        case Mode::pareto: return "pareto";
    }
    return "?";
}

Config parse_config(const json& doc) {
    Reader r;
    Config cfg;
    if (!doc.is_object()) throw ValidationError({"config: top level must be an object"});
    cfg.version = r.get<int>(doc, "version", "config").value_or(0);
    if (cfg.version != kConfigVersion)
        r.fail("config.version", "must be " + std::to_string(kConfigVersion));
    if (doc.contains("output")) {
        const json& o = doc.at("output");
        cfg.out_dir = r.get<std::string>(o, "dir", "config.output").value_or(cfg.out_dir);
        cfg.plot_script = r.get<bool>(o, "plot_script", "config.output").value_or(false);
    }
    if (doc.contains("scenarios")) {
        const json& list = doc.at("scenarios");
        if (!list.is_array() || list.empty()) r.fail("config.scenarios", "must be a non-empty list");
        else
            for (std::size_t i = 0; i < list.size(); ++i)
                cfg.scenarios.push_back(parse_scenario(r, list[i], "scenarios[" + std::to_string(i) + "]"));
    } else if (doc.contains("scenario")) {
        cfg.scenarios.push_back(parse_scenario(r, doc.at("scenario"), "scenario"));
    } else {
        r.fail("config", "needs 'scenarios' or 'scenario'");
    }
    for (std::size_t i = 0; i < cfg.scenarios.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (!cfg.scenarios[i].name.empty() && cfg.scenarios[i].name == cfg.scenarios[j].name)
                r.fail("scenarios[" + std::to_string(i) + "].name", "duplicate name '" + cfg.scenarios[i].name + "'");
    if (!r.issues.empty()) throw ValidationError(r.issues);
    return cfg;
}

Config parse_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError({std::string("config: not valid JSON (") + e.what() + ")"});
    }
    return parse_config(doc);
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError({"config: cannot open '" + path + "'"});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

namespace {

Spectrum build_sigma(const ModelSpec& spec, int d) {
    switch (spec.spectrum) {
        case SpectrumKind::isotropic: return isotropic_spectrum(d);
        case SpectrumKind::power_law: return build_power_law_spectrum(d, spec.exponent);
        case SpectrumKind::explicit_values: return Spectrum(spec.spectrum_values);
    }
    return isotropic_spectrum(d);
}

}  // namespace

Array unit_shift(const ModelSpec& spec, const Array& sigma) {
    const double d = static_cast<double>(sigma.size());
    switch (spec.shift) {
        case ShiftKind::isotropic: return Array::Constant(sigma.size(), 1.0 / sigma.sum());
        case ShiftKind::inverse_covariance: return sigma.inverse() / d;
        case ShiftKind::explicit_values: {
            const Array v = Eigen::Map<const Array>(spec.shift_values.data(), static_cast<Eigen::Index>(spec.shift_values.size()));
            const double q = (v * sigma).sum();
            if (!(q > 0.0)) throw DomainError("explicit shift must have positive quality tr(Sigma Delta)");
            return v / q;
        }
    }
    return Array::Zero(sigma.size());
}

MixtureModel build_model(const ModelSpec& spec, int d, double c2) {
    MixtureModel m;
    m.sigma = build_sigma(spec, d);
    if (spec.prior == PriorKind::isotropic) m.gamma_prior = isotropic_prior(d, spec.r2);
    else m.gamma_prior = Spectrum(spec.prior_values, SpectrumRole::signal_prior);
    m.delta = Spectrum(Array(c2 * unit_shift(spec, m.sigma.values())), SpectrumRole::shift_prior);
    m.noise1 = spec.sigma1 * spec.sigma1;
    m.noise2 = spec.sigma2 * spec.sigma2;
    m.validate();
    return m;
}

}  // namespace collapse::app
