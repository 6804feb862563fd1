#include "output.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace collapse::app {

using nlohmann::json;

const char* role_name(RowRole r) {
    switch (r) {
        case RowRole::single: return "";
        case RowRole::mixed: return "mixed";
        case RowRole::real_only: return "real_only";
    }
    return "";
}

namespace {

std::string real(double x) {
    if (std::isnan(x)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string real(const std::optional<double>& x) { return x ? real(*x) : std::string(); }

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

void write_csv(std::ostream& out, const ScenarioResult& result) {
    out << "scenario,mode,role,d,n,m,phi,gamma,psi,p2,c2,lambda,alpha,step,B,V,zeta,E_theory,E_emp_mean,E_emp_se,"
           "trials,near_threshold,seed\n";
    for (const auto& r : result.rows) {
        out << r.scenario << ',' << mode_name(r.mode) << ',' << role_name(r.role) << ',' << r.d << ',' << r.n << ','
            << (r.m ? std::to_string(*r.m) : "") << ',' << real(r.phi) << ',' << real(r.gamma()) << ','
            << real(r.psi()) << ',' << real(r.p2) << ',' << real(r.c2) << ',' << real(r.lambda) << ','
            << real(r.alpha) << ',' << (r.step > 0 ? std::to_string(r.step) : "") << ',' << real(r.bias) << ','
            << real(r.variance) << ',' << real(r.collapse) << ',' << real(r.e_theory) << ','
            << real(r.e_emp_mean) << ',' << real(r.e_emp_se) << ',' << (r.trials > 0 ? std::to_string(r.trials) : "")
            << ',' << (r.near_threshold ? 1 : 0) << ',' << r.seed << '\n';
    }
}

std::string csv_text(const ScenarioResult& result) {
    std::ostringstream os;
    write_csv(os, result);
    return os.str();
}

json sidecar(const ScenarioResult& result) {
    const Scenario& sc = result.scenario;
    json doc;
    doc["version"] = kConfigVersion;
    doc["scenario"] = sc.name;
    doc["mode"] = mode_name(sc.mode);
    doc["trials"] = sc.trials;
    doc["conventions"] = {
        {"c2", "tr(Sigma Delta), unnormalized"},
        {"sigma", "label noise standard deviations in the config; variances in formulas"},
        {"rp_variance", kRPVarianceConvention},
        {"lambda_floor", kLambdaFloor},
        {"test_error", "sum_j sigma_j (w_hat_j - w1*_j)^2"},
    };
    json rows = json::array();
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        const auto& r = result.rows[i];
        json row;
        row["row"] = i;
        row["flags"] = {{"near_threshold", r.near_threshold}, {"lambda_floored", r.lambda_floored}};
        const RiskScalars& s = r.scalars;
        json scalars = json::object();
        const std::pair<const char*, double> named[] = {
            {"kappa", s.kappa}, {"u", s.u},         {"e", s.e},
            {"tau", s.tau},     {"theta", s.theta}, {"omega", s.omega}, {"omega_prime", s.omega_prime}};
        for (const auto& [k, v] : named)
            if (std::isfinite(v)) scalars[k] = v;
        row["scalars"] = scalars;
        if (!r.error.empty()) row["error"] = r.error;
        if (!std::isnan(r.e_theory) || !r.error.empty()) row["E_theory"] = number_or_null(r.e_theory);
        rows.push_back(row);
    }
    doc["rows"] = rows;
    return doc;
}

std::string plot_script(const ScenarioResult& result, const std::string& csv_name) {
    const Scenario& sc = result.scenario;
    std::string x = "phi";
    if (sc.mode == Mode::iterate) x = "step";
    else if (!sc.regime.m.empty() || !sc.regime.psi.empty()) x = "psi";
    else if (!sc.regime.alpha.empty()) x = "alpha";
    else if (sc.mode == Mode::pareto) x = "c2";
    std::ostringstream os;
    os << "import pandas as pd\n"
          "import matplotlib.pyplot as plt\n\n"
       << "df = pd.read_csv('" << csv_name << "')\n"
       << "x = '" << x << "'\n"
       << "keys = [k for k in ('role', 'p2', 'c2', 'psi') if k != x and df[k].nunique() > 1]\n"
          "fig, ax = plt.subplots()\n"
          "groups = df.groupby(keys) if keys else [((), df)]\n"
          "for key, g in groups:\n"
          "    g = g.sort_values(x)\n"
          "    label = ', '.join(f'{k}={v}' for k, v in zip(keys, key if isinstance(key, tuple) else (key,)))\n"
          "    if g['E_theory'].notna().any():\n"
          "        line, = ax.plot(g[x], g['E_theory'], label=label)\n"
          "        color = line.get_color()\n"
          "    else:\n"
          "        color = None\n"
          "    if g['E_emp_mean'].notna().any():\n"
          "        ax.errorbar(g[x], g['E_emp_mean'], yerr=g['E_emp_se'], fmt='o', color=color,\n"
          "                    label=None if color else label)\n"
          "ax.set_xlabel(x)\n"
          "ax.set_ylabel('test error')\n"
          "if x in ('phi', 'psi'):\n"
          "    ax.set_xscale('log')\n"
          "ax.legend(fontsize='small')\n"
       << "fig.savefig('" << sc.name << ".png', dpi=150)\n";
    return os.str();
}

std::string write_outputs(const ScenarioResult& result, const std::string& dir, bool with_plot) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string name = result.scenario.name;
    const fs::path csv = fs::path(dir) / (name + ".csv");
    {
        std::ofstream out(csv);
        if (!out) throw std::runtime_error("cannot write " + csv.string());
        write_csv(out, result);
    }
    {
        std::ofstream out(fs::path(dir) / (name + ".json"));
        out << sidecar(result).dump(2) << '\n';
    }
    if (with_plot) {
        std::ofstream out(fs::path(dir) / ("plot_" + name + ".py"));
        out << plot_script(result, name + ".csv");
    }
    return csv.string();
}

}  // namespace collapse::app
