#include "corrsem/spec_io.hpp"

#include "corrsem/errors.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace corrsem {

namespace {

void check_keys(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

const Json& require(const Json& obj, const std::string& key, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(where + ": missing required key '" + key + "'");
    return *it;
}

double as_number(const Json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError(where + ": expected a number");
    return v.get<double>();
}

Index as_count(const Json& v, const std::string& where) {
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(where + ": expected a non-negative integer");
    return static_cast<Index>(v.get<long long>());
}

std::string as_string(const Json& v, const std::string& where) {
    if (!v.is_string()) throw ConfigError(where + ": expected a string");
    return v.get<std::string>();
}

std::vector<std::string> as_strings(const Json& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + ": expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t k = 0; k < v.size(); ++k) out.push_back(as_string(v[k], where + "[" + std::to_string(k) + "]"));
    return out;
}

Entry parse_entry(const Json& v, const std::string& where) {
    if (v.is_number()) return Entry::constant(v.get<double>());
    if (v.is_string()) return Entry::param(v.get<std::string>());
    throw ConfigError(where + ": template entry must be a number or a parameter name");
}

Json entry_json(const Entry& e) { return e.is_fixed() ? Json(e.value()) : Json(e.name()); }

EntryTemplate parse_vector(const Json& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + ": expected an array");
    EntryTemplate t;
    t.rows = static_cast<Index>(v.size());
    t.cols = 1;
    for (std::size_t r = 0; r < v.size(); ++r) t.slots.push_back(parse_entry(v[r], where + "[" + std::to_string(r) + "]"));
    return t;
}

EntryTemplate parse_matrix(const Json& v, Index expected_cols, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + ": expected an array of rows");
    EntryTemplate t;
    t.rows = static_cast<Index>(v.size());
    t.cols = expected_cols;
    for (std::size_t r = 0; r < v.size(); ++r) {
        const std::string rw = where + "[" + std::to_string(r) + "]";
        if (!v[r].is_array()) throw ConfigError(rw + ": expected an array");
        if (static_cast<Index>(v[r].size()) != expected_cols)
            throw ConfigError(rw + ": expected " + std::to_string(expected_cols) + " entries, found " +
                              std::to_string(v[r].size()));
        for (std::size_t c = 0; c < v[r].size(); ++c)
            t.slots.push_back(parse_entry(v[r][c], rw + "[" + std::to_string(c) + "]"));
    }
    return t;
}

Json template_json(const EntryTemplate& t, bool as_vector) {
    Json out = Json::array();
    for (Index r = 0; r < t.rows; ++r) {
        if (as_vector) {
            out.push_back(entry_json(t.at(r, 0)));
            continue;
        }
        Json row = Json::array();
        for (Index c = 0; c < t.cols; ++c) row.push_back(entry_json(t.at(r, c)));
        out.push_back(row);
    }
    return out;
}

ZetaMode parse_mode(const Json& v, const std::string& where) {
    const std::string s = as_string(v, where);
    if (s == "fixed") return ZetaMode::fixed;
    if (s == "random") return ZetaMode::random;
    throw ConfigError(where + ": zeta_mode must be 'fixed' or 'random'");
}

void check_schema(const Json& doc, const char* expected) {
    const std::string s = as_string(require(doc, "schema", "document"), "schema");
    if (s != expected) throw ConfigError("schema '" + s + "' is not supported (expected '" + expected + "')");
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vector_json(const VectorXd& v) {
    Json out = Json::array();
    for (Index k = 0; k < v.size(); ++k) out.push_back(number_or_null(v(k)));
    return out;
}

Json parameter_summary_json(const ParameterSummary& p) {
    return Json{{"label", p.label},
                {"true_value", p.true_value},
                {"mean_estimate", number_or_null(p.mean_estimate)},
                {"mcse", number_or_null(p.mcse)},
                {"mean_gse", number_or_null(p.mean_gse)},
                {"mean_nise", number_or_null(p.mean_nise)},
                {"mean_sse", number_or_null(p.mean_sse)},
                {"gmcse", number_or_null(p.gmcse)},
                {"smcse", number_or_null(p.smcse)},
                {"gse_over_mcse", number_or_null(p.gse_ratio)},
                {"nise_over_mcse", number_or_null(p.nise_ratio)},
                {"smcse_over_gmcse", number_or_null(p.variability_ratio)}};
}

std::string fmt(const Json& v, int precision = 5) {
    if (v.is_null()) return "-";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    std::ostringstream os;
    os << std::setprecision(precision) << v.get<double>();
    return os.str();
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

}  // namespace

const char* to_string(CrossBlockScaling s) {
    return s == CrossBlockScaling::paired_count ? "paired_count" : "moment_covariance";
}

const char* to_string(Alternative a) { return a == Alternative::less ? "less" : "greater"; }

const char* to_string(SeSource s) {
    switch (s) {
    case SeSource::normal_independence: return "normal_independence";
    case SeSource::fixed_correction: return "fixed_correction";
    case SeSource::random_correction: return "random_correction";
    case SeSource::unavailable: return "unavailable";
    }
    return "unavailable";
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read file '" + path.string() + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

ModelDocument parse_model(const Json& doc) {
    check_keys(doc, {"schema", "zeta_mode", "parameters", "samples", "start"}, "model");
    check_schema(doc, model_schema);
    const ZetaMode mode = parse_mode(require(doc, "zeta_mode", "model"), "zeta_mode");
    const std::vector<std::string> params = as_strings(require(doc, "parameters", "model"), "parameters");
    const Json& samples = require(doc, "samples", "model");
    if (!samples.is_array()) throw ConfigError("samples: expected an array");

    std::vector<SampleModel> models;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string where = "samples[" + std::to_string(i) + "]";
        const Json& js = samples[i];
        check_keys(js, {"id", "variables", "k_zeta", "k_eps0", "eps_blocks", "beta", "B", "gamma", "sigma_eps0"}, where);
        SampleModel m;
        m.id = as_string(require(js, "id", where), where + ".id");
        m.variables = as_strings(require(js, "variables", where), where + ".variables");
        m.k_zeta = as_count(require(js, "k_zeta", where), where + ".k_zeta");
        m.k_eps0 = js.contains("k_eps0") ? as_count(js["k_eps0"], where + ".k_eps0") : 0;
        if (js.contains("eps_blocks")) {
            const Json& b = js["eps_blocks"];
            if (!b.is_array()) throw ConfigError(where + ".eps_blocks: expected an array");
            for (std::size_t k = 0; k < b.size(); ++k)
                m.eps_blocks.push_back(as_count(b[k], where + ".eps_blocks[" + std::to_string(k) + "]"));
        }
        m.beta = parse_vector(require(js, "beta", where), where + ".beta");
        m.loadings = parse_matrix(require(js, "B", where), m.k_xi(), where + ".B");
        if (js.contains("sigma_eps0"))
            m.sigma_eps0 = parse_matrix(js["sigma_eps0"], m.k_eps0, where + ".sigma_eps0");
        else if (m.k_eps0 == 0)
            m.sigma_eps0 = EntryTemplate::zeros(0, 0);
        else
            throw ConfigError(where + ": missing required key 'sigma_eps0'");
        if (js.contains("gamma")) m.gamma = parse_matrix(js["gamma"], m.p(), where + ".gamma");
        models.push_back(std::move(m));
    }

    ModelDocument out{ModelSpec(std::move(models), params, mode), {}};
    if (doc.contains("start")) out.start = parse_start_values(doc["start"]);
    for (const auto& [name, value] : out.start)
        if (!out.spec.find_param(name)) throw ConfigError("start: unknown parameter '" + name + "'");
    return out;
}

ModelDocument load_model(const std::filesystem::path& path) { return parse_model(read_json_file(path)); }

Json model_to_json(const ModelSpec& spec, const std::map<std::string, double>& start) {
    Json doc;
    doc["schema"] = model_schema;
    doc["zeta_mode"] = to_string(spec.zeta_mode());
    doc["parameters"] = spec.tau_names();
    Json samples = Json::array();
    for (const SampleModel& s : spec.samples()) {
        Json js;
        js["id"] = s.id;
        js["variables"] = s.variables;
        js["k_zeta"] = s.k_zeta;
        js["k_eps0"] = s.k_eps0;
        js["eps_blocks"] = s.eps_blocks;
        js["beta"] = template_json(s.beta, true);
        js["B"] = template_json(s.loadings, false);
        if (s.k_eps0 > 0) js["sigma_eps0"] = template_json(s.sigma_eps0, false);
        if (s.gamma) js["gamma"] = template_json(*s.gamma, false);
        samples.push_back(js);
    }
    doc["samples"] = samples;
    if (!start.empty()) {
        Json st = Json::object();
        for (const auto& [k, v] : start) st[k] = v;
        doc["start"] = st;
    }
    return doc;
}

std::map<std::string, double> parse_start_values(const Json& doc) {
    if (!doc.is_object()) throw ConfigError("start values: expected an object of parameter -> number");
    std::map<std::string, double> out;
    for (const auto& [key, value] : doc.items()) out[key] = as_number(value, "start." + key);
    return out;
}

SimulationDocument parse_simulation(const Json& doc) {
    check_keys(doc,
               {"schema", "design", "n1", "n2", "d1", "d2", "zeta_mode", "tau0", "mu_zeta", "var_zeta", "cov_zeta",
                "var_eps", "replications", "seed", "threads", "sandwich_scaling", "fit", "power"},
               "simulation");
    check_schema(doc, simulation_schema);
    const std::string design = as_string(require(doc, "design", "simulation"), "design");
    if (design != "example1") throw ConfigError("design '" + design + "' is not supported (expected 'example1')");

    SimulationDocument sim;
    Example1Config& c = sim.config;
    if (doc.contains("n1")) c.n1 = as_count(doc["n1"], "n1");
    if (doc.contains("n2")) c.n2 = as_count(doc["n2"], "n2");
    if (doc.contains("d1")) c.d1 = as_number(doc["d1"], "d1");
    if (doc.contains("d2")) c.d2 = as_number(doc["d2"], "d2");
    if (doc.contains("zeta_mode")) c.zeta_mode = parse_mode(doc["zeta_mode"], "zeta_mode");
    if (doc.contains("tau0")) {
        const Json& t = doc["tau0"];
        const auto& names = example1_tau_names();
        if (t.is_array()) {
            if (t.size() != 8) throw ConfigError("tau0: expected 8 values");
            for (std::size_t k = 0; k < 8; ++k) c.tau0[k] = as_number(t[k], "tau0[" + std::to_string(k) + "]");
        } else if (t.is_object()) {
            for (const auto& [key, value] : t.items()) {
                std::size_t k = 0;
                while (k < names.size() && names[k] != key) ++k;
                if (k == names.size()) throw ConfigError("tau0: unknown parameter '" + key + "'");
                c.tau0[k] = as_number(value, "tau0." + key);
            }
        } else {
            throw ConfigError("tau0: expected an array or an object");
        }
    }
    auto fill = [&](const char* key, auto& arr) {
        if (!doc.contains(key)) return;
        const Json& v = doc[key];
        if (!v.is_array() || v.size() != arr.size())
            throw ConfigError(std::string(key) + ": expected " + std::to_string(arr.size()) + " numbers");
        for (std::size_t k = 0; k < arr.size(); ++k) arr[k] = as_number(v[k], std::string(key));
    };
    fill("mu_zeta", c.mu_zeta);
    fill("var_zeta", c.var_zeta);
    fill("var_eps", c.var_eps);
    if (doc.contains("cov_zeta")) c.cov_zeta = as_number(doc["cov_zeta"], "cov_zeta");
    if (doc.contains("replications")) c.replications = static_cast<int>(as_count(doc["replications"], "replications"));
    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
        c.seed = doc["seed"].get<std::uint64_t>();
    }
    if (doc.contains("threads")) c.threads = static_cast<unsigned>(as_count(doc["threads"], "threads"));
    if (doc.contains("sandwich_scaling")) {
        const std::string s = as_string(doc["sandwich_scaling"], "sandwich_scaling");
        if (s == "paired_count")
            c.sandwich_scaling = CrossBlockScaling::paired_count;
        else if (s == "moment_covariance")
            c.sandwich_scaling = CrossBlockScaling::moment_covariance;
        else
            throw ConfigError("sandwich_scaling must be 'paired_count' or 'moment_covariance'");
    }
    if (doc.contains("fit")) {
        const Json& f = doc["fit"];
        check_keys(f, {"max_iterations", "gradient_tolerance", "relative_tolerance"}, "fit");
        if (f.contains("max_iterations"))
            c.fit.max_iterations = static_cast<int>(as_count(f["max_iterations"], "fit.max_iterations"));
        if (f.contains("gradient_tolerance")) c.fit.gradient_tolerance = as_number(f["gradient_tolerance"], "fit.gradient_tolerance");
        if (f.contains("relative_tolerance")) c.fit.relative_tolerance = as_number(f["relative_tolerance"], "fit.relative_tolerance");
    }
    if (doc.contains("power")) {
        const Json& p = doc["power"];
        if (!p.is_array()) throw ConfigError("power: expected an array");
        for (std::size_t k = 0; k < p.size(); ++k) {
            const std::string where = "power[" + std::to_string(k) + "]";
            check_keys(p[k], {"param", "alternative", "alpha"}, where);
            PowerRequest r;
            r.param = as_string(require(p[k], "param", where), where + ".param");
            if (p[k].contains("alternative")) {
                const std::string a = as_string(p[k]["alternative"], where + ".alternative");
                if (a == "less")
                    r.alternative = Alternative::less;
                else if (a == "greater")
                    r.alternative = Alternative::greater;
                else
                    throw ConfigError(where + ".alternative must be 'less' or 'greater'");
            }
            if (p[k].contains("alpha")) r.alpha = as_number(p[k]["alpha"], where + ".alpha");
            sim.power.push_back(r);
        }
    }
    c.validate();
    return sim;
}

Json simulation_to_json(const SimulationDocument& sim) {
    const Example1Config& c = sim.config;
    Json doc;
    doc["schema"] = simulation_schema;
    doc["design"] = "example1";
    doc["n1"] = c.n1;
    doc["n2"] = c.n2;
    doc["d1"] = c.d1;
    doc["d2"] = c.d2;
    doc["zeta_mode"] = to_string(c.zeta_mode);
    Json tau = Json::object();
    for (std::size_t k = 0; k < 8; ++k) tau[example1_tau_names()[k]] = c.tau0[k];
    doc["tau0"] = tau;
    doc["mu_zeta"] = c.mu_zeta;
    doc["var_zeta"] = c.var_zeta;
    doc["cov_zeta"] = c.cov_zeta;
    doc["var_eps"] = c.var_eps;
    doc["replications"] = c.replications;
    doc["seed"] = c.seed;
    doc["sandwich_scaling"] = to_string(c.sandwich_scaling);
    doc["fit"] = Json{{"max_iterations", c.fit.max_iterations},
                      {"gradient_tolerance", c.fit.gradient_tolerance},
                      {"relative_tolerance", c.fit.relative_tolerance}};
    if (!sim.power.empty()) {
        Json p = Json::array();
        for (const auto& r : sim.power)
            p.push_back(Json{{"param", r.param}, {"alternative", to_string(r.alternative)}, {"alpha", r.alpha}});
        doc["power"] = p;
    }
    return doc;
}

FourthMomentEstimate parse_fourth_moments(const Json& doc, const ModelSpec& spec) {
    check_keys(doc, {"schema", "samples"}, "fourth moments");
    check_schema(doc, fourth_moments_schema);
    const Json& samples = require(doc, "samples", "fourth moments");
    check_keys(samples, [&] {
        std::set<std::string> ids;
        for (const auto& s : spec.samples()) ids.insert(s.id);
        return ids;
    }(), "fourth moments.samples");
    FourthMomentEstimate est;
    for (const SampleModel& s : spec.samples()) {
        const std::string where = "fourth moments.samples." + s.id;
        const Json& m = require(samples, s.id, "fourth moments.samples");
        const Index k2 = s.k_zeta * s.k_zeta;
        if (!m.is_array() || static_cast<Index>(m.size()) != k2)
            throw ConfigError(where + ": expected a " + std::to_string(k2) + " x " + std::to_string(k2) + " matrix");
        FactorFourthMoments f;
        f.source = FactorFourthMoments::Source::user_supplied;
        f.matrix.resize(k2, k2);
        for (Index r = 0; r < k2; ++r) {
            const Json& row = m[static_cast<std::size_t>(r)];
            if (!row.is_array() || static_cast<Index>(row.size()) != k2)
                throw ConfigError(where + ": row " + std::to_string(r) + " must have " + std::to_string(k2) + " entries");
            for (Index c = 0; c < k2; ++c) f.matrix(r, c) = as_number(row[static_cast<std::size_t>(c)], where);
        }
        est.samples.push_back(std::move(f));
    }
    return est;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Json manifest_to_json(const RunManifest& m) {
    Json j;
    j["command"] = m.command;
    j["inputs"] = m.inputs;
    Json opts = Json::object();
    for (const auto& [k, v] : m.options) opts[k] = v;
    j["options"] = opts;
    j["seed"] = m.seed ? Json(*m.seed) : Json(nullptr);
    j["version"] = m.version;
    j["timestamp"] = m.timestamp;
    return j;
}

Json validation_report(const RunManifest& m, const ModelSpec& spec, const ValidationReport& v) {
    Json r;
    r["schema"] = report_schema;
    r["kind"] = "validate";
    r["manifest"] = manifest_to_json(m);
    r["result"] = Json{{"d_theta", v.d_theta},
                       {"tau_size", v.tau_size},
                       {"nu_size", spec.nu_size()},
                       {"moment_count", v.moment_count},
                       {"df", v.df},
                       {"tau_rank", v.tau_rank},
                       {"rank_deficient", v.rank_deficient},
                       {"parameters", spec.param_labels()},
                       {"warnings", v.warnings}};
    return r;
}

Json fit_report(const RunManifest& m, const ModelSpec& spec, const FitResult& fit, const InferenceResult& inference,
                const SeColumns& columns) {
    Json r;
    r["schema"] = report_schema;
    r["kind"] = "fit";
    r["manifest"] = manifest_to_json(m);
    Json res;
    res["converged"] = fit.converged;
    res["iterations"] = fit.iterations;
    res["q_min"] = fit.q_min;
    res["df"] = fit.df;
    res["p_value"] = fit.df > 0 && fit.converged ? Json(fit.p_value) : Json(nullptr);
    res["gradient_norm"] = fit.gradient_norm;
    res["sigma_condition"] = fit.sigma_condition;
    res["zeta_mode"] = to_string(spec.zeta_mode());
    Json table = Json::array();
    for (const ParameterSe& p : inference.table) {
        Json row;
        row["label"] = p.label;
        row["estimate"] = p.estimate;
        if (columns.ni) row["se_ni"] = number_or_null(p.se_ni);
        if (columns.corrected) {
            row["se_corrected"] = p.se_corrected ? number_or_null(*p.se_corrected) : Json(nullptr);
            row["corrected_source"] = to_string(p.corrected_source);
        }
        if (columns.sandwich) row["se_sandwich"] = number_or_null(p.se_sandwich);
        row["flags"] = p.flags;
        table.push_back(row);
    }
    res["parameters"] = table;
    std::vector<std::string> warnings = fit.warnings;
    warnings.insert(warnings.end(), inference.warnings.begin(), inference.warnings.end());
    res["warnings"] = warnings;
    r["result"] = res;
    return r;
}

Json simulation_report(const RunManifest& m, const McReport& mc) {
    Json r;
    r["schema"] = report_schema;
    r["kind"] = "simulate";
    r["manifest"] = manifest_to_json(m);
    Json res;
    res["config"] = simulation_to_json(SimulationDocument{mc.config, {}});
    res["df"] = mc.df;
    res["replications"] = mc.replications;
    res["successes"] = mc.successes;
    res["unreliable"] = mc.unreliable;
    Json tau = Json::array();
    for (const auto& p : mc.tau) tau.push_back(parameter_summary_json(p));
    res["tau"] = tau;
    Json fm = Json::array();
    for (const auto& p : mc.factor_moments) fm.push_back(parameter_summary_json(p));
    res["factor_moments"] = fm;
    Json pct = Json::array();
    for (const auto& [level, emp] : mc.chi_square.percentiles) pct.push_back(Json{{"level", level}, {"empirical", emp}});
    res["chi_square"] = Json{{"mean", mc.chi_square.mean},
                             {"variance", mc.chi_square.variance},
                             {"percentiles", pct},
                             {"ks_statistic", mc.chi_square.ks_statistic}};
    Json power = Json::array();
    for (const auto& p : mc.power)
        power.push_back(Json{{"param", p.param},
                             {"alternative", to_string(p.alternative)},
                             {"alpha", p.alpha},
                             {"true_value", p.true_value},
                             {"mcse", p.mcse},
                             {"critical_value", p.critical_value},
                             {"expected_power", p.expected_power},
                             {"simulated_power", p.simulated_power}});
    res["power"] = power;
    Json recs = Json::array();
    for (const auto& rec : mc.records) {
        Json j{{"index", rec.index}, {"ok", rec.ok}};
        if (rec.ok) {
            j["q"] = rec.q;
            j["iterations"] = rec.iterations;
            j["theta_hat"] = vector_json(rec.theta_hat);
            j["se_ni"] = vector_json(rec.se_ni);
            j["se_corrected"] = rec.se_g.size() > 0 ? vector_json(rec.se_g) : Json(nullptr);
            j["se_sandwich"] = vector_json(rec.se_s);
        } else {
            j["failure"] = rec.failure;
        }
        recs.push_back(j);
    }
    res["records"] = recs;
    r["result"] = res;
    return r;
}

std::string render_validation_table(const Json& report) {
    const Json& r = report.at("result");
    std::ostringstream os;
    os << "parameters (d_theta): " << fmt(r.at("d_theta")) << "  tau: " << fmt(r.at("tau_size"))
       << "  nu: " << fmt(r.at("nu_size")) << "\n";
    os << "moments: " << fmt(r.at("moment_count")) << "  degrees of freedom: " << fmt(r.at("df")) << "\n";
    os << "tau rank: " << fmt(r.at("tau_rank")) << (r.at("rank_deficient").get<bool>() ? "  (rank deficient)" : "")
       << "\n";
    for (const auto& w : r.at("warnings")) os << "warning: " << w.get<std::string>() << "\n";
    return os.str();
}

std::string render_fit_table(const Json& report) {
    const Json& r = report.at("result");
    std::ostringstream os;
    os << "converged: " << (r.at("converged").get<bool>() ? "yes" : "no") << "  iterations: " << fmt(r.at("iterations"))
       << "\n";
    os << "Q: " << fmt(r.at("q_min"), 8) << "  df: " << fmt(r.at("df")) << "  p: " << fmt(r.at("p_value"), 4) << "\n\n";
    const std::vector<std::pair<std::string, std::string>> cols{
        {"estimate", "estimate"}, {"se_ni", "se_NI"}, {"se_corrected", "se_corr"}, {"se_sandwich", "se_sand"}};
    os << pad("parameter", 24);
    for (const auto& [key, head] : cols)
        if (r.at("parameters").empty() || r.at("parameters")[0].contains(key)) os << pad(head, 13);
    os << "flags\n";
    for (const auto& row : r.at("parameters")) {
        os << pad(row.at("label").get<std::string>(), 24);
        for (const auto& [key, head] : cols)
            if (row.contains(key)) os << pad(fmt(row.at(key)), 13);
        std::string flags;
        for (const auto& f : row.at("flags")) flags += (flags.empty() ? "" : ",") + f.get<std::string>();
        os << flags << "\n";
    }
    for (const auto& w : r.at("warnings")) os << "warning: " << w.get<std::string>() << "\n";
    return os.str();
}

std::string render_simulation_table(const Json& report) {
    const Json& r = report.at("result");
    std::ostringstream os;
    os << "replications: " << fmt(r.at("replications")) << "  successes: " << fmt(r.at("successes"))
       << (r.at("unreliable").get<bool>() ? "  (UNRELIABLE: more than 5% failed)" : "") << "\n\n";
    auto block = [&](const Json& rows) {
        os << pad("parameter", 24) << pad("true", 9) << pad("mean", 11) << pad("MCse", 11) << pad("Gse", 11)
           << pad("Gse/MCse", 10) << pad("GMCse", 11) << pad("SMCse", 11) << "SMCse/GMCse\n";
        for (const auto& p : rows)
            os << pad(p.at("label").get<std::string>(), 24) << pad(fmt(p.at("true_value")), 9)
               << pad(fmt(p.at("mean_estimate")), 11) << pad(fmt(p.at("mcse")), 11) << pad(fmt(p.at("mean_gse")), 11)
               << pad(fmt(p.at("gse_over_mcse"), 3), 10) << pad(fmt(p.at("gmcse")), 11) << pad(fmt(p.at("smcse")), 11)
               << fmt(p.at("smcse_over_gmcse"), 3) << "\n";
    };
    block(r.at("tau"));
    os << "\n";
    os << pad("factor moment", 24) << pad("Gse/MCse", 10) << "NIse/MCse\n";
    for (const auto& p : r.at("factor_moments"))
        os << pad(p.at("label").get<std::string>(), 24) << pad(fmt(p.at("gse_over_mcse"), 3), 10)
           << fmt(p.at("nise_over_mcse"), 3) << "\n";
    const Json& cs = r.at("chi_square");
    os << "\nchi-square (df " << fmt(r.at("df")) << "): mean " << fmt(cs.at("mean"), 4) << "  variance "
       << fmt(cs.at("variance"), 4) << "  KS " << fmt(cs.at("ks_statistic"), 3) << "\n";
    for (const auto& p : cs.at("percentiles"))
        os << "  " << fmt(p.at("level"), 3) << "% level: " << fmt(p.at("empirical"), 4) << "% below\n";
    for (const auto& p : r.at("power"))
        os << "power " << p.at("param").get<std::string>() << " (" << p.at("alternative").get<std::string>()
           << ", alpha " << fmt(p.at("alpha"), 3) << "): EP " << fmt(p.at("expected_power"), 4) << "  SP "
           << fmt(p.at("simulated_power"), 4) << "\n";
    return os.str();
}

}  // namespace corrsem
