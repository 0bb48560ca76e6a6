#include "corrsem/cli.hpp"

#include "corrsem/data.hpp"
#include "corrsem/errors.hpp"
#include "corrsem/fit.hpp"
#include "corrsem/inference.hpp"
#include "corrsem/mc.hpp"
#include "corrsem/spec_io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

namespace corrsem {

namespace {

namespace fs = std::filesystem;

struct Options {
    std::string model;
    std::string data;
    std::string config;
    std::string out_dir;
    std::string start_path;
    std::string fourth;
    std::string se = "all";
    std::string sandwich_scaling;
    std::string gradient = "analytic";
    std::optional<std::uint64_t> seed;
    std::optional<int> replications;
    std::optional<int> max_iter;
    std::optional<double> tol;
    std::optional<unsigned> threads;
};

// Writes report.json and report.txt inside the output directory, or the
// JSON document to `out` when no directory was given.
void emit(const Options& o, const Json& report, const std::string& table, std::ostream& out) {
    if (o.out_dir.empty()) {
        out << report.dump(2) << "\n";
        return;
    }
    const fs::path dir(o.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + o.out_dir + "': " + ec.message());
    auto write = [&](const char* name, const std::string& body) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw ConfigError("cannot write '" + (dir / name).string() + "'");
        f << body;
    };
    write("report.json", report.dump(2) + "\n");
    write("report.txt", table);
    out << table;
}

RunManifest manifest(const std::string& command, std::vector<std::string> inputs, const Options& o) {
    RunManifest m;
    m.command = command;
    m.inputs = std::move(inputs);
    if (!o.out_dir.empty()) m.options["out"] = o.out_dir;
    if (!o.start_path.empty()) m.options["start"] = o.start_path;
    if (o.max_iter) m.options["max-iter"] = std::to_string(*o.max_iter);
    if (o.tol) {
        std::ostringstream os;
        os << *o.tol;
        m.options["tol"] = os.str();
    }
    if (o.replications) m.options["replications"] = std::to_string(*o.replications);
    if (o.threads) m.options["threads"] = std::to_string(*o.threads);
    if (!o.fourth.empty()) m.options["fourth-moments"] = o.fourth;
    if (!o.sandwich_scaling.empty()) m.options["sandwich-scaling"] = o.sandwich_scaling;
    if (command == "fit") {
        m.options["se"] = o.se;
        m.options["gradient"] = o.gradient;
    }
    m.timestamp = utc_timestamp();
    return m;
}

std::map<std::string, double> start_values(const ModelDocument& doc, const Options& o) {
    std::map<std::string, double> start = doc.start;
    if (!o.start_path.empty()) {
        for (const auto& [k, v] : parse_start_values(read_json_file(o.start_path))) {
            if (!doc.spec.find_param(k)) throw ConfigError("start file: unknown parameter '" + k + "'");
            start[k] = v;
        }
    }
    return start;
}

void apply_fit_options(FitOptions& f, const Options& o) {
    if (o.max_iter) f.max_iterations = *o.max_iter;
    if (o.tol) f.gradient_tolerance = *o.tol;
}

CrossBlockScaling parse_scaling(const std::string& s) {
    if (s == "paired_count") return CrossBlockScaling::paired_count;
    if (s == "moment_covariance") return CrossBlockScaling::moment_covariance;
    throw ConfigError("--sandwich-scaling must be 'paired_count' or 'moment_covariance'");
}

// Generic interior point for the identification check when no data are
// given: tau from the start map or U(0.5, 1.5), unit latent covariances.
VectorXd probe_point(const ModelSpec& spec, const std::map<std::string, double>& start) {
    std::mt19937_64 eng(1);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    VectorXd theta(spec.dim());
    for (Index t = 0; t < spec.tau_size(); ++t) theta(t) = u(eng);
    const auto& layout = spec.nu_layout();
    for (std::size_t k = 0; k < layout.size(); ++k) {
        const NuSlot& s = layout[k];
        double v = 0.0;
        if (s.kind == NuKind::mu_zeta)
            v = u(eng);
        else
            v = s.row == s.col ? 1.0 : 0.1;
        theta(spec.tau_size() + static_cast<Index>(k)) = v;
    }
    for (const auto& [k, v] : start) theta(*spec.find_param(k)) = v;
    return theta;
}

int cmd_validate(const Options& o, std::ostream& out, std::ostream& err) {
    const ModelDocument doc = load_model(o.model);
    const auto start = start_values(doc, o);
    const ValidationReport v = validate_spec(doc.spec, probe_point(doc.spec, start));
    for (const auto& w : v.warnings) err << "warning: " << w << "\n";
    const Json report = validation_report(manifest("validate", {o.model}, o), doc.spec, v);
    emit(o, report, render_validation_table(report), out);
    return exit_ok;
}

std::optional<FourthMomentEstimate> fourth_moments(const Options& o, const ModelSpec& spec, const Dataset& data,
                                                   std::ostream& err) {
    if (o.fourth.empty()) return std::nullopt;
    if (spec.zeta_mode() == ZetaMode::fixed) {
        err << "warning: --fourth-moments is ignored for fixed factors\n";
        return std::nullopt;
    }
    const std::string prefix = "anchor:";
    if (o.fourth.rfind(prefix, 0) == 0) {
        std::vector<std::string> vars;
        std::stringstream ss(o.fourth.substr(prefix.size()));
        for (std::string v; std::getline(ss, v, ',');)
            if (!v.empty()) vars.push_back(v);
        if (vars.empty()) throw ConfigError("--fourth-moments anchor: needs at least one variable name");
        return estimate_fourth_moments(data, spec, AnchorMap(spec.sample_count(), vars));
    }
    return parse_fourth_moments(read_json_file(o.fourth), spec);
}

int cmd_fit(const Options& o, std::ostream& out, std::ostream& err) {
    SeColumns cols;
    if (o.se == "ni")
        cols = {true, false, false};
    else if (o.se == "corrected")
        cols = {false, true, false};
    else if (o.se == "sandwich")
        cols = {false, false, true};
    else if (o.se != "all")
        throw ConfigError("--se must be one of ni, corrected, sandwich, all");

    const ModelDocument doc = load_model(o.model);
    const ModelSpec& spec = doc.spec;
    const auto user_start = start_values(doc, o);
    const Dataset data = load_dataset(o.data, spec);
    const SampleStats stats = compute_stats(data);
    for (const auto& w : stats.warnings) err << "warning: " << w << "\n";

    const VectorXd start = default_start(spec, stats, user_start);
    const ValidationReport v = validate_spec(spec, probe_point(spec, user_start));
    for (const auto& w : v.warnings) err << "warning: " << w << "\n";

    FitOptions fo;
    apply_fit_options(fo, o);
    if (o.gradient == "fd")
        fo.gradient = GradientMethod::finite_difference;
    else if (o.gradient != "analytic")
        throw ConfigError("--gradient must be 'analytic' or 'fd'");
    const FitResult fit = fit_model(stats, spec, start, fo);

    InferenceOptions io;
    if (!o.sandwich_scaling.empty()) io.sandwich.scaling = parse_scaling(o.sandwich_scaling);
    io.fourth = fourth_moments(o, spec, data, err);
    const InferenceResult inf = infer(data, stats, spec, fit.theta_hat, io);

    const Json report = fit_report(manifest("fit", {o.model, o.data}, o), spec, fit, inf, cols);
    emit(o, report, render_fit_table(report), out);
    if (!fit.converged) {
        err << "error: the optimizer did not converge\n";
        return exit_numerical_failure;
    }
    return exit_ok;
}

int cmd_simulate(const Options& o, std::ostream& out, std::ostream& err) {
    SimulationDocument sim = parse_simulation(read_json_file(o.config));
    Example1Config& c = sim.config;
    if (o.seed) c.seed = *o.seed;
    if (o.replications) c.replications = *o.replications;
    if (o.threads) c.threads = *o.threads;
    if (!o.sandwich_scaling.empty()) c.sandwich_scaling = parse_scaling(o.sandwich_scaling);
    apply_fit_options(c.fit, o);
    c.validate();

    McReport mc = run_monte_carlo(c);
    for (const auto& p : sim.power) mc.power.push_back(power_analysis(c, mc, p.param, p.alternative, p.alpha));
    if (mc.unreliable)
        err << "warning: " << (mc.replications - mc.successes) << " of " << mc.replications
            << " replications failed; the report is flagged unreliable\n";
    RunManifest m = manifest("simulate", {o.config}, o);
    m.seed = c.seed;
    const Json report = simulation_report(m, mc);
    emit(o, report, render_simulation_table(report), out);
    return exit_ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multisample structural equation models with correlated populations", "corrsem"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(CORRSEM_VERSION));
    Options o;

    auto add_fit_flags = [&](CLI::App* sub) {
        sub->add_option("--max-iter", o.max_iter, "maximum optimizer iterations")->check(CLI::PositiveNumber);
        sub->add_option("--tol", o.tol, "gradient-norm tolerance")->check(CLI::PositiveNumber);
        sub->add_option("--out", o.out_dir, "directory for report.json and report.txt");
        sub->add_option("--sandwich-scaling", o.sandwich_scaling, "paired_count or moment_covariance");
    };

    CLI::App* validate = app.add_subcommand("validate", "check a model specification");
    validate->add_option("model", o.model, "model file")->required();
    validate->add_option("--start", o.start_path, "start-value file");
    validate->add_option("--out", o.out_dir, "directory for report.json and report.txt");

    CLI::App* fit = app.add_subcommand("fit", "fit a model and compute standard errors");
    fit->add_option("model", o.model, "model file")->required();
    fit->add_option("data", o.data, "data file")->required();
    fit->add_option("--start", o.start_path, "start-value file");
    fit->add_option("--fourth-moments", o.fourth, "PATH or anchor:<var>[,<var>...]");
    fit->add_option("--se", o.se, "ni, corrected, sandwich or all")
        ->check(CLI::IsMember({"ni", "corrected", "sandwich", "all"}));
    fit->add_option("--gradient", o.gradient, "analytic or fd")->check(CLI::IsMember({"analytic", "fd"}));
    add_fit_flags(fit);

    CLI::App* simulate = app.add_subcommand("simulate", "run a Monte Carlo study");
    simulate->add_option("config", o.config, "simulation config file")->required();
    simulate->add_option("--seed", o.seed, "base seed");
    simulate->add_option("--replications", o.replications, "number of replications")->check(CLI::PositiveNumber);
    simulate->add_option("--threads", o.threads, "worker threads (0 = all cores)");
    add_fit_flags(simulate);

    std::vector<std::string> argv_store{"corrsem"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForVersion&) {
        out << CORRSEM_VERSION << "\n";
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_user_error;
    }

    try {
        if (validate->parsed()) return cmd_validate(o, out, err);
        if (fit->parsed()) return cmd_fit(o, out, err);
        return cmd_simulate(o, out, err);
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return exit_numerical_failure;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_user_error;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_user_error;
    }
}

}  // namespace corrsem
