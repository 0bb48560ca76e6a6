#include "corrsem/mc.hpp"

#include "corrsem/errors.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

namespace corrsem {

namespace {

using Engine = std::mt19937_64;

Engine make_engine(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32)};
    return Engine(seq);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(base & 0xffffffffu), static_cast<std::uint32_t>(base >> 32), stream};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

constexpr std::uint32_t fixed_factor_stream = 0x7a657461u;

EntryTemplate column(const std::vector<Entry>& values) {
    EntryTemplate t;
    t.rows = static_cast<Index>(values.size());
    t.cols = 1;
    t.slots = values;
    return t;
}

Entry c(double v) { return Entry::constant(v); }
Entry n(const char* name) { return Entry::param(name); }

double sd_of(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

ParameterSummary summarize_parameter(const std::string& label, double truth, Index t,
                                     const std::vector<const ReplicationRecord*>& ok) {
    std::vector<double> est, gse, nise, sse;
    for (const auto* r : ok) {
        est.push_back(r->theta_hat(t));
        nise.push_back(r->se_ni(t));
        gse.push_back(r->se_g.size() > 0 ? r->se_g(t) : r->se_ni(t));
        sse.push_back(r->se_s(t));
    }
    ParameterSummary s;
    s.label = label;
    s.true_value = truth;
    s.mean_estimate = mean_of(est);
    s.mcse = sd_of(est, s.mean_estimate);
    s.mean_gse = mean_of(gse);
    s.mean_nise = mean_of(nise);
    s.mean_sse = mean_of(sse);
    s.gmcse = sd_of(gse, s.mean_gse);
    s.smcse = sd_of(sse, s.mean_sse);
    s.gse_ratio = s.mcse > 0.0 ? s.mean_gse / s.mcse : 0.0;
    s.nise_ratio = s.mcse > 0.0 ? s.mean_nise / s.mcse : 0.0;
    s.variability_ratio = s.gmcse > 0.0 ? s.smcse / s.gmcse : 0.0;
    return s;
}

ReplicationRecord run_replication(const Example1Config& config, const ModelSpec& spec, int index,
                                  const LatentFactors* fixed) {
    ReplicationRecord rec;
    rec.index = index;
    try {
        const Example1Draw draw = simulate_example1(config, replication_seed(config.seed, index), fixed);
        const SampleStats stats = compute_stats(draw.data);
        const VectorXd start = repair_start(stats, spec, default_start(spec, stats));
        const FitResult fit = fit_model(stats, spec, start, config.fit);
        if (!fit.converged) {
            rec.failure = "optimizer did not converge in " + std::to_string(fit.iterations) + " iterations";
            return rec;
        }
        InferenceOptions opts;
        opts.sandwich.scaling = config.sandwich_scaling;
        if (spec.zeta_mode() == ZetaMode::random)
            opts.fourth = estimate_fourth_moments(draw.data, spec, AnchorMap{{"x"}, {"x"}});
        const InferenceResult inf = infer(draw.data, stats, spec, fit.theta_hat, opts);
        rec.theta_hat = fit.theta_hat;
        rec.q = fit.q_min;
        rec.iterations = fit.iterations;
        rec.se_ni = standard_errors(inf.v_ni);
        rec.se_s = standard_errors(inf.v_s);
        if (inf.v_g) rec.se_g = standard_errors(*inf.v_g);
        rec.ok = rec.theta_hat.allFinite() && rec.se_ni.allFinite() && rec.se_s.allFinite() && std::isfinite(rec.q);
        if (!rec.ok) rec.failure = "non-finite estimate or standard error";
    } catch (const Error& e) {
        rec.ok = false;
        rec.failure = e.what();
    }
    return rec;
}

}  // namespace

void Example1Config::validate() const {
    if (n1 < 2 || n2 < 2) throw ConfigError("sample sizes must be at least 2");
    if (n2 > n1) throw ConfigError("n2 must not exceed n1");
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw ConfigError("chi-square degrees of freedom must be positive");
    if (!(tau0[7] > 0.0)) throw ConfigError("sigma2_e0 must be positive");
    for (double v : var_zeta)
        if (!(v > 0.0)) throw ConfigError("factor variances must be positive");
    for (double v : var_eps)
        if (!(v > 0.0)) throw ConfigError("error variances must be positive");
    if (!(std::abs(cov_zeta) < std::sqrt(var_zeta[0] * var_zeta[1])))
        throw ConfigError("factor covariance violates |cov| < sqrt(var1 var2)");
    if (replications < 2) throw ConfigError("at least 2 replications are required");
}

const std::array<std::string, 8>& example1_tau_names() {
    static const std::array<std::string, 8> names{"beta1", "beta2", "beta3", "gamma1",
                                                  "gamma2", "delta1", "delta2", "s2_e0"};
    return names;
}

ModelSpec example1_spec(ZetaMode mode) {
    // Columns of B: zeta, eps0, eps1, eps2[, eps3].
    SampleModel s1;
    s1.id = "pop1";
    s1.variables = {"x", "y1", "y2", "y3"};
    s1.k_zeta = 1;
    s1.k_eps0 = 1;
    s1.eps_blocks = {1, 1, 1};
    s1.beta = column({c(0), n("beta1"), n("beta2"), n("beta3")});
    s1.loadings = EntryTemplate::zeros(4, 5);
    s1.loadings.at(0, 0) = c(1);
    s1.loadings.at(0, 1) = c(1);
    s1.loadings.at(1, 0) = n("delta1");
    s1.loadings.at(1, 2) = c(1);
    s1.loadings.at(2, 0) = n("delta2");
    s1.loadings.at(2, 3) = c(1);
    s1.loadings.at(3, 4) = c(1);
    s1.sigma_eps0 = column({n("s2_e0")});
    EntryTemplate g1 = EntryTemplate::zeros(4, 4);
    g1.at(2, 1) = n("gamma1");
    g1.at(3, 2) = n("gamma2");
    s1.gamma = g1;

    SampleModel s2;
    s2.id = "pop2";
    s2.variables = {"x", "y1", "y2"};
    s2.k_zeta = 1;
    s2.k_eps0 = 1;
    s2.eps_blocks = {1, 1};
    s2.beta = column({c(0), n("beta1"), n("beta2")});
    s2.loadings = EntryTemplate::zeros(3, 4);
    s2.loadings.at(0, 0) = c(1);
    s2.loadings.at(0, 1) = c(1);
    s2.loadings.at(1, 0) = n("delta1");
    s2.loadings.at(1, 2) = c(1);
    s2.loadings.at(2, 0) = n("delta2");
    s2.loadings.at(2, 3) = c(1);
    s2.sigma_eps0 = column({n("s2_e0")});
    EntryTemplate g2 = EntryTemplate::zeros(3, 3);
    g2.at(2, 1) = n("gamma1");
    s2.gamma = g2;

    const auto& names = example1_tau_names();
    return ModelSpec({s1, s2}, std::vector<std::string>(names.begin(), names.end()), mode);
}

VectorXd example1_true_theta(const ModelSpec& spec, const Example1Config& config) {
    VectorXd theta(spec.dim());
    for (Index t = 0; t < 8; ++t) theta(t) = config.tau0[static_cast<std::size_t>(t)];
    const auto& layout = spec.nu_layout();
    for (std::size_t j = 0; j < layout.size(); ++j) {
        const NuSlot& slot = layout[j];
        double v = 0.0;
        switch (slot.kind) {
        case NuKind::mu_zeta: v = config.mu_zeta[slot.sample]; break;
        case NuKind::sigma_zeta: v = config.var_zeta[slot.sample]; break;
        case NuKind::sigma_eps: v = config.var_eps[slot.block - 1]; break;
        }
        theta(spec.tau_size() + static_cast<Index>(j)) = v;
    }
    return theta;
}

FactorWeights example1_factor_weights(const Example1Config& config) {
    const double bound = std::sqrt(config.var_zeta[0] * config.var_zeta[1]);
    if (!(config.var_zeta[0] > 0.0) || !(config.var_zeta[1] > 0.0) || !(std::abs(config.cov_zeta) < bound))
        throw ConfigError("no common-shock weights exist: factor covariance violates |cov| < sqrt(var1 var2)");
    const double rho = config.cov_zeta / bound;
    const double scale = 2.0 * config.d1;
    FactorWeights w;
    for (std::size_t i = 0; i < 2; ++i) {
        w.a[i] = std::sqrt(config.var_zeta[i] * std::abs(rho) / scale);
        w.b[i] = std::sqrt(config.var_zeta[i] * (1.0 - std::abs(rho)) / scale);
    }
    if (rho < 0.0) w.a[1] = -w.a[1];
    return w;
}

namespace {

LatentFactors draw_factors(const Example1Config& config, Engine& eng) {
    const FactorWeights w = example1_factor_weights(config);
    std::chi_squared_distribution<double> chi(config.d1);
    LatentFactors f;
    f.zeta1.resize(config.n1);
    f.zeta2.resize(config.n2);
    for (Index j = 0; j < config.n1; ++j) {
        const double u0 = chi(eng) - config.d1;
        const double u1 = chi(eng) - config.d1;
        f.zeta1(j) = w.a[0] * u0 + w.b[0] * u1 + config.mu_zeta[0];
        if (j < config.n2) {
            const double u2 = chi(eng) - config.d1;
            f.zeta2(j) = w.a[1] * u0 + w.b[1] * u2 + config.mu_zeta[1];
        }
    }
    return f;
}

}  // namespace

LatentFactors draw_example1_factors(const Example1Config& config, std::uint64_t seed) {
    Engine eng = make_engine(seed);
    return draw_factors(config, eng);
}

std::uint64_t replication_seed(std::uint64_t base_seed, int replication) {
    return derive_seed(base_seed, static_cast<std::uint32_t>(replication) + 1u);
}

std::uint64_t fixed_factor_seed(std::uint64_t base_seed) { return derive_seed(base_seed, fixed_factor_stream); }

Example1Draw simulate_example1(const Example1Config& config, std::uint64_t seed, const LatentFactors* fixed_factors) {
    Engine eng = make_engine(seed);
    Example1Draw draw;
    if (config.zeta_mode == ZetaMode::random) {
        draw.factors = draw_factors(config, eng);
    } else if (fixed_factors) {
        if (fixed_factors->zeta1.size() != config.n1 || fixed_factors->zeta2.size() != config.n2)
            throw ConfigError("fixed factor values do not match the sample sizes");
        draw.factors = *fixed_factors;
    } else {
        draw.factors = draw_example1_factors(config, fixed_factor_seed(config.seed));
    }

    const auto& tau = config.tau0;
    const double beta1 = tau[0], beta2 = tau[1], beta3 = tau[2], gamma1 = tau[3], gamma2 = tau[4];
    const double delta1 = tau[5], delta2 = tau[6];
    std::normal_distribution<double> normal(0.0, std::sqrt(tau[7]));
    std::chi_squared_distribution<double> chi(config.d2);
    auto skewed = [&](double var) { return (chi(eng) - config.d2) * std::sqrt(var / (2.0 * config.d2)); };

    for (std::size_t i = 0; i < 2; ++i) {
        const Index rows = i == 0 ? config.n1 : config.n2;
        const Index p = i == 0 ? 4 : 3;
        const VectorXd& zeta = i == 0 ? draw.factors.zeta1 : draw.factors.zeta2;
        SampleData sd;
        sd.id = i == 0 ? "pop1" : "pop2";
        sd.observations.resize(rows, p);
        MatrixXd err(rows, p);
        sd.individuals.reserve(static_cast<std::size_t>(rows));
        for (Index j = 0; j < rows; ++j) {
            sd.individuals.push_back(std::to_string(j + 1));
            err(j, 0) = normal(eng);
            for (Index l = 1; l < p; ++l) err(j, l) = skewed(config.var_eps[static_cast<std::size_t>(l - 1)]);
            const double z = zeta(j);
            const double x = z + err(j, 0);
            const double y1 = beta1 + delta1 * z + err(j, 1);
            const double y2 = beta2 + gamma1 * y1 + delta2 * z + err(j, 2);
            sd.observations(j, 0) = x;
            sd.observations(j, 1) = y1;
            sd.observations(j, 2) = y2;
            if (p == 4) sd.observations(j, 3) = beta3 + gamma2 * y2 + err(j, 3);
        }
        draw.data.samples.push_back(std::move(sd));
        draw.errors.push_back(std::move(err));
    }
    return draw;
}

Dataset generate_example1_sample(const Example1Config& config, std::uint64_t seed) {
    config.validate();
    return simulate_example1(config, seed).data;
}

McReport run_monte_carlo(const Example1Config& config) {
    config.validate();
    const ModelSpec spec = example1_spec(config.zeta_mode);
    std::optional<LatentFactors> fixed;
    if (config.zeta_mode == ZetaMode::fixed) fixed = draw_example1_factors(config, fixed_factor_seed(config.seed));

    const int r_total = config.replications;
    std::vector<ReplicationRecord> records(static_cast<std::size_t>(r_total));
    unsigned threads = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads;
    threads = std::min<unsigned>(threads, static_cast<unsigned>(r_total));

    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next++; r < r_total; r = next++)
            records[static_cast<std::size_t>(r)] = run_replication(config, spec, r, fixed ? &*fixed : nullptr);
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    return summarize(config, spec, std::move(records));
}

McReport summarize(const Example1Config& config, const ModelSpec& spec, std::vector<ReplicationRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const ReplicationRecord& a, const ReplicationRecord& b) { return a.index < b.index; });
    McReport rep;
    rep.config = config;
    rep.df = degrees_of_freedom(spec);
    rep.replications = static_cast<int>(records.size());
    std::vector<const ReplicationRecord*> ok;
    for (const auto& r : records)
        if (r.ok) ok.push_back(&r);
    rep.successes = static_cast<int>(ok.size());
    rep.unreliable = static_cast<double>(rep.replications - rep.successes) > 0.05 * rep.replications;

    const VectorXd truth = example1_true_theta(spec, config);
    for (Index t = 0; t < spec.tau_size(); ++t)
        rep.tau.push_back(summarize_parameter(spec.param_label(t), truth(t), t, ok));
    for (std::size_t i = 0; i < spec.sample_count(); ++i) {
        std::vector<Index> idx = spec.mu_zeta_indices(i);
        const std::vector<Index> sz = spec.sigma_zeta_indices(i);
        idx.insert(idx.end(), sz.begin(), sz.end());
        for (Index t : idx) rep.factor_moments.push_back(summarize_parameter(spec.param_label(t), truth(t), t, ok));
    }

    std::vector<double> q;
    for (const auto* r : ok) q.push_back(r->q);
    auto& cs = rep.chi_square;
    cs.mean = mean_of(q);
    cs.variance = q.size() > 1 ? std::pow(sd_of(q, cs.mean), 2) : 0.0;
    const double df = static_cast<double>(rep.df);
    if (!q.empty() && rep.df > 0) {
        for (double level : {0.5, 0.75, 0.9, 0.95, 0.99}) {
            const double crit = chi_square_quantile(level, df);
            const auto below = std::count_if(q.begin(), q.end(), [&](double v) { return v < crit; });
            cs.percentiles.emplace_back(100.0 * level, 100.0 * static_cast<double>(below) / static_cast<double>(q.size()));
        }
        std::vector<double> sorted = q;
        std::sort(sorted.begin(), sorted.end());
        const double m = static_cast<double>(sorted.size());
        double ks = 0.0;
        for (std::size_t j = 0; j < sorted.size(); ++j) {
            const double f = 1.0 - chi_square_upper_tail(sorted[j], df);
            ks = std::max({ks, static_cast<double>(j + 1) / m - f, f - static_cast<double>(j) / m});
        }
        cs.ks_statistic = ks;
    }
    rep.records = std::move(records);
    return rep;
}

PowerResult power_analysis(const Example1Config& config, const McReport& mc, const std::string& param,
                           Alternative alternative, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    const ModelSpec spec = example1_spec(config.zeta_mode);
    const auto idx = spec.find_param(param);
    if (!idx) throw ConfigError("unknown parameter '" + param + "'");
    const Index t = *idx;

    std::vector<const ReplicationRecord*> ok;
    for (const auto& r : mc.records)
        if (r.ok) ok.push_back(&r);
    if (ok.size() < 2) throw ConfigError("power analysis needs at least 2 successful replications");

    PowerResult res;
    res.param = param;
    res.alternative = alternative;
    res.alpha = alpha;
    res.true_value = example1_true_theta(spec, config)(t);
    res.mcse = summarize_parameter(param, res.true_value, t, ok).mcse;
    res.critical_value = normal_quantile(1.0 - alpha);
    const double sign = alternative == Alternative::less ? -1.0 : 1.0;
    res.expected_power = normal_cdf(-res.critical_value + sign * res.true_value / res.mcse);
    std::size_t hits = 0;
    for (const auto* r : ok) {
        const double se = r->se_g.size() > 0 ? r->se_g(t) : r->se_ni(t);
        if (sign * r->theta_hat(t) / se > res.critical_value) ++hits;
    }
    res.simulated_power = static_cast<double>(hits) / static_cast<double>(ok.size());
    return res;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal quantile needs p in (0, 1)");
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double chi_square_quantile(double p, double df) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("chi-square quantile needs p in (0, 1)");
    return 2.0 * boost::math::gamma_p_inv(df / 2.0, p);
}

}  // namespace corrsem
