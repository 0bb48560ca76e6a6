#pragma once

#include "corrsem/data.hpp"
#include "corrsem/fit.hpp"
#include "corrsem/inference.hpp"
#include "corrsem/model_spec.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace corrsem {

/// The two-population recursive errors-in-variables design.
struct Example1Config {
    Index n1 = 1000;
    Index n2 = 500;
    double d1 = 10.0;  // chi-square df of the factor components
    double d2 = 10.0;  // chi-square df of the nonnormal errors
    ZetaMode zeta_mode = ZetaMode::fixed;
    /// beta1, beta2, beta3, gamma1, gamma2, delta1, delta2, sigma2_e0
    std::array<double, 8> tau0{1.0, 2.0, -1.0, -0.1, 0.1, -0.01, 1.0, 0.1};
    std::array<double, 2> mu_zeta{5.0, 10.0};
    std::array<double, 2> var_zeta{2.0, 2.0};
    double cov_zeta = 1.4;
    /// Variances of e1, e2, e3 (e0 is tau0[7]).
    std::array<double, 3> var_eps{0.1, 0.2, 0.2};
    int replications = 1000;
    std::uint64_t seed = 20050601;
    unsigned threads = 0;  // 0 = hardware concurrency
    FitOptions fit;
    /// Cross-sample scaling of the sandwich meat; 1/n(ik) on every block by
    /// default for this design.
    CrossBlockScaling sandwich_scaling = CrossBlockScaling::paired_count;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

/// Names of the eight tau parameters in model order.
[[nodiscard]] const std::array<std::string, 8>& example1_tau_names();

[[nodiscard]] ModelSpec example1_spec(ZetaMode mode);

/// theta at the population values of the configuration.
[[nodiscard]] VectorXd example1_true_theta(const ModelSpec& spec, const Example1Config& config);

/// Factor values for one draw: zeta1 (n1) and zeta2 (n2); zeta2[j] is
/// correlated with zeta1[j].
struct LatentFactors {
    VectorXd zeta1;
    VectorXd zeta2;
};

/// Full simulated draw including the latent quantities, for oracles.
struct Example1Draw {
    Dataset data;
    LatentFactors factors;
    /// errors[i] is n(i) x p(i): columns e0, e1, e2[, e3].
    std::vector<MatrixXd> errors;
};

/// Common-shock weights: zeta(i) = a(i) u0 + b(i) u(i) + mu(i), u centred chi2(d1).
/// With rho the factor correlation, a(i)^2 = var(i) |rho| / (2 d1) and
/// b(i)^2 = var(i) (1 - |rho|) / (2 d1); a(2) carries the sign of rho.
struct FactorWeights {
    std::array<double, 2> a{};
    std::array<double, 2> b{};
};

/// Throws ConfigError when the covariance bound is violated.
[[nodiscard]] FactorWeights example1_factor_weights(const Example1Config& config);

[[nodiscard]] LatentFactors draw_example1_factors(const Example1Config& config, std::uint64_t seed);

/// One replication. `fixed_factors` supplies factor values in fixed mode.
[[nodiscard]] Example1Draw simulate_example1(const Example1Config& config, std::uint64_t replication_seed,
                                             const LatentFactors* fixed_factors = nullptr);

/// Simulates one dataset; in fixed mode the factors come from the
/// configuration's base seed and are the same for every replication.
[[nodiscard]] Dataset generate_example1_sample(const Example1Config& config, std::uint64_t replication_seed);

/// Seed of replication r derived from the base seed.
[[nodiscard]] std::uint64_t replication_seed(std::uint64_t base_seed, int replication);
/// Seed of the factor draw shared by all replications in fixed mode.
[[nodiscard]] std::uint64_t fixed_factor_seed(std::uint64_t base_seed);

struct ReplicationRecord {
    int index = 0;
    bool ok = false;
    std::string failure;
    VectorXd theta_hat;
    VectorXd se_ni;
    VectorXd se_g;  // corrected
    VectorXd se_s;
    double q = 0.0;
    int iterations = 0;
};

struct ParameterSummary {
    std::string label;
    double true_value = 0.0;
    double mean_estimate = 0.0;
    double mcse = 0.0;       // sd of estimates, divisor R - 1
    double mean_gse = 0.0;   // mean corrected a.s.e.
    double mean_nise = 0.0;  // mean normal-independence a.s.e.
    double gmcse = 0.0;      // sd of the corrected a.s.e. series
    double smcse = 0.0;      // sd of the sandwich a.s.e. series
    double mean_sse = 0.0;
    double gse_ratio = 0.0;    // mean_gse / mcse
    double nise_ratio = 0.0;   // mean_nise / mcse
    double variability_ratio = 0.0;  // smcse / gmcse
};

struct ChiSquareSummary {
    double mean = 0.0;
    double variance = 0.0;
    /// Percentage of statistics below the theoretical quantile at each level.
    std::vector<std::pair<double, double>> percentiles;
    double ks_statistic = 0.0;
};

enum class Alternative { less, greater };

struct PowerResult {
    std::string param;
    Alternative alternative = Alternative::less;
    double alpha = 0.05;
    double expected_power = 0.0;
    double simulated_power = 0.0;
    double critical_value = 0.0;
    double true_value = 0.0;
    double mcse = 0.0;
};

struct McReport {
    Example1Config config;
    Index df = 0;
    std::vector<ParameterSummary> tau;
    /// mu_zeta and Sigma_zeta of both samples.
    std::vector<ParameterSummary> factor_moments;
    ChiSquareSummary chi_square;
    int replications = 0;
    int successes = 0;
    bool unreliable = false;
    std::vector<PowerResult> power;
    std::vector<ReplicationRecord> records;
};

[[nodiscard]] McReport run_monte_carlo(const Example1Config& config);

/// Aggregates replication records (sorted by index) into a report.
[[nodiscard]] McReport summarize(const Example1Config& config, const ModelSpec& spec, std::vector<ReplicationRecord> records);

/// EP = Phi(-z - delta* / MCse) for `less`, Phi(-z + delta* / MCse) for
/// `greater`; SP = share of successful replications whose estimate / Gse
/// passes the one-sided critical value. Throws ConfigError for an unknown
/// parameter or an alpha outside (0, 1).
[[nodiscard]] PowerResult power_analysis(const Example1Config& config, const McReport& mc, const std::string& param,
                                         Alternative alternative, double alpha);

[[nodiscard]] double normal_cdf(double x);
[[nodiscard]] double normal_quantile(double p);
[[nodiscard]] double chi_square_quantile(double p, double df);

}  // namespace corrsem
