#include "corrsem/errors.hpp"
#include "corrsem/mc.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace corrsem;

namespace {

double mean(const VectorXd& v) { return v.mean(); }

double cov(const VectorXd& a, const VectorXd& b) {
    return ((a.array() - a.mean()) * (b.array() - b.mean())).sum() / static_cast<double>(a.size() - 1);
}

// Standard error of the sample covariance from the spread of the products.
double cov_se(const VectorXd& a, const VectorXd& b) {
    const VectorXd prod = ((a.array() - a.mean()) * (b.array() - b.mean())).matrix();
    return std::sqrt(cov(prod, prod) / static_cast<double>(a.size()));
}

Example1Config small(ZetaMode mode, int replications) {
    Example1Config c;
    c.zeta_mode = mode;
    c.replications = replications;
    return c;
}

}  // namespace

TEST_CASE("common-shock weights") {
    const Example1Config c;
    const FactorWeights w = example1_factor_weights(c);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(w.a[i] * w.a[i] == doctest::Approx(0.07).epsilon(1e-14));
        CHECK(w.b[i] * w.b[i] == doctest::Approx(0.03).epsilon(1e-14));
    }
    Example1Config neg = c;
    neg.cov_zeta = -1.4;
    const FactorWeights wn = example1_factor_weights(neg);
    CHECK(wn.a[0] * wn.a[1] < 0.0);
}

TEST_CASE("configuration errors") {
    auto bad = [](auto mutate) {
        Example1Config c;
        mutate(c);
        return c;
    };
    CHECK_THROWS_AS(bad([](Example1Config& c) { c.cov_zeta = 2.5; }).validate(), ConfigError);
    CHECK_THROWS_AS((void)example1_factor_weights(bad([](Example1Config& c) { c.cov_zeta = 2.0; })), ConfigError);
    CHECK_THROWS_AS(bad([](Example1Config& c) { c.n2 = 2000; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](Example1Config& c) { c.var_eps[1] = 0.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](Example1Config& c) { c.tau0[7] = -0.1; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](Example1Config& c) { c.d1 = 0.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](Example1Config& c) { c.replications = 1; }).validate(), ConfigError);
    CHECK_THROWS_AS((void)run_monte_carlo(bad([](Example1Config& c) { c.replications = 1; })), ConfigError);
}

TEST_CASE("factor population moments from a million draws") {
    Example1Config c;
    c.n1 = 1000000;
    c.n2 = 1000000;
    const LatentFactors f = draw_example1_factors(c, 17);
    CHECK(std::abs(mean(f.zeta1) - 5.0) < 3.0 * std::sqrt(cov(f.zeta1, f.zeta1) / c.n1));
    CHECK(std::abs(mean(f.zeta2) - 10.0) < 3.0 * std::sqrt(cov(f.zeta2, f.zeta2) / c.n2));
    CHECK(std::abs(cov(f.zeta1, f.zeta1) - 2.0) < 3.0 * cov_se(f.zeta1, f.zeta1));
    CHECK(std::abs(cov(f.zeta2, f.zeta2) - 2.0) < 3.0 * cov_se(f.zeta2, f.zeta2));
    CHECK(std::abs(cov(f.zeta1, f.zeta2) - 1.4) < 3.0 * cov_se(f.zeta1, f.zeta2));
}

TEST_CASE("observed moments agree with the implied moments at the truth") {
    Example1Config c;
    c.zeta_mode = ZetaMode::random;
    c.n1 = 400000;
    c.n2 = 200000;
    const ModelSpec spec = example1_spec(ZetaMode::random);
    const ImpliedMoments implied = implied_moments(spec, example1_true_theta(spec, c));
    const Dataset d = generate_example1_sample(c, 23);
    for (std::size_t i = 0; i < 2; ++i) {
        const MatrixXd& x = d.samples[i].observations;
        for (Index r = 0; r < x.cols(); ++r) {
            const VectorXd a = x.col(r);
            CHECK(std::abs(mean(a) - implied.mu[i](r)) < 3.0 * std::sqrt(cov(a, a) / static_cast<double>(a.size())));
            for (Index s = 0; s <= r; ++s) {
                const VectorXd b = x.col(s);
                CAPTURE(i);
                CAPTURE(r);
                CAPTURE(s);
                CHECK(std::abs(cov(a, b) - implied.sigma[i](r, s)) < 3.0 * cov_se(a, b));
            }
        }
    }
}

TEST_CASE("identical seeds give bit-identical datasets") {
    for (ZetaMode mode : {ZetaMode::fixed, ZetaMode::random}) {
        const Example1Config c = small(mode, 2);
        const Dataset a = generate_example1_sample(c, 77);
        const Dataset b = generate_example1_sample(c, 77);
        const Dataset other = generate_example1_sample(c, 78);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK((a.samples[i].observations - b.samples[i].observations).norm() == 0.0);
            CHECK((a.samples[i].observations - other.samples[i].observations).norm() > 0.0);
        }
    }
}

TEST_CASE("fixed mode reuses the latent draw across replications") {
    const Example1Config fixed = small(ZetaMode::fixed, 2);
    const Example1Config random = small(ZetaMode::random, 2);
    const auto h = [](const Example1Draw& d) {
        return oracle::hash_values(d.factors.zeta1) ^ (oracle::hash_values(d.factors.zeta2) << 1);
    };
    const std::uint64_t first = h(simulate_example1(fixed, replication_seed(fixed.seed, 0)));
    for (int r = 1; r < 5; ++r) CHECK(h(simulate_example1(fixed, replication_seed(fixed.seed, r))) == first);
    CHECK(h(simulate_example1(random, replication_seed(random.seed, 0))) !=
          h(simulate_example1(random, replication_seed(random.seed, 1))));
    // the errors still change between fixed-mode replications
    CHECK((simulate_example1(fixed, 1).errors[0] - simulate_example1(fixed, 2).errors[0]).norm() > 0.0);
    // first n2 individuals share the factor correlation, the rest of sample 1 do not pair
    const Example1Draw d = simulate_example1(fixed, 1);
    CHECK(d.factors.zeta1.size() == 1000);
    CHECK(d.factors.zeta2.size() == 500);
}

TEST_CASE("replication seeds are distinct and reproducible") {
    CHECK(replication_seed(1, 0) == replication_seed(1, 0));
    CHECK(replication_seed(1, 0) != replication_seed(1, 1));
    CHECK(replication_seed(1, 0) != replication_seed(2, 0));
    CHECK(fixed_factor_seed(1) != replication_seed(1, 0));
}

TEST_CASE("serial and parallel runs give identical reports") {
    for (ZetaMode mode : {ZetaMode::fixed, ZetaMode::random}) {
        Example1Config c = small(mode, 24);
        c.threads = 1;
        const McReport serial = run_monte_carlo(c);
        c.threads = 4;
        const McReport parallel = run_monte_carlo(c);
        REQUIRE(serial.records.size() == parallel.records.size());
        for (std::size_t r = 0; r < serial.records.size(); ++r) {
            CHECK(serial.records[r].index == static_cast<int>(r));
            CHECK(serial.records[r].ok == parallel.records[r].ok);
            CHECK((serial.records[r].theta_hat - parallel.records[r].theta_hat).norm() == 0.0);
            CHECK((serial.records[r].se_s - parallel.records[r].se_s).norm() == 0.0);
            CHECK(serial.records[r].q == parallel.records[r].q);
        }
        for (std::size_t t = 0; t < 8; ++t) {
            CHECK(serial.tau[t].mcse == parallel.tau[t].mcse);
            CHECK(serial.tau[t].gse_ratio == parallel.tau[t].gse_ratio);
        }
        CHECK(serial.chi_square.mean == parallel.chi_square.mean);
    }
}

TEST_CASE("report invariants") {
    const McReport mc = run_monte_carlo(small(ZetaMode::random, 30));
    CHECK(mc.df == 6);
    CHECK(mc.successes <= mc.replications);
    CHECK(mc.replications == 30);
    CHECK(mc.tau.size() == 8);
    CHECK(mc.factor_moments.size() == 4);
    for (const auto& s : mc.tau) {
        CHECK(std::isfinite(s.gse_ratio));
        CHECK(std::isfinite(s.variability_ratio));
    }
    CHECK(mc.chi_square.percentiles.size() == 5);
}

TEST_CASE("summaries use the R - 1 divisor and flag unreliable runs") {
    const Example1Config c = small(ZetaMode::fixed, 4);
    const ModelSpec spec = example1_spec(ZetaMode::fixed);
    std::vector<ReplicationRecord> records;
    const double values[] = {1.0, 2.0, 4.0};
    for (int r = 0; r < 3; ++r) {
        ReplicationRecord rec;
        rec.index = r;
        rec.ok = true;
        rec.theta_hat = VectorXd::Constant(spec.dim(), values[r]);
        rec.se_ni = VectorXd::Constant(spec.dim(), 1.0);
        rec.se_g = VectorXd::Constant(spec.dim(), values[r]);
        rec.se_s = VectorXd::Constant(spec.dim(), 2.0 * values[r]);
        rec.q = 6.0;
        records.push_back(rec);
    }
    ReplicationRecord failed;
    failed.index = 3;
    failed.failure = "did not converge";
    records.push_back(failed);
    const McReport mc = summarize(c, spec, records);
    // sd of {1, 2, 4} with divisor 2
    const double sd = std::sqrt(((1.0 - 7.0 / 3) * (1.0 - 7.0 / 3) + (2.0 - 7.0 / 3) * (2.0 - 7.0 / 3) +
                                 (4.0 - 7.0 / 3) * (4.0 - 7.0 / 3)) / 2.0);
    CHECK(mc.tau[0].mcse == doctest::Approx(sd).epsilon(1e-14));
    CHECK(mc.tau[0].gmcse == doctest::Approx(sd).epsilon(1e-14));
    CHECK(mc.tau[0].variability_ratio == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(mc.tau[0].mean_estimate == doctest::Approx(7.0 / 3));
    CHECK(mc.successes == 3);
    CHECK(mc.unreliable);  // 1 of 4 failed
}

TEST_CASE("power computations") {
    SUBCASE("zero true value: EP is the size and SP is near it") {
        Example1Config c = small(ZetaMode::fixed, 400);
        c.tau0[5] = 0.0;
        const McReport mc = run_monte_carlo(c);
        for (Alternative alt : {Alternative::less, Alternative::greater}) {
            const PowerResult p = power_analysis(c, mc, "delta1", alt, 0.05);
            CHECK(p.expected_power == doctest::Approx(0.05).epsilon(1e-12));
            CHECK(std::abs(p.simulated_power - 0.05) < 3.0 * std::sqrt(0.05 * 0.95 / mc.successes));
        }
    }
    SUBCASE("expected power from the closed form") {
        const Example1Config c = small(ZetaMode::fixed, 50);
        const McReport mc = run_monte_carlo(c);
        const PowerResult p = power_analysis(c, mc, "delta1", Alternative::less, 0.05);
        CHECK(p.critical_value == doctest::Approx(1.6448536269514722).epsilon(1e-12));
        CHECK(p.expected_power == doctest::Approx(normal_cdf(-p.critical_value + 0.01 / p.mcse)).epsilon(1e-12));
        CHECK_THROWS_AS((void)power_analysis(c, mc, "nope", Alternative::less, 0.05), ConfigError);
        CHECK_THROWS_AS((void)power_analysis(c, mc, "delta1", Alternative::less, 1.5), ConfigError);
    }
}

TEST_CASE("distribution helpers") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-13));
    CHECK(normal_cdf(normal_quantile(0.3)) == doctest::Approx(0.3).epsilon(1e-13));
    CHECK(chi_square_quantile(0.95, 6.0) == doctest::Approx(12.591587243743977).epsilon(1e-12));
    CHECK_THROWS_AS((void)normal_quantile(0.0), ConfigError);
}
