// Regenerates the files under fixtures/ from pinned seeds.
#include "corrsem/data.hpp"
#include "corrsem/mc.hpp"
#include "corrsem/spec_io.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace fs = std::filesystem;
using namespace corrsem;

namespace {

constexpr std::uint64_t fixture_seed = 20050601;

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << body;
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

EntryTemplate column(std::initializer_list<Entry> values) {
    EntryTemplate t;
    t.rows = static_cast<Index>(values.size());
    t.cols = 1;
    t.slots = values;
    return t;
}

// One factor measured on four occasions by capital, credit risk and market
// risk ratios; capital's loading is fixed at 1 and its normal error shares a
// variance across occasions.
ModelSpec panel_spec() {
    std::vector<SampleModel> years;
    for (int year = 2000; year <= 2003; ++year) {
        SampleModel s;
        s.id = "y" + std::to_string(year);
        s.variables = {"capital", "credit", "market"};
        s.k_zeta = 1;
        s.k_eps0 = 1;
        s.eps_blocks = {1, 1};
        s.beta = column({Entry::constant(0), Entry::constant(0), Entry::constant(0)});
        s.loadings = EntryTemplate::zeros(3, 4);
        s.loadings.at(0, 0) = Entry::constant(1);
        s.loadings.at(0, 1) = Entry::constant(1);
        s.loadings.at(1, 0) = Entry::param("beta2");
        s.loadings.at(1, 2) = Entry::constant(1);
        s.loadings.at(2, 0) = Entry::param("beta3");
        s.loadings.at(2, 3) = Entry::constant(1);
        s.sigma_eps0 = column({Entry::param("s2_e1")});
        years.push_back(std::move(s));
    }
    return ModelSpec(std::move(years), {"beta2", "beta3", "s2_e1"}, ZetaMode::random);
}

// Banks per missingness group and the years (2000..2003) each group reports.
struct Group {
    int banks;
    std::array<bool, 4> years;
};

const std::vector<Group>& panel_groups() {
    static const std::vector<Group> groups{
        {2, {false, false, false, true}}, {1, {false, false, true, false}}, {2, {false, false, true, true}},
        {4, {false, true, false, true}},  {1, {false, true, true, false}},  {3, {false, true, true, true}},
        {1, {true, false, true, false}},  {1, {true, false, true, true}},   {1, {true, true, false, true}},
        {1, {true, true, true, false}},   {1, {true, true, true, true}},
    };
    return groups;
}

Dataset panel_data(const ModelSpec& spec) {
    std::mt19937_64 eng(fixture_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::chi_squared_distribution<double> chi(3.0);
    auto skewed = [&](double var) { return (chi(eng) - 3.0) * std::sqrt(var / 6.0); };
    const double beta2 = 0.8, beta3 = -0.5, s2_e1 = 0.004;

    Dataset data;
    for (const auto& s : spec.samples()) data.samples.push_back(SampleData{s.id, {}, MatrixXd(0, 3)});
    std::vector<std::vector<std::array<double, 3>>> rows(4);
    int bank = 0;
    for (const Group& g : panel_groups()) {
        for (int b = 0; b < g.banks; ++b) {
            ++bank;
            const std::string id = std::string("bank") + (bank < 10 ? "0" : "") + std::to_string(bank);
            double zeta = skewed(0.02);
            for (std::size_t t = 0; t < 4; ++t) {
                zeta = 0.5 * zeta + skewed(0.015);
                if (!g.years[t]) continue;
                const double capital = zeta + std::sqrt(s2_e1) * normal(eng);
                const double credit = beta2 * zeta + skewed(0.01);
                const double market = beta3 * zeta + skewed(0.01);
                data.samples[t].individuals.push_back(id);
                rows[t].push_back({capital, credit, market});
            }
        }
    }
    for (std::size_t t = 0; t < 4; ++t) {
        auto& obs = data.samples[t].observations;
        obs.resize(static_cast<Index>(rows[t].size()), 3);
        for (std::size_t j = 0; j < rows[t].size(); ++j)
            for (Index c = 0; c < 3; ++c) obs(static_cast<Index>(j), c) = rows[t][j][static_cast<std::size_t>(c)];
    }
    return data;
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::path("fixtures");
    try {
        fs::create_directories(dir);

        const ModelSpec fixed = example1_spec(ZetaMode::fixed);
        write_json(dir / "example1_model.json", model_to_json(fixed));
        write_json(dir / "example1_model_random.json", model_to_json(example1_spec(ZetaMode::random)));

        Example1Config config;
        config.seed = fixture_seed;
        {
            std::ofstream f(dir / "example1_data.csv", std::ios::binary);
            write_dataset(f, generate_example1_sample(config, replication_seed(config.seed, 0)), fixed);
        }
        SimulationDocument sim{config, {PowerRequest{"delta1", Alternative::less, 0.05}}};
        write_json(dir / "example1_simulation.json", simulation_to_json(sim));

        // Var[vec(zeta zeta')] of the random-factor population: kappa4 + 2 sigma^4.
        const FactorWeights w = example1_factor_weights(config);
        Json fourth;
        fourth["schema"] = fourth_moments_schema;
        Json samples = Json::object();
        for (std::size_t i = 0; i < 2; ++i) {
            const double kappa4 = (std::pow(w.a[i], 4) + std::pow(w.b[i], 4)) * 48.0 * config.d1;
            samples[i == 0 ? "pop1" : "pop2"] = Json::array({Json::array({kappa4 + 2.0 * config.var_zeta[i] * config.var_zeta[i]})});
        }
        fourth["samples"] = samples;
        write_json(dir / "example1_fourth_moments.json", fourth);

        const ModelSpec panel = panel_spec();
        write_json(dir / "panel_model.json", model_to_json(panel, {{"beta2", 0.5}, {"beta3", -0.5}}));
        {
            std::ofstream f(dir / "panel_data.csv", std::ios::binary);
            write_dataset(f, panel_data(panel), panel);
        }
    } catch (const std::exception& e) {
        std::cerr << "make_fixtures: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
