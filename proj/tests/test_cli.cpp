#include "corrsem/cli.hpp"
#include "corrsem/spec_io.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace corrsem;
namespace fs = std::filesystem;

namespace {

const std::string fixtures = CORRSEM_FIXTURES;
const std::string golden_dir = CORRSEM_GOLDEN;

struct Run {
    int status;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int status = run_cli(args, out, err);
    return {status, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("corrsem_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

// Drops the run-dependent manifest fields: timestamp and absolute input paths.
Json normalized(Json report) {
    auto& m = report["manifest"];
    m.erase("timestamp");
    Json inputs = Json::array();
    for (const auto& p : m["inputs"]) inputs.push_back(fs::path(p.get<std::string>()).filename().string());
    m["inputs"] = inputs;
    m["options"].erase("out");
    return report;
}

void compare_json(const Json& got, const Json& want, const std::string& path) {
    CAPTURE(path);
    if (want.is_number() && got.is_number()) {
        const double a = got.get<double>(), b = want.get<double>();
        CHECK(std::abs(a - b) <= 1e-6 * std::abs(b) + 1e-9);
        return;
    }
    REQUIRE(got.type() == want.type());
    if (want.is_object()) {
        std::vector<std::string> gk, wk;
        for (auto it = got.begin(); it != got.end(); ++it) gk.push_back(it.key());
        for (auto it = want.begin(); it != want.end(); ++it) wk.push_back(it.key());
        REQUIRE(gk == wk);
        for (const auto& k : wk) compare_json(got[k], want[k], path + "." + k);
    } else if (want.is_array()) {
        REQUIRE(got.size() == want.size());
        for (std::size_t k = 0; k < want.size(); ++k) compare_json(got[k], want[k], path + "[" + std::to_string(k) + "]");
    } else {
        CHECK(got == want);
    }
}

void check_golden(const Json& report, const std::string& name) {
    const fs::path file = fs::path(golden_dir) / name;
    const Json got = normalized(report);
    if (std::getenv("CORRSEM_UPDATE_GOLDEN")) {
        std::ofstream(file, std::ios::binary) << got.dump(2) << "\n";
        return;
    }
    REQUIRE(fs::exists(file));
    compare_json(got, read_json_file(file), "$");
}

std::set<std::string> listing(const fs::path& dir) {
    std::set<std::string> names;
    for (const auto& e : fs::recursive_directory_iterator(dir)) names.insert(fs::relative(e.path(), dir).string());
    return names;
}

}  // namespace

TEST_CASE("validate the shipped example 1 spec") {
    const Run r = run({"validate", fixtures + "/example1_model.json"});
    REQUIRE(r.status == exit_ok);
    const Json j = Json::parse(r.out);
    CHECK(j["schema"] == report_schema);
    CHECK(j["kind"] == "validate");
    CHECK(j["result"]["d_theta"] == 17);
    CHECK(j["result"]["df"] == 6);
    CHECK(r.err.empty());
    check_golden(j, "validate_example1.json");
}

TEST_CASE("fit the shipped example 1 dataset") {
    const Run r = run({"fit", fixtures + "/example1_model.json", fixtures + "/example1_data.csv"});
    REQUIRE(r.status == exit_ok);
    const Json j = Json::parse(r.out);
    CHECK(j["result"]["converged"] == true);
    CHECK(j["result"]["df"] == 6);
    const Json& params = j["result"]["parameters"];
    REQUIRE(params.size() == 17);
    for (std::size_t t = 0; t < 8; ++t) {
        CHECK(params[t].contains("se_ni"));
        CHECK(params[t].contains("se_corrected"));
        CHECK(params[t].contains("se_sandwich"));
    }
    CHECK(j["manifest"]["version"] == CORRSEM_VERSION);
    check_golden(j, "fit_example1.json");
}

TEST_CASE("se column selection") {
    const Run r = run({"fit", fixtures + "/example1_model.json", fixtures + "/example1_data.csv", "--se", "sandwich"});
    REQUIRE(r.status == exit_ok);
    const Json p = Json::parse(r.out)["result"]["parameters"][0];
    CHECK(p.contains("se_sandwich"));
    CHECK_FALSE(p.contains("se_ni"));
    CHECK_FALSE(p.contains("se_corrected"));
}

TEST_CASE("random-mode fit with anchor and file fourth moments") {
    for (const std::string fm : {std::string("anchor:x"), fixtures + "/example1_fourth_moments.json"}) {
        const Run r = run({"fit", fixtures + "/example1_model_random.json", fixtures + "/example1_data.csv",
                           "--fourth-moments", fm});
        REQUIRE(r.status == exit_ok);
        const Json j = Json::parse(r.out);
        for (const auto& p : j["result"]["parameters"])
            if (p["label"].get<std::string>().find("Sigma_zeta") != std::string::npos)
                CHECK(p["corrected_source"] == "random_correction");
    }
}

TEST_CASE("unbalanced panel fixture fits") {
    const Run r = run({"fit", fixtures + "/panel_model.json", fixtures + "/panel_data.csv", "--fourth-moments",
                       "anchor:capital"});
    CHECK(r.status == exit_ok);
    const Json j = Json::parse(r.out);
    CHECK(j["result"]["df"] == 17);
    CHECK(j["result"]["converged"] == true);
}

TEST_CASE("user errors exit with status 1") {
    const std::string model = fixtures + "/example1_model.json";
    const std::string data = fixtures + "/example1_data.csv";
    CHECK(run({}).status == exit_user_error);
    CHECK(run({"frobnicate"}).status == exit_user_error);
    CHECK(run({"validate", model, "--bogus"}).status == exit_user_error);
    CHECK(run({"validate", "/nonexistent/model.json"}).status == exit_user_error);
    CHECK(run({"fit", model}).status == exit_user_error);
    CHECK(run({"fit", model, "/nonexistent/data.csv"}).status == exit_user_error);
    CHECK(run({"fit", model, data, "--se", "weird"}).status == exit_user_error);
    CHECK(run({"fit", model, data, "--sandwich-scaling", "weird"}).status == exit_user_error);
    CHECK(run({"simulate", model}).status == exit_user_error);  // wrong schema

    const fs::path dir = scratch("schema");
    std::ofstream(dir / "bad.json") << R"({"schema": "corrsem.model/1", "zeta_mode": "fixed", "parameters": [],
                                         "samples": [], "colour": 3})";
    const Run bad = run({"validate", (dir / "bad.json").string()});
    CHECK(bad.status == exit_user_error);
    CHECK(bad.err.find("colour") != std::string::npos);
    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(run({"validate", (dir / "broken.json").string()}).status == exit_user_error);
    fs::remove_all(dir);
}

TEST_CASE("numerical failures exit with status 2") {
    const Run r = run({"fit", fixtures + "/example1_model.json", fixtures + "/example1_data.csv", "--max-iter", "1"});
    CHECK(r.status == exit_numerical_failure);
    CHECK(r.err.find("converge") != std::string::npos);

    // a constant column makes the sample covariance singular
    const fs::path dir = scratch("singular");
    {
        std::ofstream f(dir / "data.csv");
        f << "sample_id,individual_id,v1,v2\n";
        for (int j = 0; j < 10; ++j) f << "s1," << j << "," << j << ",1\n";
    }
    {
        std::ofstream f(dir / "model.json");
        f << R"({"schema": "corrsem.model/1", "zeta_mode": "fixed", "parameters": [],
                 "samples": [{"id": "s1", "variables": ["v1", "v2"], "k_zeta": 2, "k_eps0": 0,
                              "eps_blocks": [], "beta": [0, 0], "B": [[1, 0], [0, 1]]}]})";
    }
    CHECK(run({"fit", (dir / "model.json").string(), (dir / "data.csv").string()}).status == exit_numerical_failure);
    fs::remove_all(dir);
}

TEST_CASE("simulate is deterministic apart from the timestamp") {
    const std::vector<std::string> args{"simulate", fixtures + "/example1_simulation.json", "--replications", "8"};
    const Run a = run(args);
    const Run b = run(args);
    REQUIRE(a.status == exit_ok);
    REQUIRE(b.status == exit_ok);
    Json ja = Json::parse(a.out), jb = Json::parse(b.out);
    CHECK(ja["manifest"]["seed"] == 20050601);
    ja["manifest"].erase("timestamp");
    jb["manifest"].erase("timestamp");
    CHECK(ja.dump() == jb.dump());

    const Run c = run({"simulate", fixtures + "/example1_simulation.json", "--replications", "8", "--seed", "5"});
    Json jc = Json::parse(c.out);
    jc["manifest"].erase("timestamp");
    CHECK(jc["manifest"]["seed"] == 5);
    CHECK(jc["result"] != ja["result"]);
}

TEST_CASE("output is confined to the --out directory") {
    const fs::path root = scratch("confined");
    const fs::path prev = fs::current_path();
    fs::current_path(root);
    const Run r = run({"simulate", fixtures + "/example1_simulation.json", "--replications", "4", "--out", "res"});
    const Run v = run({"validate", fixtures + "/example1_model.json", "--out", "res/v"});
    fs::current_path(prev);
    CHECK(r.status == exit_ok);
    CHECK(v.status == exit_ok);
    CHECK(listing(root) == std::set<std::string>{"res", "res/report.json", "res/report.txt", "res/v",
                                                 "res/v/report.json", "res/v/report.txt"});
    const Json j = read_json_file(root / "res" / "report.json");
    CHECK(j["kind"] == "simulate");
    CHECK(slurp(root / "res" / "report.txt") == r.out);
    fs::remove_all(root);
}
