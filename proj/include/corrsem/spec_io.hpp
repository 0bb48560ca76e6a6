#pragma once

#include "corrsem/fit.hpp"
#include "corrsem/inference.hpp"
#include "corrsem/mc.hpp"
#include "corrsem/model_spec.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#ifndef CORRSEM_VERSION
#define CORRSEM_VERSION "unknown"
#endif

namespace corrsem {

using Json = nlohmann::ordered_json;

inline constexpr const char* model_schema = "corrsem.model/1";
inline constexpr const char* simulation_schema = "corrsem.simulation/1";
inline constexpr const char* fourth_moments_schema = "corrsem.fourth_moments/1";
inline constexpr const char* report_schema = "corrsem.report/1";

/// Model file contents: the validated spec plus optional start values.
struct ModelDocument {
    ModelSpec spec;
    std::map<std::string, double> start;
};

/// Reads a JSON document; unreadable file or malformed JSON throws ConfigError.
[[nodiscard]] Json read_json_file(const std::filesystem::path& path);

/// Schema violations throw ConfigError naming the offending key;
/// structural problems surface as StructuralError from ModelSpec.
[[nodiscard]] ModelDocument parse_model(const Json& doc);
[[nodiscard]] ModelDocument load_model(const std::filesystem::path& path);
[[nodiscard]] Json model_to_json(const ModelSpec& spec, const std::map<std::string, double>& start = {});

/// Flat object of parameter label -> start value.
[[nodiscard]] std::map<std::string, double> parse_start_values(const Json& doc);

struct PowerRequest {
    std::string param;
    Alternative alternative = Alternative::less;
    double alpha = 0.05;
};

struct SimulationDocument {
    Example1Config config;
    std::vector<PowerRequest> power;
};

[[nodiscard]] SimulationDocument parse_simulation(const Json& doc);
[[nodiscard]] Json simulation_to_json(const SimulationDocument& sim);

/// Per-sample Var[vec(zeta zeta')] matrices keyed by sample id.
[[nodiscard]] FourthMomentEstimate parse_fourth_moments(const Json& doc, const ModelSpec& spec);

struct RunManifest {
    std::string command;
    std::vector<std::string> inputs;
    std::map<std::string, std::string> options;
    std::optional<std::uint64_t> seed;
    std::string version = CORRSEM_VERSION;
    std::string timestamp;  // ISO 8601 UTC
};

[[nodiscard]] Json manifest_to_json(const RunManifest& m);
[[nodiscard]] std::string utc_timestamp();

/// Which a.s.e. columns a fit report carries.
struct SeColumns {
    bool ni = true;
    bool corrected = true;
    bool sandwich = true;
};

[[nodiscard]] Json validation_report(const RunManifest& m, const ModelSpec& spec, const ValidationReport& v);
[[nodiscard]] Json fit_report(const RunManifest& m, const ModelSpec& spec, const FitResult& fit,
                              const InferenceResult& inference, const SeColumns& columns);
[[nodiscard]] Json simulation_report(const RunManifest& m, const McReport& mc);

/// Human-readable renderings of the structured reports.
[[nodiscard]] std::string render_validation_table(const Json& report);
[[nodiscard]] std::string render_fit_table(const Json& report);
[[nodiscard]] std::string render_simulation_table(const Json& report);

[[nodiscard]] const char* to_string(CrossBlockScaling s);
[[nodiscard]] const char* to_string(Alternative a);
[[nodiscard]] const char* to_string(SeSource s);

}  // namespace corrsem
