#pragma once

#include "corrsem/linalg.hpp"
#include "corrsem/model_spec.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace corrsem {

/// Observations of one sample: one row per individual.
struct SampleData {
    std::string id;
    std::vector<std::string> individuals;
    MatrixXd observations;  // n x p

    [[nodiscard]] Index n() const { return observations.rows(); }
};

/// Multisample data in the model's sample order.
struct Dataset {
    std::vector<SampleData> samples;
};

/// Cross-sample matching of individuals by id.
struct Pairing {
    Eigen::MatrixXi counts;  // n(ik); diagonal n(i)
    /// rows[i][k] lists (row in sample i, row in sample k) for shared ids, in
    /// order of sample i's rows.
    std::vector<std::vector<std::vector<std::pair<Index, Index>>>> rows;
};

struct SampleStats {
    std::vector<Index> n;
    std::vector<VectorXd> mean;
    std::vector<MatrixXd> cov;  // unbiased, divisor n - 1
    std::vector<bool> cov_positive_definite;
    Index n_total = 0;
    std::vector<double> ratio;  // n(i) / n
    VectorXd c;                 // stacked (mean, vech cov)
    Pairing pairing;
    std::vector<std::string> warnings;
};

/// Parses the delimited format: header `sample_id,individual_id,<variables...>`;
/// a row fills exactly its own sample's variables, all other cells empty.
/// Throws DataError for unknown samples, missing/extra cells, non-numeric
/// cells and duplicate (sample, individual) keys.
[[nodiscard]] Dataset parse_dataset(std::istream& in, const ModelSpec& spec);
[[nodiscard]] Dataset load_dataset(const std::filesystem::path& path, const ModelSpec& spec);

/// Writes a dataset in the format parse_dataset reads.
void write_dataset(std::ostream& out, const Dataset& data, const ModelSpec& spec);

/// Two-pass means and unbiased covariances; requires n(i) >= 2.
[[nodiscard]] SampleStats compute_stats(const Dataset& data);

[[nodiscard]] Pairing pairing_counts(const Dataset& data);

}  // namespace corrsem
