#pragma once

#include "corrsem/data.hpp"
#include "corrsem/linalg.hpp"
#include "corrsem/model_spec.hpp"

#include <optional>
#include <string>
#include <vector>

namespace corrsem {

/// Normal-theory weight per sample in (mean, vech cov) coordinates:
/// r(i) * blockdiag(Sigma^-1, 1/2 D'(Sigma^-1 (x) Sigma^-1) D).
struct WeightMatrix {
    std::vector<MatrixXd> blocks;

    /// Block-diagonal stack over samples.
    [[nodiscard]] MatrixXd stacked() const;
};

[[nodiscard]] WeightMatrix weight_matrix(const ModelSpec& spec, const VectorXd& theta, const SampleStats& stats);

/// d gamma / d theta' at theta (analytic). Throws NumericalError on non-finite entries.
[[nodiscard]] MatrixXd jacobian_gamma(const ModelSpec& spec, const VectorXd& theta);

struct NormalIndependence {
    MatrixXd v_ni;  // (1/n) (J' W J)^-1
    MatrixXd a0;    // (J' W J)^-1 J' W
};

/// Throws IdentificationError naming the parameters spanning the null
/// space when J' W J is singular. `labels` may be empty.
[[nodiscard]] NormalIndependence normal_independence_covariance(const MatrixXd& jacobian, const WeightMatrix& weights,
                                                                Index n_total,
                                                                const std::vector<std::string>& labels = {});

/// Corrected covariance with the diagonal entries that were clipped at 0.
struct CorrectedCovariance {
    MatrixXd v;
    std::vector<std::string> warnings;
};

/// Fixed factors: V_G = V_NI - Sigma_zeta / n(i) on the mu_zeta block and
/// V_G = V_NI - (2/n(i)) D+(Sigma_zeta (x) Sigma_zeta)D+' on the vech Sigma_zeta block.
[[nodiscard]] CorrectedCovariance correct_fixed_factor_moments(const MatrixXd& v_ni, const ModelSpec& spec,
                                                               const VectorXd& theta_hat, const SampleStats& stats);

/// Per-sample fourth-moment information for zeta.
struct FactorFourthMoments {
    enum class Source { user_supplied, anchor_estimated };
    Source source = Source::anchor_estimated;
    /// user_supplied: Var[vec(zeta zeta')] (k^2 x k^2), used verbatim.
    /// anchor_estimated: joint fourth cumulants kappa(a,b,c,d) laid out as a
    /// k^2 x k^2 matrix indexed by vec positions (a + k b, c + k d).
    MatrixXd matrix;

    /// Var[vec(zeta zeta')] = kappa + (I + K)(Sigma (x) Sigma) for anchor
    /// estimates; the stored matrix for user-supplied ones.
    [[nodiscard]] MatrixXd variance_of_outer(const MatrixXd& sigma_zeta) const;
};

struct FourthMomentEstimate {
    std::vector<FactorFourthMoments> samples;
};

/// Random factors: V_G = V_NI + (1/n(i)) D+ Var[vec zeta zeta'] D+' - (2/n(i)) D+(Sigma (x) Sigma)D+'
/// on each vech Sigma_zeta block. The mu_zeta blocks are left as V_NI.
[[nodiscard]] CorrectedCovariance random_factor_cov_correction(const MatrixXd& v_ni,
                                                               const std::optional<FourthMomentEstimate>& fourth,
                                                               const ModelSpec& spec, const VectorXd& theta_hat,
                                                               const SampleStats& stats);

/// Anchor variables per sample: anchors[i][a] names the observed variable
/// measuring factor a of sample i.
using AnchorMap = std::vector<std::vector<std::string>>;

/// Fourth cumulants of zeta set to the sample joint fourth cumulants of the
/// anchors. An anchor must load its factor with fixed coefficient 1, no other
/// factor or nonnormal error block, and sit outside any recursive layer
/// (StructuralError otherwise).
[[nodiscard]] FourthMomentEstimate estimate_fourth_moments(const Dataset& data, const ModelSpec& spec,
                                                           const AnchorMap& anchors);

/// Sample joint fourth cumulants of the columns of `x` (divisor n).
[[nodiscard]] MatrixXd sample_fourth_cumulants(const MatrixXd& x);

enum class CrossBlockScaling {
    /// n(ik) / (n(i) n(k)) S_d^(ik): the covariance of the two sample moment vectors.
    moment_covariance,
    /// 1 / n(ik) S_d^(ik) on every block.
    paired_count,
};

struct SandwichOptions {
    CrossBlockScaling scaling = CrossBlockScaling::moment_covariance;
};

struct SandwichResult {
    MatrixXd v_s;
    MatrixXd s_d;  // estimated covariance of c
    std::vector<std::string> warnings;
};

/// V_S = A0 S_d A0' with d_j = (nu_j, vech((nu_j - nubar)(nu_j - nubar)')) and
/// cross-sample blocks over individuals shared by both samples.
[[nodiscard]] SandwichResult sandwich_covariance(const Dataset& data, const SampleStats& stats, const MatrixXd& a0,
                                                 const SandwichOptions& options = {});

[[nodiscard]] MatrixXd moment_contributions(const SampleData& sample, const VectorXd& mean);

/// Which covariance an a.s.e. was taken from.
enum class SeSource { normal_independence, fixed_correction, random_correction, unavailable };

struct ParameterSe {
    std::string label;
    double estimate = 0.0;
    double se_ni = 0.0;
    std::optional<double> se_corrected;
    double se_sandwich = 0.0;
    SeSource corrected_source = SeSource::normal_independence;
    std::vector<std::string> flags;
};

struct InferenceResult {
    MatrixXd jacobian;
    WeightMatrix weights;
    MatrixXd a0;
    MatrixXd v_ni;
    std::optional<MatrixXd> v_g;  // absent when a random-mode correction lacks fourth moments
    MatrixXd v_s;
    std::vector<ParameterSe> table;
    std::vector<std::string> warnings;
};

struct InferenceOptions {
    SandwichOptions sandwich;
    std::optional<FourthMomentEstimate> fourth;
};

/// Runs every estimator at theta_hat and builds the per-parameter table.
[[nodiscard]] InferenceResult infer(const Dataset& data, const SampleStats& stats, const ModelSpec& spec,
                                    const VectorXd& theta_hat, const InferenceOptions& options = {});

[[nodiscard]] VectorXd standard_errors(const MatrixXd& v);

}  // namespace corrsem
