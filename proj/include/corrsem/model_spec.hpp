#pragma once

#include "corrsem/linalg.hpp"

#include <optional>
#include <string>
#include <vector>

namespace corrsem {

/// One template slot: a fixed constant or a reference to a named parameter.
class Entry {
public:
    static Entry constant(double value) { return Entry(value); }
    static Entry param(std::string name) { return Entry(std::move(name)); }

    [[nodiscard]] bool is_fixed() const { return !name_.has_value(); }
    [[nodiscard]] double value() const { return value_; }
    [[nodiscard]] const std::string& name() const { return *name_; }

    friend bool operator==(const Entry&, const Entry&) = default;

private:
    explicit Entry(double value) : value_(value) {}
    explicit Entry(std::string name) : name_(std::move(name)) {}

    double value_ = 0.0;
    std::optional<std::string> name_;
};

/// Row-major rows x cols grid of template entries.
struct EntryTemplate {
    Index rows = 0;
    Index cols = 0;
    std::vector<Entry> slots;

    [[nodiscard]] static EntryTemplate zeros(Index rows, Index cols);
    [[nodiscard]] const Entry& at(Index r, Index c) const { return slots[static_cast<std::size_t>(r * cols + c)]; }
    Entry& at(Index r, Index c) { return slots[static_cast<std::size_t>(r * cols + c)]; }
};

enum class ZetaMode { fixed, random };

[[nodiscard]] const char* to_string(ZetaMode mode);

/// Declarative description of one sample's measurement model
///
///   nu = beta + B xi,   xi = (zeta, eps0, eps1, ..., epsL)
///
/// When `gamma` is present the templates describe a recursive system
/// nu = beta + gamma nu + B xi, reduced to beta <- (I - gamma)^-1 beta and
/// B <- (I - gamma)^-1 B during assembly.
struct SampleModel {
    std::string id;
    std::vector<std::string> variables;
    Index k_zeta = 0;
    Index k_eps0 = 0;
    std::vector<Index> eps_blocks;
    EntryTemplate beta;        // p x 1
    EntryTemplate loadings;    // p x (k_zeta + k_eps0 + sum eps_blocks)
    EntryTemplate sigma_eps0;  // k_eps0 x k_eps0, symmetric
    std::optional<EntryTemplate> gamma;  // p x p

    [[nodiscard]] Index p() const { return static_cast<Index>(variables.size()); }
    [[nodiscard]] Index k_xi() const;
    [[nodiscard]] Index moment_count() const { return p() + vech_size(p()); }
    /// First column of block `ell` of xi (ell = 0 is eps0).
    [[nodiscard]] Index eps_offset(std::size_t ell) const;
};

/// Kind of an automatically generated unrestricted (nu) parameter.
enum class NuKind { mu_zeta, sigma_zeta, sigma_eps };

struct NuSlot {
    std::size_t sample = 0;
    NuKind kind = NuKind::mu_zeta;
    std::size_t block = 0;  // eps block index, 1-based like eps1..epsL; 0 otherwise
    Index row = 0;
    Index col = 0;
};

/// Where a tau parameter appears.
enum class SlotTarget { beta, loadings, sigma_eps0, gamma };

struct TauUse {
    std::size_t sample = 0;
    SlotTarget target = SlotTarget::beta;
    Index row = 0;
    Index col = 0;
};

/// Validated multisample model with its parameter index maps.
///
/// theta = (tau', nu')': tau are the named template parameters in
/// declaration order, nu the generated per-sample factor means, factor
/// covariances and nonnormal error covariances (lower triangles).
class ModelSpec {
public:
    /// Throws StructuralError on any dimensional inconsistency, undeclared
    /// or unused parameter name, or asymmetric sigma_eps0 template.
    ModelSpec(std::vector<SampleModel> samples, std::vector<std::string> tau_names, ZetaMode mode);

    [[nodiscard]] const std::vector<SampleModel>& samples() const { return samples_; }
    [[nodiscard]] const SampleModel& sample(std::size_t i) const { return samples_[i]; }
    [[nodiscard]] std::size_t sample_count() const { return samples_.size(); }
    [[nodiscard]] ZetaMode zeta_mode() const { return mode_; }

    [[nodiscard]] const std::vector<std::string>& tau_names() const { return tau_names_; }
    [[nodiscard]] Index tau_size() const { return static_cast<Index>(tau_names_.size()); }
    [[nodiscard]] const std::vector<NuSlot>& nu_layout() const { return nu_layout_; }
    [[nodiscard]] Index nu_size() const { return static_cast<Index>(nu_layout_.size()); }
    [[nodiscard]] Index dim() const { return tau_size() + nu_size(); }
    [[nodiscard]] Index moment_count() const;
    [[nodiscard]] Index moment_offset(std::size_t sample) const { return moment_offsets_[sample]; }

    [[nodiscard]] const std::vector<TauUse>& tau_uses(Index tau) const { return tau_uses_[static_cast<std::size_t>(tau)]; }
    /// Index into theta of a tau name or generated nu label.
    [[nodiscard]] std::optional<Index> find_param(const std::string& label) const;
    [[nodiscard]] const std::string& param_label(Index theta_index) const { return labels_[static_cast<std::size_t>(theta_index)]; }
    [[nodiscard]] const std::vector<std::string>& param_labels() const { return labels_; }

    /// theta indices of mu_zeta for a sample (length k_zeta).
    [[nodiscard]] std::vector<Index> mu_zeta_indices(std::size_t sample) const;
    /// theta indices of vech(Sigma_zeta) for a sample, in vech order.
    [[nodiscard]] std::vector<Index> sigma_zeta_indices(std::size_t sample) const;
    [[nodiscard]] std::optional<std::size_t> find_sample(const std::string& id) const;

    /// Template flattened to (theta index or -1, constant) per slot.
    struct CompiledTemplate {
        Index rows = 0;
        Index cols = 0;
        std::vector<Index> param;
        std::vector<double> value;
    };
    struct CompiledSample {
        CompiledTemplate beta;
        CompiledTemplate loadings;
        CompiledTemplate sigma_eps0;
        std::optional<CompiledTemplate> gamma;
    };
    [[nodiscard]] const CompiledSample& compiled(std::size_t sample) const { return compiled_[sample]; }

private:
    std::vector<SampleModel> samples_;
    std::vector<std::string> tau_names_;
    ZetaMode mode_;
    std::vector<NuSlot> nu_layout_;
    std::vector<std::vector<TauUse>> tau_uses_;
    std::vector<std::string> labels_;
    std::vector<Index> moment_offsets_;
    std::vector<CompiledSample> compiled_;
};

/// Per-sample model matrices filled at a parameter value.
struct SampleMatrices {
    VectorXd beta;
    MatrixXd loadings;
    MatrixXd sigma_eps0;
    VectorXd mu_zeta;
    MatrixXd sigma_zeta;
    std::vector<MatrixXd> sigma_eps;  // eps1..epsL
    /// Structural templates before reduction (equal to beta/loadings
    /// when there is no recursive layer) and the filled Gamma.
    VectorXd structural_beta;
    MatrixXd structural_loadings;
    MatrixXd gamma;
    /// (I - Gamma)^-1, identity when there is no recursive layer.
    MatrixXd reduction;

    /// blockdiag(Sigma_zeta, Sigma_eps0, Sigma_eps1, ...).
    [[nodiscard]] MatrixXd xi_covariance() const;
};

[[nodiscard]] std::vector<SampleMatrices> assemble(const ModelSpec& spec, const VectorXd& theta);

/// Reads every named slot back from assembled structural templates into a
/// theta vector (inverse of assemble on the parameter slots).
[[nodiscard]] VectorXd read_back(const ModelSpec& spec, const std::vector<SampleMatrices>& matrices);

struct ImpliedMoments {
    std::vector<VectorXd> mu;
    std::vector<MatrixXd> sigma;
    /// Stacked (mu, vech sigma) over samples.
    VectorXd gamma;
};

[[nodiscard]] ImpliedMoments implied_moments(const ModelSpec& spec, const VectorXd& theta);

/// Analytic Jacobian d gamma / d theta' (moment_count x dim).
[[nodiscard]] MatrixXd moment_jacobian(const ModelSpec& spec, const VectorXd& theta);

/// Central finite-difference Jacobian with step max(1e-6, 1e-7 |theta_t|).
[[nodiscard]] MatrixXd moment_jacobian_fd(const ModelSpec& spec, const VectorXd& theta);

/// q = sum_i [p_i + p_i(p_i+1)/2] - d_theta; throws StructuralError if q < 0.
[[nodiscard]] Index degrees_of_freedom(const ModelSpec& spec);

struct ValidationReport {
    Index d_theta = 0;
    Index tau_size = 0;
    Index moment_count = 0;
    Index df = 0;
    Index tau_rank = 0;
    bool rank_deficient = false;
    std::vector<std::string> warnings;
};

/// Numerical identification check of the tau columns of the Jacobian at `start`.
/// Rank deficiency is reported as a warning; a wrong-length start or q < 0
/// throws StructuralError.
[[nodiscard]] ValidationReport validate_spec(const ModelSpec& spec, const VectorXd& start);

/// Numerical rank by SVD with relative threshold.
[[nodiscard]] Index numerical_rank(const MatrixXd& m, double rel_tol = 1e-9);

}  // namespace corrsem
