#pragma once

#include "corrsem/data.hpp"
#include "corrsem/linalg.hpp"
#include "corrsem/model_spec.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace corrsem {

enum class GradientMethod { analytic, finite_difference };

/// Inverse-Hessian approximation of the quasi-Newton iteration.
enum class HessianUpdate {
    scoring,  // inverse expected information, recomputed at every iterate
    bfgs,     // BFGS updates started from the inverse expected information
};

struct FitOptions {
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;
    double relative_tolerance = 1e-10;
    /// Central differences carry rounding noise near eps |Q| / h, so with
    /// finite_difference a gradient_tolerance of 1e-5 is the practical floor.
    GradientMethod gradient = GradientMethod::analytic;
    HessianUpdate update = HessianUpdate::scoring;
    /// Also reject steps that make any Sigma_zeta or Sigma_eps_l block
    /// indefinite. Off by default: only the implied covariances must be PD.
    bool require_psd_blocks = false;
};

struct FitResult {
    VectorXd theta_hat;
    double q_min = 0.0;
    Index df = 0;
    double p_value = 1.0;
    int iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;
    /// Condition number of each implied Sigma_nu at theta_hat.
    std::vector<double> sigma_condition;
    /// Objective after every accepted iteration, starting with the start value.
    std::vector<double> objective_trace;
    std::vector<std::string> warnings;
};

/// Q(theta) summed over samples with the raw n(i) weights. Returns nullopt
/// when some implied Sigma_nu(theta) is not positive definite.
/// Throws NumericalError if a sample covariance is singular.
[[nodiscard]] std::optional<double> discrepancy_q(const SampleStats& stats, const ModelSpec& spec,
                                                  const VectorXd& theta);

/// Analytic gradient of Q via the moment Jacobian; nullopt when infeasible.
[[nodiscard]] std::optional<VectorXd> discrepancy_gradient(const SampleStats& stats, const ModelSpec& spec,
                                                           const VectorXd& theta);

/// Central differences of Q, step max(1e-6, 1e-7 |theta_t|).
[[nodiscard]] std::optional<VectorXd> discrepancy_gradient_fd(const SampleStats& stats, const ModelSpec& spec,
                                                              const VectorXd& theta);

/// Start values: tau from `user` (else 0 for coefficients, 0.1 x variance of
/// the loading variable for sigma_eps0 diagonals), factor means/covariances
/// from anchor variables, nonnormal error variances 0.1 x diag(S).
[[nodiscard]] VectorXd default_start(const ModelSpec& spec, const SampleStats& stats,
                                     const std::map<std::string, double>& user = {});

/// Doubles every variance block (sigma_eps0 diagonal tau entries, Sigma_zeta,
/// Sigma_eps_l) up to 10 times until Q is finite. Throws NumericalError when
/// the start stays infeasible.
[[nodiscard]] VectorXd repair_start(const SampleStats& stats, const ModelSpec& spec, VectorXd start);

/// Quasi-Newton minimization of Q with backtracking line search; infeasible
/// trial points shorten the step. Once Q stops resolving the Armijo decrease,
/// scoring steps that keep Q within rounding and shrink the gradient are taken.
[[nodiscard]] FitResult fit_model(const SampleStats& stats, const ModelSpec& spec, const VectorXd& start,
                                  const FitOptions& options = {});

struct ChiSquareTest {
    double statistic = 0.0;
    Index df = 0;
    double p_value = 1.0;
};

/// Throws UndefinedStatisticError when df == 0 and NumericalError when the fit did not converge.
[[nodiscard]] ChiSquareTest chi_square_test(const FitResult& result);

/// Upper-tail chi-square probability P(X > x), X ~ chi2(df).
[[nodiscard]] double chi_square_upper_tail(double x, double df);

}  // namespace corrsem
