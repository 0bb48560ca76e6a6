#include "corrsem/fit.hpp"

#include "corrsem/errors.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace corrsem {

namespace {

struct Evaluation {
    double q = 0.0;
    VectorXd gradient;   // empty unless requested
    MatrixXd information;  // 2 sum_i n_i J_i' W_i J_i, empty unless requested
};

double log_det_pd(const MatrixXd& m, const std::string& what) {
    Eigen::LLT<MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) throw NumericalError(what + " is not positive definite");
    const auto l = llt.matrixL().toDenseMatrix();
    double ld = 0.0;
    for (Index k = 0; k < l.rows(); ++k) {
        if (!(l(k, k) > 0.0)) throw NumericalError(what + " is not positive definite");
        ld += 2.0 * std::log(l(k, k));
    }
    return ld;
}

bool blocks_psd(const ModelSpec& spec, const VectorXd& theta) {
    for (const auto& m : assemble(spec, theta)) {
        auto psd = [](const MatrixXd& b) {
            if (b.size() == 0) return true;
            Eigen::SelfAdjointEigenSolver<MatrixXd> eig(b, Eigen::EigenvaluesOnly);
            return eig.eigenvalues().minCoeff() >= 0.0;
        };
        if (!psd(m.sigma_zeta) || !psd(m.sigma_eps0)) return false;
        for (const auto& b : m.sigma_eps)
            if (!psd(b)) return false;
    }
    return true;
}

std::optional<Evaluation> evaluate(const SampleStats& stats, const ModelSpec& spec, const VectorXd& theta,
                                   bool with_gradient, bool with_information) {
    if (stats.mean.size() != spec.sample_count())
        throw DataError("sample statistics do not match the model's sample count");
    if (!theta.allFinite()) return std::nullopt;
    ImpliedMoments im;
    try {
        im = implied_moments(spec, theta);
    } catch (const NumericalError&) {
        return std::nullopt;  // singular I - Gamma
    }
    Evaluation ev;
    VectorXd moment_grad;
    if (with_gradient) moment_grad = VectorXd::Zero(spec.moment_count());
    std::vector<MatrixXd> weights;

    for (std::size_t i = 0; i < spec.sample_count(); ++i) {
        const MatrixXd& sigma = im.sigma[i];
        const MatrixXd& s = stats.cov[i];
        const Index p = sigma.rows();
        if (s.rows() != p) throw DataError("sample covariance dimension does not match the model");
        if (!sigma.allFinite()) return std::nullopt;
        Eigen::LLT<MatrixXd> llt(sigma);
        if (llt.info() != Eigen::Success) return std::nullopt;
        const MatrixXd l = llt.matrixL();
        double log_det_sigma = 0.0;
        for (Index k = 0; k < p; ++k) {
            if (!(l(k, k) > 0.0)) return std::nullopt;
            log_det_sigma += 2.0 * std::log(l(k, k));
        }
        const double log_det_s = log_det_pd(s, "sample covariance of '" + spec.sample(i).id + "'");
        const MatrixXd sigma_inv = llt.solve(MatrixXd::Identity(p, p));
        const VectorXd d = stats.mean[i] - im.mu[i];
        const VectorXd sigma_inv_d = sigma_inv * d;
        const double n = static_cast<double>(stats.n[i]);
        const double tr = (s.cwiseProduct(sigma_inv)).sum();
        ev.q += n * (tr - log_det_s + log_det_sigma - static_cast<double>(p) + d.dot(sigma_inv_d));

        if (with_gradient) {
            const MatrixXd w = sigma_inv - sigma_inv * (s + d * d.transpose()) * sigma_inv;
            const Index off = spec.moment_offset(i);
            moment_grad.segment(off, p) = -2.0 * n * sigma_inv_d;
            Index k = 0;
            for (Index c = 0; c < p; ++c)
                for (Index r = c; r < p; ++r, ++k) {
                    const double wsym = r == c ? w(r, c) : w(r, c) + w(c, r);
                    moment_grad(off + p + k) = n * wsym;
                }
        }
        if (with_information) {
            MatrixXd wi = MatrixXd::Zero(p + vech_size(p), p + vech_size(p));
            wi.topLeftCorner(p, p) = sigma_inv;
            wi.bottomRightCorner(vech_size(p), vech_size(p)) = vech_normal_weight(sigma_inv);
            weights.push_back(2.0 * n * wi);
        }
    }
    if (!std::isfinite(ev.q)) return std::nullopt;
    if (with_gradient || with_information) {
        const MatrixXd jac = moment_jacobian(spec, theta);
        if (with_gradient) ev.gradient = jac.transpose() * moment_grad;
        if (with_information) {
            ev.information = MatrixXd::Zero(spec.dim(), spec.dim());
            for (std::size_t i = 0; i < spec.sample_count(); ++i) {
                const Index off = spec.moment_offset(i);
                const Index m = weights[i].rows();
                const MatrixXd ji = jac.middleRows(off, m);
                ev.information.noalias() += ji.transpose() * weights[i] * ji;
            }
        }
    }
    return ev;
}

// Inverse of the expected information, or a scaled identity when it is singular.
MatrixXd initial_inverse_hessian(const MatrixXd& info, Index dim) {
    if (info.size() != 0) {
        Eigen::LDLT<MatrixXd> ldlt(info);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0).all()) {
            const MatrixXd inv = ldlt.solve(MatrixXd::Identity(dim, dim));
            if (inv.allFinite()) return 0.5 * (inv + inv.transpose());
        }
    }
    return MatrixXd::Identity(dim, dim) * 1e-3;
}

double condition_number(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    if (ev.minCoeff() <= 0.0) return std::numeric_limits<double>::infinity();
    return ev.maxCoeff() / ev.minCoeff();
}

// Observed variable loading a latent column through a fixed nonzero
// constant, preferring rows outside any recursive layer.
std::optional<std::pair<Index, double>> loading_row(const SampleModel& s, Index col) {
    std::optional<std::pair<Index, double>> fallback;
    for (Index r = 0; r < s.p(); ++r) {
        const Entry& e = s.loadings.at(r, col);
        if (!e.is_fixed() || e.value() == 0.0) continue;
        bool recursive = false;
        if (s.gamma)
            for (Index c = 0; c < s.p(); ++c) {
                const Entry& g = s.gamma->at(r, c);
                if (!g.is_fixed() || g.value() != 0.0) recursive = true;
            }
        if (!recursive) return std::make_pair(r, e.value());
        if (!fallback) fallback = std::make_pair(r, e.value());
    }
    return fallback;
}

}  // namespace

std::optional<double> discrepancy_q(const SampleStats& stats, const ModelSpec& spec, const VectorXd& theta) {
    auto ev = evaluate(stats, spec, theta, false, false);
    if (!ev) return std::nullopt;
    return ev->q;
}

std::optional<VectorXd> discrepancy_gradient(const SampleStats& stats, const ModelSpec& spec, const VectorXd& theta) {
    auto ev = evaluate(stats, spec, theta, true, false);
    if (!ev) return std::nullopt;
    return ev->gradient;
}

std::optional<VectorXd> discrepancy_gradient_fd(const SampleStats& stats, const ModelSpec& spec,
                                                const VectorXd& theta) {
    VectorXd g(theta.size());
    VectorXd probe = theta;
    for (Index t = 0; t < theta.size(); ++t) {
        const double h = std::max(1e-6, 1e-7 * std::abs(theta(t)));
        probe(t) = theta(t) + h;
        const auto plus = discrepancy_q(stats, spec, probe);
        probe(t) = theta(t) - h;
        const auto minus = discrepancy_q(stats, spec, probe);
        probe(t) = theta(t);
        if (!plus || !minus) return std::nullopt;
        g(t) = (*plus - *minus) / (2.0 * h);
    }
    return g;
}

VectorXd default_start(const ModelSpec& spec, const SampleStats& stats, const std::map<std::string, double>& user) {
    VectorXd start = VectorXd::Zero(spec.dim());
    if (stats.cov.size() != spec.sample_count()) throw DataError("sample statistics do not match the model");

    for (Index t = 0; t < spec.tau_size(); ++t) {
        for (const TauUse& u : spec.tau_uses(t)) {
            if (u.target != SlotTarget::sigma_eps0 || u.row != u.col) continue;
            const auto& s = spec.sample(u.sample);
            const auto row = loading_row(s, s.k_zeta + u.row);
            start(t) = row ? 0.1 * stats.cov[u.sample](row->first, row->first) / (row->second * row->second) : 0.1;
            break;
        }
    }
    // free intercepts start at the mean of their variable (coefficients start at 0)
    for (Index t = 0; t < spec.tau_size(); ++t) {
        double sum = 0.0;
        int count = 0;
        bool intercept_only = true;
        for (const TauUse& u : spec.tau_uses(t)) {
            if (u.target != SlotTarget::beta) {
                intercept_only = false;
                break;
            }
            sum += stats.mean[u.sample](u.row);
            ++count;
        }
        if (intercept_only && count > 0) start(t) = sum / count;
    }
    for (const auto& [name, value] : user) {
        const auto idx = spec.find_param(name);
        if (!idx) throw ConfigError("start value for unknown parameter '" + name + "'");
        if (*idx < spec.tau_size()) start(*idx) = value;
    }

    const auto& layout = spec.nu_layout();
    const auto mats = assemble(spec, start);
    for (std::size_t k = 0; k < layout.size(); ++k) {
        const NuSlot& slot = layout[k];
        const auto& s = spec.sample(slot.sample);
        const MatrixXd& cov = stats.cov[slot.sample];
        double v = 0.0;
        switch (slot.kind) {
            case NuKind::mu_zeta: {
                const auto row = loading_row(s, slot.row);
                if (row) v = (stats.mean[slot.sample](row->first) - mats[slot.sample].beta(row->first)) / row->second;
                break;
            }
            case NuKind::sigma_zeta: {
                const auto ra = loading_row(s, slot.row);
                const auto rb = loading_row(s, slot.col);
                if (ra && rb) {
                    v = cov(ra->first, rb->first) / (ra->second * rb->second);
                    if (slot.row == slot.col) v *= 0.9;  // leave the error share out
                } else if (slot.row == slot.col) {
                    v = 1.0;
                }
                break;
            }
            case NuKind::sigma_eps: {
                if (slot.row != slot.col) break;
                // variance the start leaves unexplained, at least a tenth of S_rr
                const auto row = loading_row(s, s.eps_offset(slot.block) + slot.row);
                if (row) {
                    const Index r = row->first;
                    const double s_rr = cov(r, r);
                    double explained = 0.0;
                    const Index k_common = s.k_zeta + s.k_eps0;
                    if (k_common > 0 && mats[slot.sample].loadings.row(r).head(k_common).cwiseAbs().maxCoeff() > 0.0)
                        explained = 0.9 * s_rr;
                    v = std::max(0.1 * s_rr, s_rr - explained) / (row->second * row->second);
                } else {
                    v = 0.1 * cov.diagonal().mean();
                }
                break;
            }
        }
        start(spec.tau_size() + static_cast<Index>(k)) = v;
    }
    for (const auto& [name, value] : user) start(*spec.find_param(name)) = value;
    return start;
}

VectorXd repair_start(const SampleStats& stats, const ModelSpec& spec, VectorXd start) {
    std::vector<Index> variance_entries;
    for (Index t = 0; t < spec.tau_size(); ++t)
        for (const TauUse& u : spec.tau_uses(t))
            if (u.target == SlotTarget::sigma_eps0) {
                variance_entries.push_back(t);
                break;
            }
    for (std::size_t k = 0; k < spec.nu_layout().size(); ++k)
        if (spec.nu_layout()[k].kind != NuKind::mu_zeta)
            variance_entries.push_back(spec.tau_size() + static_cast<Index>(k));

    for (int attempt = 0; attempt <= 10; ++attempt) {
        if (discrepancy_q(stats, spec, start)) return start;
        if (attempt == 10) break;
        for (Index k : variance_entries) start(k) *= 2.0;
    }
    throw NumericalError("start values give a non-positive-definite implied covariance and could not be repaired");
}

FitResult fit_model(const SampleStats& stats, const ModelSpec& spec, const VectorXd& start, const FitOptions& options) {
    if (start.size() != spec.dim()) throw StructuralError("start vector has the wrong length");
    FitResult res;
    res.df = degrees_of_freedom(spec);

    VectorXd x = repair_start(stats, spec, start);
    if (options.require_psd_blocks && !blocks_psd(spec, x))
        throw NumericalError("start values have an indefinite latent covariance block");

    const bool scoring = options.update == HessianUpdate::scoring;
    const bool analytic = options.gradient == GradientMethod::analytic;
    auto feasible = [&](const VectorXd& v) { return !options.require_psd_blocks || blocks_psd(spec, v); };
    // gradient and, when needed, the information at an accepted point
    auto derivatives = [&](const VectorXd& v, bool with_info) -> std::optional<Evaluation> {
        auto ev = evaluate(stats, spec, v, analytic, with_info);
        if (!ev) return std::nullopt;
        if (!analytic) {
            auto g = discrepancy_gradient_fd(stats, spec, v);
            if (!g) return std::nullopt;
            ev->gradient = *g;
        }
        return ev;
    };

    auto first = derivatives(x, true);
    if (!first) throw NumericalError("gradient is not available at the start values");
    double fx = first->q;
    VectorXd gx = first->gradient;
    MatrixXd hinv = initial_inverse_hessian(first->information, spec.dim());
    res.objective_trace.push_back(fx);

    // rounding level of Q: each sample term sums O(n (p + |log det S|)) quantities
    double noise = 0.0;
    for (std::size_t i = 0; i < stats.n.size(); ++i) {
        const double ld = std::abs(log_det_pd(stats.cov[i], "sample covariance of '" + spec.sample(i).id + "'"));
        noise += static_cast<double>(stats.n[i]) * (static_cast<double>(stats.cov[i].rows()) + ld + 1.0);
    }
    noise *= 1e-13;

    bool reset_used = false;
    int it = 0;
    res.converged = gx.norm() < options.gradient_tolerance;
    while (!res.converged && it < options.max_iterations) {
        VectorXd dir = -hinv * gx;
        double slope = gx.dot(dir);
        if (!(slope < 0.0)) {
            dir = -gx;
            slope = -gx.squaredNorm();
        }
        // backtracking: infeasible or insufficient decrease halves the step
        double step = 1.0;
        bool accepted = false;
        VectorXd trial;
        double ftrial = 0.0;
        std::optional<Evaluation> at_trial;
        for (int k = 0; k < 60; ++k) {
            trial = x + step * dir;
            auto q = discrepancy_q(stats, spec, trial);
            if (q && feasible(trial) && *q < fx && *q <= fx + 1e-4 * step * slope) {
                accepted = true;
                ftrial = *q;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // Q no longer resolves the decrease: take a scoring step and
            // accept it when Q stays within rounding and the gradient shrinks.
            auto ev = evaluate(stats, spec, x, false, true);
            const MatrixXd info_inv = initial_inverse_hessian(ev->information, spec.dim());
            const VectorXd scoring_dir = -info_inv * gx;
            step = 1.0;
            for (int k = 0; k < 30 && !accepted; ++k, step *= 0.5) {
                trial = x + step * scoring_dir;
                auto q = discrepancy_q(stats, spec, trial);
                if (!q || !feasible(trial) || *q > fx + noise) continue;
                auto d = derivatives(trial, scoring);
                if (d && d->gradient.norm() < gx.norm()) {
                    accepted = true;
                    ftrial = *q;
                    at_trial = std::move(d);
                    hinv = info_inv;
                }
            }
        }
        if (!accepted) {
            if (gx.norm() < options.gradient_tolerance) {
                res.converged = true;
                break;
            }
            if (reset_used) break;
            auto ev = evaluate(stats, spec, x, false, true);
            hinv = initial_inverse_hessian(ev->information, spec.dim());
            reset_used = true;
            continue;
        }
        if (!at_trial) at_trial = derivatives(trial, scoring);
        if (!at_trial) break;
        const VectorXd& gtrial = at_trial->gradient;
        if (scoring) {
            hinv = initial_inverse_hessian(at_trial->information, spec.dim());
        } else {
            const VectorXd s = trial - x;
            const VectorXd y = gtrial - gx;
            const double sy = s.dot(y);
            if (sy > 1e-12 * s.norm() * y.norm()) {
                const double rho = 1.0 / sy;
                const VectorXd hy = hinv * y;
                hinv += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) -
                        rho * (hy * s.transpose() + s * hy.transpose());
            }
        }
        const double rel = (fx - ftrial) / std::max(1.0, std::abs(ftrial));
        x = trial;
        fx = ftrial;
        gx = gtrial;
        ++it;
        reset_used = false;
        res.objective_trace.push_back(fx);
        if (gx.norm() < options.gradient_tolerance && rel < options.relative_tolerance) res.converged = true;
    }

    res.theta_hat = x;
    res.q_min = fx;
    res.iterations = it;
    res.gradient_norm = gx.norm();
    res.p_value = res.df > 0 ? chi_square_upper_tail(std::max(0.0, fx), static_cast<double>(res.df)) : 1.0;
    const auto im = implied_moments(spec, x);
    for (std::size_t i = 0; i < im.sigma.size(); ++i) {
        const double cond = condition_number(im.sigma[i]);
        res.sigma_condition.push_back(cond);
        if (cond > 1e10)
            res.warnings.push_back("sample '" + spec.sample(i).id + "': implied covariance is ill-conditioned");
    }
    if (!res.converged)
        res.warnings.push_back("optimizer stopped after " + std::to_string(it) +
                               " iterations without meeting the convergence criteria");
    return res;
}

double chi_square_upper_tail(double x, double df) {
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

ChiSquareTest chi_square_test(const FitResult& result) {
    if (result.df == 0) throw UndefinedStatisticError("chi-square test is undefined for a model with 0 degrees of freedom");
    if (!result.converged) throw NumericalError("chi-square test requested for a fit that did not converge");
    return {result.q_min, result.df, chi_square_upper_tail(std::max(0.0, result.q_min), static_cast<double>(result.df))};
}

}  // namespace corrsem
