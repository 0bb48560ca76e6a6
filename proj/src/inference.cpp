#include "corrsem/inference.hpp"

#include "corrsem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace corrsem {

namespace {

void clip_block(MatrixXd& v, const std::vector<Index>& idx, const ModelSpec& spec, std::vector<std::string>& warnings) {
    for (Index k : idx) {
        if (v(k, k) >= 0.0) continue;
        std::ostringstream os;
        os << "corrected variance of " << spec.param_label(k) << " was negative (" << v(k, k) << "); clipped to 0";
        warnings.push_back(os.str());
        v.row(k).setZero();
        v.col(k).setZero();
    }
}

void subtract_block(MatrixXd& v, const std::vector<Index>& idx, const MatrixXd& delta) {
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = 0; b < idx.size(); ++b)
            v(idx[a], idx[b]) -= delta(static_cast<Index>(a), static_cast<Index>(b));
}

}  // namespace

MatrixXd WeightMatrix::stacked() const {
    Index m = 0;
    for (const auto& b : blocks) m += b.rows();
    MatrixXd w = MatrixXd::Zero(m, m);
    Index off = 0;
    for (const auto& b : blocks) {
        w.block(off, off, b.rows(), b.cols()) = b;
        off += b.rows();
    }
    return w;
}

WeightMatrix weight_matrix(const ModelSpec& spec, const VectorXd& theta, const SampleStats& stats) {
    const auto im = implied_moments(spec, theta);
    WeightMatrix w;
    for (std::size_t i = 0; i < spec.sample_count(); ++i) {
        const MatrixXd& sigma = im.sigma[i];
        const Index p = sigma.rows();
        Eigen::LLT<MatrixXd> llt(sigma);
        if (llt.info() != Eigen::Success)
            throw NumericalError("implied covariance of sample '" + spec.sample(i).id + "' is not positive definite");
        MatrixXd inv = llt.solve(MatrixXd::Identity(p, p));
        inv = 0.5 * (inv + inv.transpose());
        MatrixXd block = MatrixXd::Zero(p + vech_size(p), p + vech_size(p));
        block.topLeftCorner(p, p) = inv;
        block.bottomRightCorner(vech_size(p), vech_size(p)) = vech_normal_weight(inv);
        w.blocks.push_back(stats.ratio[i] * block);
    }
    return w;
}

MatrixXd jacobian_gamma(const ModelSpec& spec, const VectorXd& theta) {
    MatrixXd j = moment_jacobian(spec, theta);
    if (!j.allFinite()) throw NumericalError("Jacobian of the implied moments has non-finite entries");
    return j;
}

NormalIndependence normal_independence_covariance(const MatrixXd& jacobian, const WeightMatrix& weights, Index n_total,
                                                  const std::vector<std::string>& labels) {
    const MatrixXd w = weights.stacked();
    if (w.rows() != jacobian.rows()) throw StructuralError("weight matrix and Jacobian dimensions differ");
    const MatrixXd jw = jacobian.transpose() * w;
    MatrixXd info = jw * jacobian;
    info = 0.5 * (info + info.transpose());

    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(info);
    const VectorXd& ev = eig.eigenvalues();
    const double top = ev.cwiseAbs().maxCoeff();
    if (!(ev.minCoeff() > 1e-12 * top)) {
        std::ostringstream os;
        os << "Jacobian is rank deficient; null-space directions involve:";
        for (Index k = 0; k < ev.size(); ++k) {
            if (ev(k) > 1e-12 * top) continue;
            const VectorXd dir = eig.eigenvectors().col(k);
            os << " {";
            bool first = true;
            for (Index t = 0; t < dir.size(); ++t) {
                if (std::abs(dir(t)) < 0.1) continue;
                os << (first ? "" : ", ")
                   << (static_cast<std::size_t>(t) < labels.size() ? labels[static_cast<std::size_t>(t)]
                                                                   : "theta[" + std::to_string(t) + "]");
                first = false;
            }
            os << "}";
        }
        throw IdentificationError(os.str());
    }
    const MatrixXd inv = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    NormalIndependence out;
    out.v_ni = inv / static_cast<double>(n_total);
    out.v_ni = 0.5 * (out.v_ni + out.v_ni.transpose());
    out.a0 = inv * jw;
    return out;
}

CorrectedCovariance correct_fixed_factor_moments(const MatrixXd& v_ni, const ModelSpec& spec,
                                                 const VectorXd& theta_hat, const SampleStats& stats) {
    if (spec.zeta_mode() != ZetaMode::fixed)
        throw ConfigError("fixed-factor corrections requested for a model with random factors");
    CorrectedCovariance out{v_ni, {}};
    const auto mats = assemble(spec, theta_hat);
    for (std::size_t i = 0; i < spec.sample_count(); ++i) {
        if (spec.sample(i).k_zeta == 0) continue;
        const double n = static_cast<double>(stats.n[i]);
        const MatrixXd& sz = mats[i].sigma_zeta;
        const auto mu_idx = spec.mu_zeta_indices(i);
        const auto sig_idx = spec.sigma_zeta_indices(i);
        subtract_block(out.v, mu_idx, sz / n);
        subtract_block(out.v, sig_idx, (2.0 / n) * vech_kron_sym(sz));
        clip_block(out.v, mu_idx, spec, out.warnings);
        clip_block(out.v, sig_idx, spec, out.warnings);
    }
    return out;
}

MatrixXd FactorFourthMoments::variance_of_outer(const MatrixXd& sigma) const {
    if (source == Source::user_supplied) return matrix;
    const Index k = sigma.rows();
    if (matrix.rows() != k * k || matrix.cols() != k * k)
        throw StructuralError("fourth-cumulant matrix does not match the factor dimension");
    MatrixXd v(k * k, k * k);
    for (Index b = 0; b < k; ++b)
        for (Index a = 0; a < k; ++a)
            for (Index d = 0; d < k; ++d)
                for (Index c = 0; c < k; ++c)
                    v(a + k * b, c + k * d) = matrix(a + k * b, c + k * d) + sigma(a, c) * sigma(b, d) +
                                              sigma(a, d) * sigma(b, c);
    return v;
}

CorrectedCovariance random_factor_cov_correction(const MatrixXd& v_ni, const std::optional<FourthMomentEstimate>& fourth,
                                                 const ModelSpec& spec, const VectorXd& theta_hat,
                                                 const SampleStats& stats) {
    if (spec.zeta_mode() != ZetaMode::random)
        throw ConfigError("random-factor correction requested for a model with fixed factors");
    if (!fourth)
        throw MissingMomentsError(
            "the Sigma_zeta correction for random factors needs fourth moments of zeta; supply a matrix file or anchors");
    if (fourth->samples.size() != spec.sample_count())
        throw StructuralError("fourth-moment estimate does not cover every sample");
    CorrectedCovariance out{v_ni, {}};
    const auto mats = assemble(spec, theta_hat);
    for (std::size_t i = 0; i < spec.sample_count(); ++i) {
        const Index k = spec.sample(i).k_zeta;
        if (k == 0) continue;
        const double n = static_cast<double>(stats.n[i]);
        const MatrixXd& sz = mats[i].sigma_zeta;
        const MatrixXd var = fourth->samples[i].variance_of_outer(sz);
        if (var.rows() != k * k || var.cols() != k * k)
            throw StructuralError("fourth-moment matrix for sample '" + spec.sample(i).id + "' must be " +
                                  std::to_string(k * k) + "x" + std::to_string(k * k));
        const MatrixXd dp = duplication_pinv(k);
        const MatrixXd delta = (2.0 / n) * vech_kron_sym(sz) - (1.0 / n) * (dp * var * dp.transpose());
        const auto sig_idx = spec.sigma_zeta_indices(i);
        subtract_block(out.v, sig_idx, delta);
        clip_block(out.v, sig_idx, spec, out.warnings);
    }
    return out;
}

MatrixXd sample_fourth_cumulants(const MatrixXd& x) {
    const Index n = x.rows();
    const Index k = x.cols();
    const VectorXd mean = x.colwise().mean().transpose();
    const MatrixXd z = x.rowwise() - mean.transpose();
    const MatrixXd m2 = z.transpose() * z / static_cast<double>(n);
    MatrixXd kappa(k * k, k * k);
    for (Index b = 0; b < k; ++b)
        for (Index a = 0; a < k; ++a)
            for (Index d = 0; d < k; ++d)
                for (Index c = 0; c < k; ++c) {
                    const double m4 =
                        (z.col(a).array() * z.col(b).array() * z.col(c).array() * z.col(d).array()).mean();
                    kappa(a + k * b, c + k * d) = m4 - m2(a, b) * m2(c, d) - m2(a, c) * m2(b, d) - m2(a, d) * m2(b, c);
                }
    return kappa;
}

FourthMomentEstimate estimate_fourth_moments(const Dataset& data, const ModelSpec& spec, const AnchorMap& anchors) {
    if (anchors.size() != spec.sample_count()) throw ConfigError("anchor designation must cover every sample");
    if (data.samples.size() != spec.sample_count()) throw DataError("dataset does not match the model");
    FourthMomentEstimate est;
    for (std::size_t i = 0; i < spec.sample_count(); ++i) {
        const SampleModel& s = spec.sample(i);
        if (static_cast<Index>(anchors[i].size()) != s.k_zeta)
            throw ConfigError("sample '" + s.id + "' needs " + std::to_string(s.k_zeta) + " anchor variable(s)");
        MatrixXd x(data.samples[i].n(), s.k_zeta);
        for (Index a = 0; a < s.k_zeta; ++a) {
            const std::string& name = anchors[i][static_cast<std::size_t>(a)];
            auto it = std::find(s.variables.begin(), s.variables.end(), name);
            if (it == s.variables.end())
                throw StructuralError("anchor '" + name + "' is not a variable of sample '" + s.id + "'");
            const Index r = it - s.variables.begin();
            auto fixed_at = [](const Entry& e, double v) { return e.is_fixed() && e.value() == v; };
            std::string problem;
            if (!fixed_at(s.loadings.at(r, a), 1.0)) problem = "must load its factor with fixed coefficient 1";
            for (Index c = 0; c < s.k_zeta && problem.empty(); ++c)
                if (c != a && !fixed_at(s.loadings.at(r, c), 0.0)) problem = "loads another factor";
            for (Index c = s.k_zeta + s.k_eps0; c < s.k_xi() && problem.empty(); ++c)
                if (!fixed_at(s.loadings.at(r, c), 0.0)) problem = "has a nonnormal error component";
            if (s.gamma)
                for (Index c = 0; c < s.p() && problem.empty(); ++c)
                    if (!fixed_at(s.gamma->at(r, c), 0.0)) problem = "depends on other observed variables";
            if (!problem.empty())
                throw StructuralError("anchor '" + name + "' of sample '" + s.id + "' " + problem);
            x.col(a) = data.samples[i].observations.col(r);
        }
        FactorFourthMoments f;
        f.source = FactorFourthMoments::Source::anchor_estimated;
        f.matrix = s.k_zeta > 0 ? sample_fourth_cumulants(x) : MatrixXd(0, 0);
        est.samples.push_back(std::move(f));
    }
    return est;
}

MatrixXd moment_contributions(const SampleData& sample, const VectorXd& mean) {
    const Index n = sample.n();
    const Index p = sample.observations.cols();
    MatrixXd d(n, p + vech_size(p));
    for (Index j = 0; j < n; ++j) {
        const VectorXd row = sample.observations.row(j).transpose();
        const VectorXd dev = row - mean;
        d.block(j, 0, 1, p) = row.transpose();
        Index k = 0;
        for (Index c = 0; c < p; ++c)
            for (Index r = c; r < p; ++r) d(j, p + k++) = dev(r) * dev(c);
    }
    return d;
}

SandwichResult sandwich_covariance(const Dataset& data, const SampleStats& stats, const MatrixXd& a0,
                                   const SandwichOptions& options) {
    const std::size_t count = data.samples.size();
    std::vector<MatrixXd> centred;
    std::vector<Index> offsets;
    Index m = 0;
    for (std::size_t i = 0; i < count; ++i) {
        MatrixXd d = moment_contributions(data.samples[i], stats.mean[i]);
        const Eigen::RowVectorXd dbar = d.colwise().mean();
        d.rowwise() -= dbar;
        offsets.push_back(m);
        m += d.cols();
        centred.push_back(std::move(d));
    }
    if (a0.cols() != m) throw StructuralError("A0 column count does not match the moment vector");

    SandwichResult out;
    out.s_d = MatrixXd::Zero(m, m);
    for (std::size_t i = 0; i < count; ++i) {
        const double ni = static_cast<double>(stats.n[i]);
        const MatrixXd& di = centred[i];
        out.s_d.block(offsets[i], offsets[i], di.cols(), di.cols()) = (di.transpose() * di) / ((ni - 1.0) * ni);
        for (std::size_t k = i + 1; k < count; ++k) {
            const auto& pairs = stats.pairing.rows[i][k];
            const Index nik = static_cast<Index>(pairs.size());
            if (nik <= 1) {
                if (nik == 1)
                    out.warnings.push_back("samples '" + data.samples[i].id + "' and '" + data.samples[k].id +
                                           "' share a single individual; cross block set to 0");
                continue;
            }
            const MatrixXd& dk = centred[k];
            MatrixXd cross = MatrixXd::Zero(di.cols(), dk.cols());
            for (const auto& [ri, rk] : pairs) cross.noalias() += di.row(ri).transpose() * dk.row(rk);
            cross /= static_cast<double>(nik - 1);
            const double nk = static_cast<double>(stats.n[k]);
            const double scale = options.scaling == CrossBlockScaling::moment_covariance
                                     ? static_cast<double>(nik) / (ni * nk)
                                     : 1.0 / static_cast<double>(nik);
            out.s_d.block(offsets[i], offsets[k], di.cols(), dk.cols()) = scale * cross;
            out.s_d.block(offsets[k], offsets[i], dk.cols(), di.cols()) = scale * cross.transpose();
        }
    }
    out.v_s = a0 * out.s_d * a0.transpose();
    out.v_s = 0.5 * (out.v_s + out.v_s.transpose());
    return out;
}

VectorXd standard_errors(const MatrixXd& v) {
    VectorXd se(v.rows());
    for (Index k = 0; k < v.rows(); ++k) se(k) = std::sqrt(std::max(0.0, v(k, k)));
    return se;
}

InferenceResult infer(const Dataset& data, const SampleStats& stats, const ModelSpec& spec, const VectorXd& theta_hat,
                      const InferenceOptions& options) {
    InferenceResult res;
    res.jacobian = jacobian_gamma(spec, theta_hat);
    res.weights = weight_matrix(spec, theta_hat, stats);
    auto ni = normal_independence_covariance(res.jacobian, res.weights, stats.n_total, spec.param_labels());
    res.v_ni = std::move(ni.v_ni);
    res.a0 = std::move(ni.a0);
    auto sw = sandwich_covariance(data, stats, res.a0, options.sandwich);
    res.v_s = std::move(sw.v_s);
    res.warnings.insert(res.warnings.end(), sw.warnings.begin(), sw.warnings.end());

    bool sigma_zeta_unavailable = false;
    if (spec.zeta_mode() == ZetaMode::fixed) {
        auto c = correct_fixed_factor_moments(res.v_ni, spec, theta_hat, stats);
        res.v_g = std::move(c.v);
        res.warnings.insert(res.warnings.end(), c.warnings.begin(), c.warnings.end());
    } else if (options.fourth) {
        auto c = random_factor_cov_correction(res.v_ni, options.fourth, spec, theta_hat, stats);
        res.v_g = std::move(c.v);
        res.warnings.insert(res.warnings.end(), c.warnings.begin(), c.warnings.end());
    } else {
        sigma_zeta_unavailable = true;
        bool any_factor = false;
        for (const auto& s : spec.samples()) any_factor = any_factor || s.k_zeta > 0;
        if (any_factor)
            res.warnings.push_back("fourth moments of zeta not supplied: corrected a.s.e.'s for Sigma_zeta unavailable");
    }

    const VectorXd se_ni = standard_errors(res.v_ni);
    const VectorXd se_s = standard_errors(res.v_s);
    const VectorXd se_g = res.v_g ? standard_errors(*res.v_g) : se_ni;
    const bool fixed = spec.zeta_mode() == ZetaMode::fixed;
    for (Index t = 0; t < spec.dim(); ++t) {
        ParameterSe row;
        row.label = spec.param_label(t);
        row.estimate = theta_hat(t);
        row.se_ni = se_ni(t);
        row.se_sandwich = se_s(t);
        if (t < spec.tau_size()) {
            row.se_corrected = se_ni(t);
            row.corrected_source = SeSource::normal_independence;
            row.flags.push_back("robust-normal-theory");
        } else {
            const NuSlot& slot = spec.nu_layout()[static_cast<std::size_t>(t - spec.tau_size())];
            switch (slot.kind) {
                case NuKind::mu_zeta:
                    row.se_corrected = se_g(t);
                    row.corrected_source = fixed ? SeSource::fixed_correction : SeSource::normal_independence;
                    if (fixed) row.flags.push_back("sandwich-invalid-fixed-factor");
                    break;
                case NuKind::sigma_zeta:
                    if (fixed) {
                        row.se_corrected = se_g(t);
                        row.corrected_source = SeSource::fixed_correction;
                        row.flags.push_back("sandwich-invalid-fixed-factor");
                    } else if (sigma_zeta_unavailable) {
                        row.corrected_source = SeSource::unavailable;
                        row.flags.push_back("fourth-moments-unavailable");
                    } else {
                        row.se_corrected = se_g(t);
                        row.corrected_source = SeSource::random_correction;
                    }
                    break;
                case NuKind::sigma_eps:
                    row.se_corrected = se_ni(t);
                    row.corrected_source = SeSource::normal_independence;
                    row.flags.push_back("normal-theory-not-robust-use-sandwich");
                    break;
            }
        }
        res.table.push_back(std::move(row));
    }
    return res;
}

}  // namespace corrsem
