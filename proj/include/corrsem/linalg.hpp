#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <utility>

namespace corrsem {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Number of distinct elements of a symmetric p x p matrix.
[[nodiscard]] constexpr Index vech_size(Index p) { return p * (p + 1) / 2; }

/// Position of element (row, col), row >= col, in column-major lower-triangle order.
[[nodiscard]] Index vech_index(Index p, Index row, Index col);

/// Inverse of vech_index: returns (row, col) with row >= col.
[[nodiscard]] std::pair<Index, Index> vech_position(Index p, Index k);

[[nodiscard]] VectorXd vech(const MatrixXd& m);
[[nodiscard]] MatrixXd unvech(const VectorXd& v, Index p);

/// Duplication matrix D with vec(A) = D vech(A) for symmetric A.
[[nodiscard]] MatrixXd duplication_matrix(Index p);

/// Moore-Penrose inverse of D, so that vech(A) = D+ vec(A).
[[nodiscard]] MatrixXd duplication_pinv(Index p);

[[nodiscard]] MatrixXd kronecker(const MatrixXd& a, const MatrixXd& b);

/// 1/2 D'(S^-1 (x) S^-1) D, computed without forming the Kronecker product.
[[nodiscard]] MatrixXd vech_normal_weight(const MatrixXd& sigma_inv);

/// D+ (A (x) A) D+', computed entrywise for symmetric A.
[[nodiscard]] MatrixXd vech_kron_sym(const MatrixXd& a);

/// Largest absolute asymmetry |a_ij - a_ji|.
[[nodiscard]] double asymmetry(const MatrixXd& m);

}  // namespace corrsem
