#include "corrsem/linalg.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>

namespace corrsem {

namespace {

// vec positions (row, col) that a vech coordinate expands to: one on the
// diagonal, two off it.
struct VechPair {
    std::array<std::pair<Index, Index>, 2> cells;
    int count;
};

VechPair expand(Index p, Index k) {
    const auto [r, c] = vech_position(p, k);
    if (r == c) return {{{{r, c}, {r, c}}}, 1};
    return {{{{r, c}, {c, r}}}, 2};
}

}  // namespace

Index vech_index(Index p, Index row, Index col) {
    if (row < col) std::swap(row, col);
    // columns 0..col-1 contribute p, p-1, ..., p-col+1 entries
    return col * p - col * (col - 1) / 2 + (row - col);
}

std::pair<Index, Index> vech_position(Index p, Index k) {
    Index col = 0;
    Index remaining = k;
    while (remaining >= p - col) {
        remaining -= p - col;
        ++col;
    }
    return {col + remaining, col};
}

VectorXd vech(const MatrixXd& m) {
    assert(m.rows() == m.cols());
    const Index p = m.rows();
    VectorXd v(vech_size(p));
    Index k = 0;
    for (Index c = 0; c < p; ++c)
        for (Index r = c; r < p; ++r) v(k++) = m(r, c);
    return v;
}

MatrixXd unvech(const VectorXd& v, Index p) {
    assert(v.size() == vech_size(p));
    MatrixXd m(p, p);
    Index k = 0;
    for (Index c = 0; c < p; ++c)
        for (Index r = c; r < p; ++r) {
            m(r, c) = v(k);
            m(c, r) = v(k);
            ++k;
        }
    return m;
}

MatrixXd duplication_matrix(Index p) {
    MatrixXd d = MatrixXd::Zero(p * p, vech_size(p));
    for (Index c = 0; c < p; ++c)
        for (Index r = 0; r < p; ++r) d(c * p + r, vech_index(p, r, c)) = 1.0;
    return d;
}

MatrixXd duplication_pinv(Index p) {
    MatrixXd dp = MatrixXd::Zero(vech_size(p), p * p);
    for (Index c = 0; c < p; ++c)
        for (Index r = 0; r < p; ++r) dp(vech_index(p, r, c), c * p + r) = (r == c) ? 1.0 : 0.5;
    return dp;
}

MatrixXd kronecker(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

MatrixXd vech_normal_weight(const MatrixXd& sigma_inv) {
    const Index p = sigma_inv.rows();
    const Index m = vech_size(p);
    MatrixXd w(m, m);
    for (Index k = 0; k < m; ++k) {
        const VechPair ek = expand(p, k);
        for (Index l = 0; l <= k; ++l) {
            const VechPair el = expand(p, l);
            double s = 0.0;
            // (A (x) A)[vec(i,j), vec(u,v)] = A(j,v) A(i,u)
            for (int x = 0; x < ek.count; ++x)
                for (int y = 0; y < el.count; ++y) {
                    const auto [i, j] = ek.cells[x];
                    const auto [u, v] = el.cells[y];
                    s += sigma_inv(j, v) * sigma_inv(i, u);
                }
            w(k, l) = 0.5 * s;
            w(l, k) = 0.5 * s;
        }
    }
    return w;
}

MatrixXd vech_kron_sym(const MatrixXd& a) {
    const Index p = a.rows();
    const Index m = vech_size(p);
    MatrixXd out(m, m);
    for (Index k = 0; k < m; ++k) {
        const VechPair ek = expand(p, k);
        for (Index l = 0; l <= k; ++l) {
            const VechPair el = expand(p, l);
            double s = 0.0;
            for (int x = 0; x < ek.count; ++x)
                for (int y = 0; y < el.count; ++y) {
                    const auto [i, j] = ek.cells[x];
                    const auto [u, v] = el.cells[y];
                    s += a(j, v) * a(i, u);
                }
            s /= static_cast<double>(ek.count * el.count);
            out(k, l) = s;
            out(l, k) = s;
        }
    }
    return out;
}

double asymmetry(const MatrixXd& m) {
    double worst = 0.0;
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < i; ++j) worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
    return worst;
}

}  // namespace corrsem
