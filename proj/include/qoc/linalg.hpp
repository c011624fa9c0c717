#pragma once

#include "qoc/types.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

namespace qoc {

// Kronecker product, row-major index convention:
// (a ⊗ b)[(i*db+k), (j*db+l)] = a(i,j) * b(k,l).
inline Operator kron(const Operator& a, const Operator& b, Eigen::Index dim_cap = kDimCap)
{
    if (a.rows() < 1 || b.rows() < 1) throw DimensionError("kron: empty factor");
    if (a.rows() != a.cols() || b.rows() != b.cols()) throw DimensionError("kron: factors must be square");
    const Eigen::Index da = a.rows(), db = b.rows();
    if (da > dim_cap / db) throw DimensionError("kron: product dimension exceeds cap");
    Operator out(da * db, da * db);
    for (Eigen::Index i = 0; i < da; ++i)
        for (Eigen::Index j = 0; j < da; ++j)
            out.block(i * db, j * db, db, db) = a(i, j) * b;
    return out;
}

namespace detail {

// Row-major strides over the factor list: DOF 0 is most significant.
inline std::vector<Eigen::Index> factor_strides(const std::vector<int>& dims)
{
    std::vector<Eigen::Index> stride(dims.size());
    Eigen::Index s = 1;
    for (int d = static_cast<int>(dims.size()) - 1; d >= 0; --d) {
        stride[d] = s;
        s *= dims[d];
    }
    return stride;
}

} // namespace detail

// Embed an operator acting on an ascending subset of factors into the full
// product space, identity on the rest.  `op` is indexed row-major over the
// listed factors in order; pure entry placement, no arithmetic.
inline Operator embed_subset(const Operator& op, const std::vector<int>& dofs,
                             const std::vector<int>& dims, Eigen::Index dim_cap = kDimCap)
{
    const int nf = static_cast<int>(dims.size());
    if (dofs.empty()) throw DimensionError("embed_subset: empty factor list");
    for (size_t d = 0; d < dofs.size(); ++d) {
        if (dofs[d] < 0 || dofs[d] >= nf) throw DimensionError("embed_subset: factor index out of range");
        if (d > 0 && dofs[d] <= dofs[d - 1]) throw DimensionError("embed_subset: factor list must be ascending");
    }
    Eigen::Index sub_dim = 1;
    for (int d : dofs) sub_dim *= dims[d];
    if (op.rows() != op.cols() || op.rows() != sub_dim)
        throw DimensionError("embed_subset: operator dim != product of listed factor dims");
    const Eigen::Index full = product_dim(dims);
    if (full > dim_cap) throw DimensionError("embed_subset: product dimension exceeds cap");

    const auto stride = detail::factor_strides(dims);

    // Offset of each subset multi-index into the full space.
    std::vector<Eigen::Index> sub_offsets(sub_dim);
    for (Eigen::Index a = 0; a < sub_dim; ++a) {
        Eigen::Index rem = a, off = 0;
        for (int d = static_cast<int>(dofs.size()) - 1; d >= 0; --d) {
            off += (rem % dims[dofs[d]]) * stride[dofs[d]];
            rem /= dims[dofs[d]];
        }
        sub_offsets[a] = off;
    }

    // Spectator multi-index offsets: walk all full indices with the subset pinned to zero.
    std::vector<Eigen::Index> rest_offsets;
    rest_offsets.reserve(full / sub_dim);
    for (Eigen::Index flat = 0; flat < full; ++flat) {
        Eigen::Index rem = flat, off = 0;
        bool pinned = true;
        for (int d = 0; d < nf; ++d) {
            const Eigen::Index q = rem / stride[d];
            rem %= stride[d];
            const bool in_subset = std::find(dofs.begin(), dofs.end(), d) != dofs.end();
            if (in_subset) {
                if (q != 0) { pinned = false; break; }
            } else {
                off += q * stride[d];
            }
        }
        if (pinned) rest_offsets.push_back(off);
    }

    Operator out = Operator::Zero(full, full);
    for (Eigen::Index a = 0; a < sub_dim; ++a)
        for (Eigen::Index b = 0; b < sub_dim; ++b) {
            const Complex v = op(a, b);
            if (v == Complex(0.0, 0.0)) continue;
            for (Eigen::Index e : rest_offsets) out(sub_offsets[a] + e, sub_offsets[b] + e) = v;
        }
    return out;
}

// Embed an operator acting on factors (i, j), identity on the rest.
inline Operator embed_pair(const Operator& op, int i, int j, const std::vector<int>& dims,
                           Eigen::Index dim_cap = kDimCap)
{
    if (i >= j) throw DimensionError("embed_pair: need i < j");
    return embed_subset(op, {i, j}, dims, dim_cap);
}

// Embed a single-factor operator, identity elsewhere.
inline Operator embed_single(const Operator& op, int i, const std::vector<int>& dims,
                             Eigen::Index dim_cap = kDimCap)
{
    const int nf = static_cast<int>(dims.size());
    if (i < 0 || i >= nf) throw DimensionError("embed_single: factor index out of range");
    if (op.rows() != op.cols() || op.rows() != dims[i])
        throw DimensionError("embed_single: operator dim != dims[i]");
    const Eigen::Index full = product_dim(dims);
    if (full > dim_cap) throw DimensionError("embed_single: product dimension exceeds cap");

    const auto stride = detail::factor_strides(dims);
    const Eigen::Index di = dims[i];
    Operator out = Operator::Zero(full, full);
    for (Eigen::Index flat = 0; flat < full; ++flat) {
        const Eigen::Index a = (flat / stride[i]) % di;
        const Eigen::Index base = flat - a * stride[i];
        for (Eigen::Index c = 0; c < di; ++c) {
            const Complex v = op(a, c);
            if (v != Complex(0.0, 0.0)) out(flat, base + c * stride[i]) = v;
        }
    }
    return out;
}

// Apply a single-factor operator to a product-space vector without embedding,
// out[..., m, ...] = sum_{m'} op(m, m') psi[..., m', ...].  O(D^{N+1}).
inline State apply_single_dof(const Operator& op, int i, const std::vector<int>& dims, const State& psi)
{
    const int nf = static_cast<int>(dims.size());
    if (i < 0 || i >= nf) throw DimensionError("apply_single_dof: factor index out of range");
    if (op.rows() != op.cols() || op.rows() != dims[i])
        throw DimensionError("apply_single_dof: operator dim != dims[i]");
    const Eigen::Index full = product_dim(dims);
    if (psi.size() != full) throw DimensionError("apply_single_dof: state dim mismatch");

    const auto stride = detail::factor_strides(dims);
    const Eigen::Index di = dims[i];
    const Eigen::Index inner = stride[i];             // contiguous block below factor i
    const Eigen::Index outer = full / (di * inner);   // blocks above factor i
    State out = State::Zero(full);
    for (Eigen::Index o = 0; o < outer; ++o) {
        const Eigen::Index base = o * di * inner;
        for (Eigen::Index m = 0; m < di; ++m)
            for (Eigen::Index mp = 0; mp < di; ++mp) {
                const Complex v = op(m, mp);
                if (v == Complex(0.0, 0.0)) continue;
                out.segment(base + m * inner, inner) += v * psi.segment(base + mp * inner, inner);
            }
    }
    return out;
}

// Matrix exponential: scaling-and-squaring with a Padé core (Eigen's MatrixFunctions),
// with an exact fast path for diagonal input.
inline Operator expm(const Operator& a)
{
    if (a.rows() != a.cols()) throw DimensionError("expm: matrix must be square");
    if (!a.allFinite()) throw NumericalError("expm: non-finite entries");
    bool diagonal = true;
    for (Eigen::Index i = 0; i < a.rows() && diagonal; ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (i != j && a(i, j) != Complex(0.0, 0.0)) { diagonal = false; break; }
    if (diagonal) {
        Operator out = Operator::Zero(a.rows(), a.cols());
        for (Eigen::Index i = 0; i < a.rows(); ++i) out(i, i) = std::exp(a(i, i));
        return out;
    }
    return a.exp();
}

namespace detail {

// Shared core for exp(A)·v: split exp(A) = (exp(A/s))^s with s chosen from ‖A‖₁,
// evaluate each block by the Taylor series of A/s applied term-by-term, stopping
// once appended terms fall below the per-block tolerance.
template <typename ApplyFn>
State expm_multiply_core(ApplyFn&& apply, double norm1, Eigen::Index dim, const State& v, double tol)
{
    if (v.size() != dim) throw DimensionError("expm_multiply: dimension mismatch");
    if (!(tol > 0.0)) throw DimensionError("expm_multiply: tol must be positive");
    if (norm1 == 0.0) return v;

    // block norm ~4 balances series length against the block count
    const int s = std::max<int>(1, static_cast<int>(std::ceil(norm1 / 4.0)));
    const double inv_s = 1.0 / static_cast<double>(s);
    const double block_tol = std::max(tol / static_cast<double>(s), 1e-16);
    const int max_terms = 128;

    State y = v;
    State term(dim), next(dim);
    for (int block = 0; block < s; ++block) {
        term = y;
        const double ref = y.norm();
        int k = 1;
        for (; k <= max_terms; ++k) {
            apply(term, next);
            term = next * (inv_s / static_cast<double>(k));
            y += term;
            if (term.norm() <= block_tol * std::max(ref, y.norm())) break;
        }
        if (k > max_terms)
            throw NumericalError("expm_multiply: Taylor series failed to converge; residual "
                                 + std::to_string(term.norm()));
    }
    return y;
}

} // namespace detail

// exp(a)·v without forming exp(a).  ‖result − expm(a)·v‖ ≤ tol·‖v‖.
inline State expm_multiply(const Operator& a, const State& v, double tol = 1e-10)
{
    if (a.rows() != a.cols()) throw DimensionError("expm_multiply: matrix must be square");
    if (!a.allFinite()) throw NumericalError("expm_multiply: non-finite entries");
    const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
    return detail::expm_multiply_core(
        [&a](const State& x, State& out) { out.noalias() = a * x; }, norm1, a.rows(), v, tol);
}

// Reduced density matrix over the kept factors (ascending order), traced over the rest.
inline Operator partial_trace(const State& psi, const std::vector<int>& keep, const std::vector<int>& dims)
{
    const Eigen::Index full = product_dim(dims);
    if (psi.size() != full) throw DimensionError("partial_trace: state dim mismatch");
    std::vector<bool> kept(dims.size(), false);
    for (int k : keep) {
        if (k < 0 || k >= static_cast<int>(dims.size())) throw DimensionError("partial_trace: keep index out of range");
        if (kept[k]) throw DimensionError("partial_trace: duplicate keep index");
        kept[k] = true;
    }

    const auto stride = detail::factor_strides(dims);
    Eigen::Index keep_dim = 1, trace_dim = 1;
    std::vector<Eigen::Index> keep_stride, trace_stride;
    std::vector<int> keep_size, trace_size;
    for (size_t d = 0; d < dims.size(); ++d) {
        if (kept[d]) { keep_stride.push_back(stride[d]); keep_size.push_back(dims[d]); keep_dim *= dims[d]; }
        else         { trace_stride.push_back(stride[d]); trace_size.push_back(dims[d]); trace_dim *= dims[d]; }
    }

    auto offsets = [](Eigen::Index count, const std::vector<int>& size, const std::vector<Eigen::Index>& str) {
        std::vector<Eigen::Index> off(count, 0);
        for (Eigen::Index f = 0; f < count; ++f) {
            Eigen::Index rem = f, o = 0;
            for (int d = static_cast<int>(size.size()) - 1; d >= 0; --d) {
                o += (rem % size[d]) * str[d];
                rem /= size[d];
            }
            off[f] = o;
        }
        return off;
    };
    const auto koff = offsets(keep_dim, keep_size, keep_stride);
    const auto toff = offsets(trace_dim, trace_size, trace_stride);

    Operator rho = Operator::Zero(keep_dim, keep_dim);
    for (Eigen::Index a = 0; a < keep_dim; ++a)
        for (Eigen::Index b = 0; b < keep_dim; ++b) {
            Complex acc(0.0, 0.0);
            for (Eigen::Index c = 0; c < trace_dim; ++c)
                acc += psi(koff[a] + toff[c]) * std::conj(psi(koff[b] + toff[c]));
            rho(a, b) = acc;
        }
    return rho;
}

// ‖u†u − I‖_max
inline double unitarity_defect(const Operator& u)
{
    if (u.rows() != u.cols()) throw DimensionError("unitarity_defect: matrix must be square");
    Operator g = u.adjoint() * u;
    g -= Operator::Identity(u.rows(), u.cols());
    return g.cwiseAbs().maxCoeff();
}

inline double hermiticity_defect(const Operator& a)
{
    return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

} // namespace qoc
