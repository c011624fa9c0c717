#pragma once

#include "qoc/control_field.hpp"
#include "qoc/linalg.hpp"
#include "qoc/system_model.hpp"
#include "qoc/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <vector>

namespace qoc {

struct PropagationStats {
    long full_expm_multiply_calls = 0; // exp(A)·v evaluations in the full product space
    long local_expm_calls = 0;         // short-time D x D exponentials
};

// Refuse grids on which the field moves too far between samples.  The constant
// parts of H are exponentiated exactly each step; the short-time-step error is
// set by the change of H across one step, so the guard bounds
// dt * max_k ||H_i(t_k) - H_i(t_{k-1})||_2 over all DOFs.
inline void validate_step_resolution(const SystemSpec& spec, const FieldGrid& f)
{
    f.validate();
    double max_delta = 0.0;
    for (int k = 1; k < f.n; ++k)
        max_delta = std::max(max_delta, std::abs(f.values(k) - f.values(k - 1)));
    double max_ctl_norm = 0.0;
    for (const auto& c : spec.control_coupling) {
        Eigen::SelfAdjointEigenSolver<Operator> es(c, Eigen::EigenvaluesOnly);
        max_ctl_norm = std::max(max_ctl_norm, es.eigenvalues().cwiseAbs().maxCoeff());
    }
    const double guard = f.dt * max_delta * max_ctl_norm;
    if (guard > 0.5)
        throw ConfigError("time grid too coarse for this field: dt*max|dH| = " + std::to_string(guard)
                          + " exceeds 0.5; increase the step count");
}

// Coupling-free propagators U_i(k dt) for every DOF and step, built recursively
// from U_i(0) = I with one short-time exponential per step.  DOFs with identical
// (kinetic, control) operators share storage.
class LocalPropagatorHistory {
public:
    LocalPropagatorHistory(std::vector<std::vector<Operator>> storage, std::vector<int> dof_slot,
                           double dt)
        : storage_(std::move(storage)), dof_slot_(std::move(dof_slot)), dt_(dt)
    {
    }

    // U_i(k dt); k = 0 gives the identity.
    const Operator& at(int i, int k) const { return storage_[dof_slot_[i]][k]; }
    int steps() const { return static_cast<int>(storage_.front().size()) - 1; }
    int num_dofs() const { return static_cast<int>(dof_slot_.size()); }
    double dt() const { return dt_; }

private:
    std::vector<std::vector<Operator>> storage_;
    std::vector<int> dof_slot_;
    double dt_;
};

// Part I of the Magnus procedure.
inline LocalPropagatorHistory compute_local_histories(const SystemSpec& spec, const FieldGrid& f,
                                                      PropagationStats* stats = nullptr)
{
    spec.validate();
    validate_step_resolution(spec, f);

    std::vector<int> slot(spec.num_dofs, -1);
    std::vector<std::vector<Operator>> storage;
    for (int i = 0; i < spec.num_dofs; ++i) {
        for (int j = 0; j < i; ++j) {
            if (slot[j] >= 0 && spec.kinetic[i] == spec.kinetic[j]
                && spec.control_coupling[i] == spec.control_coupling[j]) {
                slot[i] = slot[j];
                break;
            }
        }
        if (slot[i] >= 0) continue;
        slot[i] = static_cast<int>(storage.size());
        // real symmetric H_i admits a cheap spectral step exponential
        const bool real_h = spec.kinetic[i].imag().isZero(0.0)
                            && spec.control_coupling[i].imag().isZero(0.0);
        std::vector<Operator> hist;
        hist.reserve(f.n + 1);
        hist.push_back(Operator::Identity(spec.dims[i], spec.dims[i]));
        Operator step(spec.dims[i], spec.dims[i]);
        for (int k = 1; k <= f.n; ++k) {
            const Operator h = local_hamiltonian(spec, i, f.values(k - 1));
            if (real_h) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.real());
                const Eigen::VectorXcd phases =
                    (Complex(0.0, -f.dt) * es.eigenvalues().cast<Complex>().array()).exp();
                step.noalias() = es.eigenvectors().cast<Complex>() * phases.asDiagonal()
                                 * es.eigenvectors().transpose().cast<Complex>();
            } else {
                step = expm(Complex(0.0, -f.dt) * h);
            }
            if (stats) ++stats->local_expm_calls;
            hist.push_back(step * hist.back());
        }
        storage.push_back(std::move(hist));
    }
    return LocalPropagatorHistory(std::move(storage), std::move(slot), f.dt);
}

namespace detail {

inline void check_unit_norm(const State& psi, const char* who)
{
    if (std::abs(psi.norm() - 1.0) > 1e-6)
        throw DimensionError(std::string(who) + ": initial state must have unit norm");
}

inline void check_final_norm(const State& psi, const char* who)
{
    if (std::abs(psi.norm() - 1.0) > 1e-9)
        throw NumericalError(std::string(who) + ": norm lost beyond 1e-9: |1 - ||psi||| = "
                             + std::to_string(std::abs(psi.norm() - 1.0)));
}

} // namespace detail

using StepCallback = std::function<void(int step, const State& psi)>;

// Short-time-step product propagation of the full Hamiltonian,
// psi <- exp(-i H(k dt) dt) psi for k = 1..n in time order.
inline State propagate_exact(const SystemSpec& spec, const FieldGrid& f, const State& psi0,
                             PropagationStats* stats = nullptr, const StepCallback& on_step = {},
                             double tol = 1e-10)
{
    spec.validate();
    validate_step_resolution(spec, f);
    const Eigen::Index full = spec.full_dim();
    if (psi0.size() != full) throw DimensionError("propagate_exact: state dim mismatch");
    detail::check_unit_norm(psi0, "propagate_exact");

    const Operator h_static = full_static_hamiltonian(spec);
    const Operator h_control = full_control_operator(spec);
    const double step_tol = std::clamp(tol / f.n, 1e-15, 1e-12);

    Operator a(full, full);
    State psi = psi0;
    for (int k = 1; k <= f.n; ++k) {
        a = h_static + f.values(k - 1) * h_control;
        a *= Complex(0.0, -f.dt);
        psi = expm_multiply(a, psi, step_tol);
        if (stats) ++stats->full_expm_multiply_calls;
        if (on_step) on_step(k, psi);
    }
    detail::check_final_norm(psi, "propagate_exact");
    return psi;
}

// Fully separable evolution: each factor evolves under its own H_i, couplings dropped.
// psi0 must be given in factored form.
inline State propagate_zeroth(const SystemSpec& spec, const FieldGrid& f,
                              const std::vector<State>& psi0_factors,
                              PropagationStats* stats = nullptr, const StepCallback& on_step = {})
{
    spec.validate();
    if (static_cast<int>(psi0_factors.size()) != spec.num_dofs)
        throw StructureError("propagate_zeroth: initial state must be factored per DOF");
    for (int i = 0; i < spec.num_dofs; ++i)
        if (psi0_factors[i].size() != spec.dims[i])
            throw StructureError("propagate_zeroth: factor dim mismatch");

    const LocalPropagatorHistory hist = compute_local_histories(spec, f, stats);
    if (on_step) {
        for (int k = 1; k <= f.n; ++k) {
            std::vector<State> at_k(spec.num_dofs);
            for (int i = 0; i < spec.num_dofs; ++i) at_k[i] = hist.at(i, k) * psi0_factors[i];
            on_step(k, product_state(at_k));
        }
    }
    std::vector<State> factors(spec.num_dofs);
    for (int i = 0; i < spec.num_dofs; ++i) factors[i] = hist.at(i, f.n) * psi0_factors[i];
    State psi = product_state(factors);
    detail::check_final_norm(psi, "propagate_zeroth");
    return psi;
}

// Pair-space integrand (U_i(k)⊗U_j(k))† W_ij (U_i(k)⊗U_j(k)) series, indexed
// [pair][k-1]; reusable by the second-order term.
struct PairIntegrandCache {
    std::vector<std::vector<Operator>> series;
};

namespace detail {

// Scratch buffers for the per-step conjugations; sized on first use.
struct PairIntegrandWork {
    Operator left, right, tmp;
};

// Conjugated pair integrand at one step.  Uses the Kronecker factorization of
// W_ij when available: (Ui⊗Uj)†(A⊗B)(Ui⊗Uj) = (Ui†A Ui)⊗(Uj†B Uj).
inline void pair_integrand_into(Operator& out, const PairCoupling& c, const Operator& ui,
                                const Operator& uj, PairIntegrandWork& w)
{
    const Eigen::Index pd = c.w.rows();
    out.resize(pd, pd);
    if (!c.factors.empty()) {
        out.setZero();
        for (const auto& t : c.factors) {
            if (t.coeff == 0.0) continue;
            w.tmp.noalias() = t.left * ui;
            w.left.noalias() = ui.adjoint() * w.tmp;
            w.tmp.noalias() = t.right * uj;
            w.right.noalias() = uj.adjoint() * w.tmp;
            const Eigen::Index db = w.right.rows();
            for (Eigen::Index r = 0; r < w.left.rows(); ++r)
                for (Eigen::Index s = 0; s < w.left.cols(); ++s)
                    out.block(r * db, s * db, db, db) += (t.coeff * w.left(r, s)) * w.right;
        }
        return;
    }
    w.tmp = kron(ui, uj);
    w.left.noalias() = c.w * w.tmp;
    out.noalias() = w.tmp.adjoint() * w.left;
}

inline Operator pair_integrand(const PairCoupling& c, const Operator& ui, const Operator& uj)
{
    Operator out;
    PairIntegrandWork w;
    pair_integrand_into(out, c, ui, uj, w);
    return out;
}

} // namespace detail

// Part II, reference path: assemble Omega_I1 by conjugating the full-space W at
// every step and summing the rectangular quadrature directly.
inline Operator compute_omega1_naive(const LocalPropagatorHistory& hist, const SystemSpec& spec)
{
    spec.validate();
    const Eigen::Index full = spec.full_dim();
    Operator w = Operator::Zero(full, full);
    for (const auto& c : spec.couplings) w += embed_pair(c.w, c.i, c.j, spec.dims);

    Operator acc = Operator::Zero(full, full);
    for (int k = 1; k <= hist.steps(); ++k) {
        Operator u = Operator::Identity(1, 1);
        for (int i = 0; i < spec.num_dofs; ++i) u = kron(u, hist.at(i, k));
        acc += u.adjoint() * w * u;
    }
    return Complex(0.0, -hist.dt()) * acc;
}

// Part II, fast path: accumulate each gamma_ij in its D^2 pair space, scale once,
// then embed and sum.  Fills `cache` with the per-step integrands when provided.
inline Operator compute_omega1_pairwise(const LocalPropagatorHistory& hist, const SystemSpec& spec,
                                        PairIntegrandCache* cache = nullptr)
{
    spec.validate();
    const int n = hist.steps();
    if (cache) cache->series.assign(spec.couplings.size(), {});

    const Eigen::Index full = spec.full_dim();
    Operator omega = Operator::Zero(full, full);
    detail::PairIntegrandWork work;
    for (size_t p = 0; p < spec.couplings.size(); ++p) {
        const auto& c = spec.couplings[p];
        const Eigen::Index pd = c.w.rows();
        Operator gamma = Operator::Zero(pd, pd);
        Operator a;
        if (cache) cache->series[p].reserve(n);
        for (int k = 1; k <= n; ++k) {
            detail::pair_integrand_into(a, c, hist.at(c.i, k), hist.at(c.j, k), work);
            gamma += a;
            if (cache) cache->series[p].push_back(a);
        }
        gamma *= Complex(0.0, -hist.dt());
        omega += embed_pair(gamma, c.i, c.j, spec.dims);
    }
    return omega;
}

struct Omega2Stats {
    long pair_terms = 0;       // computed kappa with (i',j') = (i,j), pair-space accumulation
    long cross_terms = 0;      // computed kappa sharing exactly one index, triple-space accumulation
    long disjoint_computed = 0; // stays zero: vanishing disjoint kappa never reach arithmetic
    long disjoint_skipped = 0;  // disjoint combinations recognized and pruned up front
};

// Second-order Magnus term.  The triangular double time sum is evaluated with a
// running prefix, sum_k [A(k), P(k)] with P(k) = sum_{k'<=k} A(k'), which is an
// exact reassociation of the double rectangular quadrature.  kappa terms whose
// index pairs are disjoint vanish and are never enumerated.
inline Operator compute_omega2(const LocalPropagatorHistory& hist, const SystemSpec& spec,
                               const PairIntegrandCache* cache = nullptr,
                               Omega2Stats* stats = nullptr)
{
    spec.validate();
    const int n = hist.steps();
    const size_t np = spec.couplings.size();
    const Eigen::Index full = spec.full_dim();
    if (cache && cache->series.size() != np)
        throw DimensionError("compute_omega2: integrand cache does not match the coupling list");

    // Overlapping ordered pair combinations (p, q) with p != q, plus the union
    // DOF list and the embedding positions of each pair inside it.
    struct Cross {
        size_t p, q;
        std::vector<int> union_dofs;
        int pa, pb, qa, qb; // positions of (i,j) of p and q inside union_dofs
    };
    std::vector<Cross> crosses;
    for (size_t p = 0; p < np; ++p)
        for (size_t q = 0; q < np; ++q) {
            if (p == q) continue;
            const auto& cp = spec.couplings[p];
            const auto& cq = spec.couplings[q];
            std::vector<int> u{cp.i, cp.j};
            for (int d : {cq.i, cq.j})
                if (d != cp.i && d != cp.j) u.push_back(d);
            if (u.size() == 4) {
                if (stats) ++stats->disjoint_skipped;
                continue;
            }
            std::sort(u.begin(), u.end());
            auto pos = [&u](int d) {
                return static_cast<int>(std::find(u.begin(), u.end(), d) - u.begin());
            };
            crosses.push_back({p, q, u, pos(cp.i), pos(cp.j), pos(cq.i), pos(cq.j)});
        }

    detail::PairIntegrandWork work;
    auto integrand = [&](size_t p, int k) -> Operator {
        if (cache) return cache->series[p][k - 1];
        const auto& c = spec.couplings[p];
        Operator out;
        detail::pair_integrand_into(out, c, hist.at(c.i, k), hist.at(c.j, k), work);
        return out;
    };
    auto embed_in_union = [&](const Operator& a, int pa, int pb, const std::vector<int>& u) {
        std::vector<int> udims(u.size());
        for (size_t d = 0; d < u.size(); ++d) udims[d] = spec.dims[u[d]];
        if (u.size() == 2) return a;
        return embed_pair(a, pa, pb, udims);
    };

    // Running prefixes: per pair in its own pair space, per cross combo the
    // prefix of q's integrand embedded in the union space.
    std::vector<Operator> pair_prefix(np), pair_acc(np);
    for (size_t p = 0; p < np; ++p) {
        const Eigen::Index pd = spec.couplings[p].w.rows();
        pair_prefix[p] = Operator::Zero(pd, pd);
        pair_acc[p] = Operator::Zero(pd, pd);
    }
    std::vector<Operator> cross_prefix(crosses.size()), cross_acc(crosses.size());
    for (size_t c = 0; c < crosses.size(); ++c) {
        Eigen::Index ud = 1;
        for (int d : crosses[c].union_dofs) ud *= spec.dims[d];
        cross_prefix[c] = Operator::Zero(ud, ud);
        cross_acc[c] = Operator::Zero(ud, ud);
    }

    std::vector<Operator> a_k(np);
    Operator comm;
    for (int k = 1; k <= n; ++k) {
        for (size_t p = 0; p < np; ++p) a_k[p] = integrand(p, k);
        for (size_t p = 0; p < np; ++p) {
            // [A(k), prefix(k)] with the zero self-commutator at k' = k dropped
            comm.noalias() = a_k[p] * pair_prefix[p];
            comm.noalias() -= pair_prefix[p] * a_k[p];
            pair_acc[p] += comm;
            pair_prefix[p] += a_k[p];
        }
        for (size_t c = 0; c < crosses.size(); ++c) {
            const auto& x = crosses[c];
            const Operator ap = embed_in_union(a_k[x.p], x.pa, x.pb, x.union_dofs);
            const Operator aq = embed_in_union(a_k[x.q], x.qa, x.qb, x.union_dofs);
            cross_prefix[c] += aq; // include k' = k in the prefix before commuting
            comm.noalias() = ap * cross_prefix[c];
            comm.noalias() -= cross_prefix[c] * ap;
            cross_acc[c] += comm;
        }
    }

    const Complex scale(-hist.dt() * hist.dt() / 2.0, 0.0);
    Operator omega2 = Operator::Zero(full, full);
    for (size_t p = 0; p < np; ++p) {
        if (stats) ++stats->pair_terms;
        omega2 += embed_pair(scale * pair_acc[p], spec.couplings[p].i, spec.couplings[p].j, spec.dims);
    }
    for (size_t c = 0; c < crosses.size(); ++c) {
        if (stats) ++stats->cross_terms;
        const auto& u = crosses[c].union_dofs;
        if (u.size() == 2) {
            omega2 += embed_pair(scale * cross_acc[c], u[0], u[1], spec.dims);
            continue;
        }
        // embed the triple-space result: conjugate by nothing, just place entries
        std::vector<int> udims(u.size());
        for (size_t d = 0; d < u.size(); ++d) udims[d] = spec.dims[u[d]];
        omega2 += embed_subset(scale * cross_acc[c], u, spec.dims);
    }
    return omega2;
}

// Part III: psi <- (⊗_i U_i(T)) exp(Omega) psi0, applied factor by factor so no
// intermediate full-space state or full tensor-product matrix is ever formed.
inline State apply_magnus_step(const LocalPropagatorHistory& hist, const SystemSpec& spec,
                               const Operator& omega, const State& psi0,
                               PropagationStats* stats = nullptr, double tol = 1e-12)
{
    State psi = expm_multiply(omega, psi0, tol);
    if (stats) ++stats->full_expm_multiply_calls;
    const int n = hist.steps();
    for (int i = 0; i < spec.num_dofs; ++i)
        psi = apply_single_dof(hist.at(i, n), i, spec.dims, psi);
    return psi;
}

inline State propagate_magnus1(const SystemSpec& spec, const FieldGrid& f, const State& psi0,
                               PropagationStats* stats = nullptr)
{
    spec.validate();
    if (psi0.size() != spec.full_dim()) throw DimensionError("propagate_magnus1: state dim mismatch");
    detail::check_unit_norm(psi0, "propagate_magnus1");
    const LocalPropagatorHistory hist = compute_local_histories(spec, f, stats);
    const Operator omega = compute_omega1_pairwise(hist, spec);
    State psi = apply_magnus_step(hist, spec, omega, psi0, stats);
    detail::check_final_norm(psi, "propagate_magnus1");
    return psi;
}

inline State propagate_magnus2(const SystemSpec& spec, const FieldGrid& f, const State& psi0,
                               PropagationStats* stats = nullptr, bool reuse_integrands = true)
{
    spec.validate();
    if (psi0.size() != spec.full_dim()) throw DimensionError("propagate_magnus2: state dim mismatch");
    detail::check_unit_norm(psi0, "propagate_magnus2");
    const LocalPropagatorHistory hist = compute_local_histories(spec, f, stats);
    PairIntegrandCache cache;
    Operator omega = compute_omega1_pairwise(hist, spec, reuse_integrands ? &cache : nullptr);
    omega += compute_omega2(hist, spec, reuse_integrands ? &cache : nullptr);
    State psi = apply_magnus_step(hist, spec, omega, psi0, stats);
    detail::check_final_norm(psi, "propagate_magnus2");
    return psi;
}

} // namespace qoc
