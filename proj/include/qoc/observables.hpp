#pragma once

#include "qoc/linalg.hpp"
#include "qoc/system_model.hpp"
#include "qoc/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <vector>

namespace qoc {

// <psi|op|psi> for Hermitian op; the imaginary residual is asserted away.
inline double expectation(const State& psi, const Operator& op)
{
    if (op.rows() != op.cols() || op.rows() != psi.size())
        throw DimensionError("expectation: dimension mismatch");
    if (hermiticity_defect(op) > 1e-10) throw StructureError("expectation: operator is not Hermitian");
    const Complex v = psi.dot(op * psi); // Eigen's dot conjugates the left argument
    if (std::abs(v.imag()) > 1e-10)
        throw NumericalError("expectation: imaginary residual " + std::to_string(v.imag()));
    return v.real();
}

// Same, for an operator acting on a single factor; avoids the full-space embed.
inline double expectation_local(const State& psi, const Operator& op, int i,
                                const std::vector<int>& dims)
{
    if (hermiticity_defect(op) > 1e-10)
        throw StructureError("expectation_local: operator is not Hermitian");
    const Complex v = psi.dot(apply_single_dof(op, i, dims, psi));
    if (std::abs(v.imag()) > 1e-10)
        throw NumericalError("expectation_local: imaginary residual " + std::to_string(v.imag()));
    return v.real();
}

enum class ObjectiveKind {
    sum_of_orientations,    // sum_i <cos phi_i>
    signed_orientations,    // sum_i w_i <cos phi_i>
    projection_onto_target, // |<target|psi>|^2
};

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::sum_of_orientations;
    std::vector<double> weights; // per DOF, orientation kinds
    std::optional<State> target; // projection kind, unit norm
    std::vector<int> dims;

    static ObjectiveSpec orientations(const std::vector<int>& dims)
    {
        ObjectiveSpec o;
        o.kind = ObjectiveKind::sum_of_orientations;
        o.weights.assign(dims.size(), 1.0);
        o.dims = dims;
        return o;
    }

    static ObjectiveSpec signed_orientations(const std::vector<int>& dims, std::vector<double> w)
    {
        ObjectiveSpec o;
        o.kind = ObjectiveKind::signed_orientations;
        o.weights = std::move(w);
        o.dims = dims;
        return o;
    }

    static ObjectiveSpec projection(const std::vector<int>& dims, State target)
    {
        ObjectiveSpec o;
        o.kind = ObjectiveKind::projection_onto_target;
        o.target = std::move(target);
        o.dims = dims;
        return o;
    }

    void validate() const
    {
        const Eigen::Index full = product_dim(dims);
        if (kind == ObjectiveKind::projection_onto_target) {
            if (!target) throw ConfigError("objective: projection kind needs a target state");
            if (target->size() != full) throw ConfigError("objective: target dim mismatch");
            if (std::abs(target->norm() - 1.0) > 1e-10)
                throw ConfigError("objective: projection target must have unit norm");
        } else {
            if (weights.size() != dims.size())
                throw ConfigError("objective: need one weight per DOF");
        }
    }
};

inline double objective_value(const ObjectiveSpec& obj, const State& psi)
{
    obj.validate();
    if (psi.size() != product_dim(obj.dims)) throw DimensionError("objective_value: state dim mismatch");
    if (obj.kind == ObjectiveKind::projection_onto_target)
        return std::norm(obj.target->dot(psi));
    double j = 0.0;
    for (size_t i = 0; i < obj.dims.size(); ++i) {
        if (obj.weights[i] == 0.0) continue;
        const int m = (obj.dims[i] - 1) / 2;
        j += obj.weights[i] * expectation_local(psi, cos_matrix(m), static_cast<int>(i), obj.dims);
    }
    return j;
}

// (2M+1)^{-1/2} sum_m |m>|m>, the maximally entangled two-factor reference state.
inline State mes_state(int M)
{
    if (M < 0) throw DimensionError("mes_state: M must be >= 0");
    const Eigen::Index d = 2 * M + 1;
    State psi = State::Zero(d * d);
    const double amp = 1.0 / std::sqrt(static_cast<double>(d));
    for (Eigen::Index m = 0; m < d; ++m) psi(m * d + m) = amp;
    return psi;
}

// S = -sum lambda ln lambda over the reduced density matrix spectrum; natural log,
// eigenvalues below 1e-14 clamped to zero.
inline double von_neumann_entropy(const State& psi, const std::vector<int>& keep,
                                  const std::vector<int>& dims)
{
    const Operator rho = partial_trace(psi, keep, dims);
    Eigen::SelfAdjointEigenSolver<Operator> es(rho, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("von_neumann_entropy: eigensolver failed");
    double s = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double lambda = es.eigenvalues()(i);
        if (lambda < 1e-14) continue;
        s -= lambda * std::log(lambda);
    }
    return s;
}

} // namespace qoc
