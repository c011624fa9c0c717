#pragma once

#include "qoc/linalg.hpp"
#include "qoc/types.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

namespace qoc {

// SI constants; everything downstream works in reduced units
// (energy in B, time in hbar/B, field in B/mu) fixed once at build/parse time.
struct PhysicalConstants {
    double B = 4.033e-24;          // rotational constant, J
    double mu = 2.36496e-30;       // dipole moment magnitude, C·m
    double hbar = 1.054571817e-34; // J·s
    double eps0 = 8.8541878128e-12;

    void validate() const
    {
        if (!(B > 0.0 && mu > 0.0 && hbar > 0.0 && eps0 > 0.0))
            throw ConfigError("physical constants must be strictly positive");
    }

    double field_si_to_internal() const { return mu / B; }          // (V/m) -> B/mu units
    double time_si_to_internal() const { return B / hbar; }         // s -> hbar/B units
    double angular_freq_si_to_internal() const { return hbar / B; } // rad/s -> B/hbar units

    // Dipole-dipole prefactor mu^2 / (4 pi eps0 R^3), in units of B.
    double coupling_strength(double separation_m) const
    {
        if (!(separation_m > 0.0)) throw ConfigError("separation must be positive");
        return mu * mu / (4.0 * std::numbers::pi * eps0 * std::pow(separation_m, 3) * B);
    }
};

// Fixed in-plane geometry: distance and lab-frame angle of each rotor pair.
struct PairGeometry {
    int i = 0, j = 0;
    double separation = 0.0; // meters
    double angle = 0.0;      // radians, angle of the i->j axis vs the field polarization
};

struct RotorGeometry {
    int num_rotors = 0;
    std::vector<PairGeometry> pairs;

    static RotorGeometry two_rotor(double separation_m, double angle_rad = std::numbers::pi / 2)
    {
        return RotorGeometry{2, {{0, 1, separation_m, angle_rad}}};
    }

    // Equilateral triangle with the paper-matched pair angles pi/3, 0, 5pi/3.
    static RotorGeometry equilateral(double separation_m)
    {
        RotorGeometry g;
        g.num_rotors = 3;
        g.pairs = {{0, 1, separation_m, std::numbers::pi / 3},
                   {0, 2, separation_m, 0.0},
                   {1, 2, separation_m, 5 * std::numbers::pi / 3}};
        return g;
    }

    void validate() const
    {
        if (num_rotors < 1) throw ConfigError("geometry: need at least one rotor");
        std::vector<std::vector<bool>> seen(num_rotors, std::vector<bool>(num_rotors, false));
        for (const auto& p : pairs) {
            if (p.i < 0 || p.j >= num_rotors || p.i >= p.j) throw ConfigError("geometry: pair indices need 0 <= i < j < N");
            if (!(p.separation > 0.0)) throw ConfigError("geometry: separations must be positive");
            if (!(p.angle >= 0.0) || !(p.angle < 2 * std::numbers::pi)) throw ConfigError("geometry: angles must lie in [0, 2pi)");
            if (seen[p.i][p.j]) throw ConfigError("geometry: duplicate pair");
            seen[p.i][p.j] = true;
        }
    }
};

// One time-independent pairwise coupling, stored dense in its (i, j) pair space.
// When a Kronecker factorization is known (the rotor builder provides one) it is
// kept alongside so integrators can conjugate factors in the D x D spaces.
struct PairCoupling {
    struct Term {
        double coeff = 0.0;
        Operator left;  // acts on DOF i
        Operator right; // acts on DOF j
    };

    int i = 0, j = 0;
    Operator w;                // dims[i]*dims[j] square
    std::vector<Term> factors; // optional; sum coeff * (left ⊗ right) == w
};

struct SystemSpec {
    int num_dofs = 0;
    std::vector<int> dims;
    std::vector<Operator> kinetic;          // per DOF, units of B
    std::vector<Operator> control_coupling; // per DOF, multiplied by the field value at use time
    std::vector<PairCoupling> couplings;

    Eigen::Index full_dim() const { return product_dim(dims); }

    void validate() const
    {
        if (num_dofs < 1 || static_cast<int>(dims.size()) != num_dofs) throw StructureError("system: dims size mismatch");
        if (static_cast<int>(kinetic.size()) != num_dofs || static_cast<int>(control_coupling.size()) != num_dofs)
            throw StructureError("system: per-DOF operator count mismatch");
        for (int i = 0; i < num_dofs; ++i) {
            if (kinetic[i].rows() != dims[i] || kinetic[i].cols() != dims[i])
                throw StructureError("system: kinetic dim mismatch");
            if (control_coupling[i].rows() != dims[i] || control_coupling[i].cols() != dims[i])
                throw StructureError("system: control coupling dim mismatch");
            if (hermiticity_defect(kinetic[i]) > 1e-12 || hermiticity_defect(control_coupling[i]) > 1e-12)
                throw StructureError("system: per-DOF operators must be Hermitian");
        }
        for (const auto& c : couplings) {
            if (c.i < 0 || c.j >= num_dofs || c.i >= c.j)
                throw StructureError("system: coupling indices need 0 <= i < j < N");
            const Eigen::Index pd = static_cast<Eigen::Index>(dims[c.i]) * dims[c.j];
            if (c.w.rows() != pd || c.w.cols() != pd) throw StructureError("system: coupling dim mismatch");
            if (hermiticity_defect(c.w) > 1e-12) throw StructureError("system: couplings must be Hermitian");
        }
    }
};

// <m|cos phi|m'> = (delta_{m,m'+1} + delta_{m,m'-1})/2 on the basis m = -M..M.
inline Operator cos_matrix(int M)
{
    if (M < 0) throw DimensionError("cos_matrix: M must be >= 0");
    const int d = 2 * M + 1;
    Operator c = Operator::Zero(d, d);
    for (int r = 0; r + 1 < d; ++r) {
        c(r + 1, r) = 0.5;
        c(r, r + 1) = 0.5;
    }
    return c;
}

// <m|sin phi|m'> = -(i/2)(delta_{m,m'+1} - delta_{m,m'-1})
inline Operator sin_matrix(int M)
{
    if (M < 0) throw DimensionError("sin_matrix: M must be >= 0");
    const int d = 2 * M + 1;
    Operator s = Operator::Zero(d, d);
    for (int r = 0; r + 1 < d; ++r) {
        s(r + 1, r) = Complex(0.0, -0.5); // m = m' + 1
        s(r, r + 1) = Complex(0.0, 0.5);  // m = m' - 1
    }
    return s;
}

// L^2 = diag(m^2)
inline Operator lsq_matrix(int M)
{
    if (M < 0) throw DimensionError("lsq_matrix: M must be >= 0");
    const int d = 2 * M + 1;
    Operator l = Operator::Zero(d, d);
    for (int r = 0; r < d; ++r) {
        const double m = static_cast<double>(r - M);
        l(r, r) = m * m;
    }
    return l;
}

// Dipole-dipole pair coupling expanded by angle addition:
//   cos(pi - pj) - 3 cos(pi - t) cos(pj - t)
//     = (1 - 3 cos^2 t) cc + (1 - 3 sin^2 t) ss - 3 sin t cos t (cs + sc),
// exact in the truncated basis; no position-grid discretization enters.
inline PairCoupling dipole_pair_coupling(int i, int j, double strength, double angle, int M)
{
    const Operator c = cos_matrix(M);
    const Operator s = sin_matrix(M);
    const double ct = std::cos(angle), st = std::sin(angle);

    PairCoupling pc;
    pc.i = i;
    pc.j = j;
    pc.factors = {{strength * (1.0 - 3.0 * ct * ct), c, c},
                  {strength * (1.0 - 3.0 * st * st), s, s},
                  {strength * (-3.0 * st * ct), c, s},
                  {strength * (-3.0 * st * ct), s, c}};
    const Eigen::Index pd = static_cast<Eigen::Index>(2 * M + 1) * (2 * M + 1);
    pc.w = Operator::Zero(pd, pd);
    for (const auto& t : pc.factors) pc.w += t.coeff * kron(t.left, t.right);
    return pc;
}

// Planar rigid rotors with dipole-dipole coupling, in reduced units:
// kinetic = L^2, control coupling = -cos phi, W_ij = mu^2/(4 pi eps0 R^3 B) * (...).
inline SystemSpec build_rotor_system(const RotorGeometry& geom, int M,
                                     const PhysicalConstants& consts = {})
{
    geom.validate();
    consts.validate();
    if (M < 0) throw ConfigError("build_rotor_system: M must be >= 0");

    SystemSpec spec;
    spec.num_dofs = geom.num_rotors;
    spec.dims.assign(geom.num_rotors, 2 * M + 1);
    const Operator kin = lsq_matrix(M);
    const Operator ctl = -cos_matrix(M);
    for (int i = 0; i < geom.num_rotors; ++i) {
        spec.kinetic.push_back(kin);
        spec.control_coupling.push_back(ctl);
    }
    for (const auto& p : geom.pairs)
        spec.couplings.push_back(
            dipole_pair_coupling(p.i, p.j, consts.coupling_strength(p.separation), p.angle, M));
    spec.validate();
    return spec;
}

// H_i(eps) = kinetic_i + eps * control_coupling_i
inline Operator local_hamiltonian(const SystemSpec& spec, int i, double eps)
{
    if (i < 0 || i >= spec.num_dofs) throw DimensionError("local_hamiltonian: DOF index out of range");
    return spec.kinetic[i] + eps * spec.control_coupling[i];
}

// Control part of the full-space Hamiltonian, sum of embedded per-DOF couplings.
inline Operator full_control_operator(const SystemSpec& spec, Eigen::Index dim_cap = kDimCap)
{
    const Eigen::Index full = spec.full_dim();
    if (full > dim_cap) throw DimensionError("full_control_operator: dimension cap exceeded");
    Operator out = Operator::Zero(full, full);
    for (int i = 0; i < spec.num_dofs; ++i)
        out += embed_single(spec.control_coupling[i], i, spec.dims, dim_cap);
    return out;
}

inline Operator full_static_hamiltonian(const SystemSpec& spec, Eigen::Index dim_cap = kDimCap)
{
    const Eigen::Index full = spec.full_dim();
    if (full > dim_cap) throw DimensionError("full_static_hamiltonian: dimension cap exceeded");
    Operator out = Operator::Zero(full, full);
    for (int i = 0; i < spec.num_dofs; ++i)
        out += embed_single(spec.kinetic[i], i, spec.dims, dim_cap);
    for (const auto& c : spec.couplings)
        out += embed_pair(c.w, c.i, c.j, spec.dims, dim_cap);
    return out;
}

inline Operator full_hamiltonian(const SystemSpec& spec, double eps, Eigen::Index dim_cap = kDimCap)
{
    Operator h = full_static_hamiltonian(spec, dim_cap);
    h += eps * full_control_operator(spec, dim_cap);
    if (hermiticity_defect(h) > 1e-10) throw NumericalError("full_hamiltonian: Hermiticity lost");
    return h;
}

// Copy with all W_ij scaled by lambda (0 turns interactions off).
inline SystemSpec scale_couplings(SystemSpec spec, double lambda)
{
    for (auto& c : spec.couplings) {
        c.w *= lambda;
        for (auto& t : c.factors) t.coeff *= lambda;
    }
    return spec;
}

// |0> factor for one DOF (m = 0 sits at row M for D = 2M+1).
inline State ground_factor(int dim)
{
    if (dim < 1 || dim % 2 == 0) throw DimensionError("ground_factor: dim must be odd and positive");
    State v = State::Zero(dim);
    v((dim - 1) / 2) = 1.0;
    return v;
}

inline std::vector<State> ground_product_factors(const SystemSpec& spec)
{
    std::vector<State> out;
    out.reserve(spec.num_dofs);
    for (int d : spec.dims) out.push_back(ground_factor(d));
    return out;
}

inline State product_state(const std::vector<State>& factors)
{
    if (factors.empty()) throw DimensionError("product_state: no factors");
    State psi = factors.front();
    for (size_t i = 1; i < factors.size(); ++i) {
        State next(psi.size() * factors[i].size());
        for (Eigen::Index a = 0; a < psi.size(); ++a)
            next.segment(a * factors[i].size(), factors[i].size()) = psi(a) * factors[i];
        psi = std::move(next);
    }
    return psi;
}

} // namespace qoc
