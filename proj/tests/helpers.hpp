#pragma once

#include "qoc/control_field.hpp"
#include "qoc/system_model.hpp"
#include "qoc/types.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace testutil {

using qoc::Complex;
using qoc::Operator;
using qoc::State;

inline State random_unit_state(std::mt19937_64& rng, Eigen::Index dim)
{
    std::normal_distribution<double> nd;
    State v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = Complex(nd(rng), nd(rng));
    v.normalize();
    return v;
}

inline Operator random_matrix(std::mt19937_64& rng, Eigen::Index dim)
{
    std::normal_distribution<double> nd;
    Operator a(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) a(i, j) = Complex(nd(rng), nd(rng));
    return a;
}

inline Operator random_hermitian(std::mt19937_64& rng, Eigen::Index dim)
{
    Operator a = random_matrix(rng, dim);
    return Operator(0.5 * (a + a.adjoint()));
}

inline Operator random_antihermitian(std::mt19937_64& rng, Eigen::Index dim)
{
    Operator a = random_matrix(rng, dim);
    return Operator(0.5 * (a - a.adjoint()));
}

inline double overlap(const State& a, const State& b) { return std::abs(a.dot(b)); }

// Plain truncated Taylor sum; independent of the production exponential path.
// Valid as an oracle for moderate norms only.
inline Operator taylor_expm_oracle(const Operator& a, int terms = 60)
{
    Operator sum = Operator::Identity(a.rows(), a.cols());
    Operator power = sum;
    for (int k = 1; k <= terms; ++k) {
        power = Operator(power * a) / static_cast<double>(k);
        sum += power;
    }
    return sum;
}

inline double rel_frobenius_diff(const Operator& a, const Operator& b)
{
    const double denom = std::max(b.norm(), 1e-300);
    return (a - b).norm() / denom;
}

// Momentum-basis matrix elements of a 2pi-periodic single-angle function by
// uniform grid quadrature: <m|f|m'> = (1/G) sum_g f(phi_g) e^{i(m'-m)phi_g}.
// Exact for trigonometric polynomials once G is large enough.
template <typename Fn>
Operator grid_single_angle_oracle(Fn&& f, int M, int grid_points)
{
    const int d = 2 * M + 1;
    Operator out = Operator::Zero(d, d);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) {
            const int m = r - M, mp = c - M;
            Complex acc(0.0, 0.0);
            for (int g = 0; g < grid_points; ++g) {
                const double phi = 2.0 * std::numbers::pi * g / grid_points;
                acc += f(phi) * std::exp(Complex(0.0, (mp - m) * phi));
            }
            out(r, c) = acc / static_cast<double>(grid_points);
        }
    return out;
}

// Same for a two-angle function, indexed over the pair space (i outer, j inner).
template <typename Fn>
Operator grid_pair_angle_oracle(Fn&& w, int M, int grid_points)
{
    const int d = 2 * M + 1;
    Operator out = Operator::Zero(d * d, d * d);
    std::vector<Complex> phase(grid_points * (4 * M + 1));
    for (int g = 0; g < grid_points; ++g)
        for (int dm = -2 * M; dm <= 2 * M; ++dm)
            phase[g * (4 * M + 1) + (dm + 2 * M)] =
                std::exp(Complex(0.0, dm * 2.0 * std::numbers::pi * g / grid_points));

    for (int ri = 0; ri < d; ++ri)
        for (int rj = 0; rj < d; ++rj)
            for (int ci = 0; ci < d; ++ci)
                for (int cj = 0; cj < d; ++cj) {
                    const int dmi = ci - ri, dmj = cj - rj;
                    Complex acc(0.0, 0.0);
                    for (int g = 0; g < grid_points; ++g) {
                        const double pi_g = 2.0 * std::numbers::pi * g / grid_points;
                        Complex inner(0.0, 0.0);
                        for (int h = 0; h < grid_points; ++h) {
                            const double pj_h = 2.0 * std::numbers::pi * h / grid_points;
                            inner += w(pi_g, pj_h) * phase[h * (4 * M + 1) + (dmj + 2 * M)];
                        }
                        acc += inner * phase[g * (4 * M + 1) + (dmi + 2 * M)];
                    }
                    out(ri * d + rj, ci * d + cj) = acc / static_cast<double>(grid_points * grid_points);
                }
    return out;
}

// The dipole-dipole angular factor of two planar rotors.
inline double dipole_angular(double phi_i, double phi_j, double theta)
{
    return std::cos(phi_i - phi_j) - 3.0 * std::cos(phi_i - theta) * std::cos(phi_j - theta);
}

inline qoc::FieldGrid constant_field(double value, int n, double dt)
{
    qoc::FieldGrid f;
    f.n = n;
    f.dt = dt;
    f.values = Eigen::VectorXd::Constant(n, value);
    return f;
}

} // namespace testutil
