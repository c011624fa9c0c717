#pragma once

#include "qoc/types.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace qoc {

// Control field sampled at t_k = k*dt for k = 1..n (t = 0 is never sampled).
struct FieldGrid {
    int n = 0;
    double dt = 0.0;
    Eigen::VectorXd values; // values[k-1] = eps(k*dt)

    double total_time() const { return n * dt; }
    double time_at(int k) const { return k * dt; } // k is 1-based

    void validate() const
    {
        if (n < 1 || !(dt > 0.0)) throw ConfigError("field grid: need n >= 1 and dt > 0");
        if (values.size() != n) throw ConfigError("field grid: sample count mismatch");
        if (!values.allFinite()) throw ConfigError("field grid: non-finite samples");
    }
};

// Transition frequency of the free rotor, (2m+1) in units of B/hbar.
inline double rotor_transition_frequency(int m) { return 2.0 * m + 1.0; }

// Gaussian window peaking at T/2 with exp(-7) wings at t = 0 and t = T.
inline double gaussian_envelope(double t, double total_time)
{
    const double half_width = total_time / (2.0 * std::sqrt(7.0));
    const double u = (t - total_time / 2.0) / half_width;
    return std::exp(-u * u);
}

// Gaussian-windowed trial field over the first F transition frequencies:
// eps(t) = a0 * env(t) * sum_m b_m cos(omega_m t).
struct TrialFieldParams {
    double a0 = 0.0;
    std::vector<double> b; // F = b.size()
};

inline FieldGrid trial_field(const TrialFieldParams& p, int n, double dt)
{
    if (p.b.empty()) throw ConfigError("trial_field: need at least one frequency coefficient");
    FieldGrid f;
    f.n = n;
    f.dt = dt;
    f.values.resize(n);
    const double T = f.total_time();
    for (int k = 1; k <= n; ++k) {
        const double t = f.time_at(k);
        double sum = 0.0;
        for (size_t m = 0; m < p.b.size(); ++m)
            sum += p.b[m] * std::cos(rotor_transition_frequency(static_cast<int>(m)) * t);
        f.values(k - 1) = p.a0 * gaussian_envelope(t, T) * sum;
    }
    f.validate();
    return f;
}

// Random envelope-free benchmark field, eps(t) = a0 * sum_m b_m cos(omega_m t + d_m)
// with b_m ~ U(0,1) and d_m ~ U(0,2pi).
inline FieldGrid random_benchmark_field(double a0, int n, double dt, std::mt19937_64& rng,
                                        int num_frequencies = 4)
{
    if (num_frequencies < 1) throw ConfigError("random_benchmark_field: need >= 1 frequency");
    std::uniform_real_distribution<double> amp(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::vector<double> b(num_frequencies), d(num_frequencies);
    for (int m = 0; m < num_frequencies; ++m) {
        b[m] = amp(rng);
        d[m] = phase(rng);
    }
    FieldGrid f;
    f.n = n;
    f.dt = dt;
    f.values.resize(n);
    for (int k = 1; k <= n; ++k) {
        const double t = f.time_at(k);
        double sum = 0.0;
        for (int m = 0; m < num_frequencies; ++m)
            sum += b[m] * std::cos(rotor_transition_frequency(m) * t + d[m]);
        f.values(k - 1) = a0 * sum;
    }
    f.validate();
    return f;
}

// Smooth random update: delta(t) = scale * max|f| * env(t) * sum_m c_m cos(omega_m t + p_m)
// with c_m ~ U(-1,1), p_m ~ U(0,2pi).  The sum is divided by sum|c_m| so the
// perturbation amplitude never exceeds scale * max|f|.
inline FieldGrid perturb(const FieldGrid& f, std::mt19937_64& rng, double scale,
                         int num_frequencies = 4)
{
    f.validate();
    if (!(scale >= 0.0)) throw ConfigError("perturb: scale must be >= 0");
    if (num_frequencies < 1) throw ConfigError("perturb: need >= 1 frequency");

    std::uniform_real_distribution<double> coeff(-1.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::vector<double> c(num_frequencies), p(num_frequencies);
    double abs_sum = 0.0;
    for (int m = 0; m < num_frequencies; ++m) {
        c[m] = coeff(rng);
        p[m] = phase(rng);
        abs_sum += std::abs(c[m]);
    }
    if (scale == 0.0 || abs_sum == 0.0) return f;

    const double amp = scale * f.values.cwiseAbs().maxCoeff() / abs_sum;
    const double T = f.total_time();
    FieldGrid out = f;
    for (int k = 1; k <= f.n; ++k) {
        const double t = f.time_at(k);
        double sum = 0.0;
        for (int m = 0; m < num_frequencies; ++m)
            sum += c[m] * std::cos(rotor_transition_frequency(m) * t + p[m]);
        out.values(k - 1) += amp * gaussian_envelope(t, T) * sum;
    }
    return out;
}

// One-sided periodogram, (angular frequency, power density) pairs with
// sum(power * d_omega) equal to the mean square of the samples.
inline std::vector<std::pair<double, double>> power_spectrum(const FieldGrid& f)
{
    f.validate();
    if (f.n < 2) throw ConfigError("power_spectrum: need n >= 2");
    const int n = f.n;
    const double d_omega = 2.0 * std::numbers::pi / (n * f.dt);

    std::vector<std::pair<double, double>> out;
    out.reserve(n / 2 + 1);
    for (int j = 0; j <= n / 2; ++j) {
        const double step_arg = -2.0 * std::numbers::pi * j / n;
        const Complex step(std::cos(step_arg), std::sin(step_arg));
        Complex w(1.0, 0.0);
        Complex x(0.0, 0.0);
        for (int k = 0; k < n; ++k) {
            x += f.values(k) * w;
            w *= step;
        }
        double p = std::norm(x);
        const bool mirrored = j != 0 && !(n % 2 == 0 && j == n / 2);
        if (mirrored) p *= 2.0; // fold in the conjugate bin
        out.emplace_back(j * d_omega, p * f.dt / (2.0 * std::numbers::pi * n));
    }
    return out;
}

} // namespace qoc
