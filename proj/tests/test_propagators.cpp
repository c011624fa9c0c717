#include "qoc/propagators.hpp"

#include "qoc/observables.hpp"

#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace qoc;
using testutil::constant_field;
using testutil::overlap;

namespace {

FieldGrid random_field(std::mt19937_64& rng, double a0, int n, double dt)
{
    return random_benchmark_field(a0, n, dt, rng);
}

// Brute-force Omega_2: full-space double loop over the naive integrands.
Operator omega2_fullspace_oracle(const LocalPropagatorHistory& hist, const SystemSpec& spec)
{
    const Eigen::Index full = spec.full_dim();
    Operator w = Operator::Zero(full, full);
    for (const auto& c : spec.couplings) w += embed_pair(c.w, c.i, c.j, spec.dims);

    const int n = hist.steps();
    std::vector<Operator> b;
    b.reserve(n);
    for (int k = 1; k <= n; ++k) {
        Operator u = Operator::Identity(1, 1);
        for (int i = 0; i < spec.num_dofs; ++i) u = kron(u, hist.at(i, k));
        b.push_back(u.adjoint() * w * u);
    }
    Operator acc = Operator::Zero(full, full);
    for (int k = 0; k < n; ++k)
        for (int kp = 0; kp <= k; ++kp) acc += b[k] * b[kp] - b[kp] * b[k];
    return Operator(-hist.dt() * hist.dt() / 2.0 * acc);
}

} // namespace

TEST_CASE("local histories", "[propagators]")
{
    const SystemSpec spec = build_rotor_system(RotorGeometry::two_rotor(5e-9), 2);

    // single constant step: U_i(dt) = exp(-i H_i dt)
    FieldGrid one = constant_field(0.7, 1, 0.01);
    const auto hist1 = compute_local_histories(spec, one);
    const Operator expect = expm(Operator(Complex(0.0, -0.01) * local_hamiltonian(spec, 0, 0.7)));
    REQUIRE(testutil::rel_frobenius_diff(hist1.at(0, 1), expect) < 1e-14);
    REQUIRE(hist1.at(0, 0) == Operator::Identity(5, 5));

    // zero field: diagonal kinetic phases
    FieldGrid zero = constant_field(0.0, 50, 0.05);
    const auto hist0 = compute_local_histories(spec, zero);
    for (int k : {1, 25, 50}) {
        const Operator& u = hist0.at(0, k);
        for (int r = 0; r < 5; ++r) {
            const double m = r - 2;
            const Complex phase = std::exp(Complex(0.0, -m * m * k * 0.05));
            REQUIRE(std::abs(u(r, r) - phase) < 1e-12);
        }
    }

    // unitarity defect stays small along a random field
    std::mt19937_64 rng(41);
    FieldGrid f = random_field(rng, 2.9, 100, 0.05);
    const auto hist = compute_local_histories(spec, f);
    for (int k = 0; k <= 100; ++k) REQUIRE(unitarity_defect(hist.at(1, k)) <= 1e-9);
}

TEST_CASE("step resolution guard", "[propagators]")
{
    const SystemSpec spec = build_rotor_system(RotorGeometry::two_rotor(5e-9), 2);
    // a field jumping by 30 units in one 0.1 step is far past the guard
    FieldGrid jumpy;
    jumpy.n = 4;
    jumpy.dt = 0.1;
    jumpy.values.resize(4);
    jumpy.values << 0.0, 30.0, -30.0, 0.0;
    REQUIRE_THROWS_AS(compute_local_histories(spec, jumpy), ConfigError);
    REQUIRE_THROWS_AS(propagate_exact(spec, jumpy, product_state(ground_product_factors(spec))),
                      ConfigError);
}

TEST_CASE("exact propagation basics", "[propagators]")
{
    const SystemSpec spec = build_rotor_system(RotorGeometry::two_rotor(6e-9), 1);
    const State psi0 = product_state(ground_product_factors(spec));

    // constant field: all steps commute, equals one exponential of H T
    FieldGrid f = constant_field(0.8, 64, 0.05);
    const State stepped = propagate_exact(spec, f, psi0);
    const Operator h = full_hamiltonian(spec, 0.8);
    const State direct = expm_multiply(Operator(Complex(0.0, -f.total_time()) * h), psi0, 1e-13);
    REQUIRE((stepped - direct).norm() < 1e-9);
    REQUIRE(std::abs(stepped.norm() - 1.0) < 1e-9);

    // stationary state: zero field, zero coupling, |00> has zero kinetic energy
    const SystemSpec uncoupled = scale_couplings(spec, 0.0);
    FieldGrid zero = constant_field(0.0, 32, 0.05);
    const State still = propagate_exact(uncoupled, zero, psi0);
    REQUIRE(overlap(still, psi0) > 1.0 - 1e-12);

    // counter: n full-space exponential actions
    PropagationStats stats;
    propagate_exact(spec, f, psi0, &stats);
    REQUIRE(stats.full_expm_multiply_calls == 64);
}

TEST_CASE("exact propagation self-convergence", "[propagators]")
{
    const SystemSpec spec = build_rotor_system(RotorGeometry::two_rotor(5e-9), 2);
    const State psi0 = product_state(ground_product_factors(spec));
    std::mt19937_64 rng(42);

    const double T = 10.0;
    const int n = 200;
    std::mt19937_64 rng_field(43);
    // same field sampled on n and 2n points
    std::vector<double> b(4), d(4);
    std::uniform_real_distribution<double> amp(0.0, 1.0), ph(0.0, 2 * std::numbers::pi);
    for (int m = 0; m < 4; ++m) { b[m] = amp(rng_field); d[m] = ph(rng_field); }
    auto sample = [&](int steps) {
        FieldGrid f;
        f.n = steps;
        f.dt = T / steps;
        f.values.resize(steps);
        for (int k = 1; k <= steps; ++k) {
            double v = 0.0;
            for (int m = 0; m < 4; ++m) v += b[m] * std::cos(rotor_transition_frequency(m) * f.time_at(k) + d[m]);
            f.values(k - 1) = 2.9 * v;
        }
        return f;
    };

    const State coarse = propagate_exact(spec, sample(n), psi0);
    const State fine = propagate_exact(spec, sample(2 * n), psi0);
    const State finest = propagate_exact(spec, sample(4 * n), psi0);
    const double err_coarse = 1.0 - overlap(coarse, finest);
    const double err_fine = 1.0 - overlap(fine, finest);
    REQUIRE(err_fine > 0.0);
    REQUIRE(err_coarse / err_fine >= 1.8); // first-order step error shrinks with n
}

TEST_CASE("zeroth order propagation", "[propagators]")
{
    const SystemSpec spec = build_rotor_system(RotorGeometry::two_rotor(5e-9), 2);
    const auto factors = ground_product_factors(spec);

    FieldGrid zero = constant_field(0.0, 16, 0.05);
    REQUIRE(overlap(propagate_zeroth(spec, zero, factors), product_state(factors)) > 1.0 - 1e-12);

    // separable limit: equals exact when the couplings vanish
    std::mt19937_64 rng(44);
    FieldGrid f = random_field(rng, 2.9, 150, 0.05);
    const SystemSpec uncoupled = scale_couplings(spec, 0.0);
    const State zeroth = propagate_zeroth(uncoupled, f, factors);
    const State exact = propagate_exact(uncoupled, f, product_state(factors));
    REQUIRE(1.0 - overlap(zeroth, exact) < 1e-8);

    // identical rotors see the same field: identical factor states
    const auto hist = compute_local_histories(spec, f);
    const State f0 = hist.at(0, f.n) * factors[0];
    const State f1 = hist.at(1, f.n) * factors[1];
    REQUIRE((f0 - f1).norm() < 1e-12);

    REQUIRE_THROWS_AS(propagate_zeroth(spec, f, {factors[0]}), StructureError);
}

TEST_CASE("omega1 naive path", "[propagators]")
{
    const int M = 1;
    SystemSpec spec = build_rotor_system(RotorGeometry::two_rotor(5e-9), M);

    // W scaled to zero gives the zero generator
    std::mt19937_64 rng(45);
    FieldGrid f = random_field(rng, 2.0, 8, 0.05);
    const SystemSpec off = scale_couplings(spec, 0.0);
    const auto hist_off = compute_local_histories(off, f);
    REQUIRE(compute_omega1_naive(hist_off, off).cwiseAbs().maxCoeff() == 0.0);

    // identity frames (zero local H): Omega = -i dt n W... with n = 1: -i dt W
    SystemSpec frozen = spec;
    for (auto& k : frozen.kinetic) k.setZero();
    for (auto& c : frozen.control_coupling) c.setZero();
    FieldGrid one = constant_field(0.0, 1, 0.05);
    const auto hist1 = compute_local_histories(frozen, one);
    const Operator omega = compute_omega1_naive(hist1, frozen);
    const Operator expect = Complex(0.0, -0.05) * embed_pair(frozen.couplings[0].w, 0, 1, frozen.dims);
    REQUIRE(testutil::rel_frobenius_diff(omega, expect) < 1e-14);

    // anti-Hermitian for a random field
    const auto hist = compute_local_histories(spec, f);
    const Operator o = compute_omega1_naive(hist, spec);
    REQUIRE((o + o.adjoint()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("omega1 pairwise equals naive", "[propagators]")
{
    std::mt19937_64 rng(46);
    std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);
    std::uniform_real_distribution<double> sep(4e-9, 9e-9);

    for (int trial = 0; trial < 6; ++trial) {
        const int N = 2 + trial % 2;
        const int M = 1 + trial % 2;
        RotorGeometry geom;
        geom.num_rotors = N;
        for (int i = 0; i < N; ++i)
            for (int j = i + 1; j < N; ++j) geom.pairs.push_back({i, j, sep(rng), angle(rng)});
        const SystemSpec spec = build_rotor_system(geom, M);

        FieldGrid f = random_field(rng, 2.9, 4 + 12 * (trial % 2), 0.05);
        const auto hist = compute_local_histories(spec, f);
        const Operator naive = compute_omega1_naive(hist, spec);
        const Operator pairwise = compute_omega1_pairwise(hist, spec);
        REQUIRE(testutil::rel_frobenius_diff(pairwise, naive) < 1e-12);
    }

    // dense couplings without a stored factorization take the generic path
    SystemSpec dense = build_rotor_system(RotorGeometry::two_rotor(5e-9), 1);
    dense.couplings[0].factors.clear();
    FieldGrid f = random_field(rng, 2.0, 8, 0.05);
    const auto hist = compute_local_histories(dense, f);
    REQUIRE(testutil::rel_frobenius_diff(compute_omega1_pairwise(hist, dense),
                                         compute_omega1_naive(hist, dense)) < 1e-12);

    // single pair: gamma_12 embedded is the whole generator
    const SystemSpec two = build_rotor_system(RotorGeometry::two_rotor(6e-9), 1);
    const auto hist2 = compute_local_histories(two, f);
    REQUIRE(testutil::rel_frobenius_diff(compute_omega1_pairwise(hist2, two),
                                         compute_omega1_naive(hist2, two)) < 1e-13);
}

TEST_CASE("omega1 scales as R^-3", "[propagators]")
{
    std::mt19937_64 rng(47);
    FieldGrid f = random_field(rng, 2.9, 16, 0.05);

    const SystemSpec near = build_rotor_system(RotorGeometry::equilateral(5e-9), 1);
    const SystemSpec far = build_rotor_system(RotorGeometry::equilateral(10e-9), 1);
    const auto hist_near = compute_local_histories(near, f);
    const auto hist_far = compute_local_histories(far, f);
    const Operator o_near = compute_omega1_pairwise(hist_near, near);
    const Operator o_far = compute_omega1_pairwise(hist_far, far);
    REQUIRE(testutil::rel_frobenius_diff(Operator(8.0 * o_far), o_near) < 1e-12);
}

TEST_CASE("magnus1 propagation", "[propagators]")
{
    std::mt19937_64 rng(48);

    // zero coupling: identical to exact
    const SystemSpec spec = build_rotor_system(RotorGeometry::two_rotor(5e-9), 2);
    const SystemSpec off = scale_couplings(spec, 0.0);
    const State psi0 = product_state(ground_product_factors(spec));
    FieldGrid f = random_field(rng, 2.9, 200, 0.05);
    REQUIRE(1.0 - overlap(propagate_magnus1(off, f, psi0), propagate_exact(off, f, psi0)) < 1e-9);

    // magnus1 beats zeroth at large separation (M = 4, theta = pi/2 system)
    const SystemSpec far = build_rotor_system(RotorGeometry::two_rotor(50e-9), 4);
    const State psi0_far = product_state(ground_product_factors(far));
    FieldGrid g = random_field(rng, 2.9, 250, 0.05);
    const State exact = propagate_exact(far, g, psi0_far);
    const State m1 = propagate_magnus1(far, g, psi0_far);
    const State z0 = propagate_zeroth(far, g, ground_product_factors(far));
    REQUIRE(overlap(m1, exact) >= overlap(z0, exact));

    // overlap with exact improves monotonically along a separation ladder
    double prev = 0.0;
    for (double r_nm : {5.0, 7.0, 9.0, 12.0, 16.0}) {
        const SystemSpec s = build_rotor_system(RotorGeometry::two_rotor(r_nm * 1e-9), 2);
        const State p0 = product_state(ground_product_factors(s));
        const double ov = overlap(propagate_magnus1(s, g, p0), propagate_exact(s, g, p0));
        REQUIRE(ov > prev);
        prev = ov;
    }

    // structural claim: exactly one full-space exponential action
    PropagationStats stats;
    propagate_magnus1(spec, f, psi0, &stats);
    REQUIRE(stats.full_expm_multiply_calls == 1);
}

TEST_CASE("omega2 against the full-space double-loop oracle", "[propagators]")
{
    std::mt19937_64 rng(49);

    // N = 2, M = 1, n = 8
    const SystemSpec two = build_rotor_system(RotorGeometry::two_rotor(5e-9), 1);
    FieldGrid f8 = random_field(rng, 2.0, 8, 0.05);
    const auto hist2 = compute_local_histories(two, f8);
    const Operator oracle2 = omega2_fullspace_oracle(hist2, two);
    const Operator got2 = compute_omega2(hist2, two);
    REQUIRE(testutil::rel_frobenius_diff(got2, oracle2) < 1e-12);
    REQUIRE((got2 + got2.adjoint()).cwiseAbs().maxCoeff() < 1e-9);

    // frozen frames, N = 2: the self-commutator vanishes identically
    SystemSpec frozen = two;
    for (auto& k : frozen.kinetic) k.setZero();
    for (auto& c : frozen.control_coupling) c.setZero();
    FieldGrid fz = constant_field(0.0, 6, 0.05);
    const auto hist_frozen = compute_local_histories(frozen, fz);
    REQUIRE(compute_omega2(hist_frozen, frozen).cwiseAbs().maxCoeff() < 1e-14);

    // N = 3 with all pairs coupled
    const SystemSpec three = build_rotor_system(RotorGeometry::equilateral(6e-9), 1);
    FieldGrid f6 = random_field(rng, 2.0, 6, 0.05);
    const auto hist3 = compute_local_histories(three, f6);
    Omega2Stats stats3;
    const Operator got3 = compute_omega2(hist3, three, nullptr, &stats3);
    REQUIRE(testutil::rel_frobenius_diff(got3, omega2_fullspace_oracle(hist3, three)) < 1e-12);
    REQUIRE(stats3.pair_terms == 3);
    REQUIRE(stats3.cross_terms == 6);     // every ordered pair of pairs overlaps for N = 3
    REQUIRE(stats3.disjoint_skipped == 0);
    REQUIRE(stats3.disjoint_computed == 0);

    // N = 4 ring: disjoint combinations exist and are pruned without arithmetic
    RotorGeometry ring;
    ring.num_rotors = 4;
    ring.pairs = {{0, 1, 6e-9, 0.3}, {1, 2, 6e-9, 1.1}, {2, 3, 6e-9, 2.2}, {0, 3, 6e-9, 4.0}};
    const SystemSpec four = build_rotor_system(ring, 1);
    FieldGrid f4 = random_field(rng, 2.0, 4, 0.05);
    const auto hist4 = compute_local_histories(four, f4);
    Omega2Stats stats4;
    const Operator got4 = compute_omega2(hist4, four, nullptr, &stats4);
    REQUIRE(testutil::rel_frobenius_diff(got4, omega2_fullspace_oracle(hist4, four)) < 1e-12);
    REQUIRE(stats4.pair_terms == 4);
    REQUIRE(stats4.disjoint_skipped == 4); // (01,23), (23,01), (12,03), (03,12)
    REQUIRE(stats4.cross_terms == 8);
    REQUIRE(stats4.disjoint_computed == 0);

    // integrand cache reuse gives the same generator
    PairIntegrandCache cache;
    compute_omega1_pairwise(hist3, three, &cache);
    REQUIRE(testutil::rel_frobenius_diff(compute_omega2(hist3, three, &cache), got3) < 1e-14);
}

TEST_CASE("magnus2 propagation", "[propagators]")
{
    std::mt19937_64 rng(50);
    const SystemSpec spec = build_rotor_system(RotorGeometry::two_rotor(10e-9), 2);
    const State psi0 = product_state(ground_product_factors(spec));
    FieldGrid f = random_field(rng, 2.9, 200, 0.05);

    // zero coupling: equals exact
    const SystemSpec off = scale_couplings(spec, 0.0);
    REQUIRE(1.0 - overlap(propagate_magnus2(off, f, psi0), propagate_exact(off, f, psi0)) < 1e-9);

    // weak-coupling comparison: magnus2 deficit does not exceed magnus1 deficit
    const State exact = propagate_exact(spec, f, psi0);
    const double d1 = 1.0 - overlap(propagate_magnus1(spec, f, psi0), exact);
    const double d2 = 1.0 - overlap(propagate_magnus2(spec, f, psi0), exact);
    REQUIRE(d2 <= d1);

    // norm preserved, and the generator stays anti-Hermitian
    const State m2 = propagate_magnus2(spec, f, psi0);
    REQUIRE(std::abs(m2.norm() - 1.0) < 1e-9);

    PropagationStats stats;
    propagate_magnus2(spec, f, psi0, &stats);
    REQUIRE(stats.full_expm_multiply_calls == 1);
}

TEST_CASE("coupling-strength scaling of the magnus1 error", "[propagators]")
{
    // || psi_m1 - psi_exact || should scale as lambda^2: the first neglected
    // term is quadratic in the perturbation.  The grid must be fine enough that
    // the within-step quadrature mismatch (linear in lambda) stays subdominant.
    std::mt19937_64 rng(51);
    const SystemSpec base = build_rotor_system(RotorGeometry::two_rotor(8e-9), 1);
    const State psi0 = product_state(ground_product_factors(base));
    FieldGrid f = random_field(rng, 2.0, 1600, 30.0 / 1600);

    std::vector<double> lambdas{1.0, 0.5, 0.25, 0.125};
    std::vector<double> errs;
    for (double lambda : lambdas) {
        const SystemSpec s = scale_couplings(base, lambda);
        errs.push_back((propagate_magnus1(s, f, psi0) - propagate_exact(s, f, psi0)).norm());
    }
    // least-squares slope of log(err) vs log(lambda)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < lambdas.size(); ++i) {
        const double x = std::log(lambdas[i]), y = std::log(errs[i]);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    const double n = static_cast<double>(lambdas.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    REQUIRE(slope > 1.7);
    REQUIRE(slope < 2.3);
}

TEST_CASE("zero-coupling collapse of all propagators", "[propagators]")
{
    std::mt19937_64 rng(52);
    const SystemSpec spec = scale_couplings(build_rotor_system(RotorGeometry::two_rotor(5e-9), 2), 0.0);
    const auto factors = ground_product_factors(spec);
    const State psi0 = product_state(factors);

    for (int trial = 0; trial < 3; ++trial) {
        FieldGrid f = random_field(rng, 2.9, 120, 0.05);
        const State exact = propagate_exact(spec, f, psi0);
        REQUIRE(overlap(propagate_zeroth(spec, f, factors), exact) >= 1.0 - 1e-9);
        REQUIRE(overlap(propagate_magnus1(spec, f, psi0), exact) >= 1.0 - 1e-9);
        REQUIRE(overlap(propagate_magnus2(spec, f, psi0), exact) >= 1.0 - 1e-9);
    }
}
