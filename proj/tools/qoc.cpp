// Command-line front end: propagation, field optimization, overlap-vs-separation
// benchmarks, symmetry verification, and timing comparisons for dipole-dipole
// coupled planar rotors.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure,
// 4 symmetry assertion failure.

#include "qoc/io.hpp"
#include "qoc/optimizer.hpp"
#include "qoc/run_config.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace qoc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitAssertion = 4;

struct SymmetryViolation {
    std::string relation;
    double time_si = 0.0;
    double residual = 0.0;
};

int thread_budget()
{
    if (const char* env = std::getenv("QOC_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

fs::path prepare_output_dir(const RunConfig& cfg, const std::string& override_dir)
{
    fs::path dir = override_dir.empty() ? cfg.output_dir : fs::path(override_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

Json field_to_json(const FieldGrid& f, const PhysicalConstants& consts)
{
    Json j;
    j["n"] = f.n;
    j["dt_s"] = f.dt / consts.time_si_to_internal();
    Json t = Json::array(), eps = Json::array();
    const double t_scale = 1.0 / consts.time_si_to_internal();
    const double e_scale = 1.0 / consts.field_si_to_internal();
    for (int k = 1; k <= f.n; ++k) {
        t.push_back(f.time_at(k) * t_scale);
        eps.push_back(f.values(k - 1) * e_scale);
    }
    j["t_s"] = std::move(t);
    j["epsilon_v_per_m"] = std::move(eps);
    return j;
}

Json state_expectations(const RunConfig& cfg, const State& psi)
{
    Json out = Json::array();
    const Operator c = cos_matrix(cfg.truncation);
    const Operator s = sin_matrix(cfg.truncation);
    for (int i = 0; i < cfg.spec.num_dofs; ++i) {
        Json row;
        row["dof"] = i;
        row["cos"] = expectation_local(psi, c, i, cfg.spec.dims);
        row["sin"] = expectation_local(psi, s, i, cfg.spec.dims);
        out.push_back(std::move(row));
    }
    return out;
}

void write_json(const fs::path& path, const Json& j)
{
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
}

double benchmark_field_amplitude(const RunConfig& cfg)
{
    if (cfg.trial) return cfg.trial->a0;
    return 5e6 * cfg.consts.field_si_to_internal(); // 5e6 N/C default
}

// ---------------------------------------------------------------------------
// propagate
// ---------------------------------------------------------------------------

int cmd_propagate(const RunConfig& cfg, const std::string& method, bool trajectory,
                  const std::string& out_override)
{
    const PropagatorKind kind = propagator_from_string(method);
    if (trajectory && (kind == PropagatorKind::magnus1 || kind == PropagatorKind::magnus2))
        throw ConfigError("--trajectory is unavailable for " + method
                          + ": the Magnus paths compute no intermediate states");

    const fs::path dir = prepare_output_dir(cfg, out_override);
    const FieldGrid field = cfg.initial_field();
    const InitialState psi0 = InitialState::ground(cfg.spec);

    std::ofstream traj;
    if (trajectory) {
        traj.open(dir / "trajectory.csv");
        if (!traj) throw ConfigError("cannot open trajectory.csv for writing");
        traj << "k,t";
        for (int i = 0; i < cfg.spec.num_dofs; ++i) traj << ",cos_" << i << ",sin_" << i;
        traj << '\n';
    }
    const Operator c = cos_matrix(cfg.truncation);
    const Operator s = sin_matrix(cfg.truncation);
    const double t_scale = 1.0 / cfg.consts.time_si_to_internal();
    StepCallback on_step;
    if (trajectory)
        on_step = [&](int k, const State& psi) {
            traj << k << ',' << fmt17(field.time_at(k) * t_scale);
            for (int i = 0; i < cfg.spec.num_dofs; ++i)
                traj << ',' << fmt17(expectation_local(psi, c, i, cfg.spec.dims)) << ','
                     << fmt17(expectation_local(psi, s, i, cfg.spec.dims));
            traj << '\n';
        };

    PropagationStats stats;
    State psi;
    switch (kind) {
    case PropagatorKind::exact: psi = propagate_exact(cfg.spec, field, psi0.full(), &stats, on_step); break;
    case PropagatorKind::zeroth: psi = propagate_zeroth(cfg.spec, field, psi0.factors, &stats, on_step); break;
    case PropagatorKind::magnus1: psi = propagate_magnus1(cfg.spec, field, psi0.full(), &stats); break;
    case PropagatorKind::magnus2: psi = propagate_magnus2(cfg.spec, field, psi0.full(), &stats); break;
    }

    Json result;
    result["method"] = method;
    result["system"] = {{"rotors", cfg.spec.num_dofs}, {"M", cfg.truncation}, {"dim", cfg.spec.full_dim()}};
    result["grid"] = {{"n", cfg.steps}, {"T_s", cfg.total_time_si}};
    result["norm"] = psi.norm();
    result["expectations"] = state_expectations(cfg, psi);
    result["objective"] = objective_value(cfg.objective, psi);
    if (cfg.objective.kind == ObjectiveKind::projection_onto_target)
        result["entropy_vn"] = von_neumann_entropy(psi, {0}, cfg.spec.dims);
    result["full_expm_multiply_calls"] = stats.full_expm_multiply_calls;
    Json re = Json::array(), im = Json::array();
    for (Eigen::Index a = 0; a < psi.size(); ++a) {
        re.push_back(psi(a).real());
        im.push_back(psi(a).imag());
    }
    result["amplitudes"] = {{"re", std::move(re)}, {"im", std::move(im)}};
    result["field"] = field_to_json(field, cfg.consts);

    write_json(dir / "final_state.json", result);
    write_field_csv(dir / "field.csv", field, cfg.consts);
    std::cout << "propagate: method=" << method << " objective=" << fmt17(result["objective"].get<double>())
              << " norm=" << fmt17(psi.norm()) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

int cmd_optimize(const RunConfig& cfg, const std::string& out_override)
{
    const fs::path dir = prepare_output_dir(cfg, out_override);
    const FieldGrid trial = cfg.initial_field();
    const InitialState psi0 = InitialState::ground(cfg.spec);

    const auto progress = [](long iter, double j_best, long accepted) {
        std::cout << "iter=" << iter << " J_best=" << fmt17(j_best) << " accepted=" << accepted << '\n';
    };
    const OptimizationResult res = optimize(cfg.spec, cfg.objective, psi0, trial, cfg.optimizer, progress);

    // drop-off check: re-evaluate the optimal field under the exact dynamics
    const State psi_approx = run_propagator(cfg.optimizer.propagator, cfg.spec, res.best_field, psi0);
    const State psi_exact = run_propagator(PropagatorKind::exact, cfg.spec, res.best_field, psi0);
    const double j_approx = objective_value(cfg.objective, psi_approx);
    const double j_exact = objective_value(cfg.objective, psi_exact);

    Json result;
    result["propagator"] = to_string(cfg.optimizer.propagator);
    result["seed"] = res.seed;
    result["j_thresh"] = cfg.optimizer.j_thresh;
    result["max_iters"] = cfg.optimizer.max_iters;
    result["iterations_run"] = res.iterations_run;
    result["terminated_by"] = res.terminated_by == Termination::threshold ? "threshold" : "iteration-cap";
    result["accepted_count"] = res.accepted_count;
    result["j_best"] = res.j_best;
    result["j_approx"] = j_approx;
    result["j_exact"] = j_exact;
    result["dropoff"] = j_approx - j_exact;
    if (cfg.objective.kind == ObjectiveKind::projection_onto_target) {
        result["entropy_vn_approx"] = von_neumann_entropy(psi_approx, {0}, cfg.spec.dims);
        result["entropy_vn_exact"] = von_neumann_entropy(psi_exact, {0}, cfg.spec.dims);
    }
    result["expectations_exact"] = state_expectations(cfg, psi_exact);
    Json trace = Json::array();
    for (const auto& [iter, j] : res.j_trace) trace.push_back({{"iter", iter}, {"j", j}});
    result["j_trace"] = std::move(trace);
    result["best_field"] = field_to_json(res.best_field, cfg.consts);

    write_json(dir / "result.json", result);
    write_field_csv(dir / "best_field.csv", res.best_field, cfg.consts);
    std::cout << "optimize: J_" << to_string(cfg.optimizer.propagator) << "=" << fmt17(j_approx)
              << " J_exact=" << fmt17(j_exact) << " dropoff=" << fmt17(j_approx - j_exact) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// overlap-benchmark
// ---------------------------------------------------------------------------

struct OverlapCell {
    double separation_m = 0.0;
    int field_index = 0;
    std::string method;
    double overlap = 0.0;
};

int cmd_overlap_benchmark(const RunConfig& cfg, const std::string& separations_arg, int num_fields,
                          std::uint64_t seed, bool with_magnus2, const std::string& out_override)
{
    if (num_fields < 1) throw ConfigError("overlap-benchmark: need at least one field");
    const fs::path dir = prepare_output_dir(cfg, out_override);

    std::vector<double> separations;
    {
        std::stringstream ss(separations_arg);
        std::string tok;
        while (std::getline(ss, tok, ','))
            separations.push_back(detail::parse_length_m(Json(tok), "--separations"));
        if (separations.empty()) throw ConfigError("overlap-benchmark: empty separation ladder");
    }

    // identical fields across the whole ladder
    std::mt19937_64 rng(seed);
    const double a0 = benchmark_field_amplitude(cfg);
    std::vector<FieldGrid> fields;
    for (int j = 0; j < num_fields; ++j)
        fields.push_back(random_benchmark_field(a0, cfg.steps, cfg.dt(), rng));

    std::vector<std::string> methods{"zeroth", "magnus1"};
    if (with_magnus2) methods.push_back("magnus2");

    struct CellResult {
        std::vector<double> overlaps; // per method
    };
    const size_t n_cells = separations.size() * fields.size();
    std::vector<CellResult> cells(n_cells);

    auto run_cell = [&](size_t cell) {
        const double r = separations[cell / fields.size()];
        const FieldGrid& field = fields[cell % fields.size()];
        RotorGeometry geom = cfg.geometry;
        for (auto& p : geom.pairs) p.separation = r;
        const SystemSpec spec = build_rotor_system(geom, cfg.truncation, cfg.consts);
        const InitialState psi0 = InitialState::ground(spec);
        const State exact = propagate_exact(spec, field, psi0.full());
        CellResult res;
        for (const auto& m : methods) {
            const State approx = run_propagator(propagator_from_string(m), spec, field, psi0);
            res.overlaps.push_back(std::abs(approx.dot(exact)));
        }
        cells[cell] = std::move(res);
    };

    const int budget = thread_budget();
    for (size_t start = 0; start < n_cells; start += budget) {
        std::vector<std::future<void>> wave;
        for (size_t c = start; c < std::min(n_cells, start + budget); ++c)
            wave.push_back(std::async(std::launch::async, run_cell, c));
        for (auto& f : wave) f.get();
    }

    std::ofstream rows(dir / "overlap.csv");
    rows << "R_m,field_index,method,overlap\n";
    std::ofstream summary(dir / "overlap_summary.csv");
    summary << "R_m,method,mean_overlap,std_overlap\n";
    for (size_t si = 0; si < separations.size(); ++si) {
        for (size_t mi = 0; mi < methods.size(); ++mi) {
            double mean = 0.0;
            for (size_t fi = 0; fi < fields.size(); ++fi) {
                const double ov = cells[si * fields.size() + fi].overlaps[mi];
                rows << fmt17(separations[si]) << ',' << fi << ',' << methods[mi] << ',' << fmt17(ov)
                     << '\n';
                mean += ov;
            }
            mean /= static_cast<double>(fields.size());
            double var = 0.0;
            for (size_t fi = 0; fi < fields.size(); ++fi) {
                const double d = cells[si * fields.size() + fi].overlaps[mi] - mean;
                var += d * d;
            }
            const double std_dev =
                fields.size() > 1 ? std::sqrt(var / static_cast<double>(fields.size() - 1)) : 0.0;
            summary << fmt17(separations[si]) << ',' << methods[mi] << ',' << fmt17(mean) << ','
                    << fmt17(std_dev) << '\n';
            std::cout << "R=" << fmt17(separations[si]) << " m method=" << methods[mi]
                      << " mean_overlap=" << fmt17(mean) << " std=" << fmt17(std_dev) << '\n';
        }
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// symmetry-check
// ---------------------------------------------------------------------------

int cmd_symmetry_check(const RunConfig& cfg, int num_fields, std::uint64_t seed, double tolerance,
                       const std::string& out_override)
{
    const fs::path dir = prepare_output_dir(cfg, out_override);

    // The relations are the assertion: on the equilateral three-rotor geometry
    // (or the theta = pi/2 two-rotor one) they hold for any field; a perturbed
    // geometry run serves as a negative control and exits with code 4.
    enum class Mode { three_rotor, two_rotor } mode;
    if (cfg.spec.num_dofs == 3) {
        mode = Mode::three_rotor;
    } else if (cfg.spec.num_dofs == 2) {
        mode = Mode::two_rotor;
    } else {
        throw ConfigError("symmetry-check: defined for the two- and three-rotor systems");
    }

    std::mt19937_64 rng(seed);
    const double a0 = benchmark_field_amplitude(cfg);
    const Operator c = cos_matrix(cfg.truncation);
    const Operator s = sin_matrix(cfg.truncation);
    const InitialState psi0 = InitialState::ground(cfg.spec);
    const double t_scale = 1.0 / cfg.consts.time_si_to_internal();

    const std::vector<std::string> relations =
        mode == Mode::three_rotor
            ? std::vector<std::string>{"cos1-cos3", "sin1+sin3", "sin2"}
            : std::vector<std::string>{"cos1-cos2", "sin1-sin2"};

    std::ofstream report(dir / "symmetry.csv");
    report << "field_index,relation,max_residual,t_at_max\n";

    SymmetryViolation worst;
    for (int fi = 0; fi < num_fields; ++fi) {
        const FieldGrid field = random_benchmark_field(a0, cfg.steps, cfg.dt(), rng);
        std::vector<double> max_res(relations.size(), 0.0);
        std::vector<double> t_at(relations.size(), 0.0);

        propagate_exact(cfg.spec, field, psi0.full(), nullptr, [&](int k, const State& psi) {
            std::vector<double> res;
            if (mode == Mode::three_rotor) {
                const double cos1 = expectation_local(psi, c, 0, cfg.spec.dims);
                const double cos3 = expectation_local(psi, c, 2, cfg.spec.dims);
                const double sin1 = expectation_local(psi, s, 0, cfg.spec.dims);
                const double sin2 = expectation_local(psi, s, 1, cfg.spec.dims);
                const double sin3 = expectation_local(psi, s, 2, cfg.spec.dims);
                res = {std::abs(cos1 - cos3), std::abs(sin1 + sin3), std::abs(sin2)};
            } else {
                const double cos1 = expectation_local(psi, c, 0, cfg.spec.dims);
                const double cos2 = expectation_local(psi, c, 1, cfg.spec.dims);
                const double sin1 = expectation_local(psi, s, 0, cfg.spec.dims);
                const double sin2 = expectation_local(psi, s, 1, cfg.spec.dims);
                res = {std::abs(cos1 - cos2), std::abs(sin1 - sin2)};
            }
            for (size_t r = 0; r < res.size(); ++r)
                if (res[r] > max_res[r]) {
                    max_res[r] = res[r];
                    t_at[r] = field.time_at(k) * t_scale;
                }
        });

        for (size_t r = 0; r < relations.size(); ++r) {
            report << fi << ',' << relations[r] << ',' << fmt17(max_res[r]) << ',' << fmt17(t_at[r])
                   << '\n';
            std::cout << "field=" << fi << " relation=" << relations[r]
                      << " max_residual=" << fmt17(max_res[r]) << '\n';
            if (max_res[r] > worst.residual) worst = {relations[r], t_at[r], max_res[r]};
        }
    }

    if (worst.residual > tolerance) {
        std::cerr << "symmetry violated: relation=" << worst.relation << " t=" << fmt17(worst.time_si)
                  << " s residual=" << fmt17(worst.residual) << " tolerance=" << fmt17(tolerance)
                  << '\n';
        return kExitAssertion;
    }
    std::cout << "symmetry-check: all relations hold within " << fmt17(tolerance) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// timing
// ---------------------------------------------------------------------------

int cmd_timing(const RunConfig& cfg, const std::string& methods_arg, int repeat,
               const std::string& out_override)
{
    if (repeat < 1) throw ConfigError("timing: --repeat must be >= 1");
    const fs::path dir = prepare_output_dir(cfg, out_override);
    const FieldGrid field = cfg.initial_field();
    const InitialState psi0 = InitialState::ground(cfg.spec);

    std::vector<std::string> methods;
    {
        std::stringstream ss(methods_arg);
        std::string tok;
        while (std::getline(ss, tok, ',')) methods.push_back(tok);
        if (methods.empty()) throw ConfigError("timing: empty method list");
    }

    struct Row {
        std::string method;
        double median_ms = 0.0;
        PropagationStats stats;
    };
    std::vector<Row> table;
    for (const auto& m : methods) {
        const PropagatorKind kind = propagator_from_string(m);
        std::vector<double> wall;
        PropagationStats stats;
        for (int r = 0; r < repeat; ++r) {
            stats = {};
            const auto begin = std::chrono::steady_clock::now();
            run_propagator(kind, cfg.spec, field, psi0, &stats);
            const auto end = std::chrono::steady_clock::now();
            wall.push_back(std::chrono::duration<double, std::milli>(end - begin).count());
        }
        std::sort(wall.begin(), wall.end());
        table.push_back({m, wall[wall.size() / 2], stats});
    }

    const auto exact_row = std::find_if(table.begin(), table.end(),
                                        [](const Row& r) { return r.method == "exact"; });
    std::ofstream out(dir / "timing.csv");
    out << "method,repeats,median_wall_ms,full_expm_multiply_calls,local_expm_calls,"
           "wall_ratio_exact_over_method,calls_ratio_exact_over_method\n";
    for (const auto& row : table) {
        out << row.method << ',' << repeat << ',' << fmt17(row.median_ms) << ','
            << row.stats.full_expm_multiply_calls << ',' << row.stats.local_expm_calls << ',';
        if (exact_row != table.end() && row.median_ms > 0.0) {
            out << fmt17(exact_row->median_ms / row.median_ms) << ',';
            out << (row.stats.full_expm_multiply_calls > 0
                        ? fmt17(static_cast<double>(exact_row->stats.full_expm_multiply_calls)
                                / static_cast<double>(row.stats.full_expm_multiply_calls))
                        : "");
        } else {
            out << ',';
        }
        out << '\n';
        std::cout << "timing: method=" << row.method << " median_ms=" << fmt17(row.median_ms)
                  << " full_expm_multiply_calls=" << row.stats.full_expm_multiply_calls << '\n';
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Quantum optimal control of dipole-dipole coupled planar rotors\n"
                 "(exact, separable, and interaction-picture Magnus propagators)"};
    app.require_subcommand(1);

    std::string config_path, out_override;

    auto* prop = app.add_subcommand("propagate", "Propagate the initial state and report observables");
    std::string method = "exact";
    bool trajectory = false;
    prop->add_option("-c,--config", config_path, "Run configuration (JSON)")->required();
    prop->add_option("--method", method, "exact | zeroth | magnus1 | magnus2")
        ->check(CLI::IsMember({"exact", "zeroth", "magnus1", "magnus2"}));
    prop->add_flag("--trajectory", trajectory, "Per-step <cos>/<sin> series (exact and zeroth only)");
    prop->add_option("-o,--output", out_override, "Override the configured output directory");

    auto* opt = app.add_subcommand("optimize", "Stochastic hill climbing on the control field");
    opt->add_option("-c,--config", config_path, "Run configuration (JSON)")->required();
    opt->add_option("-o,--output", out_override, "Override the configured output directory");

    auto* bench = app.add_subcommand("overlap-benchmark",
                                     "Overlap of the approximate propagators with the exact one "
                                     "across a separation ladder");
    std::string separations;
    int num_fields = 5;
    std::uint64_t seed = 1;
    bool with_magnus2 = false;
    bench->add_option("-c,--config", config_path, "Run configuration (JSON)")->required();
    bench->add_option("--separations", separations, "Comma list with units, e.g. '4nm,5nm,8nm'")
        ->required();
    bench->add_option("--fields", num_fields, "Number of random test fields");
    bench->add_option("--seed", seed, "Random field seed");
    bench->add_flag("--with-magnus2", with_magnus2, "Also benchmark the second-order path");
    bench->add_option("-o,--output", out_override, "Override the configured output directory");

    auto* sym = app.add_subcommand("symmetry-check",
                                   "Verify the geometric expectation-value relations under exact "
                                   "dynamics for random fields");
    double tolerance = 1e-8;
    sym->add_option("-c,--config", config_path, "Run configuration (JSON)")->required();
    sym->add_option("--fields", num_fields, "Number of random test fields");
    sym->add_option("--seed", seed, "Random field seed");
    sym->add_option("--tolerance", tolerance, "Per-step residual tolerance");
    sym->add_option("-o,--output", out_override, "Override the configured output directory");

    auto* timing = app.add_subcommand("timing", "Wall-clock and operation-count comparison");
    std::string methods = "exact,zeroth,magnus1,magnus2";
    int repeat = 3;
    timing->add_option("-c,--config", config_path, "Run configuration (JSON)")->required();
    timing->add_option("--methods", methods, "Comma list of methods to time");
    timing->add_option("--repeat", repeat, "Repetitions per method (median reported)");
    timing->add_option("-o,--output", out_override, "Override the configured output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        const RunConfig cfg = load_run_config(config_path);
        if (prop->parsed()) return cmd_propagate(cfg, method, trajectory, out_override);
        if (opt->parsed()) return cmd_optimize(cfg, out_override);
        if (bench->parsed())
            return cmd_overlap_benchmark(cfg, separations, num_fields, seed, with_magnus2, out_override);
        if (sym->parsed()) return cmd_symmetry_check(cfg, num_fields, seed, tolerance, out_override);
        if (timing->parsed()) return cmd_timing(cfg, methods, repeat, out_override);
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    }
}
