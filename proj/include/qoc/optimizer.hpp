#pragma once

#include "qoc/control_field.hpp"
#include "qoc/observables.hpp"
#include "qoc/propagators.hpp"
#include "qoc/system_model.hpp"
#include "qoc/types.hpp"

#include <cstdint>
#include <functional>
#include <future>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace qoc {

enum class PropagatorKind { exact, zeroth, magnus1, magnus2 };

inline const char* to_string(PropagatorKind k)
{
    switch (k) {
    case PropagatorKind::exact: return "exact";
    case PropagatorKind::zeroth: return "zeroth";
    case PropagatorKind::magnus1: return "magnus1";
    case PropagatorKind::magnus2: return "magnus2";
    }
    return "?";
}

inline PropagatorKind propagator_from_string(const std::string& s)
{
    if (s == "exact") return PropagatorKind::exact;
    if (s == "zeroth") return PropagatorKind::zeroth;
    if (s == "magnus1") return PropagatorKind::magnus1;
    if (s == "magnus2") return PropagatorKind::magnus2;
    throw ConfigError("unknown propagator '" + s + "'");
}

// Initial state carried in factored form; the full vector is assembled on demand.
struct InitialState {
    std::vector<State> factors;

    static InitialState ground(const SystemSpec& spec) { return {ground_product_factors(spec)}; }
    State full() const { return product_state(factors); }
};

inline State run_propagator(PropagatorKind kind, const SystemSpec& spec, const FieldGrid& f,
                            const InitialState& psi0, PropagationStats* stats = nullptr)
{
    switch (kind) {
    case PropagatorKind::exact: return propagate_exact(spec, f, psi0.full(), stats);
    case PropagatorKind::zeroth: return propagate_zeroth(spec, f, psi0.factors, stats);
    case PropagatorKind::magnus1: return propagate_magnus1(spec, f, psi0.full(), stats);
    case PropagatorKind::magnus2: return propagate_magnus2(spec, f, psi0.full(), stats);
    }
    throw ConfigError("unknown propagator kind");
}

struct OptimizerConfig {
    double j_thresh = 0.0;
    long max_iters = 1;
    double perturb_scale = 0.02;
    std::uint64_t seed = 0;
    PropagatorKind propagator = PropagatorKind::magnus1;
    long log_every = 100;
    int perturb_frequencies = 4;
    int batch_size = 1; // > 1 evaluates that many candidates per iteration (changes the trajectory)

    void validate() const
    {
        if (max_iters < 1) throw ConfigError("optimizer: max_iters must be >= 1");
        if (!(perturb_scale >= 0.0)) throw ConfigError("optimizer: perturb_scale must be >= 0");
        if (perturb_frequencies < 1) throw ConfigError("optimizer: perturb_frequencies must be >= 1");
        if (batch_size < 1) throw ConfigError("optimizer: batch_size must be >= 1");
        if (log_every < 1) throw ConfigError("optimizer: log_every must be >= 1");
    }
};

enum class Termination { threshold, iteration_cap };

struct OptimizationResult {
    FieldGrid best_field;
    double j_best = 0.0;
    std::vector<std::pair<long, double>> j_trace; // (iteration, J_best) at every improvement
    long accepted_count = 0;
    long iterations_run = 0;
    std::uint64_t seed = 0;
    Termination terminated_by = Termination::iteration_cap;
};

using ProgressFn = std::function<void(long iter, double j_best, long accepted)>;

// Stochastic hill climbing over the discretized field: evaluate the trial,
// then repeatedly add a random perturbation to the best field, accept on strict
// improvement, stop at the threshold or the iteration cap.  Deterministic for a
// given seed; one RNG stream owned by the loop.
inline OptimizationResult optimize(const SystemSpec& spec, const ObjectiveSpec& obj,
                                   const InitialState& psi0, const FieldGrid& trial,
                                   const OptimizerConfig& cfg, const ProgressFn& progress = {})
{
    cfg.validate();
    obj.validate();
    trial.validate();

    std::mt19937_64 rng(cfg.seed);

    auto evaluate = [&](const FieldGrid& f, long iter) -> double {
        try {
            return objective_value(obj, run_propagator(cfg.propagator, spec, f, psi0));
        } catch (const std::runtime_error& e) {
            throw NumericalError("iteration " + std::to_string(iter) + ": " + e.what());
        }
    };

    OptimizationResult res;
    res.seed = cfg.seed;
    res.best_field = trial;
    res.j_best = evaluate(trial, 0);
    res.j_trace.emplace_back(0, res.j_best);

    if (res.j_best >= cfg.j_thresh) {
        res.terminated_by = Termination::threshold;
        if (progress) progress(0, res.j_best, 0);
        return res;
    }

    for (long iter = 1; iter <= cfg.max_iters; ++iter) {
        res.iterations_run = iter;

        // draw all candidates first so the RNG stream depends only on the iteration count
        std::vector<FieldGrid> candidates;
        candidates.reserve(cfg.batch_size);
        for (int b = 0; b < cfg.batch_size; ++b)
            candidates.push_back(perturb(res.best_field, rng, cfg.perturb_scale, cfg.perturb_frequencies));

        double best_j = res.j_best;
        int best_idx = -1;
        if (cfg.batch_size == 1) {
            const double j = evaluate(candidates[0], iter);
            if (j > best_j) { best_j = j; best_idx = 0; }
        } else {
            std::vector<std::future<double>> futs;
            futs.reserve(candidates.size());
            for (const auto& cand : candidates)
                futs.push_back(std::async(std::launch::async,
                                          [&evaluate, &cand, iter] { return evaluate(cand, iter); }));
            for (size_t b = 0; b < futs.size(); ++b) {
                const double j = futs[b].get();
                if (j > best_j) { best_j = j; best_idx = static_cast<int>(b); }
            }
        }

        if (best_idx >= 0) { // strict improvement only; ties keep the incumbent
            res.best_field = std::move(candidates[best_idx]);
            res.j_best = best_j;
            ++res.accepted_count;
            res.j_trace.emplace_back(iter, res.j_best);
        }

        if (progress && (iter % cfg.log_every == 0 || iter == cfg.max_iters))
            progress(iter, res.j_best, res.accepted_count);

        if (res.j_best >= cfg.j_thresh) {
            res.terminated_by = Termination::threshold;
            return res;
        }
    }
    res.terminated_by = Termination::iteration_cap;
    return res;
}

} // namespace qoc
