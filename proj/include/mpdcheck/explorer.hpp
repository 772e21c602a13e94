#pragma once

#include <chrono>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mpdcheck/error.hpp"
#include "mpdcheck/properties.hpp"
#include "mpdcheck/schedule.hpp"
#include "mpdcheck/visited_set.hpp"

namespace mpdcheck {

/// What the explorer needs from a scenario.
template <typename M>
concept ExplorableModel = requires(const M& m, const typename M::State& s, const ScheduleStep& step,
                                   std::string& out) {
    { m.initial() } -> std::same_as<typename M::State>;
    { m.enabled_steps(s) } -> std::same_as<std::vector<ScheduleStep>>;
    { m.quiescent(s) } -> std::same_as<bool>;
    { m.apply(s, step) } -> std::same_as<typename M::State>;
    { m.apply_enabled(s, step) } -> std::same_as<typename M::State>;
    { m.encode(s, out) };
    { m.check_every(s) } -> std::same_as<std::optional<Failure>>;
    { m.check_quiescent(s) } -> std::same_as<std::optional<Failure>>;
    { m.dump(s) } -> std::same_as<std::string>;
};

enum class Outcome : std::uint8_t { Verified, Violation, ResourceLimit };

inline std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::Verified: return "VERIFIED";
        case Outcome::Violation: return "VIOLATION";
        case Outcome::ResourceLimit: return "RESOURCE_LIMIT";
    }
    return "?";
}

struct Limits {
    std::size_t max_depth = 10'000;
    std::size_t max_states = 50'000'000;
};

struct VerificationReport {
    std::uint64_t states_stored = 0;
    std::uint64_t states_matched = 0;
    std::uint64_t max_depth = 0;
    double elapsed_seconds = 0.0;
    Outcome outcome = Outcome::Verified;
    std::optional<Failure> failure;
    std::vector<ScheduleStep> trace;  // counterexample, only for Violation
};

namespace detail {

// Runs one step, turning a raised handler error into a Failure.
template <ExplorableModel M>
std::optional<Failure> try_apply(const M& model, const typename M::State& s, const ScheduleStep& step,
                                 typename M::State& out) {
    try {
        out = model.apply_enabled(s, step);
    } catch (const Error& e) {
        return Failure{PropertyKind::HandlerError, std::string(to_string(e.kind())) + ": " + e.what()};
    }
    return std::nullopt;
}

// Properties evaluated on entry to a state: every-state checks, plus the
// end-state checks when nothing but a timeout action can run.
template <ExplorableModel M>
std::optional<Failure> evaluate(const M& model, const typename M::State& s) {
    if (auto f = model.check_every(s)) return f;
    if (model.quiescent(s)) return model.check_quiescent(s);
    return std::nullopt;
}

}  // namespace detail

struct ExploreOptions {
    Limits limits;
};

/// Depth-first search over every interleaving with an exact visited set
/// keyed by the canonical state encoding. `on_quiescent` sees each distinct
/// quiescent state once.
template <ExplorableModel M>
VerificationReport explore(const M& model, const ExploreOptions& options = {},
                           const std::function<void(const typename M::State&)>& on_quiescent = {}) {
    using State = typename M::State;
    const auto started = std::chrono::steady_clock::now();
    VerificationReport report;

    struct Frame {
        State state;
        std::vector<ScheduleStep> steps;
        std::size_t next = 0;
    };

    VisitedSet visited;
    std::vector<Frame> stack;
    std::vector<ScheduleStep> path;

    auto finish = [&](Outcome outcome) {
        report.outcome = outcome;
        report.elapsed_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        return report;
    };

    // Returns false when the search must stop.
    auto enter = [&](State&& s) {
        if (auto f = detail::evaluate(model, s)) {
            report.failure = std::move(f);
            report.trace = path;
            return false;
        }
        if (on_quiescent && model.quiescent(s)) on_quiescent(s);
        auto steps = model.enabled_steps(s);
        stack.push_back(Frame{std::move(s), std::move(steps), 0});
        report.max_depth = std::max<std::uint64_t>(report.max_depth, path.size());
        return true;
    };

    State init = model.initial();
    std::string key;
    model.encode(init, key);
    visited.insert(key);
    report.states_stored = 1;
    if (!enter(std::move(init))) return finish(Outcome::Violation);

    while (!stack.empty()) {
        Frame& top = stack.back();
        if (top.next == top.steps.size()) {
            stack.pop_back();
            if (!path.empty()) path.pop_back();
            continue;
        }
        const ScheduleStep step = top.steps[top.next++];
        State succ;
        path.push_back(step);
        if (auto f = detail::try_apply(model, top.state, step, succ)) {
            report.failure = std::move(f);
            report.trace = path;
            return finish(Outcome::Violation);
        }
        key.clear();
        model.encode(succ, key);
        if (!visited.insert(key)) {
            ++report.states_matched;
            path.pop_back();
            continue;
        }
        ++report.states_stored;
        if (report.states_stored > options.limits.max_states || path.size() > options.limits.max_depth) {
            return finish(Outcome::ResourceLimit);
        }
        if (!enter(std::move(succ))) return finish(Outcome::Violation);
    }
    return finish(Outcome::Verified);
}

template <typename State>
struct SimulationResult {
    State final_state;
    std::vector<ScheduleStep> trace;
    std::optional<Failure> failure;
    bool depth_limited = false;
};

/// Seeded random walk: a uniformly chosen enabled step at every state until
/// nothing can run. Property failures end the walk and are reported.
template <ExplorableModel M>
SimulationResult<typename M::State> simulate(const M& model, std::uint64_t seed, std::size_t max_depth = 10'000) {
    using State = typename M::State;
    std::mt19937_64 rng(seed);
    SimulationResult<State> result{model.initial(), {}, std::nullopt, false};
    State& s = result.final_state;
    for (;;) {
        if (auto f = detail::evaluate(model, s)) {
            result.failure = std::move(f);
            return result;
        }
        const auto steps = model.enabled_steps(s);
        if (steps.empty()) return result;
        if (result.trace.size() >= max_depth) {
            result.depth_limited = true;
            return result;
        }
        std::uniform_int_distribution<std::size_t> pick(0, steps.size() - 1);
        const ScheduleStep step = steps[pick(rng)];
        result.trace.push_back(step);
        State next;
        if (auto f = detail::try_apply(model, s, step, next)) {
            result.failure = std::move(f);
            return result;
        }
        s = std::move(next);
    }
}

/// A replayed step was not enabled in the state it was replayed against.
struct ReplayMismatch : Error {
    ReplayMismatch(std::size_t index, const ScheduleStep& step)
        : Error(ErrorKind::Contract, "step " + std::to_string(index + 1) + " not enabled: " + to_string(step)),
          index(index) {}
    std::size_t index;
};

template <typename State>
struct ReplayResult {
    State final_state;
    std::optional<Failure> failure;
    std::size_t steps_applied = 0;
};

/// Folds apply over a recorded trace, evaluating properties exactly as the
/// explorer does. `on_step(before, step, after)` is called after each step.
template <ExplorableModel M>
ReplayResult<typename M::State> replay(
    const M& model, const std::vector<ScheduleStep>& trace,
    const std::function<void(const typename M::State&, const ScheduleStep&, const typename M::State&)>& on_step = {}) {
    using State = typename M::State;
    ReplayResult<State> result{model.initial(), std::nullopt, 0};
    if (auto f = detail::evaluate(model, result.final_state)) {
        result.failure = std::move(f);
        if (!trace.empty()) throw ReplayMismatch(0, trace.front());
        return result;
    }
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto steps = model.enabled_steps(result.final_state);
        if (std::find(steps.begin(), steps.end(), trace[i]) == steps.end()) throw ReplayMismatch(i, trace[i]);
        State next;
        auto f = detail::try_apply(model, result.final_state, trace[i], next);
        ++result.steps_applied;
        if (f) {
            result.failure = std::move(f);
            if (i + 1 != trace.size()) throw ReplayMismatch(i + 1, trace[i + 1]);
            return result;
        }
        if (on_step) on_step(result.final_state, trace[i], next);
        result.final_state = std::move(next);
        if (auto g = detail::evaluate(model, result.final_state)) {
            result.failure = std::move(g);
            if (i + 1 != trace.size()) throw ReplayMismatch(i + 1, trace[i + 1]);
            return result;
        }
    }
    return result;
}

}  // namespace mpdcheck
