#pragma once

// Command-line front end: scenario configuration, report rendering, trace
// files, and the verify / simulate / replay subcommands.

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mpdcheck/explorer.hpp"
#include "mpdcheck/models.hpp"

namespace mpdcheck::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitViolation = 1;
inline constexpr int kExitResourceLimit = 2;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitMismatch = 65;

inline constexpr const char* kReportSchema = "mpdcheck-report/1";
inline constexpr const char* kSimulationSchema = "mpdcheck-simulation/1";
inline constexpr const char* kTraceMagic = "# mpdcheck trace v1";

enum class Algorithm : std::uint8_t { RingSeq, RingPar, Recovery, Trace, Barrier };

inline const std::map<std::string, Algorithm>& algorithm_names() {
    static const std::map<std::string, Algorithm> names{{"ring-seq", Algorithm::RingSeq},
                                                        {"ring-par", Algorithm::RingPar},
                                                        {"recovery", Algorithm::Recovery},
                                                        {"trace", Algorithm::Trace},
                                                        {"barrier", Algorithm::Barrier}};
    return names;
}

inline std::string to_string(Algorithm a) {
    for (const auto& [name, value] : algorithm_names()) {
        if (value == a) return name;
    }
    return "?";
}

enum class Output : std::uint8_t { Table, Json };

struct ScenarioConfig {
    Algorithm algorithm = Algorithm::RingPar;
    int size = 1;
    int inserters = 1;              // establishment scenarios only
    std::optional<Pid> failure;     // recovery only; nullopt = any daemon
    bool blocking_reads = false;    // ring-seq only
    std::uint64_t seed = 0;
    Limits limits;
    Output output = Output::Table;
    bool no_time = false;

    bool establishment() const {
        return algorithm == Algorithm::RingSeq || algorithm == Algorithm::RingPar || algorithm == Algorithm::Trace;
    }

    /// Processes in the model: the "Model Size" column.
    int model_size() const { return establishment() ? size + inserters : size; }
};

inline void validate(const ScenarioConfig& c) {
    if (c.size < 1) throw ConfigurationError("--size must be at least 1");
    if (c.inserters < 0) throw ConfigurationError("--inserters must not be negative");
    if (c.algorithm == Algorithm::RingSeq && c.inserters < 1) {
        throw ConfigurationError("ring-seq needs at least one inserter");
    }
    if (c.algorithm == Algorithm::Recovery && c.size < 2) throw ConfigurationError("recovery needs --size >= 2");
    if (c.failure && c.algorithm != Algorithm::Recovery) {
        throw ConfigurationError("--failure applies to recovery only");
    }
    if (c.failure && (*c.failure < 0 || *c.failure >= c.size)) {
        throw ConfigurationError("--failure must name a daemon in 0.." + std::to_string(c.size - 1));
    }
    if (c.model_size() > 60) throw ConfigurationError("model too large");
}

using AnyModel = std::variant<DaemonModel, BarrierModel>;

inline RingScenario ring_scenario(const ScenarioConfig& c) {
    RingScenario sc;
    switch (c.algorithm) {
        case Algorithm::RingSeq:
            sc.variant = Variant::Sequential;
            sc.blocking_reads = c.blocking_reads;
            sc.initial_size = c.size;
            sc.inserters = c.inserters;
            // The sequential variant never maintains rhs2.
            sc.check_neighbor_state = false;
            break;
        case Algorithm::RingPar:
        case Algorithm::Trace:
            sc.initial_size = c.size;
            sc.inserters = c.inserters;
            sc.run_trace = c.algorithm == Algorithm::Trace;
            break;
        case Algorithm::Recovery:
            sc.initial_size = c.size;
            sc.inserters = 0;
            sc.inject_failure = true;
            sc.failure_target = c.failure;
            sc.run_trace = true;
            break;
        case Algorithm::Barrier:
            throw ConfigurationError("barrier is not a ring scenario");
    }
    return sc;
}

inline AnyModel make_model(const ScenarioConfig& c) {
    validate(c);
    if (c.algorithm == Algorithm::Barrier) return BarrierModel(BarrierScenario{c.size});
    return DaemonModel(ring_scenario(c));
}

inline std::vector<PropertyKind> checked_properties(Algorithm a) {
    switch (a) {
        case Algorithm::RingSeq: return {PropertyKind::RingTopology};
        case Algorithm::RingPar: return {PropertyKind::RingTopology, PropertyKind::NeighborState};
        case Algorithm::Trace:
        case Algorithm::Recovery:
            return {PropertyKind::RingTopology, PropertyKind::NeighborState, PropertyKind::TraceDone};
        case Algorithm::Barrier: return {PropertyKind::BarrierEnd, PropertyKind::BarrierInvariant};
    }
    return {};
}

inline std::optional<PropertyKind> parse_property(std::string_view name) {
    for (auto k : {PropertyKind::RingTopology, PropertyKind::NeighborState, PropertyKind::TraceDone,
                   PropertyKind::BarrierEnd, PropertyKind::BarrierInvariant, PropertyKind::SocketInvariants,
                   PropertyKind::Deadlock, PropertyKind::HandlerError}) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Trace files

struct TraceFile {
    ScenarioConfig scenario;
    std::string outcome;  // VIOLATION, CLEAN, ...
    std::optional<Failure> failure;
    std::vector<ScheduleStep> steps;
};

inline std::string failure_policy(const ScenarioConfig& c) {
    return c.failure ? std::to_string(*c.failure) : "any";
}

inline void write_trace(std::ostream& os, const TraceFile& t) {
    const auto& c = t.scenario;
    os << kTraceMagic << "\n"
       << "# algorithm=" << to_string(c.algorithm) << "\n"
       << "# size=" << c.size << "\n"
       << "# inserters=" << c.inserters << "\n"
       << "# failure=" << failure_policy(c) << "\n"
       << "# reads=" << (c.blocking_reads ? "blocking" : "select") << "\n"
       << "# outcome=" << t.outcome << "\n";
    if (t.failure) {
        os << "# property=" << to_string(t.failure->property) << "\n"
           << "# detail=" << t.failure->detail << "\n";
    }
    for (const auto& s : t.steps) os << to_string(s) << "\n";
}

inline int parse_int(const std::string& v, const std::string& what) {
    int out = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end) throw ConfigurationError("bad " + what + ": '" + v + "'");
    return out;
}

/// Parses a trace file; malformed input raises ConfigurationError.
inline TraceFile read_trace(std::istream& is) {
    TraceFile t;
    std::string line;
    if (!std::getline(is, line) || line != kTraceMagic) throw ConfigurationError("not an mpdcheck trace file");
    bool have_algorithm = false;
    bool have_size = false;
    std::optional<PropertyKind> property;
    std::string detail;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line.rfind("# ", 0) == 0) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;  // plain comment
            const std::string key = line.substr(2, eq - 2);
            const std::string val = line.substr(eq + 1);
            auto& c = t.scenario;
            if (key == "algorithm") {
                const auto it = algorithm_names().find(val);
                if (it == algorithm_names().end()) throw ConfigurationError("unknown algorithm '" + val + "'");
                c.algorithm = it->second;
                have_algorithm = true;
            } else if (key == "size") {
                c.size = parse_int(val, "size");
                have_size = true;
            } else if (key == "inserters") {
                c.inserters = parse_int(val, "inserters");
            } else if (key == "failure") {
                c.failure = val == "any" ? std::nullopt : std::optional<Pid>(parse_int(val, "failure"));
            } else if (key == "reads") {
                if (val != "select" && val != "blocking") throw ConfigurationError("bad reads '" + val + "'");
                c.blocking_reads = val == "blocking";
            } else if (key == "outcome") {
                t.outcome = val;
            } else if (key == "property") {
                property = parse_property(val);
                if (!property) throw ConfigurationError("unknown property '" + val + "'");
            } else if (key == "detail") {
                detail = val;
            }
            continue;
        }
        auto step = parse_step(line);
        if (!step) throw ConfigurationError("trace line " + std::to_string(lineno) + " is not a step");
        t.steps.push_back(*step);
    }
    if (!have_algorithm || !have_size) throw ConfigurationError("trace header lacks algorithm or size");
    if (property) t.failure = Failure{*property, detail};
    return t;
}

// ---------------------------------------------------------------------------
// Reports

// Shortest round-trip decimal form, so the printed value is the field itself.
inline std::string format_seconds(double s) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, s);
    return ec == std::errc{} ? std::string(buf, ptr) : "?";
}

inline std::string property_list(Algorithm a) {
    std::string out;
    for (auto k : checked_properties(a)) {
        if (!out.empty()) out += "+";
        out += to_string(k);
    }
    return out;
}

inline std::string scenario_line(const ScenarioConfig& c) {
    std::string s = "algorithm=" + to_string(c.algorithm) + " size=" + std::to_string(c.size);
    if (c.establishment()) s += " inserters=" + std::to_string(c.inserters);
    if (c.algorithm == Algorithm::Recovery) s += " failure=" + failure_policy(c);
    if (c.algorithm == Algorithm::RingSeq) s += std::string(" reads=") + (c.blocking_reads ? "blocking" : "select");
    return s;
}

inline void print_table(std::ostream& os, const ScenarioConfig& c, const VerificationReport& r) {
    os << "verify " << scenario_line(c) << "\n"
       << "| Correctness Property | Model Size | Time (s) | States Stored/Matched | Search Depth |\n"
       << "|---|---|---|---|---|\n"
       << "| " << property_list(c.algorithm) << " | " << c.model_size() << " | "
       << (c.no_time ? std::string("-") : format_seconds(r.elapsed_seconds)) << " | " << r.states_stored << "/"
       << r.states_matched << " | " << r.max_depth << " |\n"
       << "outcome: " << to_string(r.outcome) << "\n";
    if (r.failure) {
        os << "violated: " << to_string(r.failure->property) << ": " << r.failure->detail << "\n"
           << "trace: " << r.trace.size() << " steps\n";
    }
}

inline nlohmann::ordered_json step_json(const ScheduleStep& s) {
    nlohmann::ordered_json j;
    j["pid"] = s.pid;
    j["kind"] = std::string(to_string(s.kind));
    j["fd"] = s.fd.valid() ? nlohmann::ordered_json(s.fd.index) : nlohmann::ordered_json(nullptr);
    if (s.kind == StepKind::Message) {
        j["cmd"] = std::string(to_string(s.command));
    } else if (s.kind == StepKind::Action) {
        j["cmd"] = std::string(to_string(s.action));
    } else {
        j["cmd"] = nullptr;
    }
    return j;
}

inline nlohmann::ordered_json scenario_json(const ScenarioConfig& c) {
    nlohmann::ordered_json j;
    j["algorithm"] = to_string(c.algorithm);
    j["size"] = c.size;
    j["inserters"] = c.inserters;
    j["failure"] = failure_policy(c);
    j["reads"] = c.blocking_reads ? "blocking" : "select";
    j["model_size"] = c.model_size();
    j["max_depth"] = c.limits.max_depth;
    j["max_states"] = c.limits.max_states;
    return j;
}

inline nlohmann::ordered_json failure_json(const std::optional<Failure>& f) {
    if (!f) return nullptr;
    return {{"property", std::string(to_string(f->property))}, {"detail", f->detail}};
}

inline nlohmann::ordered_json report_json(const ScenarioConfig& c, const VerificationReport& r) {
    nlohmann::ordered_json j;
    j["schema"] = kReportSchema;
    j["scenario"] = scenario_json(c);
    nlohmann::ordered_json props = nlohmann::ordered_json::array();
    for (auto k : checked_properties(c.algorithm)) props.push_back(std::string(to_string(k)));
    j["properties"] = props;
    j["states_stored"] = r.states_stored;
    j["states_matched"] = r.states_matched;
    j["max_depth"] = r.max_depth;
    j["elapsed_seconds"] = c.no_time ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.elapsed_seconds);
    j["outcome"] = std::string(to_string(r.outcome));
    j["failure"] = failure_json(r.failure);
    nlohmann::ordered_json steps = nlohmann::ordered_json::array();
    for (const auto& s : r.trace) steps.push_back(step_json(s));
    j["trace"] = steps;
    return j;
}

// ---------------------------------------------------------------------------
// Subcommands

namespace detail {

inline bool save_trace(const std::string& path, const TraceFile& t, std::ostream& err) {
    std::ofstream f(path);
    if (!f) {
        err << "mpdcheck: cannot write trace to " << path << "\n";
        return false;
    }
    write_trace(f, t);
    err << "trace written to " << path << "\n";
    return true;
}

inline int run_verify(const ScenarioConfig& c, const std::string& trace_out, std::ostream& out,
                      std::ostream& err) {
    const AnyModel model = make_model(c);
    const VerificationReport r =
        std::visit([&](const auto& m) { return explore(m, ExploreOptions{c.limits}); }, model);
    if (c.output == Output::Json) {
        out << report_json(c, r).dump(2) << "\n";
    } else {
        print_table(out, c, r);
    }
    switch (r.outcome) {
        case Outcome::Verified: return kExitOk;
        case Outcome::ResourceLimit: return kExitResourceLimit;
        case Outcome::Violation:
            save_trace(trace_out, TraceFile{c, "VIOLATION", r.failure, r.trace}, err);
            return kExitViolation;
    }
    return kExitOk;
}

inline int run_simulate(const ScenarioConfig& c, const std::optional<std::string>& trace_out, std::ostream& out,
                        std::ostream& err) {
    const AnyModel model = make_model(c);
    struct Summary {
        std::vector<ScheduleStep> trace;
        std::optional<Failure> failure;
        bool depth_limited;
        std::string final_dump;
    };
    const Summary s = std::visit(
        [&](const auto& m) {
            auto r = simulate(m, c.seed, c.limits.max_depth);
            return Summary{std::move(r.trace), std::move(r.failure), r.depth_limited, m.dump(r.final_state)};
        },
        model);
    const std::string outcome = s.failure ? "VIOLATION" : s.depth_limited ? "DEPTH_LIMIT" : "CLEAN";
    if (c.output == Output::Json) {
        nlohmann::ordered_json j;
        j["schema"] = kSimulationSchema;
        j["scenario"] = scenario_json(c);
        j["seed"] = c.seed;
        nlohmann::ordered_json steps = nlohmann::ordered_json::array();
        for (const auto& st : s.trace) steps.push_back(step_json(st));
        j["steps"] = steps;
        j["outcome"] = outcome;
        j["failure"] = failure_json(s.failure);
        out << j.dump(2) << "\n";
    } else {
        out << "simulate " << scenario_line(c) << " seed=" << c.seed << "\n";
        for (const auto& st : s.trace) out << to_string(st) << "\n";
        out << "final state:\n" << s.final_dump;
        out << "steps: " << s.trace.size() << "\n" << "outcome: " << outcome << "\n";
        if (s.failure) out << "violated: " << to_string(s.failure->property) << ": " << s.failure->detail << "\n";
    }
    if (s.failure) {
        save_trace(trace_out.value_or("mpdcheck-simulation.trace"), TraceFile{c, outcome, s.failure, s.trace}, err);
        return kExitViolation;
    }
    if (trace_out) save_trace(*trace_out, TraceFile{c, outcome, std::nullopt, s.trace}, err);
    return s.depth_limited ? kExitResourceLimit : kExitOk;
}

inline std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream is(text);
    for (std::string l; std::getline(is, l);) lines.push_back(l);
    return lines;
}

// Lines of `after` missing from `before` as "+", the reverse as "-".
inline void print_delta(std::ostream& out, const std::string& before, const std::string& after) {
    const auto a = lines_of(before);
    const auto b = lines_of(after);
    for (const auto& l : a) {
        if (std::find(b.begin(), b.end(), l) == b.end()) out << "  - " << l << "\n";
    }
    for (const auto& l : b) {
        if (std::find(a.begin(), a.end(), l) == a.end()) out << "  + " << l << "\n";
    }
}

inline int run_replay(const TraceFile& t, std::ostream& out) {
    const ScenarioConfig& c = t.scenario;
    const AnyModel model = make_model(c);
    return std::visit(
        [&](const auto& m) {
            using State = typename std::decay_t<decltype(m)>::State;
            out << "replay " << scenario_line(c) << " steps=" << t.steps.size() << "\n"
                << "initial state:\n"
                << m.dump(m.initial());
            std::size_t index = 0;
            const auto r = replay(m, t.steps, [&](const State& before, const ScheduleStep& step, const State& after) {
                out << "step " << ++index << ": " << to_string(step) << "\n";
                print_delta(out, m.dump(before), m.dump(after));
            });
            if (r.failure && index < r.steps_applied) {
                // the last step raised inside its handler
                out << "step " << r.steps_applied << ": " << to_string(t.steps.back()) << "\n";
            }
            const std::string outcome = r.failure ? "VIOLATION" : "CLEAN";
            out << "outcome: " << outcome << "\n";
            if (r.failure) out << "violated: " << to_string(r.failure->property) << ": " << r.failure->detail << "\n";
            if (!t.outcome.empty()) {
                const bool recorded_violation = t.outcome == "VIOLATION";
                if (recorded_violation != r.failure.has_value() ||
                    (t.failure && r.failure && t.failure->property != r.failure->property)) {
                    out << "mismatch: trace recorded " << t.outcome << "\n";
                    return kExitMismatch;
                }
            }
            return r.failure ? kExitViolation : kExitOk;
        },
        model);
}

}  // namespace detail

/// Parses argv and runs one subcommand; returns the process exit status.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Model checker for the MPD ring and barrier protocols", "mpdcheck"};
    app.require_subcommand(1);

    ScenarioConfig cfg;
    std::string algorithm = "ring-par";
    std::string failure = "any";
    std::string reads = "select";
    std::string output = "table";
    std::string trace_out;
    std::string trace_in;

    auto add_scenario = [&](CLI::App* sub) {
        sub->add_option("--algorithm", algorithm, "ring-seq | ring-par | recovery | trace | barrier")
            ->check(CLI::IsMember({"ring-seq", "ring-par", "recovery", "trace", "barrier"}));
        sub->add_option("--size", cfg.size, "initial ring size (managers for barrier)");
        sub->add_option("--inserters", cfg.inserters, "daemons inserted concurrently (establishment)");
        sub->add_option("--failure", failure, "recovery: 'any' or the pid that fails");
        sub->add_option("--reads", reads, "ring-seq: select | blocking")->check(CLI::IsMember({"select", "blocking"}));
    };
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--max-depth", cfg.limits.max_depth, "search depth limit");
        sub->add_option("--max-states", cfg.limits.max_states, "stored state limit");
        sub->add_option("--output", output, "table | json")->check(CLI::IsMember({"table", "json"}));
    };

    auto* verify = app.add_subcommand("verify", "explore every interleaving");
    add_scenario(verify);
    add_common(verify);
    verify->add_option("--trace-out", trace_out, "counterexample path")->default_val("mpdcheck-counterexample.trace");
    verify->add_flag("--no-time", cfg.no_time, "omit elapsed time so reports compare byte for byte");

    auto* sim = app.add_subcommand("simulate", "one seeded random execution");
    add_scenario(sim);
    add_common(sim);
    sim->add_option("--seed", cfg.seed, "random seed");
    auto* sim_trace = sim->add_option("--trace-out", trace_out, "write the executed trace here");

    auto* rep = app.add_subcommand("replay", "re-execute a trace file step by step");
    rep->add_option("--trace", trace_in, "trace file")->required();
    add_scenario(rep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (rep->parsed()) {
            std::ifstream f(trace_in);
            if (!f) {
                err << "mpdcheck: cannot open " << trace_in << "\n";
                return kExitUsage;
            }
            TraceFile t = read_trace(f);
            // Scenario flags given on the command line must agree with the header.
            auto conflict = [&](const char* flag, const std::string& given, const std::string& recorded) {
                if (rep->count(flag) == 0 || given == recorded) return false;
                err << "mpdcheck: " << flag << " " << given << " does not match the trace (" << recorded << ")\n";
                return true;
            };
            const auto& h = t.scenario;
            if (conflict("--algorithm", algorithm, to_string(h.algorithm)) ||
                conflict("--size", std::to_string(cfg.size), std::to_string(h.size)) ||
                conflict("--inserters", std::to_string(cfg.inserters), std::to_string(h.inserters)) ||
                conflict("--failure", failure, failure_policy(h)) ||
                conflict("--reads", reads, h.blocking_reads ? "blocking" : "select")) {
                return kExitMismatch;
            }
            return detail::run_replay(t, out);
        }

        cfg.algorithm = algorithm_names().at(algorithm);
        cfg.blocking_reads = reads == "blocking";
        cfg.output = output == "json" ? Output::Json : Output::Table;
        if (failure != "any") cfg.failure = parse_int(failure, "--failure");
        if (verify->parsed()) return detail::run_verify(cfg, trace_out, out, err);
        return detail::run_simulate(cfg, sim_trace->count() ? std::optional(trace_out) : std::nullopt, out, err);
    } catch (const ReplayMismatch& e) {
        err << "mpdcheck: replay mismatch: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const ConfigurationError& e) {
        err << "mpdcheck: " << e.what() << "\n";
        return kExitUsage;
    }
}

}  // namespace mpdcheck::cli
