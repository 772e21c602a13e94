#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mpdcheck/daemon_protocol.hpp"
#include "mpdcheck/error.hpp"
#include "mpdcheck/manager_barrier.hpp"
#include "mpdcheck/properties.hpp"
#include "mpdcheck/schedule.hpp"

namespace mpdcheck {

inline Identity identity_for(Pid p) {
    return Identity{static_cast<std::uint16_t>(p), static_cast<std::uint16_t>(7000 + p)};
}

struct RingScenario {
    Variant variant = Variant::Parallel;
    bool blocking_reads = false;
    int initial_size = 1;  // hard-coded ring at start (1 = first daemon's self-ring)
    int inserters = 0;     // daemons that enter concurrently through daemon 0
    bool inject_failure = false;
    std::optional<Pid> failure_target;  // nullopt: any daemon may be the one to fail
    bool run_trace = false;
    bool check_neighbor_state = true;

    // 0 selects the defaults: CONN_MAX = 2N + 2K, QSZ = N.
    std::size_t conn_max = 0;
    std::size_t qsz = 0;

    int total() const { return initial_size + inserters; }
};

/// Daemon-ring scenarios (establishment, recovery, trace) as an explorable
/// transition system.
class DaemonModel {
public:
    using State = DaemonSystem;

    explicit DaemonModel(RingScenario sc) : scenario_(sc), protocol_(sc.variant, sc.blocking_reads, registry(sc)) {
        if (sc.initial_size < 1) throw ConfigurationError("initial ring needs at least one daemon");
        if (sc.inserters < 0) throw ConfigurationError("negative inserter count");
        if (sc.total() > 60) throw ConfigurationError("too many daemons");
        if (sc.failure_target && (*sc.failure_target < 0 || *sc.failure_target >= sc.total())) {
            throw ConfigurationError("failure target out of range");
        }
    }

    const RingScenario& scenario() const { return scenario_; }
    const RingProtocol& protocol() const { return protocol_; }

    State initial() const {
        const auto n = static_cast<std::size_t>(scenario_.total());
        const auto k = static_cast<std::size_t>(scenario_.inserters);
        State s;
        s.sockets = SocketTable(scenario_.conn_max ? scenario_.conn_max : 2 * n + 2 * k,
                                scenario_.qsz ? scenario_.qsz : n, n);
        for (std::size_t p = 0; p < n; ++p) s.daemons.push_back(protocol_.make_daemon(static_cast<Pid>(p)));
        const int ring = scenario_.initial_size;
        if (ring == 1) {
            protocol_.first_daemon_init(s, 0);
        } else {
            for (int i = 0; i < ring; ++i) {
                const Pid next = (i + 1) % ring;
                auto& d = s.daemons[static_cast<std::size_t>(i)];
                d.rhs_fd = s.sockets.connect(i, next, UseFlag::Rhs);
                auto& nd = s.daemons[static_cast<std::size_t>(next)];
                nd.lhs_fd = s.sockets.accept(next);
                s.sockets.set_flag(next, nd.lhs_fd, UseFlag::Lhs);
                d.rhs_id = identity_for(next);
                d.rhs2_id = identity_for((i + 2) % ring);
                d.phase = Phase::InRing;
            }
        }
        for (int i = ring; i < scenario_.total(); ++i) {
            auto& d = s.daemons[static_cast<std::size_t>(i)];
            d.insertion_pending = true;
            d.entry = identity_for(0);
        }
        s.failures_left = scenario_.inject_failure ? 1 : 0;
        for (std::size_t p = 0; p < n; ++p) s.sockets.rearm(static_cast<Pid>(p));
        return s;
    }

    /// Runnable steps in (pid, fd, action) order. When nothing else can run,
    /// the only candidate is the post-timeout trace start, if configured.
    std::vector<ScheduleStep> enabled_steps(const State& s) const {
        auto steps = regular_steps(s);
        if (steps.empty() && scenario_.run_trace && !s.trace.started) {
            const auto live = live_daemons(s);
            if (!live.empty()) steps.push_back(ScheduleStep::spontaneous(live.front(), Action::StartTrace));
        }
        return steps;
    }

    bool quiescent(const State& s) const { return regular_steps(s).empty(); }

    State apply(const State& s, const ScheduleStep& step) const {
        const auto steps = enabled_steps(s);
        if (std::find(steps.begin(), steps.end(), step) == steps.end()) {
            throw ContractViolation("step not enabled: " + to_string(step));
        }
        return apply_enabled(s, step);
    }

    /// apply() without the membership check; the explorer only feeds it
    /// steps it just obtained from enabled_steps().
    State apply_enabled(const State& s, const ScheduleStep& step) const {
        State t = s;
        if (step.kind == StepKind::Action) {
            auto& d = t.daemons.at(static_cast<std::size_t>(step.pid));
            switch (step.action) {
                case Action::BeginInsertion:
                    d.insertion_pending = false;
                    protocol_.begin_insertion(t, step.pid, *d.entry);
                    break;
                case Action::InjectFailure:
                    t.failures_left = static_cast<std::uint8_t>(t.failures_left - 1);
                    t.sockets.inject_failure(step.pid);
                    d = protocol_.make_daemon(step.pid);
                    d.phase = Phase::Dead;
                    return t;
                case Action::StartTrace:
                    protocol_.start_trace(t, step.pid);
                    break;
                default:
                    throw ContractViolation("action not available to daemons");
            }
        } else {
            const auto events = t.sockets.select(step.pid);
            const auto it = std::find_if(events.begin(), events.end(), [&](const auto& e) { return e.fd == step.fd; });
            if (it == events.end()) throw ContractViolation("no ready event for " + to_string(step));
            protocol_.on_event(t, step.pid, *it);
        }
        t.sockets.rearm(step.pid);
        return t;
    }

    void encode(const State& s, std::string& out) const {
        ByteWriter w(out);
        s.encode(w);
    }

    std::optional<Failure> check_every(const State& s) const {
        if (auto bad = s.sockets.check_invariants()) return Failure{PropertyKind::SocketInvariants, *bad};
        return std::nullopt;
    }

    std::optional<Failure> check_quiescent(const State& s) const {
        for (std::size_t i = 0; i < s.sockets.conn_max(); ++i) {
            if (!s.sockets.channel(FileDescriptor{static_cast<std::uint16_t>(i)}).empty()) {
                return Failure{PropertyKind::Deadlock, "messages queued on fd " + std::to_string(i) + " at quiescence"};
            }
        }
        if (auto bad = check_ring_topology(s, live_daemons(s))) return Failure{PropertyKind::RingTopology, *bad};
        if (scenario_.check_neighbor_state) {
            if (auto bad = check_neighbor_state(s)) return Failure{PropertyKind::NeighborState, *bad};
        }
        if (scenario_.run_trace && s.trace.started) {
            if (auto bad = check_trace_done(s)) return Failure{PropertyKind::TraceDone, *bad};
        }
        return std::nullopt;
    }

    std::string dump(const State& s) const { return s.dump(); }

private:
    static std::vector<Identity> registry(const RingScenario& sc) {
        std::vector<Identity> ids;
        for (int p = 0; p < sc.total(); ++p) ids.push_back(identity_for(p));
        return ids;
    }

    std::vector<ScheduleStep> regular_steps(const State& s) const {
        std::vector<ScheduleStep> steps;
        for (const auto& d : s.daemons) {
            const Pid p = d.pid;
            if (s.sockets.dead(p)) continue;
            if (s.sockets.select_bit(p)) {
                bool connect_offered = false;
                for (const auto& ev : s.sockets.ready_events(p)) {
                    if (!protocol_.can_service(s, p, ev)) continue;
                    if (ev.reason == ReadyReason::ConnectPending) {
                        // accept() always takes the lowest pending connect
                        if (connect_offered) continue;
                        connect_offered = true;
                    }
                    const Command head = ev.reason == ReadyReason::Message ? s.sockets.channel(ev.fd).front().cmd
                                                                           : Command{};
                    steps.push_back(ScheduleStep::event(p, ev, head));
                }
            }
            if (d.insertion_pending) steps.push_back(ScheduleStep::spontaneous(p, Action::BeginInsertion));
            if (s.failures_left > 0 && d.phase == Phase::InRing &&
                (!scenario_.failure_target || *scenario_.failure_target == p)) {
                steps.push_back(ScheduleStep::spontaneous(p, Action::InjectFailure));
            }
        }
        return steps;
    }

    RingScenario scenario_;
    RingProtocol protocol_;
};

struct BarrierScenario {
    int managers = 1;
};

class BarrierModel {
public:
    using State = ManagerSystem;

    explicit BarrierModel(BarrierScenario sc) : scenario_(sc) {
        if (sc.managers < 1 || sc.managers > 60) throw ConfigurationError("manager count out of range");
    }

    const BarrierScenario& scenario() const { return scenario_; }
    const BarrierProtocol& protocol() const { return protocol_; }

    State initial() const { return protocol_.hard_coded_ring(static_cast<std::size_t>(scenario_.managers)); }

    std::vector<ScheduleStep> enabled_steps(const State& s) const {
        std::vector<ScheduleStep> steps;
        for (const auto& m : s.managers) {
            if (s.sockets.select_bit(m.pid)) {
                for (const auto& ev : s.sockets.ready_events(m.pid)) {
                    const Command head = ev.reason == ReadyReason::Message ? s.sockets.channel(ev.fd).front().cmd
                                                                           : Command{};
                    steps.push_back(ScheduleStep::event(m.pid, ev, head));
                }
            }
            if (!s.bits.in(m.pid)) steps.push_back(ScheduleStep::spontaneous(m.pid, Action::ClientArrives));
        }
        return steps;
    }

    bool quiescent(const State& s) const { return enabled_steps(s).empty(); }

    State apply(const State& s, const ScheduleStep& step) const {
        const auto steps = enabled_steps(s);
        if (std::find(steps.begin(), steps.end(), step) == steps.end()) {
            throw ContractViolation("step not enabled: " + to_string(step));
        }
        return apply_enabled(s, step);
    }

    State apply_enabled(const State& s, const ScheduleStep& step) const {
        State t = s;
        if (step.kind == StepKind::Action) {
            if (step.action != Action::ClientArrives) throw ContractViolation("action not available to managers");
            protocol_.client_reaches_barrier(t, step.pid);
        } else {
            const auto events = t.sockets.select(step.pid);
            const auto it = std::find_if(events.begin(), events.end(), [&](const auto& e) { return e.fd == step.fd; });
            if (it == events.end()) throw ContractViolation("no ready event for " + to_string(step));
            protocol_.on_event(t, step.pid, *it);
        }
        t.sockets.rearm(step.pid);
        return t;
    }

    void encode(const State& s, std::string& out) const {
        ByteWriter w(out);
        s.encode(w);
    }

    std::optional<Failure> check_every(const State& s) const {
        if (auto bad = s.sockets.check_invariants()) return Failure{PropertyKind::SocketInvariants, *bad};
        if (auto bad = check_barrier_invariant(s)) return Failure{PropertyKind::BarrierInvariant, *bad};
        return std::nullopt;
    }

    std::optional<Failure> check_quiescent(const State& s) const {
        for (std::size_t i = 0; i < s.sockets.conn_max(); ++i) {
            if (!s.sockets.channel(FileDescriptor{static_cast<std::uint16_t>(i)}).empty()) {
                return Failure{PropertyKind::Deadlock, "messages queued on fd " + std::to_string(i) + " at quiescence"};
            }
        }
        if (auto bad = check_barrier_end(s)) return Failure{PropertyKind::BarrierEnd, *bad};
        return std::nullopt;
    }

    std::string dump(const State& s) const { return s.dump(); }

private:
    BarrierScenario scenario_;
    BarrierProtocol protocol_;
};

}  // namespace mpdcheck
