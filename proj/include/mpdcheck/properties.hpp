#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mpdcheck/daemon_protocol.hpp"
#include "mpdcheck/manager_barrier.hpp"

namespace mpdcheck {

enum class PropertyKind : std::uint8_t {
    RingTopology,
    NeighborState,
    TraceDone,
    BarrierEnd,
    BarrierInvariant,
    SocketInvariants,
    Deadlock,      // no process can run but messages are still queued
    HandlerError,  // a handler or socket call raised
};

enum class EvaluationPoint : std::uint8_t { QuiescenceOnly, EveryState };

inline std::string_view to_string(PropertyKind k) {
    switch (k) {
        case PropertyKind::RingTopology: return "RING_TOPOLOGY";
        case PropertyKind::NeighborState: return "NEIGHBOR_STATE";
        case PropertyKind::TraceDone: return "TRACE_DONE";
        case PropertyKind::BarrierEnd: return "BARRIER_END";
        case PropertyKind::BarrierInvariant: return "BARRIER_INVARIANT";
        case PropertyKind::SocketInvariants: return "SOCKET_INVARIANTS";
        case PropertyKind::Deadlock: return "DEADLOCK";
        case PropertyKind::HandlerError: return "HANDLER_ERROR";
    }
    return "?";
}

inline EvaluationPoint evaluation_point(PropertyKind k) {
    switch (k) {
        case PropertyKind::BarrierInvariant:
        case PropertyKind::SocketInvariants:
        case PropertyKind::HandlerError:
            return EvaluationPoint::EveryState;
        default:
            return EvaluationPoint::QuiescenceOnly;
    }
}

struct Failure {
    PropertyKind property{};
    std::string detail;

    friend bool operator==(const Failure&, const Failure&) = default;
};

using CheckResult = std::optional<std::string>;  // nullopt = pass

/// Follows rhs descriptor links from `start`; stops at the first broken link
/// or after `limit` hops. The returned order begins with `start`.
inline std::vector<Pid> follow_rhs(const DaemonSystem& s, Pid start, std::size_t limit, std::string* why = nullptr) {
    std::vector<Pid> order{start};
    Pid cur = start;
    for (std::size_t hop = 0; hop < limit; ++hop) {
        const auto& d = s.daemons.at(static_cast<std::size_t>(cur));
        auto fail = [&](const std::string& msg) {
            if (why) *why = "daemon " + std::to_string(cur) + ": " + msg;
            return order;
        };
        if (!d.rhs_fd.valid()) return fail("no rhs descriptor");
        const auto& rd = s.sockets.descriptor(d.rhs_fd);
        if (!rd.allocated() || rd.owner_pid != cur) return fail("rhs descriptor not owned");
        if (rd.use_flag != UseFlag::Rhs) return fail("rhs descriptor flagged " + std::string(to_string(rd.use_flag)));
        if (!rd.other_fd.valid()) return fail("rhs connection half-closed");
        const auto& peer = s.sockets.descriptor(rd.other_fd);
        const Pid next = peer.owner_pid;
        if (peer.use_flag != UseFlag::Lhs) return fail("peer end flagged " + std::string(to_string(peer.use_flag)));
        if (s.daemons.at(static_cast<std::size_t>(next)).lhs_fd != rd.other_fd) {
            return fail("peer " + std::to_string(next) + " does not use the connection as its lhs");
        }
        if (next == start) return order;
        order.push_back(next);
        cur = next;
    }
    if (why) *why = "walk did not return to " + std::to_string(start);
    return order;
}

inline std::vector<Pid> live_daemons(const DaemonSystem& s) {
    std::vector<Pid> live;
    for (const auto& d : s.daemons) {
        if (d.phase != Phase::Dead) live.push_back(d.pid);
    }
    return live;
}

/// The descriptor table, read as a graph of rhs links, is one ring through
/// exactly `expected_live`, and holds no other open descriptors.
inline CheckResult check_ring_topology(const DaemonSystem& s, const std::vector<Pid>& expected_live) {
    if (expected_live.empty()) return "no live daemons";
    std::string why;
    const auto order = follow_rhs(s, expected_live.front(), expected_live.size(), &why);
    if (!why.empty()) return why;
    std::vector<Pid> sorted_order = order;
    std::sort(sorted_order.begin(), sorted_order.end());
    std::vector<Pid> sorted_expected = expected_live;
    std::sort(sorted_expected.begin(), sorted_expected.end());
    if (sorted_order != sorted_expected) {
        return "ring visits " + std::to_string(order.size()) + " daemons, expected " +
               std::to_string(expected_live.size());
    }
    if (s.sockets.allocated_count() != 2 * expected_live.size()) {
        return std::to_string(s.sockets.allocated_count()) + " descriptors open, ring needs " +
               std::to_string(2 * expected_live.size());
    }
    return std::nullopt;
}

/// Recorded rhs/rhs2 identities agree with the descriptor table.
inline CheckResult check_neighbor_state(const DaemonSystem& s) {
    const auto live = live_daemons(s);
    if (live.empty()) return "no live daemons";
    const auto order = follow_rhs(s, live.front(), live.size());
    if (order.size() != live.size()) return "ring walk incomplete";
    const std::size_t n = order.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = s.daemons[static_cast<std::size_t>(order[i])];
        const auto& rhs = s.daemons[static_cast<std::size_t>(order[(i + 1) % n])];
        const auto& rhs2 = s.daemons[static_cast<std::size_t>(order[(i + 2) % n])];
        if (d.rhs_id != rhs.identity) {
            return "daemon " + std::to_string(d.pid) + " records rhs " + to_string(d.rhs_id) + ", actual " +
                   to_string(rhs.identity);
        }
        if (d.rhs2_id != rhs2.identity) {
            return "daemon " + std::to_string(d.pid) + " records rhs2 " + to_string(d.rhs2_id) + ", actual " +
                   to_string(rhs2.identity);
        }
    }
    return std::nullopt;
}

/// The trace finished and collected every live daemon once, in ring order
/// starting at the initiator.
inline CheckResult check_trace_done(const DaemonSystem& s) {
    const auto& t = s.trace;
    if (!t.started) return "trace never started";
    if (!t.done) return "trace did not complete";
    const auto live = live_daemons(s);
    const auto order = follow_rhs(s, t.initiator, live.size());
    if (order.size() != live.size()) return "ring walk incomplete";
    std::vector<Identity> expected;
    for (Pid p : order) expected.push_back(s.daemons[static_cast<std::size_t>(p)].identity);
    if (t.collected != expected) return "trace collected " + std::to_string(t.collected.size()) + " identities out of ring order";
    std::set<Identity> distinct(t.collected.begin(), t.collected.end());
    if (distinct.size() != t.collected.size()) return "trace visited a daemon twice";
    if (t.forwards + 1u != live.size()) {
        return "trace_req forwarded " + std::to_string(t.forwards) + " times in a ring of " +
               std::to_string(live.size());
    }
    return std::nullopt;
}

/// assert(client_barrier_out == ALL_BITS), plus one circuit of each message.
inline CheckResult check_barrier_end(const ManagerSystem& s) {
    if (s.bits.client_barrier_out != s.bits.all_bits) return "client_barrier_out != ALL_BITS";
    for (const auto& m : s.managers) {
        if (m.barrier_in_sent != 1 || m.barrier_out_sent != 1) {
            return "manager " + std::to_string(m.pid) + " did not forward each barrier message exactly once";
        }
    }
    return std::nullopt;
}

/// (client_barrier_out == 0) || ((client_barrier_in == ALL_BITS) && (holding_barrier_in == 0))
inline CheckResult check_barrier_invariant(const ManagerSystem& s) {
    if (s.bits.client_barrier_out == 0) return std::nullopt;
    if (s.bits.client_barrier_in == s.bits.all_bits && s.holding_barrier_in() == 0) return std::nullopt;
    return "a client proceeded before every client reached the barrier";
}

}  // namespace mpdcheck
