#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mpdcheck/encoding.hpp"
#include "mpdcheck/error.hpp"
#include "mpdcheck/message.hpp"
#include "mpdcheck/socket_model.hpp"

namespace mpdcheck {

enum class Variant : std::uint8_t { Sequential, Parallel };

enum class Phase : std::uint8_t { Idle, EnteringLhs, EnteringRhs, InRing, Dead };

inline std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::Idle: return "IDLE";
        case Phase::EnteringLhs: return "ENTERING_LHS";
        case Phase::EnteringRhs: return "ENTERING_RHS";
        case Phase::InRing: return "IN_RING";
        case Phase::Dead: return "DEAD";
    }
    return "?";
}

struct DaemonState {
    Pid pid = 0;
    Identity identity;
    FileDescriptor lhs_fd = INVALID_FD;
    FileDescriptor rhs_fd = INVALID_FD;
    std::optional<Identity> rhs_id;
    std::optional<Identity> rhs2_id;
    Phase phase = Phase::Idle;
    Variant variant = Variant::Parallel;

    // Set when a closed rhs is expected (controlled shutdown); suppresses recovery.
    bool shutdown_notice = false;

    // Scenario bookkeeping: this daemon still has to enter the ring at `entry`.
    bool insertion_pending = false;
    std::optional<Identity> entry;

    // Sequential variant only. Requesters whose rhs_info_request was forwarded
    // to D-right and not answered yet, oldest first.
    std::vector<FileDescriptor> pending_requesters;
    // Requests that arrived while the rhs was torn down; forwarded once a
    // new rhs is installed.
    std::vector<FileDescriptor> deferred_requesters;

    // Sequential variant with blocking reads: the daemon services nothing but
    // `awaited_cmd` on `awaited_fd` until it arrives.
    FileDescriptor awaited_fd = INVALID_FD;
    Command awaited_cmd{};

    bool blocked() const { return awaited_fd.valid(); }

    friend bool operator==(const DaemonState&, const DaemonState&) = default;
};

struct TraceState {
    Pid initiator = kUnowned;
    bool started = false;
    bool done = false;
    std::vector<Identity> collected;
    std::uint8_t forwards = 0;

    friend bool operator==(const TraceState&, const TraceState&) = default;
};

/// Global state of a daemon-ring scenario.
struct DaemonSystem {
    SocketTable sockets;
    std::vector<DaemonState> daemons;
    TraceState trace;
    std::uint8_t failures_left = 0;

    friend bool operator==(const DaemonSystem&, const DaemonSystem&) = default;

    void encode(ByteWriter& w) const {
        sockets.encode(w);
        for (const auto& d : daemons) {
            w.u8(static_cast<std::uint8_t>(d.phase));
            w.fd(d.lhs_fd.index);
            w.fd(d.rhs_fd.index);
            mpdcheck::encode(w, d.rhs_id);
            mpdcheck::encode(w, d.rhs2_id);
            w.u8(static_cast<std::uint8_t>((d.shutdown_notice ? 1 : 0) | (d.insertion_pending ? 2 : 0)));
            w.u8(static_cast<std::uint8_t>(d.pending_requesters.size()));
            for (auto fd : d.pending_requesters) w.fd(fd.index);
            w.u8(static_cast<std::uint8_t>(d.deferred_requesters.size()));
            for (auto fd : d.deferred_requesters) w.fd(fd.index);
            w.fd(d.awaited_fd.index);
            if (d.blocked()) w.u8(static_cast<std::uint8_t>(d.awaited_cmd));
        }
        w.u8(static_cast<std::uint8_t>(trace.initiator));
        w.u8(static_cast<std::uint8_t>((trace.started ? 1 : 0) | (trace.done ? 2 : 0)));
        w.u8(trace.forwards);
        w.u8(static_cast<std::uint8_t>(trace.collected.size()));
        for (const auto& id : trace.collected) mpdcheck::encode(w, std::optional<Identity>(id));
        w.u8(failures_left);
    }

    std::string dump() const {
        std::ostringstream os;
        os << sockets.dump();
        for (const auto& d : daemons) {
            os << "daemon=" << d.pid << " id=" << to_string(d.identity) << " phase=" << to_string(d.phase)
               << " lhs=" << to_string(d.lhs_fd) << " rhs=" << to_string(d.rhs_fd)
               << " rhs_id=" << to_string(d.rhs_id) << " rhs2_id=" << to_string(d.rhs2_id);
            if (d.insertion_pending) os << " pending=insert";
            if (!d.pending_requesters.empty()) os << " requesters=" << d.pending_requesters.size();
            if (!d.deferred_requesters.empty()) os << " deferred=" << d.deferred_requesters.size();
            if (d.blocked()) os << " awaiting=" << to_string(d.awaited_cmd) << "@" << to_string(d.awaited_fd);
            os << "\n";
        }
        if (trace.started) {
            os << "trace initiator=" << trace.initiator << " done=" << (trace.done ? 1 : 0)
               << " forwards=" << int(trace.forwards) << " collected=[";
            for (std::size_t i = 0; i < trace.collected.size(); ++i) {
                os << (i ? "," : "") << to_string(trace.collected[i]);
            }
            os << "]\n";
        }
        return os.str();
    }
};

/// The middle tier for daemons: one atomic handler per ready event.
///
/// `registry` maps pid -> advertised identity; connect() resolves an identity
/// back to the listening process through it.
class RingProtocol {
public:
    RingProtocol(Variant variant, bool blocking_reads, std::vector<Identity> registry)
        : variant_(variant), blocking_reads_(blocking_reads), registry_(std::move(registry)) {}

    Variant variant() const { return variant_; }
    bool blocking_reads() const { return blocking_reads_; }
    const std::vector<Identity>& registry() const { return registry_; }
    std::size_t size() const { return registry_.size(); }

    Pid lookup(const Identity& id) const {
        for (std::size_t p = 0; p < registry_.size(); ++p) {
            if (registry_[p] == id) return static_cast<Pid>(p);
        }
        throw ConfigurationError("no daemon listens at " + to_string(id));
    }

    DaemonState make_daemon(Pid pid) const {
        DaemonState d;
        d.pid = pid;
        d.identity = registry_.at(static_cast<std::size_t>(pid));
        d.variant = variant_;
        return d;
    }

    // The first daemon connects to its own listening port: a ring of one.
    void first_daemon_init(DaemonSystem& s, Pid p) const {
        auto& d = s.daemons.at(static_cast<std::size_t>(p));
        d.rhs_fd = s.sockets.connect(p, p, UseFlag::Rhs);
        d.lhs_fd = s.sockets.accept(p);
        s.sockets.set_flag(p, d.lhs_fd, UseFlag::Lhs);
        d.rhs_id = d.identity;
        d.rhs2_id = d.identity;
        d.phase = Phase::InRing;
        s.sockets.rearm(p);
    }

    void begin_insertion(DaemonSystem& s, Pid p, const Identity& entry) const {
        auto& d = daemon(s, p);
        if (d.phase != Phase::Idle) throw ContractViolation("begin_insertion: daemon is not idle");
        const Pid left = lookup(entry);
        d.lhs_fd = s.sockets.connect(p, left, UseFlag::Lhs);
        if (variant_ == Variant::Sequential) {
            s.sockets.write(p, d.lhs_fd, Message{Command::RhsInfoRequest, d.identity});
            d.phase = Phase::EnteringLhs;
            await(d, d.lhs_fd, Command::RhsInfoReturn);
        } else {
            s.sockets.write(p, d.lhs_fd, Message{Command::NewRhs, d.identity});
            d.phase = Phase::EnteringRhs;
        }
    }

    /// Whether a daemon blocked in a read may service this event now.
    bool can_service(const DaemonSystem& s, Pid p, const ReadyEvent& ev) const {
        const auto& d = s.daemons.at(static_cast<std::size_t>(p));
        if (!d.blocked()) return true;
        if (ev.fd != d.awaited_fd || ev.reason != ReadyReason::Message) return false;
        return s.sockets.channel(ev.fd).front().cmd == d.awaited_cmd;
    }

    void on_event(DaemonSystem& s, Pid p, const ReadyEvent& ev) const {
        switch (ev.reason) {
            case ReadyReason::ConnectPending:
                s.sockets.accept(p);
                break;
            case ReadyReason::Message:
                handle_message(s, p, ev.fd, s.sockets.read(p, ev.fd));
                break;
            case ReadyReason::Eof:
                handle_eof(s, p, ev.fd);
                break;
        }
    }

    void handle_message(DaemonSystem& s, Pid p, FileDescriptor fd, const Message& msg) const {
        auto& d = daemon(s, p);
        if (d.blocked() && fd == d.awaited_fd && msg.cmd == d.awaited_cmd) d.awaited_fd = INVALID_FD;
        switch (msg.cmd) {
            case Command::RhsInfoRequest: handle_rhs_info_request(s, p, fd, msg); break;
            case Command::RhsInfoReturn: handle_rhs_info_return(s, p, fd, msg); break;
            case Command::NewRhs: handle_new_rhs(s, p, fd, msg); break;
            case Command::NewLhs: handle_new_lhs(s, p, fd, msg); break;
            case Command::ReconnectRhs: handle_reconnect_rhs(s, p, fd, msg); break;
            case Command::Rhs2Info: handle_rhs2info(s, p, fd, msg); break;
            case Command::TraceReq: handle_trace_req(s, p, fd, msg); break;
            case Command::TraceDone: handle_trace_done(s, p, fd, msg); break;
            default:
                throw ProtocolViolation("daemon " + std::to_string(p) + " received " +
                                        std::string(to_string(msg.cmd)));
        }
    }

    // Sequential variant. On a descriptor accepted from a new daemon this is
    // the D-left role: forward the query to D-right and remember who asked.
    // On the lhs it is the D-right role: answer with our own coordinates.
    // Nothing serializes overlapping requests.
    void handle_rhs_info_request(DaemonSystem& s, Pid p, FileDescriptor fd, const Message& msg) const {
        if (variant_ != Variant::Sequential) throw ProtocolViolation("rhs_info_request in parallel variant");
        auto& d = daemon(s, p);
        const UseFlag flag = s.sockets.descriptor(fd).use_flag;
        if (flag == UseFlag::New) {
            if (self_ring(s, d)) {
                send_if_open(s, p, fd, Message{Command::RhsInfoReturn, d.identity});
                await(d, fd, Command::NewRhs);
            } else if (s.sockets.peer_open(d.rhs_fd)) {
                forward_request(s, p, fd, msg.subject);
            } else {
                d.deferred_requesters.push_back(fd);
            }
        } else if (flag == UseFlag::Lhs || flag == UseFlag::Stale) {
            send_if_open(s, p, fd, Message{Command::RhsInfoReturn, d.identity});
        }
    }

    void handle_rhs_info_return(DaemonSystem& s, Pid p, FileDescriptor fd, const Message& msg) const {
        auto& d = daemon(s, p);
        if (!msg.subject) throw ProtocolViolation("rhs_info_return without coordinates");
        if (d.phase == Phase::EnteringLhs && fd == d.lhs_fd) {
            // D-new: declare ourselves D-left's rhs, then connect to D-right.
            d.rhs_id = msg.subject;
            send_if_open(s, p, d.lhs_fd, Message{Command::NewRhs, d.identity});
            d.rhs_fd = s.sockets.connect(p, lookup(*msg.subject), UseFlag::Rhs);
            s.sockets.write(p, d.rhs_fd, Message{Command::NewLhs, d.identity});
            d.phase = Phase::InRing;
            return;
        }
        if (d.pending_requesters.empty()) return;
        const FileDescriptor requester = d.pending_requesters.front();
        d.pending_requesters.erase(d.pending_requesters.begin());
        if (owns(s, p, requester) && s.sockets.peer_open(requester)) {
            s.sockets.write(p, requester, Message{Command::RhsInfoReturn, msg.subject});
            await(d, requester, Command::NewRhs);
        }
    }

    // D-left learns of D-new. Parallel: hand D-new the coordinates of D-right,
    // switch the rhs over, and tell our lhs neighbor that its rhs2 changed.
    void handle_new_rhs(DaemonSystem& s, Pid p, FileDescriptor fd, const Message& msg) const {
        auto& d = daemon(s, p);
        if (s.sockets.descriptor(fd).use_flag != UseFlag::New) {
            throw ProtocolViolation("new_rhs on a descriptor that was not freshly accepted");
        }
        if (!msg.subject) throw ProtocolViolation("new_rhs without identity");
        const FileDescriptor old_rhs = d.rhs_fd;
        if (variant_ == Variant::Parallel) {
            if (!d.rhs_id) throw ProtocolViolation("new_rhs at a daemon that does not know its rhs");
            s.sockets.write(p, fd, Message{Command::ReconnectRhs, d.rhs_id});
            d.rhs2_id = d.rhs_id;
        }
        s.sockets.set_flag(p, fd, UseFlag::Rhs);
        d.rhs_fd = fd;
        d.rhs_id = msg.subject;
        if (old_rhs.valid() && owns(s, p, old_rhs)) s.sockets.close(p, old_rhs);
        d.pending_requesters.erase(std::remove(d.pending_requesters.begin(), d.pending_requesters.end(), fd),
                                   d.pending_requesters.end());
        if (variant_ == Variant::Parallel) {
            notify_lhs(s, p);
            return;
        }
        // Queries still outstanding on the old rhs lost their answers with it.
        auto deferred = std::move(d.pending_requesters);
        deferred.insert(deferred.end(), d.deferred_requesters.begin(), d.deferred_requesters.end());
        d.pending_requesters.clear();
        d.deferred_requesters.clear();
        for (const auto requester : deferred) {
            if (requester != fd && owns(s, p, requester) && s.sockets.peer_open(requester)) {
                forward_request(s, p, requester, std::nullopt);
            }
        }
    }

    void handle_reconnect_rhs(DaemonSystem& s, Pid p, FileDescriptor /*fd*/, const Message& msg) const {
        auto& d = daemon(s, p);
        if (variant_ != Variant::Parallel) throw ProtocolViolation("reconnect_rhs in sequential variant");
        if (d.phase != Phase::EnteringRhs) throw ProtocolViolation("reconnect_rhs while not entering");
        if (!msg.subject) throw ProtocolViolation("reconnect_rhs without coordinates");
        if (*msg.subject == d.identity) throw ProtocolViolation("reconnect_rhs names the receiver itself");
        d.rhs_fd = s.sockets.connect(p, lookup(*msg.subject), UseFlag::Rhs);
        d.rhs_id = msg.subject;
        s.sockets.write(p, d.rhs_fd, Message{Command::NewLhs, d.identity});
        d.phase = Phase::InRing;
        notify_lhs(s, p);
    }

    // D-right learns of its new lhs. The old lhs connection is already closed
    // at the far end; it is closed here unless it still holds unread messages,
    // in which case it is drained first and closed on EOF.
    void handle_new_lhs(DaemonSystem& s, Pid p, FileDescriptor fd, const Message& /*msg*/) const {
        auto& d = daemon(s, p);
        if (s.sockets.descriptor(fd).use_flag != UseFlag::New) {
            throw ProtocolViolation("new_lhs on a descriptor that was not freshly accepted");
        }
        const FileDescriptor old_lhs = d.lhs_fd;
        s.sockets.set_flag(p, fd, UseFlag::Lhs);
        d.lhs_fd = fd;
        if (old_lhs.valid() && old_lhs != fd && owns(s, p, old_lhs)) {
            if (s.sockets.channel(old_lhs).empty()) {
                s.sockets.close(p, old_lhs);
            } else {
                s.sockets.set_flag(p, old_lhs, UseFlag::Stale);
            }
        }
        if (variant_ == Variant::Parallel) notify_lhs(s, p);
    }

    // Addressed to the daemon whose rhs is `subject`; anyone else passes it on
    // counterclockwise.
    void handle_rhs2info(DaemonSystem& s, Pid p, FileDescriptor /*fd*/, const Message& msg) const {
        auto& d = daemon(s, p);
        if (msg.subject && d.rhs_id == msg.subject) {
            d.rhs2_id = msg.value;
            return;
        }
        Message fwd = msg;
        fwd.hops = static_cast<std::uint8_t>(msg.hops + 1);
        if (fwd.hops >= size()) throw ProtocolViolation("rhs2info forwarded beyond ring size");
        send_if_open(s, p, d.lhs_fd, std::move(fwd));
    }

    void handle_eof(DaemonSystem& s, Pid p, FileDescriptor fd) const {
        auto& d = daemon(s, p);
        if (fd == d.rhs_fd) {
            handle_rhs_eof(s, p, fd);
        } else if (fd == d.lhs_fd) {
            handle_lhs_eof(s, p, fd);
        } else {
            s.sockets.close(p, fd);
        }
    }

    // Closed rhs without notice means the neighbor died: reconnect to the
    // daemon two to the right and refresh rhs2 state on both sides.
    void handle_rhs_eof(DaemonSystem& s, Pid p, FileDescriptor fd) const {
        auto& d = daemon(s, p);
        s.sockets.close(p, fd);
        d.rhs_fd = INVALID_FD;
        if (variant_ == Variant::Sequential) {
            d.deferred_requesters.insert(d.deferred_requesters.end(), d.pending_requesters.begin(),
                                         d.pending_requesters.end());
            d.pending_requesters.clear();
            return;
        }
        if (d.shutdown_notice) return;
        if (!d.rhs2_id) throw ProtocolViolation("rhs lost with no rhs2 recorded");
        const Pid target = lookup(*d.rhs2_id);
        if (s.sockets.dead(target)) throw ProtocolViolation("rhs and rhs2 both failed");
        d.rhs_fd = s.sockets.connect(p, target, UseFlag::Rhs);
        s.sockets.write(p, d.rhs_fd, Message{Command::NewLhs, d.identity});
        d.rhs_id = d.rhs2_id;
        d.rhs2_id.reset();  // refreshed by the rhs2info that answers new_lhs
        notify_lhs(s, p);
    }

    void handle_lhs_eof(DaemonSystem& s, Pid p, FileDescriptor fd) const {
        auto& d = daemon(s, p);
        s.sockets.close(p, fd);
        d.lhs_fd = INVALID_FD;
    }

    void start_trace(DaemonSystem& s, Pid p) const {
        auto& d = daemon(s, p);
        s.trace = TraceState{};
        s.trace.initiator = p;
        s.trace.started = true;
        Message m{Command::TraceReq, d.identity};
        m.trail.push_back(d.identity);
        s.sockets.write(p, d.rhs_fd, std::move(m));
    }

    void handle_trace_req(DaemonSystem& s, Pid p, FileDescriptor /*fd*/, const Message& msg) const {
        auto& d = daemon(s, p);
        if (msg.subject == d.identity) {
            s.trace.collected = msg.trail;
            s.trace.done = true;
            Message done{Command::TraceDone, d.identity};
            done.trail = msg.trail;
            s.sockets.write(p, d.rhs_fd, std::move(done));
            return;
        }
        if (msg.trail.size() >= size()) throw ProtocolViolation("trace_req exceeded ring size");
        Message fwd = msg;
        fwd.trail.push_back(d.identity);
        s.trace.forwards = static_cast<std::uint8_t>(s.trace.forwards + 1);
        s.sockets.write(p, d.rhs_fd, std::move(fwd));
    }

    void handle_trace_done(DaemonSystem& s, Pid p, FileDescriptor /*fd*/, const Message& msg) const {
        auto& d = daemon(s, p);
        if (msg.subject == d.identity) return;
        Message fwd = msg;
        fwd.hops = static_cast<std::uint8_t>(msg.hops + 1);
        if (fwd.hops >= size()) throw ProtocolViolation("trace_done exceeded ring size");
        s.sockets.write(p, d.rhs_fd, std::move(fwd));
    }

private:
    static DaemonState& daemon(DaemonSystem& s, Pid p) { return s.daemons.at(static_cast<std::size_t>(p)); }

    static bool owns(const DaemonSystem& s, Pid p, FileDescriptor fd) {
        if (!fd.valid()) return false;
        const auto& desc = s.sockets.descriptor(fd);
        return desc.allocated() && desc.owner_pid == p;
    }

    static bool self_ring(const DaemonSystem& s, const DaemonState& d) {
        if (!s.sockets.peer_open(d.rhs_fd)) return false;
        return s.sockets.descriptor(s.sockets.descriptor(d.rhs_fd).other_fd).owner_pid == d.pid;
    }

    static void send_if_open(DaemonSystem& s, Pid p, FileDescriptor fd, Message m) {
        if (owns(s, p, fd) && s.sockets.peer_open(fd)) s.sockets.write(p, fd, std::move(m));
    }

    void forward_request(DaemonSystem& s, Pid p, FileDescriptor requester, std::optional<Identity> who) const {
        auto& d = daemon(s, p);
        s.sockets.write(p, d.rhs_fd, Message{Command::RhsInfoRequest, who});
        d.pending_requesters.push_back(requester);
        await(d, d.rhs_fd, Command::RhsInfoReturn);
    }

    // Tell the lhs neighbor (whose rhs is us) what our rhs now is.
    void notify_lhs(DaemonSystem& s, Pid p) const {
        auto& d = daemon(s, p);
        if (!d.rhs_id || !d.lhs_fd.valid()) return;
        if (s.sockets.descriptor(d.lhs_fd).use_flag != UseFlag::Lhs) return;
        Message m{Command::Rhs2Info, d.identity, d.rhs_id};
        send_if_open(s, p, d.lhs_fd, std::move(m));
    }

    void await(DaemonState& d, FileDescriptor fd, Command cmd) const {
        if (!blocking_reads_) return;
        d.awaited_fd = fd;
        d.awaited_cmd = cmd;
    }

    Variant variant_;
    bool blocking_reads_;
    std::vector<Identity> registry_;
};

}  // namespace mpdcheck
