#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "mpdcheck/encoding.hpp"
#include "mpdcheck/error.hpp"
#include "mpdcheck/message.hpp"
#include "mpdcheck/socket_model.hpp"

namespace mpdcheck {

struct ManagerState {
    Pid pid = 0;
    int rank = 0;  // 0 is the leader
    FileDescriptor lhs_fd = INVALID_FD;
    FileDescriptor rhs_fd = INVALID_FD;
    bool holding_barrier_in = false;
    std::uint8_t barrier_in_sent = 0;
    std::uint8_t barrier_out_sent = 0;

    bool leader() const { return rank == 0; }

    friend bool operator==(const ManagerState&, const ManagerState&) = default;
};

/// The two client bits per manager, as bit arrays indexed by pid.
struct BarrierBits {
    std::uint64_t client_barrier_in = 0;
    std::uint64_t client_barrier_out = 0;
    std::uint64_t all_bits = 0;

    static BarrierBits for_size(std::size_t n) {
        BarrierBits b;
        b.all_bits = n >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1);
        return b;
    }

    static std::uint64_t bit(Pid p) { return std::uint64_t{1} << p; }
    bool in(Pid p) const { return (client_barrier_in & bit(p)) != 0; }
    bool out(Pid p) const { return (client_barrier_out & bit(p)) != 0; }

    friend bool operator==(const BarrierBits&, const BarrierBits&) = default;
};

/// Global state of a manager-barrier scenario.
struct ManagerSystem {
    SocketTable sockets;
    std::vector<ManagerState> managers;
    BarrierBits bits;

    std::uint64_t holding_barrier_in() const {
        std::uint64_t h = 0;
        for (const auto& m : managers) {
            if (m.holding_barrier_in) h |= BarrierBits::bit(m.pid);
        }
        return h;
    }

    friend bool operator==(const ManagerSystem&, const ManagerSystem&) = default;

    void encode(ByteWriter& w) const {
        sockets.encode(w);
        for (const auto& m : managers) {
            w.fd(m.lhs_fd.index);
            w.fd(m.rhs_fd.index);
            w.u8(static_cast<std::uint8_t>((m.holding_barrier_in ? 1 : 0) | (m.barrier_in_sent << 1) |
                                           (m.barrier_out_sent << 4)));
        }
        w.u64(bits.client_barrier_in);
        w.u64(bits.client_barrier_out);
    }

    std::string dump() const {
        std::ostringstream os;
        os << sockets.dump();
        for (const auto& m : managers) {
            os << "manager=" << m.pid << " rank=" << m.rank << " lhs=" << to_string(m.lhs_fd)
               << " rhs=" << to_string(m.rhs_fd) << " in=" << bits.in(m.pid) << " out=" << bits.out(m.pid)
               << " holding=" << m.holding_barrier_in << "\n";
        }
        return os.str();
    }
};

/// Barrier over a hard-coded manager ring; clients are the two bit arrays.
class BarrierProtocol {
public:
    /// Managers 0..n-1 wired i -> i+1 (mod n); pid 0 leads.
    ManagerSystem hard_coded_ring(std::size_t n) const {
        ManagerSystem s;
        s.sockets = SocketTable(2 * n, n, n);
        s.bits = BarrierBits::for_size(n);
        for (std::size_t i = 0; i < n; ++i) {
            ManagerState m;
            m.pid = static_cast<Pid>(i);
            m.rank = static_cast<int>(i);
            s.managers.push_back(m);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const Pid self = static_cast<Pid>(i);
            const Pid next = static_cast<Pid>((i + 1) % n);
            s.managers[i].rhs_fd = s.sockets.connect(self, next, UseFlag::Rhs);
            s.managers[static_cast<std::size_t>(next)].lhs_fd = s.sockets.accept(next);
            s.sockets.set_flag(next, s.managers[static_cast<std::size_t>(next)].lhs_fd, UseFlag::Lhs);
        }
        for (std::size_t i = 0; i < n; ++i) s.sockets.rearm(static_cast<Pid>(i));
        return s;
    }

    void client_reaches_barrier(ManagerSystem& s, Pid p) const {
        auto& m = manager(s, p);
        if (s.bits.in(p)) throw ContractViolation("client of manager " + std::to_string(p) + " arrived twice");
        s.bits.client_barrier_in |= BarrierBits::bit(p);
        if (m.leader()) {
            send(s, m, Command::BarrierIn);
        } else if (m.holding_barrier_in) {
            m.holding_barrier_in = false;
            send(s, m, Command::BarrierIn);
        }
    }

    void on_event(ManagerSystem& s, Pid p, const ReadyEvent& ev) const {
        if (ev.reason != ReadyReason::Message) {
            throw ProtocolViolation("manager " + std::to_string(p) + " saw an unexpected " +
                                    std::string(to_string(ev.reason)));
        }
        const Message msg = s.sockets.read(p, ev.fd);
        switch (msg.cmd) {
            case Command::BarrierIn: handle_barrier_in(s, p); break;
            case Command::BarrierOut: handle_barrier_out(s, p); break;
            default:
                throw ProtocolViolation("manager received " + std::string(to_string(msg.cmd)));
        }
    }

    void handle_barrier_in(ManagerSystem& s, Pid p) const {
        auto& m = manager(s, p);
        if (s.bits.in(p)) {
            send(s, m, m.leader() ? Command::BarrierOut : Command::BarrierIn);
        } else {
            m.holding_barrier_in = true;
        }
    }

    // The leader releases its own client when barrier_out comes back to it.
    void handle_barrier_out(ManagerSystem& s, Pid p) const {
        auto& m = manager(s, p);
        if (!s.bits.in(p)) throw ProtocolViolation("barrier_out reached a manager whose client is not in");
        if (s.bits.out(p)) throw ProtocolViolation("barrier_out delivered twice to manager " + std::to_string(p));
        s.bits.client_barrier_out |= BarrierBits::bit(p);
        if (!m.leader()) send(s, m, Command::BarrierOut);
    }

private:
    static ManagerState& manager(ManagerSystem& s, Pid p) { return s.managers.at(static_cast<std::size_t>(p)); }

    static void send(ManagerSystem& s, ManagerState& m, Command cmd) {
        auto& counter = cmd == Command::BarrierIn ? m.barrier_in_sent : m.barrier_out_sent;
        if (counter >= 1) {
            throw ProtocolViolation("manager " + std::to_string(m.pid) + " sent " + std::string(to_string(cmd)) +
                                    " twice");
        }
        ++counter;
        s.sockets.write(m.pid, m.rhs_fd, Message{cmd});
    }
};

}  // namespace mpdcheck
