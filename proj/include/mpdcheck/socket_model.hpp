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

namespace mpdcheck {

/// Index into the descriptor table. INVALID_FD lies outside [0, CONN_MAX).
struct FileDescriptor {
    std::uint16_t index = 0xFFFF;

    constexpr bool valid() const { return index != 0xFFFF; }

    friend auto operator<=>(const FileDescriptor&, const FileDescriptor&) = default;
};

inline constexpr FileDescriptor INVALID_FD{};

inline std::string to_string(FileDescriptor fd) {
    return fd.valid() ? std::to_string(fd.index) : std::string("-");
}

enum class UseFlag : std::uint8_t {
    Free,
    AwaitAccept,
    New,
    Lhs,
    Rhs,
    Stale,  // replaced lhs that still holds unread messages; closed on EOF
};

inline std::string_view to_string(UseFlag flag) {
    switch (flag) {
        case UseFlag::Free: return "FREE";
        case UseFlag::AwaitAccept: return "AWAIT_ACCEPT";
        case UseFlag::New: return "NEW";
        case UseFlag::Lhs: return "LHS";
        case UseFlag::Rhs: return "RHS";
        case UseFlag::Stale: return "STALE";
    }
    return "?";
}

struct SocketDescriptor {
    FileDescriptor other_fd = INVALID_FD;
    Pid owner_pid = kUnowned;
    UseFlag use_flag = UseFlag::Free;

    bool allocated() const { return use_flag != UseFlag::Free; }

    friend bool operator==(const SocketDescriptor&, const SocketDescriptor&) = default;
};

enum class ReadyReason : std::uint8_t { Message, ConnectPending, Eof };

inline std::string_view to_string(ReadyReason r) {
    switch (r) {
        case ReadyReason::Message: return "message";
        case ReadyReason::ConnectPending: return "connect";
        case ReadyReason::Eof: return "eof";
    }
    return "?";
}

struct ReadyEvent {
    FileDescriptor fd;
    ReadyReason reason{};

    friend bool operator==(const ReadyEvent&, const ReadyEvent&) = default;
};

/// The bottom tier: a fixed array of FIFO channels, one per descriptor, plus
/// the descriptor table and one select bit per process. All of it is plain
/// value state so that a copy is a complete snapshot.
class SocketTable {
public:
    SocketTable() = default;

    SocketTable(std::size_t conn_max, std::size_t qsz, std::size_t num_procs)
        : descriptors_(conn_max), channels_(conn_max), qsz_(qsz),
          select_bits_(num_procs, false), dead_(num_procs, false) {}

    std::size_t conn_max() const { return descriptors_.size(); }
    std::size_t qsz() const { return qsz_; }
    std::size_t num_procs() const { return select_bits_.size(); }

    const SocketDescriptor& descriptor(FileDescriptor fd) const { return descriptors_.at(fd.index); }
    const std::vector<Message>& channel(FileDescriptor fd) const { return channels_.at(fd.index); }

    bool select_bit(Pid pid) const { return select_bits_.at(static_cast<std::size_t>(pid)); }
    bool dead(Pid pid) const { return dead_.at(static_cast<std::size_t>(pid)); }

    std::size_t allocated_count() const {
        return static_cast<std::size_t>(std::count_if(descriptors_.begin(), descriptors_.end(),
                                                      [](const auto& d) { return d.allocated(); }));
    }

    /// Descriptors currently owned by pid, ascending.
    std::vector<FileDescriptor> owned_by(Pid pid) const {
        std::vector<FileDescriptor> out;
        for (std::size_t i = 0; i < descriptors_.size(); ++i) {
            if (descriptors_[i].allocated() && descriptors_[i].owner_pid == pid) out.push_back(fd_at(i));
        }
        return out;
    }

    /// True while the other endpoint of fd has not been closed.
    bool peer_open(FileDescriptor fd) const {
        return fd.valid() && descriptor(fd).allocated() && descriptor(fd).other_fd.valid();
    }

    // Client allocates both ends; the server end waits for accept.
    FileDescriptor connect(Pid client_pid, Pid listener_pid, UseFlag client_flag = UseFlag::New) {
        check_pid(client_pid);
        check_pid(listener_pid);
        if (conn_max() - allocated_count() < 2) {
            throw ModelError("descriptor table exhausted (CONN_MAX=" + std::to_string(conn_max()) + ")");
        }
        const FileDescriptor server = allocate();
        auto& s = descriptors_[server.index];
        s.owner_pid = listener_pid;
        s.use_flag = UseFlag::AwaitAccept;
        const FileDescriptor client = allocate();
        auto& c = descriptors_[client.index];
        c.owner_pid = client_pid;
        c.use_flag = client_flag;
        s.other_fd = client;
        c.other_fd = server;
        wake(listener_pid);
        return client;
    }

    FileDescriptor accept(Pid server_pid) {
        for (std::size_t i = 0; i < descriptors_.size(); ++i) {
            auto& d = descriptors_[i];
            if (d.use_flag == UseFlag::AwaitAccept && d.owner_pid == server_pid) {
                d.use_flag = UseFlag::New;
                return fd_at(i);
            }
        }
        throw ContractViolation("accept: no pending connect for pid " + std::to_string(server_pid));
    }

    void write(Pid caller, FileDescriptor fd, Message msg) {
        check_owner(caller, fd, "write");
        const FileDescriptor peer = descriptor(fd).other_fd;
        if (!peer.valid()) {
            throw BrokenConnection("write on fd " + to_string(fd) + ": peer closed");
        }
        auto& queue = channels_[peer.index];
        if (queue.size() >= qsz_) {
            throw ModelError("channel " + to_string(peer) + " full (QSZ=" + std::to_string(qsz_) + ")");
        }
        queue.push_back(std::move(msg));
        wake(descriptor(peer).owner_pid);
    }

    Message read(Pid caller, FileDescriptor fd) {
        check_owner(caller, fd, "read");
        auto& queue = channels_[fd.index];
        if (queue.empty()) throw ContractViolation("read on empty channel " + to_string(fd));
        Message head = std::move(queue.front());
        queue.erase(queue.begin());
        return head;
    }

    void close(Pid caller, FileDescriptor fd) {
        check_owner(caller, fd, "close");
        auto& d = descriptors_[fd.index];
        if (d.other_fd.valid()) {
            auto& peer = descriptors_[d.other_fd.index];
            peer.other_fd = INVALID_FD;
            wake(peer.owner_pid);
        }
        d = SocketDescriptor{};
        channels_[fd.index].clear();
    }

    /// Changes the role flag of an owned descriptor (LHS/RHS/...).
    void set_flag(Pid caller, FileDescriptor fd, UseFlag flag) {
        check_owner(caller, fd, "set_flag");
        if (flag == UseFlag::Free || flag == UseFlag::AwaitAccept) {
            throw ContractViolation("set_flag: " + std::string(to_string(flag)) + " is not a role");
        }
        descriptors_[fd.index].use_flag = flag;
    }

    /// Wake predicate per descriptor, in fd order. One event per descriptor:
    /// a pending connect is reported before queued data, and EOF only once the
    /// channel has been drained.
    std::vector<ReadyEvent> ready_events(Pid pid) const {
        std::vector<ReadyEvent> out;
        if (dead(pid)) return out;
        for (std::size_t i = 0; i < descriptors_.size(); ++i) {
            const auto& d = descriptors_[i];
            if (!d.allocated() || d.owner_pid != pid) continue;
            if (auto reason = ready_reason(i)) out.push_back({fd_at(i), *reason});
        }
        return out;
    }

    /// Blocks (returns nothing) while the bit is clear; otherwise returns the
    /// ready set and clears the bit. Callers re-derive it with rearm().
    std::vector<ReadyEvent> select(Pid pid) {
        check_pid(pid);
        if (!select_bit(pid)) return {};
        select_bits_[static_cast<std::size_t>(pid)] = false;
        return ready_events(pid);
    }

    void rearm(Pid pid) {
        check_pid(pid);
        select_bits_[static_cast<std::size_t>(pid)] = !ready_events(pid).empty();
    }

    /// Host failure: every descriptor of pid is closed, pid never runs again.
    /// Returns the number of descriptors that were closed.
    std::size_t inject_failure(Pid pid) {
        check_pid(pid);
        if (dead(pid)) return 0;
        const auto fds = owned_by(pid);
        for (const auto fd : fds) close(pid, fd);
        dead_[static_cast<std::size_t>(pid)] = true;
        select_bits_[static_cast<std::size_t>(pid)] = false;
        return fds.size();
    }

    /// Structural invariants of the table; returns a description of the first
    /// one that does not hold.
    std::optional<std::string> check_invariants() const {
        for (std::size_t i = 0; i < descriptors_.size(); ++i) {
            const auto& d = descriptors_[i];
            const std::string at = "fd " + std::to_string(i) + ": ";
            if (!d.allocated()) {
                if (d.owner_pid != kUnowned || d.other_fd.valid()) return at + "free descriptor has owner or peer";
                if (!channels_[i].empty()) return at + "free descriptor holds messages";
                continue;
            }
            if (d.owner_pid < 0 || static_cast<std::size_t>(d.owner_pid) >= num_procs()) {
                return at + "owner out of range";
            }
            if (dead(d.owner_pid)) return at + "owned by a dead process";
            if (channels_[i].size() > qsz_) return at + "channel over capacity";
            if (d.other_fd.valid()) {
                if (d.other_fd.index >= descriptors_.size()) return at + "peer out of range";
                const auto& p = descriptors_[d.other_fd.index];
                if (!p.allocated()) return at + "peer descriptor is free";
                if (p.other_fd.valid() && p.other_fd != fd_at(i)) return at + "asymmetric link";
            }
        }
        for (std::size_t p = 0; p < num_procs(); ++p) {
            const bool has_events = !ready_events(static_cast<Pid>(p)).empty();
            if (select_bits_[p] != has_events) {
                return "pid " + std::to_string(p) + ": select bit " + (select_bits_[p] ? "set" : "clear") +
                       " but wake condition " + (has_events ? "holds" : "absent");
            }
        }
        return std::nullopt;
    }

    // fd=<i> other=<j|-> owner=<pid> flag=<name> queue=[cmds...]
    std::string dump() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < descriptors_.size(); ++i) {
            const auto& d = descriptors_[i];
            if (!d.allocated()) continue;
            os << "fd=" << i << " other=" << to_string(d.other_fd) << " owner=" << d.owner_pid
               << " flag=" << to_string(d.use_flag) << " queue=[";
            for (std::size_t m = 0; m < channels_[i].size(); ++m) {
                os << (m ? "," : "") << to_string(channels_[i][m].cmd);
            }
            os << "]\n";
        }
        return os.str();
    }

    void encode(ByteWriter& w) const {
        for (std::size_t i = 0; i < descriptors_.size(); ++i) {
            const auto& d = descriptors_[i];
            w.u8(static_cast<std::uint8_t>(d.use_flag));
            if (!d.allocated()) continue;
            w.fd(d.other_fd.index);
            w.u8(static_cast<std::uint8_t>(d.owner_pid));
            w.u8(static_cast<std::uint8_t>(channels_[i].size()));
            for (const auto& m : channels_[i]) mpdcheck::encode(w, m);
        }
        for (std::size_t p = 0; p < num_procs(); ++p) {
            w.u8(static_cast<std::uint8_t>((select_bits_[p] ? 1 : 0) | (dead_[p] ? 2 : 0)));
        }
    }

    friend bool operator==(const SocketTable&, const SocketTable&) = default;

private:
    static FileDescriptor fd_at(std::size_t i) { return FileDescriptor{static_cast<std::uint16_t>(i)}; }

    std::optional<ReadyReason> ready_reason(std::size_t i) const {
        const auto& d = descriptors_[i];
        if (d.use_flag == UseFlag::AwaitAccept) return ReadyReason::ConnectPending;
        if (!channels_[i].empty()) return ReadyReason::Message;
        if (!d.other_fd.valid()) return ReadyReason::Eof;
        return std::nullopt;
    }

    FileDescriptor allocate() {
        for (std::size_t i = 0; i < descriptors_.size(); ++i) {
            if (!descriptors_[i].allocated()) {
                descriptors_[i].use_flag = UseFlag::New;
                return fd_at(i);
            }
        }
        throw ModelError("descriptor table exhausted (CONN_MAX=" + std::to_string(conn_max()) + ")");
    }

    void check_pid(Pid pid) const {
        if (pid < 0 || static_cast<std::size_t>(pid) >= num_procs()) {
            throw ContractViolation("pid " + std::to_string(pid) + " out of range");
        }
    }

    void check_owner(Pid caller, FileDescriptor fd, const char* op) const {
        if (!fd.valid() || fd.index >= descriptors_.size()) {
            throw ContractViolation(std::string(op) + ": invalid descriptor");
        }
        const auto& d = descriptors_[fd.index];
        if (!d.allocated() || d.owner_pid != caller) {
            throw ContractViolation(std::string(op) + ": pid " + std::to_string(caller) + " does not own fd " +
                                    to_string(fd));
        }
    }

    void wake(Pid pid) {
        if (pid >= 0 && !dead(pid)) select_bits_[static_cast<std::size_t>(pid)] = true;
    }

    std::vector<SocketDescriptor> descriptors_;
    std::vector<std::vector<Message>> channels_;
    std::size_t qsz_ = 0;
    std::vector<bool> select_bits_;
    std::vector<bool> dead_;
};

}  // namespace mpdcheck
