#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mpdcheck/encoding.hpp"

namespace mpdcheck {

using Pid = int;
inline constexpr Pid kUnowned = -1;

/// Listening endpoint of one daemon: an opaque (host, port) pair.
struct Identity {
    std::uint16_t host = 0;
    std::uint16_t port = 0;

    friend auto operator<=>(const Identity&, const Identity&) = default;
};

inline std::string to_string(const Identity& id) {
    return "h" + std::to_string(id.host) + ":" + std::to_string(id.port);
}

inline std::string to_string(const std::optional<Identity>& id) {
    return id ? to_string(*id) : std::string("none");
}

enum class Command : std::uint8_t {
    RhsInfoRequest,
    RhsInfoReturn,
    NewRhs,
    NewLhs,
    ReconnectRhs,
    Rhs2Info,
    TraceReq,
    TraceDone,
    BarrierIn,
    BarrierOut,
};

inline constexpr std::string_view kCommandNames[] = {
    "rhs_info_request", "rhs_info_return", "new_rhs",  "new_lhs",   "reconnect_rhs",
    "rhs2info",         "trace_req",       "trace_done", "barrier_in", "barrier_out",
};

inline std::string_view to_string(Command cmd) {
    return kCommandNames[static_cast<std::size_t>(cmd)];
}

inline std::optional<Command> parse_command(std::string_view name) {
    for (std::size_t i = 0; i < std::size(kCommandNames); ++i) {
        if (kCommandNames[i] == name) return static_cast<Command>(i);
    }
    return std::nullopt;
}

// Payload usage per command:
//   rhs_info_request  subject = requester
//   rhs_info_return   subject = identity of the answering daemon (D-right)
//   new_rhs, new_lhs  subject = sender
//   reconnect_rhs     subject = D-right
//   rhs2info          subject = identity the addressee has as its rhs, value = new rhs2
//   trace_req/done    subject = initiator, trail = identities collected so far
struct Message {
    Command cmd{};
    std::optional<Identity> subject;
    std::optional<Identity> value;
    std::uint8_t hops = 0;
    std::vector<Identity> trail;

    friend bool operator==(const Message&, const Message&) = default;
};

inline void encode(ByteWriter& w, const std::optional<Identity>& id) {
    w.flag(id.has_value());
    if (id) {
        w.u16(id->host);
        w.u16(id->port);
    }
}

inline void encode(ByteWriter& w, const Message& m) {
    w.u8(static_cast<std::uint8_t>(m.cmd));
    encode(w, m.subject);
    encode(w, m.value);
    w.u8(m.hops);
    w.u8(static_cast<std::uint8_t>(m.trail.size()));
    for (const auto& id : m.trail) encode(w, std::optional<Identity>(id));
}

}  // namespace mpdcheck
