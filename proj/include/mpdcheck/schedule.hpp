#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "mpdcheck/message.hpp"
#include "mpdcheck/socket_model.hpp"

namespace mpdcheck {

enum class Action : std::uint8_t {
    BeginInsertion,
    InjectFailure,
    ClientArrives,
    StartTrace,
};

inline constexpr std::string_view kActionNames[] = {
    "begin_insertion", "inject_failure", "client_reaches_barrier", "start_trace"};

inline std::string_view to_string(Action a) { return kActionNames[static_cast<std::size_t>(a)]; }

inline std::optional<Action> parse_action(std::string_view name) {
    for (std::size_t i = 0; i < std::size(kActionNames); ++i) {
        if (kActionNames[i] == name) return static_cast<Action>(i);
    }
    return std::nullopt;
}

enum class StepKind : std::uint8_t { Message, Connect, Eof, Action };

/// One scheduling choice: a ready event serviced by pid, or a spontaneous
/// action performed by pid. `command` is meaningful for Message steps and
/// `action` for Action steps.
struct ScheduleStep {
    Pid pid = 0;
    StepKind kind = StepKind::Action;
    FileDescriptor fd = INVALID_FD;
    Command command{};
    Action action{};

    friend bool operator==(const ScheduleStep& a, const ScheduleStep& b) {
        if (a.pid != b.pid || a.kind != b.kind || a.fd != b.fd) return false;
        if (a.kind == StepKind::Message) return a.command == b.command;
        if (a.kind == StepKind::Action) return a.action == b.action;
        return true;
    }

    static ScheduleStep event(Pid pid, ReadyEvent ev, Command head = {}) {
        ScheduleStep s;
        s.pid = pid;
        s.fd = ev.fd;
        switch (ev.reason) {
            case ReadyReason::Message: s.kind = StepKind::Message; s.command = head; break;
            case ReadyReason::ConnectPending: s.kind = StepKind::Connect; break;
            case ReadyReason::Eof: s.kind = StepKind::Eof; break;
        }
        return s;
    }

    static ScheduleStep spontaneous(Pid pid, Action a) {
        ScheduleStep s;
        s.pid = pid;
        s.kind = StepKind::Action;
        s.action = a;
        return s;
    }
};

inline std::string_view to_string(StepKind k) {
    switch (k) {
        case StepKind::Message: return "message";
        case StepKind::Connect: return "connect";
        case StepKind::Eof: return "eof";
        case StepKind::Action: return "action";
    }
    return "?";
}

// pid=<p> kind=<message|connect|eof|action> fd=<i|-> cmd=<name|->
inline std::string to_string(const ScheduleStep& s) {
    std::string cmd = "-";
    if (s.kind == StepKind::Message) cmd = std::string(to_string(s.command));
    if (s.kind == StepKind::Action) cmd = std::string(to_string(s.action));
    return "pid=" + std::to_string(s.pid) + " kind=" + std::string(to_string(s.kind)) + " fd=" + to_string(s.fd) +
           " cmd=" + cmd;
}

inline std::optional<ScheduleStep> parse_step(std::string_view line) {
    std::istringstream is{std::string(line)};
    std::string tok;
    std::optional<Pid> pid;
    std::optional<StepKind> kind;
    std::optional<FileDescriptor> fd;
    std::optional<std::string> cmd;
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) return std::nullopt;
        const auto key = tok.substr(0, eq);
        const auto val = tok.substr(eq + 1);
        try {
            if (key == "pid") {
                std::size_t used = 0;
                pid = std::stoi(val, &used);
                if (used != val.size()) return std::nullopt;
            } else if (key == "kind") {
                for (auto k : {StepKind::Message, StepKind::Connect, StepKind::Eof, StepKind::Action}) {
                    if (to_string(k) == val) kind = k;
                }
                if (!kind) return std::nullopt;
            } else if (key == "fd") {
                if (val == "-") {
                    fd = INVALID_FD;
                } else {
                    std::size_t used = 0;
                    const int v = std::stoi(val, &used);
                    if (used != val.size() || v < 0 || v >= 0xFFFF) return std::nullopt;
                    fd = FileDescriptor{static_cast<std::uint16_t>(v)};
                }
            } else if (key == "cmd") {
                cmd = val;
            } else {
                return std::nullopt;
            }
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    if (!pid || !kind || !fd || !cmd) return std::nullopt;
    ScheduleStep s;
    s.pid = *pid;
    s.kind = *kind;
    s.fd = *fd;
    if (s.kind == StepKind::Message) {
        auto c = parse_command(*cmd);
        if (!c) return std::nullopt;
        s.command = *c;
    } else if (s.kind == StepKind::Action) {
        auto a = parse_action(*cmd);
        if (!a) return std::nullopt;
        s.action = *a;
    } else if (*cmd != "-") {
        return std::nullopt;
    }
    return s;
}

}  // namespace mpdcheck
