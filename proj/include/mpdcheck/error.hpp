#pragma once

#include <stdexcept>
#include <string>

namespace mpdcheck {

enum class ErrorKind {
    Model,          // the model was sized too small (CONN_MAX / QSZ)
    Broken,         // write on a half-closed connection
    Contract,       // caller broke an operation precondition
    Protocol,       // a handler observed an impossible protocol situation
    Configuration,  // scenario names something that does not exist
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Model: return "model-error";
        case ErrorKind::Broken: return "broken-connection";
        case ErrorKind::Contract: return "contract-violation";
        case ErrorKind::Protocol: return "protocol-violation";
        case ErrorKind::Configuration: return "configuration-error";
    }
    return "error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ModelError : Error {
    explicit ModelError(const std::string& what) : Error(ErrorKind::Model, what) {}
};

struct BrokenConnection : Error {
    explicit BrokenConnection(const std::string& what) : Error(ErrorKind::Broken, what) {}
};

struct ContractViolation : Error {
    explicit ContractViolation(const std::string& what) : Error(ErrorKind::Contract, what) {}
};

struct ProtocolViolation : Error {
    explicit ProtocolViolation(const std::string& what) : Error(ErrorKind::Protocol, what) {}
};

struct ConfigurationError : Error {
    explicit ConfigurationError(const std::string& what) : Error(ErrorKind::Configuration, what) {}
};

}  // namespace mpdcheck
