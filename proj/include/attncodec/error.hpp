#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace attncodec {

enum class ErrorKind {
    contract,  // precondition violated by the caller
    numeric,   // NaN/Inf produced
    format,    // malformed or unsupported file/stream
    corrupt,   // truncated or inconsistent stream
    io,        // file could not be opened/read/written
    load,      // model weights incomplete or mismatched
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::contract: return "contract";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::format: return "format";
        case ErrorKind::corrupt: return "corrupt";
        case ErrorKind::io: return "io";
        case ErrorKind::load: return "load";
    }
    return "unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

struct ContractError : Error {
    explicit ContractError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error(ErrorKind::format, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

struct LoadError : Error {
    explicit LoadError(const std::string& what) : Error(ErrorKind::load, what) {}
};

/// Stream ended early or decoded into an impossible state. `offset` is the
/// byte position (from the start of the stream) where decoding gave up.
class CorruptStreamError : public Error {
  public:
    CorruptStreamError(const std::string& what, std::size_t offset)
        : Error(ErrorKind::corrupt, what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractError(message);
}

}  // namespace attncodec
