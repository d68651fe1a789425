#pragma once

#include <stdexcept>
#include <string>

namespace gridloop {

/// Error taxonomy used across the library. The CLI maps Schema/Physics to
/// exit code 1 (invalid input) and Numeric/Io to exit code 2 (runtime).
class Error : public std::runtime_error {
public:
    enum class Kind { Schema, Physics, Numeric, Io };

    Error(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

    /// Single-line, greppable form: "error[schema]: <message>".
    std::string tagged() const {
        return std::string("error[") + kind_name(kind_) + "]: " + what();
    }

    static const char* kind_name(Kind k) {
        switch (k) {
            case Kind::Schema: return "schema";
            case Kind::Physics: return "physics";
            case Kind::Numeric: return "numeric";
            case Kind::Io: return "io";
        }
        return "unknown";
    }

    static Error schema(const std::string& msg) { return {Kind::Schema, msg}; }
    static Error physics(const std::string& msg) { return {Kind::Physics, msg}; }
    static Error numeric(const std::string& msg) { return {Kind::Numeric, msg}; }
    static Error io(const std::string& msg) { return {Kind::Io, msg}; }

private:
    Kind kind_;
};

}  // namespace gridloop
