#ifndef TFSCOPE_ERROR_HPP
#define TFSCOPE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace tfscope {

/// Machine-readable category attached to every exception thrown by the library.
enum class Errc {
    io,
    format,
    size_mismatch,
    non_finite,
    invalid_argument,
    out_of_range,
    empty_selection,
    degenerate_variable,
    isolated_node,
    convergence,
    class_too_small,
    degenerate_endmembers,
    width_mismatch,
    undefined_misfit,
};

inline std::string_view errc_name(Errc code) {
    switch (code) {
    case Errc::io: return "io";
    case Errc::format: return "format";
    case Errc::size_mismatch: return "size_mismatch";
    case Errc::non_finite: return "non_finite";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::out_of_range: return "out_of_range";
    case Errc::empty_selection: return "empty_selection";
    case Errc::degenerate_variable: return "degenerate_variable";
    case Errc::isolated_node: return "isolated_node";
    case Errc::convergence: return "convergence";
    case Errc::class_too_small: return "class_too_small";
    case Errc::degenerate_endmembers: return "degenerate_endmembers";
    case Errc::width_mismatch: return "width_mismatch";
    case Errc::undefined_misfit: return "undefined_misfit";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, Errc code, const std::string& what) {
    if (!condition) {
        fail(code, what);
    }
}

} // namespace tfscope

#endif
