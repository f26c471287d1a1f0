#ifndef FEWREC_ERRORS_HPP
#define FEWREC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fewrec {

// Error categories map 1:1 onto process exit codes and C API status codes.
enum class ErrorCode : int {
    ok = 0,
    config = 2,   // bad parameters, unknown keys/classes, incompatible variants
    data = 3,     // malformed files, dimension mismatches, missing entries
    numeric = 4,  // divisions by zero, non-finite results
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorCode::config, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorCode::data, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

}  // namespace fewrec

#endif
