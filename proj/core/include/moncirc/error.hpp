#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace moncirc {

/// Broad failure classes. The command-line tool maps these onto exit codes.
enum class ErrorKind {
  Domain,       // value outside the allowed domain (vocabulary, variable set)
  Dimension,    // tensor or block shapes disagree
  Contract,     // a documented precondition was violated by the caller
  Planning,     // no dimension schedule satisfies the request
  Unsupported,  // valid input the operation deliberately does not handle
  Refusal,      // a size guard tripped
  Data,         // malformed or illegal input data
  Config,       // bad configuration / usage
  Numeric,      // non-finite results where finite ones were required
  Io,           // filesystem / format errors
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& what);

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) raise(kind, what);
}

}  // namespace moncirc
