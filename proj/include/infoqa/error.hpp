#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace infoqa {

// Machine-readable failure classes. The CLI maps each to its own exit code.
enum class ErrorCategory {
  shape,    // primitive operands do not conform
  domain,   // value outside a primitive's domain (log of <= 0, exp overflow)
  config,   // bad RunConfig key or value
  usage,    // API precondition violated (empty set, batch of one, ...)
  data,     // corpus or checkpoint content is malformed
  io,       // file could not be opened / written
  numeric,  // training diverged (NaN / Inf)
};

std::string_view category_name(ErrorCategory category);
int exit_code(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

inline Error shape_error(const std::string& msg) { return {ErrorCategory::shape, msg}; }
inline Error domain_error(const std::string& msg) { return {ErrorCategory::domain, msg}; }
inline Error config_error(const std::string& msg) { return {ErrorCategory::config, msg}; }
inline Error usage_error(const std::string& msg) { return {ErrorCategory::usage, msg}; }
inline Error data_error(const std::string& msg) { return {ErrorCategory::data, msg}; }
inline Error io_error(const std::string& msg) { return {ErrorCategory::io, msg}; }
inline Error numeric_error(const std::string& msg) { return {ErrorCategory::numeric, msg}; }

}  // namespace infoqa
