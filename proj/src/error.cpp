#include "infoqa/error.hpp"

namespace infoqa {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::domain: return "domain";
    case ErrorCategory::config: return "config";
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::data: return "data";
    case ErrorCategory::io: return "io";
    case ErrorCategory::numeric: return "numeric";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::usage: return 2;
    case ErrorCategory::config: return 3;
    case ErrorCategory::io: return 4;
    case ErrorCategory::data: return 5;
    case ErrorCategory::numeric: return 6;
    case ErrorCategory::shape: return 7;
    case ErrorCategory::domain: return 8;
  }
  return 1;
}

}  // namespace infoqa
