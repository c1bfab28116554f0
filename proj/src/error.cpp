#include "corrdyn/error.hpp"

#include <fmt/format.h>

namespace corrdyn {

FormatError::FormatError(const std::string& file, std::size_t line, const std::string& what)
    : DataError(fmt::format("format error in {} at line {}: {}", file, line, what)), line_(line) {}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kData:
      return 3;
    case ErrorKind::kNumerical:
      return 4;
  }
  return 1;
}

}  // namespace corrdyn
