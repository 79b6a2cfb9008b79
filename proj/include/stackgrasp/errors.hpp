#pragma once

// Exception taxonomy shared by every module. All errors derive from Error so
// the CLI can map them onto exit codes in one place.

#include <stdexcept>
#include <string>
#include <vector>

namespace stackgrasp {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// tensor engine
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};
struct EmptyRoiError : Error {
  explicit EmptyRoiError(const std::string& msg) : Error(msg) {}
};
struct NonScalarError : Error {
  explicit NonScalarError(const std::string& msg) : Error(msg) {}
};

// planner
struct ConflictError : Error {
  explicit ConflictError(const std::string& msg) : Error(msg) {}
};
struct CycleError : Error {
  std::vector<std::vector<int>> cycles;
  explicit CycleError(const std::string& msg, std::vector<std::vector<int>> cs = {})
      : Error(msg), cycles(std::move(cs)) {}
};

// io / data
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(msg) {}
};
struct ValidationError : Error {
  std::vector<std::string> violations;
  explicit ValidationError(const std::string& msg, std::vector<std::string> vs = {})
      : Error(msg), violations(std::move(vs)) {}
};
struct CheckpointError : Error {
  explicit CheckpointError(const std::string& msg) : Error(msg) {}
};
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};
struct RetryExhaustedError : Error {
  explicit RetryExhaustedError(const std::string& msg) : Error(msg) {}
};

}  // namespace stackgrasp
