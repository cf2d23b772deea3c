#pragma once

#include <stdexcept>
#include <string>

namespace astod {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kIo = 2,
  kIntegrity = 3,
  kConfig = 4,
};

/// Base class for every error raised by the toolkit. Each error carries the
/// exit code the CLI maps it to.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, ExitCode::kIo) {}
};

// Malformed document or a record violating a schema invariant.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what, ExitCode::kIo) {}
};

class UnknownView : public ParseError {
 public:
  explicit UnknownView(const std::string& tag, const std::string& where = "")
      : ParseError((where.empty() ? "" : where + ": ") + "unknown view tag '" + tag + "'") {}
};

// Dangling or duplicated ids.
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what)
      : Error(what, ExitCode::kIntegrity) {}
};

class DuplicateImageId : public IntegrityError {
 public:
  explicit DuplicateImageId(long long id)
      : IntegrityError("image id " + std::to_string(id) +
                       " present in both labeled and pseudo-labeled sets"),
        id_(id) {}

  long long image_id() const noexcept { return id_; }

 private:
  long long id_;
};

class MissingClassThreshold : public IntegrityError {
 public:
  explicit MissingClassThreshold(long long category_id)
      : IntegrityError("no threshold for category " +
                       std::to_string(category_id)),
        category_id_(category_id) {}

  long long category_id() const noexcept { return category_id_; }

 private:
  long long category_id_;
};

// No score fell inside the histogram range, so no threshold exists.
class AllEmptyHistogram : public Error {
 public:
  AllEmptyHistogram() : Error("histogram has no binned scores", ExitCode::kIntegrity) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(what, ExitCode::kConfig) {}
};

class InvalidThresholdPair : public ConfigError {
 public:
  InvalidThresholdPair(double low, double high)
      : ConfigError("invalid threshold pair: low " + std::to_string(low) +
                    " must be below high " + std::to_string(high)) {}
};

}  // namespace astod
