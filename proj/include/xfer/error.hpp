#pragma once

#include <stdexcept>
#include <string>

namespace xfer {

// Categories map onto the CLI exit codes (1 usage, 2 data, 3 numeric).
enum class ErrorKind { Usage = 1, Data = 2, Numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

// Raised by kernels when operand shapes disagree; the message names the operand.
struct DimensionError : DataError {
  DimensionError(const std::string& op, const std::string& operand, long expected_rows,
                 long expected_cols, long rows, long cols)
      : DataError(op + ": operand '" + operand + "' has shape " + std::to_string(rows) + "x" +
                  std::to_string(cols) + ", expected " + std::to_string(expected_rows) + "x" +
                  std::to_string(expected_cols)),
        operand_name(operand) {}
  std::string operand_name;
};

}  // namespace xfer
