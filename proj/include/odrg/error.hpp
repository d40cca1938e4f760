#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace odrg {

// Base for every error the simulator raises. Architectural traps inside the
// simulated cores are modeled state, never exceptions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownTarget : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

class BusError : public Error {
 public:
  using Error::Error;
};

class ImageTooLarge : public Error {
 public:
  using Error::Error;
};

class Timeout : public Error {
 public:
  using Error::Error;
};

class InvalidFault : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Assembler diagnostics carry the 1-based source line.
class AsmError : public Error {
 public:
  enum class Kind { UnknownMnemonic, UndefinedLabel, RangeError, Syntax };

  AsmError(Kind kind, std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), kind_(kind), line_(line) {}

  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

}  // namespace odrg
