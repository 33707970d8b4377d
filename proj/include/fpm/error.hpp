#pragma once

#include <stdexcept>
#include <string>

namespace fpm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition on a function argument (bad shape, bad range, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or unknown configuration content.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written, or decoded.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A measurement stack does not belong to the illumination plan it is used with.
class DigestMismatch : public Error {
 public:
  using Error::Error;
};

/// An external denoiser process failed. Carries the captured standard error.
class PluginError : public Error {
 public:
  PluginError(const std::string& what, int exit_code, std::string stderr_text)
      : Error(what), exit_code_(exit_code), stderr_text_(std::move(stderr_text)) {}

  int exit_code() const noexcept { return exit_code_; }
  const std::string& stderr_text() const noexcept { return stderr_text_; }

 private:
  int exit_code_;
  std::string stderr_text_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace fpm
