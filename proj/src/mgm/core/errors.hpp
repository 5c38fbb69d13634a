// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace mgm {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape: " + msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};

class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& msg) : Error("scene: " + msg) {}
};

// Thrown when code touches a dense annotation that was stripped from a
// weakly labeled sample.
class StrippedAnnotationError : public Error {
 public:
  explicit StrippedAnnotationError(const std::string& msg)
      : Error("stripped annotation: " + msg) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& msg) : Error("divergence: " + msg) {}
};

}  // namespace mgm

#define MGM_CHECK(cond, msg)                      \
  do {                                            \
    if (!(cond)) {                                \
      std::ostringstream oss__;                   \
      oss__ << msg;                               \
      throw ::mgm::Error(oss__.str());            \
    }                                             \
  } while (0)

#define MGM_CHECK_T(cond, ex_type, msg)           \
  do {                                            \
    if (!(cond)) {                                \
      std::ostringstream oss__;                   \
      oss__ << msg;                               \
      throw ex_type(oss__.str());                 \
    }                                             \
  } while (0)
