// respr/common.h

// Copyright 2026  The respr Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef RESPR_COMMON_H_
#define RESPR_COMMON_H_

#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace respr {

// Base class for every error the library raises deliberately.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A file or byte stream does not match its declared format.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// The format is recognized but the codec/version is not handled.
class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& msg) : Error(msg) {}
};

// A caller-supplied argument violates a precondition.
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& msg) : Error(msg) {}
};

// Tensor shapes are incompatible for the requested operation.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// A NaN/Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// A serialized artifact is internally inconsistent (truncated, wrong sizes).
class CorruptionError : public Error {
 public:
  explicit CorruptionError(const std::string& msg) : Error(msg) {}
};

// Input is mathematically degenerate for the requested statistic (e.g. 0/0).
class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& msg) : Error(msg) {}
};

namespace internal {

class LogLine {
 public:
  explicit LogLine(const char* tag) { os_ << tag << " "; }
  ~LogLine() {
    os_ << "\n";
    std::cerr << os_.str();
  }
  template <typename T>
  LogLine& operator<<(const T& v) {
    os_ << v;
    return *this;
  }

 private:
  std::ostringstream os_;
};

}  // namespace internal

}  // namespace respr

#define RESPR_WARN ::respr::internal::LogLine("WARNING (respr):")
#define RESPR_LOG ::respr::internal::LogLine("LOG (respr):")

#endif  // RESPR_COMMON_H_
