// core/include/dropclass/error.h

// Copyright 2026  The dropclass Authors

// See the LICENSE file in the top-level directory for the full text.
//
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

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dropclass {

// Base for every error raised by the library. The category maps one-to-one
// onto the command-line exit codes (validation 2, io 3, numeric 4).
class Error : public std::runtime_error {
 public:
  enum class Category { kValidation, kIo, kNumeric };

  Error(Category category, const std::string &what)
      : std::runtime_error(what), category_(category) {}

  Category category() const { return category_; }

 private:
  Category category_;
};

// Bad parameters, shapes, labels, masks, empty inputs.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string &what)
      : Error(Category::kValidation, what) {}
};

class ShapeError : public ValidationError {
 public:
  explicit ShapeError(const std::string &what)
      : ValidationError("shape error: " + what) {}
};

class EmptyDataError : public ValidationError {
 public:
  explicit EmptyDataError(const std::string &what)
      : ValidationError("empty data: " + what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string &what) : Error(Category::kIo, what) {}
};

// Malformed binary file. Carries the byte offset where parsing failed.
class FormatError : public IoError {
 public:
  FormatError(const std::string &what, std::uint64_t offset)
      : IoError("format error at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string &what)
      : Error(Category::kNumeric, "numeric error: " + what) {}
};

}  // namespace dropclass
