// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fdkd {

/// Broad failure classes. The CLI maps these onto exit codes and the
/// `error:<category>:` prefix.
enum class ErrorCategory {
  usage,
  config,
  dimension,
  spectrum,
  label,
  parse,
  data,
  pairing,
  checkpoint,
  numeric,
};

const char* category_name(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define FDKD_DEFINE_ERROR(Name, cat)                                 \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(cat, what) {}     \
  };

FDKD_DEFINE_ERROR(UsageError, ErrorCategory::usage)
FDKD_DEFINE_ERROR(ConfigError, ErrorCategory::config)
FDKD_DEFINE_ERROR(DimensionError, ErrorCategory::dimension)
FDKD_DEFINE_ERROR(SpectrumError, ErrorCategory::spectrum)
FDKD_DEFINE_ERROR(LabelError, ErrorCategory::label)
FDKD_DEFINE_ERROR(ParseError, ErrorCategory::parse)
FDKD_DEFINE_ERROR(DataError, ErrorCategory::data)
FDKD_DEFINE_ERROR(PairingError, ErrorCategory::pairing)
FDKD_DEFINE_ERROR(CheckpointError, ErrorCategory::checkpoint)
FDKD_DEFINE_ERROR(NumericError, ErrorCategory::numeric)

#undef FDKD_DEFINE_ERROR

}  // namespace fdkd
