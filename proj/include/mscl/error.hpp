#pragma once

#include <stdexcept>
#include <string>

namespace mscl {

// Every error carries a stable class name so the CLI can print a single
// machine-parsable line: "error: <class>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string error_class, const std::string &message)
      : std::runtime_error(message), class_(std::move(error_class)) {}

  const std::string &error_class() const { return class_; }

 private:
  std::string class_;
};

#define MSCL_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string &message) : Error(tag, message) {} \
  }

MSCL_DEFINE_ERROR(DimensionError, "dimension");
MSCL_DEFINE_ERROR(InvalidValueError, "invalid_value");
MSCL_DEFINE_ERROR(EmptyInputError, "empty_input");
MSCL_DEFINE_ERROR(LabelError, "label");
MSCL_DEFINE_ERROR(RankError, "rank");
MSCL_DEFINE_ERROR(AccumulationError, "accumulation");
MSCL_DEFINE_ERROR(OptimizerError, "optimizer");
MSCL_DEFINE_ERROR(ParameterError, "parameter");
MSCL_DEFINE_ERROR(FormatError, "format");
MSCL_DEFINE_ERROR(IoError, "io");
MSCL_DEFINE_ERROR(SchemaError, "schema");
MSCL_DEFINE_ERROR(InputError, "input");
MSCL_DEFINE_ERROR(LengthError, "length");
MSCL_DEFINE_ERROR(ShapeError, "shape");
MSCL_DEFINE_ERROR(ConfigError, "config");
MSCL_DEFINE_ERROR(CompatibilityError, "compatibility");
MSCL_DEFINE_ERROR(NumericError, "numeric");

#undef MSCL_DEFINE_ERROR

class BackendError : public Error {
 public:
  BackendError(const std::string &backend, const std::string &message)
      : Error("backend", backend + ": " + message), backend_(backend) {}
  const std::string &backend() const { return backend_; }

 private:
  std::string backend_;
};

}  // namespace mscl
