#pragma once

#include <stdexcept>
#include <string>

namespace cvkt {

/// Base of every error thrown by the library. `code()` is the process exit
/// status the command-line tool uses for this class of failure.
class error : public std::runtime_error {
public:
  explicit error(const std::string& what, int code = 1) : std::runtime_error(what), code_(code) {}
  int code() const noexcept { return code_; }

private:
  int code_;
};

#define CVKT_DEFINE_ERROR(name, exit_code)                                                 \
  class name : public error {                                                              \
  public:                                                                                  \
    explicit name(const std::string& what) : error(#name ": " + what, exit_code) {}        \
  };

CVKT_DEFINE_ERROR(argument_error, 2)
CVKT_DEFINE_ERROR(dimension_error, 3)
CVKT_DEFINE_ERROR(bounds_error, 4)
CVKT_DEFINE_ERROR(domain_error, 5)
CVKT_DEFINE_ERROR(degenerate_input_error, 6)
CVKT_DEFINE_ERROR(degenerate_transform_error, 7)
CVKT_DEFINE_ERROR(degenerate_row_error, 8)
CVKT_DEFINE_ERROR(not_psd_error, 9)
CVKT_DEFINE_ERROR(config_error, 10)
CVKT_DEFINE_ERROR(validation_error, 11)
CVKT_DEFINE_ERROR(parse_error, 12)
CVKT_DEFINE_ERROR(io_error, 13)
CVKT_DEFINE_ERROR(infeasible_mask_error, 14)
CVKT_DEFINE_ERROR(selection_error, 15)

#undef CVKT_DEFINE_ERROR

}  // namespace cvkt
