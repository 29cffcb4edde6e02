#pragma once

#include <stdexcept>
#include <string>

namespace hatsc {

// Error categories. The CLI and the C API map them onto stable codes:
// usage -> 2, data/integrity -> 3, numeric -> 4.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hatsc
