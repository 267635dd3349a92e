#ifndef XSTFT_COMMON_HPP_
#define XSTFT_COMMON_HPP_

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace xstft {

// Library errors are exceptions; the CLI maps them to exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

namespace detail {
[[noreturn]] inline void fail(const char* kind, const char* expr, const std::string& msg) {
  std::ostringstream os;
  os << kind << ": " << msg << " (" << expr << ")";
  if (std::string(kind) == "shape check failed") throw ShapeError(os.str());
  throw Error(os.str());
}
}  // namespace detail

#define XSTFT_CHECK(cond, msg)                                     \
  do {                                                             \
    if (!(cond)) ::xstft::detail::fail("check failed", #cond, (msg)); \
  } while (0)

#define XSTFT_CHECK_SHAPE(cond, msg)                                     \
  do {                                                                   \
    if (!(cond)) ::xstft::detail::fail("shape check failed", #cond, (msg)); \
  } while (0)

}  // namespace xstft

#endif  // XSTFT_COMMON_HPP_
