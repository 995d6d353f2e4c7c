#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace hcfs {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/axis mismatches. Message names the offending axes.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Filesystem / OS level failures (missing file, short write).
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Malformed input bytes: bad magic, version mismatch, truncated payload.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Bitstream cannot be decoded (exhausted or inconsistent).
class DecodeError : public FormatError {
 public:
  explicit DecodeError(const std::string& msg) : FormatError(msg) {}
};

namespace detail {
inline void msg_concat(std::ostringstream&) {}
template <class T, class... Rest>
void msg_concat(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  msg_concat(os, rest...);
}
}  // namespace detail

template <class E = Error, class... Parts>
[[noreturn]] void fail(const Parts&... parts) {
  std::ostringstream os;
  detail::msg_concat(os, parts...);
  throw E(os.str());
}

template <class E = Error, class... Parts>
void require(bool cond, const Parts&... parts) {
  if (!cond) fail<E>(parts...);
}

}  // namespace hcfs
