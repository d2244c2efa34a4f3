#include "mbmf/common.hpp"

#include <cstdio>

namespace mbmf {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace mbmf
