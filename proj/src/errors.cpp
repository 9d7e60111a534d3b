#include "nlspec/errors.hpp"

namespace nlspec {

const char *to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::usage: return "usage";
  case ErrorKind::config: return "config";
  case ErrorKind::sizing: return "sizing";
  case ErrorKind::out_of_range: return "out_of_range";
  case ErrorKind::convergence: return "convergence";
  case ErrorKind::self_adjointness: return "self_adjointness";
  case ErrorKind::conditioning: return "conditioning";
  case ErrorKind::hypothesis: return "hypothesis";
  case ErrorKind::prerequisite: return "prerequisite";
  case ErrorKind::io: return "io";
  }
  return "unknown";
}

} // namespace nlspec
