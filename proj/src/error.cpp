#include "ipcir/error.hpp"

namespace ipcir {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config error";
    case ErrorKind::argument: return "argument error";
    case ErrorKind::format: return "format error";
    case ErrorKind::data: return "data error";
    case ErrorKind::role: return "role error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::resolution: return "resolution error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::protocol: return "protocol error";
    case ErrorKind::size: return "size error";
  }
  return "error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::argument:
    case ErrorKind::size:
      return 2;
    case ErrorKind::protocol:
      return 4;
    default:
      return 3;
  }
}

}  // namespace ipcir
