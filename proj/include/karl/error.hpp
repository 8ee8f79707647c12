#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace karl {

enum class Errc {
  IdCollision,
  ValidationFailure,
  UnknownNode,
  KindMismatch,
  TypeMismatch,
  StatelessCycle,
  UnknownPort,
  SyntaxError,
  UnknownTag,
  IrreconcilableOverlap,
  StorageFull,
  UnknownEntry,
  UnknownInstance,
  AccessDenied,
  ExecutionFailure,
  Timeout,
  TransferFailure,
  WarmMismatch,
  Exhausted,
  DuplicateDevice,
  IncompleteDecisions,
  AuthFailure,
  UnknownDevice,
  UnknownRegistration,
  Cancelled,
  Transport,
  InvalidArgument,
};

std::string_view to_string(Errc code);

/// Every fallible operation in the hub throws this. `detail` carries the
/// machine-readable qualifier (e.g. "history" or a domain name for
/// AccessDenied, a byte offset for SyntaxError).
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string message, std::string detail = {})
      : std::runtime_error(std::move(message)),
        code_(code),
        detail_(std::move(detail)) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace karl
