// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kgcrs {

enum class ErrorCode {
  load,           // malformed or dangling input
  schema,         // edge kind violates node kinds
  not_found,      // unknown node, token, or checkpoint
  kind,           // node has the wrong kind for the operation
  contract,       // caller broke a documented precondition
  parameter,      // infeasible numeric parameters
  ingest,         // dataset file references unknown ids
  training,       // training cannot start (e.g. empty pairwise set)
  undefined_metric,
  precondition,   // pipeline stage ordering
  config,
  conflict,       // feedback target does not match the pending prompt
  gone,           // session already terminal
  unavailable,    // service has no models loaded
  runtime,
};

constexpr std::string_view to_string(ErrorCode c) noexcept {
  switch (c) {
    case ErrorCode::load: return "load_error";
    case ErrorCode::schema: return "schema_error";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::kind: return "kind_error";
    case ErrorCode::contract: return "contract_violation";
    case ErrorCode::parameter: return "parameter_error";
    case ErrorCode::ingest: return "ingest_error";
    case ErrorCode::training: return "training_error";
    case ErrorCode::undefined_metric: return "undefined_metric";
    case ErrorCode::precondition: return "precondition_error";
    case ErrorCode::config: return "config_error";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::gone: return "gone";
    case ErrorCode::unavailable: return "service_unavailable";
    case ErrorCode::runtime: return "runtime_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace kgcrs
