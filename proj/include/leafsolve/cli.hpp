#pragma once

// Batch driver: `leafsolve <subcommand> --manifest <path> [flags]`.
// Exit codes: 0 all checks pass, 1 some check failed, 2 input error.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace leafsolve {

struct Diagnostic {
  std::string pointer;  // JSON pointer into the manifest ("" for the document)
  std::string message;
  std::optional<std::size_t> offset;  // byte offset in an expression string or the document
};

/// Schema, reference, dimension and expression checks without computation.
std::vector<Diagnostic> validate_manifest(const std::string& text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// One RFC-4180 record (fields quoted when they contain ',', '"', CR or LF),
/// terminated by CRLF.
std::string csv_record(const std::vector<std::string>& fields);

/// Runs the driver on argv-style arguments (args[0] is the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace leafsolve
