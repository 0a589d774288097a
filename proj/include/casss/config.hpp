#pragma once

#include <map>
#include <string>

#include "casss/types.hpp"

namespace casss {

/// Parsed line-oriented configuration. Keys prefixed `scenario.` or `bench.`
/// are kept verbatim in `extra` for the harness and the benchmark runner.
struct ConfigFile {
  QuorumConfig quorum;
  std::map<std::string, std::string> extra;
  /// Line number of each key in `extra`, for error messages.
  std::map<std::string, std::size_t> lines;
};

/// Format, one directive per line, `#` starts a comment:
///
///   server 127.0.0.1:7000
///   client 127.0.0.1:7100
///   clients 5
///   f 2
///   k 6            (defaults to N - 2f)
///   variant CASSS  (MWABD | CAS | CASSS)
///   delta 16
///   maxint 18446744073709551615
///   maxinc 4294967295
///
/// Throws ConfigError naming the offending line.
ConfigFile parse_config(const std::string& text);
ConfigFile load_config(const std::string& path);

std::string format_config(const ConfigFile& cfg);

}  // namespace casss
