#pragma once

#include <string>
#include <vector>

namespace rcal::cli {

// Runs the command line given its arguments (program name NOT included) and
// returns the process exit code:
//   0  success
//   1  usage or configuration error (bad flags, out-of-domain values,
//      unknown config keys)
//   2  runtime error (unreadable or malformed data files, unreachable
//      endpoints, training divergence)
//
// All output files are written under --out; every command also emits a
// "<command>_manifest.json" provenance record carrying the command name, the
// effective seed, the canonical system prompt's hash, and the files written.
// Reruns with identical arguments and config produce byte-identical files.
int run(const std::vector<std::string>& args);

}  // namespace rcal::cli
