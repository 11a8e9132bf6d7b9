#pragma once

// Command-line front end: train, quantize, sweep, simulate, report.
//
// Exit codes: 0 success, 1 usage error or rejected argument, 2 data error,
// 3 internal invariant violation.

#include <iosfwd>
#include <string>
#include <vector>

namespace qlstm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qlstm::cli
