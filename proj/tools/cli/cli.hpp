#pragma once

namespace cxnprobe::cli {

// Exit codes: 0 success, 1 usage error, 2 data error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

int run(int argc, const char* const* argv);

}  // namespace cxnprobe::cli
