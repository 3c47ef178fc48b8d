#pragma once

namespace usegmix::cli {

/// Entry point of the `usegmix` tool. Returns the process exit code:
/// 0 success, 1 runtime error, 2 usage error, 3 failure budget exceeded.
int run(int argc, char** argv);

}  // namespace usegmix::cli
