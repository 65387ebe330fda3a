#pragma once

#include <string>
#include <vector>

namespace opfbench::cli {

/// Entry point shared by the binary and the tests. `args` excludes argv[0].
/// Exit codes: 0 ok, 1 validation/runtime failure, 2 usage error,
/// 3 expectations-file violation.
int run(const std::vector<std::string>& args);

}  // namespace opfbench::cli
