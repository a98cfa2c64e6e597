#pragma once

#include <string>
#include <vector>

namespace cprel {

// Runs one CLI command. Returns 0 on success, 1 on validation or usage
// errors, 2 on runtime failures.
int cli_run(const std::vector<std::string>& args);

}  // namespace cprel
