#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace qvt::cli {

inline constexpr int kSchemaVersion = 1;

inline constexpr int kExitOk         = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumeric    = 3;

// Runs one `qvt` subcommand. `args` excludes the program name. The run
// report goes to the --report path when given and to `out` otherwise;
// usage text and diagnostics go to `err`.
int dispatch(const std::vector<std::string> & args, std::ostream & out, std::ostream & err);

}  // namespace qvt::cli
