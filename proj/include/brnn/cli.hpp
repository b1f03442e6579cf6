#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace brnn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitDiverged = 3;

// args excludes the program name. Relative file paths resolve against --out-dir.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace brnn
