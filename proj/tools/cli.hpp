#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace diffcbf::cli {

/// Name of the variable that supplies the output directory when --out is
/// not given.
inline constexpr const char* kOutDirEnv = "DIFFCBF_OUT_DIR";

/// Runs one command. Exit codes: 0 success, 1 check failure, 2 usage or
/// configuration error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace diffcbf::cli
