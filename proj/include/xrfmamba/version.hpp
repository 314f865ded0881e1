#pragma once

#include <string>

#ifndef XRF_CODE_VERSION
#define XRF_CODE_VERSION "unknown"
#endif

namespace xrf {

/// `git describe` of the build, injected by the build system.
inline std::string code_version() { return XRF_CODE_VERSION; }

}  // namespace xrf
