#pragma once

#define KINHIER_VERSION_MAJOR 0
#define KINHIER_VERSION_MINOR 1
#define KINHIER_VERSION_PATCH 0
#define KINHIER_VERSION "0.1.0"

namespace kinhier {

inline const char* version() { return KINHIER_VERSION; }

}  // namespace kinhier
