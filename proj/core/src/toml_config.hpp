#pragma once

// toml++ is compiled once in toml_impl.cpp. TOML 1.1 inline tables (newlines
// and trailing commas) are enabled because real manifests wrap long
// sub-region definitions across lines.
#define TOML_HEADER_ONLY 0
#define TOML_ENABLE_UNRELEASED_FEATURES 1
#define TOML_EXCEPTIONS 1
#include <toml.hpp>
