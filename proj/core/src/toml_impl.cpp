#define TOML_IMPLEMENTATION
#include "toml_config.hpp"
