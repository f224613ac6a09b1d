#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "eioctl/manifest.hpp"

namespace eioctl::testing {

/// Absolute path of a file under the repository's fixtures/ or tests/ tree.
std::string source_path(std::string_view relative);
std::string read_file(const std::string& path);
std::shared_ptr<const Manifest> load_manifest(std::string_view relative);

}  // namespace eioctl::testing
