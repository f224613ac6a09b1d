#include "fixtures.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace eioctl::testing {

std::string source_path(std::string_view relative) { return std::string(EIOCTL_SOURCE_DIR) + "/" + std::string(relative); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::shared_ptr<const Manifest> load_manifest(std::string_view relative) {
  std::string path = source_path(relative);
  return std::make_shared<const Manifest>(parse_manifest(read_file(path), path));
}

}  // namespace eioctl::testing
