#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace lbp::test {

inline std::string data(const std::string& name) {
  return std::string(LBP_TEST_DATA_DIR) + "/" + name;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("lbp_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name, std::ios::binary) << text;
    return file(name);
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Partition as a set of sorted blocks, for order-free comparison.
using Blocks = std::set<std::set<std::string>>;

inline Blocks group_by(const std::map<std::string, std::string>& key_of) {
  std::map<std::string, std::set<std::string>> groups;
  for (const auto& [s, k] : key_of) groups[k].insert(s);
  Blocks out;
  for (auto& [k, g] : groups) out.insert(std::move(g));
  return out;
}

}  // namespace lbp::test
