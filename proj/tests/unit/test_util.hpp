#pragma once

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "segforge/rng.hpp"
#include "segforge/tensor.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = tag;
    if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    for (char& c : name) {
      if (c == '/') c = '_';
    }
    path_ = std::filesystem::temp_directory_path() / ("segforge_" + name);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

inline segforge::Tensor random_tensor(segforge::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  segforge::Rng rng(seed);
  segforge::Tensor t(shape);
  for (auto& v : t.data()) v = static_cast<segforge::Real>(rng.uniform(lo, hi));
  return t;
}

inline segforge::Tensor random_mask(segforge::Shape shape, std::uint64_t seed, double p = 0.5) {
  segforge::Rng rng(seed);
  segforge::Tensor t(shape);
  for (auto& v : t.data()) v = rng.coin(p) ? segforge::Real{1} : segforge::Real{0};
  return t;
}

inline bool bitwise_equal(const segforge::Tensor& a, const segforge::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto x = a.data();
  const auto y = b.data();
  return std::memcmp(x.data(), y.data(), x.size_bytes()) == 0;
}

}  // namespace testutil
