#pragma once

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "resemg/random.hpp"
#include "resemg/tensor.hpp"

namespace resemg::testing {

template <typename Scalar = float>
BasicTensor<Scalar> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<Scalar> v(shape_product(shape));
  for (auto& x : v) x = static_cast<Scalar>(rng.uniform(-scale, scale));
  return BasicTensor<Scalar>(shape, std::move(v));
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

template <typename A, typename B>
void expect_all_near(const A& got, const B& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_LE(rel_diff(got[i], want[i]), tol) << "index " << i << ": " << got[i] << " vs " << want[i];
  }
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "resemg_" + tag;
    if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
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
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace resemg::testing
