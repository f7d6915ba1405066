#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "slcd/denoiser.hpp"
#include "slcd/rng.hpp"
#include "slcd/tensor.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("slcd_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path.string(); }
  std::string sub(const std::string& leaf) const {
    return (path / leaf).string();
  }
};

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

// Two well-separated 2-D Gaussian modes; the standing toy set for diffusion
// and distillation checks. All rows carry label 0.
inline slcd::Tensor two_mode_data(std::size_t n, std::uint64_t seed) {
  slcd::Rng rng(seed);
  slcd::Tensor X({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    double cx = (i % 2 == 0) ? -1.5 : 1.5;
    X.at(i, 0) = cx + 0.2 * rng.normal();
    X.at(i, 1) = 0.2 * rng.normal();
  }
  return X;
}

inline slcd::TeacherTrainConfig small_teacher_config(int iters) {
  slcd::TeacherTrainConfig tc;
  tc.iters = iters;
  tc.batch = 64;
  tc.lr = 1e-3;
  tc.hidden = 64;
  tc.hidden_layers = 2;
  tc.num_labels = 1;
  tc.label_dropout = 0.15;
  return tc;
}

}  // namespace testutil
