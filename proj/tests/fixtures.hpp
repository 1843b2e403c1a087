#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "lore/policy_basis.hpp"
#include "lore/synth.hpp"

namespace fixture {

// A benchmark small enough for unit tests.
inline lore::Vector vec(std::span<const double> s) { return {s.begin(), s.end()}; }

inline lore::GeneratorConfig small_generator(std::uint64_t seed = 1) {
  lore::GeneratorConfig g;
  g.seed = seed;
  g.dim = 8;
  g.basis_true = 2;
  g.n_seen = 12;
  g.n_unseen = 6;
  g.prompts_train = 40;
  g.prompts_test = 15;
  g.responses_per_prompt = 4;
  g.comparisons_per_seen_user = 20;
  g.fewshot_per_unseen_user = 6;
  return g;
}

// One prompt, two responses. Users "a*" prefer response 0, users "b*"
// prefer response 1.
inline lore::PreferenceDataset two_groups(std::size_t users_per_group = 10, std::size_t records = 10) {
  lore::PreferenceDataset::Builder b(2);
  const auto y0 = lore::tabular_item(1, 2, 0, 0);
  const auto y1 = lore::tabular_item(1, 2, 0, 1);
  for (std::size_t i = 0; i < users_per_group; ++i)
    for (std::size_t k = 0; k < records; ++k) {
      b.add("a" + std::to_string(i), y0, y1);
      b.add("b" + std::to_string(i), y1, y0);
    }
  return std::move(b).build();
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("lore-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace fixture
