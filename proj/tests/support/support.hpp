#pragma once

// Shared helpers for unit and acceptance tests.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "a2s/config.hpp"
#include "a2s/dataset.hpp"
#include "a2s/model.hpp"
#include "a2s/nn.hpp"
#include "a2s/rng.hpp"
#include "a2s/symbolic.hpp"

namespace a2s::test {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "a2s");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Up to `n` random notes with pitches in [lo, hi].
SegmentScore random_score(Rng& rng, int n, int lo = 21, int hi = 108);
ChordProgression random_chords(Rng& rng);
TranscriberEmbedding random_embedding(Rng& rng);

// Narrow widths so a forward/backward pass takes milliseconds.
ModelConfig tiny_model(std::uint64_t seed = 1);

// In-memory examples with random embeddings and consistent features.
std::vector<TrainingExample> synthetic_examples(int n, std::uint64_t seed, const std::string& song = "syn");

// Fixture songs segmented with the stub transcriber.
std::vector<TrainingExample> fixture_examples(const std::filesystem::path& dir, int songs, int segments,
                                              std::uint64_t seed = 7);

TrainConfig tiny_train_config(long s1, long s2, long s3, int batch = 4);

struct GradCheckResult {
  double max_relative_error = 0.0;
  int checked = 0;
  std::vector<std::string> worst;  // "name[i]: autodiff vs numeric"
};

// Central differences on `count` random scalar entries whose autodiff
// gradient exceeds `min_grad` in magnitude. Relative error |a - n| / max(|a|, |n|).
GradCheckResult gradient_check(nn::ParamStore& params, const std::function<ad::Var()>& loss, int count,
                               std::uint64_t seed, double eps = 1e-5, double min_grad = 1e-7);

// Runs a shell command and returns its exit status.
int run_command(const std::string& cmd);

}  // namespace a2s::test
