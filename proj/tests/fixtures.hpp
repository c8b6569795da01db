// Copyright 2026 The vfield Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Small generated corpora and a scorer trained on them, built once per
// process.
#ifndef VFIELD_TESTS_FIXTURES_HPP_
#define VFIELD_TESTS_FIXTURES_HPP_

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "vfield/data.hpp"
#include "vfield/detector.hpp"
#include "vfield/errors.hpp"

namespace fixture {

inline vfield::GeneratorConfig small_generator(int scenes = 40, std::uint64_t seed = 3) {
  vfield::GeneratorConfig cfg;
  cfg.scenes = scenes;
  cfg.seed = seed;
  return cfg;
}

struct Corpus {
  std::vector<vfield::SceneFrame> train;
  std::vector<vfield::SceneFrame> val;
};

inline Corpus split_frames(const std::vector<vfield::GeneratedFrame>& frames) {
  Corpus c;
  for (const auto& f : frames) (f.split == "val" ? c.val : c.train).push_back(f.frame);
  return c;
}

inline const Corpus& small_corpus() {
  static const Corpus c = split_frames(vfield::generate_frames(small_generator()));
  return c;
}

/// Trained once and shared between test processes through a file in the temp
/// directory; training is deterministic, so the cached copy is exact.
inline const vfield::ScorerParams& small_scorer() {
  static const vfield::ScorerParams p = [] {
    namespace fs = std::filesystem;
    const char* env = std::getenv("VFIELD_FIXTURE_DIR");
    const fs::path dir = env ? fs::path(env) : fs::temp_directory_path();
    std::error_code ec;
    fs::create_directories(dir, ec);
    const fs::path cache = dir / "vfield_fixture_scorer_v2.bin";
    if (fs::exists(cache, ec)) {
      try {
        return vfield::read_scorer(cache);
      } catch (const vfield::Error&) {
      }
    }
    const vfield::ScorerParams trained = vfield::train_scorer(small_corpus().train, {});
    const fs::path tmp = cache.string() + "." + std::to_string(::getpid());
    vfield::write_scorer(tmp, trained);
    fs::rename(tmp, cache, ec);
    return trained;
  }();
  return p;
}

/// Fresh empty directory below the system temp directory.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("vfield_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture

#endif  // VFIELD_TESTS_FIXTURES_HPP_
