#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvin/eval.hpp"
#include "mvin/kg.hpp"
#include "mvin/model.hpp"
#include "mvin/trainer.hpp"

namespace mvin {

/// One run is fully determined by a RunConfig: data paths (or a synthetic
/// spec), hyperparameters, training settings, and the output directory.
struct RunConfig {
  std::uint64_t seed = 0;

  // [data]; empty kg path means "generate from [synth]".
  std::string kg_path;
  std::string ratings_path;
  std::string item_map_path;
  double rating_threshold = 0.0;
  int g_core = 1;

  SplitSpec split;
  Hyperparams hp;
  TrainConfig train;
  bool stagewise = true;

  std::vector<int> precision_n = {1, 2, 5, 10, 20, 50, 100};

  std::string sweep_axis;
  std::vector<int> sweep_values;

  SynthSpec synth;
  std::string out_dir = "out";

  static RunConfig load(const std::string& path);

  /// File-existence and per-command checks; throws with exit-status-2
  /// semantics in the CLI.
  void validate_for(const std::string& command) const;
};

/// Loaded dataset ready for training/evaluation.
struct Dataset {
  KnowledgeGraph kg;
  InteractionSet interactions;
  SplitResult splits;
};

/// Load the configured files (or generate the synthetic fixture), apply
/// binarization and g-core filtering, and split per user.
Dataset load_dataset(const RunConfig& cfg);

}  // namespace mvin
