#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvin/kg.hpp"

namespace mvin {

struct ScoredEntry {
  int user;
  int item;
  int label;  // 0 or 1
  double score;
};

struct ScoredSet {
  std::vector<ScoredEntry> entries;
};

/// Rank-based (Mann-Whitney) AUC; ties count 0.5. Equals the mean over all
/// positive-negative pairs of [score_p > score_n] + 0.5 [tie] exactly.
double auc(const ScoredSet& s);

/// Fraction of entries with (score >= threshold) == label.
double acc(const ScoredSet& s, double threshold = 0.5);

/// (# test positives among the top-n scored candidates) / n. Ties are broken
/// by ascending item id. Candidates must exclude the user's train/valid
/// positives and number at least n.
double precision_at_n(const std::function<double(int)>& score, int n,
                      const std::vector<int>& candidates,
                      const std::vector<int>& test_positives);

struct EvalPair {
  int user;
  int item;
  int label;
};

/// CTR evaluation pairs for a split: each positive plus one uniformly
/// sampled item the user never interacted with (across all splits).
std::vector<EvalPair> ctr_pairs(const InteractionSet& split,
                                const InteractionSet& all_positives,
                                std::uint64_t seed);

/// Score pairs with a user-supplied scorer. The scorer must be safe to call
/// concurrently; threads = 1 runs the serial reference loop.
ScoredSet score_pairs(const std::vector<EvalPair>& pairs,
                      const std::function<double(int user, int item)>& scorer,
                      int threads = 1);

/// Planted-structure synthetic dataset: items belong to latent groups, each
/// item links to its group attribute entity in the KG, and every user's
/// positives come from one preferred group. A scorer that recovers group
/// membership separates positives from negatives.
struct SynthSpec {
  int num_users = 200;
  int num_items = 100;
  int num_groups = 2;
  int num_entities = 300;  // >= num_items + num_groups
  int num_relations = 2;   // relation 0 = group membership, last = filler links
  int positives_per_user = 0;  // <= 0: the whole preferred group
  int noise_edges_per_item = 1;
  int group_out_edges = 4;
  int filler_out_edges = 2;
  double preference_noise = 0.0;  // fraction of positives drawn off-group

  void validate() const;
  int group_of_item(int item) const { return item % num_groups; }
  int group_entity(int group) const { return num_items + group; }
};

struct SynthDataset {
  KnowledgeGraph kg;
  InteractionSet interactions;
};

SynthDataset synth_dataset(const SynthSpec& spec, std::uint64_t seed);

}  // namespace mvin
