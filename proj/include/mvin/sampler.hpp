#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvin/kg.hpp"

namespace mvin {

/// Reserved relation id used for self-loops on entities with no outgoing
/// triples. Model relation tables are sized num_relations + 1 to cover it.
inline int self_loop_relation(const KnowledgeGraph& kg) { return kg.num_relations; }

enum class DanglingPolicy { kSelfLoop, kStrict };

/// Fixed-size uniform neighbor sample N'(v): exactly k_n (relation, entity)
/// pairs per entity, drawn with replacement. Row i depends only on
/// (seed, entity i), so construction parallelizes without changing output.
struct NeighborTable {
  int k_n = 0;
  std::uint64_t seed = 0;
  int num_entities = 0;
  std::vector<Edge> rows;  // row-major, num_entities * k_n

  std::span<const Edge> row(int entity) const {
    return {rows.data() + static_cast<std::size_t>(entity) * k_n,
            static_cast<std::size_t>(k_n)};
  }

  void save(const std::string& path) const;
  static NeighborTable load(const std::string& path);
};

/// Per-user ripple sets S^p_u: k_m KG triples per hop. Hop-1 triples start
/// from the user's clicked-item entities; hop-p heads are tails of the
/// sampled hop-(p-1) triples. Stored hops = max(l_p, 1) because the hop-0
/// response reads heads from S^1 even when l_p = 0.
struct PreferenceSets {
  int k_m = 0;
  int hops = 0;
  std::uint64_t seed = 0;
  int num_users = 0;
  std::vector<Triple> sets;  // row-major, num_users * hops * k_m

  std::span<const Triple> hop(int user, int p) const {  // p is 1-based
    return {sets.data() +
                (static_cast<std::size_t>(user) * hops + (p - 1)) * k_m,
            static_cast<std::size_t>(k_m)};
  }

  void save(const std::string& path) const;
  static PreferenceSets load(const std::string& path);
};

/// threads: 1 runs the serial reference loop, 0 uses all cores, n uses n
/// OpenMP threads. Output is identical for every setting.
NeighborTable sample_neighbors(const KnowledgeGraph& kg, int k_n, std::uint64_t seed,
                               DanglingPolicy policy = DanglingPolicy::kSelfLoop,
                               int threads = 1);

PreferenceSets build_preference_sets(const KnowledgeGraph& kg,
                                     const InteractionSet& train, int l_p, int k_m,
                                     std::uint64_t seed, int threads = 1);

/// Deterministic seed for a training stage: a splitmix of the base seed and
/// the stage index, so stages resample uncorrelated neighborhoods.
std::uint64_t resample(std::uint64_t base_seed, int stage);

}  // namespace mvin
