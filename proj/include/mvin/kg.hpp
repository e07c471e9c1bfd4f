#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvin/common.hpp"

namespace mvin {

struct Triple {
  int head;
  int relation;
  int tail;
  auto operator<=>(const Triple&) const = default;
};

struct Edge {
  int relation;
  int neighbor;
  auto operator<=>(const Edge&) const = default;
};

/// Immutable after construction; safe for concurrent reads.
struct KnowledgeGraph {
  int num_entities = 0;
  int num_relations = 0;
  std::vector<Triple> triples;
  /// One entry per triple, keyed by head.
  std::vector<std::vector<Edge>> adjacency;

  const std::vector<Edge>& neighbors(int entity) const { return adjacency[entity]; }
};

/// Per-user positive item sets. Items are dense ids mapped onto KG entities.
struct InteractionSet {
  int num_users = 0;
  int num_items = 0;
  std::vector<std::vector<int>> positives;  // sorted, unique item ids per user
  std::vector<int> item_to_entity;

  std::size_t total_interactions() const {
    std::size_t n = 0;
    for (const auto& p : positives) n += p.size();
    return n;
  }
};

struct SplitSpec {
  double train_fraction = 0.6;
  double valid_fraction = 0.2;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct StatsReport {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double avg_user_clicks = 0.0;
  double avg_item_clicks = 0.0;
  std::size_t kg_entities = 0;
  std::size_t kg_relations = 0;
  std::size_t kg_triples = 0;

  std::string to_text() const;
  std::string to_json() const;
};

struct RatingRecord {
  int user;
  int item;
  double rating;
};

struct UserItem {
  int user;
  int item;
  auto operator<=>(const UserItem&) const = default;
};

/// Parse a "head relation tail" file, deduplicate triples, build the
/// adjacency index. Malformed lines report their 1-based line number.
KnowledgeGraph load_kg(const std::string& path);
void save_kg(const KnowledgeGraph& kg, const std::string& path);

/// Lines "user item rating"; the rating column may be absent (implicit
/// feedback), in which case it is read as 1.
std::vector<RatingRecord> load_ratings(const std::string& path);
/// Lines "item entity".
std::vector<std::pair<int, int>> load_item_map(const std::string& path);
void save_ratings(const std::vector<RatingRecord>& ratings, const std::string& path);
void save_item_map(const std::vector<std::pair<int, int>>& map, const std::string& path);

/// Keep (user, item) where rating >= threshold. Entries below threshold are
/// dropped entirely; negatives come from sampling, never from low ratings.
std::vector<UserItem> binarize_ratings(const std::vector<RatingRecord>& raw,
                                       double threshold);

/// Iteratively drop users and items with fewer than g interactions until a
/// fixed point. g = 1 is the identity.
std::vector<UserItem> g_core_filter(std::vector<UserItem> pairs, int g);

/// Result of assembling an InteractionSet from raw pairs: dense ids plus the
/// original ids they came from.
struct DatasetBuild {
  InteractionSet interactions;
  std::vector<int> user_ids;  // dense user id -> original id
  std::vector<int> item_ids;  // dense item id -> original id
};

/// Deduplicate pairs, drop items without a KG entity mapping, reindex users
/// and items densely. item_map holds (original item id, entity id) rows.
DatasetBuild build_interactions(const std::vector<UserItem>& pairs,
                                const std::vector<std::pair<int, int>>& item_map,
                                const KnowledgeGraph& kg);

struct SplitResult {
  InteractionSet train;
  InteractionSet valid;
  InteractionSet test;
};

/// Per-user random partition by the spec fractions; deterministic for a
/// fixed seed. Users with fewer than 3 positives go entirely to train.
SplitResult split_interactions(const InteractionSet& inter, const SplitSpec& spec);

StatsReport dataset_stats(const KnowledgeGraph& kg, const InteractionSet& inter);

}  // namespace mvin
