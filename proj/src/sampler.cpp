#include "mvin/sampler.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "mvin/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mvin {

namespace {

void sample_row(const KnowledgeGraph& kg, int entity, int k_n, std::uint64_t seed,
                DanglingPolicy policy, Edge* out) {
  const auto& adj = kg.adjacency[entity];
  if (adj.empty()) {
    if (policy == DanglingPolicy::kStrict)
      fail("entity ", entity, " has no neighbors");
    Edge self{self_loop_relation(kg), entity};
    std::fill(out, out + k_n, self);
    return;
  }
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(entity)));
  for (int i = 0; i < k_n; ++i) out[i] = adj[rng.uniform_index(adj.size())];
}

void sample_user_prefs(const KnowledgeGraph& kg, const InteractionSet& train,
                       int user, int hops, int k_m, std::uint64_t seed,
                       Triple* out) {
  const auto& pos = train.positives[user];
  check(!pos.empty(), "user ", user, " has no train positives");

  std::vector<int> frontier;
  frontier.reserve(pos.size());
  for (int item : pos) frontier.push_back(train.item_to_entity[item]);
  std::sort(frontier.begin(), frontier.end());
  frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());

  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(user)));
  std::vector<Triple> candidates;
  for (int p = 0; p < hops; ++p) {
    candidates.clear();
    for (int h : frontier)
      for (const Edge& e : kg.adjacency[h])
        candidates.push_back({h, e.relation, e.neighbor});
    Triple* hop_out = out + static_cast<std::size_t>(p) * k_m;
    if (candidates.empty()) {
      if (p == 0) {
        // Clicked entities with no outgoing triples: self-loops keep the set full.
        int self = self_loop_relation(kg);
        for (int h : frontier) candidates.push_back({h, self, h});
      } else {
        // Dead frontier: resample from the previous hop's triples.
        const Triple* prev = hop_out - k_m;
        candidates.assign(prev, prev + k_m);
      }
    }
    for (int i = 0; i < k_m; ++i)
      hop_out[i] = candidates[rng.uniform_index(candidates.size())];

    frontier.clear();
    for (int i = 0; i < k_m; ++i) frontier.push_back(hop_out[i].tail);
    std::sort(frontier.begin(), frontier.end());
    frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
  }
}

}  // namespace

NeighborTable sample_neighbors(const KnowledgeGraph& kg, int k_n, std::uint64_t seed,
                               DanglingPolicy policy, int threads) {
  check(k_n >= 1, "k_n must be >= 1, got ", k_n);
  NeighborTable t;
  t.k_n = k_n;
  t.seed = seed;
  t.num_entities = kg.num_entities;
  t.rows.resize(static_cast<std::size_t>(kg.num_entities) * k_n);

  if (threads == 1) {
    for (int e = 0; e < kg.num_entities; ++e)
      sample_row(kg, e, k_n, seed, policy, t.rows.data() + static_cast<std::size_t>(e) * k_n);
    return t;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads > 0 ? threads : omp_get_max_threads())
#endif
  for (int e = 0; e < kg.num_entities; ++e)
    sample_row(kg, e, k_n, seed, policy, t.rows.data() + static_cast<std::size_t>(e) * k_n);
  return t;
}

PreferenceSets build_preference_sets(const KnowledgeGraph& kg,
                                     const InteractionSet& train, int l_p, int k_m,
                                     std::uint64_t seed, int threads) {
  check(l_p >= 0, "l_p must be >= 0, got ", l_p);
  check(k_m >= 1, "k_m must be >= 1, got ", k_m);
  PreferenceSets ps;
  ps.k_m = k_m;
  ps.hops = std::max(l_p, 1);
  ps.seed = seed;
  ps.num_users = train.num_users;
  ps.sets.resize(static_cast<std::size_t>(train.num_users) * ps.hops * k_m);

  if (threads == 1) {
    for (int u = 0; u < train.num_users; ++u)
      sample_user_prefs(kg, train, u, ps.hops, k_m, seed,
                        ps.sets.data() + static_cast<std::size_t>(u) * ps.hops * k_m);
    return ps;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads > 0 ? threads : omp_get_max_threads())
#endif
  for (int u = 0; u < train.num_users; ++u)
    sample_user_prefs(kg, train, u, ps.hops, k_m, seed,
                      ps.sets.data() + static_cast<std::size_t>(u) * ps.hops * k_m);
  return ps;
}

std::uint64_t resample(std::uint64_t base_seed, int stage) {
  check(stage >= 1, "stage must be >= 1, got ", stage);
  return mix_seed(base_seed, static_cast<std::uint64_t>(stage));
}

namespace {

void write_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ofstream& f, std::uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint64_t read_u64(std::ifstream& f) {
  std::uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

constexpr std::uint32_t kTableVersion = 1;

}  // namespace

void NeighborTable::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "cannot write file: ", path);
  f.write("MVINNBRT", 8);
  write_u32(f, kTableVersion);
  write_u32(f, static_cast<std::uint32_t>(k_n));
  write_u64(f, seed);
  write_u32(f, static_cast<std::uint32_t>(num_entities));
  for (const Edge& e : rows) {
    write_u32(f, static_cast<std::uint32_t>(e.relation));
    write_u32(f, static_cast<std::uint32_t>(e.neighbor));
  }
  check(f.good(), "write failed: ", path);
}

NeighborTable NeighborTable::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "cannot open file: ", path);
  char magic[8];
  f.read(magic, 8);
  check(f.good() && std::memcmp(magic, "MVINNBRT", 8) == 0,
        path, ": not a neighbor table file");
  std::uint32_t version = read_u32(f);
  check(version == kTableVersion, path, ": unsupported version ", version);
  NeighborTable t;
  t.k_n = static_cast<int>(read_u32(f));
  t.seed = read_u64(f);
  t.num_entities = static_cast<int>(read_u32(f));
  t.rows.resize(static_cast<std::size_t>(t.num_entities) * t.k_n);
  for (Edge& e : t.rows) {
    e.relation = static_cast<int>(read_u32(f));
    e.neighbor = static_cast<int>(read_u32(f));
  }
  check(f.good(), path, ": truncated neighbor table");
  return t;
}

void PreferenceSets::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "cannot write file: ", path);
  f.write("MVINPREF", 8);
  write_u32(f, kTableVersion);
  write_u32(f, static_cast<std::uint32_t>(k_m));
  write_u32(f, static_cast<std::uint32_t>(hops));
  write_u64(f, seed);
  write_u32(f, static_cast<std::uint32_t>(num_users));
  for (const Triple& t : sets) {
    write_u32(f, static_cast<std::uint32_t>(t.head));
    write_u32(f, static_cast<std::uint32_t>(t.relation));
    write_u32(f, static_cast<std::uint32_t>(t.tail));
  }
  check(f.good(), "write failed: ", path);
}

PreferenceSets PreferenceSets::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "cannot open file: ", path);
  char magic[8];
  f.read(magic, 8);
  check(f.good() && std::memcmp(magic, "MVINPREF", 8) == 0,
        path, ": not a preference set file");
  std::uint32_t version = read_u32(f);
  check(version == kTableVersion, path, ": unsupported version ", version);
  PreferenceSets ps;
  ps.k_m = static_cast<int>(read_u32(f));
  ps.hops = static_cast<int>(read_u32(f));
  ps.seed = read_u64(f);
  ps.num_users = static_cast<int>(read_u32(f));
  ps.sets.resize(static_cast<std::size_t>(ps.num_users) * ps.hops * ps.k_m);
  for (Triple& t : ps.sets) {
    t.head = static_cast<int>(read_u32(f));
    t.relation = static_cast<int>(read_u32(f));
    t.tail = static_cast<int>(read_u32(f));
  }
  check(f.good(), path, ": truncated preference set file");
  return ps;
}

}  // namespace mvin
