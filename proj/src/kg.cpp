#include "mvin/kg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "mvin/rng.hpp"

namespace mvin {

namespace {

constexpr long long kMaxId = std::numeric_limits<int>::max();

struct LineReader {
  std::ifstream in;
  std::string path;
  std::size_t line_no = 0;

  explicit LineReader(const std::string& p) : in(p), path(p) {
    check(in.good(), "cannot open file: ", p);
  }
  bool next(std::string& line) {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }
  [[noreturn]] void bad(const std::string& why) const {
    fail(path, ":", line_no, ": ", why);
  }
};

int parse_id(LineReader& r, std::istringstream& is, const char* what) {
  long long v;
  if (!(is >> v)) r.bad(std::string("expected ") + what);
  if (v < 0 || v > kMaxId) r.bad(std::string(what) + " out of range");
  return static_cast<int>(v);
}

void expect_end(LineReader& r, std::istringstream& is) {
  std::string rest;
  if (is >> rest) r.bad("trailing token '" + rest + "'");
}

}  // namespace

void SplitSpec::validate() const {
  check(train_fraction > 0 && valid_fraction > 0 && test_fraction > 0,
        "split fractions must be positive");
  double s = train_fraction + valid_fraction + test_fraction;
  check(std::abs(s - 1.0) <= 1e-9, "split fractions sum to ", s, ", expected 1");
}

KnowledgeGraph load_kg(const std::string& path) {
  LineReader r(path);
  std::vector<Triple> triples;
  std::string line;
  while (r.next(line)) {
    std::istringstream is(line);
    Triple t;
    t.head = parse_id(r, is, "head id");
    t.relation = parse_id(r, is, "relation id");
    t.tail = parse_id(r, is, "tail id");
    expect_end(r, is);
    triples.push_back(t);
  }
  check(!triples.empty(), path, ": empty knowledge graph file");

  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());

  KnowledgeGraph kg;
  for (const Triple& t : triples) {
    kg.num_entities = std::max({kg.num_entities, t.head + 1, t.tail + 1});
    kg.num_relations = std::max(kg.num_relations, t.relation + 1);
  }
  kg.triples = std::move(triples);
  kg.adjacency.assign(kg.num_entities, {});
  for (const Triple& t : kg.triples)
    kg.adjacency[t.head].push_back({t.relation, t.tail});
  return kg;
}

void save_kg(const KnowledgeGraph& kg, const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "cannot write file: ", path);
  for (const Triple& t : kg.triples)
    out << t.head << ' ' << t.relation << ' ' << t.tail << '\n';
  check(out.good(), "write failed: ", path);
}

std::vector<RatingRecord> load_ratings(const std::string& path) {
  LineReader r(path);
  std::vector<RatingRecord> out;
  std::string line;
  while (r.next(line)) {
    std::istringstream is(line);
    RatingRecord rec;
    rec.user = parse_id(r, is, "user id");
    rec.item = parse_id(r, is, "item id");
    if (!(is >> rec.rating)) rec.rating = 1.0;  // implicit feedback
    if (!std::isfinite(rec.rating)) r.bad("non-finite rating");
    expect_end(r, is);
    out.push_back(rec);
  }
  check(!out.empty(), path, ": empty ratings file");
  return out;
}

std::vector<std::pair<int, int>> load_item_map(const std::string& path) {
  LineReader r(path);
  std::vector<std::pair<int, int>> out;
  std::string line;
  while (r.next(line)) {
    std::istringstream is(line);
    int item = parse_id(r, is, "item id");
    int entity = parse_id(r, is, "entity id");
    expect_end(r, is);
    out.emplace_back(item, entity);
  }
  check(!out.empty(), path, ": empty item map file");
  return out;
}

void save_ratings(const std::vector<RatingRecord>& ratings, const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "cannot write file: ", path);
  for (const RatingRecord& r : ratings)
    out << r.user << ' ' << r.item << ' ' << r.rating << '\n';
  check(out.good(), "write failed: ", path);
}

void save_item_map(const std::vector<std::pair<int, int>>& map,
                   const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "cannot write file: ", path);
  for (auto [item, entity] : map) out << item << ' ' << entity << '\n';
  check(out.good(), "write failed: ", path);
}

std::vector<UserItem> binarize_ratings(const std::vector<RatingRecord>& raw,
                                       double threshold) {
  std::vector<UserItem> out;
  out.reserve(raw.size());
  for (const RatingRecord& r : raw)
    if (r.rating >= threshold) out.push_back({r.user, r.item});
  return out;
}

std::vector<UserItem> g_core_filter(std::vector<UserItem> pairs, int g) {
  check(g >= 1, "g-core threshold must be >= 1, got ", g);
  if (g == 1) return pairs;

  bool changed = true;
  while (changed) {
    std::map<int, int> user_count, item_count;
    for (const UserItem& p : pairs) {
      ++user_count[p.user];
      ++item_count[p.item];
    }
    std::vector<UserItem> kept;
    kept.reserve(pairs.size());
    for (const UserItem& p : pairs)
      if (user_count[p.user] >= g && item_count[p.item] >= g) kept.push_back(p);
    changed = kept.size() != pairs.size();
    pairs = std::move(kept);
  }
  return pairs;
}

DatasetBuild build_interactions(const std::vector<UserItem>& pairs,
                                const std::vector<std::pair<int, int>>& item_map,
                                const KnowledgeGraph& kg) {
  std::map<int, int> entity_of;
  for (auto [item, entity] : item_map) {
    check(entity >= 0 && entity < kg.num_entities, "item ", item,
          " maps to entity ", entity, " outside the KG (", kg.num_entities,
          " entities)");
    auto [it, inserted] = entity_of.emplace(item, entity);
    check(inserted || it->second == entity, "item ", item,
          " maps to multiple entities");
  }

  // Items without a KG mapping are rejected here: every kept item needs a
  // nonempty KG neighborhood to aggregate over.
  std::set<UserItem> uniq;
  for (const UserItem& p : pairs)
    if (entity_of.count(p.item)) uniq.insert(p);

  std::map<int, int> user_dense, item_dense;
  DatasetBuild b;
  for (const UserItem& p : uniq) {
    if (user_dense.emplace(p.user, static_cast<int>(b.user_ids.size())).second)
      b.user_ids.push_back(p.user);
    if (item_dense.emplace(p.item, static_cast<int>(b.item_ids.size())).second)
      b.item_ids.push_back(p.item);
  }

  InteractionSet& inter = b.interactions;
  inter.num_users = static_cast<int>(b.user_ids.size());
  inter.num_items = static_cast<int>(b.item_ids.size());
  inter.positives.assign(inter.num_users, {});
  inter.item_to_entity.assign(inter.num_items, -1);
  for (int i = 0; i < inter.num_items; ++i)
    inter.item_to_entity[i] = entity_of.at(b.item_ids[i]);
  for (const UserItem& p : uniq)
    inter.positives[user_dense.at(p.user)].push_back(item_dense.at(p.item));
  for (auto& pos : inter.positives) std::sort(pos.begin(), pos.end());
  return b;
}

namespace {

/// Largest-remainder apportionment of n over the three split fractions; ties
/// broken by fraction order (train, valid, test).
std::array<std::size_t, 3> apportion(std::size_t n, const SplitSpec& spec) {
  const double f[3] = {spec.train_fraction, spec.valid_fraction, spec.test_fraction};
  std::array<std::size_t, 3> sizes{};
  double rem[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = static_cast<double>(n) * f[i];
    sizes[i] = static_cast<std::size_t>(exact);
    rem[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best]) best = i;
    ++sizes[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return sizes;
}

InteractionSet like(const InteractionSet& inter) {
  InteractionSet s;
  s.num_users = inter.num_users;
  s.num_items = inter.num_items;
  s.item_to_entity = inter.item_to_entity;
  s.positives.assign(inter.num_users, {});
  return s;
}

}  // namespace

SplitResult split_interactions(const InteractionSet& inter, const SplitSpec& spec) {
  spec.validate();
  SplitResult r{like(inter), like(inter), like(inter)};
  for (int u = 0; u < inter.num_users; ++u) {
    std::vector<int> items = inter.positives[u];
    if (items.size() < 3) {
      r.train.positives[u] = items;
      continue;
    }
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(u)));
    for (std::size_t i = items.size(); i > 1; --i)
      std::swap(items[i - 1], items[rng.uniform_index(i)]);
    auto sizes = apportion(items.size(), spec);
    auto mid1 = items.begin() + static_cast<std::ptrdiff_t>(sizes[0]);
    auto mid2 = mid1 + static_cast<std::ptrdiff_t>(sizes[1]);
    r.train.positives[u].assign(items.begin(), mid1);
    r.valid.positives[u].assign(mid1, mid2);
    r.test.positives[u].assign(mid2, items.end());
    std::sort(r.train.positives[u].begin(), r.train.positives[u].end());
    std::sort(r.valid.positives[u].begin(), r.valid.positives[u].end());
    std::sort(r.test.positives[u].begin(), r.test.positives[u].end());
  }
  return r;
}

StatsReport dataset_stats(const KnowledgeGraph& kg, const InteractionSet& inter) {
  StatsReport s;
  s.users = static_cast<std::size_t>(inter.num_users);
  s.items = static_cast<std::size_t>(inter.num_items);
  s.interactions = inter.total_interactions();
  s.avg_user_clicks =
      s.users == 0 ? 0.0 : static_cast<double>(s.interactions) / s.users;
  s.avg_item_clicks =
      s.items == 0 ? 0.0 : static_cast<double>(s.interactions) / s.items;
  s.kg_entities = static_cast<std::size_t>(kg.num_entities);
  s.kg_relations = static_cast<std::size_t>(kg.num_relations);
  s.kg_triples = kg.triples.size();
  return s;
}

std::string StatsReport::to_text() const {
  std::ostringstream os;
  os << "users=" << users << '\n'
     << "items=" << items << '\n'
     << "interactions=" << interactions << '\n'
     << "avg_user_clicks=" << avg_user_clicks << '\n'
     << "avg_item_clicks=" << avg_item_clicks << '\n'
     << "kg_entities=" << kg_entities << '\n'
     << "kg_relations=" << kg_relations << '\n'
     << "kg_triples=" << kg_triples << '\n';
  return os.str();
}

std::string StatsReport::to_json() const {
  std::ostringstream os;
  os << "{\n"
     << "  \"users\": " << users << ",\n"
     << "  \"items\": " << items << ",\n"
     << "  \"interactions\": " << interactions << ",\n"
     << "  \"avg_user_clicks\": " << avg_user_clicks << ",\n"
     << "  \"avg_item_clicks\": " << avg_item_clicks << ",\n"
     << "  \"kg_entities\": " << kg_entities << ",\n"
     << "  \"kg_relations\": " << kg_relations << ",\n"
     << "  \"kg_triples\": " << kg_triples << "\n"
     << "}\n";
  return os.str();
}

}  // namespace mvin
