#include "mvin/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mvin/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mvin {

namespace {

void validate_scores(const ScoredSet& s) {
  for (const ScoredEntry& e : s.entries) {
    check(std::isfinite(e.score) && e.score >= 0.0 && e.score <= 1.0,
          "score out of [0,1]: ", e.score, " for user ", e.user, " item ", e.item);
    check(e.label == 0 || e.label == 1, "label must be 0/1, got ", e.label);
  }
}

}  // namespace

double auc(const ScoredSet& s) {
  validate_scores(s);
  std::size_t n_pos = 0, n_neg = 0;
  for (const ScoredEntry& e : s.entries) (e.label ? n_pos : n_neg)++;
  check(n_pos > 0 && n_neg > 0, "AUC needs at least one positive and one negative (",
        n_pos, " pos, ", n_neg, " neg)");

  std::vector<std::size_t> order(s.entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s.entries[a].score < s.entries[b].score;
  });

  // Average ranks over tie groups; rank sums of halves stay exact in doubles.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() &&
           s.entries[order[j]].score == s.entries[order[i]].score)
      ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (s.entries[order[k]].label) pos_rank_sum += avg_rank;
    i = j;
  }
  double p = static_cast<double>(n_pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) /
         (p * static_cast<double>(n_neg));
}

double acc(const ScoredSet& s, double threshold) {
  validate_scores(s);
  check(!s.entries.empty(), "ACC of an empty scored set");
  std::size_t hits = 0;
  for (const ScoredEntry& e : s.entries)
    if ((e.score >= threshold ? 1 : 0) == e.label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(s.entries.size());
}

double precision_at_n(const std::function<double(int)>& score, int n,
                      const std::vector<int>& candidates,
                      const std::vector<int>& test_positives) {
  check(n >= 1, "precision@n needs n >= 1, got ", n);
  check(static_cast<int>(candidates.size()) >= n, "only ", candidates.size(),
        " candidates for precision@", n);
  std::vector<std::pair<double, int>> scored;
  scored.reserve(candidates.size());
  for (int item : candidates) scored.emplace_back(score(item), item);
  std::partial_sort(scored.begin(), scored.begin() + n, scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;  // tie: ascending item id
                    });
  std::set<int> pos(test_positives.begin(), test_positives.end());
  int hits = 0;
  for (int i = 0; i < n; ++i)
    if (pos.count(scored[static_cast<std::size_t>(i)].second)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(n);
}

std::vector<EvalPair> ctr_pairs(const InteractionSet& split,
                                const InteractionSet& all_positives,
                                std::uint64_t seed) {
  std::vector<EvalPair> pairs;
  for (int u = 0; u < split.num_users; ++u) {
    const auto& pos = split.positives[static_cast<std::size_t>(u)];
    if (pos.empty()) continue;
    const auto& known = all_positives.positives[static_cast<std::size_t>(u)];
    check(static_cast<int>(known.size()) < split.num_items,
          "user ", u, " interacted with every item; cannot sample negatives");
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(u)));
    for (int item : pos) {
      pairs.push_back({u, item, 1});
      int neg;
      do {
        neg = static_cast<int>(rng.uniform_index(
            static_cast<std::size_t>(split.num_items)));
      } while (std::binary_search(known.begin(), known.end(), neg));
      pairs.push_back({u, neg, 0});
    }
  }
  return pairs;
}

ScoredSet score_pairs(const std::vector<EvalPair>& pairs,
                      const std::function<double(int, int)>& scorer, int threads) {
  ScoredSet s;
  s.entries.resize(pairs.size());
  if (threads == 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const EvalPair& p = pairs[i];
      s.entries[i] = {p.user, p.item, p.label, scorer(p.user, p.item)};
    }
    return s;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16) num_threads(threads > 0 ? threads : omp_get_max_threads())
#endif
  for (long long i = 0; i < static_cast<long long>(pairs.size()); ++i) {
    const EvalPair& p = pairs[static_cast<std::size_t>(i)];
    s.entries[static_cast<std::size_t>(i)] = {p.user, p.item, p.label,
                                              scorer(p.user, p.item)};
  }
  return s;
}

void SynthSpec::validate() const {
  check(num_users >= 2, "synthetic spec needs >= 2 users, got ", num_users);
  check(num_items >= 4, "synthetic spec needs >= 4 items, got ", num_items);
  check(num_relations >= 1, "synthetic spec needs >= 1 relation, got ",
        num_relations);
  check(num_groups >= 2 && num_groups <= num_items, "bad group count ", num_groups);
  check(num_entities >= num_items + num_groups, "need >= ",
        num_items + num_groups, " entities, got ", num_entities);
  int min_group = num_items / num_groups;
  check(positives_per_user <= min_group, "positives_per_user ", positives_per_user,
        " exceeds the smallest group (", min_group, " items)");
  check(preference_noise >= 0.0 && preference_noise < 1.0,
        "preference_noise must be in [0,1), got ", preference_noise);
}

SynthDataset synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(mix_seed(seed, 0xfeedu));

  const int items = spec.num_items;
  const int groups = spec.num_groups;
  const int filler_begin = items + groups;
  const int fillers = spec.num_entities - filler_begin;
  const int noise_rel = spec.num_relations - 1;

  std::vector<Triple> triples;
  // Membership edges, both directions: the item's view of its attribute and
  // the ripple path from attribute back to sibling items.
  for (int i = 0; i < items; ++i) {
    int attr = spec.group_entity(spec.group_of_item(i));
    triples.push_back({i, 0, attr});
    triples.push_back({attr, 0, i});
  }
  auto random_filler = [&]() {
    return filler_begin + static_cast<int>(rng.uniform_index(
                              static_cast<std::size_t>(fillers)));
  };
  if (fillers > 0) {
    for (int i = 0; i < items; ++i)
      for (int k = 0; k < spec.noise_edges_per_item; ++k)
        triples.push_back({i, noise_rel, random_filler()});
    for (int gr = 0; gr < groups; ++gr)
      for (int k = 0; k < spec.group_out_edges; ++k)
        triples.push_back({spec.group_entity(gr), noise_rel, random_filler()});
    for (int f = 0; f < fillers; ++f)
      for (int k = 0; k < spec.filler_out_edges; ++k)
        triples.push_back({filler_begin + f, noise_rel, random_filler()});
  }
  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());

  SynthDataset d;
  d.kg.num_entities = spec.num_entities;
  d.kg.num_relations = spec.num_relations;
  d.kg.triples = std::move(triples);
  d.kg.adjacency.assign(static_cast<std::size_t>(spec.num_entities), {});
  for (const Triple& t : d.kg.triples)
    d.kg.adjacency[static_cast<std::size_t>(t.head)].push_back(
        {t.relation, t.tail});

  std::vector<std::vector<int>> group_items(static_cast<std::size_t>(groups));
  for (int i = 0; i < items; ++i)
    group_items[static_cast<std::size_t>(spec.group_of_item(i))].push_back(i);

  InteractionSet& inter = d.interactions;
  inter.num_users = spec.num_users;
  inter.num_items = items;
  inter.item_to_entity.resize(static_cast<std::size_t>(items));
  for (int i = 0; i < items; ++i) inter.item_to_entity[static_cast<std::size_t>(i)] = i;
  inter.positives.assign(static_cast<std::size_t>(spec.num_users), {});

  for (int u = 0; u < spec.num_users; ++u) {
    Rng urng(mix_seed(seed, 0xabcdu, static_cast<std::uint64_t>(u)));
    int pref = u % groups;
    std::vector<int> pool = group_items[static_cast<std::size_t>(pref)];
    for (std::size_t i = pool.size(); i > 1; --i)
      std::swap(pool[i - 1], pool[urng.uniform_index(i)]);
    std::size_t take = spec.positives_per_user <= 0
                           ? pool.size()
                           : static_cast<std::size_t>(spec.positives_per_user);
    std::vector<int> pos(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    if (spec.preference_noise > 0.0) {
      for (int& item : pos)
        if (urng.uniform() < spec.preference_noise) {
          int other;
          do {
            other = static_cast<int>(
                urng.uniform_index(static_cast<std::size_t>(items)));
          } while (spec.group_of_item(other) == pref);
          item = other;
        }
    }
    std::sort(pos.begin(), pos.end());
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
    inter.positives[static_cast<std::size_t>(u)] = std::move(pos);
  }
  return d;
}

}  // namespace mvin
