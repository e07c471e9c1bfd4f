#pragma once

// Shared test utilities: chi-square goodness-of-fit, finite-difference
// gradient checking, and small deterministic fixtures.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "mvin/eval.hpp"
#include "mvin/kg.hpp"
#include "mvin/model.hpp"
#include "mvin/rng.hpp"
#include "mvin/sampler.hpp"
#include "mvin/trainer.hpp"

namespace testutil {

// Upper regularized incomplete gamma Q(a, x) by series / continued fraction.
inline double gamma_q(double a, double x) {
  if (x <= 0.0) return 1.0;
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

/// p-value of a chi-square goodness-of-fit against the uniform distribution.
inline double chi_square_uniform_pvalue(const std::vector<long long>& counts) {
  long long total = 0;
  for (long long c : counts) total += c;
  double expected = static_cast<double>(total) / static_cast<double>(counts.size());
  double stat = 0.0;
  for (long long c : counts) {
    double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  return gamma_q(static_cast<double>(counts.size() - 1) / 2.0, stat / 2.0);
}

/// Central finite differences of a scalar function of the parameters against
/// an analytic gradient. Tolerances follow the acceptance rule: absolute
/// 1e-6 where the magnitude is below small_mag, else relative rel_tol.
struct FdResult {
  int checked = 0;
  int failures = 0;
  double worst_rel = 0.0;
  double worst_abs = 0.0;
};

inline FdResult check_gradients(mvin::ModelParams& params,
                                const mvin::GradBuffer& analytic,
                                const std::function<double()>& loss_fn,
                                double step = 1e-5, double rel_tol = 1e-4,
                                double abs_tol = 1e-6, double small_mag = 1e-3) {
  FdResult res;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    auto& data = params.tensors[t].tensor.data;
    for (std::size_t i = 0; i < data.size(); ++i) {
      double saved = data[i];
      data[i] = saved + step;
      double up = loss_fn();
      data[i] = saved - step;
      double down = loss_fn();
      data[i] = saved;
      double fd = (up - down) / (2.0 * step);
      double an = analytic.grads[t].data[i];
      double mag = std::max(std::fabs(fd), std::fabs(an));
      ++res.checked;
      if (mag < small_mag) {
        double abs_err = std::fabs(fd - an);
        res.worst_abs = std::max(res.worst_abs, abs_err);
        if (abs_err > abs_tol) ++res.failures;
      } else {
        double rel_err = std::fabs(fd - an) / mag;
        res.worst_rel = std::max(res.worst_rel, rel_err);
        if (rel_err > rel_tol) ++res.failures;
      }
    }
  }
  return res;
}

/// Small random KG where every entity has at least one outgoing edge.
inline mvin::KnowledgeGraph tiny_kg(int entities, int relations, std::uint64_t seed,
                                    int edges_per_entity = 3) {
  mvin::Rng rng(mvin::mix_seed(seed, 0x817du));
  std::vector<mvin::Triple> triples;
  for (int e = 0; e < entities; ++e) {
    for (int k = 0; k < edges_per_entity; ++k) {
      int tail = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(entities)));
      int rel = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(relations)));
      triples.push_back({e, rel, tail});
    }
  }
  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
  mvin::KnowledgeGraph kg;
  kg.num_entities = entities;
  kg.num_relations = relations;
  kg.triples = triples;
  kg.adjacency.assign(static_cast<std::size_t>(entities), {});
  for (const mvin::Triple& t : kg.triples)
    kg.adjacency[static_cast<std::size_t>(t.head)].push_back({t.relation, t.tail});
  return kg;
}

/// Interactions over the first `items` entities (item i -> entity i).
inline mvin::InteractionSet tiny_interactions(int users, int items,
                                              std::uint64_t seed,
                                              int pos_per_user = 3) {
  mvin::InteractionSet inter;
  inter.num_users = users;
  inter.num_items = items;
  inter.item_to_entity.resize(static_cast<std::size_t>(items));
  for (int i = 0; i < items; ++i)
    inter.item_to_entity[static_cast<std::size_t>(i)] = i;
  inter.positives.assign(static_cast<std::size_t>(users), {});
  for (int u = 0; u < users; ++u) {
    mvin::Rng rng(mvin::mix_seed(seed, 0x99u, static_cast<std::uint64_t>(u)));
    std::vector<int> pool(static_cast<std::size_t>(items));
    for (int i = 0; i < items; ++i) pool[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = pool.size(); i > 1; --i)
      std::swap(pool[i - 1], pool[rng.uniform_index(i)]);
    int take = std::min(pos_per_user, items);
    inter.positives[static_cast<std::size_t>(u)].assign(pool.begin(),
                                                        pool.begin() + take);
    std::sort(inter.positives[static_cast<std::size_t>(u)].begin(),
              inter.positives[static_cast<std::size_t>(u)].end());
  }
  return inter;
}

/// Complete tiny world: KG, interactions, tables, and initialized params.
struct TinyWorld {
  mvin::KnowledgeGraph kg;
  mvin::InteractionSet inter;
  mvin::NeighborTable nbrs;
  mvin::PreferenceSets prefs;
  mvin::ModelParams params;
};

inline TinyWorld make_tiny(const mvin::Hyperparams& hp, std::uint64_t seed,
                           int entities = 10, int relations = 2, int users = 3,
                           int items = 4) {
  TinyWorld w;
  w.kg = tiny_kg(entities, relations, seed);
  w.inter = tiny_interactions(users, items, seed);
  w.nbrs = mvin::sample_neighbors(w.kg, hp.k_n, mvin::mix_seed(seed, 0x2bu));
  w.prefs = mvin::build_preference_sets(w.kg, w.inter, hp.l_p, hp.k_m,
                                        mvin::mix_seed(seed, 0x2cu));
  w.params = mvin::ModelParams::init(w.kg.num_entities, w.kg.num_relations,
                                     users, hp, mvin::mix_seed(seed, 0x2du));
  return w;
}

}  // namespace testutil
