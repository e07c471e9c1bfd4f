#include "mvin/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "mvin/rng.hpp"

namespace mvin {

void AblationFlags::disable(const std::string& name) {
  if (name == "uo_e") uo_e = false;
  else if (name == "uo_r") uo_r = false;
  else if (name == "uo_k") uo_k = false;
  else if (name == "ml_w") ml_w = false;
  else if (name == "ml_d") ml_d = false;
  else if (name == "sw") sw = false;
  else fail("unknown ablation flag: ", name);
}

void Hyperparams::validate() const {
  check(s >= 1, "embedding dim must be >= 1, got ", s);
  check(l_p >= 0, "l_p must be >= 0, got ", l_p);
  check(l_w >= 1, "l_w must be >= 1, got ", l_w);
  check(l_d >= 1, "l_d must be >= 1, got ", l_d);
  check(k_m >= 1, "k_m must be >= 1, got ", k_m);
  check(k_n >= 1, "k_n must be >= 1, got ", k_n);
  check(lambda >= 0.0, "lambda must be >= 0, got ", lambda);
  check(lr > 0.0, "learning rate must be > 0, got ", lr);
}

namespace {

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

constexpr double kEmbedBound = 0.05;

enum Ordinal {
  kOrdEntity = 0,
  kOrdRelVec = 1,
  kOrdRelMat = 2,
  kOrdWr = 3,
  kOrdBr = 4,
  kOrdWa = 5,
  kOrdWe = 6,
  kOrdBe = 7,
  kOrdWo = 8,
  kOrdBo = 9,
  kOrdWv = 10,
  kOrdBv = 11,
  kOrdMw = 12,   // + wide-block index
  kOrdUser = 40,
};

}  // namespace

ModelParams ModelParams::init(int num_entities, int num_relations_raw, int num_users,
                              const Hyperparams& hp, std::uint64_t seed) {
  hp.validate();
  ModelParams p;
  p.num_entities = num_entities;
  p.num_relations = num_relations_raw + 1;  // + reserved self-loop relation
  p.num_users = num_users;

  const std::size_t s = static_cast<std::size_t>(hp.s);
  const std::size_t ents = static_cast<std::size_t>(num_entities);
  const std::size_t rels = static_cast<std::size_t>(p.num_relations);

  auto add = [&](const std::string& name, int ordinal,
                 std::vector<std::size_t> shape) -> Tensor& {
    p.tensors.push_back({name, ordinal, Tensor(std::move(shape))});
    return p.tensors.back().tensor;
  };
  auto embed = [&](const std::string& name, int ordinal,
                   std::vector<std::size_t> shape) {
    Tensor& t = add(name, ordinal, std::move(shape));
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(ordinal)));
    t.fill_uniform(rng, -kEmbedBound, kEmbedBound);
  };
  auto weight = [&](const std::string& name, int ordinal,
                    std::vector<std::size_t> shape, std::size_t fan_in,
                    std::size_t fan_out) {
    Tensor& t = add(name, ordinal, std::move(shape));
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(ordinal)));
    double b = xavier_bound(fan_in, fan_out);
    t.fill_uniform(rng, -b, b);
  };
  auto bias = [&](const std::string& name, int ordinal,
                  std::vector<std::size_t> shape) {
    add(name, ordinal, std::move(shape));  // zeros
  };

  const AblationFlags& ab = hp.ablation;
  embed("entity_emb", kOrdEntity, {ents, s});
  embed("relation_vec", kOrdRelVec, {rels, s});
  if (ab.uo_k) {
    embed("relation_mat", kOrdRelMat, {rels, s, s});
    weight("W_a", kOrdWa, {2 * s}, 2 * s, 1);
    weight("W_o", kOrdWo, {s, (static_cast<std::size_t>(hp.l_p) + 1) * s},
           (static_cast<std::size_t>(hp.l_p) + 1) * s, s);
    bias("b_o", kOrdBo, {s});
  } else {
    embed("user_emb", kOrdUser, {static_cast<std::size_t>(num_users), s});
  }
  if (ab.uo_r) {
    weight("W_r", kOrdWr, {3 * s}, 3 * s, 1);
    bias("b_r", kOrdBr, {1});
  }
  if (ab.uo_e) {
    weight("W_e", kOrdWe, {s, s}, s, s);
    bias("b_e", kOrdBe, {s});
  }
  if (ab.ml_d) {
    weight("W_v", kOrdWv, {s, s}, s, s);
    bias("b_v", kOrdBv, {s});
    if (ab.ml_w) {
      for (int w = 1; w <= hp.l_w; ++w) {
        weight("M_w." + std::to_string(w), kOrdMw + w,
               {s, static_cast<std::size_t>(hp.l_d) * s},
               static_cast<std::size_t>(hp.l_d) * s, s);
      }
    }
  }
  return p;
}

int ModelParams::find(const std::string& name) const {
  for (std::size_t i = 0; i < tensors.size(); ++i)
    if (tensors[i].name == name) return static_cast<int>(i);
  return -1;
}

Tensor& ModelParams::at(const std::string& name) {
  int i = find(name);
  check(i >= 0, "parameter tensor not present: ", name);
  return tensors[static_cast<std::size_t>(i)].tensor;
}

const Tensor& ModelParams::at(const std::string& name) const {
  int i = find(name);
  check(i >= 0, "parameter tensor not present: ", name);
  return tensors[static_cast<std::size_t>(i)].tensor;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Named& t : tensors) n += t.tensor.size();
  return n;
}

double ModelParams::l2_norm_sq() const {
  double acc = 0.0;
  for (const Named& t : tensors)
    for (double v : t.tensor.data) acc += v * v;
  return acc;
}

bool ModelParams::operator==(const ModelParams& o) const {
  if (tensors.size() != o.tensors.size()) return false;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name != o.tensors[i].name) return false;
    if (tensors[i].tensor.shape != o.tensors[i].tensor.shape) return false;
    if (tensors[i].tensor.data != o.tensors[i].tensor.data) return false;
  }
  return true;
}

std::size_t expected_parameter_count(int num_entities, int num_relations_with_self,
                                     int num_users, const Hyperparams& hp) {
  const std::size_t s = static_cast<std::size_t>(hp.s);
  const std::size_t e = static_cast<std::size_t>(num_entities);
  const std::size_t r = static_cast<std::size_t>(num_relations_with_self);
  const AblationFlags& ab = hp.ablation;
  std::size_t n = e * s + r * s;  // entity_emb + relation_vec
  if (ab.uo_k)
    n += r * s * s + 2 * s + s * (static_cast<std::size_t>(hp.l_p) + 1) * s + s;
  else
    n += static_cast<std::size_t>(num_users) * s;
  if (ab.uo_r) n += 3 * s + 1;
  if (ab.uo_e) n += s * s + s;
  if (ab.ml_d) {
    n += s * s + s;
    if (ab.ml_w) n += static_cast<std::size_t>(hp.l_w) * s *
                      (static_cast<std::size_t>(hp.l_d) * s);
  }
  return n;
}

Graph::NodeId LeafCache::whole(int tensor_idx) { return row(tensor_idx, -1); }

Graph::NodeId LeafCache::whole(const std::string& name) {
  int i = params_.find(name);
  check(i >= 0, "parameter tensor not present: ", name);
  return whole(i);
}

Graph::NodeId LeafCache::row(const std::string& name, int r) {
  int i = params_.find(name);
  check(i >= 0, "parameter tensor not present: ", name);
  return row(i, r);
}

Graph::NodeId LeafCache::row(int tensor_idx, int r) {
  std::uint64_t key = (static_cast<std::uint64_t>(tensor_idx) << 33) ^
                      static_cast<std::uint64_t>(r + 1);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;

  const Tensor& t = params_.tensors[static_cast<std::size_t>(tensor_idx)].tensor;
  Graph::NodeId node;
  if (r < 0) {
    int rows = static_cast<int>(t.shape[0]);
    int cols = t.shape.size() > 1 ? static_cast<int>(t.shape[1]) : 1;
    node = g_.leaf(t.data.data(), rows, cols);
  } else {
    check(r < static_cast<int>(t.shape[0]), "row ", r, " out of range for ",
          params_.tensors[static_cast<std::size_t>(tensor_idx)].name);
    if (t.shape.size() == 3) {
      node = g_.leaf(t.row(static_cast<std::size_t>(r)),
                     static_cast<int>(t.shape[1]), static_cast<int>(t.shape[2]));
    } else {
      node = g_.leaf(t.row(static_cast<std::size_t>(r)),
                     static_cast<int>(t.shape[1]), 1);
    }
  }
  cache_.emplace(key, node);
  entries_.push_back({tensor_idx, r, node});
  return node;
}

namespace {

Graph::NodeId project_node(Graph& g, LeafCache& lc, Graph::NodeId e_node,
                           Graph::NodeId u_node, const Hyperparams& hp) {
  if (!hp.ablation.uo_e) return e_node;
  Graph::NodeId pre =
      g.add(g.matvec(lc.whole("W_e"), g.add(e_node, u_node)), lc.whole("b_e"));
  return hp.projection_nonlinear ? g.relu(pre) : pre;
}

Graph::NodeId attention_logit_node(Graph& g, LeafCache& lc, Graph::NodeId u_node,
                                   int relation, Graph::NodeId head_repr,
                                   const Hyperparams& hp) {
  if (!hp.ablation.uo_r) return g.constant_scalar(0.0);
  std::array<Graph::NodeId, 3> parts{u_node, lc.row("relation_vec", relation),
                                     head_repr};
  return g.add(g.dot(lc.whole("W_r"), g.concat(parts)), lc.whole("b_r"));
}

struct UserReprNodes {
  Graph::NodeId u;
  Graph::NodeId hop0_weights = -1;
  std::vector<Graph::NodeId> hop_weights;
  std::vector<Graph::NodeId> responses;  // o^0 .. o^{l_p}
};

UserReprNodes user_repr_node(Graph& g, LeafCache& lc, int user, int item_entity,
                             const PreferenceSets& prefs, const Hyperparams& hp) {
  UserReprNodes out;
  if (!hp.ablation.uo_k) {
    out.u = lc.row("user_emb", user);
    return out;
  }
  check(user < prefs.num_users, "no preference sets for user ", user);
  check(prefs.k_m == hp.k_m, "preference set k_m ", prefs.k_m,
        " does not match hyperparameter ", hp.k_m);
  check(prefs.hops >= std::max(hp.l_p, 1), "preference sets hold ", prefs.hops,
        " hops, need ", std::max(hp.l_p, 1));

  Graph::NodeId v_emb = lc.row("entity_emb", item_entity);

  // Hop 0: heads of S^1 weighted by softmax over W_a [h_i, v].
  auto s1 = prefs.hop(user, 1);
  std::vector<Graph::NodeId> heads, logits;
  heads.reserve(s1.size());
  logits.reserve(s1.size());
  for (const Triple& t : s1) {
    Graph::NodeId h = lc.row("entity_emb", t.head);
    heads.push_back(h);
    std::array<Graph::NodeId, 2> hv{h, v_emb};
    logits.push_back(g.dot(lc.whole("W_a"), g.concat(hv)));
  }
  out.hop0_weights = g.softmax(g.concat(logits));
  out.responses.push_back(g.weighted_sum(out.hop0_weights, heads));

  // Hops 1..l_p: tails weighted by softmax over v^T R_i h_i.
  for (int p = 1; p <= hp.l_p; ++p) {
    auto sp = prefs.hop(user, p);
    std::vector<Graph::NodeId> tails, lg;
    tails.reserve(sp.size());
    lg.reserve(sp.size());
    for (const Triple& t : sp) {
      Graph::NodeId h = lc.row("entity_emb", t.head);
      Graph::NodeId rm = lc.row("relation_mat", t.relation);
      lg.push_back(g.dot(v_emb, g.matvec(rm, h)));
      tails.push_back(lc.row("entity_emb", t.tail));
    }
    Graph::NodeId k = g.softmax(g.concat(lg));
    out.hop_weights.push_back(k);
    out.responses.push_back(g.weighted_sum(k, tails));
  }

  Graph::NodeId o_u =
      out.responses.size() == 1 ? out.responses[0] : g.concat(out.responses);
  out.u = g.add(g.matvec(lc.whole("W_o"), o_u), lc.whole("b_o"));
  return out;
}

Graph::NodeId mixing_node(Graph& g, LeafCache& lc, int item_entity,
                          Graph::NodeId u_node, const NeighborTable& nbrs,
                          const Hyperparams& hp, ForwardNodes& trace) {
  const int depth = hp.mix_depth();
  const int k_n = hp.k_n;

  // Receptive field: flattened sample paths per level, duplicates kept.
  trace.level_entities.assign(static_cast<std::size_t>(depth) + 1, {});
  trace.level_relations.assign(static_cast<std::size_t>(depth) + 1, {});
  trace.level_entities[0] = {item_entity};
  if (depth > 0) {
    check(nbrs.k_n == k_n, "neighbor table k_n ", nbrs.k_n,
          " does not match hyperparameter ", k_n);
    for (int j = 1; j <= depth; ++j) {
      const auto& parents = trace.level_entities[static_cast<std::size_t>(j) - 1];
      auto& ents = trace.level_entities[static_cast<std::size_t>(j)];
      auto& rels = trace.level_relations[static_cast<std::size_t>(j)];
      ents.reserve(parents.size() * k_n);
      rels.reserve(parents.size() * k_n);
      for (int parent : parents) {
        check(parent < nbrs.num_entities, "receptive field entity ", parent,
              " not covered by the neighbor table");
        for (const Edge& e : nbrs.row(parent)) {
          ents.push_back(e.neighbor);
          rels.push_back(e.relation);
        }
      }
    }
  }

  // Projected base representation of every path entity.
  std::vector<std::vector<Graph::NodeId>> base(static_cast<std::size_t>(depth) + 1);
  for (int j = 0; j <= depth; ++j) {
    const auto& ents = trace.level_entities[static_cast<std::size_t>(j)];
    base[static_cast<std::size_t>(j)].reserve(ents.size());
    for (int ent : ents)
      base[static_cast<std::size_t>(j)].push_back(
          project_node(g, lc, lc.row("entity_emb", ent), u_node, hp));
  }
  if (depth == 0) return base[0][0];

  // Per-parent neighbor weights from the projected base representations;
  // shared across deep sweeps and wide blocks.
  trace.level_weight_nodes.assign(static_cast<std::size_t>(depth), {});
  for (int j = 0; j < depth; ++j) {
    const auto& parents = trace.level_entities[static_cast<std::size_t>(j)];
    auto& wn = trace.level_weight_nodes[static_cast<std::size_t>(j)];
    wn.reserve(parents.size());
    for (std::size_t p = 0; p < parents.size(); ++p) {
      std::vector<Graph::NodeId> logits;
      logits.reserve(static_cast<std::size_t>(k_n));
      for (int q = 0; q < k_n; ++q) {
        int rel = trace.level_relations[static_cast<std::size_t>(j) + 1]
                                       [p * static_cast<std::size_t>(k_n) + q];
        logits.push_back(attention_logit_node(
            g, lc, u_node, rel, base[static_cast<std::size_t>(j)][p], hp));
      }
      wn.push_back(g.softmax(g.concat(logits)));
    }
  }

  // Wide blocks: l_d aggregation sweeps each, then layer mixing. A block
  // consumes l_d levels of the receptive field.
  std::vector<std::vector<Graph::NodeId>> cur = base;
  for (int blk = 1; blk <= hp.l_w; ++blk) {
    int levels_in = depth - (blk - 1) * hp.l_d;
    // deep[d][j][p]: representation after d aggregations, level j.
    std::vector<std::vector<std::vector<Graph::NodeId>>> deep(
        static_cast<std::size_t>(hp.l_d) + 1);
    deep[0].assign(cur.begin(), cur.begin() + levels_in + 1);
    for (int d = 1; d <= hp.l_d; ++d) {
      auto& out_level = deep[static_cast<std::size_t>(d)];
      out_level.resize(static_cast<std::size_t>(levels_in - d) + 1);
      for (int j = 0; j + d <= levels_in; ++j) {
        const auto& parents = trace.level_entities[static_cast<std::size_t>(j)];
        auto& dst = out_level[static_cast<std::size_t>(j)];
        dst.reserve(parents.size());
        for (std::size_t p = 0; p < parents.size(); ++p) {
          const auto& child_vals = deep[static_cast<std::size_t>(d) - 1]
                                       [static_cast<std::size_t>(j) + 1];
          std::span<const Graph::NodeId> children(
              child_vals.data() + p * static_cast<std::size_t>(k_n),
              static_cast<std::size_t>(k_n));
          Graph::NodeId n = g.weighted_sum(
              trace.level_weight_nodes[static_cast<std::size_t>(j)][p], children);
          Graph::NodeId self =
              deep[static_cast<std::size_t>(d) - 1][static_cast<std::size_t>(j)][p];
          Graph::NodeId h =
              g.relu(g.add(g.matvec(lc.whole("W_v"), g.add(self, n)),
                           lc.whole("b_v")));
          dst.push_back(h);
        }
      }
    }
    int levels_out = levels_in - hp.l_d;
    std::vector<std::vector<Graph::NodeId>> next(
        static_cast<std::size_t>(levels_out) + 1);
    for (int j = 0; j <= levels_out; ++j) {
      std::size_t n_paths = trace.level_entities[static_cast<std::size_t>(j)].size();
      next[static_cast<std::size_t>(j)].reserve(n_paths);
      for (std::size_t p = 0; p < n_paths; ++p) {
        if (hp.ablation.ml_w) {
          std::vector<Graph::NodeId> parts;
          parts.reserve(static_cast<std::size_t>(hp.l_d));
          for (int d = 1; d <= hp.l_d; ++d)
            parts.push_back(
                deep[static_cast<std::size_t>(d)][static_cast<std::size_t>(j)][p]);
          Graph::NodeId mixed = g.matvec(
              lc.whole("M_w." + std::to_string(blk)),
              parts.size() == 1 ? parts[0] : g.concat(parts));
          next[static_cast<std::size_t>(j)].push_back(mixed);
        } else {
          next[static_cast<std::size_t>(j)].push_back(
              deep[static_cast<std::size_t>(hp.l_d)][static_cast<std::size_t>(j)][p]);
        }
      }
    }
    cur = std::move(next);
  }
  return cur[0][0];
}

}  // namespace

ForwardNodes build_forward(Graph& g, LeafCache& lc, int user, int item,
                           const PreferenceSets& prefs, const NeighborTable& nbrs,
                           const ModelParams& params, const Hyperparams& hp,
                           const InteractionSet& inter) {
  check(user >= 0 && user < inter.num_users, "user id ", user, " out of range");
  check(item >= 0 && item < inter.num_items, "item id ", item, " out of range");
  int item_entity = inter.item_to_entity[static_cast<std::size_t>(item)];
  check(item_entity >= 0 && item_entity < params.num_entities, "item ", item,
        " maps to entity ", item_entity, " outside the parameter table");

  ForwardNodes out;
  UserReprNodes ur = user_repr_node(g, lc, user, item_entity, prefs, hp);
  out.user = ur.u;
  out.hop0_weights = ur.hop0_weights;
  out.hop_weights = std::move(ur.hop_weights);
  out.item_final = mixing_node(g, lc, item_entity, out.user, nbrs, hp, out);
  out.prob = g.sigmoid(g.dot(out.user, out.item_final));
  return out;
}

UserRepresentation kg_user_repr(int user, int item, const PreferenceSets& prefs,
                                const ModelParams& params, const Hyperparams& hp,
                                const InteractionSet& inter) {
  check(user >= 0 && user < inter.num_users, "user id ", user, " out of range");
  check(item >= 0 && item < inter.num_items, "item id ", item, " out of range");
  int item_entity = inter.item_to_entity[static_cast<std::size_t>(item)];

  Graph g;
  LeafCache lc(g, params);
  UserReprNodes ur = user_repr_node(g, lc, user, item_entity, prefs, hp);

  UserRepresentation rep;
  auto uv = g.value(ur.u);
  rep.u.assign(uv.begin(), uv.end());
  for (Graph::NodeId o : ur.responses) {
    auto ov = g.value(o);
    rep.hop_responses.emplace_back(ov.begin(), ov.end());
  }
  if (hp.ablation.uo_k) {
    auto a = g.value(ur.hop0_weights);
    std::vector<UserRepresentation::WeightedTriple> hop0;
    auto s1 = prefs.hop(user, 1);
    for (std::size_t i = 0; i < a.size(); ++i) hop0.push_back({s1[i], a[i]});
    rep.attention.push_back(std::move(hop0));
    for (int p = 1; p <= hp.l_p; ++p) {
      auto k = g.value(ur.hop_weights[static_cast<std::size_t>(p) - 1]);
      auto sp = prefs.hop(user, p);
      std::vector<UserRepresentation::WeightedTriple> hop;
      for (std::size_t i = 0; i < k.size(); ++i) hop.push_back({sp[i], k[i]});
      rep.attention.push_back(std::move(hop));
    }
  }
  return rep;
}

std::vector<double> project_entity(const std::vector<double>& e,
                                   const std::vector<double>& u,
                                   const ModelParams& params, const Hyperparams& hp) {
  if (!hp.ablation.uo_e) return e;
  check(e.size() == u.size() && static_cast<int>(e.size()) == hp.s,
        "project_entity: shape mismatch, |e|=", e.size(), " |u|=", u.size(),
        " s=", hp.s);
  Graph g;
  LeafCache lc(g, params);
  Graph::NodeId en = g.constant(e.data(), static_cast<int>(e.size()), 1);
  Graph::NodeId un = g.constant(u.data(), static_cast<int>(u.size()), 1);
  Graph::NodeId pn = project_node(g, lc, en, un, hp);
  auto v = g.value(pn);
  return {v.begin(), v.end()};
}

double relation_attention(const std::vector<double>& u, const std::vector<double>& r,
                          const std::vector<double>& v, const ModelParams& params,
                          const Hyperparams& hp) {
  if (!hp.ablation.uo_r) return 0.0;
  check(u.size() == r.size() && r.size() == v.size(),
        "relation_attention: shape mismatch, |u|=", u.size(), " |r|=", r.size(),
        " |v|=", v.size());
  Graph g;
  LeafCache lc(g, params);
  std::array<Graph::NodeId, 3> parts{
      g.constant(u.data(), static_cast<int>(u.size()), 1),
      g.constant(r.data(), static_cast<int>(r.size()), 1),
      g.constant(v.data(), static_cast<int>(v.size()), 1)};
  Graph::NodeId score =
      g.add(g.dot(lc.whole("W_r"), g.concat(parts)), lc.whole("b_r"));
  return g.value(score)[0];
}

std::vector<double> mixing_layer(int item, const std::vector<double>& user_vec,
                                 const NeighborTable& nbrs, const ModelParams& params,
                                 const Hyperparams& hp, const InteractionSet& inter) {
  check(item >= 0 && item < inter.num_items, "item id ", item, " out of range");
  check(static_cast<int>(user_vec.size()) == hp.s,
        "mixing_layer: user vector length ", user_vec.size(), " != s ", hp.s);
  int item_entity = inter.item_to_entity[static_cast<std::size_t>(item)];
  Graph g;
  LeafCache lc(g, params);
  Graph::NodeId un =
      g.constant(user_vec.data(), static_cast<int>(user_vec.size()), 1);
  ForwardNodes trace;
  Graph::NodeId vn = mixing_node(g, lc, item_entity, un, nbrs, hp, trace);
  auto v = g.value(vn);
  return {v.begin(), v.end()};
}

double predict(int user, int item, const PreferenceSets& prefs,
               const NeighborTable& nbrs, const ModelParams& params,
               const Hyperparams& hp, const InteractionSet& inter) {
  Graph g;
  LeafCache lc(g, params);
  ForwardNodes f = build_forward(g, lc, user, item, prefs, nbrs, params, hp, inter);
  return g.value(f.prob)[0];
}

AttentionReport export_attention(int user, int item, const PreferenceSets& prefs,
                                 const NeighborTable& nbrs, const ModelParams& params,
                                 const Hyperparams& hp, const InteractionSet& inter) {
  Graph g;
  LeafCache lc(g, params);
  ForwardNodes f = build_forward(g, lc, user, item, prefs, nbrs, params, hp, inter);

  AttentionReport rep;
  if (hp.ablation.uo_k) {
    auto a = g.value(f.hop0_weights);
    auto s1 = prefs.hop(user, 1);
    for (std::size_t i = 0; i < a.size(); ++i)
      rep.rows.push_back({"pref", 0, s1[i].head, s1[i].relation, s1[i].tail, a[i]});
    for (int p = 1; p <= hp.l_p; ++p) {
      auto k = g.value(f.hop_weights[static_cast<std::size_t>(p) - 1]);
      auto sp = prefs.hop(user, p);
      for (std::size_t i = 0; i < k.size(); ++i)
        rep.rows.push_back(
            {"pref", p, sp[i].head, sp[i].relation, sp[i].tail, k[i]});
    }
  }
  for (std::size_t j = 0; j < f.level_weight_nodes.size(); ++j) {
    const auto& parents = f.level_entities[j];
    for (std::size_t p = 0; p < parents.size(); ++p) {
      auto w = g.value(f.level_weight_nodes[j][p]);
      for (std::size_t q = 0; q < w.size(); ++q) {
        std::size_t child = p * w.size() + q;
        rep.rows.push_back({"nbr", static_cast<int>(j) + 1, parents[p],
                            f.level_relations[j + 1][child],
                            f.level_entities[j + 1][child], w[q]});
      }
    }
  }
  return rep;
}

std::string AttentionReport::to_csv() const {
  std::ostringstream os;
  os << "scope,hop,head_id,relation_id,tail_id,weight\n";
  os << std::setprecision(17);
  for (const AttentionRow& r : rows)
    os << r.scope << ',' << r.hop << ',' << r.head << ',' << r.relation << ','
       << r.tail << ',' << r.weight << '\n';
  return os.str();
}

}  // namespace mvin
