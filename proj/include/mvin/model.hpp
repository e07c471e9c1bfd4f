#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvin/graph.hpp"
#include "mvin/sampler.hpp"
#include "mvin/tensor.hpp"

namespace mvin {

/// Independent component switches; defaults all enabled. Disabling a switch
/// removes the component's parameters from the trainable set entirely.
struct AblationFlags {
  bool uo_e = true;  // user-oriented entity projection
  bool uo_r = true;  // user-oriented relation attention
  bool uo_k = true;  // KG-enhanced user representation
  bool ml_w = true;  // mixing-layer wide part (layer mixing matrices)
  bool ml_d = true;  // mixing-layer deep part (neighbor aggregation)
  bool sw = true;    // stage-wise training

  /// Set a flag to false by name ("uo_e", ..., "sw"); unknown names throw.
  void disable(const std::string& name);
};

struct Hyperparams {
  int s = 16;       // embedding dimension
  int l_p = 2;      // preference hops (0 = clicked items only)
  int l_w = 1;      // wide hops
  int l_d = 2;      // deep hops
  int k_m = 64;     // preference set sample size
  int k_n = 8;      // neighbor sample size
  double lambda = 1e-7;
  double lr = 2e-2;
  bool projection_nonlinear = true;
  AblationFlags ablation;

  void validate() const;
  /// Receptive-field depth of the mixing layer.
  int mix_depth() const { return ablation.ml_d ? l_w * l_d : 0; }
};

/// All trainable tensors, stored in a fixed construction order. Only the
/// parameters of enabled components exist, so the trainable set and the
/// parameter count follow directly from the ablation flags.
struct ModelParams {
  struct Named {
    std::string name;
    int ordinal;  // stable init-stream id, independent of ablation
    Tensor tensor;
  };

  int num_entities = 0;
  int num_relations = 0;  // including the reserved self-loop relation
  int num_users = 0;
  std::vector<Named> tensors;

  /// Uniform [-0.05, 0.05] for embedding tables, fan-based uniform for
  /// weight matrices, zero biases. Each tensor draws from its own seed
  /// stream so shared tensors initialize identically across ablations.
  static ModelParams init(int num_entities, int num_relations_raw, int num_users,
                          const Hyperparams& hp, std::uint64_t seed);

  int find(const std::string& name) const;  // -1 when absent
  bool has(const std::string& name) const { return find(name) >= 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t parameter_count() const;
  double l2_norm_sq() const;

  bool operator==(const ModelParams& o) const;
};

/// KG-enhanced user vector plus the per-hop responses and attention weights
/// behind it.
struct UserRepresentation {
  struct WeightedTriple {
    Triple triple;
    double weight;
  };
  std::vector<double> u;
  std::vector<std::vector<double>> hop_responses;        // o^0 .. o^{l_p}
  std::vector<std::vector<WeightedTriple>> attention;    // index 0: a_i over heads
};

struct AttentionRow {
  std::string scope;  // "pref" or "nbr"
  int hop;
  int head;
  int relation;
  int tail;
  double weight;
};

struct AttentionReport {
  std::vector<AttentionRow> rows;
  std::string to_csv() const;
};

/// Per-example dedup of parameter leaves: one graph leaf per touched
/// (tensor, row) so in-graph reuse accumulates gradients, and the trainer
/// can route leaf gradients back to table rows.
class LeafCache {
 public:
  struct Entry {
    int tensor;  // index into ModelParams::tensors
    int row;     // -1 = whole tensor
    Graph::NodeId node;
  };

  LeafCache(Graph& g, const ModelParams& params) : g_(g), params_(params) {}

  Graph::NodeId whole(int tensor_idx);
  Graph::NodeId whole(const std::string& name);
  Graph::NodeId row(int tensor_idx, int row);
  Graph::NodeId row(const std::string& name, int row);

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  Graph& g_;
  const ModelParams& params_;
  std::vector<Entry> entries_;
  std::unordered_map<std::uint64_t, Graph::NodeId> cache_;
};

/// Node handles of one forward pass, plus the path structure needed to read
/// attention weights back out.
struct ForwardNodes {
  Graph::NodeId user = -1;       // u
  Graph::NodeId item_final = -1; // v'
  Graph::NodeId prob = -1;       // sigmoid(u . v')
  Graph::NodeId hop0_weights = -1;
  std::vector<Graph::NodeId> hop_weights;  // hops 1..l_p
  // Mixing-layer trace: path entities per level, the relation leading to
  // each path (levels >= 1), and one weight softmax node per parent path.
  std::vector<std::vector<int>> level_entities;
  std::vector<std::vector<int>> level_relations;
  std::vector<std::vector<Graph::NodeId>> level_weight_nodes;
};

/// Assemble the full differentiable forward pass for one (user, item) pair:
/// user representation, mixing layer over the item's receptive field, and
/// the click-probability head.
ForwardNodes build_forward(Graph& g, LeafCache& lc, int user, int item,
                           const PreferenceSets& prefs, const NeighborTable& nbrs,
                           const ModelParams& params, const Hyperparams& hp,
                           const InteractionSet& inter);

UserRepresentation kg_user_repr(int user, int item, const PreferenceSets& prefs,
                                const ModelParams& params, const Hyperparams& hp,
                                const InteractionSet& inter);

/// W_e(e + u) + b_e, optionally through the nonlinearity; identity when the
/// projection is ablated.
std::vector<double> project_entity(const std::vector<double>& e,
                                   const std::vector<double>& u,
                                   const ModelParams& params, const Hyperparams& hp);

/// W_r . concat([u, r, v]) + b_r; constant 0 when relation attention is
/// ablated, so normalized weights come out uniform.
double relation_attention(const std::vector<double>& u, const std::vector<double>& r,
                          const std::vector<double>& v, const ModelParams& params,
                          const Hyperparams& hp);

/// Wide x deep aggregation of the item's receptive field given a fixed user
/// vector; returns v'.
std::vector<double> mixing_layer(int item, const std::vector<double>& user_vec,
                                 const NeighborTable& nbrs, const ModelParams& params,
                                 const Hyperparams& hp, const InteractionSet& inter);

double predict(int user, int item, const PreferenceSets& prefs,
               const NeighborTable& nbrs, const ModelParams& params,
               const Hyperparams& hp, const InteractionSet& inter);

AttentionReport export_attention(int user, int item, const PreferenceSets& prefs,
                                 const NeighborTable& nbrs, const ModelParams& params,
                                 const Hyperparams& hp, const InteractionSet& inter);

/// Closed-form count of the trainable set for the active ablation; asserted
/// against ModelParams::parameter_count in tests.
std::size_t expected_parameter_count(int num_entities, int num_relations_with_self,
                                     int num_users, const Hyperparams& hp);

}  // namespace mvin
