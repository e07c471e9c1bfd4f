#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvin/eval.hpp"
#include "mvin/kg.hpp"
#include "mvin/model.hpp"
#include "mvin/rng.hpp"
#include "mvin/sampler.hpp"

namespace mvin {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 256;
  enum class Opt { kSgd, kAdam };
  Opt optimizer = Opt::kAdam;
  double lr = 1e-2;
  double lambda = 1e-7;
  int neg_per_pos = 1;
  int patience = 5;
  int max_stages = 8;
  std::uint64_t seed = 0;
  int threads = 1;  // 1 = serial reference path, 0 = all cores
  /// Alg. 3 reinitializes non-embedding weights at every stage; false keeps
  /// them across stages instead.
  bool reinit_per_stage = true;
  /// A stage counts as an improvement when it beats the previous best
  /// validation AUC by more than this.
  double stage_improve_eps = 1e-4;
  /// Test hook: snapshot the parameters each stage starts from.
  bool capture_stage_starts = false;

  void validate() const;
};

struct Checkpoint {
  ModelParams params;
  int stage = 0;
  int epoch = 0;  // epoch of the best validation AUC within the stage
  double valid_auc = 0.0;
  std::uint64_t base_seed = 0;
  std::uint64_t sampler_seed = 0;
  Hyperparams hp;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

struct EpochLog {
  int stage;
  int epoch;
  double train_loss;
  double valid_auc;
  double valid_acc;

  static std::string header() { return "epoch,stage,train_loss,valid_auc,valid_acc"; }
  std::string row() const;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  std::vector<std::uint64_t> stage_seeds;
  std::vector<ModelParams> stage_starts;  // filled when capture_stage_starts
};

struct Example {
  int user;
  int item;
  int label;
};

/// n items drawn uniformly (with replacement across draws) from the items
/// outside the user's train positives.
std::vector<int> sample_negatives(int user, const InteractionSet& train, int n,
                                  Rng& rng);

/// Mean binary cross-entropy over the batch plus lambda * ||params||^2 over
/// the whole trainable set. Probabilities are clamped to [1e-12, 1 - 1e-12].
double loss(const std::vector<Example>& batch, const PreferenceSets& prefs,
            const NeighborTable& nbrs, const ModelParams& params,
            const Hyperparams& hp, const TrainConfig& cfg,
            const InteractionSet& inter);

/// Dense per-tensor gradient accumulator aligned with ModelParams::tensors.
struct GradBuffer {
  std::vector<Tensor> grads;

  explicit GradBuffer(const ModelParams& params);
  void zero();
  void add_row(int tensor, int row, std::span<const double> g);
  void scale(double c);
  /// + 2 * lambda * theta for every trainable tensor.
  void add_l2(const ModelParams& params, double lambda);
};

/// Analytic gradient of loss() with respect to every parameter; exposed for
/// the finite-difference checks.
GradBuffer loss_gradient(const std::vector<Example>& batch,
                         const PreferenceSets& prefs, const NeighborTable& nbrs,
                         const ModelParams& params, const Hyperparams& hp,
                         const TrainConfig& cfg, const InteractionSet& inter);

class Optimizer {
 public:
  Optimizer(const ModelParams& params, const TrainConfig& cfg);
  void step(ModelParams& params, const GradBuffer& g);

 private:
  TrainConfig::Opt kind_;
  double lr_;
  long long t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Regular training (Alg. 3 top block): minibatch steps, per-epoch
/// validation AUC, early stopping on patience. Tables are sampled with the
/// stage-1 seed so a one-stage stage-wise run matches bit for bit.
TrainResult train_regular(const KnowledgeGraph& kg, const SplitResult& splits,
                          const TrainConfig& cfg, const Hyperparams& hp);

/// Stage-wise training: each stage reinitializes non-embedding parameters,
/// loads the previous best entity/relation embeddings, resamples both
/// tables with the stage seed, and trains; stops when a stage fails to
/// improve validation AUC or max_stages is reached.
TrainResult train_stagewise(const KnowledgeGraph& kg, const SplitResult& splits,
                            const TrainConfig& cfg, const Hyperparams& hp);

}  // namespace mvin
