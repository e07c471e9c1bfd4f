#include "mvin/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mvin {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

// Independent seed streams derived from the run seed.
enum Stream : std::uint64_t {
  kStreamInit = 1,
  kStreamShuffle = 2,
  kStreamNegatives = 3,
  kStreamValidNeg = 4,
};

constexpr double kDivergenceLimit = 1e6;

}  // namespace

void TrainConfig::validate() const {
  check(epochs >= 1, "epochs must be >= 1, got ", epochs);
  check(batch_size >= 1, "batch_size must be >= 1, got ", batch_size);
  check(lr >= 0.0, "learning rate must be >= 0, got ", lr);
  check(lambda >= 0.0, "lambda must be >= 0, got ", lambda);
  check(neg_per_pos >= 1, "neg_per_pos must be >= 1, got ", neg_per_pos);
  check(patience >= 1, "patience must be >= 1, got ", patience);
  check(max_stages >= 1, "max_stages must be >= 1, got ", max_stages);
}

std::vector<int> sample_negatives(int user, const InteractionSet& train, int n,
                                  Rng& rng) {
  check(user >= 0 && user < train.num_users, "user id ", user, " out of range");
  const auto& pos = train.positives[static_cast<std::size_t>(user)];
  check(static_cast<int>(pos.size()) < train.num_items, "user ", user,
        " is positive on every item; no negatives exist");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int item;
    do {
      item = static_cast<int>(
          rng.uniform_index(static_cast<std::size_t>(train.num_items)));
    } while (std::binary_search(pos.begin(), pos.end(), item));
    out.push_back(item);
  }
  return out;
}

GradBuffer::GradBuffer(const ModelParams& params) {
  grads.reserve(params.tensors.size());
  for (const auto& t : params.tensors) grads.emplace_back(t.tensor.shape);
}

void GradBuffer::zero() {
  for (Tensor& g : grads) std::fill(g.data.begin(), g.data.end(), 0.0);
}

void GradBuffer::add_row(int tensor, int row, std::span<const double> g) {
  Tensor& dst = grads[static_cast<std::size_t>(tensor)];
  double* p = row < 0 ? dst.data.data() : dst.row(static_cast<std::size_t>(row));
  for (std::size_t i = 0; i < g.size(); ++i) p[i] += g[i];
}

void GradBuffer::scale(double c) {
  for (Tensor& g : grads)
    for (double& v : g.data) v *= c;
}

void GradBuffer::add_l2(const ModelParams& params, double lambda) {
  if (lambda == 0.0) return;
  for (std::size_t t = 0; t < grads.size(); ++t) {
    const auto& src = params.tensors[t].tensor.data;
    auto& dst = grads[t].data;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += 2.0 * lambda * src[i];
  }
}

namespace {

/// Per-example gradient sink: leaf identities plus their gradient values,
/// so parallel workers can run independently and accumulation can replay in
/// example order.
struct ExampleSink {
  struct Entry {
    int tensor;
    int row;
    int off;
    int len;
  };
  std::vector<Entry> entries;
  std::vector<double> buf;
  double loss = 0.0;
  std::string error;

  void clear() {
    entries.clear();
    buf.clear();
    loss = 0.0;
    error.clear();
  }
};

void process_example(const Example& ex, const PreferenceSets& prefs,
                     const NeighborTable& nbrs, const ModelParams& params,
                     const Hyperparams& hp, const InteractionSet& inter,
                     ExampleSink& sink) {
  sink.clear();
  static thread_local Graph g;
  g.reset();
  try {
    LeafCache lc(g, params);
    ForwardNodes f =
        build_forward(g, lc, ex.user, ex.item, prefs, nbrs, params, hp, inter);
    Graph::NodeId ln = g.bce(f.prob, static_cast<double>(ex.label));
    g.backward(ln);
    sink.loss = g.value(ln)[0];
    for (const LeafCache::Entry& e : lc.entries()) {
      auto gr = g.grad(e.node);
      sink.entries.push_back({e.tensor, e.row, static_cast<int>(sink.buf.size()),
                              static_cast<int>(gr.size())});
      sink.buf.insert(sink.buf.end(), gr.begin(), gr.end());
    }
  } catch (const Error& err) {
    sink.error = err.what();
  }
}

void run_examples(const std::vector<Example>& examples, const PreferenceSets& prefs,
                  const NeighborTable& nbrs, const ModelParams& params,
                  const Hyperparams& hp, const InteractionSet& inter, int threads,
                  std::vector<ExampleSink>& sinks) {
  if (sinks.size() < examples.size()) sinks.resize(examples.size());
  if (threads == 1) {
    for (std::size_t i = 0; i < examples.size(); ++i)
      process_example(examples[i], prefs, nbrs, params, hp, inter, sinks[i]);
  } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) num_threads(threads > 0 ? threads : omp_get_max_threads())
#endif
    for (long long i = 0; i < static_cast<long long>(examples.size()); ++i)
      process_example(examples[static_cast<std::size_t>(i)], prefs, nbrs, params,
                      hp, inter, sinks[static_cast<std::size_t>(i)]);
  }
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!sinks[i].error.empty())
      fail("example (user=", examples[i].user, ", item=", examples[i].item,
           ", label=", examples[i].label, "): ", sinks[i].error);
  }
}

/// Ordered accumulation keeps the reduction order fixed, so serial and
/// parallel runs produce bit-identical gradients.
double accumulate(const std::vector<ExampleSink>& sinks, std::size_t count,
                  GradBuffer& gb) {
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const ExampleSink& s = sinks[i];
    loss_sum += s.loss;
    for (const ExampleSink::Entry& e : s.entries)
      gb.add_row(e.tensor, e.row,
                 {s.buf.data() + e.off, static_cast<std::size_t>(e.len)});
  }
  return loss_sum;
}

}  // namespace

double loss(const std::vector<Example>& batch, const PreferenceSets& prefs,
            const NeighborTable& nbrs, const ModelParams& params,
            const Hyperparams& hp, const TrainConfig& cfg,
            const InteractionSet& inter) {
  check(!batch.empty(), "loss of an empty batch");
  Graph g;
  double sum = 0.0;
  for (const Example& ex : batch) {
    check(ex.label == 0 || ex.label == 1, "label must be 0/1, got ", ex.label);
    g.reset();
    LeafCache lc(g, params);
    ForwardNodes f =
        build_forward(g, lc, ex.user, ex.item, prefs, nbrs, params, hp, inter);
    sum += g.value(g.bce(f.prob, static_cast<double>(ex.label)))[0];
  }
  return sum / static_cast<double>(batch.size()) +
         cfg.lambda * params.l2_norm_sq();
}

GradBuffer loss_gradient(const std::vector<Example>& batch,
                         const PreferenceSets& prefs, const NeighborTable& nbrs,
                         const ModelParams& params, const Hyperparams& hp,
                         const TrainConfig& cfg, const InteractionSet& inter) {
  check(!batch.empty(), "loss gradient of an empty batch");
  GradBuffer gb(params);
  std::vector<ExampleSink> sinks;
  run_examples(batch, prefs, nbrs, params, hp, inter, cfg.threads, sinks);
  accumulate(sinks, batch.size(), gb);
  gb.scale(1.0 / static_cast<double>(batch.size()));
  gb.add_l2(params, cfg.lambda);
  return gb;
}

Optimizer::Optimizer(const ModelParams& params, const TrainConfig& cfg)
    : kind_(cfg.optimizer), lr_(cfg.lr) {
  if (kind_ == TrainConfig::Opt::kAdam) {
    m_.reserve(params.tensors.size());
    v_.reserve(params.tensors.size());
    for (const auto& t : params.tensors) {
      m_.emplace_back(t.tensor.shape);
      v_.emplace_back(t.tensor.shape);
    }
  }
}

void Optimizer::step(ModelParams& params, const GradBuffer& g) {
  check(g.grads.size() == params.tensors.size(), "gradient/parameter mismatch");
  if (kind_ == TrainConfig::Opt::kSgd) {
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
      auto& p = params.tensors[t].tensor.data;
      const auto& gr = g.grads[t].data;
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * gr[i];
    }
    return;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    auto& p = params.tensors[t].tensor.data;
    const auto& gr = g.grads[t].data;
    auto& m = m_[t].data;
    auto& v = v_[t].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * gr[i];
      v[i] = b2 * v[i] + (1.0 - b2) * gr[i] * gr[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

namespace {

InteractionSet union_positives(const SplitResult& splits) {
  InteractionSet u = splits.train;
  for (int usr = 0; usr < u.num_users; ++usr) {
    auto& dst = u.positives[static_cast<std::size_t>(usr)];
    for (const InteractionSet* part : {&splits.valid, &splits.test}) {
      const auto& src = part->positives[static_cast<std::size_t>(usr)];
      dst.insert(dst.end(), src.begin(), src.end());
    }
    std::sort(dst.begin(), dst.end());
    dst.erase(std::unique(dst.begin(), dst.end()), dst.end());
  }
  return u;
}

std::vector<std::pair<int, int>> train_pairs(const InteractionSet& train) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(train.total_interactions());
  for (int u = 0; u < train.num_users; ++u)
    for (int item : train.positives[static_cast<std::size_t>(u)])
      pairs.emplace_back(u, item);
  return pairs;
}

/// Thread-local-graph scorer over the current parameters.
std::function<double(int, int)> make_scorer(const PreferenceSets& prefs,
                                            const NeighborTable& nbrs,
                                            const ModelParams& params,
                                            const Hyperparams& hp,
                                            const InteractionSet& inter) {
  return [&prefs, &nbrs, &params, &hp, &inter](int user, int item) {
    static thread_local Graph g;
    g.reset();
    LeafCache lc(g, params);
    ForwardNodes f = build_forward(g, lc, user, item, prefs, nbrs, params, hp, inter);
    return g.value(f.prob)[0];
  };
}

Checkpoint run_stage(ModelParams params, const PreferenceSets& prefs,
                     const NeighborTable& nbrs, const SplitResult& splits,
                     const std::vector<EvalPair>& valid_pairs,
                     const TrainConfig& cfg, const Hyperparams& hp, int stage,
                     std::uint64_t stage_seed, std::vector<EpochLog>& log) {
  const InteractionSet& inter = splits.train;
  std::vector<std::pair<int, int>> pairs = train_pairs(splits.train);
  check(!pairs.empty(), "train split is empty");
  check(!valid_pairs.empty(), "validation split is empty");

  Optimizer opt(params, cfg);
  GradBuffer gb(params);
  std::vector<ExampleSink> sinks;
  std::vector<Example> examples;

  ModelParams best_params = params;
  double best_auc = -1.0;
  int best_epoch = 0;
  int stall = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, kStreamShuffle,
                             static_cast<std::uint64_t>(stage),
                             static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = pairs.size(); i > 1; --i)
      std::swap(pairs[i - 1], pairs[shuffle_rng.uniform_index(i)]);

    const std::uint64_t neg_base =
        mix_seed(cfg.seed, kStreamNegatives, static_cast<std::uint64_t>(stage),
                 static_cast<std::uint64_t>(epoch));

    double epoch_loss_sum = 0.0;
    std::size_t epoch_examples = 0;
    for (std::size_t begin = 0; begin < pairs.size();
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end =
          std::min(begin + static_cast<std::size_t>(cfg.batch_size), pairs.size());
      examples.clear();
      for (std::size_t i = begin; i < end; ++i) {
        auto [u, item] = pairs[i];
        examples.push_back({u, item, 1});
        Rng neg_rng(mix_seed(neg_base, static_cast<std::uint64_t>(i)));
        for (int neg : sample_negatives(u, splits.train, cfg.neg_per_pos, neg_rng))
          examples.push_back({u, neg, 0});
      }

      run_examples(examples, prefs, nbrs, params, hp, inter, cfg.threads, sinks);
      gb.zero();
      double batch_loss = accumulate(sinks, examples.size(), gb) /
                          static_cast<double>(examples.size());
      check(std::isfinite(batch_loss) && batch_loss <= kDivergenceLimit,
            "training diverged: batch loss ", batch_loss, " at stage ", stage,
            " epoch ", epoch);
      gb.scale(1.0 / static_cast<double>(examples.size()));
      gb.add_l2(params, cfg.lambda);
      opt.step(params, gb);

      epoch_loss_sum += batch_loss * static_cast<double>(examples.size());
      epoch_examples += examples.size();
    }

    ScoredSet valid_scored = score_pairs(
        valid_pairs, make_scorer(prefs, nbrs, params, hp, inter), cfg.threads);
    double v_auc = auc(valid_scored);
    double v_acc = acc(valid_scored);
    double train_loss = epoch_loss_sum / static_cast<double>(epoch_examples) +
                        cfg.lambda * params.l2_norm_sq();
    log.push_back({stage, epoch, train_loss, v_auc, v_acc});

    if (v_auc > best_auc) {
      best_auc = v_auc;
      best_params = params;
      best_epoch = epoch;
      stall = 0;
    } else if (++stall >= cfg.patience) {
      break;
    }
  }

  Checkpoint ck;
  ck.params = std::move(best_params);
  ck.stage = stage;
  ck.epoch = best_epoch;
  ck.valid_auc = best_auc;
  ck.base_seed = cfg.seed;
  ck.sampler_seed = stage_seed;
  ck.hp = hp;
  return ck;
}

/// Entity and relation embeddings persist across stages; everything else is
/// stage-local.
const char* const kKgEmbeddingTables[] = {"entity_emb", "relation_vec",
                                          "relation_mat"};

}  // namespace

TrainResult train_regular(const KnowledgeGraph& kg, const SplitResult& splits,
                          const TrainConfig& cfg, const Hyperparams& hp) {
  cfg.validate();
  hp.validate();
  TrainResult res;
  std::uint64_t stage_seed = resample(cfg.seed, 1);
  res.stage_seeds.push_back(stage_seed);

  NeighborTable nbrs = sample_neighbors(kg, hp.k_n, stage_seed,
                                        DanglingPolicy::kSelfLoop, cfg.threads);
  PreferenceSets prefs = build_preference_sets(kg, splits.train, hp.l_p, hp.k_m,
                                               stage_seed, cfg.threads);
  ModelParams params =
      ModelParams::init(kg.num_entities, kg.num_relations, splits.train.num_users,
                        hp, mix_seed(cfg.seed, kStreamInit, 1));
  if (cfg.capture_stage_starts) res.stage_starts.push_back(params);

  InteractionSet all = union_positives(splits);
  std::vector<EvalPair> valid_pairs =
      ctr_pairs(splits.valid, all, mix_seed(cfg.seed, kStreamValidNeg, 1));

  res.best = run_stage(std::move(params), prefs, nbrs, splits, valid_pairs, cfg, hp,
                       1, stage_seed, res.log);
  return res;
}

TrainResult train_stagewise(const KnowledgeGraph& kg, const SplitResult& splits,
                            const TrainConfig& cfg, const Hyperparams& hp) {
  cfg.validate();
  hp.validate();
  check(hp.ablation.sw, "stage-wise training requires the sw ablation flag");

  TrainResult res;
  InteractionSet all = union_positives(splits);
  std::optional<Checkpoint> best;

  for (int stage = 1; stage <= cfg.max_stages; ++stage) {
    std::uint64_t stage_seed = resample(cfg.seed, stage);
    res.stage_seeds.push_back(stage_seed);

    NeighborTable nbrs = sample_neighbors(kg, hp.k_n, stage_seed,
                                          DanglingPolicy::kSelfLoop, cfg.threads);
    PreferenceSets prefs = build_preference_sets(kg, splits.train, hp.l_p, hp.k_m,
                                                 stage_seed, cfg.threads);

    ModelParams params = ModelParams::init(
        kg.num_entities, kg.num_relations, splits.train.num_users, hp,
        mix_seed(cfg.seed, kStreamInit, static_cast<std::uint64_t>(stage)));
    if (best) {
      if (cfg.reinit_per_stage) {
        for (const char* name : kKgEmbeddingTables)
          if (params.has(name)) params.at(name) = best->params.at(name);
      } else {
        params = best->params;
      }
    }
    if (cfg.capture_stage_starts) res.stage_starts.push_back(params);

    std::vector<EvalPair> valid_pairs = ctr_pairs(
        splits.valid, all,
        mix_seed(cfg.seed, kStreamValidNeg, static_cast<std::uint64_t>(stage)));

    Checkpoint ck = run_stage(std::move(params), prefs, nbrs, splits, valid_pairs,
                              cfg, hp, stage, stage_seed, res.log);
    bool improved = !best || ck.valid_auc > best->valid_auc + cfg.stage_improve_eps;
    if (!best || ck.valid_auc > best->valid_auc) best = std::move(ck);
    if (!improved) break;
  }
  res.best = std::move(*best);
  return res;
}

std::string EpochLog::row() const {
  std::ostringstream os;
  os << std::setprecision(17) << epoch << ',' << stage << ',' << train_loss << ','
     << valid_auc << ',' << valid_acc;
  return os.str();
}

namespace {

template <typename T>
void write_raw(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T read_raw(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
void write_string(std::ofstream& f, const std::string& s) {
  write_raw(f, static_cast<std::uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_string(std::ifstream& f) {
  auto n = read_raw<std::uint32_t>(f);
  std::string s(n, '\0');
  f.read(s.data(), n);
  return s;
}

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "cannot write file: ", path);
  f.write("MVINCKPT", 8);
  write_raw(f, kCheckpointVersion);
  write_raw(f, static_cast<std::int32_t>(stage));
  write_raw(f, static_cast<std::int32_t>(epoch));
  write_raw(f, valid_auc);
  write_raw(f, base_seed);
  write_raw(f, sampler_seed);

  write_raw(f, static_cast<std::int32_t>(hp.s));
  write_raw(f, static_cast<std::int32_t>(hp.l_p));
  write_raw(f, static_cast<std::int32_t>(hp.l_w));
  write_raw(f, static_cast<std::int32_t>(hp.l_d));
  write_raw(f, static_cast<std::int32_t>(hp.k_m));
  write_raw(f, static_cast<std::int32_t>(hp.k_n));
  write_raw(f, hp.lambda);
  write_raw(f, hp.lr);
  std::uint8_t flags[7] = {
      static_cast<std::uint8_t>(hp.projection_nonlinear),
      static_cast<std::uint8_t>(hp.ablation.uo_e),
      static_cast<std::uint8_t>(hp.ablation.uo_r),
      static_cast<std::uint8_t>(hp.ablation.uo_k),
      static_cast<std::uint8_t>(hp.ablation.ml_w),
      static_cast<std::uint8_t>(hp.ablation.ml_d),
      static_cast<std::uint8_t>(hp.ablation.sw)};
  f.write(reinterpret_cast<const char*>(flags), sizeof flags);

  write_raw(f, static_cast<std::int32_t>(params.num_entities));
  write_raw(f, static_cast<std::int32_t>(params.num_relations));
  write_raw(f, static_cast<std::int32_t>(params.num_users));
  write_raw(f, static_cast<std::uint32_t>(params.tensors.size()));
  for (const ModelParams::Named& t : params.tensors) {
    write_string(f, t.name);
    write_raw(f, static_cast<std::int32_t>(t.ordinal));
    write_raw(f, static_cast<std::uint32_t>(t.tensor.shape.size()));
    for (std::size_t d : t.tensor.shape)
      write_raw(f, static_cast<std::uint64_t>(d));
    f.write(reinterpret_cast<const char*>(t.tensor.data.data()),
            static_cast<std::streamsize>(t.tensor.data.size() * sizeof(double)));
  }
  check(f.good(), "write failed: ", path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "cannot open file: ", path);
  char magic[8];
  f.read(magic, 8);
  check(f.good() && std::memcmp(magic, "MVINCKPT", 8) == 0, path,
        ": not a checkpoint file");
  auto version = read_raw<std::uint32_t>(f);
  check(version == kCheckpointVersion, path, ": unsupported version ", version);

  Checkpoint ck;
  ck.stage = read_raw<std::int32_t>(f);
  ck.epoch = read_raw<std::int32_t>(f);
  ck.valid_auc = read_raw<double>(f);
  ck.base_seed = read_raw<std::uint64_t>(f);
  ck.sampler_seed = read_raw<std::uint64_t>(f);

  ck.hp.s = read_raw<std::int32_t>(f);
  ck.hp.l_p = read_raw<std::int32_t>(f);
  ck.hp.l_w = read_raw<std::int32_t>(f);
  ck.hp.l_d = read_raw<std::int32_t>(f);
  ck.hp.k_m = read_raw<std::int32_t>(f);
  ck.hp.k_n = read_raw<std::int32_t>(f);
  ck.hp.lambda = read_raw<double>(f);
  ck.hp.lr = read_raw<double>(f);
  std::uint8_t flags[7];
  f.read(reinterpret_cast<char*>(flags), sizeof flags);
  ck.hp.projection_nonlinear = flags[0];
  ck.hp.ablation.uo_e = flags[1];
  ck.hp.ablation.uo_r = flags[2];
  ck.hp.ablation.uo_k = flags[3];
  ck.hp.ablation.ml_w = flags[4];
  ck.hp.ablation.ml_d = flags[5];
  ck.hp.ablation.sw = flags[6];

  ck.params.num_entities = read_raw<std::int32_t>(f);
  ck.params.num_relations = read_raw<std::int32_t>(f);
  ck.params.num_users = read_raw<std::int32_t>(f);
  auto n_tensors = read_raw<std::uint32_t>(f);
  ck.params.tensors.reserve(n_tensors);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    ModelParams::Named t;
    t.name = read_string(f);
    t.ordinal = read_raw<std::int32_t>(f);
    auto rank = read_raw<std::uint32_t>(f);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_raw<std::uint64_t>(f));
    t.tensor = Tensor(std::move(shape));
    f.read(reinterpret_cast<char*>(t.tensor.data.data()),
           static_cast<std::streamsize>(t.tensor.data.size() * sizeof(double)));
    ck.params.tensors.push_back(std::move(t));
  }
  check(f.good(), path, ": truncated checkpoint");
  return ck;
}

}  // namespace mvin
