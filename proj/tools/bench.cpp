// Benchmark of the OpenMP kernels against their serial reference paths on
// the synthetic fixture: table construction, batched loss gradients, and
// evaluation scoring. Also reports the max output difference, which must be
// exactly zero (the parallel paths are bit-identical by construction).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mvin/eval.hpp"
#include "mvin/kg.hpp"
#include "mvin/model.hpp"
#include "mvin/sampler.hpp"
#include "mvin/trainer.hpp"

using namespace mvin;
using Clock = std::chrono::steady_clock;

namespace {

double seconds(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e100;
  for (int i = 0; i < reps; ++i) {
    auto t0 = Clock::now();
    f();
    best = std::min(best, seconds(t0, Clock::now()));
  }
  return best;
}

void report(const char* name, double serial, double parallel, double max_diff) {
  std::printf("%-24s %10.4fs %10.4fs %8.2fx   max|diff|=%g\n", name, serial,
              parallel, serial / parallel, max_diff);
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 0;  // all cores
  if (argc > 1) threads = std::stoi(argv[1]);
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads = %d, using %d\n",
              omp_get_max_threads(), threads > 0 ? threads : omp_get_max_threads());
#else
  std::printf("built without OpenMP; parallel paths run serially\n");
#endif

  SynthSpec spec;
  spec.num_users = 400;
  spec.num_items = 200;
  spec.num_entities = 800;
  SynthDataset data = synth_dataset(spec, 42);
  SplitSpec split_spec;
  split_spec.seed = 42;
  SplitResult splits = split_interactions(data.interactions, split_spec);

  Hyperparams hp;
  hp.s = 16;
  hp.l_p = 2;
  hp.l_w = 1;
  hp.l_d = 2;
  hp.k_m = 32;
  hp.k_n = 8;

  std::printf("%-24s %11s %11s %9s\n", "kernel", "serial", "parallel", "speedup");

  // Neighbor table construction.
  NeighborTable nt_s, nt_p;
  double t_s = time_best_of(3, [&] { nt_s = sample_neighbors(data.kg, hp.k_n, 7, DanglingPolicy::kSelfLoop, 1); });
  double t_p = time_best_of(3, [&] { nt_p = sample_neighbors(data.kg, hp.k_n, 7, DanglingPolicy::kSelfLoop, threads); });
  report("neighbor_table", t_s, t_p, nt_s.rows == nt_p.rows ? 0.0 : 1.0);

  // Preference set construction.
  PreferenceSets ps_s, ps_p;
  t_s = time_best_of(3, [&] { ps_s = build_preference_sets(data.kg, splits.train, hp.l_p, hp.k_m, 7, 1); });
  t_p = time_best_of(3, [&] { ps_p = build_preference_sets(data.kg, splits.train, hp.l_p, hp.k_m, 7, threads); });
  report("preference_sets", t_s, t_p, ps_s.sets == ps_p.sets ? 0.0 : 1.0);

  // Batched loss gradient (the training inner loop).
  ModelParams params = ModelParams::init(data.kg.num_entities, data.kg.num_relations,
                                         splits.train.num_users, hp, 1);
  std::vector<Example> batch;
  Rng rng(3);
  for (int i = 0; i < 2048; ++i) {
    int u = static_cast<int>(rng.uniform_index(
        static_cast<std::size_t>(splits.train.num_users)));
    const auto& pos = splits.train.positives[static_cast<std::size_t>(u)];
    if (pos.empty()) continue;
    batch.push_back({u, pos[rng.uniform_index(pos.size())],
                     static_cast<int>(rng.uniform_index(2))});
  }
  TrainConfig tc_serial;
  tc_serial.threads = 1;
  TrainConfig tc_par;
  tc_par.threads = threads;
  GradBuffer g_s(params), g_p(params);
  t_s = time_best_of(3, [&] {
    g_s = loss_gradient(batch, ps_s, nt_s, params, hp, tc_serial, splits.train);
  });
  t_p = time_best_of(3, [&] {
    g_p = loss_gradient(batch, ps_s, nt_s, params, hp, tc_par, splits.train);
  });
  double max_diff = 0.0;
  for (std::size_t t = 0; t < g_s.grads.size(); ++t)
    for (std::size_t i = 0; i < g_s.grads[t].data.size(); ++i)
      max_diff = std::max(max_diff,
                          std::fabs(g_s.grads[t].data[i] - g_p.grads[t].data[i]));
  report("loss_gradient[2048]", t_s, t_p, max_diff);

  // Evaluation scoring.
  InteractionSet all = data.interactions;
  std::vector<EvalPair> pairs = ctr_pairs(splits.valid, all, 9);
  auto scorer = [&](int u, int v) {
    return predict(u, v, ps_s, nt_s, params, hp, splits.train);
  };
  ScoredSet sc_s, sc_p;
  t_s = time_best_of(3, [&] { sc_s = score_pairs(pairs, scorer, 1); });
  t_p = time_best_of(3, [&] { sc_p = score_pairs(pairs, scorer, threads); });
  max_diff = 0.0;
  for (std::size_t i = 0; i < sc_s.entries.size(); ++i)
    max_diff = std::max(max_diff,
                        std::fabs(sc_s.entries[i].score - sc_p.entries[i].score));
  report("score_pairs", t_s, t_p, max_diff);
  return 0;
}
