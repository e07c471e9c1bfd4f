// mvin: train and evaluate the knowledge-graph recommender from a config file.
//
// Commands: train, eval, sweep, synth, stats.
// Exit status: 0 on success, 2 for usage/config/input problems, 1 for
// runtime failures. Diagnostics go to stderr; data goes to files.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvin/config.hpp"
#include "mvin/eval.hpp"
#include "mvin/kg.hpp"
#include "mvin/model.hpp"
#include "mvin/sampler.hpp"
#include "mvin/trainer.hpp"

namespace fs = std::filesystem;
using namespace mvin;

namespace {

struct CliArgs {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> ablate;
  std::optional<bool> stagewise;
  std::optional<std::string> out_dir;
  std::optional<std::string> checkpoint;  // eval only
};

const char* kUsage =
    "usage: mvin <command> --config <file> [options]\n"
    "\n"
    "commands:\n"
    "  train   train a model and write checkpoint, log, and metric summary\n"
    "  eval    evaluate a checkpoint: AUC/ACC and Precision@N on the test split\n"
    "  sweep   train once per value of one hyperparameter grid axis\n"
    "  synth   write the synthetic fixture dataset as data files\n"
    "  stats   print dataset statistics\n"
    "\n"
    "options:\n"
    "  --config <file>      run configuration (required)\n"
    "  --seed <n>           override the config seed\n"
    "  --ablate <flag>      disable a component (uo_e uo_r uo_k ml_w ml_d sw);\n"
    "                       repeatable\n"
    "  --stagewise <bool>   enable/disable stage-wise training\n"
    "  --out <dir>          override the output directory\n"
    "  --checkpoint <file>  checkpoint to evaluate (eval; default <out>/checkpoint.bin)\n";

CliArgs parse_args(int argc, char** argv) {
  CliArgs a;
  check(argc >= 2, "missing command\n", kUsage);
  a.command = argv[1];
  for (int i = 2; i < argc; ++i) {
    std::string flag = argv[i];
    auto need_value = [&]() -> std::string {
      check(i + 1 < argc, "flag ", flag, " needs a value");
      return argv[++i];
    };
    if (flag == "--config") a.config_path = need_value();
    else if (flag == "--seed") a.seed = std::stoull(need_value());
    else if (flag == "--ablate") a.ablate.push_back(need_value());
    else if (flag == "--stagewise") {
      std::string v = need_value();
      check(v == "true" || v == "false" || v == "1" || v == "0",
            "--stagewise expects a boolean, got ", v);
      a.stagewise = (v == "true" || v == "1");
    } else if (flag == "--out") a.out_dir = need_value();
    else if (flag == "--checkpoint") a.checkpoint = need_value();
    else fail("unknown flag: ", flag, "\n", kUsage);
  }
  check(!a.config_path.empty(), "--config is required\n", kUsage);
  return a;
}

RunConfig load_config(const CliArgs& a) {
  check(fs::exists(a.config_path), "missing config file: ", a.config_path);
  RunConfig cfg = RunConfig::load(a.config_path);
  if (a.seed) {
    cfg.seed = *a.seed;
    cfg.train.seed = *a.seed;
    cfg.split.seed = *a.seed;
  }
  for (const std::string& flag : a.ablate) cfg.hp.ablation.disable(flag);
  if (a.stagewise) cfg.stagewise = *a.stagewise;
  if (a.out_dir) cfg.out_dir = *a.out_dir;
  return cfg;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  check(out.good(), "cannot write file: ", path);
  out << content;
  check(out.good(), "write failed: ", path);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct MetricRow {
  std::string metric;
  double value;
  std::string split;
  std::string n;  // empty when not applicable
};

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os << "metric,value,split,n\n";
  for (const MetricRow& r : rows)
    os << r.metric << ',' << fmt(r.value) << ',' << r.split << ',' << r.n << '\n';
  return os.str();
}

std::string metrics_json(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os << "[\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << "  {\"metric\": \"" << rows[i].metric << "\", \"value\": "
       << fmt(rows[i].value) << ", \"split\": \"" << rows[i].split << "\"";
    if (!rows[i].n.empty()) os << ", \"n\": " << rows[i].n;
    os << "}" << (i + 1 < rows.size() ? "," : "") << "\n";
  }
  os << "]\n";
  return os.str();
}

/// Test-split CTR metrics for a trained model.
std::pair<double, double> test_ctr(const Dataset& d, const PreferenceSets& prefs,
                                   const NeighborTable& nbrs,
                                   const ModelParams& params, const Hyperparams& hp,
                                   const TrainConfig& tc, std::uint64_t seed) {
  InteractionSet all = d.interactions;
  std::vector<EvalPair> pairs = ctr_pairs(d.splits.test, all, mix_seed(seed, 0x7e57));
  auto scorer = [&](int u, int v) {
    return predict(u, v, prefs, nbrs, params, hp, d.splits.train);
  };
  ScoredSet scored = score_pairs(pairs, scorer, tc.threads);
  return {auc(scored), acc(scored)};
}

std::string train_log_text(const TrainResult& res, std::size_t param_count) {
  std::ostringstream os;
  os << "# parameter_count=" << param_count << '\n';
  os << EpochLog::header() << '\n';
  for (const EpochLog& l : res.log) os << l.row() << '\n';
  return os.str();
}

int cmd_train(const RunConfig& cfg) {
  Dataset d = load_dataset(cfg);
  fs::create_directories(cfg.out_dir);

  TrainResult res = cfg.stagewise && cfg.hp.ablation.sw
                        ? train_stagewise(d.kg, d.splits, cfg.train, cfg.hp)
                        : train_regular(d.kg, d.splits, cfg.train, cfg.hp);

  std::size_t param_count = res.best.params.parameter_count();
  std::cerr << "parameter_count=" << param_count << '\n';

  res.best.save(cfg.out_dir + "/checkpoint.bin");
  write_file(cfg.out_dir + "/train_log.csv", train_log_text(res, param_count));

  NeighborTable nbrs = sample_neighbors(d.kg, cfg.hp.k_n, res.best.sampler_seed,
                                        DanglingPolicy::kSelfLoop,
                                        cfg.train.threads);
  PreferenceSets prefs =
      build_preference_sets(d.kg, d.splits.train, cfg.hp.l_p, cfg.hp.k_m,
                            res.best.sampler_seed, cfg.train.threads);
  auto [t_auc, t_acc] =
      test_ctr(d, prefs, nbrs, res.best.params, cfg.hp, cfg.train, cfg.seed);

  std::vector<MetricRow> rows = {
      {"auc", res.best.valid_auc, "valid", ""},
      {"auc", t_auc, "test", ""},
      {"acc", t_acc, "test", ""},
      {"parameter_count", static_cast<double>(param_count), "model", ""},
      {"stages", static_cast<double>(res.best.stage), "model", ""},
  };
  write_file(cfg.out_dir + "/metrics.csv", metrics_csv(rows));
  write_file(cfg.out_dir + "/metrics.json", metrics_json(rows));
  std::cout << "train: best stage " << res.best.stage << " epoch "
            << res.best.epoch << " valid_auc " << fmt(res.best.valid_auc)
            << " test_auc " << fmt(t_auc) << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const CliArgs& args) {
  std::string ck_path =
      args.checkpoint ? *args.checkpoint : cfg.out_dir + "/checkpoint.bin";
  check(fs::exists(ck_path), "missing checkpoint file: ", ck_path);
  Checkpoint ck = Checkpoint::load(ck_path);

  Dataset d = load_dataset(cfg);
  check(ck.params.num_entities == d.kg.num_entities,
        "checkpoint tensor entity_emb: ", ck.params.num_entities,
        " entities, dataset has ", d.kg.num_entities);
  check(ck.params.num_relations == d.kg.num_relations + 1,
        "checkpoint tensor relation_vec: ", ck.params.num_relations,
        " relations, dataset has ", d.kg.num_relations + 1);
  ModelParams expect =
      ModelParams::init(d.kg.num_entities, d.kg.num_relations,
                        d.splits.train.num_users, ck.hp, /*seed=*/0);
  check(expect.tensors.size() == ck.params.tensors.size(),
        "checkpoint holds ", ck.params.tensors.size(), " tensors, config needs ",
        expect.tensors.size());
  for (std::size_t i = 0; i < expect.tensors.size(); ++i) {
    check(expect.tensors[i].name == ck.params.tensors[i].name &&
              expect.tensors[i].tensor.shape == ck.params.tensors[i].tensor.shape,
          "checkpoint tensor ", ck.params.tensors[i].name, ": shape mismatch");
  }

  fs::create_directories(cfg.out_dir);
  NeighborTable nbrs = sample_neighbors(d.kg, ck.hp.k_n, ck.sampler_seed,
                                        DanglingPolicy::kSelfLoop,
                                        cfg.train.threads);
  PreferenceSets prefs =
      build_preference_sets(d.kg, d.splits.train, ck.hp.l_p, ck.hp.k_m,
                            ck.sampler_seed, cfg.train.threads);

  auto [t_auc, t_acc] =
      test_ctr(d, prefs, nbrs, ck.params, ck.hp, cfg.train, cfg.seed);
  std::vector<MetricRow> rows = {{"auc", t_auc, "test", ""},
                                 {"acc", t_acc, "test", ""}};

  // Top-N: rank every item the user has no train/valid interaction with.
  std::vector<double> prec_sum(cfg.precision_n.size(), 0.0);
  std::size_t prec_users = 0;
  for (int u = 0; u < d.splits.test.num_users; ++u) {
    const auto& test_pos = d.splits.test.positives[static_cast<std::size_t>(u)];
    if (test_pos.empty()) continue;
    std::vector<int> candidates;
    candidates.reserve(static_cast<std::size_t>(d.interactions.num_items));
    const auto& tr = d.splits.train.positives[static_cast<std::size_t>(u)];
    const auto& va = d.splits.valid.positives[static_cast<std::size_t>(u)];
    for (int item = 0; item < d.interactions.num_items; ++item) {
      if (std::binary_search(tr.begin(), tr.end(), item)) continue;
      if (std::binary_search(va.begin(), va.end(), item)) continue;
      candidates.push_back(item);
    }
    auto score_item = [&](int item) {
      return predict(u, item, prefs, nbrs, ck.params, ck.hp, d.splits.train);
    };
    bool counted = false;
    for (std::size_t i = 0; i < cfg.precision_n.size(); ++i) {
      int n = cfg.precision_n[i];
      if (static_cast<int>(candidates.size()) < n) continue;
      prec_sum[i] += precision_at_n(score_item, n, candidates, test_pos);
      counted = true;
    }
    if (counted) ++prec_users;
  }
  check(prec_users > 0, "no user has test positives to rank");
  for (std::size_t i = 0; i < cfg.precision_n.size(); ++i)
    rows.push_back({"precision", prec_sum[i] / static_cast<double>(prec_users),
                    "test", std::to_string(cfg.precision_n[i])});

  std::string csv = metrics_csv(rows);
  write_file(cfg.out_dir + "/metrics.csv", csv);
  write_file(cfg.out_dir + "/metrics.json", metrics_json(rows));
  std::cout << csv;
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  std::ostringstream table;
  table << "axis,value,valid_auc,test_auc\n";
  for (int value : cfg.sweep_values) {
    RunConfig run = cfg;
    if (cfg.sweep_axis == "k_m") run.hp.k_m = value;
    else if (cfg.sweep_axis == "k_n") run.hp.k_n = value;
    else if (cfg.sweep_axis == "l_p") run.hp.l_p = value;
    else if (cfg.sweep_axis == "l_w") run.hp.l_w = value;
    else if (cfg.sweep_axis == "l_d") run.hp.l_d = value;
    else if (cfg.sweep_axis == "s") run.hp.s = value;
    run.hp.validate();

    Dataset d = load_dataset(run);
    TrainResult res = run.stagewise && run.hp.ablation.sw
                          ? train_stagewise(d.kg, d.splits, run.train, run.hp)
                          : train_regular(d.kg, d.splits, run.train, run.hp);
    NeighborTable nbrs = sample_neighbors(d.kg, run.hp.k_n, res.best.sampler_seed,
                                          DanglingPolicy::kSelfLoop,
                                          run.train.threads);
    PreferenceSets prefs =
        build_preference_sets(d.kg, d.splits.train, run.hp.l_p, run.hp.k_m,
                              res.best.sampler_seed, run.train.threads);
    auto [t_auc, t_acc] =
        test_ctr(d, prefs, nbrs, res.best.params, run.hp, run.train, run.seed);
    (void)t_acc;
    table << cfg.sweep_axis << ',' << value << ',' << fmt(res.best.valid_auc)
          << ',' << fmt(t_auc) << '\n';
    std::cerr << "sweep " << cfg.sweep_axis << "=" << value << " done\n";
  }
  fs::create_directories(cfg.out_dir);
  write_file(cfg.out_dir + "/sweep.csv", table.str());
  std::cout << table.str();
  return 0;
}

int cmd_synth(const RunConfig& cfg) {
  SynthDataset d = synth_dataset(cfg.synth, cfg.seed);
  fs::create_directories(cfg.out_dir);
  save_kg(d.kg, cfg.out_dir + "/kg.txt");

  std::vector<RatingRecord> ratings;
  for (int u = 0; u < d.interactions.num_users; ++u)
    for (int item : d.interactions.positives[static_cast<std::size_t>(u)])
      ratings.push_back({u, item, 1.0});
  save_ratings(ratings, cfg.out_dir + "/ratings.txt");

  std::vector<std::pair<int, int>> item_map;
  for (int i = 0; i < d.interactions.num_items; ++i)
    item_map.emplace_back(i, d.interactions.item_to_entity[static_cast<std::size_t>(i)]);
  save_item_map(item_map, cfg.out_dir + "/item_map.txt");

  StatsReport s = dataset_stats(d.kg, d.interactions);
  write_file(cfg.out_dir + "/stats.json", s.to_json());
  std::cout << s.to_text();
  return 0;
}

int cmd_stats(const RunConfig& cfg) {
  Dataset d = load_dataset(cfg);
  StatsReport s = dataset_stats(d.kg, d.interactions);
  fs::create_directories(cfg.out_dir);
  write_file(cfg.out_dir + "/stats.json", s.to_json());
  std::cout << s.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CliArgs args;
  RunConfig cfg;
  try {
    args = parse_args(argc, argv);
    cfg = load_config(args);
    cfg.validate_for(args.command);
    if (args.command != "train" && args.command != "eval" &&
        args.command != "sweep" && args.command != "synth" &&
        args.command != "stats")
      fail("unknown command: ", args.command, "\n", kUsage);
  } catch (const std::exception& e) {
    std::cerr << "mvin: " << e.what() << '\n';
    return 2;
  }

  try {
    if (args.command == "train") return cmd_train(cfg);
    if (args.command == "eval") return cmd_eval(cfg, args);
    if (args.command == "sweep") return cmd_sweep(cfg);
    if (args.command == "synth") return cmd_synth(cfg);
    return cmd_stats(cfg);
  } catch (const std::exception& e) {
    std::cerr << "mvin: " << e.what() << '\n';
    return 1;
  }
}
