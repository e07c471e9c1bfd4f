#include "mvin/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace mvin {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

/// Flat key=value file with [section] headers and '#' comment lines.
class KeyValues {
 public:
  explicit KeyValues(const std::string& path) : path_(path) {
    std::ifstream in(path);
    check(in.good(), "cannot open config file: ", path);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[' && t.back() == ']') {
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      std::size_t eq = t.find('=');
      check(eq != std::string::npos, path, ":", line_no, ": expected key = value");
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      check(!key.empty(), path, ":", line_no, ": empty key");
      std::string full = section.empty() ? key : section + "." + key;
      check(!kv_.count(full), path, ":", line_no, ": duplicate key ", full);
      kv_[full] = value;
    }
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    used_.insert(key);
    return it->second;
  }

  long long integer(const std::string& key, long long dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    used_.insert(key);
    char* end = nullptr;
    long long v = std::strtoll(it->second.c_str(), &end, 10);
    check(end && *end == '\0', path_, ": key ", key, ": not an integer: ",
          it->second);
    return v;
  }

  double real(const std::string& key, double dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    used_.insert(key);
    char* end = nullptr;
    double v = std::strtod(it->second.c_str(), &end);
    check(end && *end == '\0', path_, ": key ", key, ": not a number: ",
          it->second);
    return v;
  }

  bool boolean(const std::string& key, bool dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    used_.insert(key);
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    fail(path_, ": key ", key, ": not a boolean: ", v);
  }

  std::vector<int> int_list(const std::string& key, std::vector<int> dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    used_.insert(key);
    std::vector<int> out;
    std::istringstream is(it->second);
    std::string part;
    while (std::getline(is, part, ',')) {
      part = trim(part);
      if (part.empty()) continue;
      char* end = nullptr;
      long long v = std::strtoll(part.c_str(), &end, 10);
      check(end && *end == '\0', path_, ": key ", key, ": bad list entry: ", part);
      out.push_back(static_cast<int>(v));
    }
    return out;
  }

  std::vector<std::string> str_list(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return {};
    used_.insert(key);
    std::vector<std::string> out;
    std::istringstream is(it->second);
    std::string part;
    while (std::getline(is, part, ',')) {
      part = trim(part);
      if (!part.empty()) out.push_back(part);
    }
    return out;
  }

  void reject_unknown() const {
    for (const auto& [key, value] : kv_)
      check(used_.count(key), path_, ": unknown config key: ", key);
  }

 private:
  std::string path_;
  std::map<std::string, std::string> kv_;
  std::set<std::string> used_;
};

}  // namespace

RunConfig RunConfig::load(const std::string& path) {
  KeyValues kv(path);
  RunConfig c;

  c.seed = static_cast<std::uint64_t>(kv.integer("seed", 0));

  c.kg_path = kv.str("data.kg", "");
  c.ratings_path = kv.str("data.ratings", "");
  c.item_map_path = kv.str("data.item_map", "");
  c.rating_threshold = kv.real("data.rating_threshold", 0.0);
  c.g_core = static_cast<int>(kv.integer("data.g_core", 1));

  c.split.train_fraction = kv.real("split.train", 0.6);
  c.split.valid_fraction = kv.real("split.valid", 0.2);
  c.split.test_fraction = kv.real("split.test", 0.2);
  c.split.seed = static_cast<std::uint64_t>(
      kv.integer("split.seed", static_cast<long long>(c.seed)));

  c.hp.s = static_cast<int>(kv.integer("model.s", 16));
  c.hp.l_p = static_cast<int>(kv.integer("model.l_p", 2));
  c.hp.l_w = static_cast<int>(kv.integer("model.l_w", 1));
  c.hp.l_d = static_cast<int>(kv.integer("model.l_d", 2));
  c.hp.k_m = static_cast<int>(kv.integer("model.k_m", 64));
  c.hp.k_n = static_cast<int>(kv.integer("model.k_n", 8));
  c.hp.projection_nonlinear = kv.boolean("model.projection_nonlinear", true);
  for (const std::string& flag : kv.str_list("model.ablate"))
    c.hp.ablation.disable(flag);

  c.train.epochs = static_cast<int>(kv.integer("train.epochs", 200));
  c.train.batch_size = static_cast<int>(kv.integer("train.batch_size", 256));
  std::string opt = kv.str("train.optimizer", "adam");
  if (opt == "adam") c.train.optimizer = TrainConfig::Opt::kAdam;
  else if (opt == "sgd") c.train.optimizer = TrainConfig::Opt::kSgd;
  else fail(path, ": train.optimizer must be adam or sgd, got ", opt);
  c.train.lr = kv.real("train.lr", 1e-2);
  c.train.lambda = kv.real("train.lambda", 1e-7);
  c.train.neg_per_pos = static_cast<int>(kv.integer("train.neg_per_pos", 1));
  c.train.patience = static_cast<int>(kv.integer("train.patience", 5));
  c.train.max_stages = static_cast<int>(kv.integer("train.max_stages", 8));
  c.train.threads = static_cast<int>(kv.integer("train.threads", 1));
  c.train.reinit_per_stage = kv.boolean("train.reinit_per_stage", true);
  c.stagewise = kv.boolean("train.stagewise", true);
  c.train.seed = c.seed;
  c.hp.lr = c.train.lr;
  c.hp.lambda = c.train.lambda;

  c.precision_n = kv.int_list("eval.precision_n", c.precision_n);

  c.sweep_axis = kv.str("sweep.axis", "");
  c.sweep_values = kv.int_list("sweep.values", {});

  c.synth.num_users = static_cast<int>(kv.integer("synth.users", 200));
  c.synth.num_items = static_cast<int>(kv.integer("synth.items", 100));
  c.synth.num_groups = static_cast<int>(kv.integer("synth.groups", 2));
  c.synth.num_entities = static_cast<int>(kv.integer("synth.entities", 300));
  c.synth.num_relations = static_cast<int>(kv.integer("synth.relations", 2));
  c.synth.positives_per_user =
      static_cast<int>(kv.integer("synth.positives_per_user", 0));
  c.synth.noise_edges_per_item =
      static_cast<int>(kv.integer("synth.noise_edges_per_item", 1));
  c.synth.group_out_edges =
      static_cast<int>(kv.integer("synth.group_out_edges", 4));
  c.synth.filler_out_edges =
      static_cast<int>(kv.integer("synth.filler_out_edges", 2));
  c.synth.preference_noise = kv.real("synth.preference_noise", 0.0);

  c.out_dir = kv.str("out.dir", "out");

  kv.reject_unknown();
  return c;
}

void RunConfig::validate_for(const std::string& command) const {
  hp.validate();
  train.validate();
  split.validate();

  bool needs_data = command == "train" || command == "eval" ||
                    command == "sweep" || command == "stats";
  if (needs_data && !kg_path.empty()) {
    for (const std::string* p : {&kg_path, &ratings_path, &item_map_path})
      check(std::filesystem::exists(*p), "missing input file: ", *p);
  }
  if (needs_data && kg_path.empty()) synth.validate();
  if (command == "synth") synth.validate();
  if (command == "sweep") {
    check(!sweep_axis.empty(), "sweep.axis is required for the sweep command");
    check(!sweep_values.empty(), "sweep.values must be a nonempty list");
    static const std::set<std::string> axes = {"k_m", "k_n", "l_p",
                                               "l_w", "l_d", "s"};
    check(axes.count(sweep_axis) > 0, "unknown sweep axis: ", sweep_axis);
  }
}

Dataset load_dataset(const RunConfig& cfg) {
  Dataset d;
  if (cfg.kg_path.empty()) {
    SynthDataset s = synth_dataset(cfg.synth, cfg.seed);
    d.kg = std::move(s.kg);
    d.interactions = std::move(s.interactions);
  } else {
    d.kg = load_kg(cfg.kg_path);
    auto ratings = load_ratings(cfg.ratings_path);
    auto item_map = load_item_map(cfg.item_map_path);
    auto pairs = binarize_ratings(ratings, cfg.rating_threshold);
    pairs = g_core_filter(std::move(pairs), cfg.g_core);
    d.interactions = build_interactions(pairs, item_map, d.kg).interactions;
  }
  d.splits = split_interactions(d.interactions, cfg.split);
  return d;
}

}  // namespace mvin
