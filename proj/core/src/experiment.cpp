// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "forgetlab/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "forgetlab/checkpoint.hpp"
#include "forgetlab/errors.hpp"
#include "forgetlab/forensics.hpp"
#include "forgetlab/rng.hpp"
#include "json_io.hpp"

namespace forgetlab::experiment {

namespace fs = std::filesystem;
using nlohmann::json;
using nanoformer::Model;

namespace {

// ---- config parsing --------------------------------------------------------

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string name = path_.empty() ? key : path_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(name + " must be a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError(name + " must be a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(name + " must be a number");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) throw ConfigError(name + " must be a non-negative integer");
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!it->is_array()) throw ConfigError(name + " must be an array of numbers");
      for (const auto& e : *it) {
        if (!e.is_number()) throw ConfigError(name + " must be an array of numbers");
      }
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!it->is_array()) throw ConfigError(name + " must be an array of strings");
      for (const auto& e : *it) {
        if (!e.is_string()) throw ConfigError(name + " must be an array of strings");
      }
    }
    out = it->get<T>();
  }

  Reader child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    static const json empty = json::object();
    return Reader(it == j_.end() ? empty : *it, path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + where(it.key()) + "'");
    }
  }

 private:
  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_phase(Reader r, PhaseConfig& p) {
  r.get("epochs", p.epochs);
  r.get("lr", p.lr);
  r.get("batch_size", p.batch_size);
  r.get("eval_each", p.eval_each);
  r.finish();
}

void read_split(Reader r, corpusgen::SplitSizes& s) {
  r.get("train", s.train);
  r.get("dev", s.dev);
  r.get("test", s.test);
  r.finish();
}

json phase_json(const PhaseConfig& p) {
  return {{"epochs", p.epochs}, {"lr", p.lr}, {"batch_size", p.batch_size}, {"eval_each", p.eval_each}};
}

json split_json(const corpusgen::SplitSizes& s) { return {{"train", s.train}, {"dev", s.dev}, {"test", s.test}}; }

corpusgen::DomainPairOptions pair_options(const DataConfig& d) {
  corpusgen::DomainPairOptions o;
  o.vocab_size = d.vocab_size;
  o.min_len = d.min_len;
  o.max_len = d.max_len;
  o.general_reorder = corpusgen::ReorderRule::parse(d.general_reorder);
  o.in_domain_reorder = corpusgen::ReorderRule::parse(d.in_domain_reorder);
  return o;
}

std::vector<std::string> default_matrices(std::size_t layers) {
  const std::string last = std::to_string(layers - 1);
  return {"enc.0.SA.w_q", "enc." + last + ".FFN.w_1", "dec.0.SA.w_v",
          "dec.0.CA.w_k", "dec." + last + ".FFN.w_2", "dec.-.Out.w_o"};
}

void validate_phase(const PhaseConfig& p, const std::string& name) {
  if (p.epochs == 0) throw ConfigError(name + ".epochs must be positive");
  if (p.batch_size == 0) throw ConfigError(name + ".batch_size must be positive");
  if (p.eval_each == 0) throw ConfigError(name + ".eval_each must be positive");
  if (!(p.lr >= 0.0) || !std::isfinite(p.lr)) throw ConfigError(name + ".lr must be finite and non-negative");
}

// ---- output helpers --------------------------------------------------------

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << text;
  if (!out.flush()) throw std::runtime_error(path.string() + ": write failed");
}

void write_csv(const fs::path& path, const std::string& hash, const std::string& body) {
  write_file(path, "# config_hash=" + hash + "\n" + body);
}

void write_json(const fs::path& path, const std::string& hash, const std::string& command, json result) {
  json j{{"config_hash", hash}, {"command", command}, {"result", std::move(result)}};
  write_file(path, j.dump(2) + "\n");
}

void save_checkpoint(const fs::path& path, const Model& model, const std::string& hash) {
  auto c = checkpoint::to_container(model);
  c.sections.front().meta["config_hash"] = hash;
  checkpoint::save(path, c);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void say(const RunOptions& o, const std::string& line) {
  if (o.log) *o.log << line << std::endl;
}

// ---- shared stages ---------------------------------------------------------

constexpr std::size_t kGeneralTest = 0, kInDomainTest = 1, kGeneralDev = 2, kInDomainDev = 3;

trainer::TrainOptions phase_options(const ExperimentConfig& c, const PhaseConfig& p, std::uint64_t salt,
                                    const RunOptions& run) {
  trainer::TrainOptions t;
  t.epochs = p.epochs;
  t.lr = p.lr;
  t.batch_size = p.batch_size;
  t.eval_each = p.eval_each;
  t.seed = mix_seed(c.seed, salt);
  if (run.log) {
    t.on_epoch = [log = run.log](const std::string& phase, const trainer::EpochRecord& r) {
      std::ostringstream os;
      os << phase << " epoch " << r.epoch;
      if (r.epoch > 0) os << " loss " << fixed(r.train_loss, 4);
      for (const auto& s : r.scores) os << ' ' << s.label << ' ' << fixed(s.bleu, 2);
      os << " (" << fixed(r.wall_seconds, 1) << "s)";
      *log << os.str() << std::endl;
    };
  }
  return t;
}

trainer::TrainOptions general_options(const ExperimentConfig& c, const RunOptions& run) {
  auto t = phase_options(c, c.training, 21, run);
  t.select_on = kGeneralDev;
  t.restore_best = true;
  return t;
}

trainer::TrainOptions continual_options(const ExperimentConfig& c, const RunOptions& run) {
  auto t = phase_options(c, c.continual, 22, run);
  t.select_on = kInDomainDev;
  return t;
}

Model load_matching(const std::string& path, const ExperimentConfig& c) {
  Model m = checkpoint::load_model(path);
  if (!(m.config() == c.model)) throw ConfigError("checkpoint " + path + " was built with a different model config");
  return m;
}

struct Stage {
  Model model;
  std::optional<trainer::TrainLog> log;
};

Stage general_stage(const ExperimentConfig& c, const Workspace& ws, const RunOptions& run) {
  if (!c.general_checkpoint.empty()) {
    say(run, "general model from " + c.general_checkpoint);
    return {load_matching(c.general_checkpoint, c), std::nullopt};
  }
  Model model(c.model);
  auto log = trainer::train(model, ws.general.train, ws.eval_sets(), general_options(c, run));
  return {std::move(model), std::move(log)};
}

Stage continual_stage(const ExperimentConfig& c, const Workspace& ws, const Model& general, const RunOptions& run) {
  if (!c.continual_checkpoint.empty()) {
    say(run, "continual model from " + c.continual_checkpoint);
    return {load_matching(c.continual_checkpoint, c), std::nullopt};
  }
  Model model = general;
  auto log = trainer::continual_train(model, ws.in_domain.train, trainer::FreezeSpec::none(), ws.eval_sets(),
                                      continual_options(c, run));
  return {std::move(model), std::move(log)};
}

forensics::ImportanceMap importance_of(const ExperimentConfig& c, const Model& model,
                                       const std::vector<corpusgen::SentencePair>& data, const std::string& domain,
                                       const RunOptions& run) {
  say(run, "importance on " + domain + " (" + std::to_string(std::min(c.analysis.t_limit, data.size())) +
               " sentences)");
  return forensics::accumulate_importance(model, data, {c.analysis.t_limit, 1.0}, domain);
}

json parse_json(const std::string& text) { return json::parse(text); }

}  // namespace

// ---- config ------------------------------------------------------------------

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader r(root, "");
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  r.get("general_checkpoint", c.general_checkpoint);
  r.get("continual_checkpoint", c.continual_checkpoint);

  std::size_t src_vocab = 0, tgt_vocab = 0;
  {
    Reader m = r.child("model");
    m.get("num_layers", c.model.num_layers);
    m.get("d_model", c.model.d_model);
    m.get("d_ffn", c.model.d_ffn);
    m.get("num_heads", c.model.num_heads);
    m.get("max_len", c.model.max_len);
    m.get("dropout", c.model.dropout);
    m.get("seed", c.model.seed);
    m.get("pre_norm", c.model.pre_norm);
    m.get("src_vocab", src_vocab);
    m.get("tgt_vocab", tgt_vocab);
    m.finish();
  }
  {
    Reader d = r.child("data");
    d.get("seed", c.data.seed);
    d.get("overlap", c.data.overlap);
    d.get("vocab_size", c.data.vocab_size);
    d.get("min_len", c.data.min_len);
    d.get("max_len", c.data.max_len);
    d.get("general_reorder", c.data.general_reorder);
    d.get("in_domain_reorder", c.data.in_domain_reorder);
    read_split(d.child("general"), c.data.general);
    read_split(d.child("in_domain"), c.data.in_domain);
    d.finish();
  }
  read_phase(r.child("training"), c.training);
  read_phase(r.child("continual"), c.continual);
  {
    Reader a = r.child("analysis");
    a.get("grouping", c.analysis.grouping);
    a.get("layer_norm_with_host", c.analysis.layer_norm_with_host);
    a.get("t_limit", c.analysis.t_limit);
    a.get("fractions", c.analysis.fractions);
    a.get("matrices", c.analysis.matrices);
    a.get("drift_modules", c.analysis.drift_modules);
    a.finish();
  }
  r.finish();

  const auto pair = corpusgen::make_domain_pair(c.data.seed, c.data.overlap, pair_options(c.data));
  if ((src_vocab && src_vocab != pair.vocab.source_size) || (tgt_vocab && tgt_vocab != pair.vocab.target_size)) {
    throw ConfigError("model.src_vocab/tgt_vocab are derived from the data (" + std::to_string(pair.vocab.source_size) +
                      "/" + std::to_string(pair.vocab.target_size) + ") and cannot be set to other values");
  }
  c.model.src_vocab = pair.vocab.source_size;
  c.model.tgt_vocab = pair.vocab.target_size;
  c.model.validate();
  if (c.model.max_len < c.data.max_len + 1) {
    throw ConfigError("model.max_len must be at least data.max_len + 1 (" + std::to_string(c.data.max_len + 1) + ")");
  }
  for (const auto* s : {&c.data.general, &c.data.in_domain}) {
    if (s->train == 0 || s->dev == 0 || s->test == 0) throw ConfigError("data split sizes must all be positive");
  }
  validate_phase(c.training, "training");
  validate_phase(c.continual, "continual");
  if (c.analysis.grouping != "position" && c.analysis.grouping != "type" && c.analysis.grouping != "both") {
    throw ConfigError("analysis.grouping must be position, type or both");
  }
  if (c.analysis.t_limit < 1) throw ConfigError("analysis.t_limit must be at least 1");
  if (c.analysis.fractions.empty()) c.analysis.fractions = forensics::default_fractions();
  if (c.analysis.fractions.front() != 0.0) throw ConfigError("analysis.fractions must start at 0");
  for (std::size_t i = 1; i < c.analysis.fractions.size(); ++i) {
    if (!(c.analysis.fractions[i] > c.analysis.fractions[i - 1])) {
      throw ConfigError("analysis.fractions must be strictly increasing");
    }
  }
  if (c.analysis.fractions.back() > 1.0) throw ConfigError("analysis.fractions must not exceed 1");
  if (c.analysis.matrices.empty()) c.analysis.matrices = default_matrices(c.model.num_layers);

  const Model probe(c.model);
  for (const auto* list : {&c.analysis.matrices, &c.analysis.drift_modules}) {
    for (const auto& tag : *list) {
      if (!probe.find(tag)) throw ConfigError("unknown parameter tag '" + tag + "' in analysis");
    }
  }
  for (const auto& tag : c.analysis.drift_modules) {
    if (probe.param(tag).numel() < 10) throw ConfigError("drift module '" + tag + "' has fewer than ten parameters");
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["general_checkpoint"] = c.general_checkpoint;
  j["continual_checkpoint"] = c.continual_checkpoint;
  j["model"] = c.model;
  j["data"] = {{"seed", c.data.seed},
               {"overlap", c.data.overlap},
               {"vocab_size", c.data.vocab_size},
               {"min_len", c.data.min_len},
               {"max_len", c.data.max_len},
               {"general_reorder", c.data.general_reorder},
               {"in_domain_reorder", c.data.in_domain_reorder},
               {"general", split_json(c.data.general)},
               {"in_domain", split_json(c.data.in_domain)}};
  j["training"] = phase_json(c.training);
  j["continual"] = phase_json(c.continual);
  j["analysis"] = {{"grouping", c.analysis.grouping},
                   {"layer_norm_with_host", c.analysis.layer_norm_with_host},
                   {"t_limit", c.analysis.t_limit},
                   {"fractions", c.analysis.fractions},
                   {"matrices", c.analysis.matrices},
                   {"drift_modules", c.analysis.drift_modules}};
  return j.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

fs::path make_run_dir(const ExperimentConfig& config, const std::string& command, bool overwrite) {
  const fs::path base = fs::path(config.output_dir) / command;
  fs::create_directories(base);
  if (overwrite) {
    const fs::path dir = base / "latest";
    fs::remove_all(dir);
    fs::create_directory(dir);
    return dir;
  }
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "run-%Y%m%d-%H%M%S", &tm);
  fs::path dir = base / stamp;
  for (int n = 1; !fs::create_directory(dir); ++n) dir = base / (std::string(stamp) + "-" + std::to_string(n));
  return dir;
}

// ---- workspace -----------------------------------------------------------------

std::vector<trainer::EvalSet> Workspace::eval_sets() const {
  return {{"G_test", general.test}, {"I_test", in_domain.test}, {"G_dev", general.dev}, {"I_dev", in_domain.dev}};
}

Workspace build_workspace(const ExperimentConfig& c) {
  Workspace ws;
  ws.domains = corpusgen::make_domain_pair(c.data.seed, c.data.overlap, pair_options(c.data));
  ws.general = corpusgen::sample_corpus(ws.domains.general, c.data.general, mix_seed(c.seed, 11));
  ws.in_domain = corpusgen::sample_corpus(ws.domains.in_domain, c.data.in_domain, mix_seed(c.seed, 12));
  return ws;
}

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"forgetting", "modules", "importance", "erasure", "drift"};
  return names;
}

namespace {

struct Run {
  fs::path dir;
  std::string hash;
  Workspace ws;
};

Run start(const ExperimentConfig& c, const std::string& command, const RunOptions& o) {
  Run r;
  r.hash = config_hash(c);
  r.dir = make_run_dir(c, command, o.overwrite);
  write_file(r.dir / "config.json", dump_config(c));
  say(o, command + ": writing to " + r.dir.string() + " (config " + r.hash + ")");
  r.ws = build_workspace(c);
  write_file(r.dir / "domains.txt", r.ws.domains.general.describe() + "\n" + r.ws.domains.in_domain.describe());
  return r;
}

}  // namespace

// ---- subcommands -----------------------------------------------------------

fs::path cmd_forgetting(const ExperimentConfig& c, const RunOptions& o) {
  Run run = start(c, "forgetting", o);
  Stage g = general_stage(c, run.ws, o);
  save_checkpoint(run.dir / "general.ckpt", g.model, run.hash);

  Model model = g.model;
  auto log = trainer::continual_train(model, run.ws.in_domain.train, trainer::FreezeSpec::none(), run.ws.eval_sets(),
                                      continual_options(c, o));
  save_checkpoint(run.dir / "continual.ckpt", model, run.hash);

  std::ostringstream csv;
  csv << "phase,epoch,step,train_loss";
  for (const auto& e : run.ws.eval_sets()) csv << ',' << e.label << "_bleu," << e.label << "_loss";
  csv << '\n';
  std::size_t step = 0;
  auto rows = [&](const trainer::TrainLog& l) {
    for (const auto& r : l.epochs) {
      if (r.epoch == 0) continue;
      csv << l.phase << ',' << r.epoch << ',' << ++step << ',' << fixed(r.train_loss, 6);
      if (r.scores.empty()) {
        for (std::size_t i = 0; i < run.ws.eval_sets().size(); ++i) csv << ",,";
      }
      for (const auto& s : r.scores) csv << ',' << fixed(s.bleu, 4) << ',' << fixed(s.loss, 6);
      csv << '\n';
    }
  };
  if (g.log) rows(*g.log);
  rows(log);
  write_csv(run.dir / "forgetting.csv", run.hash, csv.str());

  const auto& before = log.epochs.front();
  const auto& last = log.last();
  json summary{{"general_before", trainer::TrainLog::bleu_of(before, "G_test")},
               {"in_domain_before", trainer::TrainLog::bleu_of(before, "I_test")},
               {"general_final", trainer::TrainLog::bleu_of(last, "G_test")},
               {"in_domain_final", trainer::TrainLog::bleu_of(last, "I_test")},
               {"general_best", trainer::TrainLog::bleu_of(log.best(), "G_test")},
               {"in_domain_best", trainer::TrainLog::bleu_of(log.best(), "I_test")},
               {"best_epoch", *log.best_epoch}};
  summary["general_drop"] = summary["general_before"].get<double>() - summary["general_final"].get<double>();
  json logs = json::array();
  if (g.log) logs.push_back(parse_json(g.log->to_json()));
  logs.push_back(parse_json(log.to_json()));
  write_json(run.dir / "forgetting.json", run.hash, "forgetting", {{"summary", summary}, {"logs", logs}});
  say(o, "forgetting: G " + fixed(summary["general_before"].get<double>(), 2) + " -> " +
             fixed(summary["general_final"].get<double>(), 2) + ", I " +
             fixed(summary["in_domain_before"].get<double>(), 2) + " -> " +
             fixed(summary["in_domain_final"].get<double>(), 2));
  return run.dir;
}

fs::path cmd_modules(const ExperimentConfig& c, const RunOptions& o) {
  Run run = start(c, "modules", o);
  Stage g = general_stage(c, run.ws, o);
  save_checkpoint(run.dir / "general.ckpt", g.model, run.hash);

  trainer::SweepSetup setup;
  setup.in_domain_train = run.ws.in_domain.train;
  setup.general_label = "G_test";
  setup.in_domain_label = "I_test";
  setup.evals = run.ws.eval_sets();
  setup.options = continual_options(c, RunOptions{});
  setup.grouping_options.layer_norm_with_host = c.analysis.layer_norm_with_host;
  setup.jobs = o.jobs;

  std::vector<nanoformer::Grouping> groupings;
  if (c.analysis.grouping != "type") groupings.push_back(nanoformer::Grouping::Position);
  if (c.analysis.grouping != "position") groupings.push_back(nanoformer::Grouping::Type);
  for (auto grouping : groupings) {
    const std::string name(nanoformer::to_string(grouping));
    say(o, "modules: " + name + " sweep on " + std::to_string(o.jobs) + " worker(s)");
    const auto rows = trainer::run_strategy_sweep(g.model, grouping, setup);
    write_csv(run.dir / ("modules_" + name + ".csv"), run.hash, trainer::sweep_to_csv(rows));
    write_json(run.dir / ("modules_" + name + ".json"), run.hash, "modules",
               {{"grouping", name}, {"rows", parse_json(trainer::sweep_to_json(rows))}});
  }
  return run.dir;
}

fs::path cmd_importance(const ExperimentConfig& c, const RunOptions& o) {
  Run run = start(c, "importance", o);
  Stage g = general_stage(c, run.ws, o);
  Stage i = continual_stage(c, run.ws, g.model, o);
  save_checkpoint(run.dir / "general.ckpt", g.model, run.hash);
  save_checkpoint(run.dir / "continual.ckpt", i.model, run.hash);

  const auto map_g = importance_of(c, g.model, run.ws.general.train, "G", o);
  const auto map_i = importance_of(c, i.model, run.ws.in_domain.train, "I", o);
  forensics::save_importance(run.dir / "importance_G.ckpt", g.model, map_g);
  forensics::save_importance(run.dir / "importance_I.ckpt", i.model, map_i);

  fs::create_directory(run.dir / "heatmaps");
  std::ostringstream csv;
  csv << "tag,rows,cols,spearman_G_I\n";
  json rows = json::array();
  for (const auto& tag : c.analysis.matrices) {
    for (const auto* map : {&map_g, &map_i}) {
      const fs::path stem = run.dir / "heatmaps" / (tag + "." + map->domain);
      forensics::export_heatmap(*map, tag, stem.string() + ".png", stem.string() + ".csv",
                                {"config_hash=" + run.hash, "domain=" + map->domain});
    }
    const auto& a = map_g.at(tag);
    const auto& b = map_i.at(tag);
    const double rho = forensics::spearman({a.values().begin(), a.values().end()}, {b.values().begin(), b.values().end()});
    csv << tag << ',' << a.rows() << ',' << a.cols() << ',' << fixed(rho, 6) << '\n';
    rows.push_back({{"tag", tag}, {"rows", a.rows()}, {"cols", a.cols()}, {"spearman_G_I", rho}});
  }
  write_csv(run.dir / "stability.csv", run.hash, csv.str());
  write_json(run.dir / "stability.json", run.hash, "importance",
             {{"examples_G", map_g.examples}, {"examples_I", map_i.examples}, {"matrices", rows}});
  return run.dir;
}

fs::path cmd_erasure(const ExperimentConfig& c, const RunOptions& o) {
  Run run = start(c, "erasure", o);
  Stage g = general_stage(c, run.ws, o);
  save_checkpoint(run.dir / "general.ckpt", g.model, run.hash);
  const auto map_g = importance_of(c, g.model, run.ws.general.train, "G", o);
  forensics::save_importance(run.dir / "importance_G.ckpt", g.model, map_g);

  std::vector<forensics::ErasureCurve> curves;
  std::ostringstream summary;
  summary << "tag,descending_mean_bleu,ascending_mean_bleu,descending_below\n";
  json summary_json = json::array();
  for (const auto& tag : c.analysis.matrices) {
    say(o, "erasure: " + tag);
    auto desc = forensics::erase_and_eval(g.model, map_g, tag, forensics::Ordering::Descending, c.analysis.fractions,
                                          run.ws.general.test, "G_test", o.jobs);
    auto asc = forensics::erase_and_eval(g.model, map_g, tag, forensics::Ordering::Ascending, c.analysis.fractions,
                                         run.ws.general.test, "G_test", o.jobs);
    const bool has_interior = c.analysis.fractions.size() > 2 || c.analysis.fractions.back() < 1.0;
    if (has_interior) {
      const double d = desc.interior_mean_bleu(), a = asc.interior_mean_bleu();
      summary << tag << ',' << fixed(d, 4) << ',' << fixed(a, 4) << ',' << (d < a ? 1 : 0) << '\n';
      summary_json.push_back({{"tag", tag}, {"descending_mean_bleu", d}, {"ascending_mean_bleu", a}});
    }
    curves.push_back(std::move(desc));
    curves.push_back(std::move(asc));
  }
  write_csv(run.dir / "erasure.csv", run.hash, forensics::curves_to_csv(curves));
  write_csv(run.dir / "erasure_summary.csv", run.hash, summary.str());
  write_json(run.dir / "erasure.json", run.hash, "erasure",
             {{"curves", parse_json(forensics::curves_to_json(curves))}, {"summary", summary_json}});
  return run.dir;
}

fs::path cmd_drift(const ExperimentConfig& c, const RunOptions& o) {
  Run run = start(c, "drift", o);
  Stage g = general_stage(c, run.ws, o);
  Stage i = continual_stage(c, run.ws, g.model, o);
  save_checkpoint(run.dir / "general.ckpt", g.model, run.hash);
  save_checkpoint(run.dir / "continual.ckpt", i.model, run.hash);
  const auto map_g = importance_of(c, g.model, run.ws.general.train, "G", o);
  const auto report = forensics::decile_drift(g.model, i.model, map_g, c.analysis.drift_modules);
  write_csv(run.dir / "drift.csv", run.hash, report.to_csv());
  write_json(run.dir / "drift.json", run.hash, "drift", parse_json(report.to_json()));
  say(o, "drift: top decile " + fixed(report.distance.front(), 6) + ", bottom decile " +
             fixed(report.distance.back(), 6));
  return run.dir;
}

fs::path run_command(const std::string& command, const ExperimentConfig& config, const RunOptions& options) {
  if (command == "forgetting") return cmd_forgetting(config, options);
  if (command == "modules") return cmd_modules(config, options);
  if (command == "importance") return cmd_importance(config, options);
  if (command == "erasure") return cmd_erasure(config, options);
  if (command == "drift") return cmd_drift(config, options);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace forgetlab::experiment
