// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "forgetlab/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "forgetlab/errors.hpp"
#include "forgetlab/metrics.hpp"
#include "forgetlab/parallel.hpp"
#include "forgetlab/rng.hpp"

namespace forgetlab::trainer {

using nanoformer::Grouping;
using nanoformer::ParamGroup;

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

FreezeSpec resolve(const Model& model, FreezeSpec::Mode mode, const std::string& group,
                   const nanoformer::GroupingOptions& options) {
  std::vector<std::string> valid;
  for (Grouping grouping : {Grouping::Position, Grouping::Type}) {
    for (const ParamGroup& g : nanoformer::enumerate_groups(model, grouping, options)) {
      if (g.name == group) {
        FreezeSpec spec;
        spec.mode = mode;
        spec.group = group;
        for (const auto& t : g.tags) spec.tags.insert(t.canonical());
        if (spec.tags.empty()) throw ConfigError("group '" + group + "' resolves to no parameters");
        return spec;
      }
      valid.push_back(g.name);
    }
  }
  std::string list;
  for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
  throw ConfigError("unknown group '" + group + "'; valid groups: " + list);
}

}  // namespace

std::string_view to_string(FreezeSpec::Mode mode) {
  switch (mode) {
    case FreezeSpec::Mode::None:
      return "none";
    case FreezeSpec::Mode::FreezeOnly:
      return "freeze_only";
    case FreezeSpec::Mode::UpdateOnly:
      return "update_only";
  }
  return "?";
}

FreezeSpec FreezeSpec::freeze_only(const Model& model, const std::string& group,
                                   const nanoformer::GroupingOptions& options) {
  return resolve(model, Mode::FreezeOnly, group, options);
}

FreezeSpec FreezeSpec::update_only(const Model& model, const std::string& group,
                                   const nanoformer::GroupingOptions& options) {
  return resolve(model, Mode::UpdateOnly, group, options);
}

FreezeSpec FreezeSpec::from_tags(Mode mode, std::set<std::string> tags) {
  FreezeSpec spec;
  spec.mode = mode;
  spec.tags = std::move(tags);
  return spec;
}

std::vector<bool> FreezeSpec::trainable(const Model& model) const {
  std::vector<bool> flags(model.params().size(), true);
  if (mode == Mode::None) return flags;
  if (tags.empty()) throw ConfigError("freeze spec " + std::string(to_string(mode)) + " has an empty tag set");
  for (const auto& t : tags) {
    if (!model.find(t)) throw ConfigError("freeze spec names unknown parameter '" + t + "'");
  }
  for (std::size_t i = 0; i < flags.size(); ++i) {
    const bool listed = tags.count(model.params()[i].tag.canonical()) > 0;
    flags[i] = mode == Mode::FreezeOnly ? !listed : listed;
  }
  return flags;
}

std::string FreezeSpec::describe() const {
  std::string s(to_string(mode));
  if (!group.empty()) s += "(" + group + ")";
  else if (mode != Mode::None) s += "(" + std::to_string(tags.size()) + " tags)";
  return s;
}

// ---- TrainLog ------------------------------------------------------------

const EpochRecord& TrainLog::best() const {
  if (!best_epoch) throw ContractError("train log has no evaluated epoch");
  for (const auto& r : epochs) {
    if (r.epoch == *best_epoch) return r;
  }
  throw ContractError("train log lost its best epoch");
}

double TrainLog::bleu_of(const EpochRecord& record, const std::string& label) {
  for (const auto& s : record.scores) {
    if (s.label == label) return s.bleu;
  }
  throw ContractError("no score for eval set '" + label + "' in epoch " + std::to_string(record.epoch));
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "phase,strategy,epoch,train_loss";
  if (!epochs.empty()) {
    for (const auto& s : epochs.front().scores) os << ',' << s.label << "_loss," << s.label << "_bleu";
  }
  os << '\n';
  for (const auto& r : epochs) {
    os << phase << ',' << strategy << ',' << r.epoch << ',' << fixed(r.train_loss);
    for (const auto& s : r.scores) os << ',' << fixed(s.loss) << ',' << fixed(s.bleu, 4);
    os << '\n';
  }
  return os.str();
}

std::string TrainLog::to_json() const {
  nlohmann::json j;
  j["phase"] = phase;
  j["strategy"] = strategy;
  j["options"] = {{"epochs", options.epochs},       {"lr", options.lr},
                  {"beta1", options.beta1},         {"beta2", options.beta2},
                  {"eps", options.eps},             {"batch_size", options.batch_size},
                  {"eval_each", options.eval_each}, {"seed", options.seed},
                  {"select_on", options.select_on}, {"restore_best", options.restore_best},
                  {"schedule", "constant (no warmup)"}};
  j["best_epoch"] = best_epoch ? nlohmann::json(*best_epoch) : nlohmann::json(nullptr);
  j["epochs"] = nlohmann::json::array();
  for (const auto& r : epochs) {
    nlohmann::json jr{{"epoch", r.epoch}, {"train_loss", r.train_loss}};
    jr["scores"] = nlohmann::json::array();
    for (const auto& s : r.scores) jr["scores"].push_back({{"label", s.label}, {"loss", s.loss}, {"bleu", s.bleu}});
    j["epochs"].push_back(std::move(jr));
  }
  return j.dump(2);
}

std::string TrainLog::timing_csv() const {
  std::ostringstream os;
  os << "phase,epoch,wall_seconds\n";
  for (const auto& r : epochs) os << phase << ',' << r.epoch << ',' << fixed(r.wall_seconds, 3) << '\n';
  return os.str();
}

// ---- Adam ----------------------------------------------------------------

Adam::Adam(const Model& model, std::vector<bool> trainable, const TrainOptions& options)
    : trainable_(std::move(trainable)),
      first_(model.params().size()),
      second_(model.params().size()),
      lr_(options.lr),
      beta1_(options.beta1),
      beta2_(options.beta2),
      eps_(options.eps) {
  if (trainable_.size() != model.params().size()) throw ContractError("Adam: trainable mask size mismatch");
  for (std::size_t i = 0; i < trainable_.size(); ++i) {
    if (trainable_[i]) {
      first_[i].assign(model.params()[i].tensor.numel(), 0.0);
      second_[i].assign(model.params()[i].tensor.numel(), 0.0);
    }
  }
}

void Adam::step(Model& model) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < trainable_.size(); ++i) {
    if (!trainable_[i]) continue;
    auto& tensor = model.params()[i].tensor;
    const auto grad = tensor.grad();
    if (grad.empty()) continue;
    auto w = tensor.values();
    auto& m = first_[i];
    auto& v = second_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * grad[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * grad[k] * grad[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

// ---- training loops ------------------------------------------------------

namespace {

EpochRecord evaluate_epoch(const Model& model, std::size_t epoch, double train_loss,
                           const std::vector<EvalSet>& evals) {
  EpochRecord r;
  r.epoch = epoch;
  r.train_loss = train_loss;
  for (const auto& e : evals) {
    const auto res = metrics::evaluate(model, e.pairs);
    r.scores.push_back({e.label, res.loss, res.bleu.bleu});
  }
  return r;
}

TrainLog run(Model& model, const std::vector<SentencePair>& pairs, const std::vector<bool>& trainable,
             const std::vector<EvalSet>& evals, const TrainOptions& options, std::string phase,
             std::string strategy) {
  if (options.batch_size == 0) throw ConfigError("training.batch_size must be positive");
  if (options.eval_each == 0) throw ConfigError("training.eval_each must be positive");
  if (!evals.empty() && options.select_on >= evals.size()) {
    throw ConfigError("training.select_on indexes a missing eval set");
  }
  if (pairs.empty()) throw ConfigError("training set is empty");

  const auto& cfg = model.config();
  const auto batches = corpusgen::encode_batches(pairs, {options.batch_size, cfg.src_vocab, cfg.tgt_vocab});

  for (std::size_t i = 0; i < trainable.size(); ++i) {
    auto& t = model.params()[i].tensor;
    t.set_requires_grad(trainable[i]);
    t.clear_grad();
  }

  TrainLog log;
  log.phase = std::move(phase);
  log.strategy = std::move(strategy);
  log.options = options;

  Adam adam(model, trainable, options);
  std::optional<Model> best_model;
  double best_score = -1.0;
  auto consider = [&](EpochRecord record) {
    if (!evals.empty()) {
      const double score = record.scores[options.select_on].bleu;
      if (score > best_score) {
        best_score = score;
        log.best_epoch = record.epoch;
        if (options.restore_best) best_model = model;
      }
    }
    log.epochs.push_back(std::move(record));
    if (options.on_epoch) options.on_epoch(log.phase, log.epochs.back());
  };

  const auto clock_start = std::chrono::steady_clock::now();
  auto elapsed = [&clock_start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  };

  EpochRecord initial = evaluate_epoch(model, 0, std::nan(""), evals);
  initial.train_loss = std::nan("");
  initial.wall_seconds = elapsed();
  consider(std::move(initial));

  std::vector<std::size_t> order(batches.size());
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(options.seed, epoch));
    rng.shuffle(order);

    double weighted = 0.0;
    std::size_t tokens = 0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const auto& batch = batches[order[step]];
      const std::uint64_t batch_seed = mix_seed(options.seed, epoch * 1000003ULL + step);
      model.zero_grad();
      ndgrad::Graph g;
      const auto loss = nanoformer::loss_on_batch(g, model, batch, {true, batch_seed});
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss in " + log.phase + " epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + " (batch seed " + std::to_string(batch_seed) + ")");
      }
      g.backward(loss);
      adam.step(model);
      weighted += value * static_cast<double>(batch.target_tokens());
      tokens += batch.target_tokens();
    }
    const double train_loss = weighted / static_cast<double>(tokens);

    if (epoch % options.eval_each == 0 || epoch == options.epochs) {
      EpochRecord r = evaluate_epoch(model, epoch, train_loss, evals);
      r.wall_seconds = elapsed();
      consider(std::move(r));
    } else {
      EpochRecord r;
      r.epoch = epoch;
      r.train_loss = train_loss;
      r.wall_seconds = elapsed();
      log.epochs.push_back(std::move(r));
      if (options.on_epoch) options.on_epoch(log.phase, log.epochs.back());
    }
  }

  if (options.restore_best && best_model) {
    for (std::size_t i = 0; i < model.params().size(); ++i) {
      auto src = best_model->params()[i].tensor.values();
      std::copy(src.begin(), src.end(), model.params()[i].tensor.values().begin());
    }
  }
  for (auto& p : model.params()) {
    p.tensor.set_requires_grad(true);
    p.tensor.clear_grad();
  }
  return log;
}

}  // namespace

TrainLog train(Model& model, const std::vector<SentencePair>& train_pairs, const std::vector<EvalSet>& evals,
               const TrainOptions& options) {
  return run(model, train_pairs, std::vector<bool>(model.params().size(), true), evals, options, "general",
             "full");
}

TrainLog continual_train(Model& model, const std::vector<SentencePair>& in_domain, const FreezeSpec& freeze,
                         const std::vector<EvalSet>& evals, const TrainOptions& options) {
  return run(model, in_domain, freeze.trainable(model), evals, options, "continual", freeze.describe());
}

// ---- sweep ---------------------------------------------------------------

std::vector<SweepRow> run_strategy_sweep(const Model& checkpoint, Grouping grouping, const SweepSetup& setup) {
  struct Cell {
    std::string group;
    FreezeSpec spec;
  };
  std::vector<Cell> cells;
  cells.push_back({"-", FreezeSpec::none()});
  for (const auto& g : nanoformer::enumerate_groups(checkpoint, grouping, setup.grouping_options)) {
    cells.push_back({g.name, FreezeSpec::freeze_only(checkpoint, g.name, setup.grouping_options)});
    cells.push_back({g.name, FreezeSpec::update_only(checkpoint, g.name, setup.grouping_options)});
  }

  std::vector<TrainLog> logs(cells.size());
  parallel_for(setup.jobs, cells.size(), [&](std::size_t i) {
    Model copy = checkpoint;
    logs[i] = continual_train(copy, setup.in_domain_train, cells[i].spec, setup.evals, setup.options);
  });

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const TrainLog& log = logs[i];
    SweepRow row;
    row.group = cells[i].group;
    row.strategy = std::string(to_string(cells[i].spec.mode));
    row.general_before = TrainLog::bleu_of(log.epochs.front(), setup.general_label);
    row.in_domain_before = TrainLog::bleu_of(log.epochs.front(), setup.in_domain_label);
    row.general_final = TrainLog::bleu_of(log.last(), setup.general_label);
    row.in_domain_final = TrainLog::bleu_of(log.last(), setup.in_domain_label);
    row.general_best = TrainLog::bleu_of(log.best(), setup.general_label);
    row.in_domain_best = TrainLog::bleu_of(log.best(), setup.in_domain_label);
    row.best_epoch = *log.best_epoch;
    row.epochs = setup.options.epochs;
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "group,strategy,general_before,in_domain_before,general_final,in_domain_final,general_best,"
        "in_domain_best,best_epoch,epochs,vanilla_general_final,vanilla_in_domain_final\n";
  const SweepRow* vanilla = nullptr;
  for (const auto& r : rows) {
    if (r.strategy == "none") vanilla = &r;
  }
  for (const auto& r : rows) {
    os << r.group << ',' << r.strategy << ',' << fixed(r.general_before, 4) << ',' << fixed(r.in_domain_before, 4)
       << ',' << fixed(r.general_final, 4) << ',' << fixed(r.in_domain_final, 4) << ',' << fixed(r.general_best, 4)
       << ',' << fixed(r.in_domain_best, 4) << ',' << r.best_epoch << ',' << r.epochs << ','
       << (vanilla ? fixed(vanilla->general_final, 4) : "") << ','
       << (vanilla ? fixed(vanilla->in_domain_final, 4) : "") << '\n';
  }
  return os.str();
}

std::string sweep_to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"group", r.group},
                 {"strategy", r.strategy},
                 {"general_before", r.general_before},
                 {"in_domain_before", r.in_domain_before},
                 {"general_final", r.general_final},
                 {"in_domain_final", r.in_domain_final},
                 {"general_best", r.general_best},
                 {"in_domain_best", r.in_domain_best},
                 {"best_epoch", r.best_epoch},
                 {"epochs", r.epochs}});
  }
  return j.dump(2);
}

}  // namespace forgetlab::trainer
