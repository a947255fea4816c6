// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "forgetlab/forensics.hpp"

#include <png.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "forgetlab/errors.hpp"
#include "forgetlab/metrics.hpp"
#include "forgetlab/parallel.hpp"

namespace forgetlab::forensics {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

// ---- importance ------------------------------------------------------------

const Tensor& ImportanceMap::at(const std::string& tag) const {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) return scores[i];
  }
  throw ConfigError("importance map has no entry for '" + tag + "'");
}

void ImportanceMap::check_matches(const Model& model) const {
  const auto& params = model.params();
  if (params.size() != tags.size()) throw ContractError("importance map does not match the model's parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].tag.canonical() != tags[i] || params[i].tensor.shape() != scores[i].shape()) {
      throw ContractError("importance map entry '" + tags[i] + "' does not match the model");
    }
  }
}

checkpoint::Section ImportanceMap::to_section() const {
  checkpoint::Section s;
  s.name = "importance";
  s.meta["examples"] = std::to_string(examples);
  s.meta["domain"] = domain;
  for (std::size_t i = 0; i < tags.size(); ++i) s.entries.push_back({tags[i], scores[i]});
  return s;
}

ImportanceMap ImportanceMap::from_section(const checkpoint::Section& section) {
  ImportanceMap m;
  try {
    m.examples = std::stoul(section.meta.at("examples"));
    m.domain = section.meta.at("domain");
  } catch (const std::exception&) {
    throw ContractError("importance section lacks examples/domain metadata");
  }
  if (m.examples == 0) throw ContractError("importance section has zero examples");
  for (const auto& e : section.entries) {
    for (double v : e.tensor.values()) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ContractError("importance entry '" + e.name + "' has an invalid score");
    }
    m.tags.push_back(e.name);
    m.scores.push_back(e.tensor);
  }
  return m;
}

ImportanceMap accumulate_importance(const Model& model, const std::vector<SentencePair>& corpus,
                                    const ImportanceOptions& options, const std::string& domain) {
  if (options.t_limit < 1) throw ConfigError("importance T_limit must be at least 1");
  if (corpus.empty()) throw ConfigError("importance corpus is empty");
  const std::size_t count = std::min(options.t_limit, corpus.size());

  Model work = model;
  work.set_requires_grad(true);

  ImportanceMap map;
  map.domain = domain;
  map.examples = count;
  for (const auto& p : work.params()) {
    map.tags.push_back(p.tag.canonical());
    map.scores.emplace_back(p.tensor.shape());
  }

  const corpusgen::BatchingOptions batching{1, model.config().src_vocab, model.config().tgt_vocab};
  for (std::size_t t = 0; t < count; ++t) {
    const auto batch = corpusgen::encode_pair(corpus[t], batching);
    work.zero_grad();
    ndgrad::Graph g;
    try {
      auto loss = nanoformer::loss_on_batch(g, work, batch);
      if (options.loss_scale != 1.0) loss = ndgrad::scale(loss, options.loss_scale);
      g.backward(loss);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at sentence " + std::to_string(t));
    }
    for (std::size_t i = 0; i < work.params().size(); ++i) {
      const auto& tensor = work.params()[i].tensor;
      const auto w = tensor.values();
      const auto grad = tensor.grad();
      auto acc = map.scores[i].values();
      for (std::size_t k = 0; k < w.size(); ++k) {
        if (!std::isfinite(grad[k])) {
          throw NumericError("non-finite gradient for '" + map.tags[i] + "' at sentence " + std::to_string(t));
        }
        acc[k] += std::fabs(grad[k] * w[k]);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(count);
  for (auto& s : map.scores) {
    for (double& v : s.values()) v *= inv;
  }
  return map;
}

void save_importance(const std::filesystem::path& path, const Model& model, const ImportanceMap& map) {
  map.check_matches(model);
  auto c = checkpoint::to_container(model);
  c.sections.push_back(map.to_section());
  checkpoint::save(path, c);
}

ImportanceMap load_importance(const std::filesystem::path& path) {
  const auto c = checkpoint::load(path);
  const auto* s = c.find("importance");
  if (!s) throw ContractError(path.string() + ": no importance section");
  return ImportanceMap::from_section(*s);
}

// ---- erasure ---------------------------------------------------------------

std::string_view to_string(Ordering ordering) {
  return ordering == Ordering::Descending ? "descending" : "ascending";
}

std::vector<std::size_t> rank_descending(const Tensor& scores) {
  std::vector<std::size_t> idx(scores.numel());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto v = scores.values();
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return idx;
}

std::vector<std::size_t> erasure_set(const Tensor& scores, Ordering ordering, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("erasure fraction outside [0, 1]");
  const std::size_t k = scores.numel();
  const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(k)));
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto v = scores.values();
  if (ordering == Ordering::Descending) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  }
  idx.resize(n);
  return idx;
}

double ErasureCurve::interior_mean_bleu() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : points) {
    if (p.fraction > 0.0 && p.fraction < 1.0) {
      sum += p.bleu;
      ++n;
    }
  }
  if (n == 0) throw ContractError("erasure curve has no interior fractions");
  return sum / static_cast<double>(n);
}

std::vector<double> default_fractions() {
  std::vector<double> f;
  for (int i = 0; i <= 10; ++i) f.push_back(i / 10.0);
  return f;
}

ErasureCurve erase_and_eval(const Model& model, const ImportanceMap& importance, const std::string& tag,
                            Ordering ordering, const std::vector<double>& fractions,
                            const std::vector<SentencePair>& test_set, const std::string& eval_set,
                            std::size_t jobs) {
  const std::size_t param = model.index_of(tag);
  const Tensor& scores = importance.at(tag);
  if (scores.shape() != model.params()[param].tensor.shape()) {
    throw ContractError("importance for '" + tag + "' does not match the parameter's shape");
  }
  if (fractions.empty() || fractions.front() != 0.0) throw ConfigError("erasure fractions must start at 0");
  for (std::size_t i = 1; i < fractions.size(); ++i) {
    if (!(fractions[i] > fractions[i - 1])) throw ConfigError("erasure fractions must be strictly increasing");
  }
  if (fractions.back() > 1.0) throw ConfigError("erasure fractions must not exceed 1");

  ErasureCurve curve;
  curve.tag = tag;
  curve.ordering = ordering;
  curve.eval_set = eval_set;
  curve.points.resize(fractions.size());
  parallel_for(jobs, fractions.size(), [&](std::size_t i) {
    Model copy = model;
    const auto erased = erasure_set(scores, ordering, fractions[i]);
    auto w = copy.params()[param].tensor.values();
    for (std::size_t k : erased) w[k] = 0.0;
    const auto r = metrics::evaluate(copy, test_set);
    curve.points[i] = {fractions[i], erased.size(), r.bleu.bleu, r.loss};
  });
  return curve;
}

std::string curves_to_csv(const std::vector<ErasureCurve>& curves) {
  std::ostringstream os;
  os << "tag,ordering,eval_set,fraction,erased,bleu,loss\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      os << c.tag << ',' << to_string(c.ordering) << ',' << c.eval_set << ',' << fixed(p.fraction, 4) << ','
         << p.erased << ',' << fixed(p.bleu, 4) << ',' << fixed(p.loss, 6) << '\n';
    }
  }
  return os.str();
}

std::string curves_to_json(const std::vector<ErasureCurve>& curves) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : curves) {
    nlohmann::json jc{{"tag", c.tag}, {"ordering", to_string(c.ordering)}, {"eval_set", c.eval_set}};
    jc["points"] = nlohmann::json::array();
    for (const auto& p : c.points) {
      jc["points"].push_back({{"fraction", p.fraction}, {"erased", p.erased}, {"bleu", p.bleu}, {"loss", p.loss}});
    }
    j.push_back(std::move(jc));
  }
  return j.dump(2);
}

// ---- heatmaps --------------------------------------------------------------

std::vector<unsigned char> heatmap_pixels(const Tensor& scores) {
  const auto v = scores.values();
  std::vector<unsigned char> px(v.size(), 128);
  if (v.empty()) return px;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double min = *lo, max = *hi;
  if (!(max > min)) return px;
  for (std::size_t i = 0; i < v.size(); ++i) {
    px[i] = static_cast<unsigned char>(std::lround(255.0 * (v[i] - min) / (max - min)));
  }
  return px;
}

namespace {

// Only trivially destructible locals live across setjmp.
bool write_gray_png(std::FILE* fp, const unsigned char* data, std::size_t width, std::size_t height,
                    const char* comment) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_compression_level(png, 9);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_text text{};
  if (comment && *comment) {
    text.compression = PNG_TEXT_COMPRESSION_NONE;
    text.key = const_cast<png_charp>("Comment");
    text.text = const_cast<png_charp>(comment);
    png_set_text(png, info, &text, 1);
  }
  png_write_info(png, info);
  for (std::size_t r = 0; r < height; ++r) png_write_row(png, const_cast<png_bytep>(data + r * width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

void export_heatmap(const ImportanceMap& importance, const std::string& tag, const std::filesystem::path& png_path,
                    const std::filesystem::path& csv_path, const std::vector<std::string>& comments) {
  const Tensor& scores = importance.at(tag);
  const std::size_t rows = scores.rows(), cols = scores.cols();
  const auto px = heatmap_pixels(scores);
  std::string comment;
  for (const auto& c : comments) comment += (comment.empty() ? "" : "; ") + c;

  std::FILE* fp = std::fopen(png_path.string().c_str(), "wb");
  if (!fp) throw std::runtime_error(png_path.string() + ": " + std::strerror(errno));
  const bool ok = write_gray_png(fp, px.data(), cols, rows, comment.c_str());
  const bool closed = std::fclose(fp) == 0;
  if (!ok || !closed) throw std::runtime_error(png_path.string() + ": failed to write PNG");

  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error(csv_path.string() + ": cannot open for writing");
  for (const auto& c : comments) csv << "# " << c << '\n';
  csv << "# " << tag << ' ' << rows << 'x' << cols << '\n';
  const auto v = scores.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) csv << (c ? "," : "") << g17(v[r * cols + c]);
    csv << '\n';
  }
  if (!csv.flush()) throw std::runtime_error(csv_path.string() + ": write failed");
}

Tensor read_heatmap_csv(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error(csv_path.string() + ": cannot open");
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::size_t n = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::strtod(cell.c_str(), nullptr));
      ++n;
    }
    if (rows == 0) cols = n;
    else if (n != cols) throw ContractError(csv_path.string() + ": ragged row " + std::to_string(rows + 1));
    ++rows;
  }
  if (rows == 0) throw ContractError(csv_path.string() + ": no data rows");
  if (rows == 1) return Tensor({cols}, std::move(values));
  return Tensor({rows, cols}, std::move(values));
}

// ---- drift -----------------------------------------------------------------

std::array<std::size_t, 10> decile_sizes(std::size_t k) {
  std::array<std::size_t, 10> sizes{};
  for (std::size_t d = 0; d < 10; ++d) sizes[d] = k / 10 + (d < k % 10 ? 1 : 0);
  return sizes;
}

DriftReport decile_drift(const Model& model_g, const Model& model_i, const ImportanceMap& importance_g,
                         const std::vector<std::string>& tags) {
  if (!(model_g.config() == model_i.config())) throw ContractError("decile_drift: model configs differ");
  importance_g.check_matches(model_g);

  DriftReport report;
  report.tags = tags;
  if (report.tags.empty()) {
    for (const auto& p : model_g.params()) report.tags.push_back(p.tag.canonical());
  }
  for (const auto& tag : report.tags) {
    const auto wg = model_g.param(tag).values();
    const auto wi = model_i.param(tag).values();
    const Tensor& scores = importance_g.at(tag);
    if (scores.numel() < 10) throw ContractError("decile_drift: '" + tag + "' has fewer than ten parameters");
    const auto order = rank_descending(scores);
    const auto sizes = decile_sizes(order.size());
    std::size_t pos = 0;
    for (std::size_t d = 0; d < 10; ++d) {
      double sum = 0.0;
      for (std::size_t j = 0; j < sizes[d]; ++j, ++pos) sum += std::fabs(wg[order[pos]] - wi[order[pos]]);
      report.distance[d] += sum / static_cast<double>(sizes[d]);
    }
  }
  report.modules = report.tags.size();
  for (double& d : report.distance) d /= static_cast<double>(report.modules);
  return report;
}

std::string DriftReport::to_csv() const {
  std::ostringstream os;
  os << "interval,lower_pct,upper_pct,mean_distance\n";
  for (std::size_t d = 0; d < 10; ++d) {
    os << d << ',' << d * 10 << ',' << (d + 1) * 10 << ',' << g17(distance[d]) << '\n';
  }
  return os.str();
}

std::string DriftReport::to_json() const {
  nlohmann::json j;
  j["modules"] = modules;
  j["tags"] = tags;
  j["intervals"] = nlohmann::json::array();
  for (std::size_t d = 0; d < 10; ++d) {
    j["intervals"].push_back({{"lower_pct", d * 10}, {"upper_pct", (d + 1) * 10}, {"mean_distance", distance[d]}});
  }
  return j.dump(2);
}

// ---- rank correlation ------------------------------------------------------

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ContractError("spearman: need two equal-length samples of size >= 2");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace forgetlab::forensics
