// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "forgetlab/ndgrad.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "forgetlab/errors.hpp"
#include "forgetlab/rng.hpp"

namespace forgetlab::ndgrad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMatMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MatMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

void require_same_graph(Var a, Var b, const char* op) {
  if (a.graph != b.graph || a.graph == nullptr) {
    throw ContractError(std::string(op) + ": operands belong to different graphs");
  }
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor --------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_numel(shape_), fill) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape_));
  }
  if (shape_numel(shape_) != values_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not hold " +
                         std::to_string(values_.size()) + " values");
  }
}

std::size_t Tensor::rows() const { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

double Tensor::item() const {
  if (values_.size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape_));
  return values_[0];
}

std::span<double> Tensor::mutable_grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.values().data(), b.values().data(), a.numel() * sizeof(double)) == 0;
}

// ---- Graph ---------------------------------------------------------------

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::parameter(Tensor& t) {
  Node n;
  n.external = &t;
  if (grad_enabled_ && t.requires_grad()) {
    n.sink = &t;
    n.needs_grad = true;
    t.mutable_grad();
  }
  return push(std::move(n));
}

Var Graph::input(const Tensor& t) {
  Node n;
  n.external = &t;
  return push(std::move(n));
}

Var Graph::constant(Tensor t) {
  Node n;
  n.owned = std::move(t);
  return push(std::move(n));
}

const Tensor& Graph::value(Var v) const { return node_value(nodes_.at(v.id)); }

std::span<const double> Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.sink) return n.sink->grad();
  return n.grad;
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  if (grad_enabled_) {
    for (Var in : inputs) {
      if (in.graph != this) throw ContractError("operation mixes nodes from different graphs");
      if (nodes_[in.id].needs_grad) {
        n.needs_grad = true;
        break;
      }
    }
  }
  if (n.needs_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

std::span<double> Graph::accumulator(Var v) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return {};
  if (n.sink) return n.sink->mutable_grad();
  if (!n.touched) {
    n.grad.assign(node_value(n).numel(), 0.0);
    n.touched = true;
  }
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ContractError("backward: loss belongs to a different graph");
  if (value(loss).numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_string(value(loss).shape()));
  }
  // Intermediate gradients are per-call; parameter sinks keep accumulating.
  for (Node& n : nodes_) {
    if (!n.sink) {
      n.touched = false;
      n.grad.clear();
    }
  }
  std::span<double> seed = accumulator(loss);
  if (seed.empty()) return;
  seed[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || !n.touched) continue;
    n.backward(*this, n.grad, node_value(n));
  }
}

// ---- operations ----------------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_graph(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  if (bv.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree: " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  Tensor out(Shape{m, n});
  as_matrix(out.values(), m, n).noalias() = as_matrix(av.values(), m, k) * as_matrix(bv.values(), k, n);
  return a.graph->record(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, std::span<const double> go, const Tensor&) {
    auto G = as_matrix(go, m, n);
    if (auto ga = g.accumulator(a); !ga.empty()) {
      as_matrix(ga, m, k).noalias() += G * as_matrix(g.value(b).values(), k, n).transpose();
    }
    if (auto gb = g.accumulator(b); !gb.empty()) {
      as_matrix(gb, k, n).noalias() += as_matrix(g.value(a).values(), m, k).transpose() * G;
    }
  });
}

Var add(Var a, Var b) {
  require_same_graph(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("add: shapes differ: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  return a.graph->record(std::move(out), {a, b}, [a, b](Graph& g, std::span<const double> go, const Tensor&) {
    if (auto ga = g.accumulator(a); !ga.empty()) add_into(ga, go);
    if (auto gb = g.accumulator(b); !gb.empty()) add_into(gb, go);
  });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("mul: shapes differ: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  return a.graph->record(std::move(out), {a, b}, [a, b](Graph& g, std::span<const double> go, const Tensor&) {
    if (auto ga = g.accumulator(a); !ga.empty()) {
      const auto bv = g.value(b).values();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bv[i];
    }
    if (auto gb = g.accumulator(b); !gb.empty()) {
      const auto av = g.value(a).values();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * av[i];
  return a.graph->record(std::move(out), {a}, [a, c](Graph& g, std::span<const double> go, const Tensor&) {
    auto ga = g.accumulator(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * go[i];
  });
}

Var add_row(Var x, Var bias) {
  require_same_graph(x, bias, "add_row");
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "add_row");
  const std::size_t m = xv.shape()[0], n = xv.shape()[1];
  if (bv.numel() != n) {
    throw DimensionError("add_row: bias " + shape_string(bv.shape()) + " does not match rows of " +
                         shape_string(xv.shape()));
  }
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = xv[r * n + c] + bv[c];
  }
  return x.graph->record(std::move(out), {x, bias}, [x, bias, m, n](Graph& g, std::span<const double> go, const Tensor&) {
    if (auto gx = g.accumulator(x); !gx.empty()) add_into(gx, go);
    if (auto gb = g.accumulator(bias); !gb.empty()) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) gb[c] += go[r * n + c];
      }
    }
  });
}

Var relu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return x.graph->record(std::move(out), {x}, [x](Graph& g, std::span<const double> go, const Tensor&) {
    auto gx = g.accumulator(x);
    const auto xv = g.value(x).values();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += go[i];
    }
  });
}

Var sum(Var x) {
  const auto xv = x.value().values();
  double total = 0.0;
  for (double v : xv) total += v;
  return x.graph->record(Tensor::scalar(total), {x}, [x](Graph& g, std::span<const double> go, const Tensor&) {
    auto gx = g.accumulator(x);
    for (double& v : gx) v += go[0];
  });
}

Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_string(xv.shape()));
  }
  const Shape& s = xv.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t n = s[axis];

  Tensor out(s);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      if (!std::isfinite(mx)) throw NumericError("softmax: non-finite input");
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      if (!std::isfinite(z)) throw NumericError("softmax: non-finite input");
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  return x.graph->record(std::move(out), {x},
                         [x, outer, inner, n](Graph& g, std::span<const double> go, const Tensor& y) {
    auto gx = g.accumulator(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += y[base + j * inner] * go[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += y[idx] * (go[idx] - dot);
        }
      }
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_graph(x, gain, "layer_norm");
  require_same_graph(x, bias, "layer_norm");
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t m = xv.shape()[0], n = xv.shape()[1];
  if (gain.value().numel() != n || bias.value().numel() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.value().shape()) + "/" +
                         shape_string(bias.value().shape()) + " do not match " + shape_string(xv.shape()));
  }
  const auto gv = gain.value().values();
  const auto bv = bias.value().values();
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.values().data() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (row[c] - mean) * inv_std[r];
      xhat[r * n + c] = h;
      out[r * n + c] = h * gv[c] + bv[c];
    }
  }
  return x.graph->record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Graph& g, std::span<const double> go, const Tensor&) {
        if (auto gg = g.accumulator(gain); !gg.empty()) {
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) gg[c] += go[r * n + c] * xhat[r * n + c];
          }
        }
        if (auto gb = g.accumulator(bias); !gb.empty()) {
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) gb[c] += go[r * n + c];
          }
        }
        if (auto gx = g.accumulator(x); !gx.empty()) {
          const auto gv = g.value(gain).values();
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < m; ++r) {
            double mean_d = 0.0, mean_dh = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              const double d = go[r * n + c] * gv[c];
              mean_d += d;
              mean_dh += d * xhat[r * n + c];
            }
            mean_d *= inv_n;
            mean_dh *= inv_n;
            for (std::size_t c = 0; c < n; ++c) {
              const double d = go[r * n + c] * gv[c];
              gx[r * n + c] += inv_std[r] * (d - mean_d - xhat[r * n + c] * mean_dh);
            }
          }
        }
      });
}

Var embedding(Var table, std::span<const std::int32_t> ids) {
  const Tensor& tv = table.value();
  require_matrix(tv, "embedding");
  const std::size_t vocab = tv.shape()[0], d = tv.shape()[1];
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  std::vector<std::int32_t> rows(ids.begin(), ids.end());
  Tensor out(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(rows[i]) + " outside table of " + std::to_string(vocab) +
                       " rows");
    }
    std::copy_n(tv.values().data() + static_cast<std::size_t>(rows[i]) * d, d, out.values().data() + i * d);
  }
  return table.graph->record(std::move(out), {table},
                             [table, d, rows = std::move(rows)](Graph& g, std::span<const double> go, const Tensor&) {
                               auto gt = g.accumulator(table);
                               for (std::size_t i = 0; i < rows.size(); ++i) {
                                 double* dst = gt.data() + static_cast<std::size_t>(rows[i]) * d;
                                 for (std::size_t c = 0; c < d; ++c) dst[c] += go[i * d + c];
                               }
                             });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Graph* graph = parts[0].graph;
  const std::size_t m = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    require_same_graph(parts[0], p, "concat_cols");
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != m) {
      throw DimensionError("concat_cols: row counts differ: " + shape_string(parts[0].value().shape()) + " vs " +
                           shape_string(p.value().shape()));
    }
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out(Shape{m, total});
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto src = parts[p].value().values();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(src.data() + r * widths[p], widths[p], out.values().data() + r * total + offset);
    }
    offset += widths[p];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return graph->record(std::move(out), parts,
                       [inputs, widths, m, total](Graph& g, std::span<const double> go, const Tensor&) {
                         std::size_t offset = 0;
                         for (std::size_t p = 0; p < inputs.size(); ++p) {
                           if (auto gp = g.accumulator(inputs[p]); !gp.empty()) {
                             for (std::size_t r = 0; r < m; ++r) {
                               for (std::size_t c = 0; c < widths[p]; ++c) {
                                 gp[r * widths[p] + c] += go[r * total + offset + c];
                               }
                             }
                           }
                           offset += widths[p];
                         }
                       });
}

std::vector<Var> split_cols(Var x, std::size_t parts) {
  const Tensor& xv = x.value();
  require_matrix(xv, "split_cols");
  const std::size_t m = xv.shape()[0], n = xv.shape()[1];
  if (parts == 0 || n % parts != 0) {
    throw DimensionError("split_cols: " + std::to_string(n) + " columns do not split into " + std::to_string(parts) +
                         " equal parts");
  }
  const std::size_t w = n / parts;
  std::vector<Var> out;
  out.reserve(parts);
  for (std::size_t p = 0; p < parts; ++p) {
    Tensor piece(Shape{m, w});
    const auto src = x.value().values();
    for (std::size_t r = 0; r < m; ++r) std::copy_n(src.data() + r * n + p * w, w, piece.values().data() + r * w);
    out.push_back(x.graph->record(std::move(piece), {x},
                                  [x, m, n, w, p](Graph& g, std::span<const double> go, const Tensor&) {
                                    auto gx = g.accumulator(x);
                                    for (std::size_t r = 0; r < m; ++r) {
                                      for (std::size_t c = 0; c < w; ++c) gx[r * n + p * w + c] += go[r * w + c];
                                    }
                                  }));
  }
  return out;
}

Var attention(Var q, Var k, Var v, const AttentionMask& mask) {
  require_same_graph(q, k, "attention");
  require_same_graph(q, v, "attention");
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require_matrix(qv, "attention");
  require_matrix(kv, "attention");
  require_matrix(vv, "attention");
  const std::size_t B = mask.batch, Lq = mask.query_len, Lk = mask.key_len;
  const std::size_t dk = qv.cols(), dv = vv.cols();
  if (qv.rows() != B * Lq || kv.rows() != B * Lk || vv.rows() != B * Lk || kv.cols() != dk) {
    throw DimensionError("attention: q " + shape_string(qv.shape()) + ", k " + shape_string(kv.shape()) + ", v " +
                         shape_string(vv.shape()) + " inconsistent with batch " + std::to_string(B) + " x (" +
                         std::to_string(Lq) + ", " + std::to_string(Lk) + ")");
  }
  if (!mask.key_lengths.empty() && mask.key_lengths.size() != B) {
    throw DimensionError("attention: key_lengths has " + std::to_string(mask.key_lengths.size()) +
                         " entries for batch " + std::to_string(B));
  }
  const double scl = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<double> probs(B * Lq * Lk, 0.0);
  Tensor out(Shape{B * Lq, dv});
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t klen = mask.key_lengths.empty() ? Lk : std::min(mask.key_lengths[b], Lk);
    for (std::size_t i = 0; i < Lq; ++i) {
      const std::size_t allowed = mask.causal ? std::min(klen, i + 1) : klen;
      if (allowed == 0) continue;
      const double* qi = qv.values().data() + (b * Lq + i) * dk;
      double* p = probs.data() + (b * Lq + i) * Lk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < allowed; ++j) {
        const double* kj = kv.values().data() + (b * Lk + j) * dk;
        double s = 0.0;
        for (std::size_t c = 0; c < dk; ++c) s += qi[c] * kj[c];
        p[j] = s * scl;
        mx = std::max(mx, p[j]);
      }
      if (!std::isfinite(mx)) throw NumericError("attention: non-finite score");
      double z = 0.0;
      for (std::size_t j = 0; j < allowed; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      if (!std::isfinite(z)) throw NumericError("attention: non-finite score");
      double* oi = out.values().data() + (b * Lq + i) * dv;
      for (std::size_t j = 0; j < allowed; ++j) {
        p[j] /= z;
        const double* vj = vv.values().data() + (b * Lk + j) * dv;
        for (std::size_t c = 0; c < dv; ++c) oi[c] += p[j] * vj[c];
      }
    }
  }
  return q.graph->record(
      std::move(out), {q, k, v},
      [q, k, v, B, Lq, Lk, dk, dv, scl, probs = std::move(probs)](Graph& g, std::span<const double> go,
                                                                  const Tensor&) {
        auto gq = g.accumulator(q);
        auto gk = g.accumulator(k);
        auto gv = g.accumulator(v);
        const auto qv = g.value(q).values();
        const auto kv = g.value(k).values();
        const auto vv = g.value(v).values();
        std::vector<double> ds(Lk);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t i = 0; i < Lq; ++i) {
            const double* p = probs.data() + (b * Lq + i) * Lk;
            const double* gi = go.data() + (b * Lq + i) * dv;
            double dot = 0.0;
            for (std::size_t j = 0; j < Lk; ++j) {
              if (p[j] == 0.0) {
                ds[j] = 0.0;
                continue;
              }
              const double* vj = vv.data() + (b * Lk + j) * dv;
              double dp = 0.0;
              for (std::size_t c = 0; c < dv; ++c) dp += gi[c] * vj[c];
              ds[j] = dp;
              dot += p[j] * dp;
              if (!gv.empty()) {
                double* gvj = gv.data() + (b * Lk + j) * dv;
                for (std::size_t c = 0; c < dv; ++c) gvj[c] += p[j] * gi[c];
              }
            }
            for (std::size_t j = 0; j < Lk; ++j) {
              if (p[j] == 0.0) continue;
              const double d = p[j] * (ds[j] - dot) * scl;
              if (!gq.empty()) {
                double* gqi = gq.data() + (b * Lq + i) * dk;
                const double* kj = kv.data() + (b * Lk + j) * dk;
                for (std::size_t c = 0; c < dk; ++c) gqi[c] += d * kj[c];
              }
              if (!gk.empty()) {
                double* gkj = gk.data() + (b * Lk + j) * dk;
                const double* qi = qv.data() + (b * Lq + i) * dk;
                for (std::size_t c = 0; c < dk; ++c) gkj[c] += d * qi[c];
              }
            }
          }
        }
      });
}

Var cross_entropy(Var logits, std::span<const std::int32_t> targets, std::int32_t pad_id) {
  const Tensor& lv = logits.value();
  require_matrix(lv, "cross_entropy");
  const std::size_t rows = lv.shape()[0], vocab = lv.shape()[1];
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_string(lv.shape()));
  }
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  std::vector<double> probs(rows * vocab, 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (tgt[r] == pad_id) continue;
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= vocab) {
      throw IndexError("cross_entropy: target id " + std::to_string(tgt[r]) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    const double* row = lv.values().data() + r * vocab;
    double mx = row[0];
    for (std::size_t c = 1; c < vocab; ++c) mx = std::max(mx, row[c]);
    if (!std::isfinite(mx)) throw NumericError("cross_entropy: non-finite logit in row " + std::to_string(r));
    double z = 0.0;
    double* p = probs.data() + r * vocab;
    for (std::size_t c = 0; c < vocab; ++c) {
      p[c] = std::exp(row[c] - mx);
      z += p[c];
    }
    if (!std::isfinite(z)) throw NumericError("cross_entropy: non-finite logit in row " + std::to_string(r));
    for (std::size_t c = 0; c < vocab; ++c) p[c] /= z;
    total += (mx + std::log(z)) - row[tgt[r]];
    ++counted;
  }
  const double denom = counted ? static_cast<double>(counted) : 1.0;
  return logits.graph->record(
      Tensor::scalar(total / denom), {logits},
      [logits, rows, vocab, denom, pad_id, tgt = std::move(tgt), probs = std::move(probs)](
          Graph& g, std::span<const double> go, const Tensor&) {
        auto gl = g.accumulator(logits);
        const double w = go[0] / denom;
        for (std::size_t r = 0; r < rows; ++r) {
          if (tgt[r] == pad_id) continue;
          const double* p = probs.data() + r * vocab;
          double* dst = gl.data() + r * vocab;
          for (std::size_t c = 0; c < vocab; ++c) dst[c] += w * p[c];
          dst[tgt[r]] -= w;
        }
      });
}

Var dropout(Var x, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const Tensor& xv = x.value();
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(xv.numel());
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  return x.graph->record(std::move(out), {x},
                         [x, mask = std::move(mask)](Graph& g, std::span<const double> go, const Tensor&) {
                           auto gx = g.accumulator(x);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * mask[i];
                         });
}

}  // namespace forgetlab::ndgrad
