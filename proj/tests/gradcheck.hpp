// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite differences against the tape's gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "forgetlab/ndgrad.hpp"

namespace forgetlab::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor). Below `floor` both gradients are
/// compared on an absolute scale.
inline double rel_error(double analytic, double numeric, double floor) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

/// `loss` builds a scalar from the given graph with every tensor bound via
/// Graph::parameter. `stride` > 1 checks every stride-th element only.
inline GradCheck check_gradients(std::vector<ndgrad::Tensor*> params,
                                 const std::function<ndgrad::Var(ndgrad::Graph&)>& loss, double eps = 1e-4,
                                 double floor = 1e-6, std::size_t stride = 1) {
  for (auto* p : params) {
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    ndgrad::Graph g;
    g.backward(loss(g));
  }
  auto eval = [&] {
    ndgrad::Graph g(false);
    return loss(g).value().item();
  };
  GradCheck r;
  for (auto* p : params) {
    const std::vector<double> analytic(p->grad().begin(), p->grad().end());
    for (std::size_t k = 0; k < p->numel(); k += stride) {
      const double saved = (*p)[k];
      (*p)[k] = saved + eps;
      const double up = eval();
      (*p)[k] = saved - eps;
      const double down = eval();
      (*p)[k] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      r.max_rel_error = std::max(r.max_rel_error, rel_error(analytic[k], numeric, floor));
      r.max_abs_error = std::max(r.max_abs_error, std::fabs(analytic[k] - numeric));
      ++r.checked;
    }
  }
  return r;
}

}  // namespace forgetlab::testing
