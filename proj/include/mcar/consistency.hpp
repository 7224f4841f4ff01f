// mcar/consistency.hpp

// Copyright 2026  The mcar Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Symmetric KL consistency between the multi-label prediction p and the
// detector category vector q. Both are renormalized with a softmax applied
// directly to the probability values.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "mcar/autograd.hpp"

namespace mcar {

inline std::vector<double> renormalize(std::span<const double> v) {
  std::vector<double> out(v.size());
  if (v.empty()) return out;
  const double m = *std::max_element(v.begin(), v.end());
  double z = 0;
  for (std::size_t i = 0; i < v.size(); ++i) z += out[i] = std::exp(v[i] - m);
  for (auto& x : out) x /= z;
  return out;
}

inline double kl_divergence(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * std::log(a[i] / b[i]);
  return s;
}

/// KL(a, b) + KL(b, a).
inline double symmetric_kl(std::span<const double> a, std::span<const double> b) {
  return kl_divergence(a, b) + kl_divergence(b, a);
}

/// Gradients of symmetric_kl(softmax(p), softmax(q)) w.r.t. raw p and q.
struct SymmetricKlGrad {
  double value = 0;
  std::vector<double> dp, dq;
};

inline SymmetricKlGrad symmetric_kl_renormalized(std::span<const double> p, std::span<const double> q) {
  const auto a = renormalize(p);
  const auto b = renormalize(q);
  SymmetricKlGrad out;
  out.value = symmetric_kl(a, b);
  const std::size_t k = a.size();
  std::vector<double> ua(k), ub(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double lr = std::log(a[i] / b[i]);
    ua[i] = lr + 1.0 - b[i] / a[i];
    ub[i] = -lr + 1.0 - a[i] / b[i];
  }
  auto through_softmax = [k](const std::vector<double>& s, const std::vector<double>& u) {
    double dot = 0;
    for (std::size_t i = 0; i < k; ++i) dot += s[i] * u[i];
    std::vector<double> d(k);
    for (std::size_t i = 0; i < k; ++i) d[i] = s[i] * (u[i] - dot);
    return d;
  };
  out.dp = through_softmax(a, ua);
  out.dq = through_softmax(b, ub);
  return out;
}

/// One domain's term: (1 / (2 n_c)) sum_i symKL(softmax(p_i), softmax(q_i))
/// over the n_c images that have a q. Zero when none do.
inline double domain_consistency(const std::vector<std::vector<double>>& p,
                                 const std::vector<std::optional<std::vector<double>>>& q) {
  double total = 0;
  int count = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!q[i]) continue;
    total += symmetric_kl(renormalize(p[i]), renormalize(*q[i]));
    ++count;
  }
  return count ? total / (2.0 * count) : 0.0;
}

/// L_kl = L_kl^s + L_kl^t.
inline double consistency_loss(const std::vector<std::vector<double>>& p_src,
                               const std::vector<std::optional<std::vector<double>>>& q_src,
                               const std::vector<std::vector<double>>& p_tgt,
                               const std::vector<std::optional<std::vector<double>>>& q_tgt) {
  return domain_consistency(p_src, q_src) + domain_consistency(p_tgt, q_tgt);
}

template <typename T>
struct DomainConsistency {
  Var<T> loss;
  int contributing = 0;
  int skipped = 0;
};

namespace ops {

/// Graph version of domain_consistency; gradients flow into both p and q.
template <typename T>
DomainConsistency<T> domain_consistency(Graph<T>& g, const std::vector<Var<T>>& p,
                                        const std::vector<std::optional<Var<T>>>& q) {
  struct Term {
    Var<T> p, q;
    std::vector<double> dp, dq;
  };
  std::vector<Term> terms;
  double total = 0;
  DomainConsistency<T> out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!q[i]) {
      ++out.skipped;
      continue;
    }
    std::vector<double> pv(p[i]->value.values().begin(), p[i]->value.values().end());
    std::vector<double> qv((*q[i])->value.values().begin(), (*q[i])->value.values().end());
    auto r = symmetric_kl_renormalized(pv, qv);
    total += r.value;
    terms.push_back({p[i], *q[i], std::move(r.dp), std::move(r.dq)});
  }
  out.contributing = static_cast<int>(terms.size());
  if (terms.empty()) {
    out.loss = g.constant(Tensor<T>({1}));
    return out;
  }
  const double norm = 1.0 / (2.0 * static_cast<double>(terms.size()));
  bool rg = false;
  for (const auto& t : terms) rg = rg || t.p->requires_grad || t.q->requires_grad;
  out.loss = g.record(Tensor<T>({1}, std::vector<T>{static_cast<T>(total * norm)}), rg,
                      [terms = std::move(terms), norm](Node<T>& self) {
                        const double s = static_cast<double>(self.grad[0]) * norm;
                        for (const auto& t : terms) {
                          if (t.p->requires_grad) {
                            auto& gp = t.p->grad_ref();
                            for (std::size_t k = 0; k < t.dp.size(); ++k) gp[k] += static_cast<T>(s * t.dp[k]);
                          }
                          if (t.q->requires_grad) {
                            auto& gq = t.q->grad_ref();
                            for (std::size_t k = 0; k < t.dq.size(); ++k) gq[k] += static_cast<T>(s * t.dq[k]);
                          }
                        }
                      });
  return out;
}

}  // namespace ops
}  // namespace mcar
