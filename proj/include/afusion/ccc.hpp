#pragma once

#include <span>
#include <vector>

#include "afusion/ops.hpp"

namespace afusion {

struct CccReport {
  double valence = 0.0;
  double arousal = 0.0;
  double mean = 0.0;
};

// Concordance correlation coefficient with population (1/N) statistics:
//   CCC = 2 cov(x,y) / (var(x) + var(y) + (mean(x) - mean(y))^2)
// This is the evaluation path: no epsilon anywhere. The degenerate case of
// two constant sequences (zero denominator) is defined as 0.
template <typename S>
double ccc(std::span<const S> x, std::span<const S> y) {
  if (x.size() != y.size())
    throw ValidationError("ccc: length mismatch " + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()));
  const std::size_t n = x.size();
  if (n < 2) throw ValidationError("ccc: need at least 2 points, got " + std::to_string(n));
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double vx = 0, vy = 0, cov = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cov += dx * dy;
  }
  vx /= static_cast<double>(n);
  vy /= static_cast<double>(n);
  cov /= static_cast<double>(n);
  const double md = mx - my;
  const double denom = vx + vy + md * md;
  if (denom == 0.0) return 0.0;
  return 2.0 * cov / denom;
}

template <typename S>
double ccc(const std::vector<S>& x, const std::vector<S>& y) {
  return ccc(std::span<const S>(x), std::span<const S>(y));
}

// CCC over the masked-in frames of one [N,2] prediction/target pair.
template <typename S>
CccReport masked_eval(const Tensor<S>& pred, const Tensor<S>& target,
                      const std::vector<std::uint8_t>& mask) {
  if (pred.rank() != 2 || pred.extent(1) != 2 || !pred.same_shape(target))
    throw ValidationError("masked_eval: want matching [Nx2] tensors, got " +
                          pred.shape_string() + " and " + target.shape_string());
  if (static_cast<Index>(mask.size()) != pred.extent(0))
    throw ValidationError("masked_eval: mask length " + std::to_string(mask.size()) +
                          " does not match N=" + std::to_string(pred.extent(0)));
  std::vector<double> pv, pa, tv, ta;
  for (Index i = 0; i < pred.extent(0); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    pv.push_back(pred(i, 0));
    pa.push_back(pred(i, 1));
    tv.push_back(target(i, 0));
    ta.push_back(target(i, 1));
  }
  if (pv.empty()) throw ValidationError("masked_eval: no valid frames under mask");
  CccReport r;
  r.valence = ccc<double>(pv, tv);
  r.arousal = ccc<double>(pa, ta);
  r.mean = 0.5 * (r.valence + r.arousal);
  return r;
}

// Accumulates masked frames across many trials and reports one concatenated
// CCC per output dimension (partition-level, not per-trial averaged).
class PartitionEval {
 public:
  template <typename S>
  void add(const Tensor<S>& pred, const Tensor<S>& target,
           const std::vector<std::uint8_t>& mask) {
    if (pred.rank() != 2 || pred.extent(1) != 2 || !pred.same_shape(target))
      throw ValidationError("partition eval: want matching [Nx2] tensors, got " +
                            pred.shape_string() + " and " + target.shape_string());
    for (Index i = 0; i < pred.extent(0); ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      pv_.push_back(pred(i, 0));
      pa_.push_back(pred(i, 1));
      tv_.push_back(target(i, 0));
      ta_.push_back(target(i, 1));
    }
  }

  std::size_t frames() const { return pv_.size(); }

  CccReport report() const {
    if (pv_.empty()) throw ValidationError("partition eval: no valid frames accumulated");
    CccReport r;
    r.valence = ccc<double>(pv_, tv_);
    r.arousal = ccc<double>(pa_, ta_);
    r.mean = 0.5 * (r.valence + r.arousal);
    return r;
  }

 private:
  std::vector<double> pv_, pa_, tv_, ta_;
};

namespace detail {

// 1 - CCC for one dimension, built from differentiable pieces. The 1e-8
// denominator epsilon exists only on this loss path.
template <typename S>
Var<S> ccc_var(const Var<S>& p, const Var<S>& t) {
  auto mp = mean(p, 0);
  auto mt = mean(t, 0);
  auto cov = mean(mul(sub_scalar(p, mp), sub_scalar(t, mt)), 0);
  auto md = sub(mp, mt);
  auto denom = add(add(variance(p, 0), variance(t, 0)), add_const(mul(md, md), 1e-8));
  return div(scale(cov, 2.0), denom);
}

}  // namespace detail

// CCC loss over predictions [.., 2] against same-shape targets, restricted to
// `valid_rows` (indices into the flattened [R,2] view). Computed per output
// dimension and averaged: loss = 1 - (ccc_v + ccc_a) / 2.
template <typename S>
Var<S> ccc_loss_masked(const Var<S>& pred, const Var<S>& target,
                       const std::vector<Index>& valid_rows) {
  detail::require(pred.value().same_shape(target.value()),
                  "ccc_loss: shape mismatch " + pred.value().shape_string() + " vs " +
                      target.value().shape_string());
  detail::require(pred.value().rank() >= 2 &&
                      pred.value().extent(pred.value().rank() - 1) == 2,
                  "ccc_loss: expected trailing extent 2, got " + pred.value().shape_string());
  detail::require(valid_rows.size() >= 2, "ccc_loss: need at least 2 valid frames, got " +
                                              std::to_string(valid_rows.size()));
  const Index rows = pred.value().numel() / 2;
  auto p2 = gather_rows(reshape(pred, {rows, 2}), valid_rows);
  auto t2 = gather_rows(reshape(target, {rows, 2}), valid_rows);
  auto ccc_v = detail::ccc_var(col(p2, 0), col(t2, 0));
  auto ccc_a = detail::ccc_var(col(p2, 1), col(t2, 1));
  return add_const(scale(add(ccc_v, ccc_a), -0.5), 1.0);
}

template <typename S>
Var<S> ccc_loss(const Var<S>& pred, const Var<S>& target) {
  const Index rows = pred.value().numel() / 2;
  std::vector<Index> all(static_cast<std::size_t>(rows));
  for (Index i = 0; i < rows; ++i) all[static_cast<std::size_t>(i)] = i;
  return ccc_loss_masked(pred, target, all);
}

}  // namespace afusion
