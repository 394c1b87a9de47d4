#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "afusion/autodiff.hpp"

namespace afusion {

namespace detail {

inline Index normalize_axis(Index axis, Index rank) {
  const Index a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    throw ValidationError("axis " + std::to_string(axis) + " out of range for rank " +
                          std::to_string(rank));
  return a;
}

struct AxisSplit {
  Index outer = 1, len = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, Index axis) {
  AxisSplit sp;
  sp.len = s[static_cast<std::size_t>(axis)];
  for (Index i = 0; i < axis; ++i) sp.outer *= s[static_cast<std::size_t>(i)];
  for (Index i = axis + 1; i < static_cast<Index>(s.size()); ++i)
    sp.inner *= s[static_cast<std::size_t>(i)];
  return sp;
}

inline Shape erase_axis(const Shape& s, Index axis) {
  Shape out;
  for (Index i = 0; i < static_cast<Index>(s.size()); ++i)
    if (i != axis) out.push_back(s[static_cast<std::size_t>(i)]);
  if (out.empty()) out.push_back(1);
  return out;
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shape and element-wise operations
// ---------------------------------------------------------------------------

template <typename S>
Var<S> reshape(const Var<S>& x, Shape shape) {
  Tensor<S> out = x.value().reshaped(std::move(shape));
  Shape in_shape = x.value().shape();
  return Var<S>::op("reshape", std::move(out), {x},
                    [in_shape = std::move(in_shape)](Node<S>& n) {
                      accumulate_adjoint(n.inputs[0], n.adjoint.reshaped(in_shape));
                    });
}

template <typename S>
Var<S> relu(const Var<S>& x) {
  Tensor<S> out(x.shape());
  const S* xi = x.value().data();
  S* o = out.data();
  for (Index i = 0, n = out.numel(); i < n; ++i) o[i] = xi[i] > S(0) ? xi[i] : S(0);
  return Var<S>::op("relu", std::move(out), {x}, [](Node<S>& n) {
    const auto& in = n.inputs[0];
    if (!in->requires_grad) return;
    const S* xv = in->value.data();
    const S* adj = n.adjoint.data();
    S* da = in->adjoint.data();
    for (Index i = 0, m = n.value.numel(); i < m; ++i)
      if (xv[i] > S(0)) da[i] += adj[i];
  });
}

template <typename S>
Var<S> tanh(const Var<S>& x) {
  Tensor<S> out(x.shape());
  const S* xi = x.value().data();
  S* o = out.data();
  for (Index i = 0, n = out.numel(); i < n; ++i) o[i] = std::tanh(xi[i]);
  return Var<S>::op("tanh", std::move(out), {x}, [](Node<S>& n) {
    const auto& in = n.inputs[0];
    if (!in->requires_grad) return;
    const S* y = n.value.data();
    const S* adj = n.adjoint.data();
    S* da = in->adjoint.data();
    for (Index i = 0, m = n.value.numel(); i < m; ++i)
      da[i] += adj[i] * (S(1) - y[i] * y[i]);
  });
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  detail::require(a.value().same_shape(b.value()),
                  "add: shape mismatch " + a.value().shape_string() + " vs " +
                      b.value().shape_string());
  Tensor<S> out(a.shape());
  out.vec() = a.value().vec() + b.value().vec();
  return Var<S>::op("add", std::move(out), {a, b}, [](Node<S>& n) {
    accumulate_adjoint(n.inputs[0], n.adjoint);
    accumulate_adjoint(n.inputs[1], n.adjoint);
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  detail::require(a.value().same_shape(b.value()),
                  "sub: shape mismatch " + a.value().shape_string() + " vs " +
                      b.value().shape_string());
  Tensor<S> out(a.shape());
  out.vec() = a.value().vec() - b.value().vec();
  return Var<S>::op("sub", std::move(out), {a, b}, [](Node<S>& n) {
    accumulate_adjoint(n.inputs[0], n.adjoint);
    if (n.inputs[1]->requires_grad) n.inputs[1]->adjoint.vec() -= n.adjoint.vec();
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  detail::require(a.value().same_shape(b.value()),
                  "mul: shape mismatch " + a.value().shape_string() + " vs " +
                      b.value().shape_string());
  Tensor<S> out(a.shape());
  out.vec() = a.value().vec().cwiseProduct(b.value().vec());
  return Var<S>::op("mul", std::move(out), {a, b}, [](Node<S>& n) {
    if (n.inputs[0]->requires_grad)
      n.inputs[0]->adjoint.vec() += n.adjoint.vec().cwiseProduct(n.inputs[1]->value.vec());
    if (n.inputs[1]->requires_grad)
      n.inputs[1]->adjoint.vec() += n.adjoint.vec().cwiseProduct(n.inputs[0]->value.vec());
  });
}

template <typename S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  detail::require(a.value().same_shape(b.value()),
                  "div: shape mismatch " + a.value().shape_string() + " vs " +
                      b.value().shape_string());
  Tensor<S> out(a.shape());
  out.vec() = a.value().vec().cwiseQuotient(b.value().vec());
  return Var<S>::op("div", std::move(out), {a, b}, [](Node<S>& n) {
    const auto bv = n.inputs[1]->value.vec();
    if (n.inputs[0]->requires_grad)
      n.inputs[0]->adjoint.vec() += n.adjoint.vec().cwiseQuotient(bv);
    if (n.inputs[1]->requires_grad)
      n.inputs[1]->adjoint.vec() -=
          n.adjoint.vec().cwiseProduct(n.value.vec()).cwiseQuotient(bv);
  });
}

template <typename S>
Var<S> scale(const Var<S>& x, double c) {
  Tensor<S> out(x.shape());
  out.vec() = x.value().vec() * S(c);
  return Var<S>::op("scale", std::move(out), {x}, [c](Node<S>& n) {
    if (n.inputs[0]->requires_grad) n.inputs[0]->adjoint.vec() += n.adjoint.vec() * S(c);
  });
}

template <typename S>
Var<S> add_const(const Var<S>& x, double c) {
  Tensor<S> out(x.shape());
  out.vec() = x.value().vec().array() + S(c);
  return Var<S>::op("add_const", std::move(out), {x}, [](Node<S>& n) {
    accumulate_adjoint(n.inputs[0], n.adjoint);
  });
}

// x - s with s scalar (shape [1]), broadcast over all elements of x.
template <typename S>
Var<S> sub_scalar(const Var<S>& x, const Var<S>& s) {
  detail::require(s.value().numel() == 1,
                  "sub_scalar: subtrahend must be scalar, got " + s.value().shape_string());
  Tensor<S> out(x.shape());
  out.vec() = x.value().vec().array() - s.value().item();
  return Var<S>::op("sub_scalar", std::move(out), {x, s}, [](Node<S>& n) {
    accumulate_adjoint(n.inputs[0], n.adjoint);
    if (n.inputs[1]->requires_grad) n.inputs[1]->adjoint.data()[0] -= n.adjoint.vec().sum();
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
Var<S> sum_all(const Var<S>& x) {
  Tensor<S> out = Tensor<S>::scalar(static_cast<S>(x.value().vec().sum()));
  return Var<S>::op("sum_all", std::move(out), {x}, [](Node<S>& n) {
    if (n.inputs[0]->requires_grad)
      n.inputs[0]->adjoint.vec().array() += n.adjoint.data()[0];
  });
}

template <typename S>
Var<S> mean(const Var<S>& x, Index axis) {
  const Index ax = detail::normalize_axis(axis, x.value().rank());
  const auto sp = detail::split_axis(x.value().shape(), ax);
  Tensor<S> out(detail::erase_axis(x.value().shape(), ax));
  const S* xd = x.value().data();
  S* od = out.data();
  const S inv = S(1) / static_cast<S>(sp.len);
  for (Index o = 0; o < sp.outer; ++o)
    for (Index i = 0; i < sp.inner; ++i) {
      S acc = 0;
      for (Index l = 0; l < sp.len; ++l) acc += xd[(o * sp.len + l) * sp.inner + i];
      od[o * sp.inner + i] = acc * inv;
    }
  return Var<S>::op("mean", std::move(out), {x}, [sp, inv](Node<S>& n) {
    const auto& in = n.inputs[0];
    if (!in->requires_grad) return;
    const S* adj = n.adjoint.data();
    S* da = in->adjoint.data();
    for (Index o = 0; o < sp.outer; ++o)
      for (Index i = 0; i < sp.inner; ++i) {
        const S g = adj[o * sp.inner + i] * inv;
        for (Index l = 0; l < sp.len; ++l) da[(o * sp.len + l) * sp.inner + i] += g;
      }
  });
}

// Population (1/N) variance along one axis.
template <typename S>
Var<S> variance(const Var<S>& x, Index axis) {
  const Index ax = detail::normalize_axis(axis, x.value().rank());
  const auto sp = detail::split_axis(x.value().shape(), ax);
  Tensor<S> out(detail::erase_axis(x.value().shape(), ax));
  const S* xd = x.value().data();
  S* od = out.data();
  const S inv = S(1) / static_cast<S>(sp.len);
  for (Index o = 0; o < sp.outer; ++o)
    for (Index i = 0; i < sp.inner; ++i) {
      S m = 0;
      for (Index l = 0; l < sp.len; ++l) m += xd[(o * sp.len + l) * sp.inner + i];
      m *= inv;
      S acc = 0;
      for (Index l = 0; l < sp.len; ++l) {
        const S d = xd[(o * sp.len + l) * sp.inner + i] - m;
        acc += d * d;
      }
      od[o * sp.inner + i] = acc * inv;
    }
  return Var<S>::op("variance", std::move(out), {x}, [sp, inv](Node<S>& n) {
    const auto& in = n.inputs[0];
    if (!in->requires_grad) return;
    const S* xv = in->value.data();
    const S* adj = n.adjoint.data();
    S* da = in->adjoint.data();
    for (Index o = 0; o < sp.outer; ++o)
      for (Index i = 0; i < sp.inner; ++i) {
        S m = 0;
        for (Index l = 0; l < sp.len; ++l) m += xv[(o * sp.len + l) * sp.inner + i];
        m *= inv;
        const S g = adj[o * sp.inner + i] * S(2) * inv;
        for (Index l = 0; l < sp.len; ++l) {
          const Index at = (o * sp.len + l) * sp.inner + i;
          da[at] += g * (xv[at] - m);
        }
      }
  });
}

template <typename S>
Var<S> softmax(const Var<S>& x, Index axis) {
  const Index ax = detail::normalize_axis(axis, x.value().rank());
  const auto sp = detail::split_axis(x.value().shape(), ax);
  Tensor<S> out(x.shape());
  const S* xd = x.value().data();
  S* od = out.data();
  for (Index o = 0; o < sp.outer; ++o)
    for (Index i = 0; i < sp.inner; ++i) {
      S mx = xd[o * sp.len * sp.inner + i];
      for (Index l = 1; l < sp.len; ++l)
        mx = std::max(mx, xd[(o * sp.len + l) * sp.inner + i]);
      S z = 0;
      for (Index l = 0; l < sp.len; ++l) {
        const Index at = (o * sp.len + l) * sp.inner + i;
        od[at] = std::exp(xd[at] - mx);
        z += od[at];
      }
      const S inv = S(1) / z;
      for (Index l = 0; l < sp.len; ++l) od[(o * sp.len + l) * sp.inner + i] *= inv;
    }
  return Var<S>::op("softmax", std::move(out), {x}, [sp](Node<S>& n) {
    const auto& in = n.inputs[0];
    if (!in->requires_grad) return;
    const S* y = n.value.data();
    const S* adj = n.adjoint.data();
    S* da = in->adjoint.data();
    for (Index o = 0; o < sp.outer; ++o)
      for (Index i = 0; i < sp.inner; ++i) {
        S dot = 0;
        for (Index l = 0; l < sp.len; ++l) {
          const Index at = (o * sp.len + l) * sp.inner + i;
          dot += adj[at] * y[at];
        }
        for (Index l = 0; l < sp.len; ++l) {
          const Index at = (o * sp.len + l) * sp.inner + i;
          da[at] += y[at] * (adj[at] - dot);
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Concatenation / indexing
// ---------------------------------------------------------------------------

template <typename S>
Var<S> concat(const std::vector<Var<S>>& xs, Index axis) {
  detail::require(!xs.empty(), "concat: no inputs");
  const Index rank = xs[0].value().rank();
  const Index ax = detail::normalize_axis(axis, rank);
  Shape out_shape = xs[0].value().shape();
  Index total = 0;
  for (const auto& x : xs) {
    detail::require(x.value().rank() == rank, "concat: rank mismatch");
    for (Index d = 0; d < rank; ++d)
      if (d != ax)
        detail::require(x.value().extent(d) == out_shape[static_cast<std::size_t>(d)],
                        "concat: extent mismatch off axis " + std::to_string(ax) + ": " +
                            x.value().shape_string() + " vs " + shape_str(out_shape));
    total += x.value().extent(ax);
  }
  out_shape[static_cast<std::size_t>(ax)] = total;
  const auto osp = detail::split_axis(out_shape, ax);
  Tensor<S> out(out_shape);
  S* od = out.data();
  Index off = 0;
  std::vector<Index> lens;
  for (const auto& x : xs) {
    const Index len = x.value().extent(ax);
    lens.push_back(len);
    const S* xd = x.value().data();
    for (Index o = 0; o < osp.outer; ++o)
      std::memcpy(od + (o * osp.len + off) * osp.inner, xd + o * len * osp.inner,
                  sizeof(S) * static_cast<std::size_t>(len * osp.inner));
    off += len;
  }
  std::vector<Var<S>> ins = xs;
  return Var<S>::op("concat", std::move(out), std::move(ins),
                    [osp, lens = std::move(lens)](Node<S>& n) {
                      const S* adj = n.adjoint.data();
                      Index off2 = 0;
                      for (std::size_t j = 0; j < n.inputs.size(); ++j) {
                        const Index len = lens[j];
                        const auto& in = n.inputs[j];
                        if (in->requires_grad) {
                          S* da = in->adjoint.data();
                          for (Index o = 0; o < osp.outer; ++o) {
                            const S* src = adj + (o * osp.len + off2) * osp.inner;
                            S* dst = da + o * len * osp.inner;
                            for (Index t = 0; t < len * osp.inner; ++t) dst[t] += src[t];
                          }
                        }
                        off2 += len;
                      }
                    });
}

// Column j of a rank-2 tensor, as a rank-1 vector.
template <typename S>
Var<S> col(const Var<S>& x, Index j) {
  detail::require(x.value().rank() == 2,
                  "col: expected rank-2 tensor, got " + x.value().shape_string());
  const Index rows = x.value().extent(0), cols_n = x.value().extent(1);
  detail::require(j >= 0 && j < cols_n, "col: index " + std::to_string(j) +
                                            " out of range for " + x.value().shape_string());
  Tensor<S> out({rows});
  const S* xd = x.value().data();
  S* od = out.data();
  for (Index r = 0; r < rows; ++r) od[r] = xd[r * cols_n + j];
  return Var<S>::op("col", std::move(out), {x}, [j, cols_n, rows](Node<S>& n) {
    const auto& in = n.inputs[0];
    if (!in->requires_grad) return;
    const S* adj = n.adjoint.data();
    S* da = in->adjoint.data();
    for (Index r = 0; r < rows; ++r) da[r * cols_n + j] += adj[r];
  });
}

// Rows of a rank-1/rank-2 tensor selected by index list (duplicates allowed).
template <typename S>
Var<S> gather_rows(const Var<S>& x, std::vector<Index> idx) {
  const Index rank = x.value().rank();
  detail::require(rank == 1 || rank == 2, "gather_rows: expected rank 1 or 2, got " +
                                              x.value().shape_string());
  const Index rows = x.value().extent(0);
  const Index width = rank == 2 ? x.value().extent(1) : 1;
  for (Index i : idx)
    detail::require(i >= 0 && i < rows, "gather_rows: row index " + std::to_string(i) +
                                            " out of range for " + x.value().shape_string());
  Shape out_shape = rank == 2 ? Shape{static_cast<Index>(idx.size()), width}
                              : Shape{static_cast<Index>(idx.size())};
  Tensor<S> out(out_shape);
  const S* xd = x.value().data();
  S* od = out.data();
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::memcpy(od + static_cast<Index>(k) * width, xd + idx[k] * width,
                sizeof(S) * static_cast<std::size_t>(width));
  return Var<S>::op("gather_rows", std::move(out), {x},
                    [idx = std::move(idx), width](Node<S>& n) {
                      const auto& in = n.inputs[0];
                      if (!in->requires_grad) return;
                      const S* adj = n.adjoint.data();
                      S* da = in->adjoint.data();
                      for (std::size_t k = 0; k < idx.size(); ++k) {
                        const S* src = adj + static_cast<Index>(k) * width;
                        S* dst = da + idx[k] * width;
                        for (Index c = 0; c < width; ++c) dst[c] += src[c];
                      }
                    });
}

// out[r, c] = x[r, c] * s[r]
template <typename S>
Var<S> rowwise_scale(const Var<S>& x, const Var<S>& s) {
  detail::require(x.value().rank() == 2 && s.value().rank() == 1 &&
                      s.value().extent(0) == x.value().extent(0),
                  "rowwise_scale: want [RxC] and [R], got " + x.value().shape_string() +
                      " and " + s.value().shape_string());
  const Index rows = x.value().extent(0), width = x.value().extent(1);
  Tensor<S> out(x.shape());
  const S* xd = x.value().data();
  const S* sd = s.value().data();
  S* od = out.data();
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < width; ++c) od[r * width + c] = xd[r * width + c] * sd[r];
  return Var<S>::op("rowwise_scale", std::move(out), {x, s}, [rows, width](Node<S>& n) {
    const S* adj = n.adjoint.data();
    const auto& xin = n.inputs[0];
    const auto& sin = n.inputs[1];
    if (xin->requires_grad) {
      const S* sd = sin->value.data();
      S* da = xin->adjoint.data();
      for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < width; ++c) da[r * width + c] += adj[r * width + c] * sd[r];
    }
    if (sin->requires_grad) {
      const S* xd = xin->value.data();
      S* ds = sin->adjoint.data();
      for (Index r = 0; r < rows; ++r) {
        S acc = 0;
        for (Index c = 0; c < width; ++c) acc += adj[r * width + c] * xd[r * width + c];
        ds[r] += acc;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

// x[..., Din] * W[Din, Dout] + b[Dout], leading axes treated as batch.
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& W, const Var<S>& b) {
  detail::require(x.value().rank() >= 2, "linear: input must have rank >= 2, got " +
                                             x.value().shape_string());
  detail::require(W.value().rank() == 2, "linear: weight must be rank 2, got " +
                                             W.value().shape_string());
  const Index din = x.value().extent(x.value().rank() - 1);
  const Index dout = W.value().extent(1);
  detail::require(W.value().extent(0) == din,
                  "linear: inner extents disagree: input " + x.value().shape_string() +
                      " vs weight " + W.value().shape_string());
  detail::require(b.value().numel() == dout,
                  "linear: bias " + b.value().shape_string() + " does not match output dim " +
                      std::to_string(dout));
  const Index rows = x.value().numel() / din;
  Shape out_shape = x.value().shape();
  out_shape.back() = dout;
  Tensor<S> out(out_shape);
  out.mat(rows, dout).noalias() = x.value().mat(rows, din) * W.value().mat(din, dout);
  out.mat(rows, dout).rowwise() += b.value().vec().transpose();
  return Var<S>::op("linear", std::move(out), {x, W, b}, [rows, din, dout](Node<S>& n) {
    const auto dy = n.adjoint.mat(rows, dout);
    const auto& xin = n.inputs[0];
    const auto& win = n.inputs[1];
    const auto& bin = n.inputs[2];
    if (xin->requires_grad)
      xin->adjoint.mat(rows, din).noalias() += dy * win->value.mat(din, dout).transpose();
    if (win->requires_grad)
      win->adjoint.mat(din, dout).noalias() +=
          xin->value.mat(rows, din).transpose() * dy;
    if (bin->requires_grad) bin->adjoint.vec() += dy.colwise().sum().transpose();
  });
}

// Batched a[B,T,D] x b[B,U,D]^T -> [B,T,U]
template <typename S>
Var<S> bmm_nt(const Var<S>& a, const Var<S>& b) {
  detail::require(a.value().rank() == 3 && b.value().rank() == 3 &&
                      a.value().extent(0) == b.value().extent(0) &&
                      a.value().extent(2) == b.value().extent(2),
                  "bmm_nt: incompatible shapes " + a.value().shape_string() + " and " +
                      b.value().shape_string());
  const Index B = a.value().extent(0), T = a.value().extent(1), D = a.value().extent(2);
  const Index U = b.value().extent(1);
  Tensor<S> out({B, T, U});
  for (Index i = 0; i < B; ++i) {
    CMapMat<S> am(a.value().data() + i * T * D, T, D);
    CMapMat<S> bm(b.value().data() + i * U * D, U, D);
    MapMat<S> om(out.data() + i * T * U, T, U);
    om.noalias() = am * bm.transpose();
  }
  return Var<S>::op("bmm_nt", std::move(out), {a, b}, [B, T, D, U](Node<S>& n) {
    const auto& ain = n.inputs[0];
    const auto& bin = n.inputs[1];
    for (Index i = 0; i < B; ++i) {
      CMapMat<S> dy(n.adjoint.data() + i * T * U, T, U);
      if (ain->requires_grad) {
        CMapMat<S> bm(bin->value.data() + i * U * D, U, D);
        MapMat<S> da(ain->adjoint.data() + i * T * D, T, D);
        da.noalias() += dy * bm;
      }
      if (bin->requires_grad) {
        CMapMat<S> am(ain->value.data() + i * T * D, T, D);
        MapMat<S> db(bin->adjoint.data() + i * U * D, U, D);
        db.noalias() += dy.transpose() * am;
      }
    }
  });
}

// Batched a[B,T,U] x b[B,U,D] -> [B,T,D]
template <typename S>
Var<S> bmm_nn(const Var<S>& a, const Var<S>& b) {
  detail::require(a.value().rank() == 3 && b.value().rank() == 3 &&
                      a.value().extent(0) == b.value().extent(0) &&
                      a.value().extent(2) == b.value().extent(1),
                  "bmm_nn: incompatible shapes " + a.value().shape_string() + " and " +
                      b.value().shape_string());
  const Index B = a.value().extent(0), T = a.value().extent(1), U = a.value().extent(2);
  const Index D = b.value().extent(2);
  Tensor<S> out({B, T, D});
  for (Index i = 0; i < B; ++i) {
    CMapMat<S> am(a.value().data() + i * T * U, T, U);
    CMapMat<S> bm(b.value().data() + i * U * D, U, D);
    MapMat<S> om(out.data() + i * T * D, T, D);
    om.noalias() = am * bm;
  }
  return Var<S>::op("bmm_nn", std::move(out), {a, b}, [B, T, U, D](Node<S>& n) {
    const auto& ain = n.inputs[0];
    const auto& bin = n.inputs[1];
    for (Index i = 0; i < B; ++i) {
      CMapMat<S> dy(n.adjoint.data() + i * T * D, T, D);
      if (ain->requires_grad) {
        CMapMat<S> bm(bin->value.data() + i * U * D, U, D);
        MapMat<S> da(ain->adjoint.data() + i * T * U, T, U);
        da.noalias() += dy * bm.transpose();
      }
      if (bin->requires_grad) {
        CMapMat<S> am(ain->value.data() + i * T * U, T, U);
        MapMat<S> db(bin->adjoint.data() + i * U * D, U, D);
        db.noalias() += am.transpose() * dy;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

namespace detail {

// Causal taps: out[t] uses x[t - (k-1-j)*d] for tap j, so tap k-1 is "now".
template <typename S>
void gather_causal(const S* x, Index B, Index T, Index C, Index k, Index d, S* g) {
  for (Index b = 0; b < B; ++b)
    for (Index t = 0; t < T; ++t) {
      S* row = g + (b * T + t) * k * C;
      for (Index j = 0; j < k; ++j) {
        const Index src_t = t - (k - 1 - j) * d;
        if (src_t >= 0)
          std::memcpy(row + j * C, x + (b * T + src_t) * C,
                      sizeof(S) * static_cast<std::size_t>(C));
        else
          std::memset(row + j * C, 0, sizeof(S) * static_cast<std::size_t>(C));
      }
    }
}

}  // namespace detail

// Dilated causal 1-d convolution over x[B,T,Cin] (or [T,Cin]) with kernel
// K[k,Cin,Cout] and bias b[Cout]. Left zero-padding of (k-1)*d steps is
// internal, so the output keeps length T and out[t] never sees the future.
template <typename S>
Var<S> conv1d_causal(const Var<S>& x, const Var<S>& K, const Var<S>& b, Index dilation) {
  detail::require(dilation >= 1,
                  "conv1d: dilation must be >= 1, got " + std::to_string(dilation));
  detail::require(K.value().rank() == 3,
                  "conv1d: kernel must be [k,Cin,Cout], got " + K.value().shape_string());
  if (x.value().rank() == 2) {
    const Index T = x.value().extent(0), C = x.value().extent(1);
    Var<S> y = conv1d_causal(reshape(x, {1, T, C}), K, b, dilation);
    return reshape(y, {T, y.value().extent(2)});
  }
  detail::require(x.value().rank() == 3,
                  "conv1d: input must be [B,T,Cin] or [T,Cin], got " + x.value().shape_string());
  const Index B = x.value().extent(0), T = x.value().extent(1), Ci = x.value().extent(2);
  const Index k = K.value().extent(0), Co = K.value().extent(2);
  detail::require(k >= 1, "conv1d: kernel size must be >= 1");
  detail::require(K.value().extent(1) == Ci,
                  "conv1d: channel mismatch: input " + x.value().shape_string() +
                      " vs kernel " + K.value().shape_string());
  detail::require(b.value().numel() == Co, "conv1d: bias " + b.value().shape_string() +
                                               " does not match Cout " + std::to_string(Co));
  const Index rows = B * T, kc = k * Ci;
  Tensor<S> g({rows, kc});
  detail::gather_causal(x.value().data(), B, T, Ci, k, dilation, g.data());
  Tensor<S> out({B, T, Co});
  out.mat(rows, Co).noalias() = g.mat(rows, kc) * K.value().mat(kc, Co);
  out.mat(rows, Co).rowwise() += b.value().vec().transpose();
  return Var<S>::op(
      "conv1d", std::move(out), {x, K, b}, [B, T, Ci, Co, k, kc, rows, dilation](Node<S>& n) {
        const auto dy = n.adjoint.mat(rows, Co);
        const auto& xin = n.inputs[0];
        const auto& kin = n.inputs[1];
        const auto& bin = n.inputs[2];
        if (bin->requires_grad) bin->adjoint.vec() += dy.colwise().sum().transpose();
        if (kin->requires_grad) {
          Tensor<S> g2({rows, kc});
          detail::gather_causal(xin->value.data(), B, T, Ci, k, dilation, g2.data());
          kin->adjoint.mat(kc, Co).noalias() += g2.mat(rows, kc).transpose() * dy;
        }
        if (xin->requires_grad) {
          Tensor<S> dg({rows, kc});
          dg.mat(rows, kc).noalias() = dy * kin->value.mat(kc, Co).transpose();
          const S* dgp = dg.data();
          S* dx = xin->adjoint.data();
          for (Index bb = 0; bb < B; ++bb)
            for (Index t = 0; t < T; ++t) {
              const S* row = dgp + (bb * T + t) * kc;
              for (Index j = 0; j < k; ++j) {
                const Index src_t = t - (k - 1 - j) * dilation;
                if (src_t < 0) continue;
                S* dst = dx + (bb * T + src_t) * Ci;
                const S* src = row + j * Ci;
                for (Index c = 0; c < Ci; ++c) dst[c] += src[c];
              }
            }
        }
      });
}

namespace detail {

struct Conv2dDims {
  Index F, C, H, W, Co, kh, kw, stride, pad, Ho, Wo;
};

template <typename S>
void im2col(const S* x, const Conv2dDims& d, Index f0, Index f1, S* cols) {
  const Index ckk = d.C * d.kh * d.kw;
  for (Index f = f0; f < f1; ++f)
    for (Index oy = 0; oy < d.Ho; ++oy)
      for (Index ox = 0; ox < d.Wo; ++ox) {
        S* dst = cols + (((f - f0) * d.Ho + oy) * d.Wo + ox) * ckk;
        for (Index c = 0; c < d.C; ++c) {
          const S* xc = x + (f * d.C + c) * d.H * d.W;
          for (Index ky = 0; ky < d.kh; ++ky) {
            const Index iy = oy * d.stride + ky - d.pad;
            S* drow = dst + (c * d.kh + ky) * d.kw;
            if (iy < 0 || iy >= d.H) {
              std::memset(drow, 0, sizeof(S) * static_cast<std::size_t>(d.kw));
              continue;
            }
            for (Index kx = 0; kx < d.kw; ++kx) {
              const Index ix = ox * d.stride + kx - d.pad;
              drow[kx] = (ix >= 0 && ix < d.W) ? xc[iy * d.W + ix] : S(0);
            }
          }
        }
      }
}

template <typename S>
void col2im_add(const S* cols, const Conv2dDims& d, Index f0, Index f1, S* dx) {
  const Index ckk = d.C * d.kh * d.kw;
  for (Index f = f0; f < f1; ++f)
    for (Index oy = 0; oy < d.Ho; ++oy)
      for (Index ox = 0; ox < d.Wo; ++ox) {
        const S* src = cols + (((f - f0) * d.Ho + oy) * d.Wo + ox) * ckk;
        for (Index c = 0; c < d.C; ++c) {
          S* xc = dx + (f * d.C + c) * d.H * d.W;
          for (Index ky = 0; ky < d.kh; ++ky) {
            const Index iy = oy * d.stride + ky - d.pad;
            if (iy < 0 || iy >= d.H) continue;
            const S* srow = src + (c * d.kh + ky) * d.kw;
            for (Index kx = 0; kx < d.kw; ++kx) {
              const Index ix = ox * d.stride + kx - d.pad;
              if (ix >= 0 && ix < d.W) xc[iy * d.W + ix] += srow[kx];
            }
          }
        }
      }
}

inline constexpr Index kConv2dFrameBlock = 256;

}  // namespace detail

// Standard cross-correlation over x[F,Cin,H,W] (or [Cin,H,W]) with kernel
// K[Cout,Cin,kh,kw]. Processed in frame blocks to bound im2col scratch.
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& K, const Var<S>& b, Index stride, Index pad) {
  detail::require(stride >= 1, "conv2d: stride must be >= 1");
  detail::require(pad >= 0, "conv2d: padding must be >= 0");
  detail::require(K.value().rank() == 4,
                  "conv2d: kernel must be [Cout,Cin,kh,kw], got " + K.value().shape_string());
  if (x.value().rank() == 3) {
    const auto& s = x.value().shape();
    Var<S> y = conv2d(reshape(x, {1, s[0], s[1], s[2]}), K, b, stride, pad);
    const auto& ys = y.value().shape();
    return reshape(y, {ys[1], ys[2], ys[3]});
  }
  detail::require(x.value().rank() == 4,
                  "conv2d: input must be [F,C,H,W] or [C,H,W], got " + x.value().shape_string());
  detail::Conv2dDims d;
  d.F = x.value().extent(0);
  d.C = x.value().extent(1);
  d.H = x.value().extent(2);
  d.W = x.value().extent(3);
  d.Co = K.value().extent(0);
  d.kh = K.value().extent(2);
  d.kw = K.value().extent(3);
  d.stride = stride;
  d.pad = pad;
  detail::require(K.value().extent(1) == d.C,
                  "conv2d: channel mismatch: input " + x.value().shape_string() +
                      " vs kernel " + K.value().shape_string());
  detail::require(d.kh <= d.H + 2 * pad && d.kw <= d.W + 2 * pad,
                  "conv2d: kernel " + K.value().shape_string() +
                      " larger than padded input " + x.value().shape_string());
  detail::require(b.value().numel() == d.Co, "conv2d: bias " + b.value().shape_string() +
                                                 " does not match Cout");
  d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
  d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;
  const Index ckk = d.C * d.kh * d.kw;

  Tensor<S> out({d.F, d.Co, d.Ho, d.Wo});
  {
    const S* bp = b.value().data();
    S* op = out.data();
    Tensor<S> cols({detail::kConv2dFrameBlock * d.Ho * d.Wo, ckk});
    Tensor<S> block({detail::kConv2dFrameBlock * d.Ho * d.Wo, d.Co});
    for (Index f0 = 0; f0 < d.F; f0 += detail::kConv2dFrameBlock) {
      const Index f1 = std::min(d.F, f0 + detail::kConv2dFrameBlock);
      const Index rows = (f1 - f0) * d.Ho * d.Wo;
      detail::im2col(x.value().data(), d, f0, f1, cols.data());
      MapMat<S>(block.data(), rows, d.Co).noalias() =
          CMapMat<S>(cols.data(), rows, ckk) * K.value().mat(ckk, d.Co);
      const S* bl = block.data();
      const Index hw = d.Ho * d.Wo;
      for (Index f = f0; f < f1; ++f)
        for (Index co = 0; co < d.Co; ++co) {
          S* dst = op + (f * d.Co + co) * hw;
          const S* src = bl + (f - f0) * hw * d.Co + co;
          const S bias = bp[co];
          for (Index i = 0; i < hw; ++i) dst[i] = src[i * d.Co] + bias;
        }
    }
  }

  return Var<S>::op("conv2d", std::move(out), {x, K, b}, [d, ckk](Node<S>& n) {
    const auto& xin = n.inputs[0];
    const auto& kin = n.inputs[1];
    const auto& bin = n.inputs[2];
    const Index hw = d.Ho * d.Wo;
    if (bin->requires_grad) {
      S* db = bin->adjoint.data();
      const S* adj = n.adjoint.data();
      for (Index f = 0; f < d.F; ++f)
        for (Index co = 0; co < d.Co; ++co) {
          const S* src = adj + (f * d.Co + co) * hw;
          S acc = 0;
          for (Index i = 0; i < hw; ++i) acc += src[i];
          db[co] += acc;
        }
    }
    if (!kin->requires_grad && !xin->requires_grad) return;
    Tensor<S> cols({detail::kConv2dFrameBlock * hw, ckk});
    Tensor<S> dy2({detail::kConv2dFrameBlock * hw, d.Co});
    Tensor<S> dcols;
    if (xin->requires_grad) dcols = Tensor<S>({detail::kConv2dFrameBlock * hw, ckk});
    for (Index f0 = 0; f0 < d.F; f0 += detail::kConv2dFrameBlock) {
      const Index f1 = std::min(d.F, f0 + detail::kConv2dFrameBlock);
      const Index rows = (f1 - f0) * hw;
      // adjoint [F,Co,Ho,Wo] -> row-major [(f,oy,ox), co]
      {
        const S* adj = n.adjoint.data();
        S* dd = dy2.data();
        for (Index f = f0; f < f1; ++f)
          for (Index co = 0; co < d.Co; ++co) {
            const S* src = adj + (f * d.Co + co) * hw;
            S* dst = dd + (f - f0) * hw * d.Co + co;
            for (Index i = 0; i < hw; ++i) dst[i * d.Co] = src[i];
          }
      }
      if (kin->requires_grad) {
        detail::im2col(xin->value.data(), d, f0, f1, cols.data());
        kin->adjoint.mat(ckk, d.Co).noalias() +=
            CMapMat<S>(cols.data(), rows, ckk).transpose() *
            CMapMat<S>(dy2.data(), rows, d.Co);
      }
      if (xin->requires_grad) {
        MapMat<S>(dcols.data(), rows, ckk).noalias() =
            CMapMat<S>(dy2.data(), rows, d.Co) * kin->value.mat(ckk, d.Co).transpose();
        detail::col2im_add(dcols.data(), d, f0, f1, xin->adjoint.data());
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

// Inverted dropout: survivors scaled by 1/(1-p). Identity when not training
// or p == 0 (the input variable is returned unchanged).
template <typename S>
Var<S> dropout(const Var<S>& x, double p, bool training, Rng& rng) {
  detail::require(p >= 0.0 && p < 1.0,
                  "dropout: probability must be in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  Tensor<S> mask(x.shape());
  const S keep = S(1.0 / (1.0 - p));
  S* md = mask.data();
  for (Index i = 0, n = mask.numel(); i < n; ++i)
    md[i] = rng.uniform() < p ? S(0) : keep;
  Tensor<S> out(x.shape());
  out.vec() = x.value().vec().cwiseProduct(mask.vec());
  return Var<S>::op("dropout", std::move(out), {x}, [mask = std::move(mask)](Node<S>& n) {
    if (!n.inputs[0]->requires_grad) return;
    n.inputs[0]->adjoint.vec() += n.adjoint.vec().cwiseProduct(mask.vec());
  });
}

// Convenience: mean over all elements as a scalar variable.
template <typename S>
Var<S> mean_all(const Var<S>& x) {
  return mean(reshape(x, {x.value().numel()}), 0);
}

}  // namespace afusion
