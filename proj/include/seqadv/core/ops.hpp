#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqadv/core/graph.hpp"

// Differentiable primitives recorded on a Graph. Tensors are read as
// rows x cols with the last axis as columns; only scalar and row-bias
// broadcasting exist.

namespace seqadv::ops {

namespace detail {

[[noreturn]] inline void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape_string(a.shape()) + " and " +
                              shape_string(b.shape()));
}

inline void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a, b);
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Softmax of one row into `out`; entries with keep[j]==0 receive exactly 0.
inline void softmax_row(std::span<const double> in, std::span<double> out,
                        const std::uint8_t* keep = nullptr) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < in.size(); ++j)
    if (!keep || keep[j]) mx = std::max(mx, in[j]);
  if (!std::isfinite(mx))
    throw std::invalid_argument("softmax: row has no finite unmasked entry");
  double total = 0.0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    out[j] = (!keep || keep[j]) ? std::exp(in[j] - mx) : 0.0;
    total += out[j];
  }
  for (double& v : out) v /= total;
}

// Backward of a row softmax given its output y and upstream gradient gy.
inline void softmax_row_backward(std::span<const double> y, std::span<const double> gy,
                                 std::span<double> gx) {
  double dot = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) dot += y[j] * gy[j];
  for (std::size_t j = 0; j < y.size(); ++j) gx[j] += y[j] * (gy[j] - dot);
}

template <class Fwd, class Deriv>
NodeId unary(Graph& g, NodeId a, OpKind kind, Fwd fwd, Deriv deriv) {
  Tensor out = g.value(a);
  for (double& v : out.data()) v = fwd(v);
  return g.record(kind, std::move(out), {a},
                  [a, deriv](Graph& gr, NodeId self, const Tensor& gy) {
                    Tensor& ga = gr.grad_slot(a);
                    if (ga.empty()) return;
                    const Tensor& x = gr.value(a);
                    const Tensor& y = gr.value(self);
                    for (std::size_t i = 0; i < gy.size(); ++i)
                      ga[i] += gy[i] * deriv(x[i], y[i]);
                  });
}

}  // namespace detail

/// a[R x K] * b[K x N] -> [R x N]. Zero entries of `a` are skipped, which
/// makes one-hot inputs cheap without changing any row's result.
inline NodeId matmul(Graph& g, NodeId a, NodeId b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (B.shape().size() != 2 || A.cols() != B.rows()) detail::shape_error("matmul", A, B);
  const std::size_t R = A.rows(), K = A.cols(), N = B.cols();
  Tensor out = Tensor::matrix(R, N);
  for (std::size_t r = 0; r < R; ++r) {
    double* o = &out(r, 0);
    for (std::size_t k = 0; k < K; ++k) {
      const double av = A(r, k);
      if (av == 0.0) continue;
      const double* brow = B.row(k).data();
      for (std::size_t n = 0; n < N; ++n) o[n] += av * brow[n];
    }
  }
  return g.record(OpKind::MatMul, std::move(out), {a, b},
                  [a, b, R, K, N](Graph& gr, NodeId, const Tensor& gy) {
                    const Tensor& A = gr.value(a);
                    const Tensor& B = gr.value(b);
                    Tensor& ga = gr.grad_slot(a);
                    if (!ga.empty()) {
                      for (std::size_t r = 0; r < R; ++r)
                        for (std::size_t k = 0; k < K; ++k) {
                          double s = 0.0;
                          for (std::size_t n = 0; n < N; ++n) s += gy(r, n) * B(k, n);
                          ga(r, k) += s;
                        }
                    }
                    Tensor& gb = gr.grad_slot(b);
                    if (!gb.empty()) {
                      for (std::size_t r = 0; r < R; ++r)
                        for (std::size_t k = 0; k < K; ++k) {
                          const double av = A(r, k);
                          if (av == 0.0) continue;
                          double* grow = &gb(k, 0);
                          for (std::size_t n = 0; n < N; ++n) grow[n] += av * gy(r, n);
                        }
                    }
                  });
}

inline NodeId add(Graph& g, NodeId a, NodeId b) {
  detail::require_same("add", g.value(a), g.value(b));
  Tensor out = g.value(a);
  const Tensor& B = g.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return g.record(OpKind::Add, std::move(out), {a, b},
                  [a, b](Graph& gr, NodeId, const Tensor& gy) {
                    gr.accumulate(a, gy);
                    gr.accumulate(b, gy);
                  });
}

inline NodeId sub(Graph& g, NodeId a, NodeId b) {
  detail::require_same("sub", g.value(a), g.value(b));
  Tensor out = g.value(a);
  const Tensor& B = g.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return g.record(OpKind::Sub, std::move(out), {a, b},
                  [a, b](Graph& gr, NodeId, const Tensor& gy) {
                    gr.accumulate(a, gy);
                    Tensor& gb = gr.grad_slot(b);
                    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
                  });
}

inline NodeId mul(Graph& g, NodeId a, NodeId b) {
  detail::require_same("mul", g.value(a), g.value(b));
  Tensor out = g.value(a);
  const Tensor& B = g.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return g.record(OpKind::Mul, std::move(out), {a, b},
                  [a, b](Graph& gr, NodeId, const Tensor& gy) {
                    const Tensor& A = gr.value(a);
                    const Tensor& B = gr.value(b);
                    Tensor& ga = gr.grad_slot(a);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * B[i];
                    Tensor& gb = gr.grad_slot(b);
                    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * A[i];
                  });
}

/// a[R x N] + bias[N] broadcast over rows.
inline NodeId add_row(Graph& g, NodeId a, NodeId bias) {
  const Tensor& A = g.value(a);
  const Tensor& b = g.value(bias);
  if (b.size() != A.cols()) detail::shape_error("add_row", A, b);
  Tensor out = A;
  const std::size_t N = A.cols();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t n = 0; n < N; ++n) out(r, n) += b[n];
  return g.record(OpKind::AddRow, std::move(out), {a, bias},
                  [a, bias, N](Graph& gr, NodeId, const Tensor& gy) {
                    gr.accumulate(a, gy);
                    Tensor& gb = gr.grad_slot(bias);
                    if (gb.empty()) return;
                    for (std::size_t r = 0; r < gy.rows(); ++r)
                      for (std::size_t n = 0; n < N; ++n) gb[n] += gy(r, n);
                  });
}

inline NodeId scale(Graph& g, NodeId a, double s) {
  Tensor out = g.value(a);
  for (double& v : out.data()) v *= s;
  return g.record(OpKind::Scale, std::move(out), {a},
                  [a, s](Graph& gr, NodeId, const Tensor& gy) {
                    Tensor& ga = gr.grad_slot(a);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * gy[i];
                  });
}

inline NodeId add_scalar(Graph& g, NodeId a, double s) {
  Tensor out = g.value(a);
  for (double& v : out.data()) v += s;
  return g.record(OpKind::AddScalar, std::move(out), {a},
                  [a](Graph& gr, NodeId, const Tensor& gy) { gr.accumulate(a, gy); });
}

inline NodeId tanh(Graph& g, NodeId a) {
  return detail::unary(
      g, a, OpKind::Tanh, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline NodeId sigmoid(Graph& g, NodeId a) {
  return detail::unary(
      g, a, OpKind::Sigmoid, detail::stable_sigmoid,
      [](double, double y) { return y * (1.0 - y); });
}

inline NodeId exp(Graph& g, NodeId a) {
  return detail::unary(
      g, a, OpKind::Exp, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

inline NodeId log(Graph& g, NodeId a) {
  for (double v : g.value(a).data())
    if (!(v > 0.0))
      throw std::domain_error("log: non-positive input " + std::to_string(v));
  return detail::unary(
      g, a, OpKind::Log, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

/// Values outside [lo, hi] are pinned to the bound and pass no gradient.
inline NodeId clamp(Graph& g, NodeId a, double lo, double hi) {
  return detail::unary(
      g, a, OpKind::Clamp, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

/// Row-wise softmax over the last axis.
inline NodeId softmax(Graph& g, NodeId a) {
  const Tensor& A = g.value(a);
  Tensor out(A.shape());
  for (std::size_t r = 0; r < A.rows(); ++r) detail::softmax_row(A.row(r), out.row(r));
  return g.record(OpKind::Softmax, std::move(out), {a},
                  [a](Graph& gr, NodeId self, const Tensor& gy) {
                    Tensor& ga = gr.grad_slot(a);
                    const Tensor& y = gr.value(self);
                    for (std::size_t r = 0; r < y.rows(); ++r)
                      detail::softmax_row_backward(y.row(r), gy.row(r), ga.row(r));
                  });
}

/// Row-wise softmax restricted to entries with keep != 0; the rest are 0.
/// Every row needs at least one kept entry.
inline NodeId masked_softmax(Graph& g, NodeId a, std::vector<std::uint8_t> keep) {
  const Tensor& A = g.value(a);
  if (keep.size() != A.size())
    throw std::invalid_argument("masked_softmax: mask has " + std::to_string(keep.size()) +
                                " entries for shape " + shape_string(A.shape()));
  Tensor out(A.shape());
  const std::size_t C = A.cols();
  for (std::size_t r = 0; r < A.rows(); ++r)
    detail::softmax_row(A.row(r), out.row(r), keep.data() + r * C);
  return g.record(OpKind::MaskedSoftmax, std::move(out), {a},
                  [a](Graph& gr, NodeId self, const Tensor& gy) {
                    // Masked outputs are identically 0, so y[j]==0 removes them.
                    Tensor& ga = gr.grad_slot(a);
                    const Tensor& y = gr.value(self);
                    for (std::size_t r = 0; r < y.rows(); ++r)
                      detail::softmax_row_backward(y.row(r), gy.row(r), ga.row(r));
                  });
}

inline NodeId concat_cols(Graph& g, const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t R = g.value(parts[0]).rows();
  std::size_t total = 0;
  for (NodeId p : parts) {
    if (g.value(p).rows() != R) detail::shape_error("concat_cols", g.value(parts[0]), g.value(p));
    total += g.value(p).cols();
  }
  Tensor out = Tensor::matrix(R, total);
  std::size_t off = 0;
  for (NodeId p : parts) {
    const Tensor& P = g.value(p);
    for (std::size_t r = 0; r < R; ++r)
      std::copy(P.row(r).begin(), P.row(r).end(), out.row(r).begin() + off);
    off += P.cols();
  }
  return g.record(OpKind::ConcatCols, std::move(out), parts,
                  [parts](Graph& gr, NodeId, const Tensor& gy) {
                    std::size_t off = 0;
                    for (NodeId p : parts) {
                      const std::size_t C = gr.value(p).cols();
                      Tensor& gp = gr.grad_slot(p);
                      if (!gp.empty())
                        for (std::size_t r = 0; r < gy.rows(); ++r)
                          for (std::size_t c = 0; c < C; ++c) gp(r, c) += gy(r, off + c);
                      off += C;
                    }
                  });
}

/// Columns [begin, end) of every row.
inline NodeId slice_cols(Graph& g, NodeId a, std::size_t begin, std::size_t end) {
  const Tensor& A = g.value(a);
  if (begin >= end || end > A.cols())
    throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") outside " + shape_string(A.shape()));
  const std::size_t R = A.rows(), W = end - begin;
  Tensor out = Tensor::matrix(R, W);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < W; ++c) out(r, c) = A(r, begin + c);
  return g.record(OpKind::SliceCols, std::move(out), {a},
                  [a, begin, W](Graph& gr, NodeId, const Tensor& gy) {
                    Tensor& ga = gr.grad_slot(a);
                    for (std::size_t r = 0; r < gy.rows(); ++r)
                      for (std::size_t c = 0; c < W; ++c) ga(r, begin + c) += gy(r, c);
                  });
}

inline NodeId sum(Graph& g, NodeId a) {
  double s = 0.0;
  for (double v : g.value(a).data()) s += v;
  return g.record(OpKind::Sum, Tensor::scalar(s), {a},
                  [a](Graph& gr, NodeId, const Tensor& gy) {
                    Tensor& ga = gr.grad_slot(a);
                    for (double& v : ga.data()) v += gy[0];
                  });
}

inline NodeId mean(Graph& g, NodeId a) {
  const Tensor& A = g.value(a);
  double s = 0.0;
  for (double v : A.data()) s += v;
  const double n = static_cast<double>(A.size());
  return g.record(OpKind::Mean, Tensor::scalar(s / n), {a},
                  [a, n](Graph& gr, NodeId, const Tensor& gy) {
                    Tensor& ga = gr.grad_slot(a);
                    for (double& v : ga.data()) v += gy[0] / n;
                  });
}

/// Row r comes from `a` when take_a[r] is set, otherwise from `b`.
inline NodeId select_rows(Graph& g, const std::vector<std::uint8_t>& take_a, NodeId a,
                          NodeId b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  detail::require_same("select_rows", A, B);
  if (take_a.size() != A.rows())
    throw std::invalid_argument("select_rows: mask length " + std::to_string(take_a.size()) +
                                " for " + std::to_string(A.rows()) + " rows");
  Tensor out = B;
  for (std::size_t r = 0; r < A.rows(); ++r)
    if (take_a[r]) std::copy(A.row(r).begin(), A.row(r).end(), out.row(r).begin());
  return g.record(OpKind::SelectRows, std::move(out), {a, b},
                  [a, b, take_a](Graph& gr, NodeId, const Tensor& gy) {
                    Tensor& ga = gr.grad_slot(a);
                    Tensor& gb = gr.grad_slot(b);
                    for (std::size_t r = 0; r < gy.rows(); ++r) {
                      Tensor& dst = take_a[r] ? ga : gb;
                      if (dst.empty()) continue;
                      for (std::size_t c = 0; c < gy.cols(); ++c) dst(r, c) += gy(r, c);
                    }
                  });
}

/// Row r is row r of sources[which[r]]; all sources share one shape.
inline NodeId gather_rows(Graph& g, const std::vector<NodeId>& sources,
                          const std::vector<std::size_t>& which) {
  if (sources.empty()) throw std::invalid_argument("gather_rows: no sources");
  const Tensor& first = g.value(sources[0]);
  for (NodeId s : sources) detail::require_same("gather_rows", first, g.value(s));
  if (which.size() != first.rows())
    throw std::invalid_argument("gather_rows: index count does not match rows");
  Tensor out(first.shape());
  for (std::size_t r = 0; r < which.size(); ++r) {
    if (which[r] >= sources.size())
      throw std::out_of_range("gather_rows: source index out of range");
    const Tensor& S = g.value(sources[which[r]]);
    std::copy(S.row(r).begin(), S.row(r).end(), out.row(r).begin());
  }
  return g.record(OpKind::GatherRows, std::move(out), sources,
                  [sources, which](Graph& gr, NodeId, const Tensor& gy) {
                    for (std::size_t r = 0; r < which.size(); ++r) {
                      Tensor& gs = gr.grad_slot(sources[which[r]]);
                      if (gs.empty()) continue;
                      for (std::size_t c = 0; c < gy.cols(); ++c) gs(r, c) += gy(r, c);
                    }
                  });
}

/// out[r, :] = s[r] * a[r, :] with s of shape [R x 1].
inline NodeId scale_rows(Graph& g, NodeId a, NodeId s) {
  const Tensor& A = g.value(a);
  const Tensor& S = g.value(s);
  if (S.size() != A.rows()) detail::shape_error("scale_rows", A, S);
  Tensor out = A;
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (double& v : out.row(r)) v *= S[r];
  return g.record(OpKind::ScaleRows, std::move(out), {a, s},
                  [a, s](Graph& gr, NodeId, const Tensor& gy) {
                    const Tensor& A = gr.value(a);
                    const Tensor& S = gr.value(s);
                    Tensor& ga = gr.grad_slot(a);
                    Tensor& gs = gr.grad_slot(s);
                    for (std::size_t r = 0; r < A.rows(); ++r) {
                      double dot = 0.0;
                      for (std::size_t c = 0; c < A.cols(); ++c) {
                        if (!ga.empty()) ga(r, c) += S[r] * gy(r, c);
                        dot += A(r, c) * gy(r, c);
                      }
                      if (!gs.empty()) gs[r] += dot;
                    }
                  });
}

}  // namespace seqadv::ops
