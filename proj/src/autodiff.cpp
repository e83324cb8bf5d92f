#include "oci/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "oci/errors.hpp"

namespace oci {

namespace {

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) os << 'x';
    os << t.shape[i];
  }
  os << ']';
  return os.str();
}

void require_2d(const Tensor& t, const char* op) {
  if (t.shape.size() != 2)
    throw ValidationError(std::string(op) + ": expected a 2-d tensor, got " + shape_str(t));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                          shape_str(b));
}

// Plain (non-taped) matrix products used by backward closures.
Tensor mm(const Tensor& a, const Tensor& b) {
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = a.data[static_cast<std::size_t>(i) * k + p];
      if (av == 0.0) continue;
      const double* brow = &b.data[static_cast<std::size_t>(p) * n];
      double* orow = &out.data[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  return out;
}

Tensor mm_nt(const Tensor& a, const Tensor& b) {  // a * b^T
  const int m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const double* arow = &a.data[static_cast<std::size_t>(i) * k];
      const double* brow = &b.data[static_cast<std::size_t>(j) * k];
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out.data[static_cast<std::size_t>(i) * n + j] = acc;
    }
  return out;
}

Tensor mm_tn(const Tensor& a, const Tensor& b) {  // a^T * b
  const int k = a.rows(), m = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  for (int p = 0; p < k; ++p) {
    const double* arow = &a.data[static_cast<std::size_t>(p) * m];
    const double* brow = &b.data[static_cast<std::size_t>(p) * n];
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = &out.data[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

void axpy(Tensor& acc, const Tensor& g) {
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
}

}  // namespace

Tape::Id Tape::check(Id id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw UsageError("tape: node id " + std::to_string(id) + " out of range");
  return id;
}

Tape::Id Tape::push(Tensor value, std::function<void(Tape&, Id)> back, const char* op) {
  if (!value.all_finite())
    throw NumericError(std::string("non-finite value produced by op '") + op + "'");
  Node n;
  n.grad = Tensor::zeros(value.shape);
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::leaf(Tensor t) { return push(std::move(t), nullptr, "leaf"); }

Tape::Id Tape::param(Param& p) {
  Id id = push(p.value, nullptr, "param");
  nodes_[id].bound = &p;
  return id;
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  return push(std::move(out),
              [a, b](Tape& t, Id self) {
                axpy(t.grad_mut(a), t.grad(self));
                axpy(t.grad_mut(b), t.grad(self));
              },
              "add");
}

Tape::Id Tape::sub(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "sub");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
  return push(std::move(out),
              [a, b](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                axpy(t.grad_mut(a), g);
                Tensor& gb = t.grad_mut(b);
                for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= g.data[i];
              },
              "sub");
}

Tape::Id Tape::mul(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  return push(std::move(out),
              [a, b](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                const Tensor& va = t.value(a);
                const Tensor& vb = t.value(b);
                Tensor& ga = t.grad_mut(a);
                Tensor& gb = t.grad_mut(b);
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                  ga.data[i] += g.data[i] * vb.data[i];
                  gb.data[i] += g.data[i] * va.data[i];
                }
              },
              "mul");
}

Tape::Id Tape::scale(Id x, double s) {
  Tensor out = value(x);
  for (double& v : out.data) v *= s;
  return push(std::move(out),
              [x, s](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                Tensor& gx = t.grad_mut(x);
                for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += s * g.data[i];
              },
              "scale");
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_2d(ta, "matmul");
  require_2d(tb, "matmul");
  if (ta.cols() != tb.rows())
    throw ValidationError("matmul: inner dimensions disagree " + shape_str(ta) + " vs " +
                          shape_str(tb));
  return push(mm(ta, tb),
              [a, b](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                axpy(t.grad_mut(a), mm_nt(g, t.value(b)));
                axpy(t.grad_mut(b), mm_tn(t.value(a), g));
              },
              "matmul");
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_2d(ta, "matmul_nt");
  require_2d(tb, "matmul_nt");
  if (ta.cols() != tb.cols())
    throw ValidationError("matmul_nt: inner dimensions disagree " + shape_str(ta) + " vs " +
                          shape_str(tb));
  return push(mm_nt(ta, tb),
              [a, b](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                axpy(t.grad_mut(a), mm(g, t.value(b)));
                axpy(t.grad_mut(b), mm_tn(g, t.value(a)));
              },
              "matmul_nt");
}

Tape::Id Tape::add_row(Id x, Id bias) {
  const Tensor& tx = value(x);
  const Tensor& tb = value(bias);
  require_2d(tx, "add_row");
  require_2d(tb, "add_row");
  if (tb.rows() != 1 || tb.cols() != tx.cols())
    throw ValidationError("add_row: bias must be [1x" + std::to_string(tx.cols()) + "], got " +
                          shape_str(tb));
  Tensor out = tx;
  const int n = tx.cols();
  for (int i = 0; i < tx.rows(); ++i)
    for (int j = 0; j < n; ++j) out.data[static_cast<std::size_t>(i) * n + j] += tb.data[j];
  return push(std::move(out),
              [x, bias](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                axpy(t.grad_mut(x), g);
                Tensor& gb = t.grad_mut(bias);
                const int n = g.cols();
                for (int i = 0; i < g.rows(); ++i)
                  for (int j = 0; j < n; ++j)
                    gb.data[j] += g.data[static_cast<std::size_t>(i) * n + j];
              },
              "add_row");
}

Tape::Id Tape::linear(Id x, Id w, Id bias) { return add_row(matmul(x, w), bias); }

Tape::Id Tape::relu(Id x) {
  Tensor out = value(x);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(out),
              [x](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                const Tensor& v = t.value(x);
                Tensor& gx = t.grad_mut(x);
                for (std::size_t i = 0; i < g.data.size(); ++i)
                  if (v.data[i] > 0.0) gx.data[i] += g.data[i];
              },
              "relu");
}

Tape::Id Tape::layer_norm(Id x, Id gain, Id bias, double eps) {
  const Tensor& tx = value(x);
  const Tensor& tg = value(gain);
  const Tensor& tb = value(bias);
  require_2d(tx, "layer_norm");
  const int n = tx.cols();
  if (n < 2) throw ValidationError("layer_norm: last-axis length must be >= 2, got " +
                                   std::to_string(n));
  if (tg.rows() != 1 || tg.cols() != n || tb.rows() != 1 || tb.cols() != n)
    throw ValidationError("layer_norm: gain/bias must be [1x" + std::to_string(n) + "]");
  const int m = tx.rows();
  Tensor out = Tensor::zeros({m, n});
  // Cache the normalized rows and inverse stds for backward.
  auto xhat = std::make_shared<Tensor>(Tensor::zeros({m, n}));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double* row = &tx.data[static_cast<std::size_t>(i) * n];
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < n; ++j) {
      const double xh = (row[j] - mean) * is;
      xhat->data[static_cast<std::size_t>(i) * n + j] = xh;
      out.data[static_cast<std::size_t>(i) * n + j] = tg.data[j] * xh + tb.data[j];
    }
  }
  return push(std::move(out),
              [x, gain, bias, xhat, inv_std](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                const Tensor& vg = t.value(gain);
                const int m = g.rows(), n = g.cols();
                Tensor& gx = t.grad_mut(x);
                Tensor& gg = t.grad_mut(gain);
                Tensor& gb = t.grad_mut(bias);
                for (int i = 0; i < m; ++i) {
                  const std::size_t off = static_cast<std::size_t>(i) * n;
                  double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                  for (int j = 0; j < n; ++j) {
                    const double go = g.data[off + j];
                    const double xh = xhat->data[off + j];
                    gg.data[j] += go * xh;
                    gb.data[j] += go;
                    const double dxh = go * vg.data[j];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh;
                  }
                  const double is = (*inv_std)[static_cast<std::size_t>(i)];
                  for (int j = 0; j < n; ++j) {
                    const double dxh = g.data[off + j] * vg.data[j];
                    const double xh = xhat->data[off + j];
                    gx.data[off + j] +=
                        is * (dxh - sum_dxh / n - xh * (sum_dxh_xh / n));
                  }
                }
              },
              "layer_norm");
}

Tape::Id Tape::softmax_rows(Id x) {
  const Tensor& tx = value(x);
  require_2d(tx, "softmax_rows");
  const int m = tx.rows(), n = tx.cols();
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    double mx = tx.data[off];
    for (int j = 1; j < n; ++j) mx = std::max(mx, tx.data[off + j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      const double e = std::exp(tx.data[off + j] - mx);
      out.data[off + j] = e;
      z += e;
    }
    for (int j = 0; j < n; ++j) out.data[off + j] /= z;
  }
  return push(std::move(out),
              [x](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                const Tensor& y = t.value(self);
                Tensor& gx = t.grad_mut(x);
                const int m = g.rows(), n = g.cols();
                for (int i = 0; i < m; ++i) {
                  const std::size_t off = static_cast<std::size_t>(i) * n;
                  double dot = 0.0;
                  for (int j = 0; j < n; ++j) dot += g.data[off + j] * y.data[off + j];
                  for (int j = 0; j < n; ++j)
                    gx.data[off + j] += y.data[off + j] * (g.data[off + j] - dot);
                }
              },
              "softmax_rows");
}

Tape::Id Tape::depthwise_conv1d(Id x, Id kernel) {
  const Tensor& tx = value(x);
  const Tensor& tk = value(kernel);
  require_2d(tx, "depthwise_conv1d");
  require_2d(tk, "depthwise_conv1d");
  if (tk.cols() != tx.cols())
    throw ValidationError("depthwise_conv1d: kernel channels " + std::to_string(tk.cols()) +
                          " != input channels " + std::to_string(tx.cols()));
  if (tk.rows() % 2 == 0)
    throw ConfigError("depthwise_conv1d: kernel size must be odd, got " +
                      std::to_string(tk.rows()));
  const int L = tx.rows(), C = tx.cols(), K = tk.rows();
  const int pad = (K - 1) / 2;
  Tensor out = Tensor::zeros({L, C});
  for (int t0 = 0; t0 < L; ++t0)
    for (int j = 0; j < K; ++j) {
      const int s = t0 + j - pad;
      if (s < 0 || s >= L) continue;
      for (int c = 0; c < C; ++c)
        out.data[static_cast<std::size_t>(t0) * C + c] +=
            tx.data[static_cast<std::size_t>(s) * C + c] *
            tk.data[static_cast<std::size_t>(j) * C + c];
    }
  return push(std::move(out),
              [x, kernel, L, C, K, pad](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                const Tensor& vx = t.value(x);
                const Tensor& vk = t.value(kernel);
                Tensor& gx = t.grad_mut(x);
                Tensor& gk = t.grad_mut(kernel);
                for (int t0 = 0; t0 < L; ++t0)
                  for (int j = 0; j < K; ++j) {
                    const int s = t0 + j - pad;
                    if (s < 0 || s >= L) continue;
                    for (int c = 0; c < C; ++c) {
                      const double go = g.data[static_cast<std::size_t>(t0) * C + c];
                      gx.data[static_cast<std::size_t>(s) * C + c] +=
                          go * vk.data[static_cast<std::size_t>(j) * C + c];
                      gk.data[static_cast<std::size_t>(j) * C + c] +=
                          go * vx.data[static_cast<std::size_t>(s) * C + c];
                    }
                  }
              },
              "depthwise_conv1d");
}

Tape::Id Tape::window_stack(Id x, int r) {
  const Tensor& tx = value(x);
  require_2d(tx, "window_stack");
  if (r < 1) throw ValidationError("window_stack: rate must be >= 1, got " + std::to_string(r));
  const int L = tx.rows(), C = tx.cols();
  const int W = (L + r - 1) / r;
  Tensor out = Tensor::zeros({W, r * C});
  for (int w = 0; w < W; ++w)
    for (int j = 0; j < r; ++j) {
      const int s = w * r + j;
      if (s >= L) break;
      std::copy_n(&tx.data[static_cast<std::size_t>(s) * C], C,
                  &out.data[static_cast<std::size_t>(w) * (r * C) + static_cast<std::size_t>(j) * C]);
    }
  return push(std::move(out),
              [x, r, L, C, W](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                Tensor& gx = t.grad_mut(x);
                for (int w = 0; w < W; ++w)
                  for (int j = 0; j < r; ++j) {
                    const int s = w * r + j;
                    if (s >= L) break;
                    const double* src =
                        &g.data[static_cast<std::size_t>(w) * (r * C) + static_cast<std::size_t>(j) * C];
                    double* dst = &gx.data[static_cast<std::size_t>(s) * C];
                    for (int c = 0; c < C; ++c) dst[c] += src[c];
                  }
              },
              "window_stack");
}

Tape::Id Tape::concat_rows(std::span<const Id> parts) {
  if (parts.empty()) throw ValidationError("concat_rows: no inputs");
  const int n = value(parts[0]).cols();
  int total = 0;
  for (Id p : parts) {
    require_2d(value(p), "concat_rows");
    if (value(p).cols() != n)
      throw ValidationError("concat_rows: column mismatch " + std::to_string(value(p).cols()) +
                            " vs " + std::to_string(n));
    total += value(p).rows();
  }
  Tensor out = Tensor::zeros({total, n});
  std::size_t off = 0;
  for (Id p : parts) {
    const Tensor& v = value(p);
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += v.data.size();
  }
  std::vector<Id> owned(parts.begin(), parts.end());
  return push(std::move(out),
              [owned](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                std::size_t off = 0;
                for (Id p : owned) {
                  Tensor& gp = t.grad_mut(p);
                  for (std::size_t i = 0; i < gp.data.size(); ++i) gp.data[i] += g.data[off + i];
                  off += gp.data.size();
                }
              },
              "concat_rows");
}

Tape::Id Tape::concat_cols(std::span<const Id> parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no inputs");
  const int m = value(parts[0]).rows();
  int total = 0;
  for (Id p : parts) {
    require_2d(value(p), "concat_cols");
    if (value(p).rows() != m)
      throw ValidationError("concat_cols: row mismatch " + std::to_string(value(p).rows()) +
                            " vs " + std::to_string(m));
    total += value(p).cols();
  }
  Tensor out = Tensor::zeros({m, total});
  int coff = 0;
  for (Id p : parts) {
    const Tensor& v = value(p);
    const int c = v.cols();
    for (int i = 0; i < m; ++i)
      std::copy_n(&v.data[static_cast<std::size_t>(i) * c], c,
                  &out.data[static_cast<std::size_t>(i) * total + coff]);
    coff += c;
  }
  std::vector<Id> owned(parts.begin(), parts.end());
  return push(std::move(out),
              [owned, m, total](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                int coff = 0;
                for (Id p : owned) {
                  Tensor& gp = t.grad_mut(p);
                  const int c = gp.cols();
                  for (int i = 0; i < m; ++i)
                    for (int j = 0; j < c; ++j)
                      gp.data[static_cast<std::size_t>(i) * c + j] +=
                          g.data[static_cast<std::size_t>(i) * total + coff + j];
                  coff += c;
                }
              },
              "concat_cols");
}

Tape::Id Tape::mean_rows(Id x) {
  const Tensor& tx = value(x);
  require_2d(tx, "mean_rows");
  const int m = tx.rows(), n = tx.cols();
  Tensor out = Tensor::zeros({1, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data[j] += tx.data[static_cast<std::size_t>(i) * n + j];
  for (int j = 0; j < n; ++j) out.data[j] /= m;
  return push(std::move(out),
              [x, m, n](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                Tensor& gx = t.grad_mut(x);
                for (int i = 0; i < m; ++i)
                  for (int j = 0; j < n; ++j)
                    gx.data[static_cast<std::size_t>(i) * n + j] += g.data[j] / m;
              },
              "mean_rows");
}

Tape::Id Tape::sum(Id x) {
  const Tensor& tx = value(x);
  double acc = 0.0;
  for (double v : tx.data) acc += v;
  return push(Tensor::scalar(acc),
              [x](Tape& t, Id self) {
                const double g = t.grad(self).data[0];
                Tensor& gx = t.grad_mut(x);
                for (double& v : gx.data) v += g;
              },
              "sum");
}

Tape::Id Tape::rows_select(Id table, std::vector<int> rows) {
  const Tensor& tt = value(table);
  require_2d(tt, "rows_select");
  const int v = tt.rows(), d = tt.cols();
  for (int r : rows)
    if (r < 0 || r >= v)
      throw ValidationError("rows_select: row index " + std::to_string(r) + " out of range [0, " +
                            std::to_string(v) + ")");
  const int L = static_cast<int>(rows.size());
  if (L == 0) throw ValidationError("rows_select: empty index list");
  Tensor out = Tensor::zeros({L, d});
  for (int i = 0; i < L; ++i)
    std::copy_n(&tt.data[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)]) * d], d,
                &out.data[static_cast<std::size_t>(i) * d]);
  return push(std::move(out),
              [table, rows = std::move(rows), d](Tape& t, Id self) {
                const Tensor& g = t.grad(self);
                Tensor& gt = t.grad_mut(table);
                for (std::size_t i = 0; i < rows.size(); ++i) {
                  const double* src = &g.data[i * static_cast<std::size_t>(d)];
                  double* dst = &gt.data[static_cast<std::size_t>(rows[i]) * d];
                  for (int j = 0; j < d; ++j) dst[j] += src[j];
                }
              },
              "rows_select");
}

Tape::Id Tape::cross_entropy_logits(Id logits, int target) {
  const Tensor& tl = value(logits);
  require_2d(tl, "cross_entropy_logits");
  if (tl.rows() != 1)
    throw ValidationError("cross_entropy_logits: expected a single row of logits, got " +
                          shape_str(tl));
  const int n = tl.cols();
  if (target < 0 || target >= n)
    throw ValidationError("cross_entropy_logits: target " + std::to_string(target) +
                          " out of range [0, " + std::to_string(n) + ")");
  double mx = tl.data[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, tl.data[static_cast<std::size_t>(j)]);
  double z = 0.0;
  for (int j = 0; j < n; ++j) z += std::exp(tl.data[static_cast<std::size_t>(j)] - mx);
  const double loss = std::log(z) + mx - tl.data[static_cast<std::size_t>(target)];
  return push(Tensor::scalar(loss),
              [logits, target, n](Tape& t, Id self) {
                const double g = t.grad(self).data[0];
                const Tensor& vl = t.value(logits);
                Tensor& gl = t.grad_mut(logits);
                double mx = vl.data[0];
                for (int j = 1; j < n; ++j) mx = std::max(mx, vl.data[static_cast<std::size_t>(j)]);
                double z = 0.0;
                for (int j = 0; j < n; ++j) z += std::exp(vl.data[static_cast<std::size_t>(j)] - mx);
                for (int j = 0; j < n; ++j) {
                  const double p = std::exp(vl.data[static_cast<std::size_t>(j)] - mx) / z;
                  gl.data[static_cast<std::size_t>(j)] += g * (p - (j == target ? 1.0 : 0.0));
                }
              },
              "cross_entropy_logits");
}

void Tape::backward(Id root) {
  check(root);
  const Tensor& rv = nodes_[root].value;
  if (rv.data.size() != 1)
    throw UsageError("backward: root must be a scalar, got shape " + shape_str(rv));
  for (Node& n : nodes_) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  nodes_[root].grad.data[0] = 1.0;
  for (Id id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    bool live = false;
    for (double v : n.grad.data)
      if (v != 0.0) {
        live = true;
        break;
      }
    if (!live) continue;
    if (!n.grad.all_finite())
      throw NumericError("non-finite gradient at tape node " + std::to_string(id));
    if (n.back) n.back(*this, id);
    if (n.bound) {
      axpy(n.bound->grad, n.grad);
      n.bound->has_grad = true;
    }
  }
}

Adam::Adam(std::vector<Param*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const Param* p : params_) {
    if (!p) throw UsageError("Adam: null parameter");
    m_.push_back(Tensor::zeros(p->value.shape));
    v_.push_back(Tensor::zeros(p->value.shape));
  }
}

void Adam::step() {
  bool any = false;
  for (const Param* p : params_)
    if (p->has_grad) {
      any = true;
      break;
    }
  if (!any) throw UsageError("Adam::step: no parameter has an accumulated gradient");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k];
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const double g = p.grad.data[i];
      m_[k].data[i] = cfg_.beta1 * m_[k].data[i] + (1.0 - cfg_.beta1) * g;
      v_[k].data[i] = cfg_.beta2 * v_[k].data[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[k].data[i] / bc1;
      const double vhat = v_[k].data[i] / bc2;
      p.value.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    if (!p.value.all_finite())
      throw NumericError("Adam::step produced a non-finite value in parameter '" + p.name + "'");
    p.zero_grad();
  }
}

double clip_grad_norm(std::span<Param* const> params, double max_norm) {
  if (max_norm <= 0.0) throw UsageError("clip_grad_norm: max_norm must be positive");
  double sq = 0.0;
  for (const Param* p : params)
    if (p->has_grad)
      for (double g : p->grad.data) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Param* p : params)
      if (p->has_grad)
        for (double& g : p->grad.data) g *= s;
  }
  return norm;
}

double grad_check(const std::function<double(bool)>& f, std::span<Param* const> params,
                  double eps) {
  for (Param* p : params) p->zero_grad();
  (void)f(true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const double saved = p.value.data[i];
      p.value.data[i] = saved + eps;
      const double up = f(false);
      p.value.data[i] = saved - eps;
      const double dn = f(false);
      p.value.data[i] = saved;
      const double fd = (up - dn) / (2.0 * eps);
      const double ad = analytic[k].data[i];
      const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      worst = std::max(worst, rel);
    }
  }
  for (Param* p : params) p->zero_grad();
  return worst;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr char kMagic[8] = {'O', 'C', 'I', 'P', 'A', 'R', 'A', 'M'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t read_u32(std::istream& is, const std::string& path) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError("checkpoint '" + path + "': truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, std::span<const Param* const> params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint '" + path + "': cannot open for writing");
  os.write(kMagic, sizeof kMagic);
  write_u32(os, kVersion);
  write_u32(os, static_cast<uint32_t>(params.size()));
  for (const Param* p : params) {
    write_u32(os, static_cast<uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u32(os, static_cast<uint32_t>(p->value.shape.size()));
    for (int d : p->value.shape) write_u32(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(p->value.data.data()),
             static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
  }
  if (!os) throw IoError("checkpoint '" + path + "': write failed");
}

void load_checkpoint(const std::string& path, std::span<Param* const> params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint '" + path + "': cannot open for reading");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError("checkpoint '" + path + "': bad magic");
  const uint32_t version = read_u32(is, path);
  if (version != kVersion)
    throw IoError("checkpoint '" + path + "': unsupported version " + std::to_string(version));
  const uint32_t count = read_u32(is, path);
  std::map<std::string, Tensor> entries;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t rank = read_u32(is, path);
    if (rank == 0 || rank > 3)
      throw IoError("checkpoint '" + path + "': invalid rank " + std::to_string(rank));
    std::vector<int> shape(rank);
    std::size_t total = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(read_u32(is, path));
      total *= static_cast<std::size_t>(shape[d]);
    }
    std::vector<double> data(total);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (!is) throw IoError("checkpoint '" + path + "': truncated tensor data");
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::move(data);
    entries.emplace(std::move(name), std::move(t));
  }
  for (Param* p : params) {
    auto it = entries.find(p->name);
    if (it == entries.end())
      throw IoError("checkpoint '" + path + "': missing parameter '" + p->name + "'");
    if (it->second.shape != p->value.shape)
      throw IoError("checkpoint '" + path + "': shape mismatch for parameter '" + p->name + "'");
    p->value = it->second;
    p->zero_grad();
  }
}

}  // namespace oci
