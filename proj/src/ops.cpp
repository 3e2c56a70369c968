#include "aesm2/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "aesm2/kernels.hpp"

namespace aesm2 {

namespace {

const kernels::Kernels& kn() { return kernels::active(); }

bool wants_grad(const Tensor& t) { return t.requires_grad(); }

bool any_grad(const std::vector<Tensor>& ts) {
  for (const auto& t : ts)
    if (t.requires_grad()) return true;
  return false;
}

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2)
    throw ShapeError(std::string(op) + ": expected 2-d tensor, got " +
                     t.shape_str());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Softmax of src[0..n) strided by `stride` into dst, max-subtracted.
void softmax_span(const double* src, double* dst, int n, int stride) {
  double mx = src[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, src[i * stride]);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = std::exp(src[i * stride] - mx);
    dst[i * stride] = e;
    total += e;
  }
  for (int i = 0; i < n; ++i) dst[i * stride] /= total;
}

// gx += s * (g - dot(g, s)) for one softmax span.
void softmax_span_grad(const double* s, const double* g, double* gx, int n,
                       int stride) {
  double gs = 0.0;
  for (int i = 0; i < n; ++i) gs += g[i * stride] * s[i * stride];
  for (int i = 0; i < n; ++i)
    gx[i * stride] += s[i * stride] * (g[i * stride] - gs);
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int p = a.dim(0), q = a.dim(1), r = b.dim(1);
  if (b.dim(0) != q)
    throw ShapeError("matmul: inner dimensions disagree: " + a.shape_str() +
                     " vs " + b.shape_str());
  Tensor c({p, r});
  kn().gemm_nn(p, r, q, a.data(), b.data(), c.data(), false);
  if (tape.recording() && (wants_grad(a) || wants_grad(b))) {
    c.set_requires_grad(true);
    Tensor ac = a, bc = b, cc = c;
    tape.record([ac, bc, cc, p, q, r]() mutable {
      const double* gc = cc.grad_if_any();
      if (!gc) return;
      if (ac.requires_grad()) kn().gemm_nt(p, q, r, gc, bc.data(), ac.grad(), true);
      if (bc.requires_grad()) kn().gemm_tn(q, r, p, ac.data(), gc, bc.grad(), true);
    });
  }
  return c;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  require_2d(x, "linear");
  require_2d(w, "linear");
  const int B = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in)
    throw ShapeError("linear: weight shape " + w.shape_str() +
                     " does not accept input " + x.shape_str());
  if (b.size() != out)
    throw ShapeError("linear: bias size mismatch");
  Tensor y({B, out});
  kn().gemm_nt(B, out, in, x.data(), w.data(), y.data(), false);
  {
    double* yd = y.data();
    const double* bd = b.data();
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < out; ++j) yd[static_cast<std::size_t>(i) * out + j] += bd[j];
  }
  if (tape.recording() && (wants_grad(x) || wants_grad(w) || wants_grad(b))) {
    y.set_requires_grad(true);
    Tensor xc = x, wc = w, bc = b, yc = y;
    tape.record([xc, wc, bc, yc, B, in, out]() mutable {
      const double* gy = yc.grad_if_any();
      if (!gy) return;
      if (xc.requires_grad()) kn().gemm_nn(B, in, out, gy, wc.data(), xc.grad(), true);
      if (wc.requires_grad()) kn().gemm_tn(out, in, B, gy, xc.data(), wc.grad(), true);
      if (bc.requires_grad()) {
        double* gb = bc.grad();
        for (int i = 0; i < B; ++i)
          kn().axpy(out, 1.0, gy + static_cast<std::size_t>(i) * out, gb);
      }
    });
  }
  return y;
}

Tensor relu(Tape& tape, const Tensor& x) {
  Tensor y(x.shape());
  kn().relu(x.size(), x.data(), y.data());
  if (tape.recording() && wants_grad(x)) {
    y.set_requires_grad(true);
    Tensor xc = x, yc = y;
    tape.record([xc, yc]() mutable {
      const double* gy = yc.grad_if_any();
      if (!gy) return;
      kn().relu_grad(xc.size(), yc.data(), gy, xc.grad());
    });
  }
  return y;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  Tensor y(x.shape());
  const double* xd = x.data();
  double* yd = y.data();
  for (int i = 0; i < x.size(); ++i) yd[i] = stable_sigmoid(xd[i]);
  if (tape.recording() && wants_grad(x)) {
    y.set_requires_grad(true);
    Tensor xc = x, yc = y;
    tape.record([xc, yc]() mutable {
      const double* gy = yc.grad_if_any();
      if (!gy) return;
      const double* s = yc.data();
      double* gx = xc.grad();
      for (int i = 0; i < xc.size(); ++i) gx[i] += gy[i] * s[i] * (1.0 - s[i]);
    });
  }
  return y;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  Tensor c(a.shape());
  const double* ad = a.data();
  const double* bd = b.data();
  double* cd = c.data();
  for (int i = 0; i < a.size(); ++i) cd[i] = ad[i] + bd[i];
  if (tape.recording() && (wants_grad(a) || wants_grad(b))) {
    c.set_requires_grad(true);
    Tensor ac = a, bc = b, cc = c;
    tape.record([ac, bc, cc]() mutable {
      const double* gc = cc.grad_if_any();
      if (!gc) return;
      if (ac.requires_grad()) kn().axpy(ac.size(), 1.0, gc, ac.grad());
      if (bc.requires_grad()) kn().axpy(bc.size(), 1.0, gc, bc.grad());
    });
  }
  return c;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  Tensor c(a.shape());
  const double* ad = a.data();
  const double* bd = b.data();
  double* cd = c.data();
  for (int i = 0; i < a.size(); ++i) cd[i] = ad[i] * bd[i];
  if (tape.recording() && (wants_grad(a) || wants_grad(b))) {
    c.set_requires_grad(true);
    Tensor ac = a, bc = b, cc = c;
    tape.record([ac, bc, cc]() mutable {
      const double* gc = cc.grad_if_any();
      if (!gc) return;
      if (ac.requires_grad()) {
        double* ga = ac.grad();
        const double* bd2 = bc.data();
        for (int i = 0; i < ac.size(); ++i) ga[i] += gc[i] * bd2[i];
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad();
        const double* ad2 = ac.data();
        for (int i = 0; i < bc.size(); ++i) gb[i] += gc[i] * ad2[i];
      }
    });
  }
  return c;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  const double* xd = x.data();
  for (int i = 0; i < x.size(); ++i) s += xd[i];
  Tensor y = Tensor::scalar(s);
  if (tape.recording() && wants_grad(x)) {
    y.set_requires_grad(true);
    Tensor xc = x, yc = y;
    tape.record([xc, yc]() mutable {
      const double* gy = yc.grad_if_any();
      if (!gy) return;
      double* gx = xc.grad();
      for (int i = 0; i < xc.size(); ++i) gx[i] += gy[0];
    });
  }
  return y;
}

Tensor concat(Tape& tape, const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  const int nd = parts[0].ndim();
  if (nd != 1 && nd != 2)
    throw ShapeError("concat: only 1-d and 2-d tensors supported");
  if (axis < 0 || axis >= nd)
    throw ShapeError("concat: axis out of range");
  for (const auto& p : parts) {
    if (p.ndim() != nd)
      throw ShapeError("concat: mixed ranks");
    for (int d = 0; d < nd; ++d)
      if (d != axis && p.dim(d) != parts[0].dim(d))
        throw ShapeError("concat: non-concat dimension mismatch: " +
                         parts[0].shape_str() + " vs " + p.shape_str());
  }

  if (nd == 1 || axis == 0) {
    // Contiguous stack.
    int total = 0;
    for (const auto& p : parts) total += p.dim(axis);
    std::vector<int> shape = parts[0].shape();
    shape[static_cast<std::size_t>(axis)] = total;
    Tensor out(shape);
    double* od = out.data();
    std::size_t off = 0;
    for (const auto& p : parts) {
      std::memcpy(od + off, p.data(), sizeof(double) * static_cast<std::size_t>(p.size()));
      off += static_cast<std::size_t>(p.size());
    }
    if (tape.recording() && any_grad(parts)) {
      out.set_requires_grad(true);
      std::vector<Tensor> pc = parts;
      Tensor oc = out;
      tape.record([pc, oc]() mutable {
        const double* go = oc.grad_if_any();
        if (!go) return;
        std::size_t off2 = 0;
        for (auto& p : pc) {
          if (p.requires_grad()) kn().axpy(p.size(), 1.0, go + off2, p.grad());
          off2 += static_cast<std::size_t>(p.size());
        }
      });
    }
    return out;
  }

  // axis == 1 on 2-d tensors: row-wise interleave of column blocks.
  const int rows = parts[0].dim(0);
  int total_cols = 0;
  for (const auto& p : parts) total_cols += p.dim(1);
  Tensor out({rows, total_cols});
  double* od = out.data();
  int col_off = 0;
  for (const auto& p : parts) {
    const int w = p.dim(1);
    const double* pd = p.data();
    for (int i = 0; i < rows; ++i)
      std::memcpy(od + static_cast<std::size_t>(i) * total_cols + col_off,
                  pd + static_cast<std::size_t>(i) * w, sizeof(double) * static_cast<std::size_t>(w));
    col_off += w;
  }
  if (tape.recording() && any_grad(parts)) {
    out.set_requires_grad(true);
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    tape.record([pc, oc, rows, total_cols]() mutable {
      const double* go = oc.grad_if_any();
      if (!go) return;
      int off2 = 0;
      for (auto& p : pc) {
        const int w = p.dim(1);
        if (p.requires_grad()) {
          double* gp = p.grad();
          for (int i = 0; i < rows; ++i)
            kn().axpy(w, 1.0, go + static_cast<std::size_t>(i) * total_cols + off2,
                      gp + static_cast<std::size_t>(i) * w);
        }
        off2 += w;
      }
    });
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
  require_2d(x, "softmax_rows");
  const int n = x.dim(0), m = x.dim(1);
  if (m < 1) throw ShapeError("softmax_rows: empty rows");
  Tensor y({n, m});
  for (int i = 0; i < n; ++i)
    softmax_span(x.data() + static_cast<std::size_t>(i) * m,
                 y.data() + static_cast<std::size_t>(i) * m, m, 1);
  if (tape.recording() && wants_grad(x)) {
    y.set_requires_grad(true);
    Tensor xc = x, yc = y;
    tape.record([xc, yc, n, m]() mutable {
      const double* gy = yc.grad_if_any();
      if (!gy) return;
      double* gx = xc.grad();
      for (int i = 0; i < n; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * m;
        softmax_span_grad(yc.data() + off, gy + off, gx + off, m, 1);
      }
    });
  }
  return y;
}

Tensor softmax_groups(Tape& tape, const Tensor& x, int group) {
  require_2d(x, "softmax_groups");
  const int rows = x.dim(0), cols = x.dim(1);
  if (group < 1 || cols % group != 0)
    throw ShapeError("softmax_groups: column count not divisible by group");
  Tensor y({rows, cols});
  const int ngroups = cols / group;
  for (int i = 0; i < rows; ++i)
    for (int g = 0; g < ngroups; ++g) {
      const std::size_t off = static_cast<std::size_t>(i) * cols +
                              static_cast<std::size_t>(g) * group;
      softmax_span(x.data() + off, y.data() + off, group, 1);
    }
  if (tape.recording() && wants_grad(x)) {
    y.set_requires_grad(true);
    Tensor xc = x, yc = y;
    tape.record([xc, yc, rows, cols, group, ngroups]() mutable {
      const double* gy = yc.grad_if_any();
      if (!gy) return;
      double* gx = xc.grad();
      for (int i = 0; i < rows; ++i)
        for (int g = 0; g < ngroups; ++g) {
          const std::size_t off = static_cast<std::size_t>(i) * cols +
                                  static_cast<std::size_t>(g) * group;
          softmax_span_grad(yc.data() + off, gy + off, gx + off, group, 1);
        }
    });
  }
  return y;
}

Tensor gather_rows(Tape& tape, const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "gather_rows");
  const int vocab = table.dim(0), d = table.dim(1);
  const int B = static_cast<int>(ids.size());
  Tensor out({B, d});
  for (int b = 0; b < B; ++b) {
    const int id = ids[static_cast<std::size_t>(b)];
    if (id < 0 || id >= vocab)
      throw DataError("gather_rows: id " + std::to_string(id) +
                      " out of range [0, " + std::to_string(vocab) + ")");
    std::memcpy(out.data() + static_cast<std::size_t>(b) * d,
                table.data() + static_cast<std::size_t>(id) * d,
                sizeof(double) * static_cast<std::size_t>(d));
  }
  if (tape.recording() && wants_grad(table)) {
    out.set_requires_grad(true);
    Tensor tc = table, oc = out;
    std::vector<int> idc = ids;
    tape.record([tc, oc, idc, d]() mutable {
      const double* go = oc.grad_if_any();
      if (!go) return;
      double* gt = tc.grad();
      for (std::size_t b = 0; b < idc.size(); ++b)
        kn().axpy(d, 1.0, go + b * static_cast<std::size_t>(d),
                  gt + static_cast<std::size_t>(idc[b]) * d);
    });
  }
  return out;
}

Tensor repeat_row(Tape& tape, const Tensor& row, int count) {
  require_2d(row, "repeat_row");
  if (row.dim(0) != 1) throw ShapeError("repeat_row: expected a 1 x d tensor");
  const int d = row.dim(1);
  Tensor out({count, d});
  for (int b = 0; b < count; ++b)
    std::memcpy(out.data() + static_cast<std::size_t>(b) * d, row.data(),
                sizeof(double) * static_cast<std::size_t>(d));
  if (tape.recording() && wants_grad(row)) {
    out.set_requires_grad(true);
    Tensor rc = row, oc = out;
    tape.record([rc, oc, count, d]() mutable {
      const double* go = oc.grad_if_any();
      if (!go) return;
      double* gr = rc.grad();
      for (int b = 0; b < count; ++b)
        kn().axpy(d, 1.0, go + static_cast<std::size_t>(b) * d, gr);
    });
  }
  return out;
}

Tensor select_rows_by_branch(Tape& tape, const std::vector<Tensor>& branches,
                             const std::vector<int>& ids) {
  if (branches.empty()) throw ContractError("select_rows_by_branch: no branches");
  const int B = branches[0].dim(0), n = branches[0].dim(1);
  for (const auto& t : branches)
    if (t.dim(0) != B || t.dim(1) != n)
      throw ShapeError("select_rows_by_branch: branch shape mismatch");
  if (static_cast<int>(ids.size()) != B)
    throw ShapeError("select_rows_by_branch: id count mismatch");
  Tensor out({B, n});
  for (int b = 0; b < B; ++b) {
    const int j = ids[static_cast<std::size_t>(b)];
    if (j < 0 || j >= static_cast<int>(branches.size()))
      throw DataError("select_rows_by_branch: branch id out of range");
    std::memcpy(out.data() + static_cast<std::size_t>(b) * n,
                branches[static_cast<std::size_t>(j)].data() + static_cast<std::size_t>(b) * n,
                sizeof(double) * static_cast<std::size_t>(n));
  }
  if (tape.recording() && any_grad(branches)) {
    out.set_requires_grad(true);
    std::vector<Tensor> bc = branches;
    Tensor oc = out;
    std::vector<int> idc = ids;
    tape.record([bc, oc, idc, n]() mutable {
      const double* go = oc.grad_if_any();
      if (!go) return;
      for (std::size_t b = 0; b < idc.size(); ++b) {
        Tensor& src = bc[static_cast<std::size_t>(idc[b])];
        if (!src.requires_grad()) continue;
        kn().axpy(n, 1.0, go + b * static_cast<std::size_t>(n),
                  src.grad() + b * static_cast<std::size_t>(n));
      }
    });
  }
  return out;
}

Tensor interleave_columns(Tape& tape, const std::vector<Tensor>& branches) {
  if (branches.empty()) throw ContractError("interleave_columns: no branches");
  const int m = static_cast<int>(branches.size());
  const int B = branches[0].dim(0), n = branches[0].dim(1);
  for (const auto& t : branches)
    if (t.dim(0) != B || t.dim(1) != n)
      throw ShapeError("interleave_columns: branch shape mismatch");
  Tensor out({B, n * m});
  double* od = out.data();
  for (int j = 0; j < m; ++j) {
    const double* src = branches[static_cast<std::size_t>(j)].data();
    for (int b = 0; b < B; ++b)
      for (int kk = 0; kk < n; ++kk)
        od[static_cast<std::size_t>(b) * n * m + static_cast<std::size_t>(kk) * m + j] =
            src[static_cast<std::size_t>(b) * n + kk];
  }
  if (tape.recording() && any_grad(branches)) {
    out.set_requires_grad(true);
    std::vector<Tensor> bc = branches;
    Tensor oc = out;
    tape.record([bc, oc, B, n, m]() mutable {
      const double* go = oc.grad_if_any();
      if (!go) return;
      for (int j = 0; j < m; ++j) {
        Tensor& src = bc[static_cast<std::size_t>(j)];
        if (!src.requires_grad()) continue;
        double* gs = src.grad();
        for (int b = 0; b < B; ++b)
          for (int kk = 0; kk < n; ++kk)
            gs[static_cast<std::size_t>(b) * n + kk] +=
                go[static_cast<std::size_t>(b) * n * m + static_cast<std::size_t>(kk) * m + j];
      }
    });
  }
  return out;
}

Tensor mask_columns(Tape& tape, const Tensor& x,
                    const std::vector<std::vector<int>>& active,
                    double sentinel) {
  require_2d(x, "mask_columns");
  const int B = x.dim(0), n = x.dim(1);
  if (static_cast<int>(active.size()) != B)
    throw ShapeError("mask_columns: active set count mismatch");
  Tensor out({B, n});
  double* od = out.data();
  const double* xd = x.data();
  for (int b = 0; b < B; ++b) {
    const auto& act = active[static_cast<std::size_t>(b)];
    if (act.empty()) throw ContractError("mask_columns: empty active set");
    double* orow = od + static_cast<std::size_t>(b) * n;
    std::fill(orow, orow + n, sentinel);
    for (int i : act) {
      if (i < 0 || i >= n)
        throw ContractError("mask_columns: active index out of range");
      orow[i] = xd[static_cast<std::size_t>(b) * n + i];
    }
  }
  if (tape.recording() && wants_grad(x)) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    std::vector<std::vector<int>> ac = active;
    tape.record([xc, oc, ac, n]() mutable {
      const double* go = oc.grad_if_any();
      if (!go) return;
      double* gx = xc.grad();
      for (std::size_t b = 0; b < ac.size(); ++b)
        for (int i : ac[b])
          gx[b * static_cast<std::size_t>(n) + i] += go[b * static_cast<std::size_t>(n) + i];
    });
  }
  return out;
}

Tensor mixture(Tape& tape, const std::vector<Tensor>& experts,
               const Tensor& weights) {
  if (experts.empty()) throw ContractError("mixture: no experts");
  const int n = static_cast<int>(experts.size());
  const int B = experts[0].dim(0), d = experts[0].dim(1);
  for (const auto& e : experts)
    if (e.dim(0) != B || e.dim(1) != d)
      throw ConfigError("mixture: expert output shape mismatch: " +
                        experts[0].shape_str() + " vs " + e.shape_str());
  if (weights.dim(0) != B || weights.dim(1) != n)
    throw ShapeError("mixture: weight shape mismatch");
  Tensor out({B, d});
  double* od = out.data();
  const double* wd = weights.data();
  for (int i = 0; i < n; ++i) {
    const double* ed = experts[static_cast<std::size_t>(i)].data();
    for (int b = 0; b < B; ++b) {
      const double w = wd[static_cast<std::size_t>(b) * n + i];
      if (w != 0.0)
        kn().axpy(d, w, ed + static_cast<std::size_t>(b) * d,
                  od + static_cast<std::size_t>(b) * d);
    }
  }
  if (tape.recording() && (any_grad(experts) || wants_grad(weights))) {
    out.set_requires_grad(true);
    std::vector<Tensor> ec = experts;
    Tensor wc = weights, oc = out;
    tape.record([ec, wc, oc, B, d, n]() mutable {
      const double* go = oc.grad_if_any();
      if (!go) return;
      const double* wd2 = wc.data();
      double* gw = wc.requires_grad() ? wc.grad() : nullptr;
      for (int i = 0; i < n; ++i) {
        Tensor& e = ec[static_cast<std::size_t>(i)];
        const double* ed = e.data();
        double* ge = e.requires_grad() ? e.grad() : nullptr;
        for (int b = 0; b < B; ++b) {
          const std::size_t off = static_cast<std::size_t>(b) * d;
          const double w = wd2[static_cast<std::size_t>(b) * n + i];
          if (ge && w != 0.0) kn().axpy(d, w, go + off, ge + off);
          if (gw)
            gw[static_cast<std::size_t>(b) * n + i] += kn().dot(d, go + off, ed + off);
        }
      }
    });
  }
  return out;
}

Tensor add_gaussian_noise(Tape& tape, const Tensor& x, double sigma,
                          RandomSource& rng) {
  if (sigma < 0.0) throw ConfigError("add_gaussian_noise: negative sigma");
  Tensor y(x.shape());
  const double* xd = x.data();
  double* yd = y.data();
  for (int i = 0; i < x.size(); ++i) yd[i] = xd[i] + sigma * rng.normal();
  if (tape.recording() && wants_grad(x)) {
    y.set_requires_grad(true);
    Tensor xc = x, yc = y;
    tape.record([xc, yc]() mutable {
      const double* gy = yc.grad_if_any();
      if (!gy) return;
      kn().axpy(xc.size(), 1.0, gy, xc.grad());
    });
  }
  return y;
}

namespace {
constexpr double kBceClamp = 1e-12;
}

Tensor bce_mean(Tape& tape, const Tensor& pred,
                const std::vector<double>& labels) {
  const int B = static_cast<int>(labels.size());
  if (pred.size() != B)
    throw ShapeError("bce_mean: prediction/label count mismatch");
  const double* pd = pred.data();
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    const double y = labels[static_cast<std::size_t>(b)];
    if (y != 0.0 && y != 1.0)
      throw DataError("bce_mean: label must be 0 or 1, got " + std::to_string(y));
    const double p = std::clamp(pd[b], kBceClamp, 1.0 - kBceClamp);
    total += -y * std::log(p) - (1.0 - y) * std::log(1.0 - p);
  }
  Tensor out = Tensor::scalar(total / B);
  if (tape.recording() && wants_grad(pred)) {
    out.set_requires_grad(true);
    Tensor pc = pred, oc = out;
    std::vector<double> lc = labels;
    tape.record([pc, oc, lc, B]() mutable {
      const double* go = oc.grad_if_any();
      if (!go) return;
      double* gp = pc.grad();
      const double* pd2 = pc.data();
      for (int b = 0; b < B; ++b) {
        const double p = std::clamp(pd2[b], kBceClamp, 1.0 - kBceClamp);
        const double y = lc[static_cast<std::size_t>(b)];
        gp[b] += go[0] * (p - y) / (p * (1.0 - p)) / B;
      }
    });
  }
  return out;
}

Tensor selected_kl_sum(Tape& tape, const Tensor& g_tilde, int m,
                       const std::vector<KlTerm>& terms, double scale) {
  require_2d(g_tilde, "selected_kl_sum");
  const int cols = g_tilde.dim(1);
  if (m < 1 || cols % m != 0)
    throw ShapeError("selected_kl_sum: bad group size");
  const double* gd = g_tilde.data();
  const double log_m = std::log(static_cast<double>(m));
  double total = 0.0;
  for (const auto& t : terms) {
    const double* row = gd + static_cast<std::size_t>(t.instance) * cols +
                        static_cast<std::size_t>(t.expert) * m;
    if (t.ref_branch >= 0) {
      total += -std::log(row[t.ref_branch]);
    } else {
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += std::log(row[i]);
      total += -log_m - s / m;
    }
  }
  Tensor out = Tensor::scalar(scale * total);
  if (tape.recording() && wants_grad(g_tilde)) {
    out.set_requires_grad(true);
    Tensor gc = g_tilde, oc = out;
    std::vector<KlTerm> tc = terms;
    tape.record([gc, oc, tc, m, cols, scale]() mutable {
      const double* go = oc.grad_if_any();
      if (!go) return;
      double* gg = gc.grad();
      const double* gd2 = gc.data();
      const double factor = go[0] * scale;
      for (const auto& t : tc) {
        const std::size_t off = static_cast<std::size_t>(t.instance) * cols +
                                static_cast<std::size_t>(t.expert) * m;
        if (t.ref_branch >= 0) {
          gg[off + t.ref_branch] += factor * (-1.0 / gd2[off + t.ref_branch]);
        } else {
          for (int i = 0; i < m; ++i)
            gg[off + i] += factor * (-1.0 / (m * gd2[off + i]));
        }
      }
    });
  }
  return out;
}

Tensor sum_squares(Tape& tape, const Tensor& x) {
  const double s = kn().dot(x.size(), x.data(), x.data());
  Tensor out = Tensor::scalar(s);
  if (tape.recording() && wants_grad(x)) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc]() mutable {
      const double* go = oc.grad_if_any();
      if (!go) return;
      kn().axpy(xc.size(), 2.0 * go[0], xc.data(), xc.grad());
    });
  }
  return out;
}

Tensor weighted_sum(Tape& tape, const std::vector<Tensor>& scalars,
                    const std::vector<double>& coeffs) {
  if (scalars.size() != coeffs.size())
    throw ContractError("weighted_sum: operand/coefficient count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].size() != 1)
      throw ContractError("weighted_sum: operands must be scalars");
    total += coeffs[i] * scalars[i].value();
  }
  Tensor out = Tensor::scalar(total);
  if (tape.recording() && any_grad(scalars)) {
    out.set_requires_grad(true);
    std::vector<Tensor> sc = scalars;
    std::vector<double> cc = coeffs;
    Tensor oc = out;
    tape.record([sc, cc, oc]() mutable {
      const double* go = oc.grad_if_any();
      if (!go) return;
      for (std::size_t i = 0; i < sc.size(); ++i)
        if (sc[i].requires_grad()) sc[i].grad()[0] += cc[i] * go[0];
    });
  }
  return out;
}

double grad_check(const std::function<Tensor(Tape&, Tensor&)>& f,
                  const Tensor& at, double eps) {
  // Analytic pass.
  Tensor x = at.clone();
  x.set_requires_grad(true);
  Tape tape;
  Tensor loss = f(tape, x);
  if (loss.size() != 1) throw ContractError("grad_check: f must return a scalar");
  tape.backward(loss);
  std::vector<double> analytic(static_cast<std::size_t>(x.size()), 0.0);
  if (x.grad_if_any())
    analytic.assign(x.grad_vec().begin(), x.grad_vec().end());
  tape.clear();

  // Central differences.
  double worst = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    Tensor xp = at.clone();
    xp.data()[i] += eps;
    Tensor xm = at.clone();
    xm.data()[i] -= eps;
    Tape t2;
    t2.set_recording(false);
    const double fp = f(t2, xp).value();
    const double fm = f(t2, xm).value();
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[static_cast<std::size_t>(i)];
    const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
    worst = std::max(worst, std::fabs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace aesm2
