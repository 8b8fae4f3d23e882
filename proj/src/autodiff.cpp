#include "pointfuse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "blas_shim.hpp"
#include "pointfuse/errors.hpp"

namespace pointfuse {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw ShapeError(msg);
}

size_t row_len(const Tensor& t) {
  return t.shape.empty() || t.shape[0] == 0 ? 0 : t.numel() / t.shape[0];
}

}  // namespace

void Tape::backward(const TensorPtr& loss) {
  if (loss->numel() != 1)
    throw ShapeError("Tape::backward expects a scalar loss");
  loss->ensure_grad();
  loss->grad[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

// ---- linear ----------------------------------------------------------------

TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& w,
                 const TensorPtr& b) {
  require(x->rank() == 2 && w->rank() == 2 && b->rank() == 1,
          "linear: x must be [N,Cin], w [Cout,Cin], b [Cout]");
  const int n = x->dim(0), cin = x->dim(1);
  const int cout = w->dim(0);
  require(w->dim(1) == cin, "linear: weight/input channel mismatch");
  require(b->dim(0) == cout, "linear: bias/output channel mismatch");

  auto y = make_tensor({n, cout});
  detail::dgemm(false, true, n, cout, cin, 1.0, x->data.data(), cin,
                w->data.data(), cin, 0.0, y->data.data(), cout);
  for (int i = 0; i < n; ++i) {
    double* row = y->data.data() + static_cast<size_t>(i) * cout;
    for (int c = 0; c < cout; ++c) row[c] += b->data[static_cast<size_t>(c)];
  }

  if (tape) {
    tape->record([x, w, b, y, n, cin, cout]() {
      if (!y->has_grad()) return;
      const double* dy = y->grad.data();
      x->ensure_grad();
      detail::dgemm(false, false, n, cin, cout, 1.0, dy, cout, w->data.data(),
                    cin, 1.0, x->grad.data(), cin);
      w->ensure_grad();
      detail::dgemm(true, false, cout, cin, n, 1.0, dy, cout, x->data.data(),
                    cin, 1.0, w->grad.data(), cin);
      b->ensure_grad();
      for (int c = 0; c < cout; ++c) {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
          s += dy[static_cast<size_t>(i) * cout + c];
        b->grad[static_cast<size_t>(c)] += s;
      }
    });
  }
  return y;
}

// ---- relu ------------------------------------------------------------------

TensorPtr relu(Tape* tape, const TensorPtr& x) {
  auto y = make_tensor(x->shape);
  const size_t n = x->numel();
  for (size_t i = 0; i < n; ++i) y->data[i] = x->data[i] > 0 ? x->data[i] : 0;
  if (tape) {
    tape->record([x, y, n]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      // subgradient 0 at exactly 0
      for (size_t i = 0; i < n; ++i)
        if (x->data[i] > 0) x->grad[i] += y->grad[i];
    });
  }
  return y;
}

// ---- conv2d (3x3, stride 1, zero pad 1) -------------------------------------

namespace {

// col[(h*W+w), (ci*9 + ky*3 + kx)] = x[ci, h+ky-1, w+kx-1] (zero outside)
void im2col_3x3(const double* x, int cin, int h, int w, double* col) {
  const int patch = cin * 9;
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      double* dst = col + static_cast<size_t>(y * w + xx) * patch;
      for (int ci = 0; ci < cin; ++ci) {
        const double* plane = x + static_cast<size_t>(ci) * h * w;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = xx + kx - 1;
            *dst++ = (sy >= 0 && sy < h && sx >= 0 && sx < w)
                         ? plane[static_cast<size_t>(sy) * w + sx]
                         : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add_3x3(const double* col, int cin, int h, int w, double* dx) {
  const int patch = cin * 9;
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      const double* src = col + static_cast<size_t>(y * w + xx) * patch;
      for (int ci = 0; ci < cin; ++ci) {
        double* plane = dx + static_cast<size_t>(ci) * h * w;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = xx + kx - 1;
            if (sy >= 0 && sy < h && sx >= 0 && sx < w)
              plane[static_cast<size_t>(sy) * w + sx] += *src;
            ++src;
          }
        }
      }
    }
  }
}

}  // namespace

TensorPtr conv2d(Tape* tape, const TensorPtr& x, const TensorPtr& w,
                 const TensorPtr& b) {
  require(x->rank() == 4, "conv2d: input must be [B,Cin,H,W]");
  require(w->rank() == 4 && w->dim(2) == 3 && w->dim(3) == 3,
          "conv2d: weight must be [Cout,Cin,3,3]");
  const int bsz = x->dim(0), cin = x->dim(1), h = x->dim(2), ww = x->dim(3);
  const int cout = w->dim(0);
  require(w->dim(1) == cin, "conv2d: channel mismatch");
  require(b->rank() == 1 && b->dim(0) == cout, "conv2d: bias mismatch");

  const int hw = h * ww, patch = cin * 9;
  auto y = make_tensor({bsz, cout, h, ww});
  std::vector<double> col(static_cast<size_t>(hw) * patch);
  std::vector<double> rows(static_cast<size_t>(hw) * cout);
  for (int bi = 0; bi < bsz; ++bi) {
    const double* xb = x->data.data() + static_cast<size_t>(bi) * cin * hw;
    im2col_3x3(xb, cin, h, ww, col.data());
    detail::dgemm(false, true, hw, cout, patch, 1.0, col.data(), patch,
                  w->data.data(), patch, 0.0, rows.data(), cout);
    double* yb = y->data.data() + static_cast<size_t>(bi) * cout * hw;
    for (int co = 0; co < cout; ++co) {
      const double bias = b->data[static_cast<size_t>(co)];
      double* plane = yb + static_cast<size_t>(co) * hw;
      for (int p = 0; p < hw; ++p)
        plane[p] = rows[static_cast<size_t>(p) * cout + co] + bias;
    }
  }

  if (tape) {
    tape->record([x, w, b, y, bsz, cin, cout, h, ww]() {
      if (!y->has_grad()) return;
      const int hw = h * ww, patch = cin * 9;
      x->ensure_grad();
      w->ensure_grad();
      b->ensure_grad();
      std::vector<double> col(static_cast<size_t>(hw) * patch);
      std::vector<double> dy_rows(static_cast<size_t>(hw) * cout);
      std::vector<double> dcol(static_cast<size_t>(hw) * patch);
      for (int bi = 0; bi < bsz; ++bi) {
        const double* dyb =
            y->grad.data() + static_cast<size_t>(bi) * cout * hw;
        for (int co = 0; co < cout; ++co) {
          const double* plane = dyb + static_cast<size_t>(co) * hw;
          double bs = 0.0;
          for (int p = 0; p < hw; ++p) {
            dy_rows[static_cast<size_t>(p) * cout + co] = plane[p];
            bs += plane[p];
          }
          b->grad[static_cast<size_t>(co)] += bs;
        }
        const double* xb = x->data.data() + static_cast<size_t>(bi) * cin * hw;
        im2col_3x3(xb, cin, h, ww, col.data());
        detail::dgemm(true, false, cout, patch, hw, 1.0, dy_rows.data(), cout,
                      col.data(), patch, 1.0, w->grad.data(), patch);
        detail::dgemm(false, false, hw, patch, cout, 1.0, dy_rows.data(), cout,
                      w->data.data(), patch, 0.0, dcol.data(), patch);
        col2im_add_3x3(dcol.data(), cin, h, ww,
                       x->grad.data() + static_cast<size_t>(bi) * cin * hw);
      }
    });
  }
  return y;
}

// ---- maxpool2d (2x2, stride 2) ----------------------------------------------

TensorPtr maxpool2d(Tape* tape, const TensorPtr& x) {
  require(x->rank() == 4, "maxpool2d: input must be [B,C,H,W]");
  const int bsz = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  require(h % 2 == 0 && w % 2 == 0, "maxpool2d: H and W must be even");
  const int oh = h / 2, ow = w / 2;
  auto y = make_tensor({bsz, c, oh, ow});
  auto arg = std::make_shared<std::vector<int>>(y->numel());
  size_t o = 0;
  for (int bc = 0; bc < bsz * c; ++bc) {
    const double* plane = x->data.data() + static_cast<size_t>(bc) * h * w;
    for (int py = 0; py < oh; ++py) {
      for (int px = 0; px < ow; ++px) {
        int best = (2 * py) * w + 2 * px;
        double bv = plane[best];
        // scan order keeps the lowest flat index on ties
        const int cand[3] = {(2 * py) * w + 2 * px + 1,
                             (2 * py + 1) * w + 2 * px,
                             (2 * py + 1) * w + 2 * px + 1};
        for (int k = 0; k < 3; ++k)
          if (plane[cand[k]] > bv) {
            bv = plane[cand[k]];
            best = cand[k];
          }
        y->data[o] = bv;
        (*arg)[o] = bc * h * w + best;
        ++o;
      }
    }
  }
  if (tape) {
    tape->record([x, y, arg]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (size_t i = 0; i < y->numel(); ++i)
        x->grad[static_cast<size_t>((*arg)[i])] += y->grad[i];
    });
  }
  return y;
}

// ---- tconv2d (2x2, stride 2) -------------------------------------------------

TensorPtr tconv2d(Tape* tape, const TensorPtr& x, const TensorPtr& w,
                  const TensorPtr& b) {
  require(x->rank() == 4, "tconv2d: input must be [B,Cin,H,W]");
  require(w->rank() == 4 && w->dim(2) == 2 && w->dim(3) == 2,
          "tconv2d: weight must be [Cin,Cout,2,2]");
  const int bsz = x->dim(0), cin = x->dim(1), h = x->dim(2), ww = x->dim(3);
  const int cout = w->dim(1);
  require(w->dim(0) == cin, "tconv2d: channel mismatch");
  require(b->rank() == 1 && b->dim(0) == cout, "tconv2d: bias mismatch");

  const int hw = h * ww;
  const int oh = 2 * h, ow = 2 * ww;
  auto y = make_tensor({bsz, cout, oh, ow});
  // rows[(h,w), (co,dy,dx)] = sum_ci x[ci,h,w] * w[ci,co,dy,dx]
  std::vector<double> xrows(static_cast<size_t>(hw) * cin);
  std::vector<double> rows(static_cast<size_t>(hw) * cout * 4);
  for (int bi = 0; bi < bsz; ++bi) {
    const double* xb = x->data.data() + static_cast<size_t>(bi) * cin * hw;
    for (int ci = 0; ci < cin; ++ci)
      for (int p = 0; p < hw; ++p)
        xrows[static_cast<size_t>(p) * cin + ci] =
            xb[static_cast<size_t>(ci) * hw + p];
    detail::dgemm(false, false, hw, cout * 4, cin, 1.0, xrows.data(), cin,
                  w->data.data(), cout * 4, 0.0, rows.data(), cout * 4);
    double* yb = y->data.data() + static_cast<size_t>(bi) * cout * oh * ow;
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < ww; ++px) {
        const double* r = rows.data() + static_cast<size_t>(py * ww + px) *
                                            cout * 4;
        for (int co = 0; co < cout; ++co)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              yb[((static_cast<size_t>(co) * oh + 2 * py + dy) * ow) + 2 * px +
                 dx] = r[co * 4 + dy * 2 + dx] + b->data[static_cast<size_t>(co)];
      }
  }

  if (tape) {
    tape->record([x, w, b, y, bsz, cin, cout, h, ww]() {
      if (!y->has_grad()) return;
      const int hw = h * ww, oh = 2 * h, ow = 2 * ww;
      x->ensure_grad();
      w->ensure_grad();
      b->ensure_grad();
      std::vector<double> dy_rows(static_cast<size_t>(hw) * cout * 4);
      std::vector<double> xrows(static_cast<size_t>(hw) * cin);
      std::vector<double> dxrows(static_cast<size_t>(hw) * cin);
      for (int bi = 0; bi < bsz; ++bi) {
        const double* dyb =
            y->grad.data() + static_cast<size_t>(bi) * cout * oh * ow;
        for (int py = 0; py < h; ++py)
          for (int px = 0; px < ww; ++px) {
            double* r = dy_rows.data() +
                        static_cast<size_t>(py * ww + px) * cout * 4;
            for (int co = 0; co < cout; ++co)
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                  r[co * 4 + dy * 2 + dx] =
                      dyb[((static_cast<size_t>(co) * oh + 2 * py + dy) * ow) +
                          2 * px + dx];
          }
        for (int co = 0; co < cout; ++co) {
          double bs = 0.0;
          const double* plane = dyb + static_cast<size_t>(co) * oh * ow;
          for (int p = 0; p < oh * ow; ++p) bs += plane[p];
          b->grad[static_cast<size_t>(co)] += bs;
        }
        const double* xb = x->data.data() + static_cast<size_t>(bi) * cin * hw;
        for (int ci = 0; ci < cin; ++ci)
          for (int p = 0; p < hw; ++p)
            xrows[static_cast<size_t>(p) * cin + ci] =
                xb[static_cast<size_t>(ci) * hw + p];
        // dw += xrows^T * dy_rows
        detail::dgemm(true, false, cin, cout * 4, hw, 1.0, xrows.data(), cin,
                      dy_rows.data(), cout * 4, 1.0, w->grad.data(), cout * 4);
        // dxrows = dy_rows * w^T
        detail::dgemm(false, true, hw, cin, cout * 4, 1.0, dy_rows.data(),
                      cout * 4, w->data.data(), cout * 4, 0.0, dxrows.data(),
                      cin);
        double* dxb = x->grad.data() + static_cast<size_t>(bi) * cin * hw;
        for (int ci = 0; ci < cin; ++ci)
          for (int p = 0; p < hw; ++p)
            dxb[static_cast<size_t>(ci) * hw + p] +=
                dxrows[static_cast<size_t>(p) * cin + ci];
      }
    });
  }
  return y;
}

// ---- batchnorm ---------------------------------------------------------------

TensorPtr batchnorm(Tape* tape, const TensorPtr& x, const TensorPtr& gamma,
                    const TensorPtr& beta, BatchNormState& state,
                    bool training) {
  require(x->rank() == 4, "batchnorm: input must be [B,C,H,W]");
  const int bsz = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  require(gamma->rank() == 1 && gamma->dim(0) == c, "batchnorm: gamma mismatch");
  require(beta->rank() == 1 && beta->dim(0) == c, "batchnorm: beta mismatch");
  require(static_cast<int>(state.running_mean->numel()) == c,
          "batchnorm: state channel mismatch");
  const int m = bsz * h * w;  // reduction count per channel
  if (training && m <= 1)
    throw ValidationError(
        "batchnorm: training with one sample per channel is degenerate");

  const int hw = h * w;
  auto y = make_tensor(x->shape);
  auto mean = std::make_shared<std::vector<double>>(c);
  auto inv_std = std::make_shared<std::vector<double>>(c);

  for (int ch = 0; ch < c; ++ch) {
    double mu, var;
    if (training) {
      double s = 0.0;
      for (int bi = 0; bi < bsz; ++bi) {
        const double* plane =
            x->data.data() + (static_cast<size_t>(bi) * c + ch) * hw;
        for (int p = 0; p < hw; ++p) s += plane[p];
      }
      mu = s / m;
      double sq = 0.0;
      for (int bi = 0; bi < bsz; ++bi) {
        const double* plane =
            x->data.data() + (static_cast<size_t>(bi) * c + ch) * hw;
        for (int p = 0; p < hw; ++p) {
          const double d = plane[p] - mu;
          sq += d * d;
        }
      }
      var = sq / m;  // biased, matching the normalization below
      state.running_mean->data[static_cast<size_t>(ch)] =
          (1.0 - state.momentum) *
              state.running_mean->data[static_cast<size_t>(ch)] +
          state.momentum * mu;
      state.running_var->data[static_cast<size_t>(ch)] =
          (1.0 - state.momentum) *
              state.running_var->data[static_cast<size_t>(ch)] +
          state.momentum * var;
    } else {
      mu = state.running_mean->data[static_cast<size_t>(ch)];
      var = state.running_var->data[static_cast<size_t>(ch)];
    }
    (*mean)[static_cast<size_t>(ch)] = mu;
    (*inv_std)[static_cast<size_t>(ch)] = 1.0 / std::sqrt(var + state.eps);
    const double g = gamma->data[static_cast<size_t>(ch)];
    const double be = beta->data[static_cast<size_t>(ch)];
    for (int bi = 0; bi < bsz; ++bi) {
      const double* src =
          x->data.data() + (static_cast<size_t>(bi) * c + ch) * hw;
      double* dst = y->data.data() + (static_cast<size_t>(bi) * c + ch) * hw;
      const double is = (*inv_std)[static_cast<size_t>(ch)];
      for (int p = 0; p < hw; ++p) dst[p] = g * (src[p] - mu) * is + be;
    }
  }

  if (tape) {
    tape->record([x, gamma, beta, y, mean, inv_std, bsz, c, hw, m, training]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      gamma->ensure_grad();
      beta->ensure_grad();
      for (int ch = 0; ch < c; ++ch) {
        const double mu = (*mean)[static_cast<size_t>(ch)];
        const double is = (*inv_std)[static_cast<size_t>(ch)];
        const double g = gamma->data[static_cast<size_t>(ch)];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int bi = 0; bi < bsz; ++bi) {
          const size_t off = (static_cast<size_t>(bi) * c + ch) * hw;
          for (int p = 0; p < hw; ++p) {
            const double dy = y->grad[off + p];
            sum_dy += dy;
            sum_dy_xhat += dy * (x->data[off + p] - mu) * is;
          }
        }
        gamma->grad[static_cast<size_t>(ch)] += sum_dy_xhat;
        beta->grad[static_cast<size_t>(ch)] += sum_dy;
        for (int bi = 0; bi < bsz; ++bi) {
          const size_t off = (static_cast<size_t>(bi) * c + ch) * hw;
          for (int p = 0; p < hw; ++p) {
            const double dy = y->grad[off + p];
            if (training) {
              const double xhat = (x->data[off + p] - mu) * is;
              x->grad[off + p] +=
                  g * is * (dy - sum_dy / m - xhat * sum_dy_xhat / m);
            } else {
              x->grad[off + p] += g * is * dy;
            }
          }
        }
      }
    });
  }
  return y;
}

// ---- concat -----------------------------------------------------------------

TensorPtr concat(Tape* tape, const std::vector<TensorPtr>& xs) {
  require(!xs.empty(), "concat: no inputs");
  const auto& first = xs[0]->shape;
  require(first.size() >= 2, "concat: inputs must have rank >= 2");
  int total = 0;
  size_t inner = 1;
  for (size_t i = 2; i < first.size(); ++i)
    inner *= static_cast<size_t>(first[i]);
  for (const auto& t : xs) {
    require(t->rank() == static_cast<int>(first.size()),
            "concat: rank mismatch");
    for (size_t i = 0; i < first.size(); ++i)
      require(i == 1 || t->shape[i] == first[i], "concat: shape mismatch");
    total += t->dim(1);
  }
  std::vector<int> out_shape = first;
  out_shape[1] = total;
  auto y = make_tensor(out_shape);
  const int outer = first[0];
  size_t off = 0;
  for (const auto& t : xs) {
    const size_t chunk = static_cast<size_t>(t->dim(1)) * inner;
    for (int o = 0; o < outer; ++o)
      std::memcpy(y->data.data() + static_cast<size_t>(o) * total * inner + off,
                  t->data.data() + static_cast<size_t>(o) * chunk,
                  chunk * sizeof(double));
    off += chunk;
  }
  if (tape) {
    tape->record([xs, y, outer, total, inner]() {
      if (!y->has_grad()) return;
      size_t off = 0;
      for (const auto& t : xs) {
        t->ensure_grad();
        const size_t chunk = static_cast<size_t>(t->dim(1)) * inner;
        for (int o = 0; o < outer; ++o) {
          const double* src =
              y->grad.data() + static_cast<size_t>(o) * total * inner + off;
          double* dst = t->grad.data() + static_cast<size_t>(o) * chunk;
          for (size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
        off += chunk;
      }
    });
  }
  return y;
}

TensorPtr concat_rows(Tape* tape, const std::vector<TensorPtr>& xs) {
  require(!xs.empty(), "concat_rows: no inputs");
  const auto& first = xs[0]->shape;
  int rows = 0;
  const size_t rl = row_len(*xs[0]);
  for (const auto& t : xs) {
    require(t->rank() == static_cast<int>(first.size()),
            "concat_rows: rank mismatch");
    for (size_t i = 1; i < first.size(); ++i)
      require(t->shape[i] == first[i], "concat_rows: shape mismatch");
    rows += t->dim(0);
  }
  std::vector<int> out_shape = first;
  out_shape[0] = rows;
  auto y = make_tensor(out_shape);
  size_t off = 0;
  for (const auto& t : xs) {
    std::memcpy(y->data.data() + off, t->data.data(),
                t->numel() * sizeof(double));
    off += t->numel();
  }
  if (tape) {
    tape->record([xs, y, rl]() {
      if (!y->has_grad()) return;
      size_t off = 0;
      for (const auto& t : xs) {
        t->ensure_grad();
        for (size_t i = 0; i < t->numel(); ++i) t->grad[i] += y->grad[off + i];
        off += t->numel();
      }
    });
  }
  return y;
}

// ---- gather / scatter ---------------------------------------------------------

TensorPtr gather_rows(Tape* tape, const TensorPtr& x,
                      const std::vector<int>& idx) {
  require(x->rank() >= 1, "gather_rows: input must have rank >= 1");
  const int n = x->dim(0);
  const size_t rl = row_len(*x);
  for (int i : idx)
    if (i < 0 || i >= n) throw SizeError("gather_rows: index out of range");
  std::vector<int> out_shape = x->shape;
  out_shape[0] = static_cast<int>(idx.size());
  auto y = make_tensor(out_shape);
  for (size_t r = 0; r < idx.size(); ++r)
    std::memcpy(y->data.data() + r * rl,
                x->data.data() + static_cast<size_t>(idx[r]) * rl,
                rl * sizeof(double));
  if (tape) {
    auto ii = std::make_shared<std::vector<int>>(idx);
    tape->record([x, y, ii, rl]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      // sequential scatter-add keeps accumulation order fixed
      for (size_t r = 0; r < ii->size(); ++r) {
        double* dst = x->grad.data() + static_cast<size_t>((*ii)[r]) * rl;
        const double* src = y->grad.data() + r * rl;
        for (size_t k = 0; k < rl; ++k) dst[k] += src[k];
      }
    });
  }
  return y;
}

TensorPtr scatter_add_rows(Tape* tape, const TensorPtr& x,
                           const std::vector<int>& idx, int out_rows) {
  require(x->rank() >= 1, "scatter_add_rows: input must have rank >= 1");
  require(static_cast<size_t>(x->dim(0)) == idx.size(),
          "scatter_add_rows: one index per input row required");
  const size_t rl = row_len(*x);
  for (int i : idx)
    if (i < 0 || i >= out_rows)
      throw SizeError("scatter_add_rows: index out of range");
  std::vector<int> out_shape = x->shape;
  out_shape[0] = out_rows;
  auto y = make_tensor(out_shape);
  for (size_t r = 0; r < idx.size(); ++r) {
    double* dst = y->data.data() + static_cast<size_t>(idx[r]) * rl;
    const double* src = x->data.data() + r * rl;
    for (size_t k = 0; k < rl; ++k) dst[k] += src[k];
  }
  if (tape) {
    auto ii = std::make_shared<std::vector<int>>(idx);
    tape->record([x, y, ii, rl]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (size_t r = 0; r < ii->size(); ++r) {
        const double* src = y->grad.data() + static_cast<size_t>((*ii)[r]) * rl;
        double* dst = x->grad.data() + r * rl;
        for (size_t k = 0; k < rl; ++k) dst[k] += src[k];
      }
    });
  }
  return y;
}

// ---- group reductions ----------------------------------------------------------

namespace {

void require_groups(const TensorPtr& x) {
  require(x->rank() == 3, "group reduction: input must be [G,S,C]");
}

}  // namespace

TensorPtr reduce_sum_groups(Tape* tape, const TensorPtr& x) {
  require_groups(x);
  const int g = x->dim(0), s = x->dim(1), c = x->dim(2);
  auto y = make_tensor({g, c});
  for (int gi = 0; gi < g; ++gi)
    for (int si = 0; si < s; ++si) {
      const double* src =
          x->data.data() + (static_cast<size_t>(gi) * s + si) * c;
      double* dst = y->data.data() + static_cast<size_t>(gi) * c;
      for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
    }
  if (tape) {
    tape->record([x, y, g, s, c]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (int gi = 0; gi < g; ++gi)
        for (int si = 0; si < s; ++si) {
          double* dst = x->grad.data() + (static_cast<size_t>(gi) * s + si) * c;
          const double* src = y->grad.data() + static_cast<size_t>(gi) * c;
          for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
        }
    });
  }
  return y;
}

TensorPtr reduce_mean_groups(Tape* tape, const TensorPtr& x) {
  require_groups(x);
  return scale(tape, reduce_sum_groups(tape, x), 1.0 / x->dim(1));
}

TensorPtr reduce_max_groups(Tape* tape, const TensorPtr& x) {
  require_groups(x);
  const int g = x->dim(0), s = x->dim(1), c = x->dim(2);
  require(s >= 1, "reduce_max_groups: empty group axis");
  auto y = make_tensor({g, c});
  auto arg = std::make_shared<std::vector<int>>(static_cast<size_t>(g) * c);
  for (int gi = 0; gi < g; ++gi) {
    for (int ci = 0; ci < c; ++ci) {
      double best = x->data[(static_cast<size_t>(gi) * s) * c + ci];
      int bs = 0;
      for (int si = 1; si < s; ++si) {
        const double v = x->data[(static_cast<size_t>(gi) * s + si) * c + ci];
        if (v > best) {  // strict: ties keep the lowest index
          best = v;
          bs = si;
        }
      }
      y->data[static_cast<size_t>(gi) * c + ci] = best;
      (*arg)[static_cast<size_t>(gi) * c + ci] = bs;
    }
  }
  if (tape) {
    tape->record([x, y, arg, g, s, c]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (int gi = 0; gi < g; ++gi)
        for (int ci = 0; ci < c; ++ci) {
          const int si = (*arg)[static_cast<size_t>(gi) * c + ci];
          x->grad[(static_cast<size_t>(gi) * s + si) * c + ci] +=
              y->grad[static_cast<size_t>(gi) * c + ci];
        }
    });
  }
  return y;
}

// ---- elementwise helpers ---------------------------------------------------------

TensorPtr scale(Tape* tape, const TensorPtr& x, double cf) {
  auto y = make_tensor(x->shape);
  for (size_t i = 0; i < x->numel(); ++i) y->data[i] = x->data[i] * cf;
  if (tape) {
    tape->record([x, y, cf]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (size_t i = 0; i < x->numel(); ++i) x->grad[i] += cf * y->grad[i];
    });
  }
  return y;
}

TensorPtr scale_rows(Tape* tape, const TensorPtr& x,
                     const std::vector<double>& s) {
  require(x->rank() >= 1 && static_cast<size_t>(x->dim(0)) == s.size(),
          "scale_rows: one factor per row required");
  const size_t rl = row_len(*x);
  auto y = make_tensor(x->shape);
  for (size_t r = 0; r < s.size(); ++r)
    for (size_t k = 0; k < rl; ++k) y->data[r * rl + k] = x->data[r * rl + k] * s[r];
  if (tape) {
    auto sv = std::make_shared<std::vector<double>>(s);
    tape->record([x, y, sv, rl]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (size_t r = 0; r < sv->size(); ++r)
        for (size_t k = 0; k < rl; ++k)
          x->grad[r * rl + k] += (*sv)[r] * y->grad[r * rl + k];
    });
  }
  return y;
}

TensorPtr reshape(Tape* tape, const TensorPtr& x, std::vector<int> shape) {
  require(shape_numel(shape) == x->numel(), "reshape: element count mismatch");
  auto y = make_tensor(std::move(shape));
  y->data = x->data;
  if (tape) {
    tape->record([x, y]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (size_t i = 0; i < x->numel(); ++i) x->grad[i] += y->grad[i];
    });
  }
  return y;
}

TensorPtr chw_to_rows(Tape* tape, const TensorPtr& x) {
  require(x->rank() == 3, "chw_to_rows: input must be [C,H,W]");
  const int c = x->dim(0), h = x->dim(1), w = x->dim(2);
  const int hw = h * w;
  auto y = make_tensor({hw, c});
  for (int ci = 0; ci < c; ++ci)
    for (int p = 0; p < hw; ++p)
      y->data[static_cast<size_t>(p) * c + ci] =
          x->data[static_cast<size_t>(ci) * hw + p];
  if (tape) {
    tape->record([x, y, c, hw]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int p = 0; p < hw; ++p)
          x->grad[static_cast<size_t>(ci) * hw + p] +=
              y->grad[static_cast<size_t>(p) * c + ci];
    });
  }
  return y;
}

TensorPtr nchw_to_rows(Tape* tape, const TensorPtr& x) {
  require(x->rank() == 4, "nchw_to_rows: input must be [B,C,H,W]");
  const int b = x->dim(0), c = x->dim(1), hw = x->dim(2) * x->dim(3);
  auto y = make_tensor({b * hw, c});
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const double* src = x->data.data() +
                          (static_cast<size_t>(bi) * c + ci) * hw;
      for (int p = 0; p < hw; ++p)
        y->data[(static_cast<size_t>(bi) * hw + p) * c + ci] = src[p];
    }
  if (tape) {
    tape->record([x, y, b, c, hw]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci) {
          double* dst = x->grad.data() +
                        (static_cast<size_t>(bi) * c + ci) * hw;
          for (int p = 0; p < hw; ++p)
            dst[p] += y->grad[(static_cast<size_t>(bi) * hw + p) * c + ci];
        }
    });
  }
  return y;
}

TensorPtr pad2d(Tape* tape, const TensorPtr& x, int pad_h, int pad_w) {
  require(x->rank() == 4, "pad2d: input must be [B,C,H,W]");
  require(pad_h >= 0 && pad_w >= 0, "pad2d: negative padding");
  const int bsz = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  const int oh = h + pad_h, ow = w + pad_w;
  auto y = make_tensor({bsz, c, oh, ow});
  for (int bc = 0; bc < bsz * c; ++bc)
    for (int row = 0; row < h; ++row)
      std::memcpy(
          y->data.data() + (static_cast<size_t>(bc) * oh + row) * ow,
          x->data.data() + (static_cast<size_t>(bc) * h + row) * w,
          static_cast<size_t>(w) * sizeof(double));
  if (tape) {
    tape->record([x, y, bsz, c, h, w, oh, ow]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (int bc = 0; bc < bsz * c; ++bc)
        for (int row = 0; row < h; ++row) {
          const double* src =
              y->grad.data() + (static_cast<size_t>(bc) * oh + row) * ow;
          double* dst =
              x->grad.data() + (static_cast<size_t>(bc) * h + row) * w;
          for (int col = 0; col < w; ++col) dst[col] += src[col];
        }
    });
  }
  return y;
}

TensorPtr crop2d(Tape* tape, const TensorPtr& x, int h, int w) {
  require(x->rank() == 4, "crop2d: input must be [B,C,H,W]");
  const int bsz = x->dim(0), c = x->dim(1), ih = x->dim(2), iw = x->dim(3);
  require(h <= ih && w <= iw, "crop2d: crop larger than input");
  auto y = make_tensor({bsz, c, h, w});
  for (int bc = 0; bc < bsz * c; ++bc)
    for (int row = 0; row < h; ++row)
      std::memcpy(
          y->data.data() + (static_cast<size_t>(bc) * h + row) * w,
          x->data.data() + (static_cast<size_t>(bc) * ih + row) * iw,
          static_cast<size_t>(w) * sizeof(double));
  if (tape) {
    tape->record([x, y, bsz, c, h, w, ih, iw]() {
      if (!y->has_grad()) return;
      x->ensure_grad();
      for (int bc = 0; bc < bsz * c; ++bc)
        for (int row = 0; row < h; ++row) {
          const double* src =
              y->grad.data() + (static_cast<size_t>(bc) * h + row) * w;
          double* dst =
              x->grad.data() + (static_cast<size_t>(bc) * ih + row) * iw;
          for (int col = 0; col < w; ++col) dst[col] += src[col];
        }
    });
  }
  return y;
}

// ---- loss ------------------------------------------------------------------------

TensorPtr softmax_cross_entropy(Tape* tape, const TensorPtr& logits,
                                const std::vector<int>& labels,
                                const std::vector<double>& class_weights,
                                int ignore_label) {
  require(logits->rank() == 2, "softmax_cross_entropy: logits must be [N,C]");
  const int n = logits->dim(0), c = logits->dim(1);
  require(static_cast<size_t>(n) == labels.size(),
          "softmax_cross_entropy: one label per row required");
  if (!class_weights.empty() && static_cast<int>(class_weights.size()) != c)
    throw ShapeError("softmax_cross_entropy: class_weights size mismatch");
  for (int l : labels)
    if (l != ignore_label && (l < 0 || l >= c))
      throw ValidationError("softmax_cross_entropy: label out of range");

  auto probs = std::make_shared<std::vector<double>>(
      static_cast<size_t>(n) * c);
  double loss_sum = 0.0, weight_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* row = logits->data.data() + static_cast<size_t>(i) * c;
    double* prow = probs->data() + static_cast<size_t>(i) * c;
    double mx = row[0];
    for (int k = 1; k < c; ++k) mx = std::max(mx, row[k]);
    double z = 0.0;
    for (int k = 0; k < c; ++k) {
      prow[k] = std::exp(row[k] - mx);
      z += prow[k];
    }
    for (int k = 0; k < c; ++k) prow[k] /= z;
    if (labels[static_cast<size_t>(i)] == ignore_label) continue;
    const int y = labels[static_cast<size_t>(i)];
    const double wgt =
        class_weights.empty() ? 1.0 : class_weights[static_cast<size_t>(y)];
    loss_sum += wgt * (std::log(z) + mx - row[y]);
    weight_sum += wgt;
  }
  auto out = make_tensor({1});
  out->data[0] = weight_sum > 0 ? loss_sum / weight_sum : 0.0;

  if (tape) {
    auto lab = std::make_shared<std::vector<int>>(labels);
    auto cw = std::make_shared<std::vector<double>>(class_weights);
    tape->record([logits, out, probs, lab, cw, n, c, ignore_label,
                  weight_sum]() {
      if (!out->has_grad() || weight_sum <= 0) return;
      logits->ensure_grad();
      const double dl = out->grad[0] / weight_sum;
      for (int i = 0; i < n; ++i) {
        const int y = (*lab)[static_cast<size_t>(i)];
        if (y == ignore_label) continue;
        const double wgt =
            cw->empty() ? 1.0 : (*cw)[static_cast<size_t>(y)];
        const double* prow = probs->data() + static_cast<size_t>(i) * c;
        double* grow = logits->grad.data() + static_cast<size_t>(i) * c;
        for (int k = 0; k < c; ++k)
          grow[k] += dl * wgt * (prow[k] - (k == y ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows: input must be [N,C]");
  const int n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double* row = logits.data.data() + static_cast<size_t>(i) * c;
    int best = 0;
    for (int k = 1; k < c; ++k)
      if (row[k] > row[best]) best = k;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

// ---- optimizer ----------------------------------------------------------------

void SgdConfig::validate() const {
  if (!(lr > 0)) throw ValidationError("SgdConfig: lr must be positive");
  if (momentum < 0 || momentum >= 1)
    throw ValidationError("SgdConfig: momentum must be in [0,1)");
  if (weight_decay < 0)
    throw ValidationError("SgdConfig: weight_decay must be >= 0");
}

double SgdConfig::lr_at(int epoch) const {
  double v = lr;
  for (const auto& [e, mult] : schedule)
    if (epoch >= e) v *= mult;
  return v;
}

void sgd_step(ParamList& params, std::vector<std::vector<double>>& velocities,
              const SgdConfig& config, int epoch) {
  if (velocities.size() != params.size())
    velocities.assign(params.size(), {});
  const double lr = config.lr_at(epoch);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi].second;
    if (!p.has_grad())
      throw StateError("sgd_step: parameter '" + params[pi].first +
                       "' has no gradient");
    auto& v = velocities[pi];
    if (v.empty()) v.assign(p.numel(), 0.0);
    for (size_t i = 0; i < p.numel(); ++i) {
      v[i] = config.momentum * v[i] + p.grad[i] +
             config.weight_decay * p.data[i];
      p.data[i] -= lr * v[i];
    }
  }
}

void zero_grads(ParamList& params) {
  for (auto& [name, p] : params) p->zero_grad();
}

}  // namespace pointfuse
