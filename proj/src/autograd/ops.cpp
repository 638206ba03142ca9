#include "gdp/autograd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gdp/simd/kernels.hpp"

namespace gdp::ag {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

void require_rank(const Var& x, int rank, const char* op) {
  if (x.value().rank() != rank)
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_str(x.shape()));
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

// Runs f(parent_grad_buffer) if that parent wants a gradient.
template <class F>
void with_grad(Node& self, std::size_t i, F&& f) {
  Node& p = parent(self, i);
  if (p.requires_grad) f(p.grad_buffer(), p.value);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  simd::axpy(1.0, b.value().data(), out.data(), out.size());
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i)
      with_grad(self, i, [&](Tensor& g, const Tensor&) { simd::axpy(1.0, self.grad.data(), g.data(), g.size()); });
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  simd::axpy(-1.0, b.value().data(), out.data(), out.size());
  return make_op(std::move(out), {a, b}, [](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor&) { simd::axpy(1.0, self.grad.data(), g.data(), g.size()); });
    with_grad(self, 1, [&](Tensor& g, const Tensor&) { simd::axpy(-1.0, self.grad.data(), g.data(), g.size()); });
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = parent(self, 0).value;
    const Tensor& bv = parent(self, 1).value;
    with_grad(self, 0, [&](Tensor& g, const Tensor&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    });
    with_grad(self, 1, [&](Tensor& g, const Tensor&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    });
  });
}

Var scale(const Var& a, double factor) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * factor;
  return make_op(std::move(out), {a}, [factor](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor&) { simd::axpy(factor, self.grad.data(), g.data(), g.size()); });
  });
}

Var scale_by(const Var& x, const Var& s) {
  if (s.value().size() != 1) throw std::invalid_argument("scale_by: scale must hold one element");
  const double sv = s.value()[0];
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * sv;
  return make_op(std::move(out), {x, s}, [](Node& self) {
    const double sv = parent(self, 1).value[0];
    const Tensor& xv = parent(self, 0).value;
    with_grad(self, 0, [&](Tensor& g, const Tensor&) { simd::axpy(sv, self.grad.data(), g.data(), g.size()); });
    with_grad(self, 1, [&](Tensor& g, const Tensor&) { g[0] += simd::dot(self.grad.data(), xv.data(), xv.size()); });
  });
}

Var add_bias(const Var& x, const Var& b) {
  const int m = x.value().rank() ? x.shape().back() : 0;
  if (b.value().rank() != 1 || b.dim(0) != m)
    throw std::invalid_argument("add_bias: bias " + shape_str(b.shape()) + " does not match " + shape_str(x.shape()));
  Tensor out = x.value();
  const std::size_t rows = m ? out.size() / m : 0;
  for (std::size_t r = 0; r < rows; ++r) simd::axpy(1.0, b.value().data(), out.data() + r * m, m);
  return make_op(std::move(out), {x, b}, [m, rows](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor&) { simd::axpy(1.0, self.grad.data(), g.data(), g.size()); });
    with_grad(self, 1, [&](Tensor& g, const Tensor&) {
      for (std::size_t r = 0; r < rows; ++r) simd::axpy(1.0, self.grad.data() + r * m, g.data(), m);
    });
  });
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k)
    throw std::invalid_argument("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  Tensor out({n, m}, 0.0);
  simd::gemm_nn(n, m, k, a.value().data(), b.value().data(), out.data());
  return make_op(std::move(out), {a, b}, [n, k, m](Node& self) {
    const Tensor& av = parent(self, 0).value;
    const Tensor& bv = parent(self, 1).value;
    with_grad(self, 0, [&](Tensor& g, const Tensor&) { simd::gemm_nt(n, k, m, self.grad.data(), bv.data(), g.data()); });
    with_grad(self, 1, [&](Tensor& g, const Tensor&) { simd::gemm_tn(n, m, k, av.data(), self.grad.data(), g.data()); });
  });
}

Var relu(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.value()[i]);
  return make_op(std::move(out), {x}, [](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor& xv) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > 0.0) g[i] += self.grad[i];
    });
  });
}

Var tanh(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.value()[i]);
  return make_op(std::move(out), {x}, [](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
    });
  });
}

Var exp(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.value()[i]);
  return make_op(std::move(out), {x}, [](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i];
    });
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_op(Tensor({1}, {s}), {x}, [](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor&) {
      const double d = self.grad[0];
      for (double& v : g.values()) v += d;
    });
  });
}

Var row_norms(const Var& x, int p) {
  require_rank(x, 2, "row_norms");
  if (p != 1 && p != 2) throw std::invalid_argument("row_norms: p must be 1 or 2");
  const int n = x.dim(0), m = x.dim(1);
  Tensor out({n}, 0.0);
  for (int r = 0; r < n; ++r) {
    double s = 0.0;
    for (int c = 0; c < m; ++c) {
      const double v = x.value().at(r, c);
      s += p == 1 ? std::abs(v) : v * v;
    }
    out[r] = p == 1 ? s : std::sqrt(s);
  }
  return make_op(std::move(out), {x}, [p, n, m](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor& xv) {
      for (int r = 0; r < n; ++r) {
        const double d = self.grad[r];
        const double norm = self.value[r];
        for (int c = 0; c < m; ++c) {
          const double v = xv.at(r, c);
          if (p == 1) {
            g.at(r, c) += d * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
          } else if (norm > 0.0) {
            g.at(r, c) += d * v / norm;
          }
        }
      }
    });
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_op(std::move(out), {x}, [](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor&) { simd::axpy(1.0, self.grad.data(), g.data(), g.size()); });
  });
}

Var slice_cols(const Var& x, int begin, int end) {
  require_rank(x, 2, "slice_cols");
  const int n = x.dim(0), m = x.dim(1);
  if (begin < 0 || end > m || begin >= end)
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                                ") for " + shape_str(x.shape()));
  const int w = end - begin;
  Tensor out({n, w});
  for (int r = 0; r < n; ++r)
    std::copy_n(x.value().data() + static_cast<std::size_t>(r) * m + begin, w, out.data() + static_cast<std::size_t>(r) * w);
  return make_op(std::move(out), {x}, [n, m, w, begin](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor&) {
      for (int r = 0; r < n; ++r)
        simd::axpy(1.0, self.grad.data() + static_cast<std::size_t>(r) * w, g.data() + static_cast<std::size_t>(r) * m + begin, w);
    });
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int n = parts[0].dim(0);
  std::vector<int> widths;
  int total = 0;
  for (const Var& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != n) throw std::invalid_argument("concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  Tensor out({n, total});
  int offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (int r = 0; r < n; ++r)
      std::copy_n(parts[k].value().data() + static_cast<std::size_t>(r) * widths[k], widths[k],
                  out.data() + static_cast<std::size_t>(r) * total + offset);
    offset += widths[k];
  }
  return make_op(std::move(out), parts, [n, total, widths](Node& self) {
    int offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      with_grad(self, k, [&](Tensor& g, const Tensor&) {
        for (int r = 0; r < n; ++r)
          simd::axpy(1.0, self.grad.data() + static_cast<std::size_t>(r) * total + offset,
                     g.data() + static_cast<std::size_t>(r) * widths[k], widths[k]);
      });
      offset += widths[k];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Shape shape = parts[0].shape();
  if (shape.empty()) throw std::invalid_argument("concat_rows: scalar input");
  int rows = 0;
  std::vector<std::size_t> sizes;
  for (const Var& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1))
      throw std::invalid_argument("concat_rows: trailing dimensions differ");
    rows += s[0];
    sizes.push_back(p.value().size());
  }
  shape[0] = rows;
  Tensor out(shape);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.data() + offset);
    offset += p.value().size();
  }
  return make_op(std::move(out), parts, [sizes](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      with_grad(self, k, [&](Tensor& g, const Tensor&) { simd::axpy(1.0, self.grad.data() + offset, g.data(), sizes[k]); });
      offset += sizes[k];
    }
  });
}

Var gather_rows(const Var& x, std::vector<int> rows) {
  if (x.value().rank() < 1) throw std::invalid_argument("gather_rows: scalar input");
  const int n = x.dim(0);
  const std::size_t row_size = n ? x.value().size() / n : 0;
  Shape shape = x.shape();
  shape[0] = static_cast<int>(rows.size());
  Tensor out(shape);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= n) throw std::out_of_range("gather_rows: row " + std::to_string(rows[k]));
    std::copy_n(x.value().data() + rows[k] * row_size, row_size, out.data() + k * row_size);
  }
  return make_op(std::move(out), {x}, [rows = std::move(rows), row_size](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor&) {
      for (std::size_t k = 0; k < rows.size(); ++k)
        simd::axpy(1.0, self.grad.data() + k * row_size, g.data() + rows[k] * row_size, row_size);
    });
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  const int n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3);
  const int kh = w.dim(0), kw = w.dim(1), co = w.dim(3);
  if (w.dim(2) != ci)
    throw std::invalid_argument("conv2d: input channels " + std::to_string(ci) + " vs kernel " + shape_str(w.shape()));
  if (b.value().rank() != 1 || b.dim(0) != co) throw std::invalid_argument("conv2d: bias shape");
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/padding");
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;
  if (ho < 1 || wo < 1) throw std::invalid_argument("conv2d: input too small for kernel");
  const std::size_t rows = static_cast<std::size_t>(n) * ho * wo;
  const std::size_t kk = static_cast<std::size_t>(kh) * kw * ci;

  auto cols = std::make_shared<std::vector<double>>(rows * kk, 0.0);
  const double* xv = x.value().data();
  for (int img = 0; img < n; ++img)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double* dst = cols->data() + ((static_cast<std::size_t>(img) * ho + oy) * wo + ox) * kk;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= wd) continue;
            std::copy_n(xv + ((static_cast<std::size_t>(img) * h + iy) * wd + ix) * ci, ci,
                        dst + (static_cast<std::size_t>(ky) * kw + kx) * ci);
          }
        }
      }

  Tensor out({n, ho, wo, co}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(b.value().data(), co, out.data() + r * co);
  simd::gemm_nn(rows, co, kk, cols->data(), w.value().data(), out.data());

  return make_op(std::move(out), {x, w, b}, [=](Node& self) {
    const double* gy = self.grad.data();
    with_grad(self, 1, [&](Tensor& g, const Tensor&) { simd::gemm_tn(rows, co, kk, cols->data(), gy, g.data()); });
    with_grad(self, 2, [&](Tensor& g, const Tensor&) {
      for (std::size_t r = 0; r < rows; ++r) simd::axpy(1.0, gy + r * co, g.data(), co);
    });
    with_grad(self, 0, [&](Tensor& g, const Tensor&) {
      std::vector<double> dcols(rows * kk, 0.0);
      simd::gemm_nt(rows, kk, co, gy, parent(self, 1).value.data(), dcols.data());
      for (int img = 0; img < n; ++img)
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            const double* src = dcols.data() + ((static_cast<std::size_t>(img) * ho + oy) * wo + ox) * kk;
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= wd) continue;
                simd::axpy(1.0, src + (static_cast<std::size_t>(ky) * kw + kx) * ci,
                           g.data() + ((static_cast<std::size_t>(img) * h + iy) * wd + ix) * ci, ci);
              }
            }
          }
    });
  });
}

Var spatial_mean(const Var& x) {
  require_rank(x, 4, "spatial_mean");
  const int n = x.dim(0), cells = x.dim(1) * x.dim(2), c = x.dim(3);
  if (cells < 1) throw std::invalid_argument("spatial_mean: empty spatial extent");
  const double inv = 1.0 / cells;
  Tensor out({n, c}, 0.0);
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < cells; ++s)
      simd::axpy(inv, x.value().data() + (static_cast<std::size_t>(i) * cells + s) * c, out.data() + static_cast<std::size_t>(i) * c, c);
  return make_op(std::move(out), {x}, [n, cells, c, inv](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor&) {
      for (int i = 0; i < n; ++i)
        for (int s = 0; s < cells; ++s)
          simd::axpy(inv, self.grad.data() + static_cast<std::size_t>(i) * c,
                     g.data() + (static_cast<std::size_t>(i) * cells + s) * c, c);
    });
  });
}

Csr Csr::from_lists(const std::vector<std::vector<int>>& lists) {
  Csr csr;
  csr.offsets.reserve(lists.size() + 1);
  for (const auto& l : lists) {
    csr.indices.insert(csr.indices.end(), l.begin(), l.end());
    csr.offsets.push_back(static_cast<int>(csr.indices.size()));
  }
  return csr;
}

void neighborhood_softmax(const Tensor& z, const Csr& adj, int heads, int head, double logit_scale,
                          std::vector<double>& weights) {
  const int n = z.dim(0), c = z.dim(1);
  const int width = c / heads;
  if (adj.rows() != n)
    throw std::invalid_argument("attention: graph has " + std::to_string(adj.rows()) + " nodes, state has " +
                                std::to_string(n));
  weights.assign(adj.indices.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    const int begin = adj.offsets[i], end = adj.offsets[i + 1];
    if (begin == end) throw std::invalid_argument("attention: node " + std::to_string(i) + " has no neighbors");
    const double* zi = z.data() + static_cast<std::size_t>(i) * c + head * width;
    double peak = -INFINITY;
    for (int e = begin; e < end; ++e) {
      const int j = adj.indices[e];
      if (j < 0 || j >= n) throw std::out_of_range("attention: neighbor index " + std::to_string(j));
      weights[e] = logit_scale * simd::dot(zi, z.data() + static_cast<std::size_t>(j) * c + head * width, width);
      peak = std::max(peak, weights[e]);
    }
    double total = 0.0;
    for (int e = begin; e < end; ++e) total += (weights[e] = std::exp(weights[e] - peak));
    for (int e = begin; e < end; ++e) weights[e] /= total;
  }
}

Var graph_attention(const Var& z, const Csr& adj, int heads, double logit_scale) {
  require_rank(z, 2, "graph_attention");
  const int n = z.dim(0), c = z.dim(1);
  if (heads < 1 || c % heads != 0)
    throw std::invalid_argument("graph_attention: width " + std::to_string(c) + " not divisible by " +
                                std::to_string(heads) + " heads");
  const int width = c / heads;
  auto weights = std::make_shared<std::vector<std::vector<double>>>(heads);
  Tensor out({n, c}, 0.0);
  for (int k = 0; k < heads; ++k) {
    neighborhood_softmax(z.value(), adj, heads, k, logit_scale, (*weights)[k]);
    const auto& a = (*weights)[k];
    for (int i = 0; i < n; ++i)
      for (int e = adj.offsets[i]; e < adj.offsets[i + 1]; ++e)
        simd::axpy(a[e], z.value().data() + static_cast<std::size_t>(adj.indices[e]) * c + k * width,
                   out.data() + static_cast<std::size_t>(i) * c + k * width, width);
  }
  return make_op(std::move(out), {z}, [adj, weights, heads, n, c, width, logit_scale](Node& self) {
    with_grad(self, 0, [&](Tensor& g, const Tensor& zv) {
      std::vector<double> da;
      for (int k = 0; k < heads; ++k) {
        const auto& a = (*weights)[k];
        for (int i = 0; i < n; ++i) {
          const int begin = adj.offsets[i], end = adj.offsets[i + 1];
          const double* gi = self.grad.data() + static_cast<std::size_t>(i) * c + k * width;
          const double* zi = zv.data() + static_cast<std::size_t>(i) * c + k * width;
          da.assign(end - begin, 0.0);
          double mean = 0.0;
          for (int e = begin; e < end; ++e) {
            const double* zj = zv.data() + static_cast<std::size_t>(adj.indices[e]) * c + k * width;
            da[e - begin] = simd::dot(gi, zj, width);
            mean += a[e] * da[e - begin];
          }
          for (int e = begin; e < end; ++e) {
            const int j = adj.indices[e];
            double* gzj = g.data() + static_cast<std::size_t>(j) * c + k * width;
            const double* zj = zv.data() + static_cast<std::size_t>(j) * c + k * width;
            const double dlogit = logit_scale * a[e] * (da[e - begin] - mean);
            simd::axpy(a[e], gi, gzj, width);
            simd::axpy(dlogit, zj, g.data() + static_cast<std::size_t>(i) * c + k * width, width);
            simd::axpy(dlogit, zi, gzj, width);
          }
        }
      }
    });
  });
}

}  // namespace gdp::ag
