#include "gdas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gdas/kernels.hpp"

namespace gdas::ops {
namespace {

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    shape_fail(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

struct Dims4 {
  std::size_t n, c, h, w;
};

Dims4 dims4(const Tensor& x) { return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)}; }

}  // namespace

std::size_t pooled_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad,
                          std::size_t dilation) {
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (in + 2 * pad < span || stride == 0) return 0;
  return (in + 2 * pad - span) / stride + 1;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  kernels::add(a.data(), b.data(), out);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "add", [a, b](const Tensor& y) {
    auto g = upstream(y);
    if (auto ga = grad_sink(a); !ga.empty()) kernels::axpy(1.0, g, ga);
    if (auto gb = grad_sink(b); !gb.empty()) kernels::axpy(1.0, g, gb);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  kernels::mul(a.data(), b.data(), out);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "mul", [a, b](const Tensor& y) {
    auto g = upstream(y);
    if (auto ga = grad_sink(a); !ga.empty()) kernels::mul_acc(g, b.data(), ga);
    if (auto gb = grad_sink(b); !gb.empty()) kernels::mul_acc(g, a.data(), gb);
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  kernels::scale(factor, x.data(), out);
  return Tensor::make_result(x.shape(), std::move(out), {x}, "scale",
                             [x, factor](const Tensor& y) {
                               if (auto gx = grad_sink(x); !gx.empty()) {
                                 kernels::axpy(factor, upstream(y), gx);
                               }
                             });
}

Tensor add_constant(const Tensor& x, std::span<const double> offset) {
  if (offset.size() != x.numel()) {
    shape_fail("add_constant", "offset length " + std::to_string(offset.size()) +
                                   " vs tensor " + shape_str(x.shape()));
  }
  std::vector<double> out(x.numel());
  kernels::add(x.data(), offset, out);
  return Tensor::make_result(x.shape(), std::move(out), {x}, "add_constant",
                             [x](const Tensor& y) {
                               if (auto gx = grad_sink(x); !gx.empty()) {
                                 kernels::axpy(1.0, upstream(y), gx);
                               }
                             });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  kernels::active().relu(x.numel(), x.data().data(), out.data());
  return Tensor::make_result(x.shape(), std::move(out), {x}, "relu", [x](const Tensor& y) {
    if (auto gx = grad_sink(x); !gx.empty()) {
      kernels::active().relu_backward(x.numel(), x.data().data(), upstream(y).data(), gx.data());
    }
  });
}

Tensor log(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(in[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, "log", [x](const Tensor& y) {
    if (auto gx = grad_sink(x); !gx.empty()) {
      auto g = upstream(y);
      auto in = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] / in[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  const double total = kernels::sum(x.data());
  return Tensor::make_result({1}, {total}, {x}, "sum", [x](const Tensor& y) {
    if (auto gx = grad_sink(x); !gx.empty()) {
      const double g = upstream(y)[0];
      for (auto& v : gx) v += g;
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    shape_fail("reshape", shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, "reshape",
                             [x](const Tensor& y) {
                               if (auto gx = grad_sink(x); !gx.empty()) {
                                 kernels::axpy(1.0, upstream(y), gx);
                               }
                             });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    shape_fail("matmul", "inner extents differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_acc(m, n, k, a.data().data(), b.data().data(), out.data());
  return Tensor::make_result({m, n}, std::move(out), {a, b}, "matmul",
                             [a, b, m, n, k](const Tensor& y) {
                               auto g = upstream(y);
                               if (auto ga = grad_sink(a); !ga.empty()) {
                                 kernels::gemm_nt_acc(m, n, k, g.data(), b.data().data(),
                                                      ga.data());
                               }
                               if (auto gb = grad_sink(b); !gb.empty()) {
                                 kernels::gemm_tn_acc(m, n, k, a.data().data(), g.data(),
                                                      gb.data());
                               }
                             });
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("affine", x, 2);
  require_rank("affine", weight, 2);
  const std::size_t n = x.dim(0), f = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != f) {
    shape_fail("affine", "input " + shape_str(x.shape()) + " vs weight " +
                             shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != o)) {
    shape_fail("affine", "bias " + shape_str(bias.shape()) + " vs weight " +
                             shape_str(weight.shape()));
  }
  std::vector<double> out(n * o, 0.0);
  kernels::gemm_nt_acc(n, f, o, x.data().data(), weight.data().data(), out.data());
  if (bias.defined()) {
    for (std::size_t i = 0; i < n; ++i) kernels::axpy(1.0, bias.data(), {out.data() + i * o, o});
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::make_result(
      {n, o}, std::move(out), std::move(inputs), "affine",
      [x, weight, bias, n, f, o](const Tensor& y) {
        auto g = upstream(y);
        if (auto gx = grad_sink(x); !gx.empty()) {
          kernels::gemm_acc(n, f, o, g.data(), weight.data().data(), gx.data());
        }
        if (auto gw = grad_sink(weight); !gw.empty()) {
          kernels::gemm_tn_acc(n, f, o, g.data(), x.data().data(), gw.data());
        }
        if (auto gb = grad_sink(bias); !gb.empty()) {
          for (std::size_t i = 0; i < n; ++i) kernels::axpy(1.0, g.subspan(i * o, o), gb);
        }
      });
}

Shape conv2d_output_shape(const Shape& x, const Shape& weight, const Conv2dAttrs& attrs) {
  if (x.size() != 4 || weight.size() != 4) {
    shape_fail("conv2d", "expected rank-4 input and weight, got " + shape_str(x) + " and " +
                             shape_str(weight));
  }
  if (attrs.groups == 0 || x[1] % attrs.groups != 0 || weight[0] % attrs.groups != 0 ||
      weight[1] * attrs.groups != x[1]) {
    shape_fail("conv2d", "channel/group mismatch: input " + shape_str(x) + ", weight " +
                             shape_str(weight) + ", groups " + std::to_string(attrs.groups));
  }
  const auto oh = pooled_extent(x[2], weight[2], attrs.stride_h, attrs.pad_h, attrs.dilation_h);
  const auto ow = pooled_extent(x[3], weight[3], attrs.stride_w, attrs.pad_w, attrs.dilation_w);
  if (oh == 0 || ow == 0) {
    shape_fail("conv2d", "kernel larger than padded input: input " + shape_str(x) +
                             ", weight " + shape_str(weight));
  }
  return {x[0], weight[0], oh, ow};
}

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w;      // input
  std::size_t o, kh, kw;       // weight
  std::size_t oh, ow;          // output
  std::size_t cg, og, rows;    // per-group input channels, output channels, col rows
  Conv2dAttrs attrs;

  std::size_t plane() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& weight, const Conv2dAttrs& attrs) {
  const Shape out = conv2d_output_shape(x.shape(), weight.shape(), attrs);
  ConvGeometry g{};
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.o = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.oh = out[2];
  g.ow = out[3];
  g.cg = g.c / attrs.groups;
  g.og = g.o / attrs.groups;
  g.rows = g.cg * g.kh * g.kw;
  g.attrs = attrs;
  return g;
}

// Unfolds the input channels of one (sample, group) into col[rows x plane].
void im2col(const ConvGeometry& g, const double* x, double* col) {
  const auto& a = g.attrs;
  for (std::size_t c = 0; c < g.cg; ++c) {
    const double* xc = x + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * g.plane();
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const long ii = static_cast<long>(oi * a.stride_h + ki * a.dilation_h) -
                          static_cast<long>(a.pad_h);
          double* dst = row + oi * g.ow;
          if (ii < 0 || ii >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(ii) * g.w;
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const long jj = static_cast<long>(oj * a.stride_w + kj * a.dilation_w) -
                            static_cast<long>(a.pad_w);
            dst[oj] = (jj < 0 || jj >= static_cast<long>(g.w)) ? 0.0 : src[jj];
          }
        }
      }
    }
  }
}

void col2im_acc(const ConvGeometry& g, const double* col, double* gx) {
  const auto& a = g.attrs;
  for (std::size_t c = 0; c < g.cg; ++c) {
    double* gxc = gx + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * g.plane();
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const long ii = static_cast<long>(oi * a.stride_h + ki * a.dilation_h) -
                          static_cast<long>(a.pad_h);
          if (ii < 0 || ii >= static_cast<long>(g.h)) continue;
          double* dst = gxc + static_cast<std::size_t>(ii) * g.w;
          const double* src = row + oi * g.ow;
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const long jj = static_cast<long>(oj * a.stride_w + kj * a.dilation_w) -
                            static_cast<long>(a.pad_w);
            if (jj >= 0 && jj < static_cast<long>(g.w)) dst[jj] += src[oj];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Conv2dAttrs& attrs) {
  const ConvGeometry g = conv_geometry(x, weight, attrs);
  const std::size_t groups = attrs.groups;
  std::vector<double> out(g.n * g.o * g.plane(), 0.0);
  std::vector<double> col(g.rows * g.plane());
  const double* xd = x.data().data();
  const double* wd = weight.data().data();
  for (std::size_t s = 0; s < g.n; ++s) {
    for (std::size_t grp = 0; grp < groups; ++grp) {
      im2col(g, xd + (s * g.c + grp * g.cg) * g.h * g.w, col.data());
      kernels::gemm_acc(g.og, g.plane(), g.rows, wd + grp * g.og * g.rows, col.data(),
                        out.data() + (s * g.o + grp * g.og) * g.plane());
    }
  }
  return Tensor::make_result(
      {g.n, g.o, g.oh, g.ow}, std::move(out), {x, weight}, "conv2d",
      [x, weight, g](const Tensor& y) {
        auto gx = grad_sink(x);
        auto gw = grad_sink(weight);
        auto gy = upstream(y);
        std::vector<double> col(g.rows * g.plane());
        std::vector<double> gcol(gx.empty() ? 0 : col.size());
        const double* xd = x.data().data();
        const double* wd = weight.data().data();
        for (std::size_t s = 0; s < g.n; ++s) {
          for (std::size_t grp = 0; grp < g.attrs.groups; ++grp) {
            const double* gout = gy.data() + (s * g.o + grp * g.og) * g.plane();
            if (!gw.empty()) {
              im2col(g, xd + (s * g.c + grp * g.cg) * g.h * g.w, col.data());
              kernels::gemm_nt_acc(g.og, g.plane(), g.rows, gout, col.data(),
                                   gw.data() + grp * g.og * g.rows);
            }
            if (!gx.empty()) {
              std::fill(gcol.begin(), gcol.end(), 0.0);
              kernels::gemm_tn_acc(g.og, g.plane(), g.rows, wd + grp * g.og * g.rows, gout,
                                   gcol.data());
              col2im_acc(g, gcol.data(), gx.data() + (s * g.c + grp * g.cg) * g.h * g.w);
            }
          }
        }
      });
}

Tensor bias_add_channels(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    shape_fail("bias_add_channels",
               "input " + shape_str(x.shape()) + " vs bias " + shape_str(bias.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
  std::vector<double> out(x.data().begin(), x.data().end());
  auto b = bias.data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* dst = out.data() + (s * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += b[ch];
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x, bias}, "bias_add_channels",
                             [x, bias, n, c, inner](const Tensor& y) {
                               auto g = upstream(y);
                               if (auto gx = grad_sink(x); !gx.empty()) kernels::axpy(1.0, g, gx);
                               if (auto gb = grad_sink(bias); !gb.empty()) {
                                 for (std::size_t s = 0; s < n; ++s) {
                                   for (std::size_t ch = 0; ch < c; ++ch) {
                                     gb[ch] += kernels::sum(g.subspan((s * c + ch) * inner, inner));
                                   }
                                 }
                               }
                             });
}

Tensor avg_pool2d(const Tensor& x, const Pool2dAttrs& attrs) {
  require_rank("avg_pool2d", x, 4);
  const auto [n, c, h, w] = dims4(x);
  const auto oh = pooled_extent(h, attrs.kernel, attrs.stride, attrs.pad);
  const auto ow = pooled_extent(w, attrs.kernel, attrs.stride, attrs.pad);
  if (oh == 0 || ow == 0) shape_fail("avg_pool2d", "window larger than input " + shape_str(x.shape()));
  std::vector<double> out(n * c * oh * ow, 0.0);
  auto xd = x.data();
  auto window = [=](std::size_t o, std::size_t stride, std::size_t extent) {
    const long lo = static_cast<long>(o * stride) - static_cast<long>(attrs.pad);
    const long hi = lo + static_cast<long>(attrs.kernel);
    return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(std::max(lo, 0L)),
                                               static_cast<std::size_t>(std::min(hi, static_cast<long>(extent))));
  };
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* src = xd.data() + p * h * w;
    double* dst = out.data() + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const auto [i0, i1] = window(i, attrs.stride, h);
      for (std::size_t j = 0; j < ow; ++j) {
        const auto [j0, j1] = window(j, attrs.stride, w);
        double acc = 0.0;
        for (std::size_t a = i0; a < i1; ++a) {
          for (std::size_t b = j0; b < j1; ++b) acc += src[a * w + b];
        }
        dst[i * ow + j] = acc / static_cast<double>((i1 - i0) * (j1 - j0));
      }
    }
  }
  return Tensor::make_result(
      {n, c, oh, ow}, std::move(out), {x}, "avg_pool2d",
      [x, n = n, c = c, h = h, w = w, oh, ow, attrs, window](const Tensor& y) {
        auto gx = grad_sink(x);
        if (gx.empty()) return;
        auto g = upstream(y);
        for (std::size_t p = 0; p < n * c; ++p) {
          double* dst = gx.data() + p * h * w;
          const double* src = g.data() + p * oh * ow;
          for (std::size_t i = 0; i < oh; ++i) {
            const auto [i0, i1] = window(i, attrs.stride, h);
            for (std::size_t j = 0; j < ow; ++j) {
              const auto [j0, j1] = window(j, attrs.stride, w);
              const double share = src[i * ow + j] / static_cast<double>((i1 - i0) * (j1 - j0));
              for (std::size_t a = i0; a < i1; ++a) {
                for (std::size_t b = j0; b < j1; ++b) dst[a * w + b] += share;
              }
            }
          }
        }
      });
}

Tensor max_pool2d(const Tensor& x, const Pool2dAttrs& attrs) {
  require_rank("max_pool2d", x, 4);
  const auto [n, c, h, w] = dims4(x);
  const auto oh = pooled_extent(h, attrs.kernel, attrs.stride, attrs.pad);
  const auto ow = pooled_extent(w, attrs.kernel, attrs.stride, attrs.pad);
  if (oh == 0 || ow == 0) shape_fail("max_pool2d", "window larger than input " + shape_str(x.shape()));
  std::vector<double> out(n * c * oh * ow);
  std::vector<std::size_t> winner(out.size());
  auto xd = x.data();
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      const long i0 = static_cast<long>(i * attrs.stride) - static_cast<long>(attrs.pad);
      for (std::size_t j = 0; j < ow; ++j) {
        const long j0 = static_cast<long>(j * attrs.stride) - static_cast<long>(attrs.pad);
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_index = std::numeric_limits<std::size_t>::max();
        for (long a = i0; a < i0 + static_cast<long>(attrs.kernel); ++a) {
          if (a < 0 || a >= static_cast<long>(h)) continue;
          for (long b = j0; b < j0 + static_cast<long>(attrs.kernel); ++b) {
            if (b < 0 || b >= static_cast<long>(w)) continue;
            const std::size_t idx = p * h * w + static_cast<std::size_t>(a) * w +
                                    static_cast<std::size_t>(b);
            if (best_index == std::numeric_limits<std::size_t>::max() || xd[idx] > best) {
              best = xd[idx];
              best_index = idx;
            }
          }
        }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = best;
        winner[o] = best_index;
      }
    }
  }
  return Tensor::make_result({n, c, oh, ow}, std::move(out), {x}, "max_pool2d",
                             [x, winner = std::move(winner)](const Tensor& y) {
                               auto gx = grad_sink(x);
                               if (gx.empty()) return;
                               auto g = upstream(y);
                               for (std::size_t o = 0; o < winner.size(); ++o) {
                                 gx[winner[o]] += g[o];
                               }
                             });
}

Tensor shift2d(const Tensor& x, std::size_t dy, std::size_t dx) {
  require_rank("shift2d", x, 4);
  const auto [n, c, h, w] = dims4(x);
  std::vector<double> out(x.numel(), 0.0);
  auto xd = x.data();
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t i = 0; i + dy < h; ++i) {
      for (std::size_t j = 0; j + dx < w; ++j) {
        out[(p * h + i) * w + j] = xd[(p * h + i + dy) * w + j + dx];
      }
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, "shift2d",
                             [x, n = n, c = c, h = h, w = w, dy, dx](const Tensor& y) {
                               auto gx = grad_sink(x);
                               if (gx.empty()) return;
                               auto g = upstream(y);
                               for (std::size_t p = 0; p < n * c; ++p) {
                                 for (std::size_t i = 0; i + dy < h; ++i) {
                                   for (std::size_t j = 0; j + dx < w; ++j) {
                                     gx[(p * h + i + dy) * w + j + dx] += g[(p * h + i) * w + j];
                                   }
                                 }
                               }
                             });
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) shape_fail("concat_channels", "no inputs");
  const Tensor& first = parts.front();
  if (first.rank() < 2) shape_fail("concat_channels", "rank < 2: " + shape_str(first.shape()));
  const std::size_t n = first.dim(0);
  const std::size_t inner = first.numel() / (n * first.dim(1));
  std::size_t total_c = 0;
  for (const auto& t : parts) {
    bool ok = t.rank() == first.rank() && t.dim(0) == n;
    for (std::size_t ax = 2; ok && ax < t.rank(); ++ax) ok = t.dim(ax) == first.dim(ax);
    if (!ok) {
      shape_fail("concat_channels",
                 "incompatible parts " + shape_str(first.shape()) + " and " + shape_str(t.shape()));
    }
    total_c += t.dim(1);
  }
  Shape shape = first.shape();
  shape[1] = total_c;
  std::vector<double> out(shape_numel(shape));
  std::size_t offset = 0;
  for (const auto& t : parts) {
    const std::size_t block = t.dim(1) * inner;
    auto td = t.data();
    for (std::size_t s = 0; s < n; ++s) {
      std::copy_n(td.data() + s * block, block, out.data() + s * total_c * inner + offset * inner);
    }
    offset += t.dim(1);
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return Tensor::make_result(std::move(shape), std::move(out), inputs, "concat_channels",
                             [inputs, n, inner, total_c](const Tensor& y) {
                               auto g = upstream(y);
                               std::size_t offset = 0;
                               for (const auto& t : inputs) {
                                 const std::size_t block = t.dim(1) * inner;
                                 if (auto gt = grad_sink(t); !gt.empty()) {
                                   for (std::size_t s = 0; s < n; ++s) {
                                     kernels::axpy(1.0,
                                                   g.subspan(s * total_c * inner + offset * inner, block),
                                                   gt.subspan(s * block, block));
                                   }
                                 }
                                 offset += t.dim(1);
                               }
                             });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank("global_avg_pool", x, 4);
  const auto [n, c, h, w] = dims4(x);
  const std::size_t plane = h * w;
  std::vector<double> out(n * c);
  for (std::size_t p = 0; p < n * c; ++p) {
    out[p] = kernels::sum(x.data().subspan(p * plane, plane)) / static_cast<double>(plane);
  }
  return Tensor::make_result({n, c}, std::move(out), {x}, "global_avg_pool",
                             [x, plane](const Tensor& y) {
                               auto gx = grad_sink(x);
                               if (gx.empty()) return;
                               auto g = upstream(y);
                               for (std::size_t p = 0; p < g.size(); ++p) {
                                 const double share = g[p] / static_cast<double>(plane);
                                 for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += share;
                               }
                             });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 2) shape_fail("batch_norm", "rank < 2: " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
  for (const Tensor* p : {&gamma, &beta}) {
    if (p->defined() && (p->rank() != 1 || p->dim(0) != c)) {
      shape_fail("batch_norm", "affine parameter " + shape_str(p->shape()) + " vs input " +
                                   shape_str(x.shape()));
    }
  }
  const double m = static_cast<double>(n * inner);
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(c);
  auto xd = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mu = 0.0;
    for (std::size_t s = 0; s < n; ++s) mu += kernels::sum(xd.subspan((s * c + ch) * inner, inner));
    mu /= m;
    double var = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double* src = xd.data() + (s * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) var += (src[i] - mu) * (src[i] - mu);
    }
    var /= m;
    inv_std[ch] = 1.0 / std::sqrt(var + eps);
    for (std::size_t s = 0; s < n; ++s) {
      const double* src = xd.data() + (s * c + ch) * inner;
      double* dst = xhat.data() + (s * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] = (src[i] - mu) * inv_std[ch];
    }
  }
  std::vector<double> out = xhat;
  if (gamma.defined() || beta.defined()) {
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double gm = gamma.defined() ? gamma.data()[ch] : 1.0;
        const double bt = beta.defined() ? beta.data()[ch] : 0.0;
        double* dst = out.data() + (s * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] = dst[i] * gm + bt;
      }
    }
  }
  std::vector<Tensor> inputs{x};
  if (gamma.defined()) inputs.push_back(gamma);
  if (beta.defined()) inputs.push_back(beta);
  return Tensor::make_result(
      x.shape(), std::move(out), std::move(inputs), "batch_norm",
      [x, gamma, beta, n, c, inner, m, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const Tensor& y) {
        auto g = upstream(y);
        auto gx = grad_sink(x);
        auto gg = grad_sink(gamma);
        auto gb = grad_sink(beta);
        std::vector<double> dxhat(inner);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double gm = gamma.defined() ? gamma.data()[ch] : 1.0;
          double sum_d = 0.0, sum_dx = 0.0, sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * c + ch) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_g += g[base + i];
              sum_gx += g[base + i] * xhat[base + i];
            }
          }
          sum_d = sum_g * gm;
          sum_dx = sum_gx * gm;
          if (!gg.empty()) gg[ch] += sum_gx;
          if (!gb.empty()) gb[ch] += sum_g;
          if (gx.empty()) continue;
          const double k = inv_std[ch] / m;
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * c + ch) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              const double d = g[base + i] * gm;
              gx[base + i] += k * (m * d - sum_d - xhat[base + i] * sum_dx);
            }
          }
        }
      });
}

Tensor softmax(const Tensor& x) {
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / len;
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xd.data() + r * len;
    double* dst = out.data() + r * len;
    const double mx = *std::max_element(src, src + len);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) z += (dst[i] = std::exp(src[i] - mx));
    for (std::size_t i = 0; i < len; ++i) dst[i] /= z;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, "softmax",
                             [x, len, rows](const Tensor& y) {
                               auto gx = grad_sink(x);
                               if (gx.empty()) return;
                               auto g = upstream(y);
                               auto yd = y.data();
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const double inner = kernels::dot(g.subspan(r * len, len),
                                                                   yd.subspan(r * len, len));
                                 for (std::size_t i = 0; i < len; ++i) {
                                   const std::size_t k = r * len + i;
                                   gx[k] += yd[k] * (g[k] - inner);
                                 }
                               }
                             });
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / len;
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xd.data() + r * len;
    double* dst = out.data() + r * len;
    const double mx = *std::max_element(src, src + len);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) z += std::exp(src[i] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t i = 0; i < len; ++i) dst[i] = src[i] - lse;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, "log_softmax",
                             [x, len, rows](const Tensor& y) {
                               auto gx = grad_sink(x);
                               if (gx.empty()) return;
                               auto g = upstream(y);
                               auto yd = y.data();
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const double total = kernels::sum(g.subspan(r * len, len));
                                 for (std::size_t i = 0; i < len; ++i) {
                                   const std::size_t k = r * len + i;
                                   gx[k] += g[k] - std::exp(yd[k]) * total;
                                 }
                               }
                             });
}

Tensor nll(const Tensor& log_probs, std::span<const int> labels) {
  require_rank("nll", log_probs, 2);
  const std::size_t n = log_probs.dim(0), classes = log_probs.dim(1);
  if (labels.size() != n) {
    shape_fail("nll", std::to_string(labels.size()) + " labels for input " +
                          shape_str(log_probs.shape()));
  }
  std::vector<std::size_t> picked(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::invalid_argument("nll: label " + std::to_string(labels[i]) +
                                  " outside class range [0, " + std::to_string(classes) + ")");
    }
    picked[i] = i * classes + static_cast<std::size_t>(labels[i]);
    total -= log_probs.data()[picked[i]];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return Tensor::make_result({1}, {total * inv_n}, {log_probs}, "nll",
                             [log_probs, picked = std::move(picked), inv_n](const Tensor& y) {
                               auto gx = grad_sink(log_probs);
                               if (gx.empty()) return;
                               const double g = upstream(y)[0];
                               for (auto k : picked) gx[k] -= g * inv_n;
                             });
}

Tensor scale_by(const Tensor& x, const Tensor& weights, std::size_t index) {
  if (index >= weights.numel()) {
    shape_fail("scale_by", "index " + std::to_string(index) + " outside weights " +
                               shape_str(weights.shape()));
  }
  const double factor = weights.data()[index];
  std::vector<double> out(x.numel());
  kernels::scale(factor, x.data(), out);
  return Tensor::make_result(x.shape(), std::move(out), {x, weights}, "scale_by",
                             [x, weights, index, factor](const Tensor& y) {
                               auto g = upstream(y);
                               if (auto gx = grad_sink(x); !gx.empty()) kernels::axpy(factor, g, gx);
                               if (auto gw = grad_sink(weights); !gw.empty()) {
                                 gw[index] += kernels::dot(g, x.data());
                               }
                             });
}

Tensor straight_through(std::span<const double> hard, const Tensor& soft) {
  if (hard.size() != soft.numel()) {
    shape_fail("straight_through", "hard length " + std::to_string(hard.size()) +
                                       " vs soft " + shape_str(soft.shape()));
  }
  return Tensor::make_result(soft.shape(), std::vector<double>(hard.begin(), hard.end()), {soft},
                             "straight_through", [soft](const Tensor& y) {
                               if (auto gs = grad_sink(soft); !gs.empty()) {
                                 kernels::axpy(1.0, upstream(y), gs);
                               }
                             });
}

}  // namespace gdas::ops
