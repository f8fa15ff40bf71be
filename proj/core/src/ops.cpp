#include "lnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "lnet/errors.hpp"

namespace lnet::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  int n, h, w, cin, k, stride, pad, ho, wo, cout;
  long rows() const { return static_cast<long>(n) * ho * wo; }
  long cols() const { return static_cast<long>(k) * k * cin; }
};

void im2col(const Tensor& x, const ConvGeometry& g, RowMat& cols) {
  cols.setZero(g.rows(), g.cols());
  for (int b = 0; b < g.n; ++b) {
    for (int oy = 0; oy < g.ho; ++oy) {
      for (int ox = 0; ox < g.wo; ++ox) {
        double* row = cols.data() + ((static_cast<long>(b) * g.ho + oy) * g.wo + ox) * g.cols();
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.w) continue;
            const double* src = x.data() + x.index(b, iy, ix, 0);
            std::copy(src, src + g.cin, row + (ky * g.k + kx) * g.cin);
          }
        }
      }
    }
  }
}

void col2im(const RowMat& dcols, const ConvGeometry& g, Tensor& dx) {
  for (int b = 0; b < g.n; ++b) {
    for (int oy = 0; oy < g.ho; ++oy) {
      for (int ox = 0; ox < g.wo; ++ox) {
        const double* row = dcols.data() + ((static_cast<long>(b) * g.ho + oy) * g.wo + ox) * g.cols();
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.w) continue;
            double* dst = dx.data() + dx.index(b, iy, ix, 0);
            const double* src = row + (ky * g.k + kx) * g.cin;
            for (int c = 0; c < g.cin; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

struct AxisTable {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

AxisTable bilinear_axis(int in, int factor) {
  const int out = in * factor;
  AxisTable t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) / factor - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    t.lo[o] = lo;
    t.hi[o] = std::min(lo + 1, in - 1);
    t.frac[o] = src - lo;
  }
  return t;
}

}  // namespace

Var conv2d(const Var& x, const Var& kernel, const Var& bias, int stride, int pad) {
  const Tensor& in = x->value;
  const Tensor& kv = kernel->value;
  const int k = kv.n();
  if (kv.h() != k) throw ShapeError("conv2d: kernel must be square");
  if (kv.w() != in.c()) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kv.w()) + " input channels, got " +
                     std::to_string(in.c()));
  }
  if (stride < 1 || pad < 0) throw ConfigError("conv2d: invalid stride/pad");
  ConvGeometry g{in.n(), in.h(), in.w(), in.c(), k, stride, pad, 0, 0, kv.c()};
  g.ho = (g.h + 2 * pad - k) / stride + 1;
  g.wo = (g.w + 2 * pad - k) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv2d: input smaller than kernel");
  if (bias && bias->value.size() != static_cast<std::size_t>(g.cout)) {
    throw ShapeError("conv2d: bias size mismatch");
  }

  // A 1x1 stride-1 convolution reads the input directly as its column matrix.
  const bool pointwise = (k == 1 && stride == 1 && pad == 0);
  auto cols = std::make_shared<RowMat>();
  if (!pointwise) im2col(in, g, *cols);

  Tensor out({g.n, g.ho, g.wo, g.cout});
  MapMat out_m(out.data(), g.rows(), g.cout);
  ConstMapMat w_m(kv.data(), g.cols(), g.cout);
  if (pointwise) {
    out_m.noalias() = ConstMapMat(in.data(), g.rows(), g.cols()) * w_m;
  } else {
    out_m.noalias() = (*cols) * w_m;
  }
  if (bias) {
    Eigen::Map<const Eigen::RowVectorXd> b_v(bias->value.data(), g.cout);
    out_m.rowwise() += b_v;
  }

  std::vector<Var> inputs{x, kernel};
  if (bias) inputs.push_back(bias);
  return make_node(std::move(out), std::move(inputs), [g, cols, pointwise](Node& self) {
    ConstMapMat dout(self.grad.data(), g.rows(), g.cout);
    Node& xn = *self.inputs[0];
    Node& kn = *self.inputs[1];
    if (kn.requires_grad) {
      MapMat dw(kn.grad_buffer().data(), g.cols(), g.cout);
      if (pointwise) {
        dw.noalias() += ConstMapMat(xn.value.data(), g.rows(), g.cols()).transpose() * dout;
      } else {
        dw.noalias() += cols->transpose() * dout;
      }
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Eigen::Map<Eigen::RowVectorXd> db(self.inputs[2]->grad_buffer().data(), g.cout);
      db.noalias() += dout.colwise().sum();
    }
    if (xn.requires_grad) {
      ConstMapMat w_m(kn.value.data(), g.cols(), g.cout);
      if (pointwise) {
        MapMat dx(xn.grad_buffer().data(), g.rows(), g.cols());
        dx.noalias() += dout * w_m.transpose();
      } else {
        RowMat dcols = dout * w_m.transpose();
        col2im(dcols, g, xn.grad_buffer());
      }
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(out), {x}, [](Node& self) {
    Node& xn = *self.inputs[0];
    Tensor& dx = xn.grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xn.value[i] > 0.0) dx[i] += self.grad[i];
    }
  });
}

Var silu(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.values()) v = v / (1.0 + std::exp(-v));
  return make_node(std::move(out), {x}, [](Node& self) {
    Node& xn = *self.inputs[0];
    Tensor& dx = xn.grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-xn.value[i]));
      dx[i] += self.grad[i] * s * (1.0 + xn.value[i] * (1.0 - s));
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return make_node(std::move(out), {x}, [](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double s = self.value[i];
      dx[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var upsample_bilinear(const Var& x, int factor) {
  if (factor < 1) throw ConfigError("upsample_bilinear: factor must be >= 1");
  if (factor == 1) return x;
  const Tensor& in = x->value;
  const int n = in.n(), h = in.h(), w = in.w(), c = in.c();
  auto ty = std::make_shared<AxisTable>(bilinear_axis(h, factor));
  auto tx = std::make_shared<AxisTable>(bilinear_axis(w, factor));
  const int ho = h * factor, wo = w * factor;
  Tensor out({n, ho, wo, c});
  for (int b = 0; b < n; ++b) {
    for (int oy = 0; oy < ho; ++oy) {
      const int y0 = ty->lo[oy], y1 = ty->hi[oy];
      const double fy = ty->frac[oy];
      for (int ox = 0; ox < wo; ++ox) {
        const int x0 = tx->lo[ox], x1 = tx->hi[ox];
        const double fx = tx->frac[ox];
        const double* p00 = in.data() + in.index(b, y0, x0, 0);
        const double* p01 = in.data() + in.index(b, y0, x1, 0);
        const double* p10 = in.data() + in.index(b, y1, x0, 0);
        const double* p11 = in.data() + in.index(b, y1, x1, 0);
        double* dst = out.data() + out.index(b, oy, ox, 0);
        for (int ch = 0; ch < c; ++ch) {
          // Lerp form keeps constant inputs exact.
          const double top = p00[ch] + fx * (p01[ch] - p00[ch]);
          const double bottom = p10[ch] + fx * (p11[ch] - p10[ch]);
          dst[ch] = top + fy * (bottom - top);
        }
      }
    }
  }
  return make_node(std::move(out), {x}, [ty, tx, ho, wo](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    const int n = dx.n(), c = dx.c();
    for (int b = 0; b < n; ++b) {
      for (int oy = 0; oy < ho; ++oy) {
        const int y0 = ty->lo[oy], y1 = ty->hi[oy];
        const double fy = ty->frac[oy];
        for (int ox = 0; ox < wo; ++ox) {
          const int x0 = tx->lo[ox], x1 = tx->hi[ox];
          const double fx = tx->frac[ox];
          const double* g = self.grad.data() + self.grad.index(b, oy, ox, 0);
          double* d00 = dx.data() + dx.index(b, y0, x0, 0);
          double* d01 = dx.data() + dx.index(b, y0, x1, 0);
          double* d10 = dx.data() + dx.index(b, y1, x0, 0);
          double* d11 = dx.data() + dx.index(b, y1, x1, 0);
          const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx, w10 = fy * (1 - fx), w11 = fy * fx;
          for (int ch = 0; ch < c; ++ch) {
            d00[ch] += w00 * g[ch];
            d01[ch] += w01 * g[ch];
            d10[ch] += w10 * g[ch];
            d11[ch] += w11 * g[ch];
          }
        }
      }
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  if (av.n() != bv.n() || av.h() != bv.h() || av.w() != bv.w()) {
    throw ShapeError("concat_channels: spatial mismatch " + av.shape().str() + " vs " + bv.shape().str());
  }
  const int ca = av.c(), cb = bv.c();
  Tensor out({av.n(), av.h(), av.w(), ca + cb});
  const std::size_t pixels = static_cast<std::size_t>(av.n()) * av.h() * av.w();
  for (std::size_t p = 0; p < pixels; ++p) {
    std::copy_n(av.data() + p * ca, ca, out.data() + p * (ca + cb));
    std::copy_n(bv.data() + p * cb, cb, out.data() + p * (ca + cb) + ca);
  }
  return make_node(std::move(out), {a, b}, [ca, cb, pixels](Node& self) {
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    if (an.requires_grad) {
      Tensor& da = an.grad_buffer();
      for (std::size_t p = 0; p < pixels; ++p) {
        const double* g = self.grad.data() + p * (ca + cb);
        for (int c = 0; c < ca; ++c) da[p * ca + c] += g[c];
      }
    }
    if (bn.requires_grad) {
      Tensor& db = bn.grad_buffer();
      for (std::size_t p = 0; p < pixels; ++p) {
        const double* g = self.grad.data() + p * (ca + cb) + ca;
        for (int c = 0; c < cb; ++c) db[p * cb + c] += g[c];
      }
    }
  });
}

Var max_pool(const Var& x, int k) {
  const Tensor& in = x->value;
  if (k < 1) throw ConfigError("max_pool: kernel must be >= 1");
  if (in.h() % k != 0 || in.w() % k != 0) {
    throw ShapeError("max_pool: side " + std::to_string(in.h()) + " not divisible by " + std::to_string(k));
  }
  if (k == 1) return x;
  const int n = in.n(), ho = in.h() / k, wo = in.w() / k, c = in.c();
  Tensor out({n, ho, wo, c});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (int b = 0; b < n; ++b) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        for (int ch = 0; ch < c; ++ch) {
          std::size_t best = in.index(b, oy * k, ox * k, ch);
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
              const std::size_t i = in.index(b, oy * k + dy, ox * k + dx, ch);
              if (in[i] > in[best]) best = i;
            }
          }
          const std::size_t o = out.index(b, oy, ox, ch);
          out[o] = in[best];
          (*argmax)[o] = best;
        }
      }
    }
  }
  return make_node(std::move(out), {x}, [argmax](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < argmax->size(); ++o) dx[(*argmax)[o]] += self.grad[o];
  });
}

Var global_max_pool(const Var& x) {
  const Tensor& in = x->value;
  const int n = in.n(), c = in.c();
  const std::size_t spatial = static_cast<std::size_t>(in.h()) * in.w();
  if (spatial == 0 || c == 0) throw InvalidInput("global_max_pool: empty spatial extent");
  Tensor out({n, 1, 1, c});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (int b = 0; b < n; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * spatial * c;
    for (int ch = 0; ch < c; ++ch) {
      std::size_t best = base + ch;
      for (std::size_t p = 1; p < spatial; ++p) {
        const std::size_t i = base + p * c + ch;
        if (in[i] > in[best]) best = i;
      }
      out[static_cast<std::size_t>(b) * c + ch] = in[best];
      (*argmax)[static_cast<std::size_t>(b) * c + ch] = best;
    }
  }
  return make_node(std::move(out), {x}, [argmax](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < argmax->size(); ++o) dx[(*argmax)[o]] += self.grad[o];
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& in = x->value;
  const int n = in.n(), c = in.c();
  const std::size_t spatial = static_cast<std::size_t>(in.h()) * in.w();
  if (spatial == 0) throw InvalidInput("global_avg_pool: empty spatial extent");
  Tensor out({n, 1, 1, c});
  for (int b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < spatial; ++p) {
      const double* src = in.data() + (static_cast<std::size_t>(b) * spatial + p) * c;
      for (int ch = 0; ch < c; ++ch) out[static_cast<std::size_t>(b) * c + ch] += src[ch];
    }
  }
  out *= 1.0 / static_cast<double>(spatial);
  return make_node(std::move(out), {x}, [spatial, c](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    const double scale = 1.0 / static_cast<double>(spatial);
    for (int b = 0; b < dx.n(); ++b) {
      const double* g = self.grad.data() + static_cast<std::size_t>(b) * c;
      for (std::size_t p = 0; p < spatial; ++p) {
        double* dst = dx.data() + (static_cast<std::size_t>(b) * spatial + p) * c;
        for (int ch = 0; ch < c; ++ch) dst[ch] += g[ch] * scale;
      }
    }
  });
}

Var channel_max(const Var& x) {
  const Tensor& in = x->value;
  const int c = in.c();
  if (c == 0) throw InvalidInput("channel_max: no channels");
  Tensor out({in.n(), in.h(), in.w(), 1});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t p = 0; p < out.size(); ++p) {
    std::size_t best = p * c;
    for (int ch = 1; ch < c; ++ch) {
      if (in[p * c + ch] > in[best]) best = p * c + ch;
    }
    out[p] = in[best];
    (*argmax)[p] = best;
  }
  return make_node(std::move(out), {x}, [argmax](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    for (std::size_t p = 0; p < argmax->size(); ++p) dx[(*argmax)[p]] += self.grad[p];
  });
}

Var broadcast_channels(const Var& x, int k) {
  const Tensor& in = x->value;
  if (in.c() != 1) throw ShapeError("broadcast_channels: expects a single channel");
  if (k < 1) throw ConfigError("broadcast_channels: k must be positive");
  Tensor out({in.n(), in.h(), in.w(), k});
  for (std::size_t p = 0; p < in.size(); ++p) std::fill_n(out.data() + p * k, k, in[p]);
  return make_node(std::move(out), {x}, [k](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    for (std::size_t p = 0; p < dx.size(); ++p) {
      double s = 0.0;
      for (int ch = 0; ch < k; ++ch) s += self.grad[p * k + ch];
      dx[p] += s;
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "mul");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    if (an.requires_grad) {
      Tensor& da = an.grad_buffer();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += self.grad[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      Tensor& db = bn.grad_buffer();
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += self.grad[i] * an.value[i];
    }
  });
}

Var lin_comb(double alpha, const Var& a, double beta, const Var& b) {
  require_same_shape(a->value, b->value, "lin_comb");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * a->value[i] + beta * b->value[i];
  return make_node(std::move(out), {a, b}, [alpha, beta](Node& self) {
    if (self.inputs[0]->requires_grad) {
      Tensor& da = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += alpha * self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& db = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += beta * self.grad[i];
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& in = x->value;
  if (in.h() != 1 || in.w() != 1) throw ShapeError("linear: expects (n,1,1,in) input");
  const int n = in.n(), cin = in.c(), cout = weight->value.c();
  if (weight->value.w() != cin) {
    throw ShapeError("linear: weight expects " + std::to_string(weight->value.w()) + " inputs, got " +
                     std::to_string(cin));
  }
  Tensor out({n, 1, 1, cout});
  MapMat out_m(out.data(), n, cout);
  out_m.noalias() = ConstMapMat(in.data(), n, cin) * ConstMapMat(weight->value.data(), cin, cout);
  if (bias) out_m.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias->value.data(), cout);
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  return make_node(std::move(out), std::move(inputs), [n, cin, cout](Node& self) {
    ConstMapMat dout(self.grad.data(), n, cout);
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    if (wn.requires_grad) {
      MapMat(wn.grad_buffer().data(), cin, cout).noalias() +=
          ConstMapMat(xn.value.data(), n, cin).transpose() * dout;
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Eigen::Map<Eigen::RowVectorXd>(self.inputs[2]->grad_buffer().data(), cout).noalias() +=
          dout.colwise().sum();
    }
    if (xn.requires_grad) {
      MapMat(xn.grad_buffer().data(), n, cin).noalias() +=
          dout * ConstMapMat(wn.value.data(), cin, cout).transpose();
    }
  });
}

Var softmax(const Var& x) {
  const Tensor& in = x->value;
  if (in.h() != 1 || in.w() != 1) throw ShapeError("softmax: expects (n,1,1,c) input");
  const int n = in.n(), c = in.c();
  Tensor out(in.shape());
  for (int b = 0; b < n; ++b) {
    const double* src = in.data() + static_cast<std::size_t>(b) * c;
    double* dst = out.data() + static_cast<std::size_t>(b) * c;
    const double mx = *std::max_element(src, src + c);
    double sum = 0.0;
    for (int i = 0; i < c; ++i) sum += (dst[i] = std::exp(src[i] - mx));
    for (int i = 0; i < c; ++i) dst[i] /= sum;
  }
  return make_node(std::move(out), {x}, [n, c](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    for (int b = 0; b < n; ++b) {
      const double* y = self.value.data() + static_cast<std::size_t>(b) * c;
      const double* g = self.grad.data() + static_cast<std::size_t>(b) * c;
      double dot = 0.0;
      for (int i = 0; i < c; ++i) dot += g[i] * y[i];
      for (int i = 0; i < c; ++i) dx[static_cast<std::size_t>(b) * c + i] += y[i] * (g[i] - dot);
    }
  });
}

}  // namespace lnet::ops
