#include "landseg/ad/ops.hpp"

#include <cmath>
#include <limits>

#include "landseg/core/fourier.hpp"

namespace landseg::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

void require(bool cond, const char* msg) {
    if (!cond) throw ValidationError(msg);
}

CMap as_mat(const TensorD& t, Eigen::Index rows, Eigen::Index cols) {
    return CMap(t.data.data(), rows, cols);
}

Map as_mat(TensorD& t, Eigen::Index rows, Eigen::Index cols) {
    return Map(t.data.data(), rows, cols);
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Var add(Graph& g, Var a, Var b) {
    require(g.val(a).same_shape(g.val(b)), "add: shape mismatch");
    TensorD out(g.val(a).shape);
    out.data = g.val(a).data + g.val(b).data;
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {a, b}, [a, b, self](Graph& gg) {
        const auto& go = gg.grad(self);
        if (gg.needs_grad(a)) gg.grad(a).data += go.data;
        if (gg.needs_grad(b)) gg.grad(b).data += go.data;
    });
}

Var sub(Graph& g, Var a, Var b) {
    require(g.val(a).same_shape(g.val(b)), "sub: shape mismatch");
    TensorD out(g.val(a).shape);
    out.data = g.val(a).data - g.val(b).data;
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {a, b}, [a, b, self](Graph& gg) {
        const auto& go = gg.grad(self);
        if (gg.needs_grad(a)) gg.grad(a).data += go.data;
        if (gg.needs_grad(b)) gg.grad(b).data -= go.data;
    });
}

Var mul(Graph& g, Var a, Var b) {
    require(g.val(a).same_shape(g.val(b)), "mul: shape mismatch");
    TensorD out(g.val(a).shape);
    out.data = g.val(a).data * g.val(b).data;
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {a, b}, [a, b, self](Graph& gg) {
        const auto& go = gg.grad(self);
        if (gg.needs_grad(a)) gg.grad(a).data += go.data * gg.val(b).data;
        if (gg.needs_grad(b)) gg.grad(b).data += go.data * gg.val(a).data;
    });
}

Var scale(Graph& g, Var a, double s) {
    TensorD out(g.val(a).shape);
    out.data = g.val(a).data * s;
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {a}, [a, s, self](Graph& gg) {
        if (gg.needs_grad(a)) gg.grad(a).data += gg.grad(self).data * s;
    });
}

Var add_scalar(Graph& g, Var a, double s) {
    TensorD out(g.val(a).shape);
    out.data = g.val(a).data + s;
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {a}, [a, self](Graph& gg) {
        if (gg.needs_grad(a)) gg.grad(a).data += gg.grad(self).data;
    });
}

Var sigmoid(Graph& g, Var x) {
    TensorD out(g.val(x).shape);
    out.data = 1.0 / (1.0 + (-g.val(x).data).exp());
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self](Graph& gg) {
        if (!gg.needs_grad(x)) return;
        const auto& y = gg.val(self).data;
        gg.grad(x).data += gg.grad(self).data * y * (1.0 - y);
    });
}

Var gelu(Graph& g, Var x) {
    const auto& xv = g.val(x).data;
    TensorD out(g.val(x).shape);
    for (Eigen::Index i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        out.data[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self](Graph& gg) {
        if (!gg.needs_grad(x)) return;
        const auto& xv2 = gg.val(x).data;
        auto& gx = gg.grad(x).data;
        const auto& go = gg.grad(self).data;
        for (Eigen::Index i = 0; i < xv2.size(); ++i) {
            const double v = xv2[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            gx[i] += go[i] * (cdf + v * pdf);
        }
    });
}

Var relu(Graph& g, Var x) {
    TensorD out(g.val(x).shape);
    out.data = g.val(x).data.max(0.0);
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self](Graph& gg) {
        if (!gg.needs_grad(x)) return;
        const auto& xv = gg.val(x).data;
        gg.grad(x).data += gg.grad(self).data * (xv > 0.0).cast<double>();
    });
}

Var mul_channel_gate(Graph& g, Var x, Var gate) {
    const TensorD& xv = g.val(x);
    const TensorD& gv = g.val(gate);
    require(xv.rank() == 3, "mul_channel_gate: x must be [C,H,W]");
    require(gv.numel() == xv.dim(0), "mul_channel_gate: gate length must equal channels");
    const int c = xv.dim(0);
    const Eigen::Index hw = xv.numel() / c;
    TensorD out(xv.shape);
    for (int k = 0; k < c; ++k)
        out.data.segment(k * hw, hw) = xv.data.segment(k * hw, hw) * gv.data[k];
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x, gate}, [x, gate, self, c, hw](Graph& gg) {
        const auto& go = gg.grad(self).data;
        if (gg.needs_grad(x)) {
            auto& gx = gg.grad(x).data;
            const auto& gv2 = gg.val(gate).data;
            for (int k = 0; k < c; ++k)
                gx.segment(k * hw, hw) += go.segment(k * hw, hw) * gv2[k];
        }
        if (gg.needs_grad(gate)) {
            auto& gG = gg.grad(gate).data;
            const auto& xv2 = gg.val(x).data;
            for (int k = 0; k < c; ++k)
                gG[k] += (go.segment(k * hw, hw) * xv2.segment(k * hw, hw)).sum();
        }
    });
}

Var mul_spatial_gate(Graph& g, Var x, Var gate) {
    const TensorD& xv = g.val(x);
    const TensorD& gv = g.val(gate);
    require(xv.rank() == 3, "mul_spatial_gate: x must be [C,H,W]");
    const int c = xv.dim(0);
    const Eigen::Index hw = xv.numel() / c;
    require(gv.numel() == hw, "mul_spatial_gate: gate must be [1,H,W] matching x");
    TensorD out(xv.shape);
    for (int k = 0; k < c; ++k)
        out.data.segment(k * hw, hw) = xv.data.segment(k * hw, hw) * gv.data;
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x, gate}, [x, gate, self, c, hw](Graph& gg) {
        const auto& go = gg.grad(self).data;
        if (gg.needs_grad(x)) {
            auto& gx = gg.grad(x).data;
            const auto& gv2 = gg.val(gate).data;
            for (int k = 0; k < c; ++k) gx.segment(k * hw, hw) += go.segment(k * hw, hw) * gv2;
        }
        if (gg.needs_grad(gate)) {
            auto& gG = gg.grad(gate).data;
            const auto& xv2 = gg.val(x).data;
            for (int k = 0; k < c; ++k) gG += go.segment(k * hw, hw) * xv2.segment(k * hw, hw);
        }
    });
}

Var reshape(Graph& g, Var x, std::vector<int> shape) {
    TensorD out = g.val(x).reshaped(std::move(shape));
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self](Graph& gg) {
        if (gg.needs_grad(x)) gg.grad(x).data += gg.grad(self).data;
    });
}

Var transpose2d(Graph& g, Var x) {
    const TensorD& xv = g.val(x);
    require(xv.rank() == 2, "transpose2d: rank-2 input required");
    const int m = xv.dim(0), n = xv.dim(1);
    TensorD out({n, m});
    as_mat(out, n, m) = as_mat(xv, m, n).transpose();
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self, m, n](Graph& gg) {
        if (!gg.needs_grad(x)) return;
        as_mat(gg.grad(x), m, n) += as_mat(gg.grad(self), n, m).transpose();
    });
}

Var matmul(Graph& g, Var a, Var b) {
    const TensorD& av = g.val(a);
    const TensorD& bv = g.val(b);
    require(av.rank() == 2 && bv.rank() == 2, "matmul: rank-2 inputs required");
    require(av.dim(1) == bv.dim(0), "matmul: inner dimension mismatch");
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    TensorD out({m, n});
    as_mat(out, m, n) = as_mat(av, m, k) * as_mat(bv, k, n);
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {a, b}, [a, b, self, m, k, n](Graph& gg) {
        const auto go = as_mat(gg.grad(self), m, n);
        if (gg.needs_grad(a))
            as_mat(gg.grad(a), m, k) += go * as_mat(gg.val(b), k, n).transpose();
        if (gg.needs_grad(b))
            as_mat(gg.grad(b), k, n) += as_mat(gg.val(a), m, k).transpose() * go;
    });
}

Var linear(Graph& g, Var x, Var w, Var b) {
    const TensorD& xv = g.val(x);
    const TensorD& wv = g.val(w);
    require(xv.rank() == 2 && wv.rank() == 2, "linear: rank-2 inputs required");
    require(xv.dim(1) == wv.dim(0), "linear: feature dimension mismatch");
    const int n = xv.dim(0), din = xv.dim(1), dout = wv.dim(1);
    TensorD out({n, dout});
    as_mat(out, n, dout) = as_mat(xv, n, din) * as_mat(wv, din, dout);
    if (b.valid()) {
        require(g.val(b).numel() == dout, "linear: bias size mismatch");
        as_mat(out, n, dout).rowwise() +=
            Eigen::Map<const Eigen::RowVectorXd>(g.val(b).data.data(), dout);
    }
    Var self{static_cast<int>(g.size())};
    std::vector<Var> parents = b.valid() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return g.make(std::move(out), std::move(parents),
                  [x, w, b, self, n, din, dout](Graph& gg) {
                      const auto go = as_mat(gg.grad(self), n, dout);
                      if (gg.needs_grad(x))
                          as_mat(gg.grad(x), n, din) +=
                              go * as_mat(gg.val(w), din, dout).transpose();
                      if (gg.needs_grad(w))
                          as_mat(gg.grad(w), din, dout) +=
                              as_mat(gg.val(x), n, din).transpose() * go;
                      if (b.valid() && gg.needs_grad(b))
                          Eigen::Map<Eigen::RowVectorXd>(gg.grad(b).data.data(), dout) +=
                              go.colwise().sum();
                  });
}

Var slice_cols(Graph& g, Var x, int c0, int c1) {
    const TensorD& xv = g.val(x);
    require(xv.rank() == 2, "slice_cols: rank-2 input required");
    require(0 <= c0 && c0 < c1 && c1 <= xv.dim(1), "slice_cols: bad column range");
    const int n = xv.dim(0), m = xv.dim(1), w = c1 - c0;
    TensorD out({n, w});
    as_mat(out, n, w) = as_mat(xv, n, m).middleCols(c0, w);
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self, n, m, c0, w](Graph& gg) {
        if (!gg.needs_grad(x)) return;
        as_mat(gg.grad(x), n, m).middleCols(c0, w) += as_mat(gg.grad(self), n, w);
    });
}

Var concat_cols(Graph& g, const std::vector<Var>& xs) {
    require(!xs.empty(), "concat_cols: empty input list");
    const int n = g.val(xs[0]).dim(0);
    int total = 0;
    for (Var v : xs) {
        require(g.val(v).rank() == 2 && g.val(v).dim(0) == n, "concat_cols: row mismatch");
        total += g.val(v).dim(1);
    }
    TensorD out({n, total});
    int off = 0;
    for (Var v : xs) {
        const int w = g.val(v).dim(1);
        as_mat(out, n, total).middleCols(off, w) = as_mat(g.val(v), n, w);
        off += w;
    }
    Var self{static_cast<int>(g.size())};
    std::vector<Var> parents = xs;
    return g.make(std::move(out), parents, [xs, self, n, total](Graph& gg) {
        const auto go = as_mat(gg.grad(self), n, total);
        int off2 = 0;
        for (Var v : xs) {
            const int w = gg.val(v).dim(1);
            if (gg.needs_grad(v)) as_mat(gg.grad(v), n, w) += go.middleCols(off2, w);
            off2 += w;
        }
    });
}

Var concat_channels(Graph& g, Var a, Var b) {
    const TensorD& av = g.val(a);
    const TensorD& bv = g.val(b);
    require(av.rank() == 3 && bv.rank() == 3, "concat_channels: [C,H,W] inputs required");
    require(av.dim(1) == bv.dim(1) && av.dim(2) == bv.dim(2),
            "concat_channels: spatial mismatch");
    TensorD out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
    out.data.head(av.numel()) = av.data;
    out.data.tail(bv.numel()) = bv.data;
    Var self{static_cast<int>(g.size())};
    const Eigen::Index na = av.numel(), nb = bv.numel();
    return g.make(std::move(out), {a, b}, [a, b, self, na, nb](Graph& gg) {
        const auto& go = gg.grad(self).data;
        if (gg.needs_grad(a)) gg.grad(a).data += go.head(na);
        if (gg.needs_grad(b)) gg.grad(b).data += go.tail(nb);
    });
}

Var softmax_rows(Graph& g, Var x) {
    const TensorD& xv = g.val(x);
    require(xv.rank() == 2, "softmax_rows: rank-2 input required");
    const int n = xv.dim(0), m = xv.dim(1);
    TensorD out({n, m});
    auto om = as_mat(out, n, m);
    auto xm = as_mat(xv, n, m);
    for (int i = 0; i < n; ++i) {
        const double mx = xm.row(i).maxCoeff();
        om.row(i) = (xm.row(i).array() - mx).exp();
        om.row(i) /= om.row(i).sum();
    }
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self, n, m](Graph& gg) {
        if (!gg.needs_grad(x)) return;
        const auto y = as_mat(gg.val(self), n, m);
        const auto go = as_mat(gg.grad(self), n, m);
        auto gx = as_mat(gg.grad(x), n, m);
        for (int i = 0; i < n; ++i) {
            const double dot = (go.row(i).array() * y.row(i).array()).sum();
            gx.row(i) += (y.row(i).array() * (go.row(i).array() - dot)).matrix();
        }
    });
}

Var softmax_cols(Graph& g, Var x) {
    const TensorD& xv = g.val(x);
    require(xv.rank() == 2, "softmax_cols: rank-2 input required");
    const int n = xv.dim(0), m = xv.dim(1);
    TensorD out({n, m});
    auto om = as_mat(out, n, m);
    auto xm = as_mat(xv, n, m);
    for (int j = 0; j < m; ++j) {
        const double mx = xm.col(j).maxCoeff();
        om.col(j) = (xm.col(j).array() - mx).exp();
        om.col(j) /= om.col(j).sum();
    }
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self, n, m](Graph& gg) {
        if (!gg.needs_grad(x)) return;
        const auto y = as_mat(gg.val(self), n, m);
        const auto go = as_mat(gg.grad(self), n, m);
        auto gx = as_mat(gg.grad(x), n, m);
        for (int j = 0; j < m; ++j) {
            const double dot = (go.col(j).array() * y.col(j).array()).sum();
            gx.col(j) += (y.col(j).array() * (go.col(j).array() - dot)).matrix();
        }
    });
}

Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps) {
    const TensorD& xv = g.val(x);
    require(xv.rank() == 2, "layer_norm: rank-2 input required");
    const int n = xv.dim(0), d = xv.dim(1);
    require(g.val(gamma).numel() == d && g.val(beta).numel() == d,
            "layer_norm: gamma/beta size mismatch");
    TensorD out({n, d});
    TensorD xhat({n, d});
    TensorD inv_sigma({n});
    auto xm = as_mat(xv, n, d);
    auto hm = as_mat(xhat, n, d);
    for (int i = 0; i < n; ++i) {
        const double mu = xm.row(i).mean();
        const double var = (xm.row(i).array() - mu).square().mean();
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma.data[i] = is;
        hm.row(i) = ((xm.row(i).array() - mu) * is).matrix();
    }
    auto om = as_mat(out, n, d);
    const Eigen::Map<const Eigen::RowVectorXd> gv(g.val(gamma).data.data(), d);
    const Eigen::Map<const Eigen::RowVectorXd> bv(g.val(beta).data.data(), d);
    om = (hm.array().rowwise() * gv.array()).rowwise() + bv.array();
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, self, n, d, xhat = std::move(xhat),
                   inv_sigma = std::move(inv_sigma)](Graph& gg) {
                      const auto go = as_mat(gg.grad(self), n, d);
                      const auto hm2 = as_mat(xhat, n, d);
                      const Eigen::Map<const Eigen::RowVectorXd> gv2(gg.val(gamma).data.data(), d);
                      if (gg.needs_grad(gamma))
                          Eigen::Map<Eigen::RowVectorXd>(gg.grad(gamma).data.data(), d) +=
                              (go.array() * hm2.array()).colwise().sum().matrix();
                      if (gg.needs_grad(beta))
                          Eigen::Map<Eigen::RowVectorXd>(gg.grad(beta).data.data(), d) +=
                              go.colwise().sum();
                      if (gg.needs_grad(x)) {
                          auto gx = as_mat(gg.grad(x), n, d);
                          for (int i = 0; i < n; ++i) {
                              Eigen::ArrayXd dh = go.row(i).array() * gv2.array();
                              const double m1 = dh.mean();
                              const double m2 = (dh * hm2.row(i).array().transpose()).mean();
                              gx.row(i) += (inv_sigma.data[i] *
                                            (dh - m1 - hm2.row(i).array().transpose() * m2))
                                               .matrix();
                          }
                      }
                  });
}

Var conv2d(Graph& g, Var x, Var w, Var b, int stride, int pad) {
    const TensorD& xv = g.val(x);
    const TensorD& wv = g.val(w);
    require(xv.rank() == 3, "conv2d: x must be [Cin,H,W]");
    require(wv.rank() == 4, "conv2d: w must be [Cout,Cin,kh,kw]");
    require(wv.dim(1) == xv.dim(0), "conv2d: input channel mismatch");
    const int cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    require((h + 2 * pad - kh) % stride == 0 && (wd + 2 * pad - kw) % stride == 0,
            "conv2d: geometry does not tile");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    const int krows = cin * kh * kw;
    const Eigen::Index ohw = static_cast<Eigen::Index>(oh) * ow;

    // im2col, then one GEMM.
    TensorD col({krows, static_cast<int>(ohw)});
    {
        auto cm = as_mat(col, krows, ohw);
        cm.setZero();
        for (int ci = 0; ci < cin; ++ci) {
            for (int di = 0; di < kh; ++di) {
                for (int dj = 0; dj < kw; ++dj) {
                    const int row = (ci * kh + di) * kw + dj;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride + di - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + dj - pad;
                            if (ix < 0 || ix >= wd) continue;
                            cm(row, oy * ow + ox) = xv.at(ci, iy, ix);
                        }
                    }
                }
            }
        }
    }
    TensorD out({cout, oh, ow});
    as_mat(out, cout, ohw) = as_mat(wv, cout, krows) * as_mat(col, krows, ohw);
    if (b.valid()) {
        require(g.val(b).numel() == cout, "conv2d: bias size mismatch");
        auto om = as_mat(out, cout, ohw);
        for (int co = 0; co < cout; ++co) om.row(co).array() += g.val(b).data[co];
    }
    Var self{static_cast<int>(g.size())};
    std::vector<Var> parents = b.valid() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return g.make(
        std::move(out), std::move(parents),
        [x, w, b, self, cin, h, wd, cout, kh, kw, stride, pad, oh, ow, krows, ohw,
         col = std::move(col)](Graph& gg) {
            const auto go = as_mat(gg.grad(self), cout, ohw);
            if (gg.needs_grad(w))
                as_mat(gg.grad(w), cout, krows) += go * as_mat(col, krows, ohw).transpose();
            if (b.valid() && gg.needs_grad(b)) {
                auto& gb = gg.grad(b).data;
                for (int co = 0; co < cout; ++co) gb[co] += go.row(co).sum();
            }
            if (gg.needs_grad(x)) {
                RowMat dcol = as_mat(gg.val(w), cout, krows).transpose() * go;
                TensorD& gx = gg.grad(x);
                for (int ci = 0; ci < cin; ++ci) {
                    for (int di = 0; di < kh; ++di) {
                        for (int dj = 0; dj < kw; ++dj) {
                            const int row = (ci * kh + di) * kw + dj;
                            for (int oy = 0; oy < oh; ++oy) {
                                const int iy = oy * stride + di - pad;
                                if (iy < 0 || iy >= h) continue;
                                for (int ox = 0; ox < ow; ++ox) {
                                    const int ix = ox * stride + dj - pad;
                                    if (ix < 0 || ix >= wd) continue;
                                    gx.at(ci, iy, ix) += dcol(row, oy * ow + ox);
                                }
                            }
                        }
                    }
                }
            }
        });
}

Var conv2d_transpose(Graph& g, Var x, Var w, Var b, int stride) {
    const TensorD& xv = g.val(x);
    const TensorD& wv = g.val(w);
    require(xv.rank() == 3, "conv2d_transpose: x must be [Cin,h,w]");
    require(wv.rank() == 4, "conv2d_transpose: w must be [Cin,Cout,k,k]");
    require(wv.dim(0) == xv.dim(0), "conv2d_transpose: input channel mismatch");
    require(wv.dim(2) == stride && wv.dim(3) == stride,
            "conv2d_transpose: kernel must equal stride");
    const int cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const int cout = wv.dim(1), k = stride;
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * wd;
    const int ckk = cout * k * k;

    // Y[(co*k+di)*k+dj, p] = sum_ci W[ci,(co,di,dj)] * X[ci,p]
    RowMat y = as_mat(wv, cin, ckk).transpose() * as_mat(xv, cin, hw);
    TensorD out({cout, h * k, wd * k});
    for (int co = 0; co < cout; ++co) {
        const double bias = b.valid() ? g.val(b).data[co] : 0.0;
        for (int oy = 0; oy < h * k; ++oy) {
            const int iy = oy / k, di = oy % k;
            for (int ox = 0; ox < wd * k; ++ox) {
                const int ix = ox / k, dj = ox % k;
                out.at(co, oy, ox) = y((co * k + di) * k + dj, iy * wd + ix) + bias;
            }
        }
    }
    Var self{static_cast<int>(g.size())};
    std::vector<Var> parents = b.valid() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return g.make(std::move(out), std::move(parents),
                  [x, w, b, self, cin, h, wd, cout, k, hw, ckk](Graph& gg) {
                      const TensorD& got = gg.grad(self);
                      RowMat dy(ckk, hw);
                      for (int co = 0; co < cout; ++co)
                          for (int oy = 0; oy < h * k; ++oy) {
                              const int iy = oy / k, di = oy % k;
                              for (int ox = 0; ox < wd * k; ++ox) {
                                  const int ix = ox / k, dj = ox % k;
                                  dy((co * k + di) * k + dj, iy * wd + ix) = got.at(co, oy, ox);
                              }
                          }
                      if (gg.needs_grad(x))
                          as_mat(gg.grad(x), cin, hw) += as_mat(gg.val(w), cin, ckk) * dy;
                      if (gg.needs_grad(w))
                          as_mat(gg.grad(w), cin, ckk) +=
                              as_mat(gg.val(x), cin, hw) * dy.transpose();
                      if (b.valid() && gg.needs_grad(b)) {
                          auto& gb = gg.grad(b).data;
                          for (int co = 0; co < cout; ++co) {
                              double s = 0.0;
                              for (int di = 0; di < k; ++di)
                                  for (int dj = 0; dj < k; ++dj)
                                      s += dy.row((co * k + di) * k + dj).sum();
                              gb[co] += s;
                          }
                      }
                  });
}

Var bilinear_resize(Graph& g, Var x, int out_h, int out_w) {
    const TensorD& xv = g.val(x);
    require(xv.rank() == 3, "bilinear_resize: x must be [C,H,W]");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    if (out_h == h && out_w == w) return x;

    struct Axis {
        std::vector<int> i0, i1;
        std::vector<double> f;
    };
    auto make_axis = [](int in, int out) {
        Axis a;
        a.i0.resize(static_cast<size_t>(out));
        a.i1.resize(static_cast<size_t>(out));
        a.f.resize(static_cast<size_t>(out));
        const double s = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            double src = (o + 0.5) * s - 0.5;
            src = std::min(std::max(src, 0.0), static_cast<double>(in - 1));
            const int lo = static_cast<int>(std::floor(src));
            a.i0[static_cast<size_t>(o)] = lo;
            a.i1[static_cast<size_t>(o)] = std::min(lo + 1, in - 1);
            a.f[static_cast<size_t>(o)] = src - lo;
        }
        return a;
    };
    Axis ay = make_axis(h, out_h), ax = make_axis(w, out_w);
    TensorD out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        auto src = xv.plane(ch);
        auto dst = out.plane(ch);
        for (int oy = 0; oy < out_h; ++oy) {
            const int y0 = ay.i0[static_cast<size_t>(oy)], y1 = ay.i1[static_cast<size_t>(oy)];
            const double fy = ay.f[static_cast<size_t>(oy)];
            for (int ox = 0; ox < out_w; ++ox) {
                const int x0 = ax.i0[static_cast<size_t>(ox)], x1 = ax.i1[static_cast<size_t>(ox)];
                const double fx = ax.f[static_cast<size_t>(ox)];
                dst(oy, ox) = (1 - fy) * ((1 - fx) * src(y0, x0) + fx * src(y0, x1)) +
                              fy * ((1 - fx) * src(y1, x0) + fx * src(y1, x1));
            }
        }
    }
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x},
                  [x, self, c, out_h, out_w, ay = std::move(ay), ax = std::move(ax)](Graph& gg) {
                      if (!gg.needs_grad(x)) return;
                      const TensorD& got = gg.grad(self);
                      TensorD& gx = gg.grad(x);
                      for (int ch = 0; ch < c; ++ch) {
                          auto dst = gx.plane(ch);
                          auto go = got.plane(ch);
                          for (int oy = 0; oy < out_h; ++oy) {
                              const int y0 = ay.i0[static_cast<size_t>(oy)];
                              const int y1 = ay.i1[static_cast<size_t>(oy)];
                              const double fy = ay.f[static_cast<size_t>(oy)];
                              for (int ox = 0; ox < out_w; ++ox) {
                                  const int x0 = ax.i0[static_cast<size_t>(ox)];
                                  const int x1 = ax.i1[static_cast<size_t>(ox)];
                                  const double fx = ax.f[static_cast<size_t>(ox)];
                                  const double v = go(oy, ox);
                                  dst(y0, x0) += (1 - fy) * (1 - fx) * v;
                                  dst(y0, x1) += (1 - fy) * fx * v;
                                  dst(y1, x0) += fy * (1 - fx) * v;
                                  dst(y1, x1) += fy * fx * v;
                              }
                          }
                      }
                  });
}

Var global_avg_pool(Graph& g, Var x) {
    const TensorD& xv = g.val(x);
    require(xv.rank() == 3, "global_avg_pool: x must be [C,H,W]");
    const int c = xv.dim(0);
    const Eigen::Index hw = xv.numel() / c;
    TensorD out({c});
    for (int k = 0; k < c; ++k) out.data[k] = xv.data.segment(k * hw, hw).mean();
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self, c, hw](Graph& gg) {
        if (!gg.needs_grad(x)) return;
        const auto& go = gg.grad(self).data;
        auto& gx = gg.grad(x).data;
        const double inv = 1.0 / static_cast<double>(hw);
        for (int k = 0; k < c; ++k) gx.segment(k * hw, hw) += go[k] * inv;
    });
}

Var global_max_pool(Graph& g, Var x) {
    const TensorD& xv = g.val(x);
    require(xv.rank() == 3, "global_max_pool: x must be [C,H,W]");
    const int c = xv.dim(0);
    const Eigen::Index hw = xv.numel() / c;
    TensorD out({c});
    std::vector<Eigen::Index> arg(static_cast<size_t>(c));
    for (int k = 0; k < c; ++k) {
        Eigen::Index idx = 0;
        out.data[k] = xv.data.segment(k * hw, hw).maxCoeff(&idx);
        arg[static_cast<size_t>(k)] = k * hw + idx;
    }
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self, c, arg = std::move(arg)](Graph& gg) {
        if (!gg.needs_grad(x)) return;
        const auto& go = gg.grad(self).data;
        auto& gx = gg.grad(x).data;
        for (int k = 0; k < c; ++k) gx[arg[static_cast<size_t>(k)]] += go[k];
    });
}

Var channel_max(Graph& g, Var x) {
    const TensorD& xv = g.val(x);
    require(xv.rank() == 3, "channel_max: x must be [C,H,W]");
    const int c = xv.dim(0);
    const Eigen::Index hw = xv.numel() / c;
    TensorD out({1, xv.dim(1), xv.dim(2)});
    std::vector<int> arg(static_cast<size_t>(hw));
    for (Eigen::Index p = 0; p < hw; ++p) {
        int best = 0;
        double bv = xv.data[p];
        for (int k = 1; k < c; ++k) {
            const double v = xv.data[k * hw + p];
            if (v > bv) {
                bv = v;
                best = k;
            }
        }
        out.data[p] = bv;
        arg[static_cast<size_t>(p)] = best;
    }
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self, hw, arg = std::move(arg)](Graph& gg) {
        if (!gg.needs_grad(x)) return;
        const auto& go = gg.grad(self).data;
        auto& gx = gg.grad(x).data;
        for (Eigen::Index p = 0; p < hw; ++p)
            gx[static_cast<Eigen::Index>(arg[static_cast<size_t>(p)]) * hw + p] += go[p];
    });
}

Var channel_mean(Graph& g, Var x) {
    const TensorD& xv = g.val(x);
    require(xv.rank() == 3, "channel_mean: x must be [C,H,W]");
    const int c = xv.dim(0);
    const Eigen::Index hw = xv.numel() / c;
    TensorD out({1, xv.dim(1), xv.dim(2)});
    out.data.setZero();
    for (int k = 0; k < c; ++k) out.data += xv.data.segment(k * hw, hw);
    out.data /= static_cast<double>(c);
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self, c, hw](Graph& gg) {
        if (!gg.needs_grad(x)) return;
        const auto& go = gg.grad(self).data;
        auto& gx = gg.grad(x).data;
        const double inv = 1.0 / c;
        for (int k = 0; k < c; ++k) gx.segment(k * hw, hw) += go * inv;
    });
}

Var sum_all(Graph& g, Var x) {
    TensorD out = TensorD::scalar(g.val(x).data.sum());
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self](Graph& gg) {
        if (gg.needs_grad(x)) gg.grad(x).data += gg.grad(self).data[0];
    });
}

Var mean_all(Graph& g, Var x) {
    const double inv = 1.0 / static_cast<double>(g.val(x).numel());
    TensorD out = TensorD::scalar(g.val(x).data.sum() * inv);
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self, inv](Graph& gg) {
        if (gg.needs_grad(x)) gg.grad(x).data += gg.grad(self).data[0] * inv;
    });
}

Var fourier_highpass_op(Graph& g, Var x, double mask_ratio) {
    const TensorD& xv = g.val(x);
    require(xv.rank() == 2, "fourier_highpass_op: x must be [H,W]");
    const int h = xv.dim(0), w = xv.dim(1);
    Eigen::MatrixXd in(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) in(r, c) = xv.at(r, c);
    Eigen::MatrixXd res = fourier_highpass(in, mask_ratio);
    TensorD out({h, w});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) out.at(r, c) = res(r, c);
    Var self{static_cast<int>(g.size())};
    return g.make(std::move(out), {x}, [x, self, h, w, mask_ratio](Graph& gg) {
        if (!gg.needs_grad(x)) return;
        const TensorD& go = gg.grad(self);
        Eigen::MatrixXd gm(h, w);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) gm(r, c) = go.at(r, c);
        // Self-adjoint linear map: pullback == forward map.
        Eigen::MatrixXd back = fourier_highpass(gm, mask_ratio);
        TensorD& gx = gg.grad(x);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) gx.at(r, c) += back(r, c);
    });
}

namespace {

struct MaskInfo {
    std::vector<Eigen::Index> valid;  // flat pixel indices with target != ignore
    const TensorI* target;
};

MaskInfo collect_valid(const TensorD& maps, const TensorI& target, int ignore_value,
                       const char* who) {
    require(maps.rank() == 3, "loss: maps must be [K,H,W]");
    require(target.rank() == 2 && target.dim(0) == maps.dim(1) && target.dim(1) == maps.dim(2),
            "loss: target shape mismatch");
    const int k = maps.dim(0);
    MaskInfo info;
    info.target = &target;
    for (Eigen::Index p = 0; p < target.numel(); ++p) {
        const int32_t t = target(p);
        if (t == ignore_value) continue;
        if (t < 0 || t >= k) throw ValidationError("loss: target class out of range");
        info.valid.push_back(p);
    }
    if (info.valid.empty())
        throw ValidationError(std::string(who) + ": all pixels ignored, loss undefined");
    return info;
}

}  // namespace

Var cross_entropy_masked(Graph& g, Var logits, const TensorI& target, int ignore_value) {
    const TensorD& zv = g.val(logits);
    MaskInfo info = collect_valid(zv, target, ignore_value, "cross_entropy");
    const int k = zv.dim(0);
    const Eigen::Index hw = zv.numel() / k;
    const double inv_n = 1.0 / static_cast<double>(info.valid.size());

    // Per-valid-pixel softmax probabilities, kept for the backward pass.
    TensorD probs({static_cast<int>(info.valid.size()), k});
    double loss = 0.0;
    for (size_t i = 0; i < info.valid.size(); ++i) {
        const Eigen::Index p = info.valid[i];
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) mx = std::max(mx, zv.data[c * hw + p]);
        double denom = 0.0;
        for (int c = 0; c < k; ++c) denom += std::exp(zv.data[c * hw + p] - mx);
        const double lse = mx + std::log(denom);
        for (int c = 0; c < k; ++c)
            probs.data[static_cast<Eigen::Index>(i) * k + c] =
                std::exp(zv.data[c * hw + p] - lse);
        loss += lse - zv.data[target(info.valid[i]) * hw + p];
    }
    TensorD out = TensorD::scalar(loss * inv_n);
    Var self{static_cast<int>(g.size())};
    TensorI tgt = target;
    return g.make(std::move(out), {logits},
                  [logits, self, k, hw, inv_n, info_valid = std::move(info.valid),
                   probs = std::move(probs), tgt = std::move(tgt)](Graph& gg) {
                      if (!gg.needs_grad(logits)) return;
                      const double go = gg.grad(self).data[0];
                      auto& gz = gg.grad(logits).data;
                      for (size_t i = 0; i < info_valid.size(); ++i) {
                          const Eigen::Index p = info_valid[i];
                          const int32_t y = tgt(p);
                          for (int c = 0; c < k; ++c) {
                              double d = probs.data[static_cast<Eigen::Index>(i) * k + c];
                              if (c == y) d -= 1.0;
                              gz[c * hw + p] += go * d * inv_n;
                          }
                      }
                  });
}

Var dice_multiclass_masked(Graph& g, Var probs, const TensorI& target, int ignore_value,
                           double eps) {
    const TensorD& pv = g.val(probs);
    MaskInfo info = collect_valid(pv, target, ignore_value, "dice");
    const int k = pv.dim(0);
    const Eigen::Index hw = pv.numel() / k;

    Eigen::ArrayXd inter = Eigen::ArrayXd::Zero(k);   // sum p*t
    Eigen::ArrayXd psum = Eigen::ArrayXd::Zero(k);    // sum p
    Eigen::ArrayXd tsum = Eigen::ArrayXd::Zero(k);    // sum t
    for (Eigen::Index p : info.valid) {
        const int32_t y = target(p);
        tsum[y] += 1.0;
        for (int c = 0; c < k; ++c) {
            const double pr = pv.data[c * hw + p];
            psum[c] += pr;
            if (c == y) inter[c] += pr;
        }
    }
    double loss = 0.0;
    for (int c = 0; c < k; ++c)
        loss += 1.0 - (2.0 * inter[c] + eps) / (psum[c] + tsum[c] + eps);
    loss /= k;
    TensorD out = TensorD::scalar(loss);
    Var self{static_cast<int>(g.size())};
    TensorI tgt = target;
    return g.make(std::move(out), {probs},
                  [probs, self, k, hw, eps, inter, psum, tsum,
                   info_valid = std::move(info.valid), tgt = std::move(tgt)](Graph& gg) {
                      if (!gg.needs_grad(probs)) return;
                      const double go = gg.grad(self).data[0] / k;
                      auto& gp = gg.grad(probs).data;
                      Eigen::ArrayXd denom = psum + tsum + eps;
                      Eigen::ArrayXd numer = 2.0 * inter + eps;
                      for (Eigen::Index p : info_valid) {
                          const int32_t y = tgt(p);
                          for (int c = 0; c < k; ++c) {
                              const double t = (c == y) ? 1.0 : 0.0;
                              // d(1 - numer/denom)/dp = (numer - 2*t*denom) / denom^2
                              gp[c * hw + p] +=
                                  go * (numer[c] - 2.0 * t * denom[c]) / (denom[c] * denom[c]);
                          }
                      }
                  });
}

Var bce_logits_masked(Graph& g, Var logits, const TensorI& target, int ignore_value) {
    const TensorD& zv = g.val(logits);
    MaskInfo info = collect_valid(zv, target, ignore_value, "bce");
    const int k = zv.dim(0);
    const Eigen::Index hw = zv.numel() / k;
    const double inv_n = 1.0 / static_cast<double>(info.valid.size());

    double loss = 0.0;
    for (Eigen::Index p : info.valid) {
        const int32_t yc = target(p);
        for (int c = 0; c < k; ++c) {
            const double z = zv.data[c * hw + p];
            const double y = (c == yc) ? 1.0 : 0.0;
            // stable: max(z,0) - z*y + log(1 + exp(-|z|))
            loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        }
    }
    TensorD out = TensorD::scalar(loss * inv_n);
    Var self{static_cast<int>(g.size())};
    TensorI tgt = target;
    return g.make(std::move(out), {logits},
                  [logits, self, k, hw, inv_n, info_valid = std::move(info.valid),
                   tgt = std::move(tgt)](Graph& gg) {
                      if (!gg.needs_grad(logits)) return;
                      const double go = gg.grad(self).data[0];
                      const auto& zv2 = gg.val(logits).data;
                      auto& gz = gg.grad(logits).data;
                      for (Eigen::Index p : info_valid) {
                          const int32_t yc = tgt(p);
                          for (int c = 0; c < k; ++c) {
                              const double z = zv2[c * hw + p];
                              const double y = (c == yc) ? 1.0 : 0.0;
                              const double s = 1.0 / (1.0 + std::exp(-z));
                              gz[c * hw + p] += go * (s - y) * inv_n;
                          }
                      }
                  });
}

Var binary_dice_masked(Graph& g, Var probs, const TensorI& target, int ignore_value,
                       double eps) {
    const TensorD& pv = g.val(probs);
    MaskInfo info = collect_valid(pv, target, ignore_value, "binary_dice");
    const int k = pv.dim(0);
    const Eigen::Index hw = pv.numel() / k;

    Eigen::ArrayXd inter = Eigen::ArrayXd::Zero(k);
    Eigen::ArrayXd psum = Eigen::ArrayXd::Zero(k);
    Eigen::ArrayXd tsum = Eigen::ArrayXd::Zero(k);
    for (Eigen::Index p : info.valid) {
        const int32_t y = target(p);
        tsum[y] += 1.0;
        for (int c = 0; c < k; ++c) {
            const double pr = pv.data[c * hw + p];
            psum[c] += pr;
            if (c == y) inter[c] += pr;
        }
    }
    double loss = 0.0;
    for (int c = 0; c < k; ++c)
        loss += 1.0 - (2.0 * inter[c] + eps) / (psum[c] + tsum[c] + eps);
    TensorD out = TensorD::scalar(loss);
    Var self{static_cast<int>(g.size())};
    TensorI tgt = target;
    return g.make(std::move(out), {probs},
                  [probs, self, k, hw, eps, inter, psum, tsum,
                   info_valid = std::move(info.valid), tgt = std::move(tgt)](Graph& gg) {
                      if (!gg.needs_grad(probs)) return;
                      const double go = gg.grad(self).data[0];
                      auto& gp = gg.grad(probs).data;
                      Eigen::ArrayXd denom = psum + tsum + eps;
                      Eigen::ArrayXd numer = 2.0 * inter + eps;
                      for (Eigen::Index p : info_valid) {
                          const int32_t y = tgt(p);
                          for (int c = 0; c < k; ++c) {
                              const double t = (c == y) ? 1.0 : 0.0;
                              gp[c * hw + p] +=
                                  go * (numer[c] - 2.0 * t * denom[c]) / (denom[c] * denom[c]);
                          }
                      }
                  });
}

}  // namespace landseg::ad
