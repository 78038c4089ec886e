#include "irff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "irff/kernels.hpp"

IRFF_BEGIN_NAMESPACE

using autograd::make_result;
using autograd::Node;

namespace {

std::size_t pooled_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    auto padded = static_cast<long long>(in) + 2 * static_cast<long long>(pad);
    if (padded < static_cast<long long>(kernel)) return 0;
    return static_cast<std::size_t>((padded - static_cast<long long>(kernel)) / static_cast<long long>(stride)) + 1;
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
    if (x.rank() != rank) {
        throw ShapeError(std::string(op) + " expects a rank-" + std::to_string(rank) + " tensor, got " +
                         shape_str(x.shape()));
    }
}

bool is_unary(ElementwiseKind k) {
    return k == ElementwiseKind::relu || k == ElementwiseKind::sigmoid || k == ElementwiseKind::neg ||
           k == ElementwiseKind::scale;
}

Tensor binary(ElementwiseKind kind, const Tensor& a, const Tensor& b) {
    const auto na = a.numel();
    const auto nb = b.numel();
    if (a.shape() != b.shape() && na != 1 && nb != 1) {
        throw ShapeError("elementwise shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const Shape& out_shape = (na >= nb) ? a.shape() : b.shape();
    const auto n = std::max(na, nb);
    const auto sa = na == 1 ? 0 : 1;
    const auto sb = nb == 1 ? 0 : 1;
    auto av = a.data();
    auto bv = b.data();
    std::vector<real> out(n);
    switch (kind) {
        case ElementwiseKind::add:
            for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] + bv[i * sb];
            break;
        case ElementwiseKind::sub:
            for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] - bv[i * sb];
            break;
        case ElementwiseKind::mul:
            for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] * bv[i * sb];
            break;
        case ElementwiseKind::div:
            for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] / bv[i * sb];
            break;
        default:
            throw UsageError("not a binary elementwise kind");
    }
    return make_result(out_shape, std::move(out), {a, b}, [kind, n, sa, sb](Node& self) {
        const auto& g = self.grad;
        const auto& x = self.parents[0]->value;
        const auto& y = self.parents[1]->value;
        real* ga = self.parent_grad(0);
        real* gb = self.parent_grad(1);
        for (std::size_t i = 0; i < n; ++i) {
            const real xi = x[i * sa];
            const real yi = y[i * sb];
            switch (kind) {
                case ElementwiseKind::add:
                    if (ga) ga[i * sa] += g[i];
                    if (gb) gb[i * sb] += g[i];
                    break;
                case ElementwiseKind::sub:
                    if (ga) ga[i * sa] += g[i];
                    if (gb) gb[i * sb] -= g[i];
                    break;
                case ElementwiseKind::mul:
                    if (ga) ga[i * sa] += g[i] * yi;
                    if (gb) gb[i * sb] += g[i] * xi;
                    break;
                case ElementwiseKind::div:
                    if (ga) ga[i * sa] += g[i] / yi;
                    if (gb) gb[i * sb] -= g[i] * xi / (yi * yi);
                    break;
                default:
                    break;
            }
        }
    });
}

Tensor unary(ElementwiseKind kind, const Tensor& a, real factor) {
    auto av = a.data();
    const auto n = a.numel();
    std::vector<real> out(n);
    switch (kind) {
        case ElementwiseKind::relu:
            for (std::size_t i = 0; i < n; ++i) out[i] = av[i] > real(0) ? av[i] : real(0);
            break;
        case ElementwiseKind::sigmoid:
            for (std::size_t i = 0; i < n; ++i) out[i] = real(1) / (real(1) + std::exp(-av[i]));
            break;
        case ElementwiseKind::neg:
            for (std::size_t i = 0; i < n; ++i) out[i] = -av[i];
            break;
        case ElementwiseKind::scale:
            for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * factor;
            break;
        default:
            throw UsageError("not a unary elementwise kind");
    }
    return make_result(a.shape(), std::move(out), {a}, [kind, factor](Node& self) {
        real* ga = self.parent_grad(0);
        if (!ga) return;
        const auto& g = self.grad;
        const auto& x = self.parents[0]->value;
        const auto& y = self.value;
        const auto n = g.size();
        switch (kind) {
            case ElementwiseKind::relu:
                for (std::size_t i = 0; i < n; ++i)
                    if (x[i] > real(0)) ga[i] += g[i];
                break;
            case ElementwiseKind::sigmoid:
                for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i] * (real(1) - y[i]);
                break;
            case ElementwiseKind::neg:
                for (std::size_t i = 0; i < n; ++i) ga[i] -= g[i];
                break;
            case ElementwiseKind::scale:
                for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * factor;
                break;
            default:
                break;
        }
    });
}

// Splits a shape around `axis` into (outer, axis length, inner) extents.
struct AxisView {
    std::size_t outer = 1, length = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
    v.length = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
    return v;
}

// Unfolds x: [C, H, W] into [C*k*k, Ho*Wo] patches.
void im2col(const real* x, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t ho, std::size_t wo, real* col) {
    const std::size_t hw_out = ho * wo;
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                real* dst = col + ((ci * k + ky) * k + kx) * hw_out;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long long iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
                    real* row = dst + oy * wo;
                    if (iy < 0 || iy >= static_cast<long long>(h)) {
                        std::fill(row, row + wo, real(0));
                        continue;
                    }
                    const real* src = x + (ci * h + static_cast<std::size_t>(iy)) * w;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const long long ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad);
                        row[ox] = (ix < 0 || ix >= static_cast<long long>(w)) ? real(0) : src[ix];
                    }
                }
            }
        }
    }
}

void col2im(const real* col, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t ho, std::size_t wo, real* x) {
    const std::size_t hw_out = ho * wo;
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const real* src = col + ((ci * k + ky) * k + kx) * hw_out;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long long iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
                    if (iy < 0 || iy >= static_cast<long long>(h)) continue;
                    real* dst = x + (ci * h + static_cast<std::size_t>(iy)) * w;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const long long ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad);
                        if (ix >= 0 && ix < static_cast<long long>(w)) dst[ix] += src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const std::optional<Tensor>& b, real factor) {
    if (is_unary(kind)) return unary(kind, a, factor);
    if (!b) throw UsageError("binary elementwise op requires a second operand");
    return binary(kind, a, *b);
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(ElementwiseKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(ElementwiseKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(ElementwiseKind::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(ElementwiseKind::div, a, b); }
Tensor relu(const Tensor& x) { return unary(ElementwiseKind::relu, x, real(1)); }
Tensor sigmoid(const Tensor& x) { return unary(ElementwiseKind::sigmoid, x, real(1)); }
Tensor neg(const Tensor& x) { return unary(ElementwiseKind::neg, x, real(1)); }
Tensor scale(const Tensor& x, real factor) { return unary(ElementwiseKind::scale, x, factor); }

Tensor add_scalar(const Tensor& x, real value) {
    auto xv = x.data();
    std::vector<real> out(xv.begin(), xv.end());
    for (auto& v : out) v += value;
    return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
        real* gx = self.parent_grad(0);
        if (!gx) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    });
}

Tensor log(const Tensor& x) {
    auto xv = x.data();
    std::vector<real> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::log(xv[i]);
    return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
        real* gx = self.parent_grad(0);
        if (!gx) return;
        const auto& xs = self.parents[0]->value;
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] / xs[i];
    });
}

Tensor clamp(const Tensor& x, real lo, real hi) {
    auto xv = x.data();
    std::vector<real> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::clamp(xv[i], lo, hi);
    return make_result(x.shape(), std::move(out), {x}, [lo, hi](Node& self) {
        real* gx = self.parent_grad(0);
        if (!gx) return;
        const auto& xs = self.parents[0]->value;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (xs[i] >= lo && xs[i] <= hi) gx[i] += self.grad[i];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    std::vector<real> out(m * n);
    kernels::gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data(), false);
    return make_result({m, n}, std::move(out), {a, b}, [m, n, k](Node& self) {
        const real* g = self.grad.data();
        if (real* ga = self.parent_grad(0))  // dA = dC * B^T
            kernels::gemm(false, true, m, k, n, g, self.parents[1]->value.data(), ga, true);
        if (real* gb = self.parent_grad(1))  // dB = A^T * dC
            kernels::gemm(true, false, k, n, m, self.parents[0]->value.data(), g, gb, true);
    });
}

Tensor transpose(const Tensor& x) {
    require_rank(x, 2, "transpose");
    const auto r = x.dim(0), c = x.dim(1);
    auto xv = x.data();
    std::vector<real> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
    return make_result({c, r}, std::move(out), {x}, [r, c](Node& self) {
        real* gx = self.parent_grad(0);
        if (!gx) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    auto xv = x.data();
    return make_result(std::move(shape), std::vector<real>(xv.begin(), xv.end()), {x}, [](Node& self) {
        real* gx = self.parent_grad(0);
        if (!gx) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const std::optional<Tensor>& b, std::size_t stride,
              std::size_t pad) {
    require_rank(x, 3, "conv2d input");
    require_rank(w, 4, "conv2d weight");
    const auto cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const auto cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin) {
        throw ShapeError("conv2d channel mismatch: input " + shape_str(x.shape()) + ", weight " +
                         shape_str(w.shape()));
    }
    if (w.dim(3) != k) throw ShapeError("conv2d requires a square kernel");
    if (stride < 1) throw ShapeError("conv2d stride must be >= 1");
    if (b && (b->rank() != 1 || b->dim(0) != cout)) throw ShapeError("conv2d bias must have shape [Cout]");
    const auto ho = pooled_size(h, k, stride, pad);
    const auto wo = pooled_size(wd, k, stride, pad);
    if (ho < 1 || wo < 1) throw ShapeError("conv2d output would be empty for input " + shape_str(x.shape()));

    const auto hw = ho * wo;
    const auto patch = cin * k * k;
    const bool pointwise = (k == 1 && stride == 1 && pad == 0);
    auto col = std::make_shared<std::vector<real>>();
    const real* col_ptr = x.data().data();
    if (!pointwise) {
        col->resize(patch * hw);
        im2col(x.data().data(), cin, h, wd, k, stride, pad, ho, wo, col->data());
        col_ptr = col->data();
    }
    std::vector<real> out(cout * hw);
    kernels::gemm(false, false, cout, hw, patch, w.data().data(), col_ptr, out.data(), false);
    if (b) {
        auto bv = b->data();
        for (std::size_t co = 0; co < cout; ++co) {
            real* row = out.data() + co * hw;
            for (std::size_t i = 0; i < hw; ++i) row[i] += bv[co];
        }
    }
    std::vector<Tensor> parents{x, w};
    if (b) parents.push_back(*b);
    const bool has_bias = b.has_value();
    return make_result({cout, ho, wo}, std::move(out), std::move(parents),
                       [=](Node& self) {
                           const real* g = self.grad.data();
                           const real* cols = pointwise ? self.parents[0]->value.data() : col->data();
                           if (real* gw = self.parent_grad(1))  // dW = dY * col^T
                               kernels::gemm(false, true, cout, patch, hw, g, cols, gw, true);
                           if (real* gx = self.parent_grad(0)) {
                               const real* wv = self.parents[1]->value.data();
                               if (pointwise) {
                                   kernels::gemm(true, false, cin, hw, cout, wv, g, gx, true);
                               } else {
                                   std::vector<real> dcol(patch * hw);
                                   kernels::gemm(true, false, patch, hw, cout, wv, g, dcol.data(), false);
                                   col2im(dcol.data(), cin, h, wd, k, stride, pad, ho, wo, gx);
                               }
                           }
                           if (has_bias) {
                               if (real* gb = self.parent_grad(2)) {
                                   for (std::size_t co = 0; co < cout; ++co) {
                                       double acc = 0.0;
                                       for (std::size_t i = 0; i < hw; ++i) acc += g[co * hw + i];
                                       gb[co] += static_cast<real>(acc);
                                   }
                               }
                           }
                       });
}

Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad, real pad_value) {
    require_rank(x, 3, "maxpool2d");
    if (kernel < 1 || stride < 1) throw ShapeError("maxpool2d kernel and stride must be >= 1");
    const auto c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const auto ho = pooled_size(h, kernel, stride, pad);
    const auto wo = pooled_size(w, kernel, stride, pad);
    if (ho < 1 || wo < 1) throw ShapeError("maxpool2d output would be empty for input " + shape_str(x.shape()));
    auto xv = x.data();
    std::vector<real> out(c * ho * wo);
    // Flat source index of the winning cell, or -1 when a padded cell wins.
    auto argmax = std::make_shared<std::vector<long long>>(out.size());
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                real best = 0;
                long long best_idx = -2;
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    const long long iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const long long ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad);
                        const bool inside = iy >= 0 && iy < static_cast<long long>(h) && ix >= 0 &&
                                            ix < static_cast<long long>(w);
                        const long long idx =
                            inside ? static_cast<long long>((ci * h + static_cast<std::size_t>(iy)) * w +
                                                            static_cast<std::size_t>(ix))
                                   : -1;
                        const real v = inside ? xv[static_cast<std::size_t>(idx)] : pad_value;
                        if (best_idx == -2 || v > best) {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                const auto o = (ci * ho + oy) * wo + ox;
                out[o] = best;
                (*argmax)[o] = best_idx;
            }
        }
    }
    return make_result({c, ho, wo}, std::move(out), {x}, [argmax](Node& self) {
        real* gx = self.parent_grad(0);
        if (!gx) return;
        for (std::size_t o = 0; o < self.grad.size(); ++o) {
            const auto idx = (*argmax)[o];
            if (idx >= 0) gx[idx] += self.grad[o];
        }
    });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) throw ShapeError("softmax axis out of range for " + shape_str(x.shape()));
    const auto v = axis_view(x.shape(), axis);
    auto xv = x.data();
    std::vector<real> out(xv.size());
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
            const std::size_t base = o * v.length * v.inner + in;
            real mx = xv[base];
            for (std::size_t i = 1; i < v.length; ++i) mx = std::max(mx, xv[base + i * v.inner]);
            double total = 0.0;
            if (v.inner == 1) {
                real* row = out.data() + base;
                for (std::size_t i = 0; i < v.length; ++i) row[i] = xv[base + i] - mx;
                kernels::exp_inplace(row, v.length);
                total = kernels::sum(row, v.length);
            } else {
                for (std::size_t i = 0; i < v.length; ++i) {
                    const real e = std::exp(xv[base + i * v.inner] - mx);
                    out[base + i * v.inner] = e;
                    total += e;
                }
            }
            const real inv = static_cast<real>(1.0 / total);
            for (std::size_t i = 0; i < v.length; ++i) out[base + i * v.inner] *= inv;
        }
    }
    return make_result(x.shape(), std::move(out), {x}, [v](Node& self) {
        real* gx = self.parent_grad(0);
        if (!gx) return;
        const auto& y = self.value;
        const auto& g = self.grad;
        for (std::size_t o = 0; o < v.outer; ++o) {
            for (std::size_t in = 0; in < v.inner; ++in) {
                const std::size_t base = o * v.length * v.inner + in;
                double dot = 0.0;
                if (v.inner == 1) {
                    dot = kernels::dot(g.data() + base, y.data() + base, v.length);
                } else {
                    for (std::size_t i = 0; i < v.length; ++i) dot += g[base + i * v.inner] * y[base + i * v.inner];
                }
                const real d = static_cast<real>(dot);
                for (std::size_t i = 0; i < v.length; ++i) {
                    const auto idx = base + i * v.inner;
                    gx[idx] += y[idx] * (g[idx] - d);
                }
            }
        }
    });
}

Tensor reduce(ReduceKind kind, const Tensor& x, const std::vector<std::size_t>& axes) {
    const auto& shape = x.shape();
    std::vector<bool> reduced(shape.size(), false);
    for (auto a : axes) {
        if (a >= shape.size()) throw ShapeError("reduce axis out of range for " + shape_str(shape));
        reduced[a] = true;
    }
    Shape out_shape;
    std::size_t count = 1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (reduced[i])
            count *= shape[i];
        else
            out_shape.push_back(shape[i]);
    }
    if (out_shape.empty()) out_shape = {1};

    // Maps every input element to its output slot.
    auto slot = std::make_shared<std::vector<std::size_t>>(x.numel());
    {
        std::vector<std::size_t> idx(shape.size(), 0);
        for (std::size_t flat = 0; flat < x.numel(); ++flat) {
            std::size_t o = 0;
            for (std::size_t d = 0; d < shape.size(); ++d)
                if (!reduced[d]) o = o * shape[d] + idx[d];
            (*slot)[flat] = o;
            for (std::size_t d = shape.size(); d-- > 0;) {
                if (++idx[d] < shape[d]) break;
                idx[d] = 0;
            }
        }
    }
    auto xv = x.data();
    std::vector<double> acc(shape_numel(out_shape), 0.0);
    for (std::size_t i = 0; i < xv.size(); ++i) acc[(*slot)[i]] += xv[i];
    const double factor = kind == ReduceKind::mean ? 1.0 / static_cast<double>(count) : 1.0;
    std::vector<real> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<real>(acc[i] * factor);
    const real gscale = static_cast<real>(factor);
    return make_result(std::move(out_shape), std::move(out), {x}, [slot, gscale](Node& self) {
        real* gx = self.parent_grad(0);
        if (!gx) return;
        for (std::size_t i = 0; i < slot->size(); ++i) gx[i] += self.grad[(*slot)[i]] * gscale;
    });
}

Tensor sum(const Tensor& x) {
    std::vector<std::size_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    return reduce(ReduceKind::sum, x, axes);
}

Tensor mean(const Tensor& x) {
    std::vector<std::size_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    return reduce(ReduceKind::mean, x, axes);
}

namespace {

struct LerpTap {
    std::size_t i0, i1;
    real w1;
};

std::vector<LerpTap> lerp_taps(std::size_t in, std::size_t out) {
    std::vector<LerpTap> taps(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        if (src < 0) src = 0;
        auto i0 = static_cast<std::size_t>(src);
        if (i0 > in - 1) i0 = in - 1;
        const auto i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, static_cast<real>(src - static_cast<double>(i0))};
    }
    return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_rank(x, 3, "resize_bilinear");
    if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear output size must be >= 1");
    const auto c = x.dim(0), h = x.dim(1), w = x.dim(2);
    auto ty = std::make_shared<std::vector<LerpTap>>(lerp_taps(h, out_h));
    auto tx = std::make_shared<std::vector<LerpTap>>(lerp_taps(w, out_w));
    auto xv = x.data();
    std::vector<real> out(c * out_h * out_w);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const real* src = xv.data() + ci * h * w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto& a = (*ty)[oy];
            const real* r0 = src + a.i0 * w;
            const real* r1 = src + a.i1 * w;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const auto& b = (*tx)[ox];
                const real top = (real(1) - b.w1) * r0[b.i0] + b.w1 * r0[b.i1];
                const real bot = (real(1) - b.w1) * r1[b.i0] + b.w1 * r1[b.i1];
                out[(ci * out_h + oy) * out_w + ox] = (real(1) - a.w1) * top + a.w1 * bot;
            }
        }
    }
    return make_result({c, out_h, out_w}, std::move(out), {x}, [=](Node& self) {
        real* gx = self.parent_grad(0);
        if (!gx) return;
        for (std::size_t ci = 0; ci < c; ++ci) {
            real* dst = gx + ci * h * w;
            for (std::size_t oy = 0; oy < out_h; ++oy) {
                const auto& a = (*ty)[oy];
                for (std::size_t ox = 0; ox < out_w; ++ox) {
                    const auto& b = (*tx)[ox];
                    const real g = self.grad[(ci * out_h + oy) * out_w + ox];
                    const real gt = (real(1) - a.w1) * g;
                    const real gb = a.w1 * g;
                    dst[a.i0 * w + b.i0] += (real(1) - b.w1) * gt;
                    dst[a.i0 * w + b.i1] += b.w1 * gt;
                    dst[a.i1 * w + b.i0] += (real(1) - b.w1) * gb;
                    dst[a.i1 * w + b.i1] += b.w1 * gb;
                }
            }
        }
    });
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
    if (xs.empty()) throw ShapeError("concat requires at least one tensor");
    const auto& first = xs.front().shape();
    if (axis >= first.size()) throw ShapeError("concat axis out of range");
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& t : xs) {
        if (t.rank() != first.size()) throw ShapeError("concat rank mismatch");
        for (std::size_t d = 0; d < first.size(); ++d) {
            if (d != axis && t.dim(d) != first[d]) {
                throw ShapeError("concat shape mismatch: " + shape_str(first) + " vs " + shape_str(t.shape()));
            }
        }
        out_shape[axis] += t.dim(axis);
    }
    const auto v = axis_view(out_shape, axis);
    std::vector<std::size_t> widths;
    for (const auto& t : xs) widths.push_back(t.dim(axis) * v.inner);
    const std::size_t row = v.length * v.inner;
    std::vector<real> out(shape_numel(out_shape));
    std::size_t offset = 0;
    for (std::size_t t = 0; t < xs.size(); ++t) {
        auto src = xs[t].data();
        for (std::size_t o = 0; o < v.outer; ++o)
            std::copy_n(src.data() + o * widths[t], widths[t], out.data() + o * row + offset);
        offset += widths[t];
    }
    return make_result(std::move(out_shape), std::move(out), xs, [v, widths, row](Node& self) {
        std::size_t off = 0;
        for (std::size_t t = 0; t < widths.size(); ++t) {
            if (real* gx = self.parent_grad(t)) {
                for (std::size_t o = 0; o < v.outer; ++o) {
                    const real* src = self.grad.data() + o * row + off;
                    real* dst = gx + o * widths[t];
                    for (std::size_t i = 0; i < widths[t]; ++i) dst[i] += src[i];
                }
            }
            off += widths[t];
        }
    });
}

std::vector<Tensor> split(const Tensor& x, std::size_t parts, std::size_t axis) {
    if (axis >= x.rank()) throw ShapeError("split axis out of range");
    if (parts < 1 || x.dim(axis) % parts != 0) {
        throw ConfigError("cannot split axis of length " + std::to_string(x.dim(axis)) + " into " +
                          std::to_string(parts) + " equal parts");
    }
    const auto v = axis_view(x.shape(), axis);
    const std::size_t piece = v.length / parts;
    const std::size_t width = piece * v.inner;
    const std::size_t row = v.length * v.inner;
    Shape piece_shape = x.shape();
    piece_shape[axis] = piece;
    std::vector<Tensor> result;
    result.reserve(parts);
    auto xv = x.data();
    for (std::size_t p = 0; p < parts; ++p) {
        std::vector<real> out(v.outer * width);
        for (std::size_t o = 0; o < v.outer; ++o)
            std::copy_n(xv.data() + o * row + p * width, width, out.data() + o * width);
        result.push_back(make_result(piece_shape, std::move(out), {x}, [v, p, width, row](Node& self) {
            real* gx = self.parent_grad(0);
            if (!gx) return;
            for (std::size_t o = 0; o < v.outer; ++o) {
                const real* src = self.grad.data() + o * width;
                real* dst = gx + o * row + p * width;
                for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
            }
        }));
    }
    return result;
}

Tensor concat_channels(const std::vector<Tensor>& xs) { return concat(xs, 0); }
std::vector<Tensor> split_channels(const Tensor& x, std::size_t parts) { return split(x, parts, 0); }

Tensor linear(const Tensor& x, const Tensor& w, const std::optional<Tensor>& b) {
    require_rank(x, 2, "linear input");
    require_rank(w, 2, "linear weight");
    const auto n = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
    if (w.dim(0) != in) {
        throw ShapeError("linear shape mismatch: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    }
    if (b && (b->rank() != 1 || b->dim(0) != out_dim)) throw ShapeError("linear bias must have shape [out]");
    std::vector<real> out(n * out_dim);
    kernels::gemm(false, false, n, out_dim, in, x.data().data(), w.data().data(), out.data(), false);
    if (b) {
        auto bv = b->data();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < out_dim; ++j) out[r * out_dim + j] += bv[j];
    }
    std::vector<Tensor> parents{x, w};
    if (b) parents.push_back(*b);
    const bool has_bias = b.has_value();
    return make_result({n, out_dim}, std::move(out), std::move(parents), [=](Node& self) {
        const real* g = self.grad.data();
        if (real* gx = self.parent_grad(0))
            kernels::gemm(false, true, n, in, out_dim, g, self.parents[1]->value.data(), gx, true);
        if (real* gw = self.parent_grad(1))
            kernels::gemm(true, false, in, out_dim, n, self.parents[0]->value.data(), g, gw, true);
        if (has_bias) {
            if (real* gb = self.parent_grad(2)) {
                for (std::size_t j = 0; j < out_dim; ++j) {
                    double acc = 0.0;
                    for (std::size_t r = 0; r < n; ++r) acc += g[r * out_dim + j];
                    gb[j] += static_cast<real>(acc);
                }
            }
        }
    });
}

namespace {

// `groups` contiguous runs of `len` values, each normalized independently.
struct NormLayout {
    std::size_t groups, len;
    bool rows;  // true: rows of [N, C], affine index = e; false: channels, affine index = q
};

Tensor normalize(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps, NormLayout layout) {
    const auto groups = layout.groups, len = layout.len;
    auto xv = x.data();
    auto gv = gamma.data();
    auto bv = beta.data();
    auto xhat = std::make_shared<std::vector<real>>(xv.size());
    auto rstd = std::make_shared<std::vector<real>>(groups);
    std::vector<real> out(xv.size());
    for (std::size_t q = 0; q < groups; ++q) {
        const real* src = xv.data() + q * len;
        double m = 0.0;
        for (std::size_t e = 0; e < len; ++e) m += src[e];
        m /= static_cast<double>(len);
        double var = 0.0;
        for (std::size_t e = 0; e < len; ++e) var += (src[e] - m) * (src[e] - m);
        var /= static_cast<double>(len);
        const double rs = 1.0 / std::sqrt(var + static_cast<double>(eps));
        (*rstd)[q] = static_cast<real>(rs);
        for (std::size_t e = 0; e < len; ++e) {
            const real xh = static_cast<real>((src[e] - m) * rs);
            (*xhat)[q * len + e] = xh;
            const std::size_t p = layout.rows ? e : q;
            out[q * len + e] = xh * gv[p] + bv[p];
        }
    }
    return make_result(x.shape(), std::move(out), {x, gamma, beta}, [=](Node& self) {
        const auto& g = self.grad;
        const auto& gam = self.parents[1]->value;
        real* gx = self.parent_grad(0);
        real* gg = self.parent_grad(1);
        real* gb = self.parent_grad(2);
        for (std::size_t q = 0; q < groups; ++q) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t e = 0; e < len; ++e) {
                const std::size_t i = q * len + e;
                const std::size_t p = layout.rows ? e : q;
                const double d = static_cast<double>(g[i]) * gam[p];
                sum_d += d;
                sum_dx += d * (*xhat)[i];
                if (gg) gg[p] += g[i] * (*xhat)[i];
                if (gb) gb[p] += g[i];
            }
            if (!gx) continue;
            const double mean_d = sum_d / static_cast<double>(len);
            const double mean_dx = sum_dx / static_cast<double>(len);
            const double rs = (*rstd)[q];
            for (std::size_t e = 0; e < len; ++e) {
                const std::size_t i = q * len + e;
                const std::size_t p = layout.rows ? e : q;
                const double d = static_cast<double>(g[i]) * gam[p];
                gx[i] += static_cast<real>(rs * (d - mean_d - (*xhat)[i] * mean_dx));
            }
        }
    });
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
    require_rank(x, 2, "layer_norm");
    const auto c = x.dim(1);
    if (gamma.numel() != c || beta.numel() != c) throw ShapeError("layer_norm parameters must have shape [C]");
    return normalize(x, gamma, beta, eps, {x.dim(0), c, true});
}

Tensor channel_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
    require_rank(x, 3, "channel_norm");
    const auto c = x.dim(0);
    if (gamma.numel() != c || beta.numel() != c) throw ShapeError("channel_norm parameters must have shape [C]");
    return normalize(x, gamma, beta, eps, {c, x.dim(1) * x.dim(2), false});
}

IRFF_END_NAMESPACE
