#include "radiodun/nn/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace radiodun::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!(a.shape() == b.shape()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape().str() +
                                    " vs " + b.shape().str());
}

void check_scalar(const Tensor& s, const char* op) {
    if (s.numel() != 1)
        throw std::invalid_argument(std::string(op) + ": expected a scalar tensor, got " +
                                    s.shape().str());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Node *an = a.raw(), *bn = b.raw();
    return make_op(a.shape(), a.value() + b.value(), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) an->grad_buffer() += self.grad;
        if (bn->requires_grad) bn->grad_buffer() += self.grad;
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Node *an = a.raw(), *bn = b.raw();
    return make_op(a.shape(), a.value() - b.value(), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) an->grad_buffer() += self.grad;
        if (bn->requires_grad) bn->grad_buffer() -= self.grad;
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Node *an = a.raw(), *bn = b.raw();
    return make_op(a.shape(), a.value() * b.value(), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) an->grad_buffer() += self.grad * bn->value;
        if (bn->requires_grad) bn->grad_buffer() += self.grad * an->value;
    });
}

Tensor scale(const Tensor& a, double k) {
    Node* an = a.raw();
    return make_op(a.shape(), a.value() * k, {a}, [an, k](Node& self) {
        if (an->requires_grad) an->grad_buffer() += self.grad * k;
    });
}

Tensor mul_scalar_t(const Tensor& a, const Tensor& s) {
    check_scalar(s, "mul_scalar_t");
    Node *an = a.raw(), *sn = s.raw();
    return make_op(a.shape(), a.value() * s.value()(0), {a, s}, [an, sn](Node& self) {
        if (an->requires_grad) an->grad_buffer() += self.grad * sn->value(0);
        if (sn->requires_grad) sn->grad_buffer()(0) += (self.grad * an->value).sum();
    });
}

Tensor sub_scalar_t(const Tensor& a, const Tensor& s) {
    check_scalar(s, "sub_scalar_t");
    Node *an = a.raw(), *sn = s.raw();
    return make_op(a.shape(), a.value() - s.value()(0), {a, s}, [an, sn](Node& self) {
        if (an->requires_grad) an->grad_buffer() += self.grad;
        if (sn->requires_grad) sn->grad_buffer()(0) -= self.grad.sum();
    });
}

Tensor add_scalar_t(const Tensor& a, const Tensor& s) {
    check_scalar(s, "add_scalar_t");
    Node *an = a.raw(), *sn = s.raw();
    return make_op(a.shape(), a.value() + s.value()(0), {a, s}, [an, sn](Node& self) {
        if (an->requires_grad) an->grad_buffer() += self.grad;
        if (sn->requires_grad) sn->grad_buffer()(0) += self.grad.sum();
    });
}

Tensor mul_channel(const Tensor& x, const Tensor& s) {
    const Shape xs = x.shape();
    if (s.shape().n != xs.n || s.shape().c != xs.c || s.shape().h != 1 || s.shape().w != 1)
        throw std::invalid_argument("mul_channel: weight must be {N,C,1,1}");
    const long hw = static_cast<long>(xs.h) * xs.w;
    Array out(static_cast<long>(xs.numel()));
    for (long nc = 0; nc < static_cast<long>(xs.n) * xs.c; ++nc)
        out.segment(nc * hw, hw) = x.value().segment(nc * hw, hw) * s.value()(nc);
    Node *xn = x.raw(), *sn = s.raw();
    return make_op(xs, std::move(out), {x, s}, [xn, sn, hw](Node& self) {
        const long count = static_cast<long>(self.shape.n) * self.shape.c;
        for (long nc = 0; nc < count; ++nc) {
            if (xn->requires_grad)
                xn->grad_buffer().segment(nc * hw, hw) += self.grad.segment(nc * hw, hw) * sn->value(nc);
            if (sn->requires_grad)
                sn->grad_buffer()(nc) +=
                    (self.grad.segment(nc * hw, hw) * xn->value.segment(nc * hw, hw)).sum();
        }
    });
}

Tensor mul_spatial(const Tensor& x, const Tensor& s) {
    const Shape xs = x.shape();
    if (s.shape().n != xs.n || s.shape().c != 1 || s.shape().h != xs.h || s.shape().w != xs.w)
        throw std::invalid_argument("mul_spatial: weight must be {N,1,H,W}");
    const long hw = static_cast<long>(xs.h) * xs.w;
    Array out(static_cast<long>(xs.numel()));
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            out.segment((static_cast<long>(n) * xs.c + c) * hw, hw) =
                x.value().segment((static_cast<long>(n) * xs.c + c) * hw, hw) *
                s.value().segment(static_cast<long>(n) * hw, hw);
    Node *xn = x.raw(), *sn = s.raw();
    return make_op(xs, std::move(out), {x, s}, [xn, sn, hw](Node& self) {
        for (int n = 0; n < self.shape.n; ++n)
            for (int c = 0; c < self.shape.c; ++c) {
                const long xoff = (static_cast<long>(n) * self.shape.c + c) * hw;
                const long soff = static_cast<long>(n) * hw;
                if (xn->requires_grad)
                    xn->grad_buffer().segment(xoff, hw) +=
                        self.grad.segment(xoff, hw) * sn->value.segment(soff, hw);
                if (sn->requires_grad)
                    sn->grad_buffer().segment(soff, hw) +=
                        self.grad.segment(xoff, hw) * xn->value.segment(xoff, hw);
            }
    });
}

Tensor sigmoid(const Tensor& a) {
    Array out(static_cast<long>(a.numel()));
    for (long i = 0; i < out.size(); ++i) {
        const double x = a.value()(i);
        out(i) = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    Node* an = a.raw();
    return make_op(a.shape(), std::move(out), {a}, [an](Node& self) {
        if (an->requires_grad) an->grad_buffer() += self.grad * self.value * (1.0 - self.value);
    });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    Array out(static_cast<long>(a.numel()));
    for (long i = 0; i < out.size(); ++i) {
        const double x = a.value()(i);
        out(i) = x >= 0.0 ? x : slope * x;
    }
    Node* an = a.raw();
    return make_op(a.shape(), std::move(out), {a}, [an, slope](Node& self) {
        if (!an->requires_grad) return;
        Array& g = an->grad_buffer();
        for (long i = 0; i < self.grad.size(); ++i)
            g(i) += self.grad(i) * (an->value(i) >= 0.0 ? 1.0 : slope);
    });
}

Tensor softplus(const Tensor& a) {
    Array out(static_cast<long>(a.numel()));
    for (long i = 0; i < out.size(); ++i) {
        const double x = a.value()(i);
        if (x > 30.0)
            out(i) = x;
        else if (x < -30.0)
            out(i) = std::exp(x);
        else
            out(i) = std::log1p(std::exp(x));
    }
    Node* an = a.raw();
    return make_op(a.shape(), std::move(out), {a}, [an](Node& self) {
        if (!an->requires_grad) return;
        Array& g = an->grad_buffer();
        for (long i = 0; i < self.grad.size(); ++i) {
            const double x = an->value(i);
            const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            g(i) += self.grad(i) * sig;
        }
    });
}

Tensor soft_threshold_t(const Tensor& z, const Tensor& eps) {
    check_scalar(eps, "soft_threshold_t");
    const double e = eps.value()(0);
    if (e < 0.0) throw std::invalid_argument("soft_threshold_t: negative epsilon");
    Array out(static_cast<long>(z.numel()));
    for (long i = 0; i < out.size(); ++i) {
        const double v = z.value()(i);
        const double mag = std::abs(v) - e;
        out(i) = mag > 0.0 ? (v > 0.0 ? mag : -mag) : 0.0;
    }
    Node *zn = z.raw(), *en = eps.raw();
    return make_op(z.shape(), std::move(out), {z, eps}, [zn, en, e](Node& self) {
        for (long i = 0; i < self.grad.size(); ++i) {
            const double v = zn->value(i);
            if (std::abs(v) > e) {  // subgradient 0 at the kink
                if (zn->requires_grad) zn->grad_buffer()(i) += self.grad(i);
                if (en->requires_grad) en->grad_buffer()(0) -= (v > 0.0 ? 1.0 : -1.0) * self.grad(i);
            }
        }
    });
}

Tensor mean_all(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    Node* an = a.raw();
    return make_op(Shape{1, 1, 1, 1}, Array::Constant(1, a.value().mean()), {a},
                   [an, inv](Node& self) {
                       if (an->requires_grad) an->grad_buffer() += self.grad(0) * inv;
                   });
}

Tensor sum_all(const Tensor& a) {
    Node* an = a.raw();
    return make_op(Shape{1, 1, 1, 1}, Array::Constant(1, a.value().sum()), {a}, [an](Node& self) {
        if (an->requires_grad) an->grad_buffer() += self.grad(0);
    });
}

Tensor global_avg_pool(const Tensor& x) {
    const Shape s = x.shape();
    const long hw = static_cast<long>(s.h) * s.w;
    const long count = static_cast<long>(s.n) * s.c;
    Array out(count);
    for (long nc = 0; nc < count; ++nc) out(nc) = x.value().segment(nc * hw, hw).mean();
    Node* xn = x.raw();
    return make_op(Shape{s.n, s.c, 1, 1}, std::move(out), {x}, [xn, hw, count](Node& self) {
        if (!xn->requires_grad) return;
        for (long nc = 0; nc < count; ++nc)
            xn->grad_buffer().segment(nc * hw, hw) += self.grad(nc) / static_cast<double>(hw);
    });
}

Tensor global_max_pool(const Tensor& x) {
    const Shape s = x.shape();
    const long hw = static_cast<long>(s.h) * s.w;
    const long count = static_cast<long>(s.n) * s.c;
    Array out(count);
    auto argmax = std::make_shared<std::vector<long>>(static_cast<size_t>(count));
    for (long nc = 0; nc < count; ++nc) {
        long best = 0;
        for (long i = 1; i < hw; ++i)
            if (x.value()(nc * hw + i) > x.value()(nc * hw + best)) best = i;
        (*argmax)[static_cast<size_t>(nc)] = nc * hw + best;
        out(nc) = x.value()(nc * hw + best);
    }
    Node* xn = x.raw();
    return make_op(Shape{s.n, s.c, 1, 1}, std::move(out), {x}, [xn, argmax, count](Node& self) {
        if (!xn->requires_grad) return;
        for (long nc = 0; nc < count; ++nc)
            xn->grad_buffer()((*argmax)[static_cast<size_t>(nc)]) += self.grad(nc);
    });
}

Tensor channel_mean(const Tensor& x) {
    const Shape s = x.shape();
    const long hw = static_cast<long>(s.h) * s.w;
    Array out = Array::Zero(static_cast<long>(s.n) * hw);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            out.segment(static_cast<long>(n) * hw, hw) +=
                x.value().segment((static_cast<long>(n) * s.c + c) * hw, hw);
    out /= static_cast<double>(s.c);
    Node* xn = x.raw();
    return make_op(Shape{s.n, 1, s.h, s.w}, std::move(out), {x}, [xn, hw](Node& self) {
        if (!xn->requires_grad) return;
        const int C = xn->shape.c;
        for (int n = 0; n < self.shape.n; ++n)
            for (int c = 0; c < C; ++c)
                xn->grad_buffer().segment((static_cast<long>(n) * C + c) * hw, hw) +=
                    self.grad.segment(static_cast<long>(n) * hw, hw) / static_cast<double>(C);
    });
}

Tensor channel_max(const Tensor& x) {
    const Shape s = x.shape();
    const long hw = static_cast<long>(s.h) * s.w;
    Array out(static_cast<long>(s.n) * hw);
    auto argmax = std::make_shared<std::vector<long>>(static_cast<size_t>(s.n) * hw);
    for (int n = 0; n < s.n; ++n)
        for (long p = 0; p < hw; ++p) {
            long best_c = 0;
            double best = x.value()((static_cast<long>(n) * s.c) * hw + p);
            for (int c = 1; c < s.c; ++c) {
                const double v = x.value()((static_cast<long>(n) * s.c + c) * hw + p);
                if (v > best) {
                    best = v;
                    best_c = c;
                }
            }
            out(static_cast<long>(n) * hw + p) = best;
            (*argmax)[static_cast<size_t>(n) * hw + p] = (static_cast<long>(n) * s.c + best_c) * hw + p;
        }
    Node* xn = x.raw();
    return make_op(Shape{s.n, 1, s.h, s.w}, std::move(out), {x}, [xn, argmax](Node& self) {
        if (!xn->requires_grad) return;
        for (long i = 0; i < self.grad.size(); ++i)
            xn->grad_buffer()((*argmax)[static_cast<size_t>(i)]) += self.grad(i);
    });
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input list");
    const Shape first = xs[0].shape();
    int total_c = 0;
    for (const Tensor& t : xs) {
        const Shape s = t.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w)
            throw std::invalid_argument("concat_channels: mismatched N/H/W");
        total_c += s.c;
    }
    const long hw = static_cast<long>(first.h) * first.w;
    const Shape out_shape{first.n, total_c, first.h, first.w};
    Array out(static_cast<long>(out_shape.numel()));
    for (int n = 0; n < first.n; ++n) {
        long dst_c = 0;
        for (const Tensor& t : xs) {
            const long block = static_cast<long>(t.shape().c) * hw;
            out.segment((static_cast<long>(n) * total_c + dst_c) * hw, block) =
                t.value().segment(static_cast<long>(n) * block, block);
            dst_c += t.shape().c;
        }
    }
    std::vector<Node*> nodes;
    std::vector<int> chans;
    for (const Tensor& t : xs) {
        nodes.push_back(t.raw());
        chans.push_back(t.shape().c);
    }
    return make_op(out_shape, std::move(out), xs, [nodes, chans, hw, total_c](Node& self) {
        for (int n = 0; n < self.shape.n; ++n) {
            long src_c = 0;
            for (size_t i = 0; i < nodes.size(); ++i) {
                const long block = static_cast<long>(chans[i]) * hw;
                if (nodes[i]->requires_grad)
                    nodes[i]->grad_buffer().segment(static_cast<long>(n) * block, block) +=
                        self.grad.segment((static_cast<long>(n) * total_c + src_c) * hw, block);
                src_c += chans[i];
            }
        }
    });
}

Tensor reshape(const Tensor& x, Shape s) {
    if (s.numel() != x.numel())
        throw std::invalid_argument("reshape: element count mismatch " + x.shape().str() + " -> " +
                                    s.str());
    Node* xn = x.raw();
    return make_op(s, x.value(), {x}, [xn](Node& self) {
        if (xn->requires_grad) xn->grad_buffer() += self.grad;
    });
}

Tensor upsample_nearest2x(const Tensor& x) {
    const Shape s = x.shape();
    const Shape os{s.n, s.c, 2 * s.h, 2 * s.w};
    Array out(static_cast<long>(os.numel()));
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int h = 0; h < s.h; ++h)
                for (int w = 0; w < s.w; ++w) {
                    const double v = x.value()(static_cast<long>(offset(s, n, c, h, w)));
                    out(static_cast<long>(offset(os, n, c, 2 * h, 2 * w))) = v;
                    out(static_cast<long>(offset(os, n, c, 2 * h, 2 * w + 1))) = v;
                    out(static_cast<long>(offset(os, n, c, 2 * h + 1, 2 * w))) = v;
                    out(static_cast<long>(offset(os, n, c, 2 * h + 1, 2 * w + 1))) = v;
                }
    Node* xn = x.raw();
    return make_op(os, std::move(out), {x}, [xn, s, os](Node& self) {
        if (!xn->requires_grad) return;
        Array& g = xn->grad_buffer();
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int h = 0; h < s.h; ++h)
                    for (int w = 0; w < s.w; ++w)
                        g(static_cast<long>(offset(s, n, c, h, w))) +=
                            self.grad(static_cast<long>(offset(os, n, c, 2 * h, 2 * w))) +
                            self.grad(static_cast<long>(offset(os, n, c, 2 * h, 2 * w + 1))) +
                            self.grad(static_cast<long>(offset(os, n, c, 2 * h + 1, 2 * w))) +
                            self.grad(static_cast<long>(offset(os, n, c, 2 * h + 1, 2 * w + 1)));
    });
}

Tensor transpose_last2(const Tensor& x) {
    const Shape s = x.shape();
    if (s.c != 1) throw std::invalid_argument("transpose_last2: expects {N,1,P,Q}");
    const Shape os{s.n, 1, s.w, s.h};
    Array out(static_cast<long>(os.numel()));
    const long pq = static_cast<long>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        ConstRowMap src(x.value().data() + static_cast<long>(n) * pq, s.h, s.w);
        RowMap dst(out.data() + static_cast<long>(n) * pq, s.w, s.h);
        dst = src.transpose();
    }
    Node* xn = x.raw();
    return make_op(os, std::move(out), {x}, [xn, s, pq](Node& self) {
        if (!xn->requires_grad) return;
        for (int n = 0; n < s.n; ++n) {
            ConstRowMap g(self.grad.data() + static_cast<long>(n) * pq, s.w, s.h);
            RowMap dst(xn->grad_buffer().data() + static_cast<long>(n) * pq, s.h, s.w);
            dst += g.transpose();
        }
    });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    const Shape as = a.shape(), bs = b.shape();
    if (as.c != 1 || bs.c != 1 || as.n != bs.n || as.w != bs.h)
        throw std::invalid_argument("bmm: incompatible shapes " + as.str() + " x " + bs.str());
    const Shape os{as.n, 1, as.h, bs.w};
    Array out(static_cast<long>(os.numel()));
    for (int n = 0; n < as.n; ++n) {
        ConstRowMap am(a.value().data() + static_cast<long>(n) * as.h * as.w, as.h, as.w);
        ConstRowMap bm(b.value().data() + static_cast<long>(n) * bs.h * bs.w, bs.h, bs.w);
        RowMap om(out.data() + static_cast<long>(n) * os.h * os.w, os.h, os.w);
        om = am * bm;
    }
    Node *an = a.raw(), *bn = b.raw();
    return make_op(os, std::move(out), {a, b}, [an, bn, as, bs, os](Node& self) {
        for (int n = 0; n < as.n; ++n) {
            ConstRowMap g(self.grad.data() + static_cast<long>(n) * os.h * os.w, os.h, os.w);
            ConstRowMap am(an->value.data() + static_cast<long>(n) * as.h * as.w, as.h, as.w);
            ConstRowMap bm(bn->value.data() + static_cast<long>(n) * bs.h * bs.w, bs.h, bs.w);
            if (an->requires_grad) {
                RowMap ga(an->grad_buffer().data() + static_cast<long>(n) * as.h * as.w, as.h, as.w);
                ga += g * bm.transpose();
            }
            if (bn->requires_grad) {
                RowMap gb(bn->grad_buffer().data() + static_cast<long>(n) * bs.h * bs.w, bs.h, bs.w);
                gb += am.transpose() * g;
            }
        }
    });
}

Tensor softmax_lastdim(const Tensor& x) {
    const Shape s = x.shape();
    const long rows = static_cast<long>(s.n) * s.c * s.h;
    const long cols = s.w;
    Array out(static_cast<long>(s.numel()));
    for (long r = 0; r < rows; ++r) {
        const auto row = x.value().segment(r * cols, cols);
        const double m = row.maxCoeff();
        Array e = (row - m).exp();
        out.segment(r * cols, cols) = e / e.sum();
    }
    Node* xn = x.raw();
    return make_op(s, std::move(out), {x}, [xn, rows, cols](Node& self) {
        if (!xn->requires_grad) return;
        for (long r = 0; r < rows; ++r) {
            const auto y = self.value.segment(r * cols, cols);
            const auto g = self.grad.segment(r * cols, cols);
            const double dot = (g * y).sum();
            xn->grad_buffer().segment(r * cols, cols) += y * (g - dot);
        }
    });
}

namespace {

struct ConvDims {
    int N, C, H, W, O, Cg, Og, kh, kw, Ho, Wo, stride, pad, groups;
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, int pad, int groups) {
    ConvDims d;
    d.N = xs.n;
    d.C = xs.c;
    d.H = xs.h;
    d.W = xs.w;
    d.O = ws.n;
    d.kh = ws.h;
    d.kw = ws.w;
    d.stride = stride;
    d.pad = pad;
    d.groups = groups;
    if (groups < 1 || d.C % groups != 0 || d.O % groups != 0)
        throw std::invalid_argument("conv2d: channel counts not divisible by groups");
    d.Cg = d.C / groups;
    d.Og = d.O / groups;
    if (ws.c != d.Cg)
        throw std::invalid_argument("conv2d: weight channel dim does not match input/groups");
    if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
    d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
    d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;
    if (d.Ho < 1 || d.Wo < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");
    return d;
}

// col is (Cg*kh*kw) x (Ho*Wo), row-major, built from one sample's group channel block.
void im2col(const double* x, const ConvDims& d, double* col) {
    const long owo = static_cast<long>(d.Ho) * d.Wo;
    for (int ci = 0; ci < d.Cg; ++ci)
        for (int ky = 0; ky < d.kh; ++ky)
            for (int kx = 0; kx < d.kw; ++kx) {
                double* dst = col + (static_cast<long>(ci) * d.kh * d.kw + ky * d.kw + kx) * owo;
                for (int oy = 0; oy < d.Ho; ++oy) {
                    const int iy = oy * d.stride - d.pad + ky;
                    if (iy < 0 || iy >= d.H) {
                        std::fill(dst + static_cast<long>(oy) * d.Wo,
                                  dst + static_cast<long>(oy + 1) * d.Wo, 0.0);
                        continue;
                    }
                    const double* src = x + (static_cast<long>(ci) * d.H + iy) * d.W;
                    for (int ox = 0; ox < d.Wo; ++ox) {
                        const int ix = ox * d.stride - d.pad + kx;
                        dst[static_cast<long>(oy) * d.Wo + ox] = (ix >= 0 && ix < d.W) ? src[ix] : 0.0;
                    }
                }
            }
}

void col2im_accumulate(const double* col, const ConvDims& d, double* gx) {
    const long owo = static_cast<long>(d.Ho) * d.Wo;
    for (int ci = 0; ci < d.Cg; ++ci)
        for (int ky = 0; ky < d.kh; ++ky)
            for (int kx = 0; kx < d.kw; ++kx) {
                const double* src = col + (static_cast<long>(ci) * d.kh * d.kw + ky * d.kw + kx) * owo;
                for (int oy = 0; oy < d.Ho; ++oy) {
                    const int iy = oy * d.stride - d.pad + ky;
                    if (iy < 0 || iy >= d.H) continue;
                    double* dst = gx + (static_cast<long>(ci) * d.H + iy) * d.W;
                    for (int ox = 0; ox < d.Wo; ++ox) {
                        const int ix = ox * d.stride - d.pad + kx;
                        if (ix >= 0 && ix < d.W) dst[ix] += src[static_cast<long>(oy) * d.Wo + ox];
                    }
                }
            }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad, int groups) {
    const ConvDims d = conv_dims(x.shape(), w.shape(), stride, pad, groups);
    const bool has_bias = b.defined();
    if (has_bias && static_cast<int>(b.numel()) != d.O)
        throw std::invalid_argument("conv2d: bias size must equal output channels");

    const Shape os{d.N, d.O, d.Ho, d.Wo};
    const long owo = static_cast<long>(d.Ho) * d.Wo;
    const long kdim = static_cast<long>(d.Cg) * d.kh * d.kw;
    Array out(static_cast<long>(os.numel()));
    RowMat col(kdim, owo);

    for (int n = 0; n < d.N; ++n)
        for (int g = 0; g < d.groups; ++g) {
            const double* xg =
                x.value().data() + (static_cast<long>(n) * d.C + static_cast<long>(g) * d.Cg) * d.H * d.W;
            im2col(xg, d, col.data());
            ConstRowMap wm(w.value().data() + static_cast<long>(g) * d.Og * kdim, d.Og, kdim);
            RowMap om(out.data() + (static_cast<long>(n) * d.O + static_cast<long>(g) * d.Og) * owo,
                      d.Og, owo);
            om.noalias() = wm * col;
            if (has_bias)
                for (int o = 0; o < d.Og; ++o)
                    om.row(o).array() += b.value()(static_cast<long>(g) * d.Og + o);
        }

    std::vector<Tensor> parents = has_bias ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
    Node* xn = x.raw();
    Node* wn = w.raw();
    Node* bn = has_bias ? b.raw() : nullptr;
    return make_op(os, std::move(out), parents, [xn, wn, bn, d, owo, kdim](Node& self) {
        RowMat col(kdim, owo);
        RowMat dcol(kdim, owo);
        for (int n = 0; n < d.N; ++n)
            for (int g = 0; g < d.groups; ++g) {
                ConstRowMap go(
                    self.grad.data() + (static_cast<long>(n) * d.O + static_cast<long>(g) * d.Og) * owo,
                    d.Og, owo);
                if (bn && bn->requires_grad)
                    for (int o = 0; o < d.Og; ++o)
                        bn->grad_buffer()(static_cast<long>(g) * d.Og + o) += go.row(o).sum();

                const bool need_x = xn->requires_grad;
                const bool need_w = wn->requires_grad;
                if (!need_x && !need_w) continue;

                if (need_w) {
                    const double* xg = xn->value.data() +
                                       (static_cast<long>(n) * d.C + static_cast<long>(g) * d.Cg) *
                                           d.H * d.W;
                    im2col(xg, d, col.data());
                    RowMap gw(wn->grad_buffer().data() + static_cast<long>(g) * d.Og * kdim, d.Og, kdim);
                    gw.noalias() += go * col.transpose();
                }
                if (need_x) {
                    ConstRowMap wm(wn->value.data() + static_cast<long>(g) * d.Og * kdim, d.Og, kdim);
                    dcol.noalias() = wm.transpose() * go;
                    double* gx = xn->grad_buffer().data() +
                                 (static_cast<long>(n) * d.C + static_cast<long>(g) * d.Cg) * d.H * d.W;
                    col2im_accumulate(dcol.data(), d, gx);
                }
            }
    });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor running_mean,
                  Tensor running_var, bool training, double momentum, double eps) {
    const Shape s = x.shape();
    const int C = s.c;
    if (static_cast<int>(gamma.numel()) != C || static_cast<int>(beta.numel()) != C ||
        static_cast<int>(running_mean.numel()) != C || static_cast<int>(running_var.numel()) != C)
        throw std::invalid_argument("batch_norm: affine/buffer sizes must equal channel count");

    const long hw = static_cast<long>(s.h) * s.w;
    const long ns = static_cast<long>(s.n) * hw;  // elements per channel
    Array mean(C), inv_std(C);
    auto xhat = std::make_shared<Array>(static_cast<long>(s.numel()));

    for (int c = 0; c < C; ++c) {
        double mu, var;
        if (training) {
            double sum = 0.0;
            for (int n = 0; n < s.n; ++n)
                sum += x.value().segment((static_cast<long>(n) * C + c) * hw, hw).sum();
            mu = sum / static_cast<double>(ns);
            double sq = 0.0;
            for (int n = 0; n < s.n; ++n)
                sq += (x.value().segment((static_cast<long>(n) * C + c) * hw, hw) - mu).square().sum();
            var = sq / static_cast<double>(ns);
            const double var_unbiased = ns > 1 ? sq / static_cast<double>(ns - 1) : var;
            running_mean.mutable_value()(c) = (1.0 - momentum) * running_mean.value()(c) + momentum * mu;
            running_var.mutable_value()(c) =
                (1.0 - momentum) * running_var.value()(c) + momentum * var_unbiased;
        } else {
            mu = running_mean.value()(c);
            var = running_var.value()(c);
        }
        mean(c) = mu;
        inv_std(c) = 1.0 / std::sqrt(var + eps);
        for (int n = 0; n < s.n; ++n)
            xhat->segment((static_cast<long>(n) * C + c) * hw, hw) =
                (x.value().segment((static_cast<long>(n) * C + c) * hw, hw) - mu) * inv_std(c);
    }

    Array out(static_cast<long>(s.numel()));
    for (int c = 0; c < C; ++c)
        for (int n = 0; n < s.n; ++n)
            out.segment((static_cast<long>(n) * C + c) * hw, hw) =
                xhat->segment((static_cast<long>(n) * C + c) * hw, hw) * gamma.value()(c) +
                beta.value()(c);

    Node *xn = x.raw(), *gn = gamma.raw(), *bn = beta.raw();
    return make_op(s, std::move(out), {x, gamma, beta},
                   [xn, gn, bn, xhat, inv_std, training, C, hw, ns](Node& self) {
                       for (int c = 0; c < C; ++c) {
                           double sum_g = 0.0, sum_gx = 0.0;
                           for (int n = 0; n < self.shape.n; ++n) {
                               const long off = (static_cast<long>(n) * C + c) * hw;
                               sum_g += self.grad.segment(off, hw).sum();
                               sum_gx += (self.grad.segment(off, hw) * xhat->segment(off, hw)).sum();
                           }
                           if (gn->requires_grad) gn->grad_buffer()(c) += sum_gx;
                           if (bn->requires_grad) bn->grad_buffer()(c) += sum_g;
                           if (!xn->requires_grad) continue;

                           const double gamma_c = gn->value(c);
                           if (training) {
                               const double mean_g = sum_g / static_cast<double>(ns);
                               const double mean_gx = sum_gx / static_cast<double>(ns);
                               for (int n = 0; n < self.shape.n; ++n) {
                                   const long off = (static_cast<long>(n) * C + c) * hw;
                                   xn->grad_buffer().segment(off, hw) +=
                                       gamma_c * inv_std(c) *
                                       (self.grad.segment(off, hw) - mean_g -
                                        xhat->segment(off, hw) * mean_gx);
                               }
                           } else {
                               for (int n = 0; n < self.shape.n; ++n) {
                                   const long off = (static_cast<long>(n) * C + c) * hw;
                                   xn->grad_buffer().segment(off, hw) +=
                                       gamma_c * inv_std(c) * self.grad.segment(off, hw);
                               }
                           }
                       }
                   });
}

Tensor layer_norm_channel(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const Shape s = x.shape();
    const int C = s.c;
    if (static_cast<int>(gamma.numel()) != C || static_cast<int>(beta.numel()) != C)
        throw std::invalid_argument("layer_norm_channel: affine sizes must equal channel count");
    const long hw = static_cast<long>(s.h) * s.w;

    auto xhat = std::make_shared<Array>(static_cast<long>(s.numel()));
    auto inv_std = std::make_shared<Array>(static_cast<long>(s.n) * hw);
    Array out(static_cast<long>(s.numel()));

    for (int n = 0; n < s.n; ++n)
        for (long p = 0; p < hw; ++p) {
            double mu = 0.0;
            for (int c = 0; c < C; ++c) mu += x.value()((static_cast<long>(n) * C + c) * hw + p);
            mu /= static_cast<double>(C);
            double var = 0.0;
            for (int c = 0; c < C; ++c) {
                const double dvc = x.value()((static_cast<long>(n) * C + c) * hw + p) - mu;
                var += dvc * dvc;
            }
            var /= static_cast<double>(C);
            const double istd = 1.0 / std::sqrt(var + eps);
            (*inv_std)(static_cast<long>(n) * hw + p) = istd;
            for (int c = 0; c < C; ++c) {
                const long i = (static_cast<long>(n) * C + c) * hw + p;
                (*xhat)(i) = (x.value()(i) - mu) * istd;
                out(i) = (*xhat)(i)*gamma.value()(c) + beta.value()(c);
            }
        }

    Node *xn = x.raw(), *gn = gamma.raw(), *bn = beta.raw();
    return make_op(s, std::move(out), {x, gamma, beta}, [xn, gn, bn, xhat, inv_std, C, hw](Node& self) {
        for (int n = 0; n < self.shape.n; ++n)
            for (long p = 0; p < hw; ++p) {
                double mean_d = 0.0, mean_dx = 0.0;
                for (int c = 0; c < C; ++c) {
                    const long i = (static_cast<long>(n) * C + c) * hw + p;
                    const double dxhat = self.grad(i) * gn->value(c);
                    mean_d += dxhat;
                    mean_dx += dxhat * (*xhat)(i);
                }
                mean_d /= static_cast<double>(C);
                mean_dx /= static_cast<double>(C);
                const double istd = (*inv_std)(static_cast<long>(n) * hw + p);
                for (int c = 0; c < C; ++c) {
                    const long i = (static_cast<long>(n) * C + c) * hw + p;
                    if (gn->requires_grad) gn->grad_buffer()(c) += self.grad(i) * (*xhat)(i);
                    if (bn->requires_grad) bn->grad_buffer()(c) += self.grad(i);
                    if (xn->requires_grad) {
                        const double dxhat = self.grad(i) * gn->value(c);
                        xn->grad_buffer()(i) += istd * (dxhat - mean_d - (*xhat)(i)*mean_dx);
                    }
                }
            }
    });
}

}  // namespace radiodun::nn
