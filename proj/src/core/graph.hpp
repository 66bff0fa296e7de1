#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "core/errors.hpp"
#include "core/params.hpp"
#include "core/tensor.hpp"

namespace sdr::core {

struct NodeRef {
    int i = -1;
    bool valid() const { return i >= 0; }
};

// Reverse-mode tape over the fixed primitive set the pipeline composes.
// Nodes are created in forward order; backward() replays hand-written
// adjoint closures in reverse creation order, then flushes leaf gradients
// into their bound ParamStore entries. Not a general autodiff engine: every
// op is one of the primitives below.
template <typename S>
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    const Tensor<S>& value(NodeRef r) const { return vals_[static_cast<std::size_t>(r.i)]; }
    const Tensor<S>& gradient(NodeRef r) const { return grads_[static_cast<std::size_t>(r.i)]; }

    // ---- leaves ------------------------------------------------------------

    NodeRef input(Tensor<S> v) { return push(std::move(v), {}); }

    NodeRef constant(S v) { return push(Tensor<S>::from({1}, {v}), {}); }

    // Parameter leaf bound to a store entry; backward() accumulates into the
    // entry's gradient and marks it fresh.
    NodeRef param(ParamStore<S>& ps, const std::string& name) {
        auto& e = ps.entry(name);
        NodeRef r = push(e.value, {});
        if (grad_enabled_) sinks_.push_back({r.i, &e});
        return r;
    }

    // ---- dense primitives ----------------------------------------------------

    // x viewed as [R, Din] rows, w [Din, Dout], b [Dout] -> [R, Dout] with the
    // leading dims of x preserved.
    NodeRef affine(NodeRef x, NodeRef w, NodeRef b) {
        const Tensor<S>& xv = val(x);
        const Tensor<S>& wv = val(w);
        const Tensor<S>& bv = val(b);
        if (wv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != wv.dim(1)) {
            throw ConfigError("affine: bad weight/bias dims " + dims_str(wv.dims) + " " + dims_str(bv.dims));
        }
        const int din = wv.dim(0);
        const int dout = wv.dim(1);
        if (xv.rank() < 1 || xv.dim(xv.rank() - 1) != din) {
            throw ConfigError("affine: input trailing dim " + dims_str(xv.dims) +
                              " does not match weight " + dims_str(wv.dims));
        }
        const std::int64_t rows = xv.size() / din;
        Dims odims = xv.dims;
        odims.back() = dout;
        Tensor<S> y(odims);
        for (std::int64_t r = 0; r < rows; ++r) {
            S* yr = y.ptr() + r * dout;
            for (int o = 0; o < dout; ++o) yr[o] = bv[o];
        }
        mm_acc(xv.ptr(), wv.ptr(), y.ptr(), rows, din, dout);
        check_finite(y, "affine");
        return push(std::move(y), {x, w, b}, [this, x, w, b, rows, din, dout](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            Tensor<S>& gw = grads_[static_cast<std::size_t>(w.i)];
            Tensor<S>& gb = grads_[static_cast<std::size_t>(b.i)];
            // db = column sums of dy
            for (std::int64_t r = 0; r < rows; ++r) {
                const S* gyr = gy.ptr() + r * dout;
                for (int o = 0; o < dout; ++o) gb[o] += gyr[o];
            }
            mm_bt_acc(gy.ptr(), val(w).ptr(), gx.ptr(), rows, dout, din); // dx = dy W^T
            mm_at_acc(val(x).ptr(), gy.ptr(), gw.ptr(), rows, din, dout); // dw = x^T dy
        });
    }

    // 1-D convolution along the leading time axis, applied independently at
    // every site with shared weights. x [T, S, Din], w [Kt, Din, Dout],
    // b [Dout] -> [T', S, Dout]. Odd Kt pads (Kt-1)/2 on both sides; even Kt
    // with stride 1 is rejected, with stride > 1 it runs unpadded.
    NodeRef temporal_conv(NodeRef x, NodeRef w, NodeRef b, int stride) {
        const Tensor<S>& xv = val(x);
        const Tensor<S>& wv = val(w);
        const Tensor<S>& bv = val(b);
        if (xv.rank() != 3 || wv.rank() != 3) {
            throw ConfigError("temporal_conv: need x [T,S,Din], w [Kt,Din,Dout]");
        }
        const int t_in = xv.dim(0), sites = xv.dim(1), din = xv.dim(2);
        const int kt = wv.dim(0), dout = wv.dim(2);
        if (stride < 1) throw ConfigError("temporal_conv: stride must be positive");
        if (wv.dim(1) != din) {
            throw ConfigError("temporal_conv: kernel input width " + dims_str(wv.dims) +
                              " does not match input " + dims_str(xv.dims));
        }
        if (bv.rank() != 1 || bv.dim(0) != dout) throw ConfigError("temporal_conv: bad bias dims");
        if (kt % 2 == 0 && stride == 1) {
            throw ConfigError("temporal_conv: even kernel with stride 1 has ambiguous padding");
        }
        if (t_in < kt) throw ConfigError("temporal_conv: input shorter than kernel");
        const int pad = (kt % 2 == 1) ? (kt - 1) / 2 : 0;
        const int t_out = (t_in + 2 * pad - kt) / stride + 1;
        if (t_out < 1) throw ConfigError("temporal_conv: empty output");

        Tensor<S> y({t_out, sites, dout});
        for (std::int64_t r = 0; r < static_cast<std::int64_t>(t_out) * sites; ++r) {
            S* yr = y.ptr() + r * dout;
            for (int o = 0; o < dout; ++o) yr[o] = bv[o];
        }
        // Sites are processed four at a time so the accumulator chains
        // pipeline; the per-site summation order is untouched.
        for (int to = 0; to < t_out; ++to) {
            for (int k = 0; k < kt; ++k) {
                const int ti = to * stride + k - pad;
                if (ti < 0 || ti >= t_in) continue; // zero padding
                const S* xt = xv.ptr() + static_cast<std::int64_t>(ti) * sites * din;
                S* yt = y.ptr() + static_cast<std::int64_t>(to) * sites * dout;
                const S* wk = wv.ptr() + static_cast<std::int64_t>(k) * din * dout;
                int s = 0;
                for (; s + 4 <= sites; s += 4) {
                    const S* __restrict__ x0 = xt + static_cast<std::int64_t>(s) * din;
                    const S* __restrict__ x1 = x0 + din;
                    const S* __restrict__ x2 = x1 + din;
                    const S* __restrict__ x3 = x2 + din;
                    S* __restrict__ y0 = yt + static_cast<std::int64_t>(s) * dout;
                    S* __restrict__ y1 = y0 + dout;
                    S* __restrict__ y2 = y1 + dout;
                    S* __restrict__ y3 = y2 + dout;
                    for (int i = 0; i < din; ++i) {
                        const S* __restrict__ wr = wk + static_cast<std::int64_t>(i) * dout;
                        const S a0 = x0[i], a1 = x1[i], a2 = x2[i], a3 = x3[i];
                        for (int o = 0; o < dout; ++o) {
                            y0[o] += a0 * wr[o];
                            y1[o] += a1 * wr[o];
                            y2[o] += a2 * wr[o];
                            y3[o] += a3 * wr[o];
                        }
                    }
                }
                for (; s < sites; ++s) {
                    const S* xs = xt + static_cast<std::int64_t>(s) * din;
                    S* ys = yt + static_cast<std::int64_t>(s) * dout;
                    for (int i = 0; i < din; ++i) {
                        const S xi = xs[i];
                        const S* wr = wk + static_cast<std::int64_t>(i) * dout;
                        for (int o = 0; o < dout; ++o) ys[o] += xi * wr[o];
                    }
                }
            }
        }
        check_finite(y, "temporal_conv");
        return push(std::move(y), {x, w, b},
                    [this, x, w, b, t_in, sites, din, kt, dout, stride, pad, t_out](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            Tensor<S>& gw = grads_[static_cast<std::size_t>(w.i)];
            Tensor<S>& gb = grads_[static_cast<std::size_t>(b.i)];
            const Tensor<S>& xv = val(x);
            const Tensor<S>& wv = val(w);
            for (std::int64_t r = 0; r < static_cast<std::int64_t>(t_out) * sites; ++r) {
                const S* gyr = gy.ptr() + r * dout;
                for (int o = 0; o < dout; ++o) gb[o] += gyr[o];
            }
            for (int to = 0; to < t_out; ++to) {
                for (int k = 0; k < kt; ++k) {
                    const int ti = to * stride + k - pad;
                    if (ti < 0 || ti >= t_in) continue;
                    const S* xt = xv.ptr() + static_cast<std::int64_t>(ti) * sites * din;
                    S* gxt = gx.ptr() + static_cast<std::int64_t>(ti) * sites * din;
                    const S* gyt = gy.ptr() + static_cast<std::int64_t>(to) * sites * dout;
                    const S* wk = wv.ptr() + static_cast<std::int64_t>(k) * din * dout;
                    S* gwk = gw.ptr() + static_cast<std::int64_t>(k) * din * dout;
                    // input gradients, four site chains in flight
                    int s = 0;
                    for (; s + 4 <= sites; s += 4) {
                        const S* __restrict__ g0 = gyt + static_cast<std::int64_t>(s) * dout;
                        const S* __restrict__ g1 = g0 + dout;
                        const S* __restrict__ g2 = g1 + dout;
                        const S* __restrict__ g3 = g2 + dout;
                        S* __restrict__ d0 = gxt + static_cast<std::int64_t>(s) * din;
                        S* __restrict__ d1 = d0 + din;
                        S* __restrict__ d2 = d1 + din;
                        S* __restrict__ d3 = d2 + din;
                        for (int i = 0; i < din; ++i) {
                            const S* __restrict__ wr = wk + static_cast<std::int64_t>(i) * dout;
                            S a0 = S(0), a1 = S(0), a2 = S(0), a3 = S(0);
                            for (int o = 0; o < dout; ++o) {
                                a0 += wr[o] * g0[o];
                                a1 += wr[o] * g1[o];
                                a2 += wr[o] * g2[o];
                                a3 += wr[o] * g3[o];
                            }
                            d0[i] += a0;
                            d1[i] += a1;
                            d2[i] += a2;
                            d3[i] += a3;
                        }
                    }
                    for (; s < sites; ++s) {
                        const S* gys = gyt + static_cast<std::int64_t>(s) * dout;
                        S* gxs = gxt + static_cast<std::int64_t>(s) * din;
                        for (int i = 0; i < din; ++i) {
                            const S* wr = wk + static_cast<std::int64_t>(i) * dout;
                            S acc = S(0);
                            for (int o = 0; o < dout; ++o) acc += wr[o] * gys[o];
                            gxs[i] += acc;
                        }
                    }
                    // weight gradients: independent rows per input channel
                    for (s = 0; s < sites; ++s) {
                        const S* __restrict__ xs = xt + static_cast<std::int64_t>(s) * din;
                        const S* __restrict__ gys = gyt + static_cast<std::int64_t>(s) * dout;
                        for (int i = 0; i < din; ++i) {
                            S* __restrict__ gwr = gwk + static_cast<std::int64_t>(i) * dout;
                            const S xi = xs[i];
                            for (int o = 0; o < dout; ++o) gwr[o] += xi * gys[o];
                        }
                    }
                }
            }
        });
    }

    // Spatio-temporal convolution for the spatially-mixing baseline.
    // x [T, H, W, Din], w [Kt, Kh, Kw, Din, Dout]; spatial dims are padded to
    // keep H, W; temporal padding/stride as in temporal_conv.
    NodeRef conv3d(NodeRef x, NodeRef w, NodeRef b, int stride_t) {
        const Tensor<S>& xv = val(x);
        const Tensor<S>& wv = val(w);
        const Tensor<S>& bv = val(b);
        if (xv.rank() != 4 || wv.rank() != 5) {
            throw ConfigError("conv3d: need x [T,H,W,Din], w [Kt,Kh,Kw,Din,Dout]");
        }
        const int t_in = xv.dim(0), hh = xv.dim(1), ww = xv.dim(2), din = xv.dim(3);
        const int kt = wv.dim(0), kh = wv.dim(1), kw = wv.dim(2), dout = wv.dim(4);
        if (wv.dim(3) != din) throw ConfigError("conv3d: kernel/input channel mismatch");
        if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("conv3d: spatial kernel extents must be odd");
        if (kt % 2 == 0 && stride_t == 1) throw ConfigError("conv3d: even Kt with stride 1 rejected");
        if (bv.rank() != 1 || bv.dim(0) != dout) throw ConfigError("conv3d: bad bias dims");
        const int pt = (kt % 2 == 1) ? (kt - 1) / 2 : 0;
        const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
        const int t_out = (t_in + 2 * pt - kt) / stride_t + 1;
        if (t_out < 1) throw ConfigError("conv3d: empty output");

        Tensor<S> y({t_out, hh, ww, dout});
        for (std::int64_t r = 0; r < y.size() / dout; ++r) {
            S* yr = y.ptr() + r * dout;
            for (int o = 0; o < dout; ++o) yr[o] = bv[o];
        }
        auto xoff = [&](int t, int h, int wcol) {
            return ((static_cast<std::int64_t>(t) * hh + h) * ww + wcol) * din;
        };
        auto yoff = [&](int t, int h, int wcol) {
            return ((static_cast<std::int64_t>(t) * hh + h) * ww + wcol) * dout;
        };
        for (int to = 0; to < t_out; ++to)
            for (int k = 0; k < kt; ++k) {
                const int ti = to * stride_t + k - pt;
                if (ti < 0 || ti >= t_in) continue;
                for (int oh = 0; oh < hh; ++oh)
                    for (int dh = 0; dh < kh; ++dh) {
                        const int ih = oh + dh - ph;
                        if (ih < 0 || ih >= hh) continue;
                        for (int ow = 0; ow < ww; ++ow)
                            for (int dw = 0; dw < kw; ++dw) {
                                const int iw = ow + dw - pw;
                                if (iw < 0 || iw >= ww) continue;
                                const S* xs = xv.ptr() + xoff(ti, ih, iw);
                                S* ys = y.ptr() + yoff(to, oh, ow);
                                const S* wk = wv.ptr() +
                                    (((static_cast<std::int64_t>(k) * kh + dh) * kw + dw) * din) * dout;
                                for (int i = 0; i < din; ++i) {
                                    const S xi = xs[i];
                                    const S* wr = wk + static_cast<std::int64_t>(i) * dout;
                                    for (int o = 0; o < dout; ++o) ys[o] += xi * wr[o];
                                }
                            }
                    }
            }
        check_finite(y, "conv3d");
        return push(std::move(y), {x, w, b},
                    [this, x, w, b, t_in, hh, ww, din, kt, kh, kw, dout, stride_t, pt, ph, pw, t_out](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            Tensor<S>& gw = grads_[static_cast<std::size_t>(w.i)];
            Tensor<S>& gb = grads_[static_cast<std::size_t>(b.i)];
            const Tensor<S>& xv = val(x);
            const Tensor<S>& wv = val(w);
            for (std::int64_t r = 0; r < gy.size() / dout; ++r) {
                const S* gyr = gy.ptr() + r * dout;
                for (int o = 0; o < dout; ++o) gb[o] += gyr[o];
            }
            auto xoff = [&](int t, int h, int wcol) {
                return ((static_cast<std::int64_t>(t) * hh + h) * ww + wcol) * din;
            };
            auto yoff = [&](int t, int h, int wcol) {
                return ((static_cast<std::int64_t>(t) * hh + h) * ww + wcol) * dout;
            };
            for (int to = 0; to < t_out; ++to)
                for (int k = 0; k < kt; ++k) {
                    const int ti = to * stride_t + k - pt;
                    if (ti < 0 || ti >= t_in) continue;
                    for (int oh = 0; oh < hh; ++oh)
                        for (int dh = 0; dh < kh; ++dh) {
                            const int ih = oh + dh - ph;
                            if (ih < 0 || ih >= hh) continue;
                            for (int ow = 0; ow < ww; ++ow)
                                for (int dw = 0; dw < kw; ++dw) {
                                    const int iw = ow + dw - pw;
                                    if (iw < 0 || iw >= ww) continue;
                                    const S* xs = xv.ptr() + xoff(ti, ih, iw);
                                    S* gxs = gx.ptr() + xoff(ti, ih, iw);
                                    const S* gys = gy.ptr() + yoff(to, oh, ow);
                                    const std::int64_t wbase =
                                        (((static_cast<std::int64_t>(k) * kh + dh) * kw + dw) * din) * dout;
                                    const S* wk = wv.ptr() + wbase;
                                    S* gwk = gw.ptr() + wbase;
                                    for (int i = 0; i < din; ++i) {
                                        const S* wr = wk + static_cast<std::int64_t>(i) * dout;
                                        S* gwr = gwk + static_cast<std::int64_t>(i) * dout;
                                        S acc = S(0);
                                        const S xi = xs[i];
                                        for (int o = 0; o < dout; ++o) {
                                            acc += wr[o] * gys[o];
                                            gwr[o] += xi * gys[o];
                                        }
                                        gxs[i] += acc;
                                    }
                                }
                        }
                }
        });
    }

    // Layer normalization over the trailing channel axis, learnable gain/bias.
    NodeRef layer_norm(NodeRef x, NodeRef gain, NodeRef bias, double eps = 1e-5) {
        const Tensor<S>& xv = val(x);
        const Tensor<S>& gv = val(gain);
        const Tensor<S>& bv = val(bias);
        const int d = xv.dim(xv.rank() - 1);
        if (gv.rank() != 1 || gv.dim(0) != d || bv.rank() != 1 || bv.dim(0) != d) {
            throw ConfigError("layer_norm: gain/bias dims must match channel axis");
        }
        const std::int64_t rows = xv.size() / d;
        Tensor<S> y(xv.dims);
        auto xhat = std::make_shared<std::vector<S>>(static_cast<std::size_t>(xv.size()));
        auto inv = std::make_shared<std::vector<S>>(static_cast<std::size_t>(rows));
        for (std::int64_t r = 0; r < rows; ++r) {
            const S* xr = xv.ptr() + r * d;
            S* yr = y.ptr() + r * d;
            S* hr = xhat->data() + r * d;
            double mu = 0;
            for (int c = 0; c < d; ++c) mu += xr[c];
            mu /= d;
            double var = 0;
            for (int c = 0; c < d; ++c) {
                const double t = xr[c] - mu;
                var += t * t;
            }
            var /= d;
            const double istd = 1.0 / std::sqrt(var + eps);
            (*inv)[static_cast<std::size_t>(r)] = static_cast<S>(istd);
            for (int c = 0; c < d; ++c) {
                hr[c] = static_cast<S>((xr[c] - mu) * istd);
                yr[c] = gv[c] * hr[c] + bv[c];
            }
        }
        check_finite(y, "layer_norm");
        return push(std::move(y), {x, gain, bias}, [this, x, gain, bias, rows, d, xhat, inv](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            Tensor<S>& gg = grads_[static_cast<std::size_t>(gain.i)];
            Tensor<S>& gb = grads_[static_cast<std::size_t>(bias.i)];
            const Tensor<S>& gv = val(gain);
            for (std::int64_t r = 0; r < rows; ++r) {
                const S* gyr = gy.ptr() + r * d;
                const S* hr = xhat->data() + r * d;
                S* gxr = gx.ptr() + r * d;
                const double istd = (*inv)[static_cast<std::size_t>(r)];
                double mean_h = 0, mean_hx = 0;
                for (int c = 0; c < d; ++c) {
                    const double h = static_cast<double>(gv[c]) * gyr[c];
                    mean_h += h;
                    mean_hx += h * hr[c];
                    gg[c] += gyr[c] * hr[c];
                    gb[c] += gyr[c];
                }
                mean_h /= d;
                mean_hx /= d;
                for (int c = 0; c < d; ++c) {
                    const double h = static_cast<double>(gv[c]) * gyr[c];
                    gxr[c] += static_cast<S>((h - mean_h - hr[c] * mean_hx) * istd);
                }
            }
        });
    }

    NodeRef relu(NodeRef x) {
        const Tensor<S>& xv = val(x);
        Tensor<S> y(xv.dims);
        for (std::int64_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > S(0) ? xv[i] : S(0);
        return push(std::move(y), {x}, [this, x](int self) {
            const Tensor<S>& yv = vals_[static_cast<std::size_t>(self)];
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            for (std::int64_t i = 0; i < yv.size(); ++i) {
                if (yv[i] > S(0)) gx[i] += gy[i];
            }
        });
    }

    NodeRef add(NodeRef a, NodeRef b) {
        const Tensor<S>& av = val(a);
        const Tensor<S>& bv = val(b);
        if (!av.same_dims(bv)) {
            throw ConfigError("add: dims mismatch " + dims_str(av.dims) + " vs " + dims_str(bv.dims));
        }
        Tensor<S> y(av.dims);
        for (std::int64_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
        check_finite(y, "add");
        return push(std::move(y), {a, b}, [this, a, b](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& ga = grads_[static_cast<std::size_t>(a.i)];
            Tensor<S>& gb = grads_[static_cast<std::size_t>(b.i)];
            for (std::int64_t i = 0; i < gy.size(); ++i) {
                ga[i] += gy[i];
                gb[i] += gy[i];
            }
        });
    }

    // Picks rows 0, stride, 2*stride, ... from the time axis of [T, S, D];
    // the strided identity skip in downsampling blocks.
    NodeRef subsample_time(NodeRef x, int stride, int t_out) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 3) throw ConfigError("subsample_time: need [T,S,D]");
        const int sites = xv.dim(1), d = xv.dim(2);
        if ((t_out - 1) * stride >= xv.dim(0)) throw ConfigError("subsample_time: out of range");
        const std::int64_t row = static_cast<std::int64_t>(sites) * d;
        Tensor<S> y({t_out, sites, d});
        for (int t = 0; t < t_out; ++t) {
            const S* src = xv.ptr() + static_cast<std::int64_t>(t) * stride * row;
            std::copy(src, src + row, y.ptr() + static_cast<std::int64_t>(t) * row);
        }
        return push(std::move(y), {x}, [this, x, stride, t_out, row](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            for (int t = 0; t < t_out; ++t) {
                const S* src = gy.ptr() + static_cast<std::int64_t>(t) * row;
                S* dst = gx.ptr() + static_cast<std::int64_t>(t) * stride * row;
                for (std::int64_t i = 0; i < row; ++i) dst[i] += src[i];
            }
        });
    }

    // [T, S, D] -> [T, D], mean over sites. The reduction is value-sorted so
    // the result is a function of the site multiset alone: permuting sites
    // leaves the output bit-identical.
    NodeRef mean_sites(NodeRef x) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 3) throw ConfigError("mean_sites: need [T,S,D]");
        const int t = xv.dim(0), sites = xv.dim(1), d = xv.dim(2);
        Tensor<S> y({t, d});
        std::vector<S> scratch(static_cast<std::size_t>(sites));
        for (int ti = 0; ti < t; ++ti) {
            const S* xt = xv.ptr() + static_cast<std::int64_t>(ti) * sites * d;
            S* yt = y.ptr() + static_cast<std::int64_t>(ti) * d;
            for (int c = 0; c < d; ++c) {
                for (int s = 0; s < sites; ++s) {
                    scratch[static_cast<std::size_t>(s)] = xt[static_cast<std::int64_t>(s) * d + c];
                }
                yt[c] = canonical_sum(scratch) / static_cast<S>(sites);
            }
        }
        check_finite(y, "mean_sites");
        return push(std::move(y), {x}, [this, x, t, sites, d](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            const S inv = S(1) / static_cast<S>(sites);
            for (int ti = 0; ti < t; ++ti) {
                const S* gyt = gy.ptr() + static_cast<std::int64_t>(ti) * d;
                S* gxt = gx.ptr() + static_cast<std::int64_t>(ti) * sites * d;
                for (int s = 0; s < sites; ++s)
                    for (int c = 0; c < d; ++c) gxt[static_cast<std::int64_t>(s) * d + c] += gyt[c] * inv;
            }
        });
    }

    // [L, D] -> [D], mean over the leading axis; value-sorted reduction as
    // in mean_sites, so temporal permutations cannot perturb the result.
    NodeRef mean_rows(NodeRef x) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 2) throw ConfigError("mean_rows: need [L,D]");
        const int l = xv.dim(0), d = xv.dim(1);
        Tensor<S> y({d});
        std::vector<S> scratch(static_cast<std::size_t>(l));
        for (int c = 0; c < d; ++c) {
            for (int r = 0; r < l; ++r) {
                scratch[static_cast<std::size_t>(r)] = xv[static_cast<std::int64_t>(r) * d + c];
            }
            y[c] = canonical_sum(scratch) / static_cast<S>(l);
        }
        check_finite(y, "mean_rows");
        return push(std::move(y), {x}, [this, x, l, d](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            const S inv = S(1) / static_cast<S>(l);
            for (int r = 0; r < l; ++r)
                for (int c = 0; c < d; ++c) gx[static_cast<std::int64_t>(r) * d + c] += gy[c] * inv;
        });
    }

    // Channel-wise concatenation of [T, D_i] sequences, fixed order.
    NodeRef concat_channels(const std::vector<NodeRef>& xs) {
        if (xs.empty()) throw ConfigError("concat_channels: empty input list");
        const int t = val(xs[0]).dim(0);
        int total = 0;
        for (NodeRef r : xs) {
            const Tensor<S>& v = val(r);
            if (v.rank() != 2 || v.dim(0) != t) {
                throw ConfigError("concat_channels: sequence length mismatch");
            }
            total += v.dim(1);
        }
        Tensor<S> y({t, total});
        int off = 0;
        for (NodeRef r : xs) {
            const Tensor<S>& v = val(r);
            const int d = v.dim(1);
            for (int ti = 0; ti < t; ++ti) {
                std::copy(v.ptr() + static_cast<std::int64_t>(ti) * d,
                          v.ptr() + static_cast<std::int64_t>(ti) * d + d,
                          y.ptr() + static_cast<std::int64_t>(ti) * total + off);
            }
            off += d;
        }
        std::vector<NodeRef> parents = xs;
        return push(std::move(y), parents, [this, parents, t, total](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            int off = 0;
            for (NodeRef r : parents) {
                Tensor<S>& gx = grads_[static_cast<std::size_t>(r.i)];
                const int d = gx.dim(1);
                for (int ti = 0; ti < t; ++ti) {
                    const S* src = gy.ptr() + static_cast<std::int64_t>(ti) * total + off;
                    S* dst = gx.ptr() + static_cast<std::int64_t>(ti) * d;
                    for (int c = 0; c < d; ++c) dst[c] += src[c];
                }
                off += d;
            }
        });
    }

    // Removes channels [offset, offset+width) from [T, W]; the leave-one-out view.
    NodeRef drop_channels(NodeRef x, int offset, int width) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 2) throw ConfigError("drop_channels: need [T,W]");
        const int t = xv.dim(0), w = xv.dim(1);
        if (offset < 0 || width <= 0 || offset + width > w) {
            throw ConfigError("drop_channels: block out of range");
        }
        const int wout = w - width;
        if (wout == 0) throw ConfigError("drop_channels: would leave zero channels");
        Tensor<S> y({t, wout});
        for (int ti = 0; ti < t; ++ti) {
            const S* src = xv.ptr() + static_cast<std::int64_t>(ti) * w;
            S* dst = y.ptr() + static_cast<std::int64_t>(ti) * wout;
            std::copy(src, src + offset, dst);
            std::copy(src + offset + width, src + w, dst + offset);
        }
        return push(std::move(y), {x}, [this, x, offset, width, t, w, wout](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            for (int ti = 0; ti < t; ++ti) {
                const S* src = gy.ptr() + static_cast<std::int64_t>(ti) * wout;
                S* dst = gx.ptr() + static_cast<std::int64_t>(ti) * w;
                for (int c = 0; c < offset; ++c) dst[c] += src[c];
                for (int c = offset + width; c < w; ++c) dst[c] += src[c - width];
            }
        });
    }

    // Stable softmax over the trailing axis, then clamp to [eps, 1] and
    // renormalize. Keeps every downstream log finite.
    NodeRef clamped_softmax(NodeRef x, double eps = 1e-7) {
        const Tensor<S>& xv = val(x);
        const int k = xv.dim(xv.rank() - 1);
        const std::int64_t rows = xv.size() / k;
        Tensor<S> y(xv.dims);
        auto soft = std::make_shared<std::vector<S>>(static_cast<std::size_t>(xv.size()));
        auto sigma = std::make_shared<std::vector<S>>(static_cast<std::size_t>(rows));
        for (std::int64_t r = 0; r < rows; ++r) {
            const S* xr = xv.ptr() + r * k;
            S* sr = soft->data() + r * k;
            S* yr = y.ptr() + r * k;
            double mx = xr[0];
            for (int c = 1; c < k; ++c) mx = std::max(mx, static_cast<double>(xr[c]));
            double z = 0;
            for (int c = 0; c < k; ++c) {
                const double e = std::exp(static_cast<double>(xr[c]) - mx);
                sr[c] = static_cast<S>(e);
                z += e;
            }
            double sig = 0;
            for (int c = 0; c < k; ++c) {
                sr[c] = static_cast<S>(sr[c] / z);
                const double cl = std::min(1.0, std::max(eps, static_cast<double>(sr[c])));
                yr[c] = static_cast<S>(cl);
                sig += cl;
            }
            (*sigma)[static_cast<std::size_t>(r)] = static_cast<S>(sig);
            for (int c = 0; c < k; ++c) yr[c] = static_cast<S>(yr[c] / sig);
        }
        check_finite(y, "clamped_softmax");
        return push(std::move(y), {x}, [this, x, rows, k, eps, soft, sigma](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            const Tensor<S>& yv = vals_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            for (std::int64_t r = 0; r < rows; ++r) {
                const S* gyr = gy.ptr() + r * k;
                const S* yr = yv.ptr() + r * k;
                const S* sr = soft->data() + r * k;
                S* gxr = gx.ptr() + r * k;
                const double sig = (*sigma)[static_cast<std::size_t>(r)];
                // through renormalization
                double dot = 0;
                for (int c = 0; c < k; ++c) dot += static_cast<double>(gyr[c]) * yr[c];
                // through clamp (zero where active) and softmax
                double inner = 0;
                std::vector<double> ds(static_cast<std::size_t>(k));
                for (int c = 0; c < k; ++c) {
                    const double dcl = (static_cast<double>(gyr[c]) - dot) / sig;
                    const bool active = static_cast<double>(sr[c]) <= eps || static_cast<double>(sr[c]) >= 1.0;
                    ds[static_cast<std::size_t>(c)] = active ? 0.0 : dcl;
                    inner += ds[static_cast<std::size_t>(c)] * sr[c];
                }
                for (int c = 0; c < k; ++c) {
                    gxr[c] += static_cast<S>(sr[c] * (ds[static_cast<std::size_t>(c)] - inner));
                }
            }
        });
    }

    // -log softmax(logits)[label], fused for stability.
    NodeRef cross_entropy_logits(NodeRef logits, int label) {
        const Tensor<S>& xv = val(logits);
        if (xv.rank() != 1) throw ConfigError("cross_entropy_logits: need rank-1 logits");
        const int k = xv.dim(0);
        if (label < 0 || label >= k) throw ConfigError("cross_entropy_logits: label out of range");
        double mx = xv[0];
        for (int c = 1; c < k; ++c) mx = std::max(mx, static_cast<double>(xv[c]));
        auto soft = std::make_shared<std::vector<S>>(static_cast<std::size_t>(k));
        double z = 0;
        for (int c = 0; c < k; ++c) {
            const double e = std::exp(static_cast<double>(xv[c]) - mx);
            (*soft)[static_cast<std::size_t>(c)] = static_cast<S>(e);
            z += e;
        }
        for (int c = 0; c < k; ++c) (*soft)[static_cast<std::size_t>(c)] = static_cast<S>((*soft)[static_cast<std::size_t>(c)] / z);
        const double loss = std::log(z) + mx - static_cast<double>(xv[label]);
        Tensor<S> y = Tensor<S>::from({1}, {static_cast<S>(loss)});
        check_finite(y, "cross_entropy_logits");
        return push(std::move(y), {logits}, [this, logits, label, k, soft](int self) {
            const S g = grads_[static_cast<std::size_t>(self)][0];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(logits.i)];
            for (int c = 0; c < k; ++c) {
                const S onehot = (c == label) ? S(1) : S(0);
                gx[c] += g * ((*soft)[static_cast<std::size_t>(c)] - onehot);
            }
        });
    }

    // KL(p || q) for two strictly positive distributions of equal length.
    NodeRef kl_pair(NodeRef p, NodeRef q) {
        const Tensor<S>& pv = val(p);
        const Tensor<S>& qv = val(q);
        if (!pv.same_dims(qv) || pv.rank() != 1) throw ConfigError("kl_pair: need equal rank-1 dims");
        const int k = pv.dim(0);
        double acc = 0;
        for (int c = 0; c < k; ++c) {
            acc += static_cast<double>(pv[c]) * std::log(static_cast<double>(pv[c]) / static_cast<double>(qv[c]));
        }
        Tensor<S> y = Tensor<S>::from({1}, {static_cast<S>(acc)});
        check_finite(y, "kl_pair");
        return push(std::move(y), {p, q}, [this, p, q, k](int self) {
            const S g = grads_[static_cast<std::size_t>(self)][0];
            const Tensor<S>& pv = val(p);
            const Tensor<S>& qv = val(q);
            Tensor<S>& gp = grads_[static_cast<std::size_t>(p.i)];
            Tensor<S>& gq = grads_[static_cast<std::size_t>(q.i)];
            for (int c = 0; c < k; ++c) {
                const double ratio = static_cast<double>(pv[c]) / static_cast<double>(qv[c]);
                gp[c] += static_cast<S>(g * (std::log(ratio) + 1.0));
                gq[c] += static_cast<S>(-g * ratio);
            }
        });
    }

    // Multi-head self-attention over [L, Dm]; fused qkv/score/softmax/output.
    NodeRef mhsa(NodeRef x, NodeRef wq, NodeRef bq, NodeRef wk, NodeRef bk,
                 NodeRef wv_, NodeRef bv_, NodeRef wo, NodeRef bo, int heads) {
        const Tensor<S>& xin = val(x);
        if (xin.rank() != 2) throw ConfigError("mhsa: need [L,Dm]");
        const int l = xin.dim(0), dm = xin.dim(1);
        if (heads < 1 || dm % heads != 0) throw ConfigError("mhsa: heads must divide model width");
        const int dh = dm / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

        auto project = [&](NodeRef w, NodeRef b) {
            Tensor<S> out({l, dm});
            const Tensor<S>& wvt = val(w);
            const Tensor<S>& bvt = val(b);
            require_dims(wvt, {dm, dm}, "mhsa projection");
            for (int r = 0; r < l; ++r)
                for (int c = 0; c < dm; ++c) out[static_cast<std::int64_t>(r) * dm + c] = bvt[c];
            mm_acc(xin.ptr(), wvt.ptr(), out.ptr(), l, dm, dm);
            return out;
        };
        auto q = std::make_shared<Tensor<S>>(project(wq, bq));
        auto kk = std::make_shared<Tensor<S>>(project(wk, bk));
        auto vv = std::make_shared<Tensor<S>>(project(wv_, bv_));
        // attention weights per head, rows softmax-normalized
        auto attn = std::make_shared<Tensor<S>>(Tensor<S>({heads, l, l}));
        Tensor<S> ctx({l, dm});
        std::vector<S> qh(static_cast<std::size_t>(l) * dh), khh(static_cast<std::size_t>(l) * dh),
            vh(static_cast<std::size_t>(l) * dh), oh(static_cast<std::size_t>(l) * dh),
            sc(static_cast<std::size_t>(l) * l);
        // Softmax normalizers and the attention-weighted sums reduce over the
        // position axis with value-sorted accumulation, keeping the head
        // exactly permutation-equivariant in the input rows.
        std::vector<S> terms(static_cast<std::size_t>(l));
        for (int h = 0; h < heads; ++h) {
            gather_head(q->ptr(), qh.data(), l, dm, h, dh);
            gather_head(kk->ptr(), khh.data(), l, dm, h, dh);
            gather_head(vv->ptr(), vh.data(), l, dm, h, dh);
            std::fill(sc.begin(), sc.end(), S(0));
            mm_bt_acc(qh.data(), khh.data(), sc.data(), l, dh, l);
            S* arow = attn->ptr() + static_cast<std::int64_t>(h) * l * l;
            for (int r = 0; r < l; ++r) {
                S* row = sc.data() + static_cast<std::int64_t>(r) * l;
                S mx = row[0] * static_cast<S>(scale);
                for (int cCol = 0; cCol < l; ++cCol) {
                    row[cCol] = static_cast<S>(row[cCol] * static_cast<S>(scale));
                    mx = std::max(mx, row[cCol]);
                }
                for (int cCol = 0; cCol < l; ++cCol) {
                    terms[static_cast<std::size_t>(cCol)] =
                        static_cast<S>(std::exp(row[cCol] - mx));
                    arow[static_cast<std::int64_t>(r) * l + cCol] = terms[static_cast<std::size_t>(cCol)];
                }
                const S z = canonical_sum(terms);
                for (int cCol = 0; cCol < l; ++cCol) {
                    arow[static_cast<std::int64_t>(r) * l + cCol] =
                        static_cast<S>(arow[static_cast<std::int64_t>(r) * l + cCol] / z);
                }
            }
            for (int r = 0; r < l; ++r) {
                for (int dcol = 0; dcol < dh; ++dcol) {
                    for (int j = 0; j < l; ++j) {
                        terms[static_cast<std::size_t>(j)] =
                            static_cast<S>(arow[static_cast<std::int64_t>(r) * l + j] *
                                           vh[static_cast<std::size_t>(j) * dh + dcol]);
                    }
                    oh[static_cast<std::size_t>(r) * dh + dcol] = canonical_sum(terms);
                }
            }
            scatter_head(oh.data(), ctx.ptr(), l, dm, h, dh);
        }
        Tensor<S> y({l, dm});
        const Tensor<S>& wov = val(wo);
        const Tensor<S>& bov = val(bo);
        require_dims(wov, {dm, dm}, "mhsa output projection");
        for (int r = 0; r < l; ++r)
            for (int c = 0; c < dm; ++c) y[static_cast<std::int64_t>(r) * dm + c] = bov[c];
        mm_acc(ctx.ptr(), wov.ptr(), y.ptr(), l, dm, dm);
        check_finite(y, "mhsa");
        auto ctxp = std::make_shared<Tensor<S>>(std::move(ctx));
        return push(std::move(y), {x, wq, bq, wk, bk, wv_, bv_, wo, bo},
                    [this, x, wq, bq, wk, bk, wv_, bv_, wo, bo, heads, l, dm, dh, scale,
                     q, kk, vv, attn, ctxp](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            const Tensor<S>& xin = val(x);
            // output projection
            Tensor<S> gctx({l, dm});
            mm_bt_acc(gy.ptr(), val(wo).ptr(), gctx.ptr(), l, dm, dm);
            mm_at_acc(ctxp->ptr(), gy.ptr(), grads_[static_cast<std::size_t>(wo.i)].ptr(), l, dm, dm);
            {
                Tensor<S>& gbo = grads_[static_cast<std::size_t>(bo.i)];
                for (int r = 0; r < l; ++r)
                    for (int c = 0; c < dm; ++c) gbo[c] += gy[static_cast<std::int64_t>(r) * dm + c];
            }
            Tensor<S> gq({l, dm}), gk({l, dm}), gv({l, dm});
            std::vector<S> qh(static_cast<std::size_t>(l) * dh), khh(static_cast<std::size_t>(l) * dh),
                vh(static_cast<std::size_t>(l) * dh), goh(static_cast<std::size_t>(l) * dh),
                ga(static_cast<std::size_t>(l) * l), gs(static_cast<std::size_t>(l) * l),
                gqh(static_cast<std::size_t>(l) * dh), gkh(static_cast<std::size_t>(l) * dh),
                gvh(static_cast<std::size_t>(l) * dh);
            for (int h = 0; h < heads; ++h) {
                gather_head(q->ptr(), qh.data(), l, dm, h, dh);
                gather_head(kk->ptr(), khh.data(), l, dm, h, dh);
                gather_head(vv->ptr(), vh.data(), l, dm, h, dh);
                gather_head(gctx.ptr(), goh.data(), l, dm, h, dh);
                const S* arow = attn->ptr() + static_cast<std::int64_t>(h) * l * l;
                std::fill(ga.begin(), ga.end(), S(0));
                mm_bt_acc(goh.data(), vh.data(), ga.data(), l, dh, l); // dA = dO V^T
                std::fill(gvh.begin(), gvh.end(), S(0));
                mm_at_acc(arow, goh.data(), gvh.data(), l, l, dh); // dV = A^T dO
                // softmax backward per row, then scale
                for (int r = 0; r < l; ++r) {
                    const S* a = arow + static_cast<std::int64_t>(r) * l;
                    const S* gar = ga.data() + static_cast<std::int64_t>(r) * l;
                    S* gsr = gs.data() + static_cast<std::int64_t>(r) * l;
                    double dot = 0;
                    for (int cCol = 0; cCol < l; ++cCol) dot += static_cast<double>(gar[cCol]) * a[cCol];
                    for (int cCol = 0; cCol < l; ++cCol) {
                        gsr[cCol] = static_cast<S>(a[cCol] * (static_cast<double>(gar[cCol]) - dot) * scale);
                    }
                }
                std::fill(gqh.begin(), gqh.end(), S(0));
                mm_acc(gs.data(), khh.data(), gqh.data(), l, l, dh); // dQ = dS K
                std::fill(gkh.begin(), gkh.end(), S(0));
                mm_at_acc(gs.data(), qh.data(), gkh.data(), l, l, dh); // dK = dS^T Q
                scatter_head(gqh.data(), gq.ptr(), l, dm, h, dh);
                scatter_head(gkh.data(), gk.ptr(), l, dm, h, dh);
                scatter_head(gvh.data(), gv.ptr(), l, dm, h, dh);
            }
            // back through the three input projections
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            auto unproject = [&](const Tensor<S>& gproj, NodeRef w, NodeRef b) {
                mm_bt_acc(gproj.ptr(), val(w).ptr(), gx.ptr(), l, dm, dm);
                mm_at_acc(xin.ptr(), gproj.ptr(), grads_[static_cast<std::size_t>(w.i)].ptr(), l, dm, dm);
                Tensor<S>& gb = grads_[static_cast<std::size_t>(b.i)];
                for (int r = 0; r < l; ++r)
                    for (int c = 0; c < dm; ++c) gb[c] += gproj[static_cast<std::int64_t>(r) * dm + c];
            };
            unproject(gq, wq, bq);
            unproject(gk, wk, bk);
            unproject(gv, wv_, bv_);
        });
    }

    // Same data, new dims; identity gradient.
    NodeRef reshape(NodeRef x, Dims dims) {
        const Tensor<S>& xv = val(x);
        if (numel(dims) != xv.size()) {
            throw ConfigError("reshape: element count mismatch " + dims_str(xv.dims) +
                              " -> " + dims_str(dims));
        }
        Tensor<S> y = Tensor<S>::from(std::move(dims), xv.data);
        return push(std::move(y), {x}, [this, x](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            for (std::int64_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
        });
    }

    // Prepends one row (the CLS vector) to a [L, D] sequence.
    NodeRef prepend_row(NodeRef r, NodeRef x) {
        const Tensor<S>& rv = val(r);
        const Tensor<S>& xv = val(x);
        if (rv.rank() != 1 || xv.rank() != 2 || rv.dim(0) != xv.dim(1)) {
            throw ConfigError("prepend_row: dims mismatch");
        }
        const int l = xv.dim(0), d = xv.dim(1);
        Tensor<S> y({l + 1, d});
        std::copy(rv.ptr(), rv.ptr() + d, y.ptr());
        std::copy(xv.ptr(), xv.ptr() + xv.size(), y.ptr() + d);
        return push(std::move(y), {r, x}, [this, r, x, l, d](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gr = grads_[static_cast<std::size_t>(r.i)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            for (int c = 0; c < d; ++c) gr[c] += gy[c];
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(l) * d; ++i) gx[i] += gy[d + i];
        });
    }

    NodeRef row(NodeRef x, int index) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 2 || index < 0 || index >= xv.dim(0)) throw ConfigError("row: out of range");
        const int d = xv.dim(1);
        Tensor<S> y({d});
        std::copy(xv.ptr() + static_cast<std::int64_t>(index) * d,
                  xv.ptr() + static_cast<std::int64_t>(index) * d + d, y.ptr());
        return push(std::move(y), {x}, [this, x, index, d](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            for (int c = 0; c < d; ++c) gx[static_cast<std::int64_t>(index) * d + c] += gy[c];
        });
    }

    NodeRef l2_normalize(NodeRef x) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 1) throw ConfigError("l2_normalize: need rank-1");
        double n2 = 0;
        for (std::int64_t i = 0; i < xv.size(); ++i) n2 += static_cast<double>(xv[i]) * xv[i];
        const double norm = std::sqrt(n2);
        if (norm < 1e-12) throw NumericError("l2_normalize: zero vector");
        Tensor<S> y(xv.dims);
        for (std::int64_t i = 0; i < xv.size(); ++i) y[i] = static_cast<S>(xv[i] / norm);
        return push(std::move(y), {x}, [this, x, norm](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            const Tensor<S>& yv = vals_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            double dot = 0;
            for (std::int64_t i = 0; i < yv.size(); ++i) dot += static_cast<double>(gy[i]) * yv[i];
            for (std::int64_t i = 0; i < yv.size(); ++i) {
                gx[i] += static_cast<S>((static_cast<double>(gy[i]) - dot * yv[i]) / norm);
            }
        });
    }

    NodeRef dot(NodeRef a, NodeRef b) {
        const Tensor<S>& av = val(a);
        const Tensor<S>& bv = val(b);
        if (!av.same_dims(bv) || av.rank() != 1) throw ConfigError("dot: need equal rank-1 dims");
        double acc = 0;
        for (std::int64_t i = 0; i < av.size(); ++i) acc += static_cast<double>(av[i]) * bv[i];
        Tensor<S> y = Tensor<S>::from({1}, {static_cast<S>(acc)});
        return push(std::move(y), {a, b}, [this, a, b](int self) {
            const S g = grads_[static_cast<std::size_t>(self)][0];
            const Tensor<S>& av = val(a);
            const Tensor<S>& bv = val(b);
            Tensor<S>& ga = grads_[static_cast<std::size_t>(a.i)];
            Tensor<S>& gb = grads_[static_cast<std::size_t>(b.i)];
            for (std::int64_t i = 0; i < av.size(); ++i) {
                ga[i] += g * bv[i];
                gb[i] += g * av[i];
            }
        });
    }

    // ---- scalar glue ([1]-shaped nodes) -------------------------------------

    NodeRef scale(NodeRef x, double c) {
        const Tensor<S>& xv = val(x);
        Tensor<S> y(xv.dims);
        for (std::int64_t i = 0; i < xv.size(); ++i) y[i] = static_cast<S>(xv[i] * c);
        check_finite(y, "scale");
        return push(std::move(y), {x}, [this, x, c](int self) {
            const Tensor<S>& gy = grads_[static_cast<std::size_t>(self)];
            Tensor<S>& gx = grads_[static_cast<std::size_t>(x.i)];
            for (std::int64_t i = 0; i < gy.size(); ++i) gx[i] += static_cast<S>(gy[i] * c);
        });
    }

    NodeRef exp1(NodeRef x) {
        scalar_only(x, "exp1");
        Tensor<S> y = Tensor<S>::from({1}, {static_cast<S>(std::exp(static_cast<double>(val(x)[0])))});
        check_finite(y, "exp1");
        return push(std::move(y), {x}, [this, x](int self) {
            const S g = grads_[static_cast<std::size_t>(self)][0];
            grads_[static_cast<std::size_t>(x.i)][0] += g * vals_[static_cast<std::size_t>(self)][0];
        });
    }

    NodeRef log1(NodeRef x) {
        scalar_only(x, "log1");
        const double v = val(x)[0];
        if (v <= 0) throw NumericError("log1: non-positive argument");
        Tensor<S> y = Tensor<S>::from({1}, {static_cast<S>(std::log(v))});
        return push(std::move(y), {x}, [this, x](int self) {
            const S g = grads_[static_cast<std::size_t>(self)][0];
            grads_[static_cast<std::size_t>(x.i)][0] += static_cast<S>(g / val(x)[0]);
        });
    }

    NodeRef sum_list(const std::vector<NodeRef>& xs) {
        if (xs.empty()) throw ConfigError("sum_list: empty");
        double acc = 0;
        for (NodeRef r : xs) {
            scalar_only(r, "sum_list");
            acc += static_cast<double>(val(r)[0]);
        }
        Tensor<S> y = Tensor<S>::from({1}, {static_cast<S>(acc)});
        std::vector<NodeRef> parents = xs;
        return push(std::move(y), parents, [this, parents](int self) {
            const S g = grads_[static_cast<std::size_t>(self)][0];
            for (NodeRef r : parents) grads_[static_cast<std::size_t>(r.i)][0] += g;
        });
    }

    NodeRef mean_list(const std::vector<NodeRef>& xs) {
        return scale(sum_list(xs), 1.0 / static_cast<double>(xs.size()));
    }

    NodeRef weighted_sum(const std::vector<NodeRef>& xs, const std::vector<double>& coeffs) {
        if (xs.size() != coeffs.size() || xs.empty()) throw ConfigError("weighted_sum: size mismatch");
        double acc = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            scalar_only(xs[i], "weighted_sum");
            acc += coeffs[i] * static_cast<double>(val(xs[i])[0]);
        }
        Tensor<S> y = Tensor<S>::from({1}, {static_cast<S>(acc)});
        std::vector<NodeRef> parents = xs;
        std::vector<double> cs = coeffs;
        return push(std::move(y), parents, [this, parents, cs](int self) {
            const S g = grads_[static_cast<std::size_t>(self)][0];
            for (std::size_t i = 0; i < parents.size(); ++i) {
                grads_[static_cast<std::size_t>(parents[i].i)][0] += static_cast<S>(g * cs[i]);
            }
        });
    }

    NodeRef add_scalars(NodeRef a, NodeRef b) { return sum_list({a, b}); }

    NodeRef sub_scalars(NodeRef a, NodeRef b) { return weighted_sum({a, b}, {1.0, -1.0}); }

    // ---- backward ------------------------------------------------------------

    // Seeds d(loss)=1, replays adjoints in reverse order, then accumulates
    // leaf gradients into their bound parameter entries.
    void backward(NodeRef loss) {
        if (!grad_enabled_) throw InvariantError("backward on a no-grad graph");
        if (val(loss).size() != 1) throw InvariantError("backward: loss must be scalar");
        grads_.clear();
        grads_.reserve(vals_.size());
        for (const auto& v : vals_) grads_.emplace_back(v.dims);
        grads_[static_cast<std::size_t>(loss.i)][0] = S(1);
        for (int i = static_cast<int>(back_.size()) - 1; i >= 0; --i) {
            if (back_[static_cast<std::size_t>(i)]) back_[static_cast<std::size_t>(i)](i);
        }
        for (auto& [node, entry] : sinks_) {
            const Tensor<S>& g = grads_[static_cast<std::size_t>(node)];
            check_finite(g, "backward");
            S* dst = entry->grad.ptr();
            for (std::int64_t i = 0; i < g.size(); ++i) dst[i] += g[i];
            entry->grad_fresh = true;
        }
    }

    std::size_t node_count() const { return vals_.size(); }

private:
    using BackFn = std::function<void(int)>;

    const Tensor<S>& val(NodeRef r) const { return vals_[static_cast<std::size_t>(r.i)]; }

    void scalar_only(NodeRef r, const char* who) const {
        if (val(r).size() != 1) throw ConfigError(std::string(who) + ": scalar node required");
    }

    NodeRef push(Tensor<S> v, std::vector<NodeRef> /*parents*/, BackFn fn = nullptr) {
        vals_.push_back(std::move(v));
        back_.push_back(grad_enabled_ ? std::move(fn) : nullptr);
        return NodeRef{static_cast<int>(vals_.size()) - 1};
    }

    // Ascending-value sum: a pure function of the value multiset, so any
    // reduction that uses it is exactly invariant to operand permutation.
    static S canonical_sum(std::vector<S>& terms) {
        std::sort(terms.begin(), terms.end());
        S acc = S(0);
        for (const S v : terms) acc += v;
        return acc;
    }

    // c[m,n] += a[m,k] b[k,n]; rows four at a time, per-row order unchanged
    static void mm_acc(const S* a, const S* b, S* c, std::int64_t m, std::int64_t k, std::int64_t n) {
        std::int64_t i = 0;
        for (; i + 4 <= m; i += 4) {
            const S* __restrict__ a0 = a + i * k;
            const S* __restrict__ a1 = a0 + k;
            const S* __restrict__ a2 = a1 + k;
            const S* __restrict__ a3 = a2 + k;
            S* __restrict__ c0 = c + i * n;
            S* __restrict__ c1 = c0 + n;
            S* __restrict__ c2 = c1 + n;
            S* __restrict__ c3 = c2 + n;
            for (std::int64_t p = 0; p < k; ++p) {
                const S* __restrict__ bp = b + p * n;
                const S v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
                for (std::int64_t j = 0; j < n; ++j) {
                    c0[j] += v0 * bp[j];
                    c1[j] += v1 * bp[j];
                    c2[j] += v2 * bp[j];
                    c3[j] += v3 * bp[j];
                }
            }
        }
        for (; i < m; ++i) {
            S* ci = c + i * n;
            const S* ai = a + i * k;
            for (std::int64_t p = 0; p < k; ++p) {
                const S av = ai[p];
                const S* bp = b + p * n;
                for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    }

    // c[m,n] += a[m,k] b[n,k]^T
    static void mm_bt_acc(const S* a, const S* b, S* c, std::int64_t m, std::int64_t k, std::int64_t n) {
        for (std::int64_t i = 0; i < m; ++i) {
            const S* ai = a + i * k;
            S* ci = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) {
                const S* bj = b + j * k;
                S acc = S(0);
                for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
                ci[j] += acc;
            }
        }
    }

    // c[k,n] += a[m,k]^T b[m,n]
    static void mm_at_acc(const S* a, const S* b, S* c, std::int64_t m, std::int64_t k, std::int64_t n) {
        for (std::int64_t i = 0; i < m; ++i) {
            const S* ai = a + i * k;
            const S* bi = b + i * n;
            for (std::int64_t p = 0; p < k; ++p) {
                const S av = ai[p];
                S* cp = c + p * n;
                for (std::int64_t j = 0; j < n; ++j) cp[j] += av * bi[j];
            }
        }
    }

    static void gather_head(const S* full, S* head, int l, int dm, int h, int dh) {
        for (int r = 0; r < l; ++r) {
            const S* src = full + static_cast<std::int64_t>(r) * dm + static_cast<std::int64_t>(h) * dh;
            std::copy(src, src + dh, head + static_cast<std::int64_t>(r) * dh);
        }
    }

    static void scatter_head(const S* head, S* full, int l, int dm, int h, int dh) {
        for (int r = 0; r < l; ++r) {
            const S* src = head + static_cast<std::int64_t>(r) * dh;
            S* dst = full + static_cast<std::int64_t>(r) * dm + static_cast<std::int64_t>(h) * dh;
            std::copy(src, src + dh, dst);
        }
    }

    std::vector<Tensor<S>> vals_;
    std::vector<Tensor<S>> grads_;
    std::vector<BackFn> back_;
    std::vector<std::pair<int, typename ParamStore<S>::Entry*>> sinks_;
    bool grad_enabled_;
};

} // namespace sdr::core
