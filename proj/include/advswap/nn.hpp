#ifndef ADVSWAP_NN_HPP
#define ADVSWAP_NN_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "advswap/tensor.hpp"

namespace advswap::nn {

/// Weights of one 2-D convolution, kernel k x k, zero padding pad,
/// stride `stride`. Weight layout [out][in][ky][kx], flat.
template <class T>
struct Conv2dT {
    int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
    std::vector<T> w;
    std::vector<T> b;

    Conv2dT() = default;
    Conv2dT(int in, int out, int kernel, int str)
        : in_c(in), out_c(out), k(kernel), stride(str), pad(kernel / 2) {
        w.assign(static_cast<std::size_t>(out) * in * kernel * kernel, T(0));
        b.assign(static_cast<std::size_t>(out), T(0));
    }

    std::size_t param_count() const { return w.size() + b.size(); }

    int out_h(int h) const { return (h + 2 * pad - k) / stride + 1; }
    int out_w(int w_) const { return (w_ + 2 * pad - k) / stride + 1; }

    void he_init(std::mt19937_64& rng) {
        const double scale = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
        std::normal_distribution<double> dist(0.0, scale);
        for (auto& x : w) x = static_cast<T>(dist(rng));
        for (auto& x : b) x = T(0);
    }
};

template <class T>
TensorT<T> conv2d_forward(const Conv2dT<T>& c, const TensorT<T>& x) {
    if (x.shape.size() != 3 || x.dim(0) != c.in_c)
        throw std::invalid_argument("conv2d: input shape " + x.shape_str() + " does not match in_c=" +
                                    std::to_string(c.in_c));
    const int H = x.dim(1), W = x.dim(2);
    const int Ho = c.out_h(H), Wo = c.out_w(W);
    TensorT<T> y({c.out_c, Ho, Wo});

    if (c.stride == 1) {
        // row-span formulation: each (tap, input plane) contributes one
        // contiguous axpy per output row, which vectorizes well
        const std::size_t xplane = static_cast<std::size_t>(H) * W;
        const std::size_t yplane = static_cast<std::size_t>(Ho) * Wo;
        for (int o = 0; o < c.out_c; ++o) {
            T* yp = &y.v[static_cast<std::size_t>(o) * yplane];
            std::fill(yp, yp + yplane, c.b[o]);
            for (int i = 0; i < c.in_c; ++i) {
                const T* xp = &x.v[static_cast<std::size_t>(i) * xplane];
                const T* wk = &c.w[((static_cast<std::size_t>(o) * c.in_c + i) * c.k) * c.k];
                for (int ky = 0; ky < c.k; ++ky) {
                    const int oy_lo = std::max(0, c.pad - ky);
                    const int oy_hi = std::min(Ho - 1, H - 1 - ky + c.pad);
                    for (int kx = 0; kx < c.k; ++kx) {
                        const T wv = wk[ky * c.k + kx];
                        if (wv == T(0)) continue;
                        const int ox_lo = std::max(0, c.pad - kx);
                        const int ox_hi = std::min(Wo - 1, W - 1 - kx + c.pad);
                        const int shift = kx - c.pad;
                        for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                            T* yr = yp + static_cast<std::size_t>(oy) * Wo;
                            const T* xr = xp + static_cast<std::size_t>(oy - c.pad + ky) * W + shift;
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) yr[ox] += wv * xr[ox];
                        }
                    }
                }
            }
        }
        return y;
    }

    for (int o = 0; o < c.out_c; ++o) {
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                T acc = c.b[o];
                for (int i = 0; i < c.in_c; ++i) {
                    const T* wrow = &c.w[((static_cast<std::size_t>(o) * c.in_c + i) * c.k) * c.k];
                    for (int ky = 0; ky < c.k; ++ky) {
                        const int iy = oy * c.stride - c.pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (int kx = 0; kx < c.k; ++kx) {
                            const int ix = ox * c.stride - c.pad + kx;
                            if (ix < 0 || ix >= W) continue;
                            acc += wrow[ky * c.k + kx] * x.at(i, iy, ix);
                        }
                    }
                }
                y.at(o, oy, ox) = acc;
            }
    }
    return y;
}

/// Accumulates parameter gradients into gw/gb (same layout as w/b) and,
/// when gx is non-null, input gradients into *gx (pre-sized, zeroed by caller
/// or accumulated onto).
template <class T>
void conv2d_backward(const Conv2dT<T>& c, const TensorT<T>& x, const TensorT<T>& gy,
                     T* gw, T* gb, TensorT<T>* gx) {
    const int H = x.dim(1), W = x.dim(2);
    const int Ho = gy.dim(1), Wo = gy.dim(2);

    if (c.stride == 1) {
        const std::size_t xplane = static_cast<std::size_t>(H) * W;
        const std::size_t yplane = static_cast<std::size_t>(Ho) * Wo;
        for (int o = 0; o < c.out_c; ++o) {
            const T* gyp = &gy.v[static_cast<std::size_t>(o) * yplane];
            if (gb) {
                T s = T(0);
                for (std::size_t j = 0; j < yplane; ++j) s += gyp[j];
                gb[o] += s;
            }
            for (int i = 0; i < c.in_c; ++i) {
                const T* xp = &x.v[static_cast<std::size_t>(i) * xplane];
                const std::size_t wbase = ((static_cast<std::size_t>(o) * c.in_c + i) * c.k) * c.k;
                T* gxp = gx ? &gx->v[static_cast<std::size_t>(i) * xplane] : nullptr;
                for (int ky = 0; ky < c.k; ++ky) {
                    const int oy_lo = std::max(0, c.pad - ky);
                    const int oy_hi = std::min(Ho - 1, H - 1 - ky + c.pad);
                    for (int kx = 0; kx < c.k; ++kx) {
                        const int ox_lo = std::max(0, c.pad - kx);
                        const int ox_hi = std::min(Wo - 1, W - 1 - kx + c.pad);
                        const int shift = kx - c.pad;
                        if (gw) {
                            T s = T(0);
                            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                const T* gr = gyp + static_cast<std::size_t>(oy) * Wo;
                                const T* xr = xp + static_cast<std::size_t>(oy - c.pad + ky) * W + shift;
                                for (int ox = ox_lo; ox <= ox_hi; ++ox) s += gr[ox] * xr[ox];
                            }
                            gw[wbase + ky * c.k + kx] += s;
                        }
                        if (gxp) {
                            const T wv = c.w[wbase + ky * c.k + kx];
                            if (wv == T(0)) continue;
                            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                const T* gr = gyp + static_cast<std::size_t>(oy) * Wo;
                                T* xr = gxp + static_cast<std::size_t>(oy - c.pad + ky) * W + shift;
                                for (int ox = ox_lo; ox <= ox_hi; ++ox) xr[ox] += wv * gr[ox];
                            }
                        }
                    }
                }
            }
        }
        return;
    }

    for (int o = 0; o < c.out_c; ++o) {
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                const T g = gy.at(o, oy, ox);
                if (gb) gb[o] += g;
                for (int i = 0; i < c.in_c; ++i) {
                    const std::size_t wbase = ((static_cast<std::size_t>(o) * c.in_c + i) * c.k) * c.k;
                    for (int ky = 0; ky < c.k; ++ky) {
                        const int iy = oy * c.stride - c.pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (int kx = 0; kx < c.k; ++kx) {
                            const int ix = ox * c.stride - c.pad + kx;
                            if (ix < 0 || ix >= W) continue;
                            if (gw) gw[wbase + ky * c.k + kx] += g * x.at(i, iy, ix);
                            if (gx) gx->at(i, iy, ix) += c.w[wbase + ky * c.k + kx] * g;
                        }
                    }
                }
            }
    }
}

template <class T>
TensorT<T> relu_forward(const TensorT<T>& x) {
    TensorT<T> y = x;
    for (auto& v : y.v) v = v > T(0) ? v : T(0);
    return y;
}

template <class T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& gy) {
    TensorT<T> gx = gy;
    for (std::size_t i = 0; i < gx.numel(); ++i)
        if (x.v[i] <= T(0)) gx.v[i] = T(0);
    return gx;
}

/// 2x2 average pooling, stride 2; even spatial dims required.
template <class T>
TensorT<T> avgpool2_forward(const TensorT<T>& x) {
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (H % 2 || W % 2) throw std::invalid_argument("avgpool2: odd spatial dims " + x.shape_str());
    TensorT<T> y({C, H / 2, W / 2});
    for (int c = 0; c < C; ++c)
        for (int yy = 0; yy < H / 2; ++yy)
            for (int xx = 0; xx < W / 2; ++xx)
                y.at(c, yy, xx) = (x.at(c, 2 * yy, 2 * xx) + x.at(c, 2 * yy, 2 * xx + 1) +
                                   x.at(c, 2 * yy + 1, 2 * xx) + x.at(c, 2 * yy + 1, 2 * xx + 1)) /
                                  T(4);
    return y;
}

template <class T>
TensorT<T> avgpool2_backward(const std::vector<int>& in_shape, const TensorT<T>& gy) {
    TensorT<T> gx(in_shape);
    const int C = gx.dim(0);
    for (int c = 0; c < C; ++c)
        for (int yy = 0; yy < gy.dim(1); ++yy)
            for (int xx = 0; xx < gy.dim(2); ++xx) {
                const T g = gy.at(c, yy, xx) / T(4);
                gx.at(c, 2 * yy, 2 * xx) += g;
                gx.at(c, 2 * yy, 2 * xx + 1) += g;
                gx.at(c, 2 * yy + 1, 2 * xx) += g;
                gx.at(c, 2 * yy + 1, 2 * xx + 1) += g;
            }
    return gx;
}

/// Fully connected layer over a flattened input.
template <class T>
struct LinearT {
    int in_n = 0, out_n = 0;
    std::vector<T> w;  // [out][in]
    std::vector<T> b;

    LinearT() = default;
    LinearT(int in, int out) : in_n(in), out_n(out) {
        w.assign(static_cast<std::size_t>(in) * out, T(0));
        b.assign(static_cast<std::size_t>(out), T(0));
    }
    std::size_t param_count() const { return w.size() + b.size(); }

    void he_init(std::mt19937_64& rng) {
        const double scale = std::sqrt(2.0 / in_n);
        std::normal_distribution<double> dist(0.0, scale);
        for (auto& x : w) x = static_cast<T>(dist(rng));
        for (auto& x : b) x = T(0);
    }
};

template <class T>
TensorT<T> linear_forward(const LinearT<T>& l, const TensorT<T>& x) {
    if (static_cast<int>(x.numel()) != l.in_n)
        throw std::invalid_argument("linear: input numel mismatch");
    TensorT<T> y({l.out_n});
    for (int o = 0; o < l.out_n; ++o) {
        T acc = l.b[o];
        const T* wr = &l.w[static_cast<std::size_t>(o) * l.in_n];
        for (int i = 0; i < l.in_n; ++i) acc += wr[i] * x.v[i];
        y.v[o] = acc;
    }
    return y;
}

template <class T>
void linear_backward(const LinearT<T>& l, const TensorT<T>& x, const TensorT<T>& gy,
                     T* gw, T* gb, TensorT<T>* gx) {
    for (int o = 0; o < l.out_n; ++o) {
        const T g = gy.v[o];
        if (gb) gb[o] += g;
        const T* wr = &l.w[static_cast<std::size_t>(o) * l.in_n];
        for (int i = 0; i < l.in_n; ++i) {
            if (gw) gw[static_cast<std::size_t>(o) * l.in_n + i] += g * x.v[i];
            if (gx) gx->v[i] += wr[i] * g;
        }
    }
}

template <class T>
TensorT<T> softmax(const TensorT<T>& logits) {
    TensorT<T> p = logits;
    T mx = p.v[0];
    for (T x : p.v) mx = std::max(mx, x);
    double sum = 0;
    for (auto& x : p.v) {
        x = static_cast<T>(std::exp(static_cast<double>(x - mx)));
        sum += static_cast<double>(x);
    }
    for (auto& x : p.v) x = static_cast<T>(static_cast<double>(x) / sum);
    return p;
}

/// Channel concatenation for dense blocks.
template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        throw std::invalid_argument("concat_channels: spatial mismatch");
    TensorT<T> r({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.v.begin(), a.v.end(), r.v.begin());
    std::copy(b.v.begin(), b.v.end(), r.v.begin() + a.numel());
    return r;
}

template <class T>
TensorT<T> slice_channels(const TensorT<T>& x, int c0, int c1) {
    TensorT<T> r({c1 - c0, x.dim(1), x.dim(2)});
    const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    std::copy(x.v.begin() + c0 * plane, x.v.begin() + c1 * plane, r.v.begin());
    return r;
}

/// Adam over one flat parameter vector; conventional moment decays.
template <class T>
struct AdamT {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    long t = 0;

    void step(std::vector<T>& params, const std::vector<T>& grads, double lr) {
        if (m.size() != params.size()) {
            m.assign(params.size(), 0.0);
            v.assign(params.size(), 0.0);
            t = 0;
        }
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = static_cast<double>(grads[i]);
            m[i] = beta1 * m[i] + (1 - beta1) * g;
            v[i] = beta2 * v[i] + (1 - beta2) * g * g;
            const double mh = m[i] / bc1, vh = v[i] / bc2;
            params[i] = static_cast<T>(static_cast<double>(params[i]) - lr * mh / (std::sqrt(vh) + eps));
        }
    }
};

}  // namespace advswap::nn

#endif  // ADVSWAP_NN_HPP
