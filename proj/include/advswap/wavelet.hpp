#ifndef ADVSWAP_WAVELET_HPP
#define ADVSWAP_WAVELET_HPP

#include <stdexcept>
#include <string>

#include "advswap/tensor.hpp"

namespace advswap {

/// One-level orthonormal Haar pyramid. Per channel: ll approximation,
/// lh horizontal detail, hl vertical detail, hh diagonal detail, each
/// at half resolution. Stacking all bands over channels gives the
/// 4C x H/2 x W/2 frequency representation of the source image.
template <class T>
struct WaveletPyramidT {
    TensorT<T> ll, lh, hl, hh;

    void check() const {
        require_same_shape(ll, lh, "pyramid ll/lh");
        require_same_shape(ll, hl, "pyramid ll/hl");
        require_same_shape(ll, hh, "pyramid ll/hh");
        if (ll.shape.size() != 3)
            throw std::invalid_argument("pyramid sub-bands must be rank-3, got " + ll.shape_str());
    }
};

using WaveletPyramid = WaveletPyramidT<float>;

/// Orthonormal single-level 2-D Haar analysis. Each disjoint 2x2 block
/// [[a,b],[c,d]] maps to
///   ll = (a+b+c+d)/2   lh = (a-b+c-d)/2
///   hl = (a+b-c-d)/2   hh = (a-b-c+d)/2
/// which is an orthonormal 4x4 map, so energy is preserved exactly and
/// the synthesis below is the exact inverse.
template <class T>
WaveletPyramidT<T> dwt(const ImageT<T>& img) {
    if (img.shape.size() != 3)
        throw std::invalid_argument("dwt: expected rank-3 image, got " + img.shape_str());
    const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
    if (H % 2 != 0)
        throw std::invalid_argument("dwt: height must be even, got H=" + std::to_string(H));
    if (W % 2 != 0)
        throw std::invalid_argument("dwt: width must be even, got W=" + std::to_string(W));

    WaveletPyramidT<T> p;
    const std::vector<int> half{C, H / 2, W / 2};
    p.ll = TensorT<T>(half);
    p.lh = TensorT<T>(half);
    p.hl = TensorT<T>(half);
    p.hh = TensorT<T>(half);

    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H / 2; ++y)
            for (int x = 0; x < W / 2; ++x) {
                const T a = img.at(c, 2 * y, 2 * x);
                const T b = img.at(c, 2 * y, 2 * x + 1);
                const T cc = img.at(c, 2 * y + 1, 2 * x);
                const T d = img.at(c, 2 * y + 1, 2 * x + 1);
                p.ll.at(c, y, x) = (a + b + cc + d) / T(2);
                p.lh.at(c, y, x) = (a - b + cc - d) / T(2);
                p.hl.at(c, y, x) = (a + b - cc - d) / T(2);
                p.hh.at(c, y, x) = (a - b - cc + d) / T(2);
            }
    return p;
}

/// Exact synthesis inverse of dwt. Output may transiently leave [0,1];
/// callers clamp.
template <class T>
ImageT<T> idwt(const WaveletPyramidT<T>& p) {
    p.check();
    const int C = p.ll.dim(0), h = p.ll.dim(1), w = p.ll.dim(2);
    ImageT<T> img({C, 2 * h, 2 * w});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const T ll = p.ll.at(c, y, x);
                const T lh = p.lh.at(c, y, x);
                const T hl = p.hl.at(c, y, x);
                const T hh = p.hh.at(c, y, x);
                img.at(c, 2 * y, 2 * x) = (ll + lh + hl + hh) / T(2);
                img.at(c, 2 * y, 2 * x + 1) = (ll - lh + hl - hh) / T(2);
                img.at(c, 2 * y + 1, 2 * x) = (ll + lh - hl - hh) / T(2);
                img.at(c, 2 * y + 1, 2 * x + 1) = (ll - lh - hl + hh) / T(2);
            }
    return img;
}

/// Stacks the three detail bands into a 3C x H/2 x W/2 tensor,
/// channel order lh, hl, hh.
template <class T>
TensorT<T> high_bands(const WaveletPyramidT<T>& p) {
    p.check();
    const int C = p.ll.dim(0), h = p.ll.dim(1), w = p.ll.dim(2);
    TensorT<T> out({3 * C, h, w});
    const std::size_t plane = static_cast<std::size_t>(C) * h * w;
    std::copy(p.lh.v.begin(), p.lh.v.end(), out.v.begin());
    std::copy(p.hl.v.begin(), p.hl.v.end(), out.v.begin() + plane);
    std::copy(p.hh.v.begin(), p.hh.v.end(), out.v.begin() + 2 * plane);
    return out;
}

/// Returns a pyramid with ll taken from `p` and detail bands replaced
/// by `bands` (3C x H/2 x W/2, order lh, hl, hh).
template <class T>
WaveletPyramidT<T> replace_high_bands(const WaveletPyramidT<T>& p, const TensorT<T>& bands) {
    p.check();
    const int C = p.ll.dim(0), h = p.ll.dim(1), w = p.ll.dim(2);
    if (bands.shape != std::vector<int>{3 * C, h, w})
        throw std::invalid_argument("replace_high_bands: expected bands shape (" +
                                    std::to_string(3 * C) + "," + std::to_string(h) + "," +
                                    std::to_string(w) + "), got " + bands.shape_str());
    WaveletPyramidT<T> out;
    out.ll = p.ll;
    const std::vector<int> half{C, h, w};
    out.lh = TensorT<T>(half);
    out.hl = TensorT<T>(half);
    out.hh = TensorT<T>(half);
    const std::size_t plane = static_cast<std::size_t>(C) * h * w;
    std::copy(bands.v.begin(), bands.v.begin() + plane, out.lh.v.begin());
    std::copy(bands.v.begin() + plane, bands.v.begin() + 2 * plane, out.hl.v.begin());
    std::copy(bands.v.begin() + 2 * plane, bands.v.end(), out.hh.v.begin());
    return out;
}

template <class T>
double pyramid_sq_norm(const WaveletPyramidT<T>& p) {
    return sq_norm(p.ll) + sq_norm(p.lh) + sq_norm(p.hl) + sq_norm(p.hh);
}

}  // namespace advswap

#endif  // ADVSWAP_WAVELET_HPP
