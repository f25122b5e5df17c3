#ifndef ADVSWAP_TENSOR_HPP
#define ADVSWAP_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace advswap {

/// Dense row-major tensor. The pipeline mostly uses rank-3 (C,H,W)
/// for images and sub-band stacks, rank-1 for logits.
template <class T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> v;

    TensorT() = default;
    explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
        v.assign(numel_of(shape), T(0));
    }
    TensorT(std::vector<int> s, T fill) : shape(std::move(s)) {
        v.assign(numel_of(shape), fill);
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t numel() const { return v.size(); }
    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    T& operator[](std::size_t i) { return v[i]; }
    const T& operator[](std::size_t i) const { return v[i]; }

    // rank-3 access
    T& at(int c, int y, int x) {
        return v[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    const T& at(int c, int y, int x) const {
        return v[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }

    bool finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

template <class T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
}

template <class T>
TensorT<T> operator+(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "tensor add");
    TensorT<T> r = a;
    for (std::size_t i = 0; i < r.numel(); ++i) r.v[i] += b.v[i];
    return r;
}

template <class T>
TensorT<T> operator-(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "tensor sub");
    TensorT<T> r = a;
    for (std::size_t i = 0; i < r.numel(); ++i) r.v[i] -= b.v[i];
    return r;
}

template <class T>
TensorT<T> operator*(T s, const TensorT<T>& a) {
    TensorT<T> r = a;
    for (auto& x : r.v) x *= s;
    return r;
}

/// Sum of squares accumulated in double regardless of storage type.
template <class T>
double sq_norm(const TensorT<T>& a) {
    double s = 0;
    for (T x : a.v) s += static_cast<double>(x) * static_cast<double>(x);
    return s;
}

template <class T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.v[i]) - static_cast<double>(b.v[i])));
    return m;
}

template <class T>
TensorT<T> clamp01(const TensorT<T>& a) {
    TensorT<T> r = a;
    for (auto& x : r.v) x = std::min(T(1), std::max(T(0), x));
    return r;
}

/// Pipeline images are rank-3 (C,H,W) with intensities in [0,1].
template <class T>
using ImageT = TensorT<T>;

using Tensor = TensorT<float>;
using Image = ImageT<float>;

template <class T>
void check_image(const ImageT<T>& img, const char* what = "image") {
    if (img.shape.size() != 3)
        throw std::invalid_argument(std::string(what) + ": expected rank-3 (C,H,W), got " + img.shape_str());
    for (T x : img.v)
        if (!(x >= T(0) && x <= T(1)))
            throw std::invalid_argument(std::string(what) + ": pixel outside [0,1]");
}

}  // namespace advswap

#endif  // ADVSWAP_TENSOR_HPP
