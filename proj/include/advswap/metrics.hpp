#ifndef ADVSWAP_METRICS_HPP
#define ADVSWAP_METRICS_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "advswap/tensor.hpp"

namespace advswap {

/// Imperceptibility record; all values on the [0,1] pixel scale,
/// dynamic range 1.0. psnr is +inf for identical images (serialized as
/// null by the artifact writers).
struct MetricRecord {
    double mse = 0;
    double psnr = 0;
    double ssim = 0;
    double l2 = 0;
    double linf = 0;
    std::optional<double> lpips;
};

/// Plug-in learned perceptual distance (external weights); unused unless
/// supplied.
template <class T>
using LpipsFn = std::function<double(const ImageT<T>&, const ImageT<T>&)>;

namespace detail {

inline std::vector<double> gaussian_kernel_11(double sigma = 1.5) {
    std::vector<double> k(11);
    double sum = 0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5;
        k[i] = std::exp(-d * d / (2 * sigma * sigma));
        sum += k[i];
    }
    for (auto& x : k) x /= sum;
    return k;
}

}  // namespace detail

/// Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), K1=0.01,
/// K2=0.03, dynamic range 1.0. The map is evaluated at window centers
/// where the full window fits, then averaged over positions and channels.
template <class T>
double ssim(const ImageT<T>& a, const ImageT<T>& b) {
    require_same_shape(a, b, "ssim");
    const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
    if (H < 11 || W < 11) throw std::invalid_argument("ssim: image smaller than 11x11 window");
    static const std::vector<double> k = detail::gaussian_kernel_11();
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

    double total = 0;
    std::size_t count = 0;
    for (int c = 0; c < C; ++c) {
        for (int y = 5; y < H - 5; ++y)
            for (int x = 5; x < W - 5; ++x) {
                double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
                for (int dy = -5; dy <= 5; ++dy)
                    for (int dx = -5; dx <= 5; ++dx) {
                        const double w = k[dy + 5] * k[dx + 5];
                        const double pa = a.at(c, y + dy, x + dx);
                        const double pb = b.at(c, y + dy, x + dx);
                        mu_a += w * pa;
                        mu_b += w * pb;
                        aa += w * pa * pa;
                        bb += w * pb * pb;
                        ab += w * pa * pb;
                    }
                const double va = aa - mu_a * mu_a;
                const double vb = bb - mu_b * mu_b;
                const double cov = ab - mu_a * mu_b;
                total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                         ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
                ++count;
            }
    }
    return total / static_cast<double>(count);
}

template <class T>
MetricRecord compute_metrics(const ImageT<T>& orig, const ImageT<T>& adv,
                             const LpipsFn<T>& lpips_plugin = nullptr) {
    require_same_shape(orig, adv, "compute_metrics");
    MetricRecord r;
    double sq = 0;
    for (std::size_t i = 0; i < orig.numel(); ++i) {
        const double d = static_cast<double>(adv.v[i]) - static_cast<double>(orig.v[i]);
        sq += d * d;
        r.linf = std::max(r.linf, std::abs(d));
    }
    r.mse = sq / static_cast<double>(orig.numel());
    r.l2 = std::sqrt(sq);
    r.psnr = r.mse == 0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / r.mse);
    r.ssim = ssim(orig, adv);
    if (lpips_plugin) r.lpips = lpips_plugin(orig, adv);
    return r;
}

/// One attacked image's classification outcome.
struct Outcome {
    int predicted = -1;
    int target = -1;
    int true_label = -1;
};

enum class AsrMode { Targeted, Untargeted };

inline double asr(const std::vector<Outcome>& outcomes, AsrMode mode) {
    if (outcomes.empty()) throw std::invalid_argument("asr: empty outcome list");
    std::size_t hits = 0;
    for (const auto& o : outcomes) {
        if (mode == AsrMode::Targeted ? (o.predicted == o.target)
                                      : (o.predicted != o.true_label))
            ++hits;
    }
    return static_cast<double>(hits) / outcomes.size();
}

inline double recognition_accuracy(const std::vector<Outcome>& outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("recognition_accuracy: empty outcome list");
    std::size_t hits = 0;
    for (const auto& o : outcomes)
        if (o.predicted == o.true_label) ++hits;
    return static_cast<double>(hits) / outcomes.size();
}

}  // namespace advswap

#endif  // ADVSWAP_METRICS_HPP
