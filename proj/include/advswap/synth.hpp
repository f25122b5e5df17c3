#ifndef ADVSWAP_SYNTH_HPP
#define ADVSWAP_SYNTH_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "advswap/io.hpp"
#include "advswap/tensor.hpp"

namespace advswap {

/// Procedural desk-scale dataset: up to 10 texture classes. Class
/// identity is carried by a fine oriented grating (high-frequency
/// content); a random geometric figure, random foreground hue and pixel
/// noise are class-independent nuisance. Emulates texture-biased image
/// collections in the class-folder layout the loader expects.
namespace synth {

namespace detail {

struct Rgb { double r, g, b; };

/// Any-hue foreground color so classes are separated by pattern, not
/// color: the surrogate has to learn spatial structure.
inline Rgb random_color(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double h = u01(rng) * 6.0;
    const double s = 0.6 + 0.4 * u01(rng);
    const double v = 0.7 + 0.3 * u01(rng);
    const double c = v * s, x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0)), m = v - c;
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h) % 6) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        case 5: r = c; b = x; break;
    }
    return {r + m, g + m, b + m};
}

template <class T>
ImageT<T> render(int cls, int res, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.10);

    // class signal: a fine oriented grating. 18-degree steps keep ten
    // orientations distinct mod 180; the random phase forces the
    // classifier to learn orientation, not pixel positions.
    const double theta = cls * 3.14159265358979323846 / 10.0;
    const double period = (cls % 2 == 0) ? 3.0 : 4.0;
    const double kx = std::cos(theta) * 2.0 * 3.14159265358979323846 / period;
    const double ky = std::sin(theta) * 2.0 * 3.14159265358979323846 / period;
    const double phase = u01(rng) * 2.0 * 3.14159265358979323846;
    const double tex_amp = 0.045 + 0.012 * u01(rng);

    // nuisance geometry: any of the figures, any hue, low contrast
    const int figure = static_cast<int>(rng() % 10);
    const Rgb fg = random_color(rng);
    const double bg_base = 0.38 + 0.12 * u01(rng);
    const double cx = res / 2.0 + (u01(rng) - 0.5) * res * 0.18;
    const double cy = res / 2.0 + (u01(rng) - 0.5) * res * 0.18;
    const double scale = res * (0.28 + 0.08 * u01(rng));
    const double amp = 0.12 + 0.06 * u01(rng);
    const int gperiod = std::max(4, res / 5);

    ImageT<T> img({3, res, res});
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double r = std::sqrt(dx * dx + dy * dy);
            bool on = false;
            switch (figure) {
                case 0: on = r < scale; break;                                     // disc
                case 1: on = r < scale && r > scale * 0.55; break;                 // ring
                case 2: on = (y / (gperiod / 2)) % 2 == 0; break;                  // h stripes
                case 3: on = (x / (gperiod / 2)) % 2 == 0; break;                  // v stripes
                case 4: on = ((x + y) / (gperiod / 2)) % 2 == 0; break;            // diagonal
                case 5: on = ((x / (gperiod / 2)) + (y / (gperiod / 2))) % 2 == 0; break;  // checker
                case 6: on = dy > -scale && dy < scale && std::abs(dx) < (dy + scale) * 0.5; break;  // triangle
                case 7: on = std::abs(dx) < scale * 0.28 || std::abs(dy) < scale * 0.28; break;      // cross
                case 8: on = std::fmod(r, static_cast<double>(gperiod)) < gperiod * 0.5; break;      // radial rings
                case 9: on = std::max(std::abs(dx), std::abs(dy)) < scale &&
                             std::max(std::abs(dx), std::abs(dy)) > scale * 0.6; break;  // square outline
            }
            const double tex = tex_amp * std::cos(kx * x + ky * y + phase);
            const double fr = (on ? bg_base + amp * fg.r : bg_base) + tex;
            const double fgn = (on ? bg_base + amp * fg.g : bg_base) + tex;
            const double fb = (on ? bg_base + amp * fg.b : bg_base) + tex;
            img.at(0, y, x) = static_cast<T>(std::min(1.0, std::max(0.0, fr + noise(rng))));
            img.at(1, y, x) = static_cast<T>(std::min(1.0, std::max(0.0, fgn + noise(rng))));
            img.at(2, y, x) = static_cast<T>(std::min(1.0, std::max(0.0, fb + noise(rng))));
        }
    return img;
}

}  // namespace detail

/// Writes <root>/class_NN/img_MMMM.png for each class and sample.
inline void generate_dataset(const std::string& root, int classes, int per_class, int resolution,
                             std::uint64_t seed) {
    namespace fs = std::filesystem;
    if (classes < 2 || classes > 10)
        throw std::invalid_argument("generate_dataset: classes must be in [2,10]");
    if (per_class < 1) throw std::invalid_argument("generate_dataset: per_class must be >= 1");
    for (int c = 0; c < classes; ++c) {
        char cname[32];
        std::snprintf(cname, sizeof(cname), "class_%02d", c);
        const fs::path dir = fs::path(root) / cname;
        fs::create_directories(dir);
        for (int i = 0; i < per_class; ++i) {
            std::mt19937_64 rng(seed ^ (static_cast<std::uint64_t>(c) << 32) ^
                                static_cast<std::uint64_t>(i));
            const auto img = detail::render<float>(c, resolution, rng);
            char fname[32];
            std::snprintf(fname, sizeof(fname), "img_%04d.png", i);
            io::save_png(img, (dir / fname).string());
        }
    }
}

}  // namespace synth
}  // namespace advswap

#endif  // ADVSWAP_SYNTH_HPP
