#ifndef ADVSWAP_DEFENSES_HPP
#define ADVSWAP_DEFENSES_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "advswap/io.hpp"
#include "advswap/tensor.hpp"

namespace advswap {

/// Uniform JPEG re-compression defense. Deterministic for a fixed codec
/// build; the CLI records the codec identity in its reports.
template <class T>
ImageT<T> jpeg_defense(const ImageT<T>& image, int quality) {
    if (quality < 1 || quality > 100)
        throw std::invalid_argument("jpeg_defense: quality must be in [1,100], got " +
                                    std::to_string(quality));
    return io::jpeg_roundtrip(image, quality);
}

/// Shield-style stochastic local quantization: block_size x block_size
/// tiles (edge tiles smaller), each JPEG-compressed at a quality drawn
/// uniformly from `qualities` by the seeded RNG, row-major tile order.
template <class T>
ImageT<T> shield_slq(const ImageT<T>& image, const std::vector<int>& qualities,
                     int block_size, std::uint64_t seed) {
    if (qualities.empty()) throw std::invalid_argument("shield_slq: empty quality list");
    for (int q : qualities)
        if (q < 1 || q > 100)
            throw std::invalid_argument("shield_slq: quality out of range: " + std::to_string(q));
    if (block_size < 1) throw std::invalid_argument("shield_slq: block_size must be >= 1");

    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    ImageT<T> out({C, H, W});
    std::mt19937_64 rng(seed);
    for (int y0 = 0; y0 < H; y0 += block_size)
        for (int x0 = 0; x0 < W; x0 += block_size) {
            const int th = std::min(block_size, H - y0);
            const int tw = std::min(block_size, W - x0);
            const int q = qualities[rng() % qualities.size()];
            ImageT<T> tile({C, th, tw});
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < th; ++y)
                    for (int x = 0; x < tw; ++x)
                        tile.at(c, y, x) = image.at(c, y0 + y, x0 + x);
            ImageT<T> comp = io::jpeg_roundtrip(tile, q);
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < th; ++y)
                    for (int x = 0; x < tw; ++x)
                        out.at(c, y0 + y, x0 + x) = comp.at(c, y, x);
        }
    return out;
}

}  // namespace advswap

#endif  // ADVSWAP_DEFENSES_HPP
