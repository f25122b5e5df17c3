#ifndef ADVSWAP_IO_HPP
#define ADVSWAP_IO_HPP

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "advswap/tensor.hpp"

namespace advswap::io {

/// Quantize [0,1] floats to the 8-bit grid (round-to-nearest).
template <class T>
ImageT<T> quantize8(const ImageT<T>& img) {
    ImageT<T> q = img;
    for (auto& x : q.v) {
        const double c = std::min(1.0, std::max(0.0, static_cast<double>(x)));
        x = static_cast<T>(std::lround(c * 255.0) / 255.0);
    }
    return q;
}

template <class T>
cv::Mat to_mat8(const ImageT<T>& img) {
    if (img.shape.size() != 3 || img.dim(0) != 3)
        throw std::invalid_argument("to_mat8: expected 3xHxW image, got " + img.shape_str());
    const int H = img.dim(1), W = img.dim(2);
    cv::Mat m(H, W, CV_8UC3);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            auto& px = m.at<cv::Vec3b>(y, x);  // BGR
            for (int c = 0; c < 3; ++c) {
                const double v = std::min(1.0, std::max(0.0, static_cast<double>(img.at(c, y, x))));
                px[2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    return m;
}

template <class T>
ImageT<T> from_mat8(const cv::Mat& m) {
    if (m.type() != CV_8UC3) throw std::invalid_argument("from_mat8: expected CV_8UC3");
    ImageT<T> img({3, m.rows, m.cols});
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            const auto& px = m.at<cv::Vec3b>(y, x);
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = static_cast<T>(px[2 - c] / 255.0);
        }
    return img;
}

template <class T>
void save_png(const ImageT<T>& img, const std::string& path) {
    if (!cv::imwrite(path, to_mat8(img)))
        throw std::runtime_error("failed to write PNG: " + path);
}

template <class T>
ImageT<T> load_image(const std::string& path, int resize_to = 0) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("cannot decode image: " + path);
    if (resize_to > 0 && (m.rows != resize_to || m.cols != resize_to)) {
        cv::Mat r;
        cv::resize(m, r, cv::Size(resize_to, resize_to), 0, 0, cv::INTER_LINEAR);
        m = r;
    }
    return from_mat8<T>(m);
}

/// In-memory JPEG round trip at the given quality.
template <class T>
ImageT<T> jpeg_roundtrip(const ImageT<T>& img, int quality) {
    std::vector<uchar> buf;
    if (!cv::imencode(".jpg", to_mat8(img), buf, {cv::IMWRITE_JPEG_QUALITY, quality}))
        throw std::runtime_error("JPEG encode failed");
    cv::Mat dec = cv::imdecode(buf, cv::IMREAD_COLOR);
    if (dec.empty()) throw std::runtime_error("JPEG decode failed");
    return from_mat8<T>(dec);
}

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot hash missing file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0)
        h = fnv1a(buf, static_cast<std::size_t>(f.gcount()), h);
    return h;
}

inline std::string base64_encode(const std::vector<std::uint8_t>& data) {
    static const char tbl[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < data.size(); i += 3) {
        std::uint32_t n = data[i] << 16;
        if (i + 1 < data.size()) n |= data[i + 1] << 8;
        if (i + 2 < data.size()) n |= data[i + 2];
        out += tbl[(n >> 18) & 63];
        out += tbl[(n >> 12) & 63];
        out += i + 1 < data.size() ? tbl[(n >> 6) & 63] : '=';
        out += i + 2 < data.size() ? tbl[n & 63] : '=';
    }
    return out;
}

inline std::string png_data_uri(const cv::Mat& m) {
    std::vector<uchar> buf;
    cv::imencode(".png", m, buf);
    return "data:image/png;base64," + base64_encode(std::vector<std::uint8_t>(buf.begin(), buf.end()));
}

}  // namespace advswap::io

#endif  // ADVSWAP_IO_HPP
