#ifndef ADVSWAP_MODELS_HPP
#define ADVSWAP_MODELS_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "advswap/nn.hpp"
#include "advswap/tensor.hpp"

namespace advswap {

struct TrainingDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace net {

enum class LayerKind { Conv, Pool, Residual, Inception, Linear };

template <class T>
struct LayerT {
    LayerKind kind{};
    bool relu = true;                 // Conv only
    nn::Conv2dT<T> conv;              // Conv
    nn::Conv2dT<T> rconv1, rconv2;    // Residual
    nn::Conv2dT<T> b1, b3, b5;        // Inception branches (1x1 / 3x3 / 5x5)
    nn::LinearT<T> lin;               // Linear (flattens its input)

    template <class Fn>
    void for_each_array(Fn&& fn) {
        switch (kind) {
            case LayerKind::Conv: fn(conv.w); fn(conv.b); break;
            case LayerKind::Pool: break;
            case LayerKind::Residual:
                fn(rconv1.w); fn(rconv1.b); fn(rconv2.w); fn(rconv2.b); break;
            case LayerKind::Inception:
                fn(b1.w); fn(b1.b); fn(b3.w); fn(b3.b); fn(b5.w); fn(b5.b); break;
            case LayerKind::Linear: fn(lin.w); fn(lin.b); break;
        }
    }
    template <class Fn>
    void for_each_array(Fn&& fn) const {
        const_cast<LayerT*>(this)->for_each_array([&](auto& a) { fn(std::as_const(a)); });
    }
};

template <class T>
struct LayerFwdT {
    TensorT<T> in;
    TensorT<T> z;              // Conv pre-activation / Residual z2+x
    TensorT<T> r1z, r1a;       // Residual internals
    TensorT<T> i1z, i3z, i5z;  // Inception branch pre-activations
};

/// Small sequential conv net; explicit caches keep forward const so a
/// classifier can be shared read-only across attack workers.
template <class T>
struct NetT {
    std::vector<LayerT<T>> layers;

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers)
            l.for_each_array([&](const std::vector<T>& a) { n += a.size(); });
        return n;
    }

    template <class Fn>
    void for_each_array(Fn&& fn) {
        for (auto& l : layers) l.for_each_array(fn);
    }
    template <class Fn>
    void for_each_array(Fn&& fn) const {
        for (const auto& l : layers) l.for_each_array(fn);
    }

    TensorT<T> forward(const TensorT<T>& x, std::vector<LayerFwdT<T>>* cache = nullptr) const {
        if (cache) cache->assign(layers.size(), {});
        TensorT<T> cur = x;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            LayerFwdT<T>* cc = cache ? &(*cache)[i] : nullptr;
            if (cc) cc->in = cur;
            switch (l.kind) {
                case LayerKind::Conv: {
                    TensorT<T> z = nn::conv2d_forward(l.conv, cur);
                    if (cc) cc->z = z;
                    cur = l.relu ? nn::relu_forward(z) : std::move(z);
                    break;
                }
                case LayerKind::Pool:
                    cur = nn::avgpool2_forward(cur);
                    break;
                case LayerKind::Residual: {
                    TensorT<T> z1 = nn::conv2d_forward(l.rconv1, cur);
                    TensorT<T> a1 = nn::relu_forward(z1);
                    TensorT<T> s = nn::conv2d_forward(l.rconv2, a1) + cur;
                    if (cc) { cc->r1z = std::move(z1); cc->r1a = std::move(a1); cc->z = s; }
                    cur = nn::relu_forward(s);
                    break;
                }
                case LayerKind::Inception: {
                    TensorT<T> z1 = nn::conv2d_forward(l.b1, cur);
                    TensorT<T> z3 = nn::conv2d_forward(l.b3, cur);
                    TensorT<T> z5 = nn::conv2d_forward(l.b5, cur);
                    TensorT<T> cat = nn::concat_channels(nn::concat_channels(z1, z3), z5);
                    if (cc) { cc->i1z = std::move(z1); cc->i3z = std::move(z3); cc->i5z = std::move(z5); }
                    cur = nn::relu_forward(cat);
                    break;
                }
                case LayerKind::Linear: {
                    TensorT<T> flat({static_cast<int>(cur.numel())});
                    flat.v = cur.v;
                    cur = nn::linear_forward(l.lin, flat);
                    break;
                }
            }
        }
        return cur;
    }

    /// Backprop from logits gradient; param grads accumulated into the
    /// flat buffer (net array order). Returns the input gradient when
    /// want_input_grad is set.
    TensorT<T> backward(const std::vector<LayerFwdT<T>>& cache, const TensorT<T>& g_logits,
                        std::vector<T>* grads, bool want_input_grad) const {
        std::vector<std::size_t> offs(layers.size() + 1, 0);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            std::size_t n = 0;
            layers[i].for_each_array([&](const std::vector<T>& a) { n += a.size(); });
            offs[i + 1] = offs[i] + n;
        }
        TensorT<T> g = g_logits;
        for (std::size_t i = layers.size(); i-- > 0;) {
            const auto& l = layers[i];
            const auto& cc = cache[i];
            T* gp = grads ? grads->data() + offs[i] : nullptr;
            const bool need_gx = want_input_grad || i > 0;
            switch (l.kind) {
                case LayerKind::Conv: {
                    TensorT<T> gz = l.relu ? nn::relu_backward(cc.z, g) : g;
                    TensorT<T> gx(cc.in.shape);
                    nn::conv2d_backward(l.conv, cc.in, gz,
                                        gp, gp ? gp + l.conv.w.size() : nullptr,
                                        need_gx ? &gx : nullptr);
                    g = std::move(gx);
                    break;
                }
                case LayerKind::Pool:
                    g = nn::avgpool2_backward(cc.in.shape, g);
                    break;
                case LayerKind::Residual: {
                    TensorT<T> gs = nn::relu_backward(cc.z, g);
                    T* gp1 = gp;
                    T* gp2 = gp ? gp + l.rconv1.w.size() + l.rconv1.b.size() : nullptr;
                    TensorT<T> ga1(cc.r1a.shape);
                    nn::conv2d_backward(l.rconv2, cc.r1a, gs,
                                        gp2, gp2 ? gp2 + l.rconv2.w.size() : nullptr, &ga1);
                    TensorT<T> gz1 = nn::relu_backward(cc.r1z, ga1);
                    TensorT<T> gx = gs;  // skip path
                    nn::conv2d_backward(l.rconv1, cc.in, gz1,
                                        gp1, gp1 ? gp1 + l.rconv1.w.size() : nullptr, &gx);
                    g = std::move(gx);
                    break;
                }
                case LayerKind::Inception: {
                    const int c1 = l.b1.out_c, c3 = l.b3.out_c, c5 = l.b5.out_c;
                    TensorT<T> cat = nn::concat_channels(nn::concat_channels(cc.i1z, cc.i3z), cc.i5z);
                    TensorT<T> gcat = nn::relu_backward(cat, g);
                    TensorT<T> g1 = nn::slice_channels(gcat, 0, c1);
                    TensorT<T> g3 = nn::slice_channels(gcat, c1, c1 + c3);
                    TensorT<T> g5 = nn::slice_channels(gcat, c1 + c3, c1 + c3 + c5);
                    TensorT<T> gx(cc.in.shape);
                    T* p = gp;
                    nn::conv2d_backward(l.b1, cc.in, g1, p, p ? p + l.b1.w.size() : nullptr, &gx);
                    if (p) p += l.b1.w.size() + l.b1.b.size();
                    nn::conv2d_backward(l.b3, cc.in, g3, p, p ? p + l.b3.w.size() : nullptr, &gx);
                    if (p) p += l.b3.w.size() + l.b3.b.size();
                    nn::conv2d_backward(l.b5, cc.in, g5, p, p ? p + l.b5.w.size() : nullptr, &gx);
                    g = std::move(gx);
                    break;
                }
                case LayerKind::Linear: {
                    TensorT<T> flat_in({static_cast<int>(cc.in.numel())});
                    flat_in.v = cc.in.v;
                    TensorT<T> gflat({static_cast<int>(cc.in.numel())});
                    nn::linear_backward(l.lin, flat_in, g,
                                        gp, gp ? gp + l.lin.w.size() : nullptr, &gflat);
                    TensorT<T> gx(cc.in.shape);
                    gx.v = std::move(gflat.v);
                    g = std::move(gx);
                    break;
                }
            }
        }
        return g;
    }
};

template <class T>
LayerT<T> make_conv(int in_c, int out_c, int k = 3, bool relu = true) {
    LayerT<T> l;
    l.kind = LayerKind::Conv;
    l.relu = relu;
    l.conv = nn::Conv2dT<T>(in_c, out_c, k, 1);
    return l;
}
template <class T>
LayerT<T> make_pool() {
    LayerT<T> l;
    l.kind = LayerKind::Pool;
    return l;
}
template <class T>
LayerT<T> make_residual(int c) {
    LayerT<T> l;
    l.kind = LayerKind::Residual;
    l.rconv1 = nn::Conv2dT<T>(c, c, 3, 1);
    l.rconv2 = nn::Conv2dT<T>(c, c, 3, 1);
    return l;
}
template <class T>
LayerT<T> make_inception(int in_c, int per_branch) {
    LayerT<T> l;
    l.kind = LayerKind::Inception;
    l.b1 = nn::Conv2dT<T>(in_c, per_branch, 1, 1);
    l.b3 = nn::Conv2dT<T>(in_c, per_branch, 3, 1);
    l.b5 = nn::Conv2dT<T>(in_c, per_branch, 5, 1);
    return l;
}
template <class T>
LayerT<T> make_linear(int in_n, int out_n) {
    LayerT<T> l;
    l.kind = LayerKind::Linear;
    l.lin = nn::LinearT<T>(in_n, out_n);
    return l;
}

/// Desk-scale stand-ins for the usual large backbones; all expect
/// input_size x input_size RGB with three 2x pools (input_size % 8 == 0).
template <class T>
NetT<T> build_arch(const std::string& arch, int num_classes, int input_size) {
    if (input_size % 8 != 0)
        throw std::invalid_argument("build_arch: input_size must be divisible by 8");
    const int f = input_size / 8;
    NetT<T> n;
    if (arch == "vgg-small") {
        n.layers.push_back(make_conv<T>(3, 12));
        n.layers.push_back(make_conv<T>(12, 12));
        n.layers.push_back(make_pool<T>());
        n.layers.push_back(make_conv<T>(12, 24));
        n.layers.push_back(make_pool<T>());
        n.layers.push_back(make_conv<T>(24, 32));
        n.layers.push_back(make_pool<T>());
        n.layers.push_back(make_linear<T>(32 * f * f, num_classes));
    } else if (arch == "resnet-small") {
        n.layers.push_back(make_conv<T>(3, 16));
        n.layers.push_back(make_pool<T>());
        n.layers.push_back(make_residual<T>(16));
        n.layers.push_back(make_pool<T>());
        n.layers.push_back(make_residual<T>(16));
        n.layers.push_back(make_pool<T>());
        n.layers.push_back(make_linear<T>(16 * f * f, num_classes));
    } else if (arch == "inception-small") {
        n.layers.push_back(make_conv<T>(3, 12));
        n.layers.push_back(make_pool<T>());
        n.layers.push_back(make_inception<T>(12, 5));
        n.layers.push_back(make_pool<T>());
        n.layers.push_back(make_inception<T>(15, 6));
        n.layers.push_back(make_pool<T>());
        n.layers.push_back(make_linear<T>(18 * f * f, num_classes));
    } else {
        throw std::invalid_argument("unknown architecture: " + arch +
                                    " (known: vgg-small, resnet-small, inception-small)");
    }
    return n;
}

template <class T>
void init_net(NetT<T>& n, std::mt19937_64& rng) {
    for (auto& l : n.layers) {
        switch (l.kind) {
            case LayerKind::Conv: l.conv.he_init(rng); break;
            case LayerKind::Pool: break;
            case LayerKind::Residual: l.rconv1.he_init(rng); l.rconv2.he_init(rng); break;
            case LayerKind::Inception: l.b1.he_init(rng); l.b3.he_init(rng); l.b5.he_init(rng); break;
            case LayerKind::Linear: l.lin.he_init(rng); break;
        }
    }
}

}  // namespace net

/// Loss whose input gradient a classifier can be asked for.
struct LossSpec {
    enum class Kind { CrossEntropy, Constant } kind = Kind::CrossEntropy;
    int target_class = 0;

    static LossSpec cross_entropy(int target) { return {Kind::CrossEntropy, target}; }
    static LossSpec constant() { return {Kind::Constant, 0}; }
};

template <class T>
struct ClassifierT {
    std::string arch_name;
    int num_classes = 0;
    int input_size = 32;
    std::vector<T> mean{T(0.5), T(0.5), T(0.5)};
    std::vector<T> stdev{T(0.25), T(0.25), T(0.25)};
    bool gradients = true;
    std::uint64_t seed = 0;
    double held_out_accuracy = 0.0;
    std::vector<std::string> class_names;
    net::NetT<T> net;

    TensorT<T> normalize(const ImageT<T>& img) const {
        if (img.shape.size() != 3 || img.dim(0) != 3 ||
            img.dim(1) != input_size || img.dim(2) != input_size)
            throw std::invalid_argument("classifier: expected 3x" + std::to_string(input_size) +
                                        "x" + std::to_string(input_size) + " image, got " +
                                        img.shape_str());
        TensorT<T> x = img;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < input_size; ++y)
                for (int xx = 0; xx < input_size; ++xx)
                    x.at(c, y, xx) = (x.at(c, y, xx) - mean[c]) / stdev[c];
        return x;
    }

    TensorT<T> logits(const ImageT<T>& img, std::vector<net::LayerFwdT<T>>* cache = nullptr) const {
        return net.forward(normalize(img), cache);
    }

    TensorT<T> predict(const ImageT<T>& img) const { return nn::softmax(logits(img)); }

    int predict_class(const ImageT<T>& img) const {
        const auto p = predict(img);
        return static_cast<int>(std::max_element(p.v.begin(), p.v.end()) - p.v.begin());
    }

    /// Gradient of the given scalar loss w.r.t. input pixels (the
    /// normalization chain rule is applied, so the result lives in image
    /// space).
    ImageT<T> input_gradient(const ImageT<T>& img, const LossSpec& spec) const {
        if (!gradients)
            throw std::runtime_error("classifier '" + arch_name + "' does not expose gradients");
        if (spec.kind == LossSpec::Kind::Constant)
            return ImageT<T>(img.shape);
        if (spec.target_class < 0 || spec.target_class >= num_classes)
            throw std::invalid_argument("input_gradient: invalid target class");
        std::vector<net::LayerFwdT<T>> cache;
        TensorT<T> lg = logits(img, &cache);
        TensorT<T> p = nn::softmax(lg);
        p.v[spec.target_class] -= T(1);  // d CE / d logits
        TensorT<T> gx = net.backward(cache, p, nullptr, true);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < input_size; ++y)
                for (int xx = 0; xx < input_size; ++xx)
                    gx.at(c, y, xx) /= stdev[c];
        return gx;
    }
};

using Classifier = ClassifierT<float>;

struct TrainConfig {
    int epochs = 20;
    double lr = 1e-3;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double holdout_fraction = 0.2;
    // caps logit margins so confidence calibrates instead of saturating
    double label_smoothing = 0.1;
};

/// Optional per-sample augmentation hook (the CLI wires JPEG
/// re-compression in here so surrogates tolerate the defense codecs).
template <class T>
using AugmentFn = std::function<ImageT<T>(const ImageT<T>&, std::mt19937_64&)>;

template <class T>
ClassifierT<T> train_surrogate(const std::vector<ImageT<T>>& images, const std::vector<int>& labels,
                               const std::vector<std::string>& class_names, const std::string& arch,
                               int input_size, const TrainConfig& cfg,
                               AugmentFn<T> augment = nullptr, std::ostream* log = nullptr) {
    if (images.empty() || images.size() != labels.size())
        throw std::invalid_argument("train_surrogate: empty or mismatched dataset");
    const int num_classes = static_cast<int>(class_names.size());
    if (num_classes < 2) throw std::invalid_argument("train_surrogate: need >= 2 classes");
    std::vector<int> per_class(num_classes, 0);
    for (int l : labels) {
        if (l < 0 || l >= num_classes) throw std::invalid_argument("train_surrogate: label out of range");
        ++per_class[l];
    }
    for (int c = 0; c < num_classes; ++c)
        if (per_class[c] == 0)
            throw std::invalid_argument("train_surrogate: class '" + class_names[c] + "' has no images");

    ClassifierT<T> clf;
    clf.arch_name = arch;
    clf.num_classes = num_classes;
    clf.input_size = input_size;
    clf.class_names = class_names;
    clf.seed = cfg.seed;
    clf.net = net::build_arch<T>(arch, num_classes, input_size);
    std::mt19937_64 rng(cfg.seed);
    net::init_net(clf.net, rng);

    // deterministic stratified holdout: every k-th item of each class
    std::vector<std::size_t> train_idx, hold_idx;
    {
        const int k = std::max(2, static_cast<int>(std::lround(1.0 / std::max(0.05, cfg.holdout_fraction))));
        std::vector<int> seen(num_classes, 0);
        for (std::size_t i = 0; i < images.size(); ++i) {
            if (seen[labels[i]]++ % k == k - 1) hold_idx.push_back(i);
            else train_idx.push_back(i);
        }
    }

    std::vector<T> flat;
    clf.net.for_each_array([&](const std::vector<T>& a) { flat.insert(flat.end(), a.begin(), a.end()); });
    std::vector<T> grads(flat.size(), T(0));
    nn::AdamT<T> adam;

    auto scatter = [&](const std::vector<T>& src) {
        std::size_t off = 0;
        clf.net.for_each_array([&](std::vector<T>& a) {
            std::copy(src.begin() + off, src.begin() + off + a.size(), a.begin());
            off += a.size();
        });
    };

    std::vector<std::size_t> order = train_idx;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0;
        std::size_t done = 0;
        while (done < order.size()) {
            const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, order.size() - done);
            std::fill(grads.begin(), grads.end(), T(0));
            for (std::size_t bi = 0; bi < bsz; ++bi) {
                const std::size_t idx = order[done + bi];
                ImageT<T> img = augment ? augment(images[idx], rng) : images[idx];
                std::vector<net::LayerFwdT<T>> cache;
                TensorT<T> lg = clf.net.forward(clf.normalize(img), &cache);
                TensorT<T> p = nn::softmax(lg);
                const double prob = std::max(1e-12, static_cast<double>(p.v[labels[idx]]));
                epoch_loss += -std::log(prob);
                const T uni = static_cast<T>(cfg.label_smoothing / num_classes);
                for (auto& x : p.v) x -= uni;
                p.v[labels[idx]] -= static_cast<T>(1.0 - cfg.label_smoothing);
                for (auto& x : p.v) x /= static_cast<T>(bsz);
                clf.net.backward(cache, p, &grads, false);
            }
            adam.step(flat, grads, cfg.lr);
            scatter(flat);
            done += bsz;
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss))
            throw TrainingDivergence("training diverged (non-finite loss) at epoch " +
                                     std::to_string(epoch));
        if (log) *log << "epoch " << epoch << " train-loss " << epoch_loss << "\n";
    }

    std::size_t correct = 0;
    for (std::size_t i : hold_idx)
        if (clf.predict_class(images[i]) == labels[i]) ++correct;
    clf.held_out_accuracy = hold_idx.empty() ? 0.0 : static_cast<double>(correct) / hold_idx.size();
    return clf;
}

template <class T>
void save_classifier(const ClassifierT<T>& clf, const std::string& prefix) {
    const std::string wfile = prefix + ".weights.bin";
    {
        std::ofstream f(wfile, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + wfile);
        clf.net.for_each_array([&](const std::vector<T>& a) {
            for (T x : a) {
                const double d = static_cast<double>(x);
                f.write(reinterpret_cast<const char*>(&d), sizeof(d));
            }
        });
    }
    nlohmann::json meta{
        {"schema_version", 1},
        {"arch", clf.arch_name},
        {"num_classes", clf.num_classes},
        {"input_size", clf.input_size},
        {"mean", std::vector<double>(clf.mean.begin(), clf.mean.end())},
        {"std", std::vector<double>(clf.stdev.begin(), clf.stdev.end())},
        {"seed", clf.seed},
        {"held_out_accuracy", clf.held_out_accuracy},
        {"class_names", clf.class_names},
        {"weights_file", wfile.substr(wfile.find_last_of('/') + 1)},
        {"param_count", clf.net.param_count()},
    };
    std::ofstream f(prefix + ".json");
    if (!f) throw std::runtime_error("cannot write " + prefix + ".json");
    f << meta.dump(2) << "\n";
}

template <class T>
ClassifierT<T> load_classifier(const std::string& json_path) {
    std::ifstream jf(json_path);
    if (!jf) throw std::runtime_error("cannot open checkpoint metadata: " + json_path);
    nlohmann::json meta = nlohmann::json::parse(jf);

    ClassifierT<T> clf;
    clf.arch_name = meta.at("arch").get<std::string>();
    clf.num_classes = meta.at("num_classes").get<int>();
    clf.input_size = meta.at("input_size").get<int>();
    const auto m = meta.at("mean").get<std::vector<double>>();
    const auto s = meta.at("std").get<std::vector<double>>();
    clf.mean.assign(m.begin(), m.end());
    clf.stdev.assign(s.begin(), s.end());
    clf.seed = meta.at("seed").get<std::uint64_t>();
    clf.held_out_accuracy = meta.at("held_out_accuracy").get<double>();
    clf.class_names = meta.at("class_names").get<std::vector<std::string>>();
    clf.net = net::build_arch<T>(clf.arch_name, clf.num_classes, clf.input_size);

    std::string wfile = meta.at("weights_file").get<std::string>();
    const auto slash = json_path.find_last_of('/');
    if (slash != std::string::npos) wfile = json_path.substr(0, slash + 1) + wfile;
    std::ifstream f(wfile, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open weights: " + wfile);
    clf.net.for_each_array([&](std::vector<T>& a) {
        for (T& x : a) {
            double d = 0;
            f.read(reinterpret_cast<char*>(&d), sizeof(d));
            x = static_cast<T>(d);
        }
    });
    if (!f) throw std::runtime_error("truncated weights: " + wfile);
    return clf;
}

}  // namespace advswap

#endif  // ADVSWAP_MODELS_HPP
