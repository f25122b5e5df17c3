#ifndef ADVSWAP_COUPLING_HPP
#define ADVSWAP_COUPLING_HPP

#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advswap/nn.hpp"
#include "advswap/tensor.hpp"

namespace advswap {

/// Clean/target feature pair flowing through the info-swapping stack.
template <class T>
struct BranchPairT {
    TensorT<T> cln;
    TensorT<T> tgt;

    void check() const {
        require_same_shape(cln, tgt, "branch pair");
        if (!cln.finite() || !tgt.finite())
            throw std::runtime_error("branch pair: non-finite values");
    }
};

using BranchPair = BranchPairT<float>;

/// Residual dense conditioner: three densely connected 3x3 conv layers
/// (growth channels each), final layer emitting scale logits and
/// translations (2x input channels). The final layer is zero-initialized
/// so a fresh block is a near-identity map.
template <class T>
struct ConditionerT {
    nn::Conv2dT<T> conv1, conv2, conv3;

    ConditionerT() = default;
    ConditionerT(int channels, int growth)
        : conv1(channels, growth, 3, 1),
          conv2(channels + growth, growth, 3, 1),
          conv3(channels + 2 * growth, 2 * channels, 3, 1) {}

    std::size_t param_count() const {
        return conv1.param_count() + conv2.param_count() + conv3.param_count();
    }

    template <class Fn>
    void for_each_array(Fn&& fn) {
        fn(conv1.w); fn(conv1.b);
        fn(conv2.w); fn(conv2.b);
        fn(conv3.w); fn(conv3.b);
    }
    template <class Fn>
    void for_each_array(Fn&& fn) const {
        fn(conv1.w); fn(conv1.b);
        fn(conv2.w); fn(conv2.b);
        fn(conv3.w); fn(conv3.b);
    }

    bool finite() const {
        bool ok = true;
        for_each_array([&](const std::vector<T>& a) {
            for (T x : a)
                if (!std::isfinite(static_cast<double>(x))) ok = false;
        });
        return ok;
    }
};

template <class T>
struct ConditionerCacheT {
    TensorT<T> x0, z1, x1, c1, z2, x2, c2;
};

/// Forward pass producing (scale logits s, translation t), both shaped
/// like the input features. s is mapped through beta(x) = beta_scale *
/// sigmoid(x) before it enters the coupling exponent.
template <class T>
std::pair<TensorT<T>, TensorT<T>> conditioner_forward(const ConditionerT<T>& f,
                                                      const TensorT<T>& features,
                                                      ConditionerCacheT<T>* cache = nullptr) {
    if (!f.finite()) throw std::runtime_error("conditioner: non-finite parameters");
    const int c = features.dim(0);
    TensorT<T> z1 = nn::conv2d_forward(f.conv1, features);
    TensorT<T> x1 = nn::relu_forward(z1);
    TensorT<T> c1 = nn::concat_channels(features, x1);
    TensorT<T> z2 = nn::conv2d_forward(f.conv2, c1);
    TensorT<T> x2 = nn::relu_forward(z2);
    TensorT<T> c2 = nn::concat_channels(c1, x2);
    TensorT<T> out = nn::conv2d_forward(f.conv3, c2);
    if (cache) {
        cache->x0 = features;
        cache->z1 = std::move(z1);
        cache->x1 = std::move(x1);
        cache->c1 = std::move(c1);
        cache->z2 = std::move(z2);
        cache->x2 = std::move(x2);
        cache->c2 = std::move(c2);
    }
    return {nn::slice_channels(out, 0, c), nn::slice_channels(out, c, 2 * c)};
}

namespace detail {

/// Backward through a conditioner. gs/gt are gradients w.r.t. the s and
/// t outputs; param gradients are accumulated into gp (conditioner
/// layout: conv1.w, conv1.b, conv2.w, conv2.b, conv3.w, conv3.b) and the
/// gradient w.r.t. the input features is returned.
template <class T>
TensorT<T> conditioner_backward(const ConditionerT<T>& f, const ConditionerCacheT<T>& cc,
                                const TensorT<T>& gs, const TensorT<T>& gt, T* gp) {
    const int c = cc.x0.dim(0);
    const int g = f.conv1.out_c;
    TensorT<T> gout = nn::concat_channels(gs, gt);

    T* gp1w = gp;
    T* gp1b = gp1w + f.conv1.w.size();
    T* gp2w = gp1b + f.conv1.b.size();
    T* gp2b = gp2w + f.conv2.w.size();
    T* gp3w = gp2b + f.conv2.b.size();
    T* gp3b = gp3w + f.conv3.w.size();

    TensorT<T> g_c2(cc.c2.shape);
    nn::conv2d_backward(f.conv3, cc.c2, gout, gp3w, gp3b, &g_c2);

    TensorT<T> g_x2 = nn::slice_channels(g_c2, c + g, c + 2 * g);
    TensorT<T> g_z2 = nn::relu_backward(cc.z2, g_x2);
    TensorT<T> g_c1 = nn::slice_channels(g_c2, 0, c + g);
    nn::conv2d_backward(f.conv2, cc.c1, g_z2, gp2w, gp2b, &g_c1);

    TensorT<T> g_x1 = nn::slice_channels(g_c1, c, c + g);
    TensorT<T> g_z1 = nn::relu_backward(cc.z1, g_x1);
    TensorT<T> g_x0 = nn::slice_channels(g_c1, 0, c);
    nn::conv2d_backward(f.conv1, cc.x0, g_z1, gp1w, gp1b, &g_x0);
    return g_x0;
}

}  // namespace detail

/// One invertible block: two conditioners, clean branch updated from the
/// target features, target branch then updated from the new clean features.
template <class T>
struct CouplingBlockParamsT {
    ConditionerT<T> f;  // conditions the clean-branch update on w_tgt
    ConditionerT<T> g;  // conditions the target-branch update on the new w_cln

    CouplingBlockParamsT() = default;
    CouplingBlockParamsT(int channels, int growth) : f(channels, growth), g(channels, growth) {}
    std::size_t param_count() const { return f.param_count() + g.param_count(); }
};

template <class T>
struct CouplingStackParamsT {
    int num_blocks = 0;
    int channels = 0;
    int growth = 16;
    T beta_scale = T(2);
    /// Subtracted from beta(s-logit) inside the exponent; init_params sets
    /// it to beta(0) so a zero conditioner gives log-scale 0 (identity).
    T log_scale_offset = T(0);
    std::uint64_t seed = 0;
    std::vector<CouplingBlockParamsT<T>> blocks;

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& b : blocks) n += b.param_count();
        return n;
    }
};

using CouplingStackParams = CouplingStackParamsT<float>;

template <class T>
T beta_map(T logit, T beta_scale) {
    return beta_scale / (T(1) + static_cast<T>(std::exp(-static_cast<double>(logit))));
}

template <class T>
struct CouplingBlockCacheT {
    TensorT<T> w_cln_in, w_tgt_in, w_cln_out;
    ConditionerCacheT<T> fcache, gcache;
    TensorT<T> sf, tf, ea;  // clean-branch logits, translation, exp(log-scale)
    TensorT<T> sg, tg, eb;
};

template <class T>
struct StackCacheT {
    std::vector<CouplingBlockCacheT<T>> blocks;
};

/// Clean branch: w~_cln = w_cln * exp(beta(F_s(w_tgt)) - off) + F_t(w_tgt),
/// then the target branch mirrors it conditioned on w~_cln.
template <class T>
BranchPairT<T> coupling_forward(const BranchPairT<T>& pair, const CouplingBlockParamsT<T>& bp,
                                T beta_scale, T log_scale_offset,
                                CouplingBlockCacheT<T>* cache = nullptr) {
    pair.check();
    auto [sf, tf] = conditioner_forward(bp.f, pair.tgt, cache ? &cache->fcache : nullptr);
    TensorT<T> ea(sf.shape);
    for (std::size_t i = 0; i < ea.numel(); ++i)
        ea.v[i] = static_cast<T>(std::exp(static_cast<double>(
            beta_map(sf.v[i], beta_scale) - log_scale_offset)));
    TensorT<T> cln_out(pair.cln.shape);
    for (std::size_t i = 0; i < cln_out.numel(); ++i)
        cln_out.v[i] = pair.cln.v[i] * ea.v[i] + tf.v[i];

    auto [sg, tg] = conditioner_forward(bp.g, cln_out, cache ? &cache->gcache : nullptr);
    TensorT<T> eb(sg.shape);
    for (std::size_t i = 0; i < eb.numel(); ++i)
        eb.v[i] = static_cast<T>(std::exp(static_cast<double>(
            beta_map(sg.v[i], beta_scale) - log_scale_offset)));
    TensorT<T> tgt_out(pair.tgt.shape);
    for (std::size_t i = 0; i < tgt_out.numel(); ++i)
        tgt_out.v[i] = pair.tgt.v[i] * eb.v[i] + tg.v[i];

    BranchPairT<T> out{std::move(cln_out), std::move(tgt_out)};
    if (!out.cln.finite() || !out.tgt.finite())
        throw std::runtime_error("coupling_forward: non-finite output");
    if (cache) {
        cache->w_cln_in = pair.cln;
        cache->w_tgt_in = pair.tgt;
        cache->w_cln_out = out.cln;
        cache->sf = std::move(sf); cache->tf = std::move(tf); cache->ea = std::move(ea);
        cache->sg = std::move(sg); cache->tg = std::move(tg); cache->eb = std::move(eb);
    }
    return out;
}

/// Exact algebraic inverse: w = (w' - t) * exp(-(beta(s) - off)), target
/// branch first (it was updated last in the forward pass).
template <class T>
BranchPairT<T> coupling_inverse(const BranchPairT<T>& pair, const CouplingBlockParamsT<T>& bp,
                                T beta_scale, T log_scale_offset) {
    pair.check();
    auto [sg, tg] = conditioner_forward(bp.g, pair.cln);
    TensorT<T> tgt_in(pair.tgt.shape);
    for (std::size_t i = 0; i < tgt_in.numel(); ++i)
        tgt_in.v[i] = (pair.tgt.v[i] - tg.v[i]) *
                      static_cast<T>(std::exp(-static_cast<double>(
                          beta_map(sg.v[i], beta_scale) - log_scale_offset)));

    auto [sf, tf] = conditioner_forward(bp.f, tgt_in);
    TensorT<T> cln_in(pair.cln.shape);
    for (std::size_t i = 0; i < cln_in.numel(); ++i)
        cln_in.v[i] = (pair.cln.v[i] - tf.v[i]) *
                      static_cast<T>(std::exp(-static_cast<double>(
                          beta_map(sf.v[i], beta_scale) - log_scale_offset)));
    return {std::move(cln_in), std::move(tgt_in)};
}

template <class T>
BranchPairT<T> stack_forward(const BranchPairT<T>& pair, const CouplingStackParamsT<T>& sp,
                             StackCacheT<T>* cache = nullptr) {
    if (pair.cln.dim(0) != sp.channels)
        throw std::invalid_argument("stack_forward: pair has " + std::to_string(pair.cln.dim(0)) +
                                    " channels, params expect " + std::to_string(sp.channels));
    if (cache) cache->blocks.resize(sp.blocks.size());
    BranchPairT<T> cur = pair;
    for (std::size_t i = 0; i < sp.blocks.size(); ++i)
        cur = coupling_forward(cur, sp.blocks[i], sp.beta_scale, sp.log_scale_offset,
                               cache ? &cache->blocks[i] : nullptr);
    return cur;
}

template <class T>
BranchPairT<T> stack_inverse(const BranchPairT<T>& pair, const CouplingStackParamsT<T>& sp) {
    if (pair.cln.dim(0) != sp.channels)
        throw std::invalid_argument("stack_inverse: pair has " + std::to_string(pair.cln.dim(0)) +
                                    " channels, params expect " + std::to_string(sp.channels));
    BranchPairT<T> cur = pair;
    for (auto it = sp.blocks.rbegin(); it != sp.blocks.rend(); ++it)
        cur = coupling_inverse(cur, *it, sp.beta_scale, sp.log_scale_offset);
    return cur;
}

namespace detail {

template <class T>
void block_backward(const CouplingBlockParamsT<T>& bp, const CouplingBlockCacheT<T>& cc,
                    T beta_scale, T log_scale_offset,
                    TensorT<T>& g_cln, TensorT<T>& g_tgt, T* gp_f, T* gp_g) {
    (void)log_scale_offset;
    const std::size_t n = g_cln.numel();

    // target-branch update: w_tgt' = w_tgt * eb + tg
    TensorT<T> g_sg(cc.sg.shape), g_tg = g_tgt;
    TensorT<T> g_tgt_in(cc.w_tgt_in.shape);
    for (std::size_t i = 0; i < n; ++i) {
        g_tgt_in.v[i] = g_tgt.v[i] * cc.eb.v[i];
        const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(cc.sg.v[i])));
        const double dbeta = static_cast<double>(beta_scale) * sig * (1.0 - sig);
        g_sg.v[i] = static_cast<T>(static_cast<double>(g_tgt.v[i]) *
                                   static_cast<double>(cc.w_tgt_in.v[i]) *
                                   static_cast<double>(cc.eb.v[i]) * dbeta);
    }
    TensorT<T> g_cln_out_from_g = conditioner_backward(bp.g, cc.gcache, g_sg, g_tg, gp_g);

    // clean-branch update: w_cln' = w_cln * ea + tf
    TensorT<T> g_cln_out = g_cln;
    for (std::size_t i = 0; i < n; ++i) g_cln_out.v[i] += g_cln_out_from_g.v[i];

    TensorT<T> g_sf(cc.sf.shape), g_tf = g_cln_out;
    TensorT<T> g_cln_in(cc.w_cln_in.shape);
    for (std::size_t i = 0; i < n; ++i) {
        g_cln_in.v[i] = g_cln_out.v[i] * cc.ea.v[i];
        const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(cc.sf.v[i])));
        const double dbeta = static_cast<double>(beta_scale) * sig * (1.0 - sig);
        g_sf.v[i] = static_cast<T>(static_cast<double>(g_cln_out.v[i]) *
                                   static_cast<double>(cc.w_cln_in.v[i]) *
                                   static_cast<double>(cc.ea.v[i]) * dbeta);
    }
    TensorT<T> g_tgt_from_f = conditioner_backward(bp.f, cc.fcache, g_sf, g_tf, gp_f);
    for (std::size_t i = 0; i < n; ++i) g_tgt_in.v[i] += g_tgt_from_f.v[i];

    g_cln = std::move(g_cln_in);
    g_tgt = std::move(g_tgt_in);
}

}  // namespace detail

/// Backprop through the whole stack. g_out_{cln,tgt} are gradients of a
/// scalar loss w.r.t. the stack output; grads (flat, param_count-sized,
/// zeroed or accumulated onto) receives d loss / d theta, and the input
/// gradients are returned in place of g_out.
template <class T>
BranchPairT<T> stack_backward(const CouplingStackParamsT<T>& sp, const StackCacheT<T>& cache,
                              TensorT<T> g_out_cln, TensorT<T> g_out_tgt, std::vector<T>& grads) {
    if (grads.size() != sp.param_count())
        throw std::invalid_argument("stack_backward: grad buffer size mismatch");
    // per-block flat offsets (F params first, then G)
    std::vector<std::size_t> offs(sp.blocks.size() + 1, 0);
    for (std::size_t i = 0; i < sp.blocks.size(); ++i)
        offs[i + 1] = offs[i] + sp.blocks[i].param_count();
    for (std::size_t bi = sp.blocks.size(); bi-- > 0;) {
        T* gp_f = grads.data() + offs[bi];
        T* gp_g = gp_f + sp.blocks[bi].f.param_count();
        detail::block_backward(sp.blocks[bi], cache.blocks[bi], sp.beta_scale,
                               sp.log_scale_offset, g_out_cln, g_out_tgt, gp_f, gp_g);
    }
    return {std::move(g_out_cln), std::move(g_out_tgt)};
}

/// Deterministic initialization: hidden conv layers He-initialized from
/// the seed, final layers zeroed, log_scale_offset = beta(0) so the fresh
/// stack is exactly the identity map.
template <class T>
CouplingStackParamsT<T> init_params(int channels, int num_blocks, T beta_scale,
                                    std::uint64_t seed, int growth = 16) {
    if (channels < 1) throw std::invalid_argument("init_params: channels must be >= 1");
    if (num_blocks < 1) throw std::invalid_argument("init_params: num_blocks must be >= 1");
    if (growth < 1) throw std::invalid_argument("init_params: growth must be >= 1");
    if (!(beta_scale > T(0))) throw std::invalid_argument("init_params: beta_scale must be > 0");

    CouplingStackParamsT<T> sp;
    sp.num_blocks = num_blocks;
    sp.channels = channels;
    sp.growth = growth;
    sp.beta_scale = beta_scale;
    sp.log_scale_offset = beta_map(T(0), beta_scale);
    sp.seed = seed;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < num_blocks; ++i) {
        CouplingBlockParamsT<T> b(channels, growth);
        b.f.conv1.he_init(rng);
        b.f.conv2.he_init(rng);
        b.g.conv1.he_init(rng);
        b.g.conv2.he_init(rng);
        // conv3 stays zero: identity block at init
        sp.blocks.push_back(std::move(b));
    }
    return sp;
}

template <class T, class Fn>
void for_each_param_array(CouplingStackParamsT<T>& sp, Fn&& fn) {
    for (auto& b : sp.blocks) {
        b.f.for_each_array(fn);
        b.g.for_each_array(fn);
    }
}
template <class T, class Fn>
void for_each_param_array(const CouplingStackParamsT<T>& sp, Fn&& fn) {
    for (const auto& b : sp.blocks) {
        b.f.for_each_array(fn);
        b.g.for_each_array(fn);
    }
}

template <class T>
std::vector<T> flatten_params(const CouplingStackParamsT<T>& sp) {
    std::vector<T> flat;
    flat.reserve(sp.param_count());
    for_each_param_array(sp, [&](const std::vector<T>& a) {
        flat.insert(flat.end(), a.begin(), a.end());
    });
    return flat;
}

template <class T>
void unflatten_params(CouplingStackParamsT<T>& sp, const std::vector<T>& flat) {
    if (flat.size() != sp.param_count())
        throw std::invalid_argument("unflatten_params: size mismatch");
    std::size_t off = 0;
    for_each_param_array(sp, [&](std::vector<T>& a) {
        std::copy(flat.begin() + off, flat.begin() + off + a.size(), a.begin());
        off += a.size();
    });
}

/// Binary checkpoint: magic, little-endian u32 JSON header length, JSON
/// shape manifest, then all parameters as doubles in flat order.
inline constexpr char kCouplingMagic[8] = {'A', 'S', 'W', 'C', 'P', 'L', '0', '1'};

template <class T>
void save_coupling_checkpoint(const CouplingStackParamsT<T>& sp, const std::string& path) {
    nlohmann::json hdr{
        {"schema_version", 1},
        {"channels", sp.channels},
        {"num_blocks", sp.num_blocks},
        {"growth", sp.growth},
        {"beta_scale", static_cast<double>(sp.beta_scale)},
        {"log_scale_offset", static_cast<double>(sp.log_scale_offset)},
        {"seed", sp.seed},
        {"param_count", sp.param_count()},
    };
    const std::string h = hdr.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(kCouplingMagic, sizeof(kCouplingMagic));
    const std::uint32_t len = static_cast<std::uint32_t>(h.size());
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(h.data(), h.size());
    for_each_param_array(sp, [&](const std::vector<T>& a) {
        for (T x : a) {
            const double d = static_cast<double>(x);
            f.write(reinterpret_cast<const char*>(&d), sizeof(d));
        }
    });
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

template <class T>
CouplingStackParamsT<T> load_coupling_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[sizeof(kCouplingMagic)];
    f.read(magic, sizeof(magic));
    if (!f || !std::equal(magic, magic + sizeof(magic), kCouplingMagic))
        throw std::runtime_error("bad coupling checkpoint magic: " + path);
    std::uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string h(len, '\0');
    f.read(h.data(), len);
    const auto hdr = nlohmann::json::parse(h);

    CouplingStackParamsT<T> sp;
    sp.channels = hdr.at("channels").get<int>();
    sp.num_blocks = hdr.at("num_blocks").get<int>();
    sp.growth = hdr.at("growth").get<int>();
    sp.beta_scale = static_cast<T>(hdr.at("beta_scale").get<double>());
    sp.log_scale_offset = static_cast<T>(hdr.at("log_scale_offset").get<double>());
    sp.seed = hdr.at("seed").get<std::uint64_t>();
    for (int i = 0; i < sp.num_blocks; ++i)
        sp.blocks.emplace_back(sp.channels, sp.growth);
    if (sp.param_count() != hdr.at("param_count").get<std::size_t>())
        throw std::runtime_error("checkpoint param_count mismatch: " + path);
    for_each_param_array(sp, [&](std::vector<T>& a) {
        for (T& x : a) {
            double d = 0;
            f.read(reinterpret_cast<char*>(&d), sizeof(d));
            x = static_cast<T>(d);
        }
    });
    if (!f) throw std::runtime_error("truncated coupling checkpoint: " + path);
    return sp;
}

}  // namespace advswap

#endif  // ADVSWAP_COUPLING_HPP
