#ifndef ADVSWAP_ATTACK_HPP
#define ADVSWAP_ATTACK_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "advswap/coupling.hpp"
#include "advswap/metrics.hpp"
#include "advswap/models.hpp"
#include "advswap/tensor.hpp"
#include "advswap/wavelet.hpp"

namespace advswap {

/// Every knob of one AdvSwap attack. Defaults follow the published
/// schedule and weights where they are fixed; the rest are desk-scale
/// configuration choices.
struct AttackConfig {
    double lambda_adv = 3.0;
    double lambda_rho = 2.0;            // vertical-detail (HL) band weight
    double lambda_eta_phi_varphi = 1.0; // remaining band weights
    double lambda_perp = 1.0;
    double epsilon = 8.0 / 255.0;
    double lr_init = 1e-4;
    double lr_decay = 0.9;
    int lr_decay_every = 200;
    double lr_floor = 1e-5;
    int max_iters = 2000;
    double tgs_step = 1.0 / 255.0;
    double tgs_conf_threshold = 0.9;
    int tgs_max_iters = 500;
    int num_blocks = 8;
    double beta_scale = 2.0;
    int growth = 16;
    std::uint64_t seed = 0;
    std::string target_policy = "random-other";  // random-other | least-likely | fixed:<k>
    std::string tgs_direction = "descend-ce";    // descend-ce | ascend-ce (ablation)
    int success_streak = 5;

    void validate() const {
        auto pos = [](double v, const char* n) {
            if (!(v > 0)) throw std::invalid_argument(std::string("AttackConfig: ") + n + " must be > 0");
        };
        pos(lambda_adv, "lambda_adv");
        pos(lambda_rho, "lambda_rho");
        pos(lambda_eta_phi_varphi, "lambda_eta_phi_varphi");
        pos(lambda_perp, "lambda_perp");
        pos(lr_init, "lr_init");
        pos(lr_floor, "lr_floor");
        pos(tgs_step, "tgs_step");
        pos(beta_scale, "beta_scale");
        if (!(epsilon > 0 && epsilon <= 1))
            throw std::invalid_argument("AttackConfig: epsilon must be in (0,1]");
        if (!(lr_decay > 0 && lr_decay < 1))
            throw std::invalid_argument("AttackConfig: lr_decay must be in (0,1)");
        if (!(tgs_conf_threshold > 0 && tgs_conf_threshold < 1))
            throw std::invalid_argument("AttackConfig: tgs_conf_threshold must be in (0,1)");
        if (lr_decay_every < 1 || max_iters < 1 || tgs_max_iters < 1 || num_blocks < 1 ||
            growth < 1 || success_streak < 1)
            throw std::invalid_argument("AttackConfig: integer fields must be >= 1");
        if (target_policy != "random-other" && target_policy != "least-likely" &&
            target_policy.rfind("fixed:", 0) != 0)
            throw std::invalid_argument("AttackConfig: unknown target_policy '" + target_policy + "'");
        if (tgs_direction != "descend-ce" && tgs_direction != "ascend-ce")
            throw std::invalid_argument("AttackConfig: unknown tgs_direction '" + tgs_direction + "'");
    }
};

struct LossRecord {
    double total = 0, adv = 0, swap = 0;
};

/// Step-wise exponential decay with a floor.
inline double lr_schedule(long step, const AttackConfig& cfg) {
    const double lr = cfg.lr_init * std::pow(cfg.lr_decay, static_cast<double>(step / cfg.lr_decay_every));
    return std::max(cfg.lr_floor, lr);
}

/// Element-wise projection onto the l-inf ball around orig, then [0,1].
template <class T>
ImageT<T> project_linf(const TensorT<T>& candidate, const ImageT<T>& orig, double epsilon) {
    require_same_shape(candidate, orig, "project_linf");
    ImageT<T> out = candidate;
    const T eps = static_cast<T>(epsilon);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const T lo = std::max(T(0), orig.v[i] - eps);
        const T hi = std::min(T(1), orig.v[i] + eps);
        out.v[i] = std::min(hi, std::max(lo, out.v[i]));
    }
    return out;
}

/// -log p(target | adv), probability floored at 1e-12.
template <class T>
double adv_loss(const ClassifierT<T>& clf, const ImageT<T>& adv, int target_class) {
    const auto p = clf.predict(adv);
    if (target_class < 0 || target_class >= static_cast<int>(p.numel()))
        throw std::invalid_argument("adv_loss: invalid target class");
    return -std::log(std::max(1e-12, static_cast<double>(p.v[target_class])));
}

/// Optional replacement for the built-in structure extractor in the
/// swapping loss. When absent, the LL sub-band is used (self-contained,
/// differentiable through the same wavelet path).
template <class T>
using PerceptualExtractor = std::function<TensorT<T>(const ImageT<T>&)>;

namespace detail {

template <class T>
struct BandWeights {
    double lh, hl, hh, ll;
};

inline BandWeights<double> band_weights(const AttackConfig& cfg) {
    // rho = vertical detail (HL); eta, phi, varphi share the other weight
    return {cfg.lambda_eta_phi_varphi, cfg.lambda_rho, cfg.lambda_eta_phi_varphi,
            cfg.lambda_eta_phi_varphi};
}

}  // namespace detail

/// Wavelet-domain reconstruction loss: weighted squared sub-band
/// distances plus the perceptual-consistency term.
template <class T>
double swap_loss(const ImageT<T>& orig, const ImageT<T>& adv, const AttackConfig& cfg,
                 const PerceptualExtractor<T>& extractor = nullptr) {
    require_same_shape(orig, adv, "swap_loss");
    const auto po = dwt(orig);
    const auto pa = dwt(adv);
    const auto w = detail::band_weights(cfg);
    double loss = w.ll * sq_norm(po.ll - pa.ll) + w.lh * sq_norm(po.lh - pa.lh) +
                  w.hl * sq_norm(po.hl - pa.hl) + w.hh * sq_norm(po.hh - pa.hh);
    if (extractor) {
        loss += cfg.lambda_perp * sq_norm(extractor(orig) - extractor(adv));
    } else {
        loss += cfg.lambda_perp * sq_norm(po.ll - pa.ll);
    }
    return loss;
}

template <class T>
LossRecord total_loss(const ClassifierT<T>& clf, const ImageT<T>& orig, const ImageT<T>& adv,
                      int target_class, const AttackConfig& cfg,
                      const PerceptualExtractor<T>& extractor = nullptr) {
    LossRecord r;
    r.adv = adv_loss(clf, adv, target_class);
    r.swap = swap_loss(orig, adv, cfg, extractor);
    r.total = cfg.lambda_adv * r.adv + r.swap;
    return r;
}

template <class T>
struct TgsResult {
    ImageT<T> image;
    bool threshold_met = false;
    int iterations = 0;
    double confidence = 0;
};

/// Target Guide Sample: grown from uniform half-intensity gray by
/// per-pixel gradient-sign steps until the classifier assigns the target
/// class with confidence above the threshold.
template <class T>
TgsResult<T> make_target_guide(const ClassifierT<T>& clf, int target_class,
                               const AttackConfig& cfg) {
    if (!clf.gradients)
        throw std::runtime_error("make_target_guide: classifier does not expose gradients");
    if (target_class < 0 || target_class >= clf.num_classes)
        throw std::invalid_argument("make_target_guide: invalid target class");
    const int n = clf.input_size;
    TgsResult<T> r;
    r.image = ImageT<T>({3, n, n}, T(0.5));
    const T step = static_cast<T>(cfg.tgs_step);
    const T dir = cfg.tgs_direction == "descend-ce" ? T(-1) : T(1);
    for (int it = 0; it < cfg.tgs_max_iters; ++it) {
        const auto p = clf.predict(r.image);
        r.confidence = static_cast<double>(p.v[target_class]);
        if (r.confidence > cfg.tgs_conf_threshold) {
            r.threshold_met = true;
            r.iterations = it;
            return r;
        }
        const auto g = clf.input_gradient(r.image, LossSpec::cross_entropy(target_class));
        for (std::size_t i = 0; i < r.image.numel(); ++i) {
            const T s = g.v[i] > T(0) ? T(1) : (g.v[i] < T(0) ? T(-1) : T(0));
            r.image.v[i] = std::min(T(1), std::max(T(0), r.image.v[i] + dir * step * s));
        }
        r.iterations = it + 1;
    }
    r.confidence = static_cast<double>(clf.predict(r.image).v[target_class]);
    r.threshold_met = r.confidence > cfg.tgs_conf_threshold;
    return r;
}

/// The differentiable chain from coupling parameters to the composite
/// loss: stack forward over high-band features, reconstruction, l-inf
/// projection, classifier + swapping losses, with analytic gradients
/// w.r.t. theta. Used by the optimizer loop and by the gradient-check
/// tests.
template <class T>
struct SwapObjective {
    const ClassifierT<T>* clf = nullptr;
    ImageT<T> orig;
    WaveletPyramidT<T> pyr_orig;
    BranchPairT<T> features;  // clean = orig high bands, target = TGS high bands
    int target_class = 0;
    AttackConfig cfg;

    static SwapObjective make(const ClassifierT<T>& clf, const ImageT<T>& orig,
                              const ImageT<T>& tgs, int target_class, const AttackConfig& cfg) {
        SwapObjective o;
        o.clf = &clf;
        o.orig = orig;
        o.pyr_orig = dwt(orig);
        o.features.cln = high_bands(o.pyr_orig);
        o.features.tgt = high_bands(dwt(tgs));
        o.target_class = target_class;
        o.cfg = cfg;
        return o;
    }

    struct Eval {
        LossRecord losses;
        ImageT<T> candidate;  // projected, un-quantized
        int predicted = -1;
    };

    /// Forward pass; when grads is non-null it is resized/zeroed and
    /// filled with d total / d theta (flat stack layout).
    Eval evaluate(const CouplingStackParamsT<T>& sp, std::vector<T>* grads) const {
        StackCacheT<T> cache;
        BranchPairT<T> out = stack_forward(features, sp, grads ? &cache : nullptr);
        WaveletPyramidT<T> cand_pyr = replace_high_bands(pyr_orig, out.cln);
        ImageT<T> raw = idwt(cand_pyr);
        ImageT<T> proj = project_linf(raw, orig, cfg.epsilon);

        Eval ev;
        ev.candidate = proj;

        std::vector<net::LayerFwdT<T>> clf_cache;
        TensorT<T> lg = clf->logits(proj, grads ? &clf_cache : nullptr);
        TensorT<T> p = nn::softmax(lg);
        ev.predicted = static_cast<int>(std::max_element(p.v.begin(), p.v.end()) - p.v.begin());
        ev.losses.adv = -std::log(std::max(1e-12, static_cast<double>(p.v[target_class])));

        // swap loss against the raw reconstruction: it both measures the
        // wavelet-domain distortion and anchors the stack output, so the
        // projection stays a light touch-up instead of a cliff
        const auto& po = pyr_orig;
        const auto pa = dwt(raw);
        const auto w = detail::band_weights(cfg);
        const double wll = w.ll + cfg.lambda_perp;  // built-in extractor = LL band
        ev.losses.swap = wll * sq_norm(po.ll - pa.ll) + w.lh * sq_norm(po.lh - pa.lh) +
                         w.hl * sq_norm(po.hl - pa.hl) + w.hh * sq_norm(po.hh - pa.hh);
        ev.losses.total = cfg.lambda_adv * ev.losses.adv + ev.losses.swap;

        if (grads) {
            // d adv / d proj
            TensorT<T> glog = p;
            glog.v[target_class] -= T(1);
            for (auto& x : glog.v) x *= static_cast<T>(cfg.lambda_adv);
            ImageT<T> g_raw = clf->net.backward(clf_cache, glog, nullptr, true);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < clf->input_size; ++y)
                    for (int x = 0; x < clf->input_size; ++x)
                        g_raw.at(c, y, x) /= clf->stdev[c];

            // projection derivative: zero where the clamp was active
            const T eps = static_cast<T>(cfg.epsilon);
            for (std::size_t i = 0; i < g_raw.numel(); ++i) {
                const T lo = std::max(T(0), orig.v[i] - eps);
                const T hi = std::min(T(1), orig.v[i] + eps);
                if (raw.v[i] < lo || raw.v[i] > hi) g_raw.v[i] = T(0);
            }

            // d swap / d raw, pushed back through the analysis transform
            WaveletPyramidT<T> gp;
            gp.ll = static_cast<T>(2 * wll) * (pa.ll - po.ll);
            gp.lh = static_cast<T>(2 * w.lh) * (pa.lh - po.lh);
            gp.hl = static_cast<T>(2 * w.hl) * (pa.hl - po.hl);
            gp.hh = static_cast<T>(2 * w.hh) * (pa.hh - po.hh);
            ImageT<T> g_swap = idwt(gp);  // adjoint of the orthonormal dwt
            for (std::size_t i = 0; i < g_raw.numel(); ++i) g_raw.v[i] += g_swap.v[i];

            // reconstruction adjoint back to the clean high-band branch
            WaveletPyramidT<T> g_cand = dwt(g_raw);
            TensorT<T> g_cln = high_bands(g_cand);
            TensorT<T> g_tgt(g_cln.shape);  // target branch unused downstream
            grads->assign(sp.param_count(), T(0));
            stack_backward(sp, cache, std::move(g_cln), std::move(g_tgt), *grads);
        }
        return ev;
    }
};

template <class T>
struct AttackResultT {
    ImageT<T> adv_image;  // quantized to the 8-bit grid
    ImageT<T> tgs_image;
    int true_label = -1;
    int target_class = -1;
    int predicted_class = -1;
    bool success_targeted = false;
    bool success_untargeted = false;
    bool tgs_threshold_met = true;
    int iterations_used = 0;
    LossRecord final_losses;
    MetricRecord metrics;
    std::vector<double> loss_trace;
};

using AttackResult = AttackResultT<float>;

template <class T>
int choose_target(const ClassifierT<T>& clf, const ImageT<T>& orig, int true_label,
                  const AttackConfig& cfg, std::mt19937_64& rng) {
    if (cfg.target_policy == "random-other") {
        int c = static_cast<int>(rng() % static_cast<std::uint64_t>(clf.num_classes - 1));
        if (c >= true_label) ++c;
        return c;
    }
    if (cfg.target_policy == "least-likely") {
        const auto p = clf.predict(orig);
        int best = -1;
        for (int c = 0; c < clf.num_classes; ++c)
            if (c != true_label && (best < 0 || p.v[c] < p.v[best])) best = c;
        return best;
    }
    const int k = std::stoi(cfg.target_policy.substr(6));  // fixed:<k>
    if (k < 0 || k >= clf.num_classes)
        throw std::invalid_argument("target_policy fixed:" + std::to_string(k) + " out of range");
    if (k == true_label)
        throw std::invalid_argument("target_policy fixed:" + std::to_string(k) +
                                    " equals the true label");
    return k;
}

/// Full AdvSwap run on one image: TGS generation, coupling-stack
/// optimization under the l-inf constraint, 8-bit quantization and
/// re-verification.
template <class T>
AttackResultT<T> run_attack(const ClassifierT<T>& clf, const ImageT<T>& orig, int true_label,
                            const AttackConfig& cfg) {
    cfg.validate();
    check_image(orig, "run_attack input");
    if (clf.predict_class(orig) != true_label)
        throw std::invalid_argument("run_attack: original image is not classified as its label (" +
                                    std::to_string(true_label) + "); caller must filter");

    std::mt19937_64 rng(cfg.seed);
    AttackResultT<T> res;
    res.true_label = true_label;
    res.target_class = choose_target(clf, orig, true_label, cfg, rng);

    TgsResult<T> tgs = make_target_guide(clf, res.target_class, cfg);
    res.tgs_image = tgs.image;
    res.tgs_threshold_met = tgs.threshold_met;

    auto obj = SwapObjective<T>::make(clf, orig, tgs.image, res.target_class, cfg);
    auto sp = init_params<T>(obj.features.cln.dim(0), cfg.num_blocks,
                             static_cast<T>(cfg.beta_scale), cfg.seed, cfg.growth);
    std::vector<T> theta = flatten_params(sp);
    std::vector<T> grads;
    nn::AdamT<T> adam;

    ImageT<T> last_candidate = orig;
    int streak = 0;
    const double slack = 1e-6;
    for (int it = 0; it < cfg.max_iters; ++it) {
        auto ev = obj.evaluate(sp, &grads);
        last_candidate = ev.candidate;
        res.loss_trace.push_back(ev.losses.total);
        res.final_losses = ev.losses;
        res.iterations_used = it + 1;

        // constraint safety: every iterate must satisfy the eps-ball and [0,1]
        for (std::size_t i = 0; i < ev.candidate.numel(); ++i) {
            const double d = std::abs(static_cast<double>(ev.candidate.v[i]) -
                                      static_cast<double>(orig.v[i]));
            if (d > cfg.epsilon + slack || ev.candidate.v[i] < T(0) || ev.candidate.v[i] > T(1))
                throw std::runtime_error("constraint violation inside attack loop");
        }

        streak = ev.predicted == res.target_class ? streak + 1 : 0;
        if (streak >= cfg.success_streak) break;

        adam.step(theta, grads, lr_schedule(it, cfg));
        unflatten_params(sp, theta);
    }

    // success flags refer to the saved 8-bit image
    ImageT<T> quant = last_candidate;
    for (auto& x : quant.v) {
        const double c = std::min(1.0, std::max(0.0, static_cast<double>(x)));
        x = static_cast<T>(std::lround(c * 255.0) / 255.0);
    }
    res.adv_image = quant;
    res.predicted_class = clf.predict_class(quant);
    res.success_targeted = res.predicted_class == res.target_class;
    res.success_untargeted = res.predicted_class != true_label;
    res.metrics = compute_metrics(orig, quant);
    return res;
}

}  // namespace advswap

#endif  // ADVSWAP_ATTACK_HPP
