#ifndef ADVSWAP_RUNNER_HPP
#define ADVSWAP_RUNNER_HPP

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "advswap/attack.hpp"
#include "advswap/data.hpp"
#include "advswap/io.hpp"
#include "advswap/models.hpp"

namespace advswap {

/// Per-image attack seed derived from the run seed; stable across runs
/// and independent of worker scheduling.
inline std::uint64_t item_seed(std::uint64_t run_seed, std::size_t index) {
    return run_seed ^ (0x9e3779b97f4a7c15ull * (index + 1));
}

inline void run_parallel(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < n; i = next++) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct AttackRunSummary {
    double targeted_asr = 0, untargeted_asr = 0;
    double mean_mse = 0, mean_psnr = 0, mean_ssim = 0, mean_l2 = 0, mean_linf = 0;
    double max_linf = 0;
    std::size_t count = 0;
};

inline std::string run_item_id(std::size_t index, const DatasetItem& item) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04zu", index);
    return std::string(buf) + "_" +
           std::filesystem::path(item.image_path).stem().string();
}

/// Filters to correctly classified images and attacks each one; artifacts
/// and manifest land in out_dir.
template <class T>
AttackRunSummary attack_dataset(const LabeledDataset& ds, const ClassifierT<T>& clf,
                                const std::string& model_path, const AttackConfig& cfg,
                                int per_class, const std::string& out_dir, int workers,
                                const std::string& data_root) {
    const LabeledDataset survivors = select_correct(ds, clf, per_class);
    if (survivors.items.empty())
        throw std::runtime_error("zero images survive correct-classification filtering");

    std::vector<RunItemT<T>> items(survivors.items.size());
    run_parallel(survivors.items.size(), workers, [&](std::size_t i) {
        const auto& it = survivors.items[i];
        AttackConfig icfg = cfg;
        icfg.seed = item_seed(cfg.seed, i);
        RunItemT<T> ri;
        ri.id = run_item_id(i, it);
        ri.source_path = it.image_path;
        ri.orig = load_item<T>(survivors, it);
        ri.result = run_attack(clf, ri.orig, it.class_id, icfg);
        items[i] = std::move(ri);
    });

    nlohmann::json extras{
        {"dataset_root", data_root},
        {"resolution", ds.resolution},
        {"per_class", per_class},
        {"model_checkpoint", model_path},
        {"model_hash", io::fnv1a_file(model_path)},
        {"model_arch", clf.arch_name},
        {"codec", "opencv-" CV_VERSION},
    };
    save_run_artifacts(items, cfg, out_dir, extras);

    AttackRunSummary s;
    s.count = items.size();
    for (const auto& it : items) {
        s.targeted_asr += it.result.success_targeted ? 1 : 0;
        s.untargeted_asr += it.result.success_untargeted ? 1 : 0;
        s.mean_mse += it.result.metrics.mse;
        s.mean_psnr += std::isinf(it.result.metrics.psnr) ? 100.0 : it.result.metrics.psnr;
        s.mean_ssim += it.result.metrics.ssim;
        s.mean_l2 += it.result.metrics.l2;
        s.mean_linf += it.result.metrics.linf;
        s.max_linf = std::max(s.max_linf, it.result.metrics.linf);
    }
    const double n = static_cast<double>(s.count);
    s.targeted_asr /= n;
    s.untargeted_asr /= n;
    s.mean_mse /= n;
    s.mean_psnr /= n;
    s.mean_ssim /= n;
    s.mean_l2 /= n;
    s.mean_linf /= n;
    return s;
}

}  // namespace advswap

#endif  // ADVSWAP_RUNNER_HPP
