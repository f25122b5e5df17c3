#ifndef ADVSWAP_DATA_HPP
#define ADVSWAP_DATA_HPP

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advswap/attack.hpp"
#include "advswap/io.hpp"
#include "advswap/models.hpp"
#include "advswap/tensor.hpp"

namespace advswap {

inline constexpr const char* kToolkitVersion = "0.1.0";
inline constexpr int kManifestSchemaVersion = 1;

struct DatasetItem {
    std::string image_path;
    int class_id = -1;
    std::string split = "all";
};

/// Class-folder image tree, resolved to a deterministic (lexicographic)
/// item order. Images are decoded and resized lazily via load_item.
struct LabeledDataset {
    std::vector<DatasetItem> items;
    std::vector<std::string> class_names;
    int resolution = 32;
};

inline LabeledDataset load_dataset(const std::string& root, int resolution = 32) {
    namespace fs = std::filesystem;
    if (resolution % 2 != 0)
        throw std::invalid_argument("load_dataset: resolution must be even");
    if (!fs::is_directory(root))
        throw std::runtime_error("dataset root is not a directory: " + root);

    LabeledDataset ds;
    ds.resolution = resolution;
    std::vector<std::string> class_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw std::runtime_error("dataset root has no class folders: " + root);

    auto is_image = [](const fs::path& p) {
        std::string ext = p.extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        return ext == ".png" || ext == ".ppm" || ext == ".jpg" || ext == ".jpeg";
    };
    for (std::size_t ci = 0; ci < class_dirs.size(); ++ci) {
        ds.class_names.push_back(class_dirs[ci]);
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(fs::path(root) / class_dirs[ci]))
            if (e.is_regular_file() && is_image(e.path())) files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        for (const auto& f : files)
            ds.items.push_back({f, static_cast<int>(ci), "all"});
    }
    if (ds.items.empty()) throw std::runtime_error("dataset has no images: " + root);
    return ds;
}

template <class T = float>
ImageT<T> load_item(const LabeledDataset& ds, const DatasetItem& item) {
    return io::load_image<T>(item.image_path, ds.resolution);
}

/// Keeps up to per_class correctly classified images per class; a class
/// with no correct image is dropped with a warning on the given stream.
template <class T>
LabeledDataset select_correct(const LabeledDataset& ds, const ClassifierT<T>& clf, int per_class,
                              std::ostream* warn = &std::cerr) {
    LabeledDataset out;
    out.class_names = ds.class_names;
    out.resolution = ds.resolution;
    std::vector<int> kept(ds.class_names.size(), 0);
    for (const auto& item : ds.items) {
        if (kept[item.class_id] >= per_class) continue;
        ImageT<T> img;
        try {
            img = load_item<T>(ds, item);
        } catch (const std::exception& e) {
            if (warn) *warn << "warning: skipping unreadable image " << item.image_path << ": "
                            << e.what() << "\n";
            continue;
        }
        if (clf.predict_class(img) == item.class_id) {
            out.items.push_back(item);
            ++kept[item.class_id];
        }
    }
    if (warn)
        for (std::size_t c = 0; c < kept.size(); ++c)
            if (kept[c] == 0)
                *warn << "warning: class '" << ds.class_names[c]
                      << "' has no correctly classified images; omitted from attack set\n";
    return out;
}

namespace detail {

inline std::string fmt_double(double v) {
    if (std::isinf(v)) return "inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace detail

inline nlohmann::json attack_config_to_json(const AttackConfig& c) {
    return nlohmann::json{
        {"lambda_adv", c.lambda_adv},
        {"lambda_rho", c.lambda_rho},
        {"lambda_eta_phi_varphi", c.lambda_eta_phi_varphi},
        {"lambda_perp", c.lambda_perp},
        {"epsilon", c.epsilon},
        {"lr_init", c.lr_init},
        {"lr_decay", c.lr_decay},
        {"lr_decay_every", c.lr_decay_every},
        {"lr_floor", c.lr_floor},
        {"max_iters", c.max_iters},
        {"tgs_step", c.tgs_step},
        {"tgs_conf_threshold", c.tgs_conf_threshold},
        {"tgs_max_iters", c.tgs_max_iters},
        {"num_blocks", c.num_blocks},
        {"beta_scale", c.beta_scale},
        {"growth", c.growth},
        {"seed", c.seed},
        {"target_policy", c.target_policy},
        {"tgs_direction", c.tgs_direction},
        {"success_streak", c.success_streak},
    };
}

inline AttackConfig attack_config_from_json(const nlohmann::json& j) {
    AttackConfig c;
    auto get = [&](const char* k, auto& field) {
        if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    get("lambda_adv", c.lambda_adv);
    get("lambda_rho", c.lambda_rho);
    get("lambda_eta_phi_varphi", c.lambda_eta_phi_varphi);
    get("lambda_perp", c.lambda_perp);
    get("epsilon", c.epsilon);
    get("lr_init", c.lr_init);
    get("lr_decay", c.lr_decay);
    get("lr_decay_every", c.lr_decay_every);
    get("lr_floor", c.lr_floor);
    get("max_iters", c.max_iters);
    get("tgs_step", c.tgs_step);
    get("tgs_conf_threshold", c.tgs_conf_threshold);
    get("tgs_max_iters", c.tgs_max_iters);
    get("num_blocks", c.num_blocks);
    get("beta_scale", c.beta_scale);
    get("growth", c.growth);
    get("seed", c.seed);
    get("target_policy", c.target_policy);
    get("tgs_direction", c.tgs_direction);
    get("success_streak", c.success_streak);
    c.validate();
    return c;
}

/// One attacked image plus its provenance, ready for persistence.
template <class T>
struct RunItemT {
    std::string id;
    std::string source_path;
    ImageT<T> orig;
    AttackResultT<T> result;
};

using RunItem = RunItemT<float>;

inline std::string metrics_csv_header() {
    return "id,source_path,true_label,target_class,predicted,success_targeted,"
           "success_untargeted,tgs_threshold_met,iterations,mse,psnr,ssim,l2,linf,lpips";
}

template <class T>
std::string metrics_csv_row(const RunItemT<T>& it) {
    const auto& r = it.result;
    const auto& m = r.metrics;
    std::string row = it.id + "," + it.source_path + "," + std::to_string(r.true_label) + "," +
                      std::to_string(r.target_class) + "," + std::to_string(r.predicted_class) +
                      "," + std::to_string(r.success_targeted ? 1 : 0) + "," +
                      std::to_string(r.success_untargeted ? 1 : 0) + "," +
                      std::to_string(r.tgs_threshold_met ? 1 : 0) + "," +
                      std::to_string(r.iterations_used) + "," + detail::fmt_double(m.mse) + "," +
                      detail::fmt_double(m.psnr) + "," + detail::fmt_double(m.ssim) + "," +
                      detail::fmt_double(m.l2) + "," + detail::fmt_double(m.linf) + "," +
                      (m.lpips ? detail::fmt_double(*m.lpips) : "");
    return row;
}

template <class T>
nlohmann::json result_record_json(const RunItemT<T>& it) {
    const auto& r = it.result;
    nlohmann::json m{
        {"mse", r.metrics.mse},
        {"ssim", r.metrics.ssim},
        {"l2", r.metrics.l2},
        {"linf", r.metrics.linf},
    };
    if (std::isinf(r.metrics.psnr)) m["psnr"] = nullptr;  // +inf sentinel
    else m["psnr"] = r.metrics.psnr;
    if (r.metrics.lpips) m["lpips"] = *r.metrics.lpips;
    return nlohmann::json{
        {"id", it.id},
        {"source_path", it.source_path},
        {"true_label", r.true_label},
        {"target_class", r.target_class},
        {"predicted_class", r.predicted_class},
        {"success_targeted", r.success_targeted},
        {"success_untargeted", r.success_untargeted},
        {"tgs_threshold_met", r.tgs_threshold_met},
        {"iterations_used", r.iterations_used},
        {"final_losses", {{"total", r.final_losses.total},
                          {"adv", r.final_losses.adv},
                          {"swap", r.final_losses.swap}}},
        {"loss_trace", r.loss_trace},
        {"metrics", m},
    };
}

/// Amplified perturbation map: clamp(10 * |adv - orig|, 0, 1) per channel.
template <class T>
ImageT<T> perturbation_map(const ImageT<T>& orig, const ImageT<T>& adv) {
    ImageT<T> p(orig.shape);
    for (std::size_t i = 0; i < p.numel(); ++i)
        p.v[i] = std::min(T(1), static_cast<T>(10) * std::abs(adv.v[i] - orig.v[i]));
    return p;
}

/// Writes adv/tgs/perturbation PNGs, per-image JSON, the aggregate CSV
/// and the run manifest. Returns the manifest path.
template <class T>
std::string save_run_artifacts(const std::vector<RunItemT<T>>& items, const AttackConfig& cfg,
                               const std::string& out_dir,
                               nlohmann::json extra_manifest_fields = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto dir = fs::path(out_dir);

    std::string csv = metrics_csv_header() + "\n";
    nlohmann::json manifest_items = nlohmann::json::array();
    try {
        for (const auto& it : items) {
            io::save_png(it.result.adv_image, (dir / (it.id + "_adv.png")).string());
            io::save_png(it.result.tgs_image, (dir / (it.id + "_tgs.png")).string());
            io::save_png(perturbation_map(it.orig, it.result.adv_image),
                         (dir / (it.id + "_pert.png")).string());
            std::ofstream jf(dir / (it.id + ".json"));
            jf << result_record_json(it).dump(2) << "\n";
            if (!jf) throw std::runtime_error("write failed: " + it.id + ".json");
            csv += metrics_csv_row(it) + "\n";
            manifest_items.push_back({{"id", it.id},
                                      {"source_path", it.source_path},
                                      {"true_label", it.result.true_label}});
        }
    } catch (const std::exception& e) {
        nlohmann::json manifest{{"schema_version", kManifestSchemaVersion},
                                {"toolkit_version", kToolkitVersion},
                                {"partial_output", true},
                                {"error", e.what()}};
        std::ofstream mf(dir / "manifest.json");
        mf << manifest.dump(2) << "\n";
        throw;
    }
    {
        std::ofstream cf(dir / "metrics.csv");
        cf << csv;
        if (!cf) throw std::runtime_error("write failed: metrics.csv");
    }
    nlohmann::json manifest{
        {"schema_version", kManifestSchemaVersion},
        {"toolkit_version", kToolkitVersion},
        {"config", attack_config_to_json(cfg)},
        {"items", manifest_items},
    };
    for (auto& [k, v] : extra_manifest_fields.items()) manifest[k] = v;
    const std::string mpath = (dir / "manifest.json").string();
    std::ofstream mf(mpath);
    mf << manifest.dump(2) << "\n";
    if (!mf) throw std::runtime_error("write failed: manifest.json");
    return mpath;
}

}  // namespace advswap

#endif  // ADVSWAP_DATA_HPP
