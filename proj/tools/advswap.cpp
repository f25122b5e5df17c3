// AdvSwap command-line front end: dataset generation, surrogate training,
// attacks, defense evaluation, transferability protocols and reports.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "advswap/attack.hpp"
#include "advswap/config.hpp"
#include "advswap/data.hpp"
#include "advswap/defenses.hpp"
#include "advswap/io.hpp"
#include "advswap/metrics.hpp"
#include "advswap/models.hpp"
#include "advswap/runner.hpp"
#include "advswap/synth.hpp"

namespace fs = std::filesystem;
using namespace advswap;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;      // config / data errors
constexpr int kExitDiverged = 3;   // training divergence
constexpr int kExitNoImages = 4;   // zero images survive filtering

int default_workers() {
    if (const char* env = std::getenv("ADVSWAP_NUM_WORKERS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
}

void print_summary(const AttackRunSummary& s) {
    std::printf("attacked images:   %zu\n", s.count);
    std::printf("targeted ASR:      %.4f\n", s.targeted_asr);
    std::printf("untargeted ASR:    %.4f\n", s.untargeted_asr);
    std::printf("mean MSE:          %.6g\n", s.mean_mse);
    std::printf("mean PSNR (dB):    %.4f\n", s.mean_psnr);
    std::printf("mean SSIM:         %.6f\n", s.mean_ssim);
    std::printf("mean l2:           %.6f\n", s.mean_l2);
    std::printf("mean linf:         %.6f\n", s.mean_linf);
    std::printf("max linf:          %.6f\n", s.max_linf);
}

struct DefenseSpec {
    enum class Kind { Jpeg, Shield } kind = Kind::Jpeg;
    int quality = 30;
    std::vector<int> qualities;
    int block = 8;
    std::string tag;
};

DefenseSpec parse_defense(const std::string& s) {
    DefenseSpec d;
    d.tag = s;
    for (auto& c : d.tag)
        if (c == ':' || c == ',') c = '_';
    if (s.rfind("jpeg:", 0) == 0) {
        d.kind = DefenseSpec::Kind::Jpeg;
        d.quality = std::stoi(s.substr(5));
        return d;
    }
    if (s.rfind("shield:", 0) == 0) {
        d.kind = DefenseSpec::Kind::Shield;
        std::string rest = s.substr(7);
        const auto colon = rest.find(':');
        if (colon == std::string::npos)
            throw std::runtime_error("shield defense needs a block size: shield:<q1,q2,...>:<block>");
        d.block = std::stoi(rest.substr(colon + 1));
        std::stringstream qs(rest.substr(0, colon));
        std::string tok;
        while (std::getline(qs, tok, ',')) d.qualities.push_back(std::stoi(tok));
        if (d.qualities.empty()) throw std::runtime_error("shield defense needs at least one quality");
        return d;
    }
    throw std::runtime_error("unknown defense '" + s +
                             "'; valid forms: jpeg:<quality>, shield:<q1,q2,...>:<block>");
}

Image apply_defense(const Image& img, const DefenseSpec& d, std::uint64_t seed) {
    return d.kind == DefenseSpec::Kind::Jpeg ? jpeg_defense(img, d.quality)
                                             : shield_slq(img, d.qualities, d.block, seed);
}

json load_manifest(const std::string& run_dir) {
    std::ifstream f(fs::path(run_dir) / "manifest.json");
    if (!f) throw std::runtime_error("no manifest.json in run directory: " + run_dir);
    return json::parse(f);
}

// ---- subcommand bodies -------------------------------------------------

int cmd_gen_data(const std::string& out, int classes, int per_class, int resolution,
                 std::uint64_t seed) {
    synth::generate_dataset(out, classes, per_class, resolution, seed);
    std::printf("wrote %d classes x %d images (%dx%d) to %s\n", classes, per_class, resolution,
                resolution, out.c_str());
    return 0;
}

int cmd_train(const std::string& data, const std::string& arch, const std::string& out,
              std::uint64_t seed, int epochs, double lr, double label_smoothing,
              bool jpeg_augment) {
    const LabeledDataset ds = load_dataset(data);
    std::vector<Image> images;
    std::vector<int> labels;
    images.reserve(ds.items.size());
    for (const auto& it : ds.items) {
        try {
            images.push_back(load_item<float>(ds, it));
            labels.push_back(it.class_id);
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << it.image_path << ": " << e.what() << "\n";
        }
    }
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.lr = lr;
    cfg.seed = seed;
    cfg.label_smoothing = label_smoothing;

    AugmentFn<float> augment = nullptr;
    if (jpeg_augment) {
        // surrogates should tolerate compression the way deployed models do
        augment = [](const Image& img, std::mt19937_64& rng) {
            static const int qualities[4] = {30, 50, 70, 90};
            if (rng() % 2 == 0) return img;
            return io::jpeg_roundtrip(img, qualities[rng() % 4]);
        };
    }
    const Classifier clf = train_surrogate<float>(images, labels, ds.class_names, arch,
                                                  ds.resolution, cfg, augment, &std::cout);
    save_classifier(clf, out);
    std::printf("held-out accuracy: %.4f\n", clf.held_out_accuracy);
    std::printf("checkpoint: %s.json (+ %s.weights.bin)\n", out.c_str(), out.c_str());
    return 0;
}

int cmd_attack(std::string data, std::string model, const std::string& config_toml,
               const std::string& from_manifest, const std::string& out, int per_class,
               int workers, std::optional<std::uint64_t> seed_override,
               std::optional<int> max_iters_override) {
    AttackConfig cfg;
    if (!from_manifest.empty()) {
        std::ifstream mf(from_manifest);
        if (!mf) throw std::runtime_error("cannot open manifest: " + from_manifest);
        const json m = json::parse(mf);
        cfg = attack_config_from_json(m.at("config"));
        if (data.empty()) data = m.at("dataset_root").get<std::string>();
        if (model.empty()) model = m.at("model_checkpoint").get<std::string>();
        if (per_class <= 0) per_class = m.at("per_class").get<int>();
    }
    if (!config_toml.empty()) apply_config_toml(cfg, config_toml);
    if (seed_override) cfg.seed = *seed_override;
    if (max_iters_override) cfg.max_iters = *max_iters_override;
    cfg.validate();
    if (data.empty() || model.empty())
        throw std::runtime_error("attack requires --data and --model (or --from-manifest)");
    if (per_class <= 0) per_class = 10;

    const Classifier clf = load_classifier<float>(model);
    const LabeledDataset ds = load_dataset(data, clf.input_size);
    AttackRunSummary s;
    try {
        s = attack_dataset(ds, clf, model, cfg, per_class, out, workers, data);
    } catch (const std::runtime_error& e) {
        if (std::string(e.what()).find("zero images survive") != std::string::npos) {
            std::cerr << "error: " << e.what() << "\n";
            return kExitNoImages;
        }
        throw;
    }
    print_summary(s);
    std::printf("run directory: %s\n", out.c_str());
    return 0;
}

int cmd_defend(const std::string& run_dir, const std::string& model, const std::string& defense,
               std::uint64_t seed) {
    const DefenseSpec d = parse_defense(defense);
    const Classifier clf = load_classifier<float>(model);
    const json manifest = load_manifest(run_dir);

    std::vector<Outcome> defended, undefended;
    std::string csv = "id,true_label,pred_undefended,pred_defended\n";
    for (const auto& item : manifest.at("items")) {
        const std::string id = item.at("id").get<std::string>();
        const int true_label = item.at("true_label").get<int>();
        const Image adv = io::load_image<float>((fs::path(run_dir) / (id + "_adv.png")).string(),
                                                clf.input_size);
        const int pred_raw = clf.predict_class(adv);
        const Image def = apply_defense(adv, d, seed ^ io::fnv1a(id.data(), id.size()));
        const int pred_def = clf.predict_class(def);
        undefended.push_back({pred_raw, -1, true_label});
        defended.push_back({pred_def, -1, true_label});
        csv += id + "," + std::to_string(true_label) + "," + std::to_string(pred_raw) + "," +
               std::to_string(pred_def) + "\n";
    }
    if (defended.empty()) throw std::runtime_error("run has no items: " + run_dir);

    const std::string csv_path = (fs::path(run_dir) / ("defended_" + d.tag + ".csv")).string();
    std::ofstream(csv_path) << csv;
    const double ra_raw = recognition_accuracy(undefended);
    const double ra_def = recognition_accuracy(defended);
    std::printf("defense:          %s\n", defense.c_str());
    std::printf("codec:            opencv-%s\n", CV_VERSION);
    std::printf("RA undefended:    %.4f\n", ra_raw);
    std::printf("RA defended:      %.4f\n", ra_def);
    std::printf("outcomes CSV:     %s\n", csv_path.c_str());
    return 0;
}

int cmd_transfer(const std::string& data, const std::vector<std::string>& models,
                 const std::string& mode, const std::string& config_toml, const std::string& out,
                 int per_class, int workers, std::uint64_t seed) {
    AttackConfig cfg;
    if (!config_toml.empty()) apply_config_toml(cfg, config_toml);
    cfg.seed = seed;
    fs::create_directories(out);

    std::string csv;
    if (mode == "per-model") {
        csv = "model,arch,l2,lpips,ssim,targeted_asr,untargeted_asr\n";
        for (const auto& mpath : models) {
            const Classifier clf = load_classifier<float>(mpath);
            const LabeledDataset ds = load_dataset(data, clf.input_size);
            const std::string subdir = (fs::path(out) / fs::path(mpath).stem().string()).string();
            const auto s = attack_dataset(ds, clf, mpath, cfg, per_class, subdir, workers, data);
            char row[256];
            std::snprintf(row, sizeof(row), "%s,%s,%.6f,,%.6f,%.4f,%.4f\n", mpath.c_str(),
                          clf.arch_name.c_str(), s.mean_l2, s.mean_ssim, s.targeted_asr,
                          s.untargeted_asr);
            csv += row;
            std::printf("%s (%s): targeted ASR %.4f, SSIM %.4f, l2 %.4f\n", mpath.c_str(),
                        clf.arch_name.c_str(), s.targeted_asr, s.mean_ssim, s.mean_l2);
        }
        std::ofstream(fs::path(out) / "transfer_per_model.csv") << csv;
        std::printf("summary: %s/transfer_per_model.csv\n", out.c_str());
        return 0;
    }
    if (mode != "cross") throw std::runtime_error("unknown --mode '" + mode + "' (per-model|cross)");

    // cross: attack against models[0], evaluate the saved images on all
    const Classifier source = load_classifier<float>(models[0]);
    const LabeledDataset ds = load_dataset(data, source.input_size);
    const std::string run_dir = (fs::path(out) / "source_run").string();
    attack_dataset(ds, source, models[0], cfg, per_class, run_dir, workers, data);
    const json manifest = load_manifest(run_dir);

    csv = "eval_model,arch,targeted_asr,untargeted_asr\n";
    for (const auto& mpath : models) {
        const Classifier eval = load_classifier<float>(mpath);
        std::vector<Outcome> outs;
        for (const auto& item : manifest.at("items")) {
            const std::string id = item.at("id").get<std::string>();
            std::ifstream jf(fs::path(run_dir) / (id + ".json"));
            const json rec = json::parse(jf);
            const Image adv = io::load_image<float>(
                (fs::path(run_dir) / (id + "_adv.png")).string(), eval.input_size);
            outs.push_back({eval.predict_class(adv), rec.at("target_class").get<int>(),
                            item.at("true_label").get<int>()});
        }
        const double t_asr = asr(outs, AsrMode::Targeted);
        const double u_asr = asr(outs, AsrMode::Untargeted);
        char row[256];
        std::snprintf(row, sizeof(row), "%s,%s,%.4f,%.4f\n", mpath.c_str(),
                      eval.arch_name.c_str(), t_asr, u_asr);
        csv += row;
        std::printf("eval on %s (%s): targeted ASR %.4f, untargeted ASR %.4f\n", mpath.c_str(),
                    eval.arch_name.c_str(), t_asr, u_asr);
    }
    std::ofstream(fs::path(out) / "transfer_cross.csv") << csv;
    std::printf("matrix: %s/transfer_cross.csv\n", out.c_str());
    return 0;
}

std::string img_cell(const fs::path& png, int display = 96) {
    if (!fs::exists(png)) return "<td><em>missing</em></td>";
    cv::Mat m = cv::imread(png.string(), cv::IMREAD_COLOR);
    if (m.empty()) return "<td><em>unreadable</em></td>";
    return "<td><img width=\"" + std::to_string(display) + "\" src=\"" + io::png_data_uri(m) +
           "\"></td>";
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_path) {
    std::ostringstream html;
    html << "<!doctype html><html><head><meta charset=\"utf-8\"><title>AdvSwap report</title>"
            "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
            "td,th{border:1px solid #999;padding:4px 8px;text-align:center}</style></head><body>"
            "<h1>AdvSwap run report</h1>\n";

    // cross-run summary
    html << "<h2>Summary</h2><table><tr><th>run</th><th>images</th><th>targeted ASR</th>"
            "<th>untargeted ASR</th><th>mean SSIM</th><th>mean l&#8734;</th></tr>\n";
    struct RunInfo { std::string dir; json manifest; std::vector<json> recs; };
    std::vector<RunInfo> infos;
    for (const auto& run : runs) {
        RunInfo ri;
        ri.dir = run;
        try {
            ri.manifest = load_manifest(run);
            for (const auto& item : ri.manifest.at("items")) {
                std::ifstream jf(fs::path(run) / (item.at("id").get<std::string>() + ".json"));
                if (jf) ri.recs.push_back(json::parse(jf));
            }
        } catch (const std::exception& e) {
            html << "</table><p><strong>warning:</strong> run " << run << ": " << e.what()
                 << "</p><table>";
            continue;
        }
        double t = 0, u = 0, ssim_sum = 0, linf_sum = 0;
        for (const auto& r : ri.recs) {
            t += r.at("success_targeted").get<bool>() ? 1 : 0;
            u += r.at("success_untargeted").get<bool>() ? 1 : 0;
            ssim_sum += r.at("metrics").at("ssim").get<double>();
            linf_sum += r.at("metrics").at("linf").get<double>();
        }
        const double n = std::max<std::size_t>(1, ri.recs.size());
        html << "<tr><td>" << run << "</td><td>" << ri.recs.size() << "</td><td>" << t / n
             << "</td><td>" << u / n << "</td><td>" << ssim_sum / n << "</td><td>" << linf_sum / n
             << "</td></tr>\n";
        infos.push_back(std::move(ri));
    }
    html << "</table>\n";

    for (const auto& ri : infos) {
        html << "<h2>Run " << ri.dir << "</h2>\n"
             << "<table><tr><th>id</th><th>original</th><th>TGS</th><th>adversarial</th>"
                "<th>perturbation &times;10</th><th>true</th><th>target</th><th>pred</th>"
                "<th>SSIM</th></tr>\n";
        for (const auto& r : ri.recs) {
            const std::string id = r.at("id").get<std::string>();
            html << "<tr><td>" << id << "</td>"
                 << img_cell(r.at("source_path").get<std::string>())
                 << img_cell(fs::path(ri.dir) / (id + "_tgs.png"))
                 << img_cell(fs::path(ri.dir) / (id + "_adv.png"))
                 << img_cell(fs::path(ri.dir) / (id + "_pert.png")) << "<td>"
                 << r.at("true_label").get<int>() << "</td><td>" << r.at("target_class").get<int>()
                 << "</td><td>" << r.at("predicted_class").get<int>() << "</td><td>"
                 << r.at("metrics").at("ssim").get<double>() << "</td></tr>\n";
        }
        html << "</table>\n";
    }
    html << "</body></html>\n";
    std::ofstream f(out_path);
    f << html.str();
    if (!f) throw std::runtime_error("cannot write report: " + out_path);
    std::printf("report: %s\n", out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AdvSwap: wavelet high-frequency information-swapping adversarial attacks"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic pattern dataset");
    std::string gd_out = "data";
    int gd_classes = 10, gd_per_class = 120, gd_res = 32;
    std::uint64_t gd_seed = 0;
    gen->add_option("--out", gd_out, "output root");
    gen->add_option("--classes", gd_classes, "number of classes (2-10)");
    gen->add_option("--per-class", gd_per_class, "images per class");
    gen->add_option("--resolution", gd_res, "image side length (even)");
    gen->add_option("--seed", gd_seed, "generator seed");

    // train
    auto* train = app.add_subcommand("train", "train a surrogate classifier");
    std::string tr_data, tr_arch = "vgg-small", tr_out = "surrogate";
    std::uint64_t tr_seed = 0;
    int tr_epochs = 20;
    double tr_lr = 1e-3;
    double tr_smooth = TrainConfig{}.label_smoothing;
    bool tr_jpeg_aug = false;
    train->add_option("--data", tr_data, "dataset root (class folders)")->required();
    train->add_option("--arch", tr_arch, "vgg-small | resnet-small | inception-small");
    train->add_option("--out", tr_out, "checkpoint prefix");
    train->add_option("--seed", tr_seed, "training seed");
    train->add_option("--epochs", tr_epochs, "training epochs");
    train->add_option("--lr", tr_lr, "learning rate");
    train->add_option("--label-smoothing", tr_smooth, "cross-entropy label smoothing");
    train->add_flag("--jpeg-augment", tr_jpeg_aug, "augment with random JPEG re-compression");

    // attack
    auto* atk = app.add_subcommand("attack", "run AdvSwap over a dataset");
    std::string at_data, at_model, at_config, at_manifest, at_out = "run";
    int at_per_class = 10, at_workers = default_workers();
    std::optional<std::uint64_t> at_seed;
    std::optional<int> at_max_iters;
    atk->add_option("--data", at_data, "dataset root");
    atk->add_option("--model", at_model, "classifier checkpoint (.json)");
    atk->add_option("--config", at_config, "attack config TOML");
    atk->add_option("--from-manifest", at_manifest, "re-run from a previous run manifest");
    atk->add_option("--out", at_out, "run output directory");
    atk->add_option("--per-class", at_per_class, "max images per class");
    atk->add_option("--workers", at_workers, "parallel attack workers");
    atk->add_option("--seed", at_seed, "override config seed");
    atk->add_option("--max-iters", at_max_iters, "override max iterations");

    // defend
    auto* def = app.add_subcommand("defend", "evaluate a defense on a run directory");
    std::string df_run, df_model, df_defense;
    std::uint64_t df_seed = 0;
    def->add_option("--run", df_run, "attack run directory")->required();
    def->add_option("--model", df_model, "classifier checkpoint (.json)")->required();
    def->add_option("--defense", df_defense, "jpeg:<q> | shield:<q1,q2,...>:<block>")->required();
    def->add_option("--seed", df_seed, "defense RNG seed");

    // transfer
    auto* tra = app.add_subcommand("transfer", "multi-classifier evaluation");
    std::string tf_data, tf_models_csv, tf_mode = "per-model", tf_config, tf_out = "transfer";
    int tf_per_class = 3, tf_workers = default_workers();
    std::uint64_t tf_seed = 0;
    tra->add_option("--data", tf_data, "dataset root")->required();
    tra->add_option("--models", tf_models_csv, "comma-separated checkpoints")->required();
    tra->add_option("--mode", tf_mode, "per-model | cross");
    tra->add_option("--config", tf_config, "attack config TOML");
    tra->add_option("--out", tf_out, "output directory");
    tra->add_option("--per-class", tf_per_class, "max images per class");
    tra->add_option("--workers", tf_workers, "parallel attack workers");
    tra->add_option("--seed", tf_seed, "run seed");

    // report
    auto* rep = app.add_subcommand("report", "render an HTML report for run directories");
    std::vector<std::string> rp_runs;
    std::string rp_out = "report.html";
    rep->add_option("--run", rp_runs, "run directory (repeatable)")->required();
    rep->add_option("--out", rp_out, "output HTML path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gd_out, gd_classes, gd_per_class, gd_res, gd_seed);
        if (train->parsed())
            return cmd_train(tr_data, tr_arch, tr_out, tr_seed, tr_epochs, tr_lr, tr_smooth,
                             tr_jpeg_aug);
        if (atk->parsed())
            return cmd_attack(at_data, at_model, at_config, at_manifest, at_out, at_per_class,
                              at_workers, at_seed, at_max_iters);
        if (def->parsed()) return cmd_defend(df_run, df_model, df_defense, df_seed);
        if (tra->parsed()) {
            std::vector<std::string> models;
            std::stringstream ss(tf_models_csv);
            std::string tok;
            while (std::getline(ss, tok, ',')) models.push_back(tok);
            if (models.size() < 2) {
                std::cerr << "error: transfer needs at least 2 models\n";
                return kExitUsage;
            }
            return cmd_transfer(tf_data, models, tf_mode, tf_config, tf_out, tf_per_class,
                                tf_workers, tf_seed);
        }
        if (rep->parsed()) return cmd_report(rp_runs, rp_out);
    } catch (const TrainingDivergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
