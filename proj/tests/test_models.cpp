#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "advswap/models.hpp"

using namespace advswap;

namespace {

template <class T>
ImageT<T> noisy_color_image(int size, double r, double g, double b, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 0.05);
    ImageT<T> img({3, size, size});
    const double base[3] = {r, g, b};
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                img.at(c, y, x) =
                    static_cast<T>(std::min(1.0, std::max(0.0, base[c] + n(rng))));
    return img;
}

// three well-separated color classes, enough for a quick fit
template <class T>
void make_color_dataset(int size, int per_class, std::uint64_t seed,
                        std::vector<ImageT<T>>& images, std::vector<int>& labels) {
    std::mt19937_64 rng(seed);
    const double bases[3][3] = {{0.9, 0.1, 0.1}, {0.1, 0.9, 0.1}, {0.1, 0.1, 0.9}};
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < per_class; ++i) {
            images.push_back(noisy_color_image<T>(size, bases[c][0], bases[c][1], bases[c][2], rng));
            labels.push_back(c);
        }
}

template <class T>
ClassifierT<T> random_classifier(const std::string& arch, int classes, int size, std::uint64_t seed) {
    ClassifierT<T> clf;
    clf.arch_name = arch;
    clf.num_classes = classes;
    clf.input_size = size;
    for (int c = 0; c < classes; ++c) clf.class_names.push_back("c" + std::to_string(c));
    clf.net = net::build_arch<T>(arch, classes, size);
    std::mt19937_64 rng(seed);
    net::init_net(clf.net, rng);
    return clf;
}

}  // namespace

TEST_CASE("predict returns a probability simplex for every arch") {
    std::mt19937_64 rng(1);
    for (const std::string arch : {"vgg-small", "resnet-small", "inception-small"}) {
        auto clf = random_classifier<double>(arch, 7, 16, 3);
        ImageT<double> img({3, 16, 16}, 0.5);
        std::uniform_real_distribution<double> u(0, 1);
        for (auto& x : img.v) x = u(rng);
        const auto p = clf.predict(img);
        CHECK(p.numel() == 7);
        double sum = 0;
        for (double v : p.v) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-5);
        // determinism
        CHECK(clf.predict(img).v == p.v);
    }
}

TEST_CASE("unknown architecture is rejected") {
    CHECK_THROWS_AS(net::build_arch<float>("resnet152", 10, 32), std::invalid_argument);
    CHECK_THROWS_AS(net::build_arch<float>("vgg-small", 10, 30), std::invalid_argument);
}

TEST_CASE("input gradient basics") {
    auto clf = random_classifier<double>("vgg-small", 5, 16, 11);
    std::mt19937_64 rng(12);
    ImageT<double> img({3, 16, 16});
    std::uniform_real_distribution<double> u(0.1, 0.9);
    for (auto& x : img.v) x = u(rng);

    SUBCASE("constant loss gives a zero gradient") {
        const auto g = clf.input_gradient(img, LossSpec::constant());
        for (double v : g.v) CHECK(v == 0.0);
    }
    SUBCASE("gradient shape equals image shape") {
        const auto g = clf.input_gradient(img, LossSpec::cross_entropy(2));
        CHECK(g.shape == img.shape);
    }
    SUBCASE("capability flag is honored") {
        clf.gradients = false;
        CHECK_THROWS_AS(clf.input_gradient(img, LossSpec::cross_entropy(0)), std::runtime_error);
    }
}

TEST_CASE("input gradients match central finite differences") {
    for (const std::string arch : {"vgg-small", "resnet-small", "inception-small"}) {
        auto clf = random_classifier<double>(arch, 4, 16, 21);
        std::mt19937_64 rng(22);
        ImageT<double> img({3, 16, 16});
        std::uniform_real_distribution<double> u(0.2, 0.8);
        for (auto& x : img.v) x = u(rng);
        const int target = 1;
        const auto g = clf.input_gradient(img, LossSpec::cross_entropy(target));
        auto loss_at = [&](const ImageT<double>& im) {
            const auto p = clf.predict(im);
            return -std::log(std::max(1e-12, p.v[target]));
        };
        const double h = 1e-4;
        for (int probe = 0; probe < 10; ++probe) {
            const std::size_t i = rng() % img.numel();
            ImageT<double> ip = img, im = img;
            ip.v[i] += h;
            im.v[i] -= h;
            const double fd = (loss_at(ip) - loss_at(im)) / (2 * h);
            const double rel = std::abs(fd - g.v[i]) / std::max({std::abs(fd), std::abs(g.v[i]), 1e-6});
            CHECK(rel < 1e-3);
        }
    }
}

TEST_CASE("surrogate training fits an easy dataset") {
    std::vector<ImageT<float>> images;
    std::vector<int> labels;
    make_color_dataset<float>(16, 30, 5, images, labels);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.seed = 7;
    auto clf = train_surrogate<float>(images, labels, {"red", "green", "blue"}, "vgg-small", 16, cfg);
    CHECK(clf.held_out_accuracy >= 0.95);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < images.size(); ++i)
        if (clf.predict_class(images[i]) == labels[i]) ++correct;
    CHECK(static_cast<double>(correct) / images.size() >= 0.95);

    SUBCASE("seeded training is bit-deterministic") {
        auto clf2 = train_surrogate<float>(images, labels, {"red", "green", "blue"}, "vgg-small", 16, cfg);
        std::vector<float> w1, w2;
        clf.net.for_each_array([&](const std::vector<float>& a) { w1.insert(w1.end(), a.begin(), a.end()); });
        clf2.net.for_each_array([&](const std::vector<float>& a) { w2.insert(w2.end(), a.begin(), a.end()); });
        CHECK(w1 == w2);
    }

    SUBCASE("checkpoint round trip preserves predictions") {
        const std::string prefix = "clf_ckpt_test";
        save_classifier(clf, prefix);
        auto back = load_classifier<float>(prefix + ".json");
        CHECK(back.arch_name == clf.arch_name);
        CHECK(back.class_names == clf.class_names);
        CHECK(back.held_out_accuracy == clf.held_out_accuracy);
        for (int i = 0; i < 5; ++i)
            CHECK(back.predict(images[i * 7]).v == clf.predict(images[i * 7]).v);
        std::remove((prefix + ".json").c_str());
        std::remove((prefix + ".weights.bin").c_str());
    }
}

TEST_CASE("training rejects degenerate datasets") {
    std::vector<ImageT<float>> images{ImageT<float>({3, 16, 16}, 0.5f)};
    std::vector<int> labels{0};
    TrainConfig cfg;
    CHECK_THROWS_AS(train_surrogate<float>(images, labels, {"a", "b"}, "vgg-small", 16, cfg),
                    std::invalid_argument);
    CHECK_THROWS_AS(train_surrogate<float>({}, {}, {"a", "b"}, "vgg-small", 16, cfg),
                    std::invalid_argument);
}
