#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "advswap/coupling.hpp"

using namespace advswap;

namespace {

template <class T>
TensorT<T> random_tensor(const std::vector<int>& shape, std::mt19937_64& rng, double scale = 0.2) {
    std::normal_distribution<double> d(0.0, scale);
    TensorT<T> t(shape);
    for (auto& x : t.v) x = static_cast<T>(d(rng));
    return t;
}

template <class T>
void randomize_params(CouplingStackParamsT<T>& sp, std::uint64_t seed, double scale = 0.05) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, scale);
    for_each_param_array(sp, [&](std::vector<T>& a) {
        for (auto& x : a) x = static_cast<T>(d(rng));
    });
}

}  // namespace

TEST_CASE("beta map at zero is half the scale factor") {
    CHECK(beta_map(0.0, 2.0) == doctest::Approx(1.0));
    CHECK(beta_map(0.0f, 3.0f) == doctest::Approx(1.5f));
}

TEST_CASE("zero-initialized final layer gives s = t = 0") {
    ConditionerT<double> f(3, 8);
    std::mt19937_64 rng(1);
    f.conv1.he_init(rng);
    f.conv2.he_init(rng);  // conv3 stays zero
    auto in = random_tensor<double>({3, 4, 4}, rng);
    auto [s, t] = conditioner_forward(f, in);
    for (double v : s.v) CHECK(v == 0.0);
    for (double v : t.v) CHECK(v == 0.0);
}

TEST_CASE("conditioner output shapes match the input") {
    std::mt19937_64 rng(2);
    ConditionerT<double> f(9, 16);
    f.conv1.he_init(rng);
    f.conv2.he_init(rng);
    f.conv3.he_init(rng);
    auto in = random_tensor<double>({9, 8, 8}, rng);
    auto [s, t] = conditioner_forward(f, in);
    CHECK(s.shape == in.shape);
    CHECK(t.shape == in.shape);
}

TEST_CASE("non-finite parameters are rejected") {
    ConditionerT<double> f(1, 4);
    f.conv3.b[0] = std::numeric_limits<double>::quiet_NaN();
    TensorT<double> in({1, 2, 2});
    CHECK_THROWS_AS(conditioner_forward(f, in), std::runtime_error);
}

TEST_CASE("zero conditioner with raw beta scales the clean branch by e") {
    // hand-evaluated forward rule with F == 0, beta(0) = 1, no offset
    CouplingBlockParamsT<double> bp(1, 4);
    BranchPairT<double> p;
    p.cln = TensorT<double>({1, 2, 2}, 1.0);
    p.tgt = TensorT<double>({1, 2, 2}, 0.3);
    auto out = coupling_forward(p, bp, 2.0, 0.0);
    for (double v : out.cln.v) CHECK(v == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("scalar forward example: 1 * e^1 + 0.5") {
    CouplingBlockParamsT<double> bp(1, 4);
    bp.f.conv3.b[1] = 0.5;  // t-channel bias; s logit stays 0
    BranchPairT<double> p;
    p.cln = TensorT<double>({1, 1, 1}, 1.0);
    p.tgt = TensorT<double>({1, 1, 1}, 0.0);
    auto out = coupling_forward(p, bp, 2.0, 0.0);
    CHECK(out.cln.v[0] == doctest::Approx(3.21828).epsilon(1e-5));

    SUBCASE("inverse recovers the input") {
        auto back = coupling_inverse(out, bp, 2.0, 0.0);
        CHECK(back.cln.v[0] == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(back.tgt.v[0] == doctest::Approx(0.0));
    }
}

TEST_CASE("identity block with the beta offset removed") {
    CouplingBlockParamsT<double> bp(2, 4);
    const double off = beta_map(0.0, 2.0);
    std::mt19937_64 rng(3);
    BranchPairT<double> p{random_tensor<double>({2, 4, 4}, rng), random_tensor<double>({2, 4, 4}, rng)};
    auto out = coupling_forward(p, bp, 2.0, off);
    CHECK(max_abs_diff(out.cln, p.cln) < 1e-12);
    CHECK(max_abs_diff(out.tgt, p.tgt) < 1e-12);
    auto inv = coupling_inverse(p, bp, 2.0, off);
    CHECK(max_abs_diff(inv.cln, p.cln) < 1e-12);
}

TEST_CASE("single-block round trip with random parameters") {
    std::mt19937_64 rng(4);
    auto sp = init_params<double>(2, 1, 2.0, 9);
    randomize_params(sp, 10);
    BranchPairT<double> p{random_tensor<double>({2, 8, 8}, rng), random_tensor<double>({2, 8, 8}, rng)};
    auto fwd = coupling_forward(p, sp.blocks[0], sp.beta_scale, sp.log_scale_offset);
    auto back = coupling_inverse(fwd, sp.blocks[0], sp.beta_scale, sp.log_scale_offset);
    CHECK(max_abs_diff(back.cln, p.cln) < 1e-8);
    CHECK(max_abs_diff(back.tgt, p.tgt) < 1e-8);

    SUBCASE("num_blocks = 1 stack reduces to coupling_forward") {
        auto sf = stack_forward(p, sp);
        CHECK(max_abs_diff(sf.cln, fwd.cln) == 0.0);
        CHECK(max_abs_diff(sf.tgt, fwd.tgt) == 0.0);
    }
}

TEST_CASE("stack round trips across depths, 32-bit") {
    std::mt19937_64 rng(5);
    for (int depth : {1, 4, 8}) {
        auto sp = init_params<float>(9, depth, 2.0f, 77 + depth);
        randomize_params(sp, 100 + depth);
        BranchPairT<float> p{random_tensor<float>({9, 16, 16}, rng),
                             random_tensor<float>({9, 16, 16}, rng)};
        auto back = stack_inverse(stack_forward(p, sp), sp);
        CHECK(max_abs_diff(back.cln, p.cln) < 1e-4);
        CHECK(max_abs_diff(back.tgt, p.tgt) < 1e-4);
    }
}

TEST_CASE("stack round trip, 64-bit tolerance") {
    std::mt19937_64 rng(6);
    auto sp = init_params<double>(6, 8, 2.0, 13);
    randomize_params(sp, 14);
    BranchPairT<double> p{random_tensor<double>({6, 8, 8}, rng), random_tensor<double>({6, 8, 8}, rng)};
    auto back = stack_inverse(stack_forward(p, sp), sp);
    CHECK(max_abs_diff(back.cln, p.cln) < 1e-8);
    CHECK(max_abs_diff(back.tgt, p.tgt) < 1e-8);
}

TEST_CASE("random parameters move the clean branch") {
    int moved = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::mt19937_64 rng(1000 + trial);
        auto sp = init_params<double>(3, 2, 2.0, 2000 + trial);
        randomize_params(sp, 3000 + trial, 0.1);
        BranchPairT<double> p{random_tensor<double>({3, 4, 4}, rng),
                              random_tensor<double>({3, 4, 4}, rng)};
        auto out = stack_forward(p, sp);
        if (max_abs_diff(out.cln, p.cln) > 1e-6) ++moved;
    }
    CHECK(moved == 100);
}

TEST_CASE("initialization contract") {
    auto a = init_params<float>(9, 8, 2.0f, 42);
    auto b = init_params<float>(9, 8, 2.0f, 42);
    auto c = init_params<float>(9, 8, 2.0f, 43);
    CHECK(flatten_params(a) == flatten_params(b));
    CHECK(flatten_params(a) != flatten_params(c));

    SUBCASE("fresh stack is the identity map") {
        std::mt19937_64 rng(7);
        BranchPairT<float> p{random_tensor<float>({9, 16, 16}, rng),
                             random_tensor<float>({9, 16, 16}, rng)};
        auto out = stack_forward(p, a);
        CHECK(max_abs_diff(out.cln, p.cln) < 1e-6);
        CHECK(max_abs_diff(out.tgt, p.tgt) < 1e-6);
    }
    SUBCASE("invalid sizes are rejected") {
        CHECK_THROWS_AS(init_params<float>(0, 8, 2.0f, 1), std::invalid_argument);
        CHECK_THROWS_AS(init_params<float>(9, 0, 2.0f, 1), std::invalid_argument);
        CHECK_THROWS_AS(init_params<float>(9, 8, -1.0f, 1), std::invalid_argument);
    }
}

TEST_CASE("channel mismatch is a shape error") {
    auto sp = init_params<double>(9, 2, 2.0, 1);
    BranchPairT<double> p{TensorT<double>({6, 4, 4}), TensorT<double>({6, 4, 4})};
    CHECK_THROWS_AS(stack_forward(p, sp), std::invalid_argument);
    CHECK_THROWS_AS(stack_inverse(p, sp), std::invalid_argument);
}

TEST_CASE("analytic stack gradients match central finite differences") {
    std::mt19937_64 rng(8);
    auto sp = init_params<double>(3, 2, 2.0, 55, 8);
    randomize_params(sp, 56, 0.05);
    BranchPairT<double> p{random_tensor<double>({3, 4, 4}, rng), random_tensor<double>({3, 4, 4}, rng)};

    // scalar probe: fixed random linear functional of both outputs
    TensorT<double> c_cln = random_tensor<double>({3, 4, 4}, rng, 1.0);
    TensorT<double> c_tgt = random_tensor<double>({3, 4, 4}, rng, 1.0);
    auto loss_at = [&](const CouplingStackParamsT<double>& params) {
        auto out = stack_forward(p, params);
        double l = 0;
        for (std::size_t i = 0; i < out.cln.numel(); ++i)
            l += c_cln.v[i] * out.cln.v[i] + c_tgt.v[i] * out.tgt.v[i];
        return l;
    };

    StackCacheT<double> cache;
    stack_forward(p, sp, &cache);
    std::vector<double> grads(sp.param_count(), 0.0);
    stack_backward(sp, cache, c_cln, c_tgt, grads);

    std::vector<double> theta = flatten_params(sp);
    const double h = 1e-4;
    for (int probe = 0; probe < 10; ++probe) {
        const std::size_t i = rng() % theta.size();
        auto sp2 = sp;
        std::vector<double> tp = theta;
        tp[i] = theta[i] + h;
        unflatten_params(sp2, tp);
        const double lp = loss_at(sp2);
        tp[i] = theta[i] - h;
        unflatten_params(sp2, tp);
        const double lm = loss_at(sp2);
        const double fd = (lp - lm) / (2 * h);
        const double rel = std::abs(fd - grads[i]) / std::max({std::abs(fd), std::abs(grads[i]), 1e-6});
        CHECK(rel < 1e-3);
    }
}

TEST_CASE("checkpoint round trip preserves parameters and manifest") {
    auto sp = init_params<float>(9, 4, 1.5f, 99, 8);
    randomize_params(sp, 98);
    const std::string path = "coupling_ckpt_test.bin";
    save_coupling_checkpoint(sp, path);
    auto back = load_coupling_checkpoint<float>(path);
    CHECK(back.channels == sp.channels);
    CHECK(back.num_blocks == sp.num_blocks);
    CHECK(back.growth == sp.growth);
    CHECK(back.beta_scale == sp.beta_scale);
    CHECK(back.log_scale_offset == sp.log_scale_offset);
    CHECK(back.seed == sp.seed);
    CHECK(flatten_params(back) == flatten_params(sp));
    std::remove(path.c_str());
}
