#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <vector>

#include "crd/gradcheck.hpp"
#include "crd/ops.hpp"
#include "crd/perceptual.hpp"

using namespace crd;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Activation in [C][H][W] nested form.
struct Act {
    std::size_t c = 0, h = 0, w = 0;
    std::vector<double> v;
    double at(std::size_t ch, std::size_t y, std::size_t x) const { return v[(ch * h + y) * w + x]; }
};

Act act_of(const Tensor& t) { return {t.dim(0), t.dim(1), t.dim(2), std::vector<double>(t.data().begin(), t.data().end())}; }

Act loop_layer(const Act& in, const FeatureExtractor::Layer& l) {
    const std::size_t oc = l.weight.dim(0), k = l.weight.dim(2);
    Act out;
    out.c = oc;
    out.h = (in.h + 2 * l.padding - k) / l.stride + 1;
    out.w = (in.w + 2 * l.padding - k) / l.stride + 1;
    out.v.assign(out.c * out.h * out.w, 0.0);
    const auto wt = l.weight.data();
    for (std::size_t o = 0; o < oc; ++o)
        for (std::size_t y = 0; y < out.h; ++y)
            for (std::size_t x = 0; x < out.w; ++x) {
                double s = l.bias ? l.bias->data()[o] : 0.0;
                for (std::size_t i = 0; i < in.c; ++i)
                    for (std::size_t ky = 0; ky < k; ++ky)
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const long iy = static_cast<long>(y * l.stride + ky) - static_cast<long>(l.padding);
                            const long ix = static_cast<long>(x * l.stride + kx) - static_cast<long>(l.padding);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.h) || ix >= static_cast<long>(in.w)) continue;
                            s += wt[((o * in.c + i) * k + ky) * k + kx] * in.at(i, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                        }
                out.v[(o * out.h + y) * out.w + x] = s > 0 ? s : 0.2 * s;
            }
    return out;
}

std::vector<Act> loop_extract(const Tensor& x, const FeatureExtractor& e) {
    std::vector<Act> acts;
    Act cur = act_of(x);
    for (const auto& l : e.layers()) {
        cur = loop_layer(cur, l);
        acts.push_back(cur);
    }
    return acts;
}

std::vector<double> loop_gram(const Act& a) {
    std::vector<double> g(a.c * a.c, 0.0);
    for (std::size_t i = 0; i < a.c; ++i)
        for (std::size_t j = 0; j < a.c; ++j) {
            double s = 0.0;
            for (std::size_t y = 0; y < a.h; ++y)
                for (std::size_t x = 0; x < a.w; ++x) s += a.at(i, y, x) * a.at(j, y, x);
            g[i * a.c + j] = s / static_cast<double>(a.c * a.h * a.w);
        }
    return g;
}

double loop_perceptual(const Tensor& t, const Tensor& s, const FeatureExtractor& e, const std::vector<std::size_t>& taps) {
    const auto ta = loop_extract(t, e), sa = loop_extract(s, e);
    double total = 0.0;
    for (auto j : taps) {
        double l1 = 0.0;
        for (std::size_t i = 0; i < ta[j].v.size(); ++i) l1 += std::abs(ta[j].v[i] - sa[j].v[i]);
        total += l1 / static_cast<double>(ta[j].v.size());
        const auto gt = loop_gram(ta[j]), gs = loop_gram(sa[j]);
        for (std::size_t i = 0; i < gt.size(); ++i) total += std::abs(gt[i] - gs[i]);
    }
    return total;
}

}  // namespace

TEST_CASE("gram examples") {
    const Tensor ones = Tensor::full({1, 2, 2}, 1.0);
    const Tensor g1 = gram(ones);
    REQUIRE(g1.shape() == Shape{1, 1});
    CHECK(g1.item() == doctest::Approx(1.0));

    const Tensor twin = Tensor::from({2, 1, 3}, {0.5, -1.0, 2.0, 0.5, -1.0, 2.0});
    const Tensor g2 = gram(twin);
    for (std::size_t i = 0; i < 4; ++i) CHECK(g2.data()[i] == doctest::Approx(g2.data()[0]).epsilon(1e-15));

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Tensor a = random_tensor({3, 2, 2}, seed);
        const Tensor g = gram(a);
        const auto oracle = loop_gram(act_of(a));
        for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(g.data()[i] - oracle[i]) <= 1e-10);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(g.data()[i * 3 + i] >= -1e-12);
            for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(g.data()[i * 3 + j] - g.data()[j * 3 + i]) <= 1e-12);
        }
    }
    CHECK_THROWS_AS(gram(Tensor::zeros({3, 3})), std::invalid_argument);
}

TEST_CASE("batched gram matches per-image gram") {
    const Tensor a = random_tensor({2, 3, 4, 5}, 20);
    const Tensor g = gram(a);
    REQUIRE(g.shape() == Shape{2, 3, 3});
    for (std::size_t b = 0; b < 2; ++b) {
        const Tensor gb = gram(select(a, b));
        for (std::size_t i = 0; i < 9; ++i) CHECK(g.data()[b * 9 + i] == doctest::Approx(gb.data()[i]).epsilon(1e-14));
    }
}

TEST_CASE("extractor shapes and determinism") {
    const FeatureExtractor e = FeatureExtractor::random(3, 7);
    CHECK(e.layer_count() == 4);
    CHECK(e.in_channels() == 3);
    const Tensor x = random_tensor({3, 32, 32}, 1);
    const auto acts = e.extract(x);
    const auto shapes = e.tap_shapes(3, 32, 32);
    const std::vector<Shape> expect{{16, 16, 16}, {32, 8, 8}, {64, 4, 4}, {64, 2, 2}};
    CHECK(shapes == expect);
    REQUIRE(acts.size() == 4);
    for (std::size_t j = 0; j < 4; ++j) CHECK(acts[j].shape() == expect[j]);

    const auto again = FeatureExtractor::random(3, 7).extract(x);
    for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t i = 0; i < acts[j].numel(); ++i) CHECK(acts[j].data()[i] == again[j].data()[i]);

    const auto batched = e.extract(Tensor::from({1, 3, 32, 32}, std::vector<double>(x.data().begin(), x.data().end())));
    CHECK(batched[0].shape() == Shape{1, 16, 16, 16});

    CHECK_THROWS_AS(e.extract(random_tensor({1, 32, 32}, 2)), std::invalid_argument);

    FeatureExtractor::Layer unpadded{"valid", random_tensor({2, 3, 3, 3}, 4), std::nullopt, 1, 0};
    const FeatureExtractor tight({unpadded});
    CHECK(tight.tap_shapes(3, 3, 3) == std::vector<Shape>{{2, 1, 1}});
    CHECK_THROWS_AS(tight.tap_shapes(3, 2, 2), std::invalid_argument);
    CHECK_THROWS(tight.extract(random_tensor({3, 2, 2}, 5)));
}

TEST_CASE("zero input gives zero first activation") {
    const FeatureExtractor e = FeatureExtractor::random(3, 8);
    const auto acts = e.extract(Tensor::zeros({3, 16, 16}));
    for (double v : acts[0].data()) CHECK(v == 0.0);
}

TEST_CASE("extraction matches a loop oracle") {
    for (bool with_bias : {false, true}) {
        const FeatureExtractor e = FeatureExtractor::random(2, 9, {4, 6, 5}, with_bias);
        const Tensor x = random_tensor({2, 12, 10}, 3);
        const auto acts = e.extract(x);
        const auto oracle = loop_extract(x, e);
        for (std::size_t j = 0; j < acts.size(); ++j)
            for (std::size_t i = 0; i < acts[j].numel(); ++i) CHECK(std::abs(acts[j].data()[i] - oracle[j].v[i]) <= 1e-10);
    }
}

TEST_CASE("perceptual loss vs term-by-term oracle") {
    const FeatureExtractor e = FeatureExtractor::random(3, 11, {8, 8, 8});
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const Tensor t = random_tensor({3, 16, 16}, 30 + seed), s = random_tensor({3, 16, 16}, 40 + seed);
        CHECK(std::abs(perceptual_loss(t, s, e).item() - loop_perceptual(t, s, e, {0, 1, 2})) <= 1e-8);
        CHECK(std::abs(perceptual_loss(t, s, e, {1}).item() - loop_perceptual(t, s, e, {1})) <= 1e-8);
        CHECK(perceptual_loss(t, t, e).item() == 0.0);
        CHECK(perceptual_loss(t, s, e).item() >= 0.0);
    }
    const Tensor t = random_tensor({3, 16, 16}, 1);
    CHECK_THROWS_AS(perceptual_loss(t, random_tensor({3, 16, 8}, 2), e), std::invalid_argument);
    CHECK_THROWS_AS(perceptual_loss(t, t, e, {7}), std::out_of_range);
}

TEST_CASE("perceptual loss grows with a single-pixel perturbation") {
    const FeatureExtractor e = FeatureExtractor::random(1, 12, {4});
    const Tensor t = random_tensor({1, 8, 8}, 50);
    double prev = 0.0;
    for (double delta : {0.01, 0.1, 0.5, 1.0, 3.0}) {
        std::vector<double> v(t.data().begin(), t.data().end());
        v[27] += delta;
        const double loss = perceptual_loss(t, Tensor::from({1, 8, 8}, v), e, {0}).item();
        CHECK(loss > prev);
        prev = loss;
    }
}

TEST_CASE("perceptual loss gradient flows to the student only") {
    const FeatureExtractor e = FeatureExtractor::random(1, 13, {4, 8});
    const Tensor t = random_tensor({1, 8, 8}, 60, true);
    const Tensor s = random_tensor({1, 8, 8}, 61, true);
    backward(perceptual_loss(t, s, e));
    CHECK(!t.has_grad());
    CHECK(s.has_grad());
    for (const auto& l : e.layers()) CHECK(!l.weight.has_grad());

    const auto r = check_gradient([&](const Tensor& x) { return perceptual_loss(t, x, e); }, random_tensor({1, 8, 8}, 62, true));
    CHECK(r.passed(1e-4));
}

TEST_CASE("batched perceptual loss averages per image") {
    const FeatureExtractor e = FeatureExtractor::random(1, 14, {4, 4});
    const Tensor t0 = random_tensor({1, 8, 8}, 70), t1 = random_tensor({1, 8, 8}, 71);
    const Tensor s0 = random_tensor({1, 8, 8}, 72), s1 = random_tensor({1, 8, 8}, 73);
    auto stack = [](const Tensor& a, const Tensor& b) {
        std::vector<double> v(a.data().begin(), a.data().end());
        v.insert(v.end(), b.data().begin(), b.data().end());
        return Tensor::from({2, 1, 8, 8}, v);
    };
    const double batched = perceptual_loss(stack(t0, t1), stack(s0, s1), e).item();
    const double separate = 0.5 * (perceptual_loss(t0, s0, e).item() + perceptual_loss(t1, s1, e).item());
    CHECK(batched == doctest::Approx(separate).epsilon(1e-12));
}

TEST_CASE("extractor save and load round trip") {
    const FeatureExtractor e = FeatureExtractor::random(3, 15, {4, 6}, true);
    const auto dir = std::filesystem::temp_directory_path() / "crd_test_extractor";
    std::filesystem::remove_all(dir);
    e.save(dir);
    const FeatureExtractor back = FeatureExtractor::load(dir);
    REQUIRE(back.layer_count() == 2);
    const Tensor x = random_tensor({3, 8, 8}, 80);
    const auto a = e.extract(x), b = back.extract(x);
    // Weights are stored in single precision.
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < a[j].numel(); ++i) CHECK(a[j].data()[i] == doctest::Approx(b[j].data()[i]).epsilon(1e-5));
    std::filesystem::remove_all(dir);
    CHECK_THROWS(FeatureExtractor::load(dir));
}
