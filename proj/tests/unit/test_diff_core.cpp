#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "crd/gradcheck.hpp"
#include "crd/ops.hpp"
#include "crd/tensor.hpp"
#include "crd/tensor_io.hpp"

using namespace crd;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Straightforward six-deep loop convolution.
std::vector<double> conv_oracle(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = k.dim(0), KH = k.dim(2), KW = k.dim(3);
    const std::size_t OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
    std::vector<double> out(B * O * OH * OW, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t oy = 0; oy < OH; ++oy)
                for (std::size_t ox = 0; ox < OW; ++ox) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ky = 0; ky < KH; ++ky)
                            for (std::size_t kx = 0; kx < KW; ++kx) {
                                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                                s += x.data()[((b * C + c) * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)] *
                                     k.data()[((o * C + c) * KH + ky) * KW + kx];
                            }
                    out[((b * O + o) * OH + oy) * OW + ox] = s;
                }
    return out;
}

}  // namespace

TEST_CASE("elementwise arithmetic") {
    const Tensor a = Tensor::from({2}, {1, 2});
    const Tensor b = Tensor::from({2}, {3, 4});
    const Tensor s = add(a, b);
    CHECK(s.data()[0] == 4);
    CHECK(s.data()[1] == 6);

    const Tensor x = random_tensor({3, 2}, 1, true);
    const Tensor zero = mul(x, Tensor::scalar(0.0));
    for (double v : zero.data()) CHECK(v == 0.0);
    backward(sum(zero));
    for (double g : x.grad()) CHECK(g == 0.0);

    const Tensor diff = sub(x, x);
    for (double v : diff.data()) CHECK(v == 0.0);
}

TEST_CASE("elementwise shape mismatch names both shapes") {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({3, 2});
    try {
        (void)add(a, b);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[3,2]") != std::string::npos);
    }
}

TEST_CASE("conv2d small cases") {
    const Tensor ones = Tensor::full({1, 1, 3, 3}, 1.0);
    const Tensor out = conv2d(ones, Tensor::full({1, 1, 3, 3}, 1.0), 1, 0);
    REQUIRE(out.shape() == Shape{1, 1, 1, 1});
    CHECK(out.item() == 9.0);

    const Tensor x = random_tensor({2, 3, 5, 5}, 2);
    std::vector<double> eye(9, 0.0);
    eye[0] = eye[4] = eye[8] = 1.0;
    const Tensor id = conv2d(x, Tensor::from({3, 3, 1, 1}, eye), 1, 0);
    REQUIRE(id.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(id.data()[i] == x.data()[i]);

    CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 3, 3, 3}), 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 3, 9, 9}), 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 2, 3, 3}), 1, 1), std::invalid_argument);
}

TEST_CASE("conv2d matches the loop oracle") {
    struct Case {
        Shape x, k;
        std::size_t stride, pad;
    };
    // Cover both the GEMM path (many output channels) and the direct path.
    const std::vector<Case> cases{{{1, 2, 4, 4}, {3, 2, 3, 3}, 1, 1}, {{1, 2, 4, 4}, {6, 2, 3, 3}, 2, 1},
                                  {{2, 3, 7, 6}, {2, 3, 7, 7}, 1, 3}, {{1, 2, 8, 8}, {1, 2, 4, 4}, 2, 1},
                                  {{1, 4, 5, 5}, {8, 4, 2, 3}, 1, 0}, {{2, 2, 6, 6}, {4, 2, 3, 3}, 1, 2}};
    std::uint64_t seed = 10;
    for (const auto& c : cases) {
        const Tensor x = random_tensor(c.x, seed++);
        const Tensor k = random_tensor(c.k, seed++);
        const Tensor out = conv2d(x, k, c.stride, c.pad);
        const auto expect = conv_oracle(x, k, c.stride, c.pad);
        REQUIRE(out.numel() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i) CHECK(out.data()[i] == doctest::Approx(expect[i]).epsilon(1e-10));
    }
}

TEST_CASE("conv2d gradients, GEMM and direct paths") {
    for (std::size_t out_ch : {3u, 6u}) {
        for (std::size_t stride : {1u, 2u}) {
            const Tensor x = random_tensor({2, 2, 5, 5}, 20 + out_ch, true);
            const Tensor k = random_tensor({out_ch, 2, 3, 3}, 30 + out_ch, true);
            const Tensor bias = random_tensor({out_ch}, 40 + out_ch, true);
            const Tensor w = random_tensor({2, out_ch, (5 + 2 - 3) / stride + 1, (5 + 2 - 3) / stride + 1}, 50);
            auto loss = [&] { return sum(conv2d(x, k, bias, stride, 1) * w); };
            const auto r = check_gradients(loss, {{"x", x}, {"k", k}, {"b", bias}});
            CHECK(r.passed(1e-6));
        }
    }
}

TEST_CASE("layer ops gradients") {
    const Tensor x = random_tensor({2, 3, 4, 4}, 60, true);
    const Tensor w = random_tensor({2, 3, 8, 8}, 61);
    CHECK(check_gradient([&](const Tensor& t) { return sum(upsample_nearest(t) * w); }, x).passed(1e-6));
    const Tensor w2 = random_tensor({2, 3, 4, 4}, 62);
    CHECK(check_gradient([&](const Tensor& t) { return sum(instance_norm(t) * w2); }, x).passed(1e-5));
    CHECK(check_gradient([&](const Tensor& t) { return sum(square(gram(t))); }, x).passed(1e-6));
    CHECK(check_gradient([&](const Tensor& t) { return sum(global_avg_pool(t) * Tensor::full({2, 3}, 0.7)); }, x).passed(1e-6));
    CHECK(check_gradient([&](const Tensor& t) { return sum(tanh(t) * w2 + softplus(t) + leaky_relu(t) * 0.3); }, x).passed(1e-5));
}

TEST_CASE("instance norm normalizes each plane") {
    const Tensor y = instance_norm(random_tensor({2, 3, 4, 4}, 63, false, 2.0, 5.0));
    for (std::size_t p = 0; p < 6; ++p) {
        double m = 0, v = 0;
        for (std::size_t i = 0; i < 16; ++i) m += y.data()[p * 16 + i];
        m /= 16;
        for (std::size_t i = 0; i < 16; ++i) v += (y.data()[p * 16 + i] - m) * (y.data()[p * 16 + i] - m);
        CHECK(std::abs(m) < 1e-12);
        CHECK(v / 16 == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("reductions") {
    CHECK(sum(Tensor::from({3}, {1, 2, 3})).item() == 6.0);
    CHECK(mean(Tensor::full({4, 5}, 2.5)).item() == 2.5);

    const Tensor r = random_tensor({2, 3}, 70);
    double s = 0.0;
    for (double v : r.data()) s += v;
    CHECK(sum(r).item() == doctest::Approx(s).epsilon(1e-14));

    const Tensor rows = sum(r, {1});
    REQUIRE(rows.shape() == Shape{2});
    CHECK(rows.data()[0] == doctest::Approx(r.data()[0] + r.data()[1] + r.data()[2]));
    const Tensor cols = mean(r, {0});
    REQUIRE(cols.shape() == Shape{3});
    CHECK(cols.data()[1] == doctest::Approx((r.data()[1] + r.data()[4]) / 2));
    CHECK_THROWS_AS(sum(r, {}), std::invalid_argument);
    CHECK_THROWS_AS(sum(r, {2}), std::invalid_argument);

    const Tensor x = random_tensor({2, 3, 4}, 71, true);
    const Tensor w = random_tensor({3}, 72);
    CHECK(check_gradient([&](const Tensor& t) { return sum(square(mean(t, {0, 2})) * w); }, x).passed(1e-6));
}

TEST_CASE("l2_norm") {
    CHECK(l2_norm(Tensor::from({2}, {3, 4})).item() == doctest::Approx(5.0));

    const Tensor z = Tensor::zeros({4}, true);
    const Tensor n = l2_norm(z);
    CHECK(n.item() == 0.0);
    backward(n);
    for (double g : z.grad()) CHECK(g == 0.0);

    const Tensor r = random_tensor({8}, 80);
    double ss = 0.0;
    for (double v : r.data()) ss += v * v;
    CHECK(std::abs(l2_norm(r).item() - std::sqrt(ss)) <= 1e-12);

    const Tensor v = random_tensor({8}, 81, true);
    CHECK(check_gradient([](const Tensor& t) { return l2_norm(t); }, v).passed(1e-6));
}

TEST_CASE("detach blocks gradient flow") {
    const Tensor x = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
    backward(sum(detach(x) * x));
    for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == x.data()[i]);

    const Tensor y = Tensor::from({3}, {1.0, 2.0, 3.0}, true);
    const Tensor d = detach(y);
    CHECK_FALSE(d.requires_grad());
    for (std::size_t i = 0; i < 3; ++i) CHECK(d.data()[i] == y.data()[i]);
    Tensor leaf = d.clone();
    leaf.set_requires_grad(true);
    backward(sum(leaf));
    CHECK_FALSE(y.has_grad());
}

TEST_CASE("backward") {
    const Tensor x = Tensor::scalar(3.0, true);
    backward(x * x);
    CHECK(x.grad()[0] == 6.0);

    const Tensor v = random_tensor({2, 3}, 90, true);
    backward(sum(v));
    for (double g : v.grad()) CHECK(g == 1.0);

    CHECK_THROWS_AS(backward(v * 2.0), std::invalid_argument);

    // A diamond: each node must be replayed once, after all its consumers.
    const Tensor a = Tensor::from({2}, {0.3, -0.7}, true);
    const Tensor b = tanh(a);
    const Tensor c = b * b + b * 3.0;
    const auto stats = backward(sum(c));
    for (std::size_t i = 0; i < 2; ++i) {
        const double t = std::tanh(a.data()[i]);
        CHECK(a.grad()[i] == doctest::Approx((2 * t + 3) * (1 - t * t)).epsilon(1e-12));
    }
    CHECK(stats.operations_replayed == 5);

    const Tensor p = random_tensor({3, 4}, 91, true);
    const Tensor q = random_tensor({3, 4}, 92, true);
    auto composite = [&] { return mean(square(tanh(p * q) - softplus(q))) + sum(abs(p - 0.1)) * 0.2; };
    CHECK(check_gradients(composite, {{"p", p}, {"q", q}}).passed(1e-5));
}

TEST_CASE("finite_diff_grad") {
    const Tensor x = Tensor::from({2}, {1.0, 2.0});
    const Tensor g = finite_diff_grad(
        [](const Tensor& t) {
            double s = 0;
            for (double v : t.data()) s += v * v;
            return s;
        },
        x, 1e-6);
    CHECK(std::abs(g.data()[0] - 2.0) < 1e-6);
    CHECK(std::abs(g.data()[1] - 4.0) < 1e-6);

    const Tensor zero = finite_diff_grad([](const Tensor&) { return 4.2; }, x, 1e-6);
    for (double v : zero.data()) CHECK(v == 0.0);
    CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return 0.0; }, x, 0.0), std::invalid_argument);
}

TEST_CASE("gradcheck skips kinks and reports the worst coordinate") {
    const Tensor x = Tensor::from({3}, {0.0, 0.5, -0.25}, true);
    const auto r = check_gradient([](const Tensor& t) { return sum(abs(t)); }, x);
    CHECK(r.skipped_kinks == 1);
    CHECK(r.passed(1e-8));

    // A deliberately wrong backward is caught.
    const Tensor y = Tensor::from({2}, {0.4, 0.9}, true);
    auto wrong = [&] {
        return make_result({}, {y.data()[0] * y.data()[1]}, {y},
                           [](detail::Node& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               p.grad[0] += self.grad[0];
                               p.grad[1] += self.grad[0];
                           },
                           "wrong_product");
    };
    const auto bad = check_gradients(wrong, {{"y", y}});
    CHECK_FALSE(bad.passed(1e-4));
    CHECK(bad.worst_tensor == "y");
}

TEST_CASE("forward results are deterministic") {
    const Tensor x = random_tensor({1, 3, 8, 8}, 100);
    const Tensor k = random_tensor({5, 3, 3, 3}, 101);
    const Tensor a = instance_norm(conv2d(x, k, 1, 1));
    const Tensor b = instance_norm(conv2d(x, k, 1, 1));
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("tensor file round trip") {
    const Tensor t = random_tensor({2, 3, 4}, 110);
    std::stringstream ss;
    write_tensor(ss, t);
    const Tensor back = read_tensor(ss);
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(back.data()[i] == static_cast<double>(static_cast<float>(t.data()[i])));

    const std::vector<std::uint8_t> bytes = encode_tensor(back);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "CRDT");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 3);  // rank, little-endian u32
    CHECK(bytes.size() == 4 + 1 + 4 + 3 * 4 + 24 * 4);

    const auto path = std::filesystem::temp_directory_path() / "crd_test_tensor.crdt";
    save_tensor(path, back);
    CHECK(encode_tensor(load_tensor(path)) == bytes);
    std::filesystem::remove(path);

    std::stringstream junk("NOPE");
    CHECK_THROWS(read_tensor(junk));
}
