#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <vector>

#include "crd/gradcheck.hpp"
#include "crd/models.hpp"
#include "crd/ops.hpp"
#include "crd/optim.hpp"

using namespace crd;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

void zero_last_layer(Discriminator& d) {
    const std::string last = "layer" + std::to_string(d.spec().num_layers - 1);
    for (auto& e : d.parameters().entries())
        if (e.name.rfind(last, 0) == 0)
            for (auto& v : e.tensor.mutable_data()) v = 0.0;
}

bool same_values(const ParameterStore& a, const ParameterStore& b) {
    if (a.entries().size() != b.entries().size()) return false;
    for (std::size_t i = 0; i < a.entries().size(); ++i) {
        const auto x = a.entries()[i].tensor.data(), y = b.entries()[i].tensor.data();
        if (a.entries()[i].name != b.entries()[i].name || x.size() != y.size()) return false;
        for (std::size_t k = 0; k < x.size(); ++k)
            if (x[k] != y[k]) return false;
    }
    return true;
}

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

}  // namespace

TEST_CASE("gan mode names") {
    CHECK(to_string(GanMode::vanilla) == "vanilla");
    CHECK(parse_gan_mode("least_squares") == GanMode::least_squares);
    CHECK_THROWS_AS(parse_gan_mode("wgan"), std::invalid_argument);
}

TEST_CASE("generator preserves shape and bounds") {
    const Generator g(GeneratorSpec{}, 1);
    for (const Shape& s : {Shape{3, 16, 16}, Shape{2, 3, 8, 12}}) {
        const Tensor y = g(random_tensor(s, 2));
        CHECK(y.shape() == s);
        for (double v : y.data()) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
    const Tensor big = g(Tensor::full({3, 8, 8}, 1e6));
    for (double v : big.data()) CHECK(std::isfinite(v));
    CHECK_THROWS_AS(g(random_tensor({3, 10, 10}, 3)), std::invalid_argument);
    CHECK_THROWS_AS(g(random_tensor({1, 8, 8}, 3)), std::invalid_argument);
}

TEST_CASE("generator widths and parameter counts") {
    GeneratorSpec teacher;
    CHECK(teacher.widths() == std::array<std::size_t, 3>{32, 64, 128});
    GeneratorSpec student = teacher;
    student.width_factor = 0.25;
    CHECK(student.widths() == std::array<std::size_t, 3>{8, 16, 32});

    const Generator gt(teacher, 1), gs(student, 1);
    CHECK(gt.parameter_count() == generator_parameter_count(teacher));
    CHECK(gs.parameter_count() == generator_parameter_count(student));

    // Independent count: conv k*k*in*out + out biases, layer by layer.
    auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k + out; };
    const std::size_t manual = conv(3, 32, 7) + conv(32, 64, 3) + conv(64, 128, 3) + 6 * conv(128, 128, 3) +
                               conv(128, 64, 3) + conv(64, 32, 3) + conv(32, 3, 7);
    CHECK(gt.parameter_count() == manual);

    const double ratio = static_cast<double>(gs.parameter_count()) / static_cast<double>(gt.parameter_count());
    CHECK(std::abs(ratio - 1.0 / 16.0) <= 0.1 / 16.0);

    GeneratorSpec tiny;
    tiny.base_width = 1;
    tiny.width_factor = 0.25;
    CHECK_THROWS_AS(tiny.widths(), std::invalid_argument);
    CHECK_THROWS_AS(Generator(tiny, 0), std::invalid_argument);
}

TEST_CASE("generator initialisation is seeded") {
    const Generator a(GeneratorSpec{}, 5), b(GeneratorSpec{}, 5), c(GeneratorSpec{}, 6);
    CHECK(same_values(a.parameters(), b.parameters()));
    CHECK(!same_values(a.parameters(), c.parameters()));
    const Generator copy = a.clone();
    CHECK(same_values(a.parameters(), copy.parameters()));
    CHECK(copy.parameters().entries()[0].tensor.data().data() != a.parameters().entries()[0].tensor.data().data());
}

TEST_CASE("discriminator output shape") {
    const Discriminator d(DiscriminatorSpec{}, 1);
    CHECK(d(random_tensor({3, 32, 32}, 1)).shape() == Shape{1, 4, 4});
    CHECK(d(random_tensor({2, 3, 32, 32}, 1)).shape() == Shape{2, 1, 4, 4});
    for (double v : d(Tensor::full({3, 32, 32}, 0.3)).data()) CHECK(std::isfinite(v));
    CHECK(same_values(d.parameters(), Discriminator(DiscriminatorSpec{}, 1).parameters()));
    CHECK_THROWS_AS(d(random_tensor({3, 2, 2}, 1)), std::invalid_argument);
    CHECK_THROWS_AS(Discriminator(DiscriminatorSpec{0, 32, 3}, 1), std::invalid_argument);
}

TEST_CASE("analytic adversarial values") {
    Discriminator d(DiscriminatorSpec{}, 2);
    zero_last_layer(d);
    const Generator g(GeneratorSpec{}, 3);
    const Tensor real = random_tensor({3, 32, 32}, 4), input = random_tensor({3, 32, 32}, 5);
    const auto v = adversarial_losses(d, g, real, input, GanMode::vanilla);
    CHECK(v.d_loss.item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(v.g_loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const auto ls = adversarial_losses(d, g, real, input, GanMode::least_squares);
    CHECK(ls.d_loss.item() == doctest::Approx(1.0));
    CHECK(ls.g_loss.item() == doctest::Approx(1.0));

    CHECK(discriminator_loss(Tensor::full({1, 4, 4}, 1.0), Tensor::zeros({1, 4, 4}), GanMode::least_squares).item() == 0.0);
    CHECK(generator_loss(Tensor::full({1, 4, 4}, 1.0), GanMode::least_squares).item() == 0.0);
}

TEST_CASE("adversarial losses vs per-element oracle") {
    DiscriminatorSpec ds;
    ds.in_channels = 1;
    ds.num_layers = 2;
    ds.base_width = 4;
    GeneratorSpec gs;
    gs.in_channels = gs.out_channels = 1;
    gs.base_width = 4;
    gs.num_res_blocks = 1;
    const Discriminator d(ds, 7);
    const Generator g(gs, 8);
    const Tensor real = random_tensor({1, 8, 8}, 9), input = random_tensor({1, 8, 8}, 10);
    const Tensor rs = d(real), fs = d(g(input));
    const std::size_t n = rs.numel();
    for (GanMode mode : {GanMode::vanilla, GanMode::least_squares}) {
        double dl = 0.0, fl = 0.0, gl = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = rs.data()[i], f = fs.data()[i];
            if (mode == GanMode::vanilla) {
                dl -= log_sigmoid(r);
                fl -= log_sigmoid(-f);
                gl -= log_sigmoid(f);
            } else {
                dl += (r - 1) * (r - 1);
                fl += f * f;
                gl += (f - 1) * (f - 1);
            }
        }
        const auto losses = adversarial_losses(d, g, real, input, mode);
        CHECK(std::abs(losses.d_loss.item() - (dl + fl) / static_cast<double>(n)) <= 1e-8);
        CHECK(std::abs(losses.g_loss.item() - gl / static_cast<double>(n)) <= 1e-8);
    }
}

TEST_CASE("adversarial gradients route to the right network") {
    const Discriminator d(DiscriminatorSpec{}, 11);
    Generator g(GeneratorSpec{8, 1.0, 1, 3, 3}, 12);
    const Tensor real = random_tensor({3, 16, 16}, 13), input = random_tensor({3, 16, 16}, 14);
    const auto l = adversarial_losses(d, g, real, input, GanMode::least_squares);
    backward(l.g_loss);
    for (const auto& e : d.parameters().entries()) CHECK(!e.tensor.has_grad());
    bool any = false;
    for (const auto& e : g.parameters().entries()) any = any || e.tensor.has_grad();
    CHECK(any);
    g.parameters().clear_grad();
    backward(l.d_loss);
    for (const auto& e : g.parameters().entries()) CHECK(!e.tensor.has_grad());
    for (const auto& e : d.parameters().entries()) CHECK(e.tensor.has_grad());
}

TEST_CASE("adversarial gradients match finite differences") {
    // Default init (std 0.02) makes input gradients comparable to difference
    // roundoff, so widen the weights to keep the comparison well conditioned.
    Discriminator d(DiscriminatorSpec{2, 4, 1}, 15);
    for (auto& e : d.parameters().entries())
        for (auto& v : e.tensor.mutable_data()) v *= 25.0;
    const Tensor real = random_tensor({1, 8, 8}, 16);
    for (GanMode mode : {GanMode::vanilla, GanMode::least_squares}) {
        const auto rg = check_gradient([&](const Tensor& x) { return generator_loss(d(x, ParamUse::frozen), mode); },
                                       random_tensor({1, 8, 8}, 17, true));
        CHECK(rg.passed(1e-4));
        const auto rd = check_gradient([&](const Tensor& x) { return discriminator_loss(d(real), d(x), mode); },
                                       random_tensor({1, 8, 8}, 18, true));
        CHECK(rd.passed(1e-4));
    }
}

TEST_CASE("checkpoint round trip") {
    const Generator g(GeneratorSpec{8, 1.0, 1, 3, 3}, 20);
    const Discriminator d(DiscriminatorSpec{2, 8, 3}, 21);
    const auto dir = std::filesystem::temp_directory_path() / "crd_test_ckpt";
    std::filesystem::remove_all(dir);
    write_checkpoint(dir, {{"gen", &g.parameters()}, {"disc", &d.parameters()}});
    CHECK(std::filesystem::exists(dir / "manifest.csv"));

    Generator g2(GeneratorSpec{8, 1.0, 1, 3, 3}, 99);
    read_checkpoint(dir, "gen", g2.parameters());
    for (std::size_t i = 0; i < g.parameters().entries().size(); ++i) {
        const auto a = g.parameters().entries()[i].tensor.data(), b = g2.parameters().entries()[i].tensor.data();
        for (std::size_t k = 0; k < a.size(); ++k) CHECK(b[k] == static_cast<double>(static_cast<float>(a[k])));
    }
    Discriminator d2(DiscriminatorSpec{2, 8, 3}, 98);
    read_checkpoint(dir, "disc", d2.parameters());
    Discriminator wrong(DiscriminatorSpec{3, 8, 3}, 98);
    CHECK_THROWS(read_checkpoint(dir, "disc", wrong.parameters()));
    CHECK_THROWS(read_checkpoint(dir, "missing", d2.parameters()));
    std::filesystem::remove_all(dir);
}

TEST_CASE("parameters stay finite over 100 adversarial steps") {
    Generator g(GeneratorSpec{8, 1.0, 1, 3, 3}, 30);
    Discriminator d(DiscriminatorSpec{2, 8, 3}, 31);
    Adam og(g.parameters().tensors()), od(d.parameters().tensors());
    for (std::uint64_t step = 0; step < 100; ++step) {
        const Tensor real = random_tensor({3, 8, 8}, 1000 + step), input = random_tensor({3, 8, 8}, 2000 + step);
        const auto l = adversarial_losses(d, g, real, input, GanMode::vanilla);
        backward(l.d_loss);
        od.step(2e-4);
        backward(l.g_loss);
        og.step(2e-4);
        REQUIRE(std::isfinite(l.d_loss.item()));
    }
    for (const auto* store : {&g.parameters(), &d.parameters()})
        for (const auto& e : store->entries())
            for (double v : e.tensor.data()) REQUIRE(std::isfinite(v));
}
