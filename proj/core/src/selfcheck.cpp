#include "crd/selfcheck.hpp"

#include <random>

#include "crd/models.hpp"
#include "crd/ops.hpp"
#include "crd/perceptual.hpp"
#include "crd/relation.hpp"
#include "crd/trainer.hpp"

namespace crd {

namespace {

Tensor random_image(std::size_t c, std::size_t s, std::mt19937_64& rng, bool requires_grad) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(c * s * s);
    for (auto& x : v) x = u(rng);
    return Tensor::from({c, s, s}, std::move(v), requires_grad);
}

}  // namespace

std::vector<GradientCheckCase> run_gradient_suite(const GradientSuiteOptions& o) {
    std::mt19937_64 rng(o.seed);
    const Tensor teacher = random_image(1, o.size, rng, false);
    const Tensor student = random_image(1, o.size, rng, true);
    const PatchDims patch{o.patch, o.patch};

    RelationConfig rel;
    rel.triplet_budget = o.budget;
    rel.seed = o.seed;

    std::vector<GradientCheckCase> cases;
    auto image_case = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& f) {
        cases.push_back({name, check_gradient(f, student, o.check)});
    };

    image_case("crd_distance", [&](const Tensor& s) { return crd_distance_loss(teacher, s, patch, rel); });
    image_case("crd_angle", [&](const Tensor& s) { return crd_angle_loss(teacher, s, patch, rel); });
    image_case("crd_loss", [&](const Tensor& s) { return crd_loss(teacher, s, patch, rel); });

    const FeatureExtractor extractor = FeatureExtractor::random(1, o.seed + 1, {4, 8});
    image_case("perceptual", [&](const Tensor& s) { return perceptual_loss(teacher, s, extractor); });

    DiscriminatorSpec dspec;
    dspec.in_channels = 1;
    dspec.num_layers = 2;
    dspec.base_width = 4;
    const Discriminator disc(dspec, o.seed + 2);
    for (auto mode : {GanMode::least_squares, GanMode::vanilla}) {
        image_case(std::string("adversarial_g_") + std::string(to_string(mode)),
                   [&](const Tensor& s) { return generator_loss(disc(s, ParamUse::frozen), mode); });
        std::vector<std::pair<std::string, Tensor>> leaves;
        for (const auto& p : disc.parameters().entries()) leaves.emplace_back(p.name, p.tensor);
        cases.push_back({std::string("adversarial_d_") + std::string(to_string(mode)),
                         check_gradients([&] { return discriminator_loss(disc(teacher), disc(detach(student)), mode); },
                                         leaves, o.check)});
    }

    TrainConfig cfg;
    cfg.relation = rel;
    cfg.patch = patch;
    cfg.gan_mode = GanMode::least_squares;
    image_case("composite", [&](const Tensor& s) { return student_objective(teacher, s, disc, extractor, cfg, 0).total; });

    GeneratorSpec gspec;
    gspec.in_channels = 1;
    gspec.out_channels = 1;
    gspec.base_width = 8;
    gspec.width_factor = 0.25;
    gspec.num_res_blocks = 1;
    const Generator gen(gspec, o.seed + 3);
    const Tensor input = random_image(1, o.size, rng, false);
    std::vector<std::pair<std::string, Tensor>> leaves;
    for (const auto& p : gen.parameters().entries()) leaves.emplace_back(p.name, p.tensor);
    GradCheckOptions popts = o.check;
    popts.max_coordinates = o.max_param_coordinates;
    cases.push_back({"composite_student_params",
                     check_gradients([&] { return student_objective(teacher, gen(input), disc, extractor, cfg, 0).total; },
                                     leaves, popts)});
    return cases;
}

}  // namespace crd
