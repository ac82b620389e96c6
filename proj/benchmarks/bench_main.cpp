#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "crd/config.hpp"
#include "crd/dataset.hpp"
#include "crd/models.hpp"
#include "crd/ops.hpp"
#include "crd/perceptual.hpp"
#include "crd/relation.hpp"
#include "crd/trainer.hpp"
#include "crd/tuples.hpp"

using namespace crd;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Args: channels in/out, spatial size, kernel, stride.
void BM_Conv2dForwardBackward(benchmark::State& state) {
    const auto in = static_cast<std::size_t>(state.range(0)), out = static_cast<std::size_t>(state.range(1));
    const auto size = static_cast<std::size_t>(state.range(2)), k = static_cast<std::size_t>(state.range(3));
    const auto stride = static_cast<std::size_t>(state.range(4));
    const Tensor x = random_tensor({1, in, size, size}, 1, true);
    const Tensor w = random_tensor({out, in, k, k}, 2, true);
    for (auto _ : state) {
        const Tensor y = conv2d(x, w, stride, k / 2);
        backward(sum(y));
        benchmark::DoNotOptimize(w.grad().data());
    }
}
BENCHMARK(BM_Conv2dForwardBackward)
    ->Args({3, 32, 32, 7, 1})
    ->Args({32, 64, 32, 3, 2})
    ->Args({128, 128, 8, 3, 1})
    ->Args({8, 3, 32, 7, 1})
    ->Unit(benchmark::kMicrosecond);

void BM_SampleTriples(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0)), budget = static_cast<std::size_t>(state.range(1));
    std::uint64_t seed = 0;
    std::size_t produced = 0;
    for (auto _ : state) {
        const TupleSet t = sample_tuples(n, 3, budget, seed++);
        produced += t.size();
        benchmark::DoNotOptimize(t.flat.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(produced));
}
BENCHMARK(BM_SampleTriples)->Args({32, 0})->Args({32, 1024})->Args({256, 4096})->Unit(benchmark::kMicrosecond);

// Args: image size, triplet budget (0 enumerates everything).
void BM_CrdLossForwardBackward(benchmark::State& state) {
    const auto size = static_cast<std::size_t>(state.range(0));
    RelationConfig cfg;
    cfg.triplet_budget = static_cast<std::size_t>(state.range(1));
    const Tensor t = random_tensor({3, size, size}, 3);
    const Tensor s = random_tensor({3, size, size}, 4, true);
    for (auto _ : state) {
        const Tensor loss = crd_loss(t, s, {8, 8}, cfg);
        backward(loss);
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_CrdLossForwardBackward)->Args({32, 0})->Args({32, 1024})->Args({64, 1024})->Unit(benchmark::kMillisecond);

void BM_PerceptualLoss(benchmark::State& state) {
    const FeatureExtractor ex = FeatureExtractor::random(3, 5);
    const Tensor t = random_tensor({3, 32, 32}, 6);
    const Tensor s = random_tensor({3, 32, 32}, 7, true);
    for (auto _ : state) {
        const Tensor loss = perceptual_loss(t, s, ex);
        backward(loss);
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_PerceptualLoss)->Unit(benchmark::kMillisecond);

// One full online step (teacher pair update, then student update) at desk scale.
void BM_TrainingStep(benchmark::State& state) {
    TrainConfig cfg;
    cfg.train_count = 4;
    cfg.val_count = 1;
    cfg.lambda_crd = 0.025;
    const Dataset data = generate_dataset(cfg.synthetic_task());
    TeacherState teacher(cfg);
    StudentState student(cfg);
    const FeatureExtractor ex = perceptual_extractor(cfg);
    Batch batch;
    batch.input = stack_images(data.train_inputs, std::vector<std::size_t>{0});
    batch.target = stack_images(data.train_targets, std::vector<std::size_t>{0});
    std::uint64_t step = 0;
    for (auto _ : state) {
        train_step_teacher(teacher, batch, cfg, 2e-4);
        const StudentLosses l = train_step_student(teacher, student, batch, ex, cfg, 2e-4, step++);
        benchmark::DoNotOptimize(l.total);
    }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
