#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crd/config.hpp"
#include "crd/content.hpp"
#include "crd/dataset.hpp"
#include "crd/image_io.hpp"
#include "crd/models.hpp"
#include "crd/ops.hpp"
#include "crd/relation.hpp"
#include "crd/selfcheck.hpp"
#include "crd/tensor_io.hpp"
#include "crd/trainer.hpp"
#include "crd/tuples.hpp"

namespace fs = std::filesystem;

namespace {

struct TrainArgs {
    std::string config;
    std::string task;
    std::string out;
    std::vector<std::string> overrides;
    bool quiet = false;
};

crd::TrainConfig load_config(const std::string& path, const std::string& task, const std::vector<std::string>& overrides) {
    crd::TrainConfig cfg = path.empty() ? crd::TrainConfig{} : crd::parse_config(path);
    if (!task.empty()) crd::set_config_value(cfg, "task", task);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        crd::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

int run_train(const TrainArgs& a) {
    const crd::TrainConfig cfg = load_config(a.config, a.task, a.overrides);
    const crd::Dataset data = crd::generate_dataset(cfg.synthetic_task());
    const auto report = crd::train(cfg, data, a.out, a.quiet ? nullptr : &std::cerr);
    std::cout << "steps," << report.steps << '\n'
              << "snapshot_replacements," << report.snapshot_replacements << '\n'
              << "best_teacher_score," << report.best_teacher_score << '\n'
              << "final_teacher_metric," << report.final_teacher_metric << '\n'
              << "final_student_metric," << report.final_student_metric << '\n';
    return 0;
}

int run_eval(const std::string& run_dir) {
    const fs::path dir(run_dir);
    const crd::TrainConfig cfg = crd::parse_config(dir / "config.cfg");
    const crd::Dataset data = crd::generate_dataset(cfg.synthetic_task());
    crd::Generator teacher(cfg.teacher_spec(), 0);
    crd::Generator student(cfg.student_spec(), 0);
    crd::read_checkpoint(dir / "checkpoints", "teacher_snapshot", teacher.parameters());
    crd::read_checkpoint(dir / "checkpoints", "student", student.parameters());
    const crd::FeatureExtractor ex = crd::metric_extractor(cfg);
    const auto metric = crd::make_validation_metric(data, ex);
    const char* name = data.paired ? "l2" : "frechet";
    const double teacher_score = metric(crd::generate(teacher, data.val_inputs));
    const double student_score = metric(crd::generate(student, data.val_inputs));
    std::cout << "metric,value\n"
              << "teacher_" << name << ',' << teacher_score << '\n'
              << "student_" << name << ',' << student_score << '\n'
              << "teacher_parameters," << teacher.parameter_count() << '\n'
              << "student_parameters," << student.parameter_count() << '\n';

    // Appended row keeps the CSV schema: only step and val_metric are filled.
    std::ofstream csv(dir / "metrics.csv", std::ios::app);
    if (!csv) throw std::runtime_error("cannot append to " + (dir / "metrics.csv").string());
    csv << "eval," << cfg.total_steps() << ",,,,,,,,," << std::setprecision(17) << student_score << ",0\n";
    if (!csv) throw std::runtime_error("failed writing " + (dir / "metrics.csv").string());
    return 0;
}

struct SliceArgs {
    std::string image;
    std::size_t size = 32;
    std::uint64_t seed = 0;
    std::string granularity = "patch";
    std::size_t patch = 8;
    std::string out;
};

int run_slice(const SliceArgs& a) {
    crd::Tensor img;
    if (!a.image.empty()) {
        img = crd::read_ppm(a.image);
    } else {
        crd::SyntheticTask task;
        task.image_size = a.size;
        task.train_count = 1;
        task.val_count = 1;
        task.seed = a.seed;
        img = crd::generate_dataset(task).train_inputs.front();
    }
    const auto g = crd::parse_granularity(a.granularity);
    const crd::ContentSet set = crd::split(img, g, {a.patch, a.patch});
    const fs::path out(a.out);
    fs::create_directories(out);
    std::ofstream manifest(out / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write " + (out / "manifest.txt").string());
    for (std::size_t i = 0; i < set.count(); ++i) {
        std::ostringstream name;
        name << crd::to_string(g) << '_' << std::setw(4) << std::setfill('0') << i << ".crdt";
        crd::save_tensor(out / name.str(), crd::Tensor::from({set.length()}, set.item(i)));
        manifest << crd::to_string(g) << ',' << i << ',' << set.length() << '\n';
    }
    std::cout << set.count() << " items of length " << set.length() << " written to " << out.string() << '\n';
    return 0;
}

struct GradArgs {
    std::size_t size = 8;
    std::size_t patch = 4;
    std::uint64_t seed = 0;
    std::size_t budget = 0;
    double tolerance = 1e-4;
};

int run_gradcheck(const GradArgs& a) {
    crd::GradientSuiteOptions opts;
    opts.size = a.size;
    opts.patch = a.patch;
    opts.seed = a.seed;
    opts.budget = a.budget;
    bool ok = true;
    for (const auto& c : crd::run_gradient_suite(opts)) {
        const bool pass = c.result.passed(a.tolerance);
        ok = ok && pass;
        std::cout << (pass ? "PASS " : "FAIL ") << c.name << " max_rel_error=" << c.result.max_error
                  << " checked=" << c.result.checked << " kinks_skipped=" << c.result.skipped_kinks << '\n';
        if (!pass) {
            std::cout << "  worst " << c.result.worst_tensor << '[' << c.result.worst_index
                      << "] analytic=" << c.result.analytic_at_worst << " numeric=" << c.result.numeric_at_worst << '\n';
        }
    }
    return ok ? 0 : 1;
}

struct BenchArgs {
    std::size_t size = 32;
    std::size_t budget = 4096;
    std::size_t patch = 8;
    std::size_t repeats = 3;
    std::uint64_t seed = 0;
};

int run_bench(const BenchArgs& a) {
    using clock = std::chrono::steady_clock;
    crd::SyntheticTask task;
    task.image_size = a.size;
    task.train_count = 2;
    task.val_count = 1;
    task.seed = a.seed;
    const crd::Dataset data = crd::generate_dataset(task);
    const crd::Tensor teacher = data.train_inputs[0];
    const crd::Tensor student = crd::Tensor::from(data.train_inputs[1].shape(),
                                                  std::vector<double>(data.train_inputs[1].data().begin(),
                                                                      data.train_inputs[1].data().end()),
                                                  true);
    crd::RelationConfig rel;
    rel.triplet_budget = a.budget;
    rel.seed = a.seed;
    const crd::PatchDims patch{a.patch, a.patch};

    std::cout << "size," << a.size << "\nbudget," << a.budget << '\n';
    std::size_t tuples = 0;
    auto t0 = clock::now();
    for (std::size_t r = 0; r < a.repeats; ++r) {
        for (auto g : rel.enabled()) {
            const auto [count, len] = crd::content_layout(g, 3, a.size, a.size, patch);
            (void)len;
            tuples += crd::sample_tuples(count, 3, a.budget, a.seed + r).size();
        }
    }
    double secs = std::chrono::duration<double>(clock::now() - t0).count();
    std::cout << "tuple_enumeration_per_second," << (secs > 0 ? tuples / secs : 0.0) << '\n';

    crd::CrdTerms terms;
    t0 = clock::now();
    for (std::size_t r = 0; r < a.repeats; ++r) {
        terms = crd::crd_terms(teacher, student, patch, rel);
        crd::backward(terms.total);
    }
    secs = std::chrono::duration<double>(clock::now() - t0).count();
    std::cout << "pairs_evaluated," << terms.pairs_evaluated << '\n'
              << "triples_evaluated," << terms.triples_evaluated << '\n'
              << "loss_evaluations_per_second," << (secs > 0 ? a.repeats / secs : 0.0) << '\n'
              << "triples_per_second," << (secs > 0 ? a.repeats * terms.triples_evaluated / secs : 0.0) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Content relationship distillation for image-to-image GANs"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train a teacher and a distilled student");
    train_cmd->add_option("--config", train.config, "Config file of key = value lines")->check(CLI::ExistingFile);
    train_cmd->add_option("--task", train.task, "invert, blur2sharp or shapes");
    train_cmd->add_option("--out", train.out, "Run directory")->required();
    train_cmd->add_option("--set", train.overrides, "Override a config key (key=value), repeatable");
    train_cmd->add_flag("--quiet", train.quiet, "Suppress per-epoch progress");

    std::string eval_run;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate the checkpoints of a finished run");
    eval_cmd->add_option("--run", eval_run, "Run directory")->required()->check(CLI::ExistingDirectory);

    SliceArgs slice;
    auto* slice_cmd = app.add_subcommand("slice", "Dump the content items of an image");
    slice_cmd->add_option("--image", slice.image, "P6 image; a synthetic one is generated otherwise")->check(CLI::ExistingFile);
    slice_cmd->add_option("--size", slice.size, "Synthetic image size");
    slice_cmd->add_option("--seed", slice.seed, "Synthetic image seed");
    slice_cmd->add_option("--granularity", slice.granularity, "column, row or patch");
    slice_cmd->add_option("--patch", slice.patch, "Patch side");
    slice_cmd->add_option("--out", slice.out, "Output directory")->required();

    GradArgs grad;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
    grad_cmd->add_option("--size", grad.size, "Image side");
    grad_cmd->add_option("--patch", grad.patch, "Patch side");
    grad_cmd->add_option("--seed", grad.seed, "Random seed");
    grad_cmd->add_option("--budget", grad.budget, "Triplet budget, 0 for all");
    grad_cmd->add_option("--tolerance", grad.tolerance, "Maximum relative error");

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "Relation loss throughput");
    bench_cmd->add_option("--size", bench.size, "Image side");
    bench_cmd->add_option("--budget", bench.budget, "Triplet budget, 0 for all");
    bench_cmd->add_option("--patch", bench.patch, "Patch side");
    bench_cmd->add_option("--repeats", bench.repeats, "Timed repetitions")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--seed", bench.seed, "Random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        if (*train_cmd) return run_train(train);
        if (*eval_cmd) return run_eval(eval_run);
        if (*slice_cmd) return run_slice(slice);
        if (*grad_cmd) return run_gradcheck(grad);
        if (*bench_cmd) return run_bench(bench);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
