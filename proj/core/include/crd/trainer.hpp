#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

#include "crd/config.hpp"
#include "crd/dataset.hpp"
#include "crd/models.hpp"
#include "crd/optim.hpp"
#include "crd/perceptual.hpp"
#include "crd/tensor.hpp"

namespace crd {

/// Learning rate at a (possibly fractional) epoch position in [0, epochs].
/// Reaches exactly 0 at position == epochs.
double lr_at_position(double position, const TrainConfig& cfg);
/// Learning rate for a whole epoch; throws std::out_of_range outside [0, epochs).
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct TeacherState {
    Generator generator;
    Discriminator discriminator;
    Generator best_snapshot;
    double best_score = std::numeric_limits<double>::infinity();
    Adam generator_opt;
    Adam discriminator_opt;

    explicit TeacherState(const TrainConfig& cfg);
    /// Generator used as the distillation target.
    const Generator& distillation_source(const TrainConfig& cfg) const;
};

struct StudentState {
    Generator generator;
    Adam opt;

    explicit StudentState(const TrainConfig& cfg);
};

/// One minibatch: inputs [B,c,h,w] and real output-domain samples [B,c,h,w]
/// (aligned with the inputs for paired tasks).
struct Batch {
    Tensor input;
    Tensor target;
    bool paired = true;
};

struct TeacherLosses {
    double d_loss = 0.0;
    double g_loss = 0.0;
};

struct StudentLosses {
    double adv = 0.0;
    double crd_d = 0.0;
    double crd_a = 0.0;
    double per = 0.0;
    double total = 0.0;
};

/// Student objective for one batch. Also returns the graph so callers can
/// differentiate it.
struct StudentObjective {
    Tensor total;
    StudentLosses values;
};

/// Builds adv + lambda_crd * (crd_d + lambda_a * crd_a) + lambda_per * per
/// for the student output. The teacher path and discriminator parameters
/// never receive gradients.
StudentObjective student_objective(const Tensor& teacher_out, const Tensor& student_out, const Discriminator& d,
                                   const FeatureExtractor& extractor, const TrainConfig& cfg, std::uint64_t step);

/// Discriminator update followed by a generator update. With update_discriminator
/// false only the generator moves.
TeacherLosses train_step_teacher(TeacherState& state, const Batch& batch, const TrainConfig& cfg, double lr,
                                 bool update_discriminator = true);

/// Updates the student generator only, except in the *_updating / always-updating
/// discriminator modes where the teacher discriminator also takes a step on
/// the student's fakes.
StudentLosses train_step_student(TeacherState& state, StudentState& student, const Batch& batch,
                                 const FeatureExtractor& extractor, const TrainConfig& cfg, double lr, std::uint64_t step);

/// Scores stacked generator outputs on the validation inputs; lower is better.
using ValidationMetric = std::function<double(const Tensor& outputs)>;

/// Acts when step % teacher_eval_interval == 0: evaluates the live teacher
/// and replaces the snapshot on strict improvement.
bool maybe_update_snapshot(TeacherState& state, const std::vector<Tensor>& val_inputs, const ValidationMetric& metric,
                           std::size_t step, const TrainConfig& cfg);

/// Runs gen over images in chunks without recording a graph.
Tensor generate(const Generator& gen, const std::vector<Tensor>& inputs);

/// L2 to aligned targets for paired data, desk Frechet distance otherwise.
ValidationMetric make_validation_metric(const Dataset& data, const FeatureExtractor& metric_extractor);

/// Fixed feature networks derived from cfg.seed.
FeatureExtractor perceptual_extractor(const TrainConfig& cfg);
FeatureExtractor metric_extractor(const TrainConfig& cfg);

struct TrainReport {
    std::size_t steps = 0;
    std::size_t snapshot_replacements = 0;
    double best_teacher_score = std::numeric_limits<double>::infinity();
    double final_student_metric = 0.0;
    double final_teacher_metric = 0.0;
};

/// Full loop. Writes config.cfg, metrics.csv, checkpoints/ and samples/ under
/// out_dir. Progress lines go to log when non-null.
TrainReport train(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& out_dir,
                  std::ostream* log = nullptr);

/// Header of metrics.csv.
const char* metrics_header();

}  // namespace crd
