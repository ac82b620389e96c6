#include "crd/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "crd/image_io.hpp"
#include "crd/metrics.hpp"
#include "crd/ops.hpp"
#include "crd/relation.hpp"

namespace crd {

namespace {

enum SeedStream : std::uint64_t {
    teacher_g_stream = 1,
    teacher_d_stream = 2,
    student_stream = 3,
    perceptual_stream = 4,
    metric_stream = 5,
    relation_stream = 6,
    shuffle_stream = 7,
    pairing_stream = 8,
};

Adam::Options adam_options(const TrainConfig& cfg) {
    Adam::Options o;
    o.beta1 = cfg.adam_beta1;
    o.beta2 = cfg.adam_beta2;
    return o;
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite ") + what + " encountered; aborting");
}

std::string real_str(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

bool is_pretrained(DiscriminatorMode m) {
    return m == DiscriminatorMode::pretrained_frozen || m == DiscriminatorMode::pretrained_updating;
}

bool student_updates_discriminator(DiscriminatorMode m) {
    return m == DiscriminatorMode::online_always_updating || m == DiscriminatorMode::pretrained_updating;
}

}  // namespace

double lr_at_position(double position, const TrainConfig& cfg) {
    const double epochs = static_cast<double>(cfg.epochs);
    if (!(position >= 0.0 && position <= epochs)) {
        throw std::out_of_range("lr position " + real_str(position) + " outside [0, " + std::to_string(cfg.epochs) + "]");
    }
    if (cfg.lr_schedule == LrSchedule::linear) return cfg.lr0 * (epochs - position) / epochs;
    const double half = epochs / 2.0;
    if (position < half) return cfg.lr0;
    return cfg.lr0 * (epochs - position) / (epochs - half);
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch >= cfg.epochs) {
        throw std::out_of_range("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
    }
    return lr_at_position(static_cast<double>(epoch), cfg);
}

TeacherState::TeacherState(const TrainConfig& cfg)
    : generator(cfg.teacher_spec(), derive_seed(cfg.seed, teacher_g_stream)),
      discriminator(cfg.discriminator_spec(), derive_seed(cfg.seed, teacher_d_stream)),
      best_snapshot(generator.clone()),
      generator_opt(generator.parameters().tensors(), adam_options(cfg)),
      discriminator_opt(discriminator.parameters().tensors(), adam_options(cfg)) {}

const Generator& TeacherState::distillation_source(const TrainConfig& cfg) const {
    return cfg.distill_from_live ? generator : best_snapshot;
}

StudentState::StudentState(const TrainConfig& cfg)
    : generator(cfg.student_spec(), derive_seed(cfg.seed, student_stream)),
      opt(generator.parameters().tensors(), adam_options(cfg)) {}

StudentObjective student_objective(const Tensor& teacher_out, const Tensor& student_out, const Discriminator& d,
                                   const FeatureExtractor& extractor, const TrainConfig& cfg, std::uint64_t step) {
    StudentObjective obj;
    const Tensor target = detach(teacher_out);
    Tensor total;
    auto accumulate = [&total](const Tensor& term) { total = total.defined() ? total + term : term; };

    if (cfg.discriminator_mode != DiscriminatorMode::online_no_discriminator) {
        Tensor adv = generator_loss(d(student_out, ParamUse::frozen), cfg.gan_mode);
        obj.values.adv = adv.item();
        accumulate(adv);
    }
    if (cfg.lambda_crd > 0.0) {
        RelationConfig rel = cfg.relation;
        rel.seed = derive_seed(cfg.seed ^ cfg.relation.seed, relation_stream * 0x100000000ULL + step);
        const CrdTerms terms = crd_terms(target, student_out, cfg.patch, rel);
        obj.values.crd_d = terms.distance.item();
        obj.values.crd_a = terms.angle.item();
        accumulate(terms.total * cfg.lambda_crd);
    }
    if (cfg.lambda_per > 0.0) {
        Tensor per = perceptual_loss(target, student_out, extractor);
        obj.values.per = per.item();
        accumulate(per * cfg.lambda_per);
    }
    if (!total.defined()) total = Tensor::scalar(0.0);
    obj.total = total;
    obj.values.total = total.item();
    return obj;
}

TeacherLosses train_step_teacher(TeacherState& state, const Batch& batch, const TrainConfig& cfg, double lr,
                                 bool update_discriminator) {
    TeacherLosses out;
    const Tensor fake = state.generator(batch.input);

    if (update_discriminator) {
        Tensor d_loss = discriminator_loss(state.discriminator(batch.target), state.discriminator(detach(fake)), cfg.gan_mode);
        out.d_loss = d_loss.item();
        require_finite(out.d_loss, "teacher discriminator loss");
        backward(d_loss);
        state.discriminator_opt.step(lr);
    } else {
        NoGradGuard guard;
        out.d_loss = discriminator_loss(state.discriminator(batch.target), state.discriminator(fake), cfg.gan_mode).item();
    }

    Tensor g_loss = generator_loss(state.discriminator(fake, ParamUse::frozen), cfg.gan_mode);
    if (batch.paired && cfg.recon_weight > 0.0) g_loss = g_loss + mean(abs(fake - batch.target)) * cfg.recon_weight;
    out.g_loss = g_loss.item();
    require_finite(out.g_loss, "teacher generator loss");
    backward(g_loss);
    state.generator_opt.step(lr);
    return out;
}

StudentLosses train_step_student(TeacherState& state, StudentState& student, const Batch& batch,
                                 const FeatureExtractor& extractor, const TrainConfig& cfg, double lr, std::uint64_t step) {
    Tensor teacher_out;
    {
        NoGradGuard guard;
        teacher_out = state.distillation_source(cfg)(batch.input);
    }
    const Tensor student_out = student.generator(batch.input);
    StudentObjective obj = student_objective(teacher_out, student_out, state.discriminator, extractor, cfg, step);
    require_finite(obj.values.total, "student loss");
    if (obj.total.requires_grad()) backward(obj.total);
    student.opt.step(lr);

    if (student_updates_discriminator(cfg.discriminator_mode)) {
        Tensor d_loss =
            discriminator_loss(state.discriminator(batch.target), state.discriminator(detach(student_out)), cfg.gan_mode);
        require_finite(d_loss.item(), "discriminator loss on student outputs");
        backward(d_loss);
        state.discriminator_opt.step(lr);
    }
    return obj.values;
}

bool maybe_update_snapshot(TeacherState& state, const std::vector<Tensor>& val_inputs, const ValidationMetric& metric,
                           std::size_t step, const TrainConfig& cfg) {
    if (val_inputs.empty()) throw std::invalid_argument("maybe_update_snapshot: empty validation set");
    if (step % cfg.teacher_eval_interval != 0) return false;
    const double score = metric(generate(state.generator, val_inputs));
    require_finite(score, "teacher validation metric");
    if (!(score < state.best_score)) return false;
    state.best_score = score;
    state.best_snapshot.parameters().copy_values_from(state.generator.parameters());
    return true;
}

Tensor generate(const Generator& gen, const std::vector<Tensor>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("generate: no inputs");
    NoGradGuard guard;
    constexpr std::size_t chunk = 8;
    std::vector<double> values;
    Shape shape;
    for (std::size_t start = 0; start < inputs.size(); start += chunk) {
        std::vector<std::size_t> idx(std::min(chunk, inputs.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const Tensor out = gen(stack_images(inputs, idx));
        if (shape.empty()) shape = out.shape();
        values.insert(values.end(), out.data().begin(), out.data().end());
    }
    shape[0] = inputs.size();
    return Tensor::from(shape, std::move(values));
}

ValidationMetric make_validation_metric(const Dataset& data, const FeatureExtractor& metric_extractor) {
    if (data.val_inputs.empty()) throw std::invalid_argument("validation set is empty");
    if (data.paired) {
        const Tensor targets = stack_images(data.val_targets);
        return [targets](const Tensor& outputs) { return pixel_error(outputs, targets, PixelNorm::l2); };
    }
    const GaussianStats reference = fit_gaussian(pooled_features(metric_extractor, stack_images(data.val_targets)));
    const FeatureExtractor* ex = &metric_extractor;
    return [reference, ex](const Tensor& outputs) {
        return frechet_distance(fit_gaussian(pooled_features(*ex, outputs)), reference);
    };
}

FeatureExtractor perceptual_extractor(const TrainConfig& cfg) {
    return FeatureExtractor::random(3, derive_seed(cfg.seed, perceptual_stream));
}

FeatureExtractor metric_extractor(const TrainConfig& cfg) {
    return FeatureExtractor::random(3, derive_seed(cfg.seed, metric_stream));
}

const char* metrics_header() {
    return "epoch,step,lr,d_loss_T,g_loss_T,adv_loss_S,crd_d,crd_a,per_loss,total_S,val_metric,snapshot_replaced";
}

namespace {

struct EpochSums {
    double d_loss = 0, g_loss = 0, adv = 0, crd_d = 0, crd_a = 0, per = 0, total = 0;
    std::size_t steps = 0;
};

class BatchSampler {
public:
    BatchSampler(const Dataset& data, const TrainConfig& cfg) : data_(data), cfg_(cfg) {}

    std::vector<Batch> epoch(std::size_t e) const {
        const std::size_t n = data_.train_inputs.size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(derive_seed(cfg_.seed, shuffle_stream * 0x100000000ULL + e));
        std::shuffle(order.begin(), order.end(), rng);
        std::mt19937_64 pair_rng(derive_seed(cfg_.seed, pairing_stream * 0x100000000ULL + e));
        std::uniform_int_distribution<std::size_t> pick(0, data_.train_targets.size() - 1);

        std::vector<Batch> batches;
        for (std::size_t start = 0; start < n; start += cfg_.batch_size) {
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + cfg_.batch_size)));
            Batch b;
            b.paired = data_.paired;
            b.input = stack_images(data_.train_inputs, idx);
            if (data_.paired) {
                b.target = stack_images(data_.train_targets, idx);
            } else {
                std::vector<std::size_t> tidx(idx.size());
                for (auto& t : tidx) t = pick(pair_rng);
                b.target = stack_images(data_.train_targets, tidx);
            }
            batches.push_back(std::move(b));
        }
        return batches;
    }

private:
    const Dataset& data_;
    const TrainConfig& cfg_;
};

std::vector<Tensor> unstack(const Tensor& batch, std::size_t count) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < std::min(count, batch.dim(0)); ++i) out.push_back(select(batch, i));
    return out;
}

void write_samples(const std::filesystem::path& path, const Dataset& data, const TeacherState& teacher,
                   const StudentState& student, const TrainConfig& cfg) {
    const std::size_t n = std::max<std::size_t>(1, std::min(cfg.sample_count, data.val_inputs.size()));
    const std::vector<Tensor> inputs(data.val_inputs.begin(), data.val_inputs.begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<std::vector<Tensor>> rows;
    rows.push_back(inputs);
    rows.push_back(unstack(generate(teacher.distillation_source(cfg), inputs), n));
    rows.push_back(unstack(generate(student.generator, inputs), n));
    rows.emplace_back(data.val_targets.begin(),
                      data.val_targets.begin() + static_cast<std::ptrdiff_t>(std::min(n, data.val_targets.size())));
    write_ppm(path, image_grid(rows));
}

std::string pad3(std::size_t v) {
    std::string s = std::to_string(v);
    return std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

}  // namespace

TrainReport train(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& out_dir, std::ostream* log) {
    cfg.validate();
    if (data.train_inputs.empty() || data.train_targets.empty()) throw std::invalid_argument("train: empty training set");
    if (data.val_inputs.empty()) throw std::invalid_argument("train: empty validation set");

    std::filesystem::create_directories(out_dir / "samples");
    {
        std::ofstream cfg_out(out_dir / "config.cfg");
        if (!cfg_out) throw std::runtime_error("cannot write " + (out_dir / "config.cfg").string());
        write_config(cfg_out, cfg);
    }
    std::ofstream csv(out_dir / "metrics.csv");
    if (!csv) throw std::runtime_error("cannot write " + (out_dir / "metrics.csv").string());
    csv << metrics_header() << '\n';

    const FeatureExtractor per_ex = perceptual_extractor(cfg);
    const FeatureExtractor met_ex = metric_extractor(cfg);
    const ValidationMetric metric = make_validation_metric(data, met_ex);
    const BatchSampler sampler(data, cfg);
    const std::size_t spe = cfg.steps_per_epoch();
    const double spe_d = static_cast<double>(spe);

    TeacherState teacher(cfg);
    StudentState student(cfg);
    const bool pretrained = is_pretrained(cfg.discriminator_mode);

    if (pretrained) {
        // Phase 1: converge a teacher pair, then restart the teacher generator against its discriminator.
        std::size_t step = 0;
        for (std::size_t e = 0; e < cfg.epochs; ++e) {
            for (const Batch& b : sampler.epoch(e)) {
                train_step_teacher(teacher, b, cfg, lr_at_position(static_cast<double>(step) / spe_d, cfg));
                ++step;
            }
        }
        if (log) *log << "pretrained teacher discriminator for " << step << " steps\n";
        Generator fresh(cfg.teacher_spec(), derive_seed(cfg.seed, teacher_g_stream));
        teacher.generator.parameters().copy_values_from(fresh.parameters());
        teacher.best_snapshot.parameters().copy_values_from(fresh.parameters());
        teacher.generator_opt = Adam(teacher.generator.parameters().tensors(), adam_options(cfg));
    }
    const bool teacher_updates_d = cfg.discriminator_mode != DiscriminatorMode::pretrained_frozen;

    TrainReport report;
    std::size_t step = 0;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        EpochSums sums;
        std::size_t replaced = 0;
        const double epoch_lr = lr_at_position(static_cast<double>(step) / spe_d, cfg);
        for (const Batch& b : sampler.epoch(e)) {
            const double lr = lr_at_position(static_cast<double>(step) / spe_d, cfg);
            const TeacherLosses tl = train_step_teacher(teacher, b, cfg, lr, teacher_updates_d);
            const StudentLosses sl = train_step_student(teacher, student, b, per_ex, cfg, lr, step);
            if (maybe_update_snapshot(teacher, data.val_inputs, metric, step, cfg)) ++replaced;
            sums.d_loss += tl.d_loss;
            sums.g_loss += tl.g_loss;
            sums.adv += sl.adv;
            sums.crd_d += sl.crd_d;
            sums.crd_a += sl.crd_a;
            sums.per += sl.per;
            sums.total += sl.total;
            ++sums.steps;
            ++step;
        }
        const double n = static_cast<double>(sums.steps);
        const double val = metric(generate(student.generator, data.val_inputs));
        require_finite(val, "student validation metric");
        csv << e << ',' << step << ',' << real_str(epoch_lr) << ',' << real_str(sums.d_loss / n) << ','
            << real_str(sums.g_loss / n) << ',' << real_str(sums.adv / n) << ',' << real_str(sums.crd_d / n) << ','
            << real_str(sums.crd_a / n) << ',' << real_str(sums.per / n) << ',' << real_str(sums.total / n) << ','
            << real_str(val) << ',' << replaced << '\n';
        csv.flush();
        if (!csv) throw std::runtime_error("failed writing " + (out_dir / "metrics.csv").string());
        write_samples(out_dir / "samples" / ("epoch_" + pad3(e) + ".ppm"), data, teacher, student, cfg);
        report.snapshot_replacements += replaced;
        report.final_student_metric = val;
        if (log) {
            *log << "epoch " << e << " step " << step << " total_S " << sums.total / n << " val " << val << " best_T "
                 << teacher.best_score << '\n';
        }
    }

    write_checkpoint(out_dir / "checkpoints", {{"teacher_generator", &teacher.generator.parameters()},
                                                {"teacher_discriminator", &teacher.discriminator.parameters()},
                                                {"teacher_snapshot", &teacher.best_snapshot.parameters()},
                                                {"student", &student.generator.parameters()}});
    report.steps = step;
    report.best_teacher_score = teacher.best_score;
    report.final_teacher_metric = metric(generate(teacher.generator, data.val_inputs));
    return report;
}

}  // namespace crd
