#include "idprior/training/trainer.hpp"

#include "idprior/core/errors.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace idprior::training {

using nlohmann::json;

std::string_view to_string(Scope s) {
    switch (s) {
        case Scope::adapter_only: return "adapter_only";
        case Scope::theta_prior_only: return "theta_prior_only";
        case Scope::custom: return "custom";
        case Scope::full: return "full";
    }
    return "custom";
}

Scope parse_scope(std::string_view s) {
    if (s == "adapter_only") return Scope::adapter_only;
    if (s == "theta_prior_only") return Scope::theta_prior_only;
    if (s == "custom") return Scope::custom;
    if (s == "full") return Scope::full;
    throw ConfigError("unknown trainable scope '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !(pretrain_lr > 0.0) || !(stage1_lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("lambdas must be non-negative");
    if (batch_size < 1 || stage1_batch < 1 || pretrain_batch < 1) throw ConfigError("batch sizes must be >= 1");
    if (epochs_stage2 < 0 || stage1_steps < 0 || pretrain_steps < 0) throw ConfigError("step counts must be >= 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || eps <= 0.0 || weight_decay < 0.0)
        throw ConfigError("invalid optimizer hyperparameters");
    if (ratio_appearance < 0 || ratio_behavior < 0 || ratio_forgery < 0 ||
        ratio_appearance + ratio_behavior + ratio_forgery == 0)
        throw ConfigError("task ratios must be non-negative and not all zero");
    if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
}

void to_json(json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.learning_rate},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"eps", c.eps},
         {"weight_decay", c.weight_decay},
         {"epochs_stage2", c.epochs_stage2},
         {"batch_size", c.batch_size},
         {"lambda1", c.lambda1},
         {"lambda2", c.lambda2},
         {"seed", c.seed},
         {"trainable_scope", to_string(c.trainable_scope)},
         {"stage1_steps", c.stage1_steps},
         {"stage1_batch", c.stage1_batch},
         {"stage1_lr", c.stage1_lr},
         {"pretrain_steps", c.pretrain_steps},
         {"pretrain_batch", c.pretrain_batch},
         {"pretrain_lr", c.pretrain_lr},
         {"max_new_tokens", c.max_new_tokens},
         {"ratio_appearance", c.ratio_appearance},
         {"ratio_behavior", c.ratio_behavior},
         {"ratio_forgery", c.ratio_forgery}};
}

void from_json(const json& j, TrainConfig& c) {
    TrainConfig d;
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.beta1 = j.value("beta1", d.beta1);
    c.beta2 = j.value("beta2", d.beta2);
    c.eps = j.value("eps", d.eps);
    c.weight_decay = j.value("weight_decay", d.weight_decay);
    c.epochs_stage2 = j.value("epochs_stage2", d.epochs_stage2);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.lambda1 = j.value("lambda1", d.lambda1);
    c.lambda2 = j.value("lambda2", d.lambda2);
    c.seed = j.value("seed", d.seed);
    c.trainable_scope = parse_scope(j.value("trainable_scope", std::string(to_string(d.trainable_scope))));
    c.stage1_steps = j.value("stage1_steps", d.stage1_steps);
    c.stage1_batch = j.value("stage1_batch", d.stage1_batch);
    c.stage1_lr = j.value("stage1_lr", d.stage1_lr);
    c.pretrain_steps = j.value("pretrain_steps", d.pretrain_steps);
    c.pretrain_batch = j.value("pretrain_batch", d.pretrain_batch);
    c.pretrain_lr = j.value("pretrain_lr", d.pretrain_lr);
    c.max_new_tokens = j.value("max_new_tokens", d.max_new_tokens);
    c.ratio_appearance = j.value("ratio_appearance", d.ratio_appearance);
    c.ratio_behavior = j.value("ratio_behavior", d.ratio_behavior);
    c.ratio_forgery = j.value("ratio_forgery", d.ratio_forgery);
}

void apply_scope(Detector& d, Scope scope, const identity::IdentityProfile* profile,
                 const std::vector<std::string>& custom) {
    d.set_all_trainable(scope == Scope::full);
    switch (scope) {
        case Scope::full: break;
        case Scope::adapter_only:
            if (!d.adapter) throw TrainingError("adapter_only scope on a detector without adapter");
            d.adapter->parameters().set_trainable(true);
            break;
        case Scope::theta_prior_only:
            if (!profile) throw TrainingError("theta_prior_only scope needs an identity profile");
            for (Parameter* p : identity::collect_theta_prior(d.model, *profile).params) p->trainable = true;
            break;
        case Scope::custom:
            for (const auto& name : custom) {
                bool found = false;
                for (Parameter* p : d.all_parameters())
                    if (p->name == name) p->trainable = found = true;
                if (!found) throw ConfigError("custom scope names unknown parameter '" + name + "'");
            }
            break;
    }
}

AdamW::AdamW(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps, double weight_decay)
    : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {
    for (Parameter* p : params_) {
        m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
        p->zero_grad();
    }
}

void AdamW::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

void AdamW::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        if (!p.trainable) continue;
        m_[i] = b1_ * m_[i] + (1.0 - b1_) * p.grad;
        v_[i] = b2_ * v_[i] + (1.0 - b2_) * p.grad.cwiseProduct(p.grad);
        p.value *= 1.0 - lr_ * wd_;
        p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
}

json StepRecord::to_json() const {
    return {{"step", step},
            {"stage", stage},
            {"task_mix", task_mix},
            {"loss", loss},
            {"loss_adapter", terms.adapter},
            {"loss_appearance", terms.appearance},
            {"loss_behavior", terms.behavior},
            {"lambda1", lambda1},
            {"lambda2", lambda2},
            {"wall_time", wall_time}};
}

std::vector<double> TrainingLog::loss_trace() const {
    std::vector<double> out;
    for (const auto& s : steps) out.push_back(s.loss);
    return out;
}

std::string TrainingLog::serialize() const {
    std::string out;
    for (const auto& s : steps) out += s.to_json().dump() + "\n";
    return out;
}

void TrainingLog::append_to(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot write training log '" + path.string() + "'");
    out << serialize();
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void dump_batch(const TaskBatch& batch, const TrainConfig& cfg, const std::string& stage, int step) {
    json j = {{"stage", stage}, {"step", step}, {"samples", json::array()}};
    for (const auto& s : batch.samples)
        j["samples"].push_back({{"sample_id", s.sample_id},
                                {"identity_id", s.identity_id},
                                {"kind", to_string(s.kind)},
                                {"prompt", s.prompt},
                                {"response", s.response},
                                {"label", s.label}});
    const auto dir = cfg.diagnostics_dir.empty() ? std::filesystem::temp_directory_path() : cfg.diagnostics_dir;
    std::filesystem::create_directories(dir);
    const auto path = dir / ("nonfinite_" + stage + "_step" + std::to_string(step) + ".json");
    std::ofstream(path) << j.dump(2) << "\n";
    throw TrainingError("non-finite loss at " + stage + " step " + std::to_string(step) + "; batch written to " +
                        path.string());
}

std::vector<Parameter*> trainable(Detector& d) {
    std::vector<Parameter*> out;
    for (Parameter* p : d.all_parameters())
        if (p->trainable) out.push_back(p);
    return out;
}

double batch_loss(Detector& d, const TaskBatch& b, const TrainConfig& cfg, bool token_mean = false) {
    ag::Tape t;
    if (token_mean) return build_token_mean_loss(t, d, b).terms.adapter;
    return build_loss(t, d, b, cfg.lambda1, cfg.lambda2).terms.total(cfg.lambda1, cfg.lambda2);
}

}  // namespace

StepRecord train_step(Detector& d, AdamW& opt, const TaskBatch& batch, const TrainConfig& cfg,
                      const std::string& stage, int step) {
    if (batch.empty()) throw DegenerateBatchError("empty training batch");
    opt.zero_grad();
    StepRecord rec;
    {
        ag::Tape t;
        LossGraph g = stage == "pretrain" ? build_token_mean_loss(t, d, batch)
                                          : build_loss(t, d, batch, cfg.lambda1, cfg.lambda2);
        rec.terms = g.terms;
        rec.loss = g.terms.total(cfg.lambda1, cfg.lambda2);
        if (!std::isfinite(rec.loss)) dump_batch(batch, cfg, stage, step);
        if (g.total.needs_grad()) t.backward(g.total);
    }
    opt.step();
    rec.step = step;
    rec.stage = stage;
    rec.task_mix = batch.mix();
    rec.lambda1 = cfg.lambda1;
    rec.lambda2 = cfg.lambda2;
    return rec;
}

StageResult pretrain_backbone(Detector& d, const TrainConfig& cfg) {
    cfg.validate();
    const auto start = Clock::now();
    StageResult res;
    Rng probe_rng = make_rng(derive_seed(cfg.seed, stable_hash("pretrain-probe")));
    TaskBatch probe;
    for (int i = 0; i < 32; ++i) probe.samples.push_back(pretraining_sample(d.model.vocabulary(), probe_rng));

    apply_scope(d, Scope::full);
    // Adapter rows stay out of pretraining.
    if (d.adapter) d.adapter->parameters().set_trainable(false);
    res.probe_before = batch_loss(d, probe, cfg, true);
    AdamW opt(trainable(d), cfg.pretrain_lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    Rng rng = make_rng(derive_seed(cfg.seed, stable_hash("pretrain")));
    // Captions first, so the projector learns to read attributes before
    // the comparison tasks are mixed in.
    const int warmup = cfg.pretrain_steps / 10;
    for (int step = 0; step < cfg.pretrain_steps; ++step) {
        TaskBatch batch;
        for (int i = 0; i < cfg.pretrain_batch; ++i)
            batch.samples.push_back(pretraining_sample(d.model.vocabulary(), rng, step < warmup));
        StepRecord rec = train_step(d, opt, batch, cfg, "pretrain", step);
        rec.wall_time = seconds_since(start);
        res.log.steps.push_back(std::move(rec));
    }
    res.probe_after = batch_loss(d, probe, cfg, true);
    d.set_all_trainable(false);
    return res;
}

StageResult train_stage1(Detector& d, const std::vector<TaskSample>& corpus, const TrainConfig& cfg,
                         const adapter::AdapterConfig& adapter_cfg) {
    cfg.validate();
    if (corpus.empty()) throw DegenerateBatchError("stage 1 needs a non-empty corpus");
    for (const auto& s : corpus)
        if (s.kind != TaskKind::adapter_yes_no) throw BatchError("stage 1 trains adapter_yes_no tasks only");
    const auto start = Clock::now();
    if (!d.adapter) {
        Rng init = make_rng(derive_seed(cfg.seed, stable_hash("adapter-init")));
        d.adapter.emplace(adapter_cfg, d.model.config(), init);
    }
    StageResult res;
    TaskBatch probe;
    for (std::size_t i = 0; i < std::min<std::size_t>(16, corpus.size()); ++i) probe.samples.push_back(corpus[i]);
    apply_scope(d, Scope::adapter_only);
    res.probe_before = batch_loss(d, probe, cfg);
    AdamW opt(trainable(d), cfg.stage1_lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    Rng rng = make_rng(derive_seed(cfg.seed, stable_hash("stage1")));
    std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
    for (int step = 0; step < cfg.stage1_steps; ++step) {
        TaskBatch batch;
        for (int i = 0; i < cfg.stage1_batch; ++i) batch.samples.push_back(corpus[pick(rng)]);
        StepRecord rec = train_step(d, opt, batch, cfg, "stage1", step);
        rec.wall_time = seconds_since(start);
        res.log.steps.push_back(std::move(rec));
    }
    res.probe_after = batch_loss(d, probe, cfg);
    d.set_all_trainable(false);
    return res;
}

StageResult train_stage2(Detector& d, const std::string& identity_id, const std::vector<TaskSample>& tasks,
                         const TrainConfig& cfg) {
    cfg.validate();
    const auto& profile = d.registry.profile(identity_id);
    if (tasks.empty()) throw DegenerateBatchError("stage 2 needs at least one task for '" + identity_id + "'");
    for (const auto& s : tasks)
        if (s.identity_id != identity_id) throw BatchError("stage-2 task '" + s.sample_id + "' is for another identity");
    const auto start = Clock::now();
    StageResult res;
    TaskBatch probe;
    for (std::size_t i = 0; i < std::min<std::size_t>(24, tasks.size()); ++i) probe.samples.push_back(tasks[i]);
    apply_scope(d, Scope::theta_prior_only, &profile);
    res.probe_before = batch_loss(d, probe, cfg);
    AdamW opt(trainable(d), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    Rng rng = make_rng(derive_seed(cfg.seed, stable_hash("stage2:" + identity_id)));
    std::vector<std::size_t> order(tasks.size());
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
            TaskBatch batch;
            for (std::size_t k = at; k < std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size)); ++k)
                batch.samples.push_back(tasks[order[k]]);
            StepRecord rec = train_step(d, opt, batch, cfg, "stage2", step++);
            rec.wall_time = seconds_since(start);
            res.log.steps.push_back(std::move(rec));
        }
    }
    res.probe_after = batch_loss(d, probe, cfg);
    d.set_all_trainable(false);
    return res;
}

std::vector<double> finite_difference_gradient(const std::function<double()>& loss, Parameter& p,
                                               std::span<const Eigen::Index> coords, double step) {
    std::vector<double> out;
    for (Eigen::Index k : coords) {
        if (k < 0 || k >= p.value.size()) throw OracleError("coordinate out of range for '" + p.name + "'");
        double& v = p.value.data()[k];
        const double keep = v;
        v = keep + step;
        const double up = loss();
        v = keep - step;
        const double down = loss();
        v = keep;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw OracleError("non-finite loss while perturbing '" + p.name + "'[" + std::to_string(k) + "]");
        out.push_back((up - down) / (2.0 * step));
    }
    return out;
}

OracleResult compare_with_oracle(const std::function<double()>& loss, Parameter& p,
                                 std::span<const Eigen::Index> coords, double step, double tolerance) {
    const auto numeric = finite_difference_gradient(loss, p, coords, step);
    OracleResult r;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double a = p.grad.data()[coords[i]];
        const double n = numeric[i];
        const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
        ++r.checked;
        if (err <= tolerance) ++r.within;
        r.worst = std::max(r.worst, err);
    }
    return r;
}

}  // namespace idprior::training
