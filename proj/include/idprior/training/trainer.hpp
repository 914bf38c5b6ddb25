#pragma once

#include "idprior/training/detector.hpp"
#include "idprior/training/losses.hpp"
#include "idprior/training/tasks.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace idprior::training {

enum class Scope { adapter_only, theta_prior_only, custom, full };

std::string_view to_string(Scope s);
Scope parse_scope(std::string_view s);

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    int epochs_stage2 = 1;
    int batch_size = 2;  // stage 2
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    std::uint64_t seed = 0;
    Scope trainable_scope = Scope::theta_prior_only;

    int stage1_steps = 200;
    int stage1_batch = 8;
    double stage1_lr = 1e-3;

    int pretrain_steps = 3000;
    int pretrain_batch = 8;
    double pretrain_lr = 1e-3;

    int max_new_tokens = 40;

    // Stage-2 task ratio appearance:behavior:forgery_cot.
    int ratio_appearance = 1;
    int ratio_behavior = 1;
    int ratio_forgery = 1;

    // Where a batch with a non-finite loss is written before aborting.
    std::filesystem::path diagnostics_dir;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Marks exactly the in-scope parameters trainable. theta_prior_only needs a
// profile; custom takes parameter names.
void apply_scope(Detector& d, Scope scope, const identity::IdentityProfile* profile = nullptr,
                 const std::vector<std::string>& custom = {});

// Adaptive moments with decoupled weight decay over a fixed parameter list.
class AdamW {
public:
    AdamW(std::vector<Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
          double weight_decay = 0.01);

    void zero_grad();
    void step();
    int steps() const { return t_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Mat> m_, v_;
    double lr_, b1_, b2_, eps_, wd_;
    int t_ = 0;
};

struct StepRecord {
    int step = 0;
    std::string stage;
    std::map<std::string, int> task_mix;
    double loss = 0.0;
    LossTerms terms;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double wall_time = 0.0;

    nlohmann::json to_json() const;
};

struct TrainingLog {
    std::vector<StepRecord> steps;

    std::vector<double> loss_trace() const;
    std::string serialize() const;
    void append_to(const std::filesystem::path& path) const;
};

struct StageResult {
    TrainingLog log;
    double probe_before = 0.0;
    double probe_after = 0.0;
};

// One optimizer step on `batch` over the currently trainable parameters.
StepRecord train_step(Detector& d, AdamW& opt, const TaskBatch& batch, const TrainConfig& cfg,
                      const std::string& stage, int step);

// Pretraining surrogate: every backbone parameter trainable, fresh
// procedurally rendered samples each step.
StageResult pretrain_backbone(Detector& d, const TrainConfig& cfg);

// Adapter-only training on identity-free Yes/No artifact questions. Adds a
// zero-initialized adapter when the detector has none.
StageResult train_stage1(Detector& d, const std::vector<TaskSample>& corpus, const TrainConfig& cfg,
                         const adapter::AdapterConfig& adapter_cfg = {});

// theta_prior-only training of one registered identity for epochs_stage2
// epochs of ceil(tasks / batch_size) steps each.
StageResult train_stage2(Detector& d, const std::string& identity_id, const std::vector<TaskSample>& tasks,
                         const TrainConfig& cfg);

// Central differences of `loss` at the given flat coordinates of `p`.
std::vector<double> finite_difference_gradient(const std::function<double()>& loss, Parameter& p,
                                               std::span<const Eigen::Index> coords, double step = 1e-4);

struct OracleResult {
    int checked = 0;
    int within = 0;
    double worst = 0.0;

    double fraction() const { return checked ? static_cast<double>(within) / checked : 0.0; }
};

// Compares p.grad (already accumulated) with central differences.
OracleResult compare_with_oracle(const std::function<double()>& loss, Parameter& p,
                                 std::span<const Eigen::Index> coords, double step = 1e-4, double tolerance = 1e-3);

}  // namespace idprior::training
