#pragma once

#include "idprior/training/detector.hpp"
#include "idprior/training/tasks.hpp"

namespace idprior::training {

// Routing: adapter_yes_no and forgery_cot feed the adapter (verdict) term,
// appearance and behavior their own terms. Each term is the token-level mean
// cross-entropy over its samples; absent terms are 0.
struct LossTerms {
    double adapter = 0.0;
    double appearance = 0.0;
    double behavior = 0.0;
    int adapter_tokens = 0;
    int appearance_tokens = 0;
    int behavior_tokens = 0;

    double total(double lambda1, double lambda2) const { return adapter + lambda1 * appearance + lambda2 * behavior; }
};

struct LossGraph {
    ag::Var total;  // empty when the batch has no samples
    LossTerms terms;
};

// Builds the weighted objective L_adapter + l1*L_appearance + l2*L_behavior
// on `t`. Caption samples (pretraining only) join the adapter term.
LossGraph build_loss(ag::Tape& t, Detector& d, const TaskBatch& batch, double lambda1, double lambda2);

// Plain token-level mean over every response token of the batch; the
// generic objective of the pretraining surrogate.
LossGraph build_token_mean_loss(ag::Tape& t, Detector& d, const TaskBatch& batch);

// Value-only losses. loss_adapter accepts adapter_yes_no and forgery_cot
// samples, loss_appearance/behavior their own kind whose prompts must carry
// the profile's expanded block; violations throw BatchError/TemplateError.
double loss_adapter(Detector& d, const TaskBatch& batch);
double loss_appearance(Detector& d, const TaskBatch& batch, const identity::IdentityProfile& profile);
double loss_behavior(Detector& d, const TaskBatch& batch, const identity::IdentityProfile& profile);
LossTerms loss_terms(Detector& d, const TaskBatch& batch);
double loss_total(Detector& d, const TaskBatch& batch, double lambda1, double lambda2);

}  // namespace idprior::training
