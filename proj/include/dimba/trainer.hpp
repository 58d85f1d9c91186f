#pragma once

#include <functional>
#include <optional>
#include <string>

#include "dimba/checkpoint.hpp"
#include "dimba/datagen.hpp"
#include "dimba/diffusion.hpp"
#include "dimba/text.hpp"

namespace dimba {

struct TrainConfig {
    double lr = 1e-3;  // 2e-5 matches the full-scale recipe; toy models use 1e-3
    double weight_decay = 0.0;
    int batch = 8;
    long long max_steps = 200;
    long long ckpt_interval = 100;
    int patience = 2;        // quality tuning: evals without improvement before stopping
    int new_resolution = 32; // resolution adaptation target
    double p_uncond = 0.1;
    double t_high_frac = 0.0;  // fraction of timestep draws forced into [T/2, T)
    double grad_clip = 1.0;
    std::uint64_t seed = 0;
    std::string out_dir;  // checkpoints + CSV log; empty = no files
};

// Adam with decoupled weight decay; state lives alongside the parameters.
struct AdamW {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.0;
    long long step_count = 0;
    std::vector<Tensor> m, v;

    void init(const std::vector<Var>& params);
    // Throws on a NaN gradient, naming the parameter.
    void step(std::vector<Var>& params);
};

double clip_global_norm(std::vector<Var>& params, double max_norm);

struct TrainState {
    Model model;
    AdamW opt;
    long long step = 0;
    std::string stage = "pretrain";
};

TrainState train_state_new(const ModelConfig& cfg, const TrainConfig& tc);
TrainState train_state_from_checkpoint(const Checkpoint& ckpt, const TrainConfig& tc);
Checkpoint state_to_checkpoint(const TrainState& st, double eval_score = 0.0);

// Core loop: n_steps of loss/step with per-step derived rngs, so a resumed
// run replays the exact trajectory of an uninterrupted one.
// Returns the last loss. Appends "step,loss,lr,wall_ms" rows to the log.
double train_steps(TrainState& st, const Corpus& corpus, const TextEncoder& enc,
                   const TrainConfig& tc, long long n_steps, std::ostream* log = nullptr);

Checkpoint pretrain(const ModelConfig& cfg, const Corpus& corpus, const TextEncoder& enc,
                    const TrainConfig& tc);

using EvalFn = std::function<double(const Model&)>;

// Fine-tunes on the quality corpus, evaluating every ckpt_interval steps.
// Returns the checkpoint with the best eval score (early stopping by
// patience), not the last one.
Checkpoint quality_tune(const Checkpoint& start, const Corpus& quality_corpus,
                        const TextEncoder& enc, const TrainConfig& tc, const EvalFn& eval_fn);

// Copies weights to a model at new_side; PE is bilinearly interpolated from
// the source (use_pe_interp) or re-initialized (ablation arm), then
// fine-tunes for max_steps.
Checkpoint adapt_resolution(const Checkpoint& start, int new_side, const Corpus& corpus,
                            const TextEncoder& enc, const TrainConfig& tc, bool use_pe_interp);

}  // namespace dimba
