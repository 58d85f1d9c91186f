#include "dimba/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace dimba {

void AdamW::init(const std::vector<Var>& params) {
    step_count = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
        m.emplace_back(p->value.shape());
        v.emplace_back(p->value.shape());
    }
}

void AdamW::step(std::vector<Var>& params) {
    if (m.size() != params.size()) throw std::runtime_error("AdamW: state not initialized");
    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Var& p = params[i];
        if (!p->grad.same_shape(p->value)) continue;  // parameter unused this step
        for (std::size_t j = 0; j < p->value.numel(); ++j) {
            double g = p->grad[j];
            if (std::isnan(g))
                throw std::runtime_error("AdamW: NaN gradient in parameter " + p->name);
            m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
            v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g * g;
            double mh = m[i][j] / bc1, vh = v[i][j] / bc2;
            p->value[j] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * p->value[j]);
        }
    }
}

double clip_global_norm(std::vector<Var>& params, double max_norm) {
    double sq = 0;
    for (const auto& p : params) {
        if (!p->grad.same_shape(p->value)) continue;
        for (std::size_t j = 0; j < p->grad.numel(); ++j) sq += p->grad[j] * p->grad[j];
    }
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        double s = max_norm / norm;
        for (auto& p : params) {
            if (!p->grad.same_shape(p->value)) continue;
            for (std::size_t j = 0; j < p->grad.numel(); ++j) p->grad[j] *= s;
        }
    }
    return norm;
}

TrainState train_state_new(const ModelConfig& cfg, const TrainConfig& tc) {
    TrainState st{build_model(cfg, tc.seed), {}, 0, "pretrain"};
    st.opt.lr = tc.lr;
    st.opt.weight_decay = tc.weight_decay;
    auto ps = st.model.params();
    st.opt.init(ps);
    return st;
}

Checkpoint state_to_checkpoint(const TrainState& st, double eval_score) {
    Checkpoint ckpt = checkpoint_from_model(st.model, {st.step, st.stage, eval_score});
    auto ps = st.model.params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        ckpt.tensors.emplace_back("opt.m." + ps[i]->name, st.opt.m[i]);
        ckpt.tensors.emplace_back("opt.v." + ps[i]->name, st.opt.v[i]);
    }
    return ckpt;
}

TrainState train_state_from_checkpoint(const Checkpoint& ckpt, const TrainConfig& tc) {
    TrainState st{model_from_checkpoint(ckpt), {}, ckpt.meta.step, ckpt.meta.stage};
    st.opt.lr = tc.lr;
    st.opt.weight_decay = tc.weight_decay;
    auto ps = st.model.params();
    st.opt.init(ps);
    st.opt.step_count = ckpt.meta.step;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const Tensor* tm = ckpt.find("opt.m." + ps[i]->name);
        const Tensor* tv = ckpt.find("opt.v." + ps[i]->name);
        if (tm) st.opt.m[i] = *tm;
        if (tv) st.opt.v[i] = *tv;
    }
    return st;
}

// Per-corpus memo of encoded captions and [-1,1] images, keyed by records
// pointer so chunked training reuses it across calls.
struct CorpusCache {
    const void* key = nullptr;
    std::vector<std::optional<TextCondition>> cond;
    std::vector<std::optional<Tensor>> img;
};

static CorpusCache& cache_for(const Corpus& corpus) {
    static CorpusCache cache;
    if (cache.key != static_cast<const void*>(corpus.records.data()) ||
        cache.cond.size() != corpus.records.size()) {
        cache.key = corpus.records.data();
        cache.cond.assign(corpus.records.size(), std::nullopt);
        cache.img.assign(corpus.records.size(), std::nullopt);
    }
    return cache;
}

double train_steps(TrainState& st, const Corpus& corpus, const TextEncoder& enc,
                   const TrainConfig& tc, long long n_steps, std::ostream* log) {
    if (corpus.records.empty()) throw std::invalid_argument("train_steps: empty corpus");
    NoiseSchedule sched = make_schedule(1000);
    auto params = st.model.params();
    CorpusCache& cache = cache_for(corpus);
    auto& cond_cache = cache.cond;
    auto& img_cache = cache.img;

    double last_loss = 0;
    for (long long k = 0; k < n_steps; ++k) {
        auto t0 = std::chrono::steady_clock::now();
        // one rng stream per global step index: resume == uninterrupted
        Rng rng = Rng::derive(tc.seed ^ 0x7261696e5f726e67ULL, static_cast<std::uint64_t>(st.step));
        std::vector<Tensor> x0s;
        std::vector<TextCondition> conds;
        for (int b = 0; b < tc.batch; ++b) {
            std::size_t idx = static_cast<std::size_t>(rng.uniform_int(
                static_cast<int>(corpus.records.size())));
            const auto& rec = corpus.records[idx];
            if (!img_cache[idx]) {
                Tensor img = render(rec.scene, corpus.side);
                for (std::size_t j = 0; j < img.numel(); ++j) img[j] = 2.0 * img[j] - 1.0;
                img_cache[idx] = std::move(img);
            }
            x0s.push_back(*img_cache[idx]);
            if (!cond_cache[idx]) cond_cache[idx] = enc.condition(rec.caption);
            conds.push_back(*cond_cache[idx]);
        }
        Var loss = training_loss(st.model, x0s, conds, sched, tc.p_uncond, rng, tc.t_high_frac);
        backward(loss);
        clip_global_norm(params, tc.grad_clip);
        st.opt.step(params);
        ++st.step;
        last_loss = loss->value[0];
        if (log) {
            auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
            (*log) << st.step << "," << last_loss << "," << tc.lr << "," << ms << "\n";
        }
    }
    return last_loss;
}

static std::string ckpt_path(const TrainConfig& tc, long long step) {
    return tc.out_dir + "/ckpt_" + std::to_string(step) + ".dmba";
}

Checkpoint pretrain(const ModelConfig& cfg, const Corpus& corpus, const TextEncoder& enc,
                    const TrainConfig& tc) {
    TrainState st = train_state_new(cfg, tc);
    st.stage = "pretrain";
    std::ofstream log;
    if (!tc.out_dir.empty()) {
        std::filesystem::create_directories(tc.out_dir);
        log.open(tc.out_dir + "/train_log.csv");
        log << "step,loss,lr,wall_ms\n";
    }
    while (st.step < tc.max_steps) {
        long long chunk = std::min(tc.ckpt_interval, tc.max_steps - st.step);
        train_steps(st, corpus, enc, tc, chunk, log.is_open() ? &log : nullptr);
        if (!tc.out_dir.empty()) save_checkpoint(state_to_checkpoint(st), ckpt_path(tc, st.step));
        if (log.is_open()) log.flush();
    }
    return state_to_checkpoint(st);
}

Checkpoint quality_tune(const Checkpoint& start, const Corpus& quality_corpus,
                        const TextEncoder& enc, const TrainConfig& tc, const EvalFn& eval_fn) {
    if (quality_corpus.records.empty())
        throw std::invalid_argument("quality_tune: empty quality corpus");
    if (!eval_fn) throw std::invalid_argument("quality_tune: eval function required");
    TrainState st = train_state_from_checkpoint(start, tc);
    st.stage = "quality_tune";
    std::ofstream log;
    if (!tc.out_dir.empty()) {
        std::filesystem::create_directories(tc.out_dir);
        log.open(tc.out_dir + "/quality_log.csv");
        log << "step,loss,lr,wall_ms\n";
    }
    long long start_step = st.step;
    Checkpoint best;
    double best_score = -1e300;
    int evals_since_best = 0;
    bool have_best = false;
    while (st.step - start_step < tc.max_steps) {
        long long chunk = std::min(tc.ckpt_interval, tc.max_steps - (st.step - start_step));
        train_steps(st, quality_corpus, enc, tc, chunk, log.is_open() ? &log : nullptr);
        double score = eval_fn(st.model);
        if (!have_best || score > best_score) {
            best_score = score;
            best = state_to_checkpoint(st, score);
            evals_since_best = 0;
            have_best = true;
        } else {
            ++evals_since_best;
        }
        if (!tc.out_dir.empty())
            save_checkpoint(state_to_checkpoint(st, score), ckpt_path(tc, st.step));
        // early stopping: selection by eval score, not loss
        if (evals_since_best >= tc.patience) break;
    }
    return best;
}

Checkpoint adapt_resolution(const Checkpoint& start, int new_side, const Corpus& corpus,
                            const TextEncoder& enc, const TrainConfig& tc, bool use_pe_interp) {
    if (new_side <= start.config.base_resolution)
        throw std::invalid_argument("adapt_resolution: new side must exceed old side");
    ModelConfig nc = start.config;
    nc.base_resolution = new_side;
    nc.validate();

    TrainState st{build_model(nc, tc.seed), {}, 0, "res_adapt"};
    // copy everything except the positional embedding
    for (auto& p : st.model.params()) {
        if (p->name == "pos_embed") continue;
        const Tensor* t = start.find(p->name);
        if (!t) throw std::runtime_error("adapt_resolution: source missing tensor " + p->name);
        p->value = *t;
    }
    if (use_pe_interp) {
        const Tensor* old_pe = start.find("pos_embed");
        Tensor base;
        if (old_pe) {
            base = *old_pe;
        } else {
            // non-learned PE: interpolate the deterministic low-res grid
            base = sinusoidal_pos_embed(start.config.grid_side(), start.config.hidden);
        }
        Tensor pe = interpolate_pe(base, start.config.grid_side(), nc.grid_side());
        st.model.pos_embed->value = pe;
    }
    st.opt.lr = tc.lr;
    st.opt.weight_decay = tc.weight_decay;
    auto ps = st.model.params();
    st.opt.init(ps);

    if (tc.max_steps > 0) {
        std::ofstream log;
        if (!tc.out_dir.empty()) {
            std::filesystem::create_directories(tc.out_dir);
            log.open(tc.out_dir + "/resadapt_log.csv");
            log << "step,loss,lr,wall_ms\n";
        }
        train_steps(st, corpus, enc, tc, tc.max_steps, log.is_open() ? &log : nullptr);
    }
    return state_to_checkpoint(st);
}

}  // namespace dimba
