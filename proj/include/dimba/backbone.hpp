#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dimba/attention.hpp"
#include "dimba/ssm.hpp"

namespace dimba {

struct ModelConfig {
    int n_blocks = 2;
    int hidden = 64;
    int ratio_k = 1;  // Mamba sublayers per attention sublayer; 0 = attention-only control
    int patch = 2;
    int in_channels = 3;
    int base_resolution = 16;  // pixels per side
    int d_text = 32;
    int max_text_tokens = 64;
    int mlp_ratio = 4;
    int n_heads = 4;
    int ssm_state = 16;
    int ssm_expansion = 2;
    int conv_width = 4;
    int time_freq_dim = 256;
    bool learned_pe = false;

    int grid_side() const { return base_resolution / patch; }
    int seq_len() const { return grid_side() * grid_side(); }
    int patch_dim() const { return in_channels * patch * patch; }
    int sublayers_per_block() const { return ratio_k + 3; }
    void validate() const;  // throws listing the offending field
};

// Named XL / Giant presets from the large-scale configuration.
ModelConfig xl_config();
ModelConfig giant_config();

struct DimbaBlock {
    std::vector<SsmParams> mamba;
    AttnParams self_attn;
    AttnParams cross_attn;
    Var mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct Model {
    ModelConfig cfg;
    Var patch_embed_w, patch_embed_b;  // [patch_dim, hidden]
    Var pos_embed;                     // [L, hidden]; parameter iff cfg.learned_pe
    Var tmlp_w1, tmlp_b1;              // shared time MLP
    Var tmlp_w2, tmlp_b2;              // final layer zero-initialized (gate-zero init)
    std::vector<Var> layer_embed;      // [1, 3*hidden] per sublayer + one for the final layer
    std::vector<DimbaBlock> blocks;
    Var final_w, final_b;  // [hidden, patch_dim]
    Var null_cond;         // [1, d_text], learned null condition for CFG
    // mean-pooled text enters the AdaLN conditioning vector alongside the
    // timestep embedding; gives global attributes a direct modulation path
    Var text_pool_w, text_pool_b;  // [d_text, hidden]
    // conditioned gain on the input->output token skip; the backbone's final
    // layernorm discards per-token amplitude, so without this path the model
    // cannot express the near-identity epsilon map needed at high noise
    Var skip_w, skip_b;  // [hidden, patch_dim]

    std::vector<Var> params() const;  // stable order, named
    std::size_t param_count() const;

    // Per-sublayer AdaLN signals (last entry = final layer, gate unused) plus
    // the [1, patch_dim] input-skip gain, both conditioned on the timestep and
    // the masked mean of the text features.
    struct Conditioning {
        std::vector<AdaLnSignals> sublayers;
        Var out_skip;
    };
    Conditioning conditioning(int t, int T, const Var& text,
                              const std::vector<char>& text_mask) const;
};

Model build_model(const ModelConfig& cfg, std::uint64_t seed);

// (name, shape) manifest derived from config alone; count_params sums it.
std::vector<std::pair<std::string, std::vector<int>>> param_manifest(const ModelConfig& cfg);
std::size_t count_params(const ModelConfig& cfg);

// [C,H,W] -> [L, C*patch*patch], row-major patch order; and its inverse.
Var patchify(const Var& latent, int patch);
Var unpatchify(const Var& tokens, int channels, int height, int width, int patch);

// 2-D sinusoidal positional embedding over a grid_side x grid_side token grid.
Tensor sinusoidal_pos_embed(int grid_side, int hidden);
// Sinusoidal frequency embedding of a timestep, [1, freq_dim].
Tensor timestep_frequencies(int t, int freq_dim);

// Bilinear upscaling of a [g0*g0, hidden] PE grid to [g1*g1, hidden],
// align-corners; g1 == g0 returns the input, g1 < g0 is an error.
Tensor interpolate_pe(const Tensor& pe, int old_side, int new_side);

// Epsilon prediction. latent: [C, res, res]; text: [T, d_text] features.
Var model_forward(const Model& m, const Tensor& latent, int t, int total_steps, const Var& text,
                  const std::vector<char>& text_mask);

}  // namespace dimba
