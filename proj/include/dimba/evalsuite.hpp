#pragma once

#include <string>
#include <vector>

#include "dimba/datagen.hpp"
#include "dimba/diffusion.hpp"
#include "dimba/text.hpp"

namespace dimba {

enum class EvalCategory { color, shape, spatial };

struct EvalPrompt {
    std::string caption;
    SceneSpec spec;
    EvalCategory category;
};

struct VerifyResult {
    bool color = false, shape = false, spatial = false;
};

// Deterministic compositional verifier. Colors via nearest-palette
// classification of foreground pixels; shapes via bounding-box fill ratio
// of per-color connected components (square ~1, circle ~pi/4, triangle
// ~1/2); spatial via detected centroid comparison. Undetectable objects
// make the category false. Shape classification needs side >= 32.
VerifyResult verify(const Tensor& image, const SceneSpec& spec);

// color/shape prompts are single-object scenes with short captions;
// spatial prompts are two-object scenes with long captions (which name the
// relation).
std::vector<EvalPrompt> make_prompt_set(int n_per_category, std::uint64_t seed);

struct CategoryScore {
    int correct = 0, total = 0;
    double acc = 0, ci_lo = 0, ci_hi = 0;  // 95% binomial (normal approx)
};

struct CompbenchReport {
    CategoryScore color, shape, spatial;
};

struct SamplerCfg {
    int steps = 20;
    double guidance = 4.5;
    std::uint64_t seed = 0;
};

CompbenchReport compbench_report(const Model& m, const std::vector<EvalPrompt>& prompts,
                                 const SamplerCfg& scfg, const TextEncoder& enc,
                                 const NoiseSchedule& sched);

double composite_score(const CompbenchReport& r);
std::string report_table(const CompbenchReport& r);
void report_csv(const CompbenchReport& r, const std::string& path);

// Hand-crafted image features: channel means, gray std, edge density,
// 4x4 patch-mean variance.
Tensor image_features(const Tensor& image);
constexpr int kFeatureDim = 6;

// Frechet distance between Gaussian fits of two feature populations.
// shrinkage adds 1e-6 to the covariance diagonals.
double frechet_from_features(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                             bool shrinkage = false);
double frechet_stats_distance(const std::vector<Tensor>& images_a,
                              const std::vector<Tensor>& images_b, bool shrinkage = false);

}  // namespace dimba
