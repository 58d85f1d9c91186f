#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dimba/rng.hpp"
#include "dimba/tensor.hpp"

namespace dimba {

// Exact palette table (also documented in the README). Indices 0..7 are
// object colors; backgrounds come from a separate two-entry table.
struct Rgb {
    std::uint8_t r, g, b;
};
constexpr int kNumColors = 8;
extern const std::array<Rgb, kNumColors> kPalette;
extern const std::array<std::string, kNumColors> kColorNames;
constexpr int kNumBackgrounds = 2;
extern const std::array<Rgb, kNumBackgrounds> kBackgrounds;
extern const std::array<std::string, kNumBackgrounds> kBackgroundNames;

constexpr int kGridSide = 4;  // 4x4 placement grid

enum class Shape { circle = 0, square = 1, triangle = 2 };
extern const std::array<std::string, 3> kShapeNames;

struct SceneObject {
    Shape shape;
    int color;  // palette index
    int cell;   // 0..15, row-major
    int size;   // 0 small, 1 large
};

struct SceneSpec {
    std::vector<SceneObject> objects;  // 1..3, distinct cells
    int bg = 0;
};

SceneSpec sample_scene(Rng& rng);

// Deterministic rasterization to [3, side, side] in [0,1] (byte/255).
Tensor render(const SceneSpec& scene, int side);

enum class CaptionStyle { long_form, short_form };
std::string caption(const SceneSpec& scene, CaptionStyle style);

// Noun lexicon used by both the caption templates and corpus_stats.
const std::vector<std::string>& noun_lexicon();

// Deterministic score in [0,10]: mean of color-diversity, object-count
// balance and centering components.
double aesthetic_score(const Tensor& image);

struct CorpusRecord {
    int index = 0;
    SceneSpec scene;
    std::string image_path;
    std::string caption;
    bool long_style = false;
    double score = 0.0;
};

struct Corpus {
    std::string dir;
    int side = 16;
    std::vector<CorpusRecord> records;
};

// Generates n records with per-index derived rngs (parallel == serial).
// threshold, when set, drops records with score < threshold and warns on
// an empty result. write_images controls PPM emission.
Corpus build_corpus(int n, double mix, std::optional<double> threshold,
                    const std::string& out_dir, int side, std::uint64_t seed,
                    bool write_images = true);

std::vector<CorpusRecord> filter_corpus(const std::vector<CorpusRecord>& recs, double threshold);

void save_manifest(const Corpus& corpus, const std::string& path);
Corpus load_manifest(const std::string& path);

struct CorpusStats {
    double avg_caption_words = 0;
    double avg_nouns_per_caption = 0;
    int total_distinct_nouns = 0;
    int valid_distinct_nouns = 0;  // occurring more than 10 times
    double valid_ratio = 0;
    double long_fraction = 0;
    std::map<std::string, long long> noun_counts;
};
CorpusStats corpus_stats(const std::vector<CorpusRecord>& recs);

// PPM (P6) image io; image values in [0,1], written as bytes.
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

}  // namespace dimba
