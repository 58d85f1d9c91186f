#include "dimba/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dimba {

const std::array<Rgb, kNumColors> kPalette = {{{220, 50, 40},    // red
                                               {40, 70, 220},    // blue
                                               {40, 180, 60},    // green
                                               {235, 220, 50},   // yellow
                                               {150, 60, 200},   // purple
                                               {240, 140, 30},   // orange
                                               {60, 200, 220},   // cyan
                                               {245, 245, 245}}};  // white
const std::array<std::string, kNumColors> kColorNames = {
    "red", "blue", "green", "yellow", "purple", "orange", "cyan", "white"};

const std::array<Rgb, kNumBackgrounds> kBackgrounds = {{{10, 10, 10}, {120, 120, 120}}};
const std::array<std::string, kNumBackgrounds> kBackgroundNames = {"black", "gray"};

const std::array<std::string, 3> kShapeNames = {"circle", "square", "triangle"};

SceneSpec sample_scene(Rng& rng) {
    SceneSpec s;
    s.bg = rng.uniform_int(kNumBackgrounds);
    int n = 1 + rng.uniform_int(3);
    std::set<int> used;
    for (int i = 0; i < n; ++i) {
        int cell;
        do {
            cell = rng.uniform_int(kGridSide * kGridSide);
        } while (used.count(cell));
        used.insert(cell);
        SceneObject o;
        o.shape = static_cast<Shape>(rng.uniform_int(3));
        o.color = rng.uniform_int(kNumColors);
        o.cell = cell;
        o.size = rng.uniform_int(2);
        s.objects.push_back(o);
    }
    return s;
}

static bool inside_shape(const SceneObject& o, double x, double y, double cell_px) {
    int col = o.cell % kGridSide, row = o.cell / kGridSide;
    double cx = (col + 0.5) * cell_px, cy = (row + 0.5) * cell_px;
    double r = (o.size == 0 ? 0.30 : 0.45) * cell_px;
    double dx = x - cx, dy = y - cy;
    switch (o.shape) {
        case Shape::circle:
            return dx * dx + dy * dy <= r * r;
        case Shape::square:
            return std::abs(dx) <= r && std::abs(dy) <= r;
        case Shape::triangle:  // apex up
            return dy >= -r && dy <= r && std::abs(dx) <= r * (dy + r) / (2.0 * r);
    }
    return false;
}

Tensor render(const SceneSpec& scene, int side) {
    if (side != 16 && side != 32 && side != 64 && side != 128)
        throw std::invalid_argument("render: unsupported side");
    double cell_px = static_cast<double>(side) / kGridSide;
    Tensor img({3, side, side});
    Rgb bg = kBackgrounds[scene.bg];
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            Rgb c = bg;
            // later objects draw over earlier ones
            for (const auto& o : scene.objects)
                if (inside_shape(o, x + 0.5, y + 0.5, cell_px)) c = kPalette[o.color];
            img[static_cast<std::size_t>(0) * side * side + y * side + x] = c.r / 255.0;
            img[static_cast<std::size_t>(1) * side * side + y * side + x] = c.g / 255.0;
            img[static_cast<std::size_t>(2) * side * side + y * side + x] = c.b / 255.0;
        }
    return img;
}

static std::string region_name(int cell) {
    int col = cell % kGridSide, row = cell / kGridSide;
    std::string v = row < 2 ? "upper" : "lower";
    std::string h = col < 2 ? "left" : "right";
    return v + " " + h;
}

static std::string relation_phrase(const SceneObject& a, const SceneObject& b) {
    int ca = a.cell % kGridSide, cb = b.cell % kGridSide;
    int ra = a.cell / kGridSide, rb = b.cell / kGridSide;
    if (ca < cb) return "to the left of";
    if (ca > cb) return "to the right of";
    if (ra < rb) return "above";
    return "below";
}

std::string caption(const SceneSpec& scene, CaptionStyle style) {
    const auto& objs = scene.objects;
    auto noun_phrase = [](const SceneObject& o) {
        return kColorNames[o.color] + " " + kShapeNames[static_cast<int>(o.shape)];
    };
    if (style == CaptionStyle::short_form) return "a " + noun_phrase(objs[0]);

    std::ostringstream os;
    os << "The image shows a simple geometric scene rendered on a plain "
       << kBackgroundNames[scene.bg] << " background that fills the whole frame.";
    for (std::size_t i = 0; i < objs.size(); ++i) {
        const auto& o = objs[i];
        os << " There is a " << (o.size == 0 ? "small" : "large") << " " << noun_phrase(o)
           << " placed in the " << region_name(o.cell) << " area of the frame.";
    }
    if (objs.size() >= 2)
        os << " The " << noun_phrase(objs[0]) << " appears " << relation_phrase(objs[0], objs[1])
           << " the " << noun_phrase(objs[1]) << ".";
    os << " The overall composition of the scene looks clean, flat and deliberately arranged.";
    return os.str();
}

const std::vector<std::string>& noun_lexicon() {
    static const std::vector<std::string> lex = {
        "image", "scene", "background", "frame", "circle", "square",
        "triangle", "area", "composition"};
    return lex;
}

// ---------- aesthetic score ----------

static int nearest_color(double r, double g, double b, int* is_bg) {
    double best = 1e18;
    int best_i = 0;
    int n = kNumColors + kNumBackgrounds;
    for (int i = 0; i < n; ++i) {
        Rgb c = i < kNumColors ? kPalette[i] : kBackgrounds[i - kNumColors];
        double dr = r * 255 - c.r, dg = g * 255 - c.g, db = b * 255 - c.b;
        double d = dr * dr + dg * dg + db * db;
        if (d < best) {
            best = d;
            best_i = i;
        }
    }
    if (is_bg) *is_bg = best_i >= kNumColors;
    return best_i;
}

double aesthetic_score(const Tensor& image) {
    int side = image.dim(1);
    std::size_t plane = static_cast<std::size_t>(side) * side;
    std::vector<int> label(plane, -1);  // palette index for foreground pixels
    std::set<int> colors;
    double cx = 0, cy = 0;
    long long fg = 0;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            std::size_t i = static_cast<std::size_t>(y) * side + x;
            int is_bg;
            int c = nearest_color(image[i], image[plane + i], image[2 * plane + i], &is_bg);
            if (!is_bg) {
                label[i] = c;
                colors.insert(c);
                cx += x;
                cy += y;
                ++fg;
            }
        }
    if (fg == 0) return 0.0;  // blank image: minimum everywhere

    // color diversity: distinct foreground colors, saturating at 4
    double div = 10.0 * std::min<int>(static_cast<int>(colors.size()), 4) / 4.0;

    // object count via connected components (4-neighbourhood over foreground)
    std::vector<char> seen(plane, 0);
    int ncomp = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < plane; ++s) {
        if (label[s] < 0 || seen[s]) continue;
        ++ncomp;
        stack.push_back(s);
        seen[s] = 1;
        while (!stack.empty()) {
            std::size_t i = stack.back();
            stack.pop_back();
            int y = static_cast<int>(i) / side, x = static_cast<int>(i) % side;
            const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                int nx = x + dx[k], ny = y + dy[k];
                if (nx < 0 || ny < 0 || nx >= side || ny >= side) continue;
                std::size_t j = static_cast<std::size_t>(ny) * side + nx;
                if (label[j] >= 0 && !seen[j]) {
                    seen[j] = 1;
                    stack.push_back(j);
                }
            }
        }
    }
    // balance peaks at two objects
    double balance = std::max(0.0, 10.0 - 5.0 * std::abs(ncomp - 2));

    // centering: foreground centroid distance from the frame centre
    cx = cx / fg - (side - 1) / 2.0;
    cy = cy / fg - (side - 1) / 2.0;
    double dist = std::sqrt(cx * cx + cy * cy) / (side / 2.0);
    double centering = 10.0 * (1.0 - std::min(1.0, dist));

    return (div + balance + centering) / 3.0;
}

// ---------- corpus ----------

static std::string image_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%06d.ppm", index);
    return buf;
}

Corpus build_corpus(int n, double mix, std::optional<double> threshold,
                    const std::string& out_dir, int side, std::uint64_t seed, bool write_images) {
    if (n <= 0) throw std::invalid_argument("build_corpus: n must be positive");
    if (mix < 0.0 || mix > 1.0) throw std::invalid_argument("build_corpus: mix outside [0,1]");
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    std::vector<CorpusRecord> recs(n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
        CorpusRecord r;
        r.index = i;
        r.scene = sample_scene(rng);
        r.long_style = rng.uniform() < mix;
        r.caption =
            caption(r.scene, r.long_style ? CaptionStyle::long_form : CaptionStyle::short_form);
        Tensor img = render(r.scene, side);
        r.score = aesthetic_score(img);
        r.image_path = image_name(i);
        if (write_images && !out_dir.empty())
            write_ppm(out_dir + "/" + r.image_path, img);
        recs[i] = std::move(r);
    }
    if (threshold) {
        recs = filter_corpus(recs, *threshold);
        if (recs.empty())
            std::fprintf(stderr,
                         "warning: quality threshold %.3f leaves an empty corpus\n", *threshold);
    }
    return Corpus{out_dir, side, std::move(recs)};
}

std::vector<CorpusRecord> filter_corpus(const std::vector<CorpusRecord>& recs, double threshold) {
    std::vector<CorpusRecord> out;
    for (const auto& r : recs)
        if (r.score >= threshold) out.push_back(r);
    return out;
}

static nlohmann::json scene_to_json(const SceneSpec& s) {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : s.objects)
        objs.push_back({{"shape", kShapeNames[static_cast<int>(o.shape)]},
                        {"color", kColorNames[o.color]},
                        {"cell", o.cell},
                        {"size", o.size}});
    return {{"bg", kBackgroundNames[s.bg]}, {"objects", objs}};
}

static SceneSpec scene_from_json(const nlohmann::json& j) {
    SceneSpec s;
    for (int i = 0; i < kNumBackgrounds; ++i)
        if (kBackgroundNames[i] == j.at("bg").get<std::string>()) s.bg = i;
    for (const auto& oj : j.at("objects")) {
        SceneObject o{};
        for (int i = 0; i < 3; ++i)
            if (kShapeNames[i] == oj.at("shape").get<std::string>())
                o.shape = static_cast<Shape>(i);
        for (int i = 0; i < kNumColors; ++i)
            if (kColorNames[i] == oj.at("color").get<std::string>()) o.color = i;
        o.cell = oj.at("cell").get<int>();
        o.size = oj.at("size").get<int>();
        s.objects.push_back(o);
    }
    return s;
}

void save_manifest(const Corpus& corpus, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_manifest: cannot open " + path);
    f << nlohmann::json{{"side", corpus.side}, {"count", corpus.records.size()}}.dump() << "\n";
    for (const auto& r : corpus.records) {
        nlohmann::json j = {{"index", r.index},         {"image", r.image_path},
                            {"caption", r.caption},     {"style", r.long_style ? "long" : "short"},
                            {"score", r.score},         {"scene", scene_to_json(r.scene)}};
        f << j.dump() << "\n";
    }
}

Corpus load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_manifest: cannot open " + path);
    Corpus c;
    c.dir = std::filesystem::path(path).parent_path().string();
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("load_manifest: empty file");
    c.side = nlohmann::json::parse(line).at("side").get<int>();
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        CorpusRecord r;
        r.index = j.at("index").get<int>();
        r.image_path = j.at("image").get<std::string>();
        r.caption = j.at("caption").get<std::string>();
        r.long_style = j.at("style").get<std::string>() == "long";
        r.score = j.at("score").get<double>();
        r.scene = scene_from_json(j.at("scene"));
        c.records.push_back(std::move(r));
    }
    return c;
}

CorpusStats corpus_stats(const std::vector<CorpusRecord>& recs) {
    CorpusStats st;
    if (recs.empty()) return st;
    long long words = 0, nouns = 0, longs = 0;
    for (const auto& r : recs) {
        std::istringstream is(r.caption);
        std::string w;
        while (is >> w) {
            ++words;
            // strip trailing punctuation, lowercase
            while (!w.empty() && !std::isalnum(static_cast<unsigned char>(w.back()))) w.pop_back();
            for (auto& ch : w) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            if (std::find(noun_lexicon().begin(), noun_lexicon().end(), w) !=
                noun_lexicon().end()) {
                ++nouns;
                ++st.noun_counts[w];
            }
        }
        if (r.long_style) ++longs;
    }
    st.avg_caption_words = static_cast<double>(words) / recs.size();
    st.avg_nouns_per_caption = static_cast<double>(nouns) / recs.size();
    st.total_distinct_nouns = static_cast<int>(st.noun_counts.size());
    for (const auto& [w, cnt] : st.noun_counts)
        if (cnt > 10) ++st.valid_distinct_nouns;  // strictly greater than 10
    st.valid_ratio = st.total_distinct_nouns == 0
                         ? 0.0
                         : static_cast<double>(st.valid_distinct_nouns) / st.total_distinct_nouns;
    st.long_fraction = static_cast<double>(longs) / recs.size();
    return st;
}

// ---------- PPM ----------

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("write_ppm: expected [3,H,W]");
    int h = image.dim(1), w = image.dim(2);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) {
            double v = image[c * plane + i];
            int b = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            f.put(static_cast<char>(b));
        }
    }
}

Tensor read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
    std::string magic;
    int w, h, maxv;
    f >> magic >> w >> h >> maxv;
    if (magic != "P6" || maxv != 255) throw std::runtime_error("read_ppm: unsupported format");
    f.get();  // single whitespace after header
    Tensor img({3, h, w});
    std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) {
            int b = f.get();
            if (b < 0) throw std::runtime_error("read_ppm: truncated file");
            img[c * plane + i] = b / 255.0;
        }
    return img;
}

}  // namespace dimba
