#include "dimba/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Dense>

namespace dimba {

// ---------- verifier ----------

namespace {

struct Component {
    int color = -1;
    long long area = 0;
    double cx = 0, cy = 0;
    int min_x = 1 << 30, max_x = -1, min_y = 1 << 30, max_y = -1;
};

int nearest_palette(double r, double g, double b, bool* is_bg) {
    double best = 1e18;
    int best_i = 0;
    for (int i = 0; i < kNumColors + kNumBackgrounds; ++i) {
        Rgb c = i < kNumColors ? kPalette[i] : kBackgrounds[i - kNumColors];
        double dr = r * 255 - c.r, dg = g * 255 - c.g, db = b * 255 - c.b;
        double d = dr * dr + dg * dg + db * db;
        if (d < best) {
            best = d;
            best_i = i;
        }
    }
    *is_bg = best_i >= kNumColors;
    return best_i;
}

// Per-color 4-connected components over palette-quantized foreground.
std::vector<Component> find_components(const Tensor& image, int min_area) {
    int side = image.dim(1);
    std::size_t plane = static_cast<std::size_t>(side) * side;
    std::vector<int> label(plane, -1);
    for (std::size_t i = 0; i < plane; ++i) {
        bool is_bg;
        int c = nearest_palette(image[i], image[plane + i], image[2 * plane + i], &is_bg);
        if (!is_bg) label[i] = c;
    }
    std::vector<char> seen(plane, 0);
    std::vector<Component> comps;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < plane; ++s) {
        if (label[s] < 0 || seen[s]) continue;
        Component comp;
        comp.color = label[s];
        stack.push_back(s);
        seen[s] = 1;
        while (!stack.empty()) {
            std::size_t i = stack.back();
            stack.pop_back();
            int y = static_cast<int>(i) / side, x = static_cast<int>(i) % side;
            comp.area++;
            comp.cx += x;
            comp.cy += y;
            comp.min_x = std::min(comp.min_x, x);
            comp.max_x = std::max(comp.max_x, x);
            comp.min_y = std::min(comp.min_y, y);
            comp.max_y = std::max(comp.max_y, y);
            const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                int nx = x + dx[k], ny = y + dy[k];
                if (nx < 0 || ny < 0 || nx >= side || ny >= side) continue;
                std::size_t j = static_cast<std::size_t>(ny) * side + nx;
                if (label[j] == comp.color && !seen[j]) {
                    seen[j] = 1;
                    stack.push_back(j);
                }
            }
        }
        if (comp.area >= min_area) {
            comp.cx /= comp.area;
            comp.cy /= comp.area;
            comps.push_back(comp);
        }
    }
    return comps;
}

Shape classify_shape(const Component& c) {
    double bw = c.max_x - c.min_x + 1, bh = c.max_y - c.min_y + 1;
    double fill = static_cast<double>(c.area) / (bw * bh);
    if (fill >= 0.86) return Shape::square;
    if (fill >= 0.62) return Shape::circle;
    return Shape::triangle;
}

}  // namespace

VerifyResult verify(const Tensor& image, const SceneSpec& spec) {
    VerifyResult res;
    int side = image.dim(1);
    int min_area = std::max(3, side * side / 256);
    auto comps = find_components(image, min_area);
    std::sort(comps.begin(), comps.end(),
              [](const Component& a, const Component& b) { return a.area > b.area; });
    std::size_t n = spec.objects.size();

    // color: the N largest detected components must carry exactly the
    // requested colors (as a multiset). Judging only the dominant components
    // keeps the analytic chance level meaningful: on unstructured images the
    // largest blob's color is roughly uniform over the palette, so a
    // single-object prompt scores ~1/8 by chance.
    std::multiset<int> want, got;
    for (const auto& o : spec.objects) want.insert(o.color);
    for (std::size_t i = 0; i < comps.size() && i < n; ++i) got.insert(comps[i].color);
    res.color = !comps.empty() && want == got;

    // match spec objects to components by color first (largest-area component
    // of that color), then fall back to the largest unused component so that
    // shape and spatial are judged independently of color correctness
    std::vector<const Component*> matched(n, nullptr);
    std::vector<char> used(comps.size(), 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < comps.size(); ++j)
            if (!used[j] && comps[j].color == spec.objects[i].color) {
                matched[i] = &comps[j];
                used[j] = 1;
                break;
            }
    for (std::size_t i = 0; i < n; ++i) {
        if (matched[i]) continue;
        for (std::size_t j = 0; j < comps.size(); ++j)
            if (!used[j]) {
                matched[i] = &comps[j];
                used[j] = 1;
                break;
            }
    }

    res.shape = true;
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
        if (!matched[i] || classify_shape(*matched[i]) != spec.objects[i].shape) {
            res.shape = false;
            break;
        }
    }

    // spatial relation between the first two objects, from detected centroids
    if (spec.objects.size() < 2) {
        res.spatial = matched[0] != nullptr;
    } else if (!matched[0] || !matched[1]) {
        res.spatial = false;
    } else {
        const auto& a = spec.objects[0];
        const auto& b = spec.objects[1];
        int ca = a.cell % kGridSide, cb = b.cell % kGridSide;
        int ra = a.cell / kGridSide, rb = b.cell / kGridSide;
        if (ca != cb)
            res.spatial = (ca < cb) == (matched[0]->cx < matched[1]->cx);
        else if (ra != rb)
            res.spatial = (ra < rb) == (matched[0]->cy < matched[1]->cy);
        else
            res.spatial = false;  // same cell cannot occur for valid scenes
    }
    return res;
}

// ---------- prompts ----------

std::vector<EvalPrompt> make_prompt_set(int n_per_category, std::uint64_t seed) {
    std::vector<EvalPrompt> out;
    auto single_scene = [](Rng& rng) {
        SceneSpec s;
        s.bg = rng.uniform_int(kNumBackgrounds);
        SceneObject o;
        o.shape = static_cast<Shape>(rng.uniform_int(3));
        o.color = rng.uniform_int(kNumColors);
        o.cell = rng.uniform_int(kGridSide * kGridSide);
        o.size = 1;
        s.objects.push_back(o);
        return s;
    };
    for (int i = 0; i < n_per_category; ++i) {
        Rng rng = Rng::derive(seed, 3 * static_cast<std::uint64_t>(i));
        SceneSpec s = single_scene(rng);
        out.push_back({caption(s, CaptionStyle::short_form), s, EvalCategory::color});
    }
    for (int i = 0; i < n_per_category; ++i) {
        Rng rng = Rng::derive(seed, 3 * static_cast<std::uint64_t>(i) + 1);
        SceneSpec s = single_scene(rng);
        out.push_back({caption(s, CaptionStyle::short_form), s, EvalCategory::shape});
    }
    for (int i = 0; i < n_per_category; ++i) {
        Rng rng = Rng::derive(seed, 3 * static_cast<std::uint64_t>(i) + 2);
        SceneSpec s;
        s.bg = rng.uniform_int(kNumBackgrounds);
        for (int k = 0; k < 2; ++k) {
            SceneObject o;
            o.shape = static_cast<Shape>(rng.uniform_int(3));
            o.size = 1;
            do {
                o.color = rng.uniform_int(kNumColors);
            } while (k == 1 && o.color == s.objects[0].color);
            do {
                o.cell = rng.uniform_int(kGridSide * kGridSide);
            } while (k == 1 && o.cell == s.objects[0].cell);
            s.objects.push_back(o);
        }
        out.push_back({caption(s, CaptionStyle::long_form), s, EvalCategory::spatial});
    }
    return out;
}

// ---------- report ----------

static CategoryScore finish_score(int correct, int total) {
    CategoryScore s;
    s.correct = correct;
    s.total = total;
    if (total > 0) {
        s.acc = static_cast<double>(correct) / total;
        double se = std::sqrt(std::max(s.acc * (1 - s.acc), 1e-12) / total);
        s.ci_lo = std::max(0.0, s.acc - 1.96 * se);
        s.ci_hi = std::min(1.0, s.acc + 1.96 * se);
    }
    return s;
}

CompbenchReport compbench_report(const Model& m, const std::vector<EvalPrompt>& prompts,
                                 const SamplerCfg& scfg, const TextEncoder& enc,
                                 const NoiseSchedule& sched) {
    int c_ok = 0, c_n = 0, s_ok = 0, s_n = 0, p_ok = 0, p_n = 0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        const auto& pr = prompts[i];
        TextCondition cond = enc.condition(pr.caption);
        Rng rng = Rng::derive(scfg.seed ^ 0x636f6d7062656e63ULL, i);
        Tensor img = sample_image(m, cond, sched, scfg.steps, scfg.guidance, rng);
        for (std::size_t j = 0; j < img.numel(); ++j)
            img[j] = std::clamp(0.5 * (img[j] + 1.0), 0.0, 1.0);
        VerifyResult v = verify(img, pr.spec);
        switch (pr.category) {
            case EvalCategory::color:
                ++c_n;
                c_ok += v.color;
                break;
            case EvalCategory::shape:
                ++s_n;
                s_ok += v.shape;
                break;
            case EvalCategory::spatial:
                ++p_n;
                p_ok += v.spatial;
                break;
        }
    }
    return {finish_score(c_ok, c_n), finish_score(s_ok, s_n), finish_score(p_ok, p_n)};
}

double composite_score(const CompbenchReport& r) {
    double sum = 0;
    int n = 0;
    for (const auto* s : {&r.color, &r.shape, &r.spatial})
        if (s->total > 0) {
            sum += s->acc;
            ++n;
        }
    return n ? sum / n : 0.0;
}

std::string report_table(const CompbenchReport& r) {
    std::ostringstream os;
    os << "category  acc     95% CI          n\n";
    auto row = [&](const char* name, const CategoryScore& s) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-8s  %.4f  [%.4f, %.4f]  %d\n", name, s.acc, s.ci_lo,
                      s.ci_hi, s.total);
        os << buf;
    };
    row("color", r.color);
    row("shape", r.shape);
    row("spatial", r.spatial);
    return os.str();
}

void report_csv(const CompbenchReport& r, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("report_csv: cannot open " + path);
    f << "category,correct,total,acc,ci_lo,ci_hi\n";
    auto row = [&](const char* name, const CategoryScore& s) {
        f << name << "," << s.correct << "," << s.total << "," << s.acc << "," << s.ci_lo << ","
          << s.ci_hi << "\n";
    };
    row("color", r.color);
    row("shape", r.shape);
    row("spatial", r.spatial);
}

// ---------- Frechet ----------

Tensor image_features(const Tensor& image) {
    int side = image.dim(1);
    std::size_t plane = static_cast<std::size_t>(side) * side;
    Tensor f({kFeatureDim});
    for (int c = 0; c < 3; ++c) {
        double m = 0;
        for (std::size_t i = 0; i < plane; ++i) m += image[c * plane + i];
        f[c] = m / plane;
    }
    std::vector<double> gray(plane);
    for (std::size_t i = 0; i < plane; ++i)
        gray[i] = (image[i] + image[plane + i] + image[2 * plane + i]) / 3.0;
    double gm = 0;
    for (double g : gray) gm += g;
    gm /= plane;
    double gv = 0;
    for (double g : gray) gv += (g - gm) * (g - gm);
    f[3] = std::sqrt(gv / plane);  // gray std
    double edge = 0;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x + 1 < side; ++x)
            edge += std::abs(gray[y * side + x + 1] - gray[y * side + x]);
    for (int y = 0; y + 1 < side; ++y)
        for (int x = 0; x < side; ++x)
            edge += std::abs(gray[(y + 1) * side + x] - gray[y * side + x]);
    f[4] = edge / (2.0 * plane);  // edge density
    // variance of 4x4 patch means
    int ps = side / 4;
    double pm[16], psum = 0;
    for (int py = 0; py < 4; ++py)
        for (int px = 0; px < 4; ++px) {
            double m = 0;
            for (int y = py * ps; y < (py + 1) * ps; ++y)
                for (int x = px * ps; x < (px + 1) * ps; ++x) m += gray[y * side + x];
            pm[py * 4 + px] = m / (ps * ps);
            psum += pm[py * 4 + px];
        }
    psum /= 16;
    double pv = 0;
    for (double v : pm) pv += (v - psum) * (v - psum);
    f[5] = pv / 16;
    return f;
}

double frechet_from_features(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                             bool shrinkage) {
    int d = static_cast<int>(a.at(0).numel());
    for (const auto* set : {&a, &b})
        if (static_cast<int>(set->size()) < d + 1)
            throw std::invalid_argument(
                "frechet: set size < feature dim + 1 (singular covariance); "
                "use the shrinkage flag with more samples");
    auto fit = [&](const std::vector<Tensor>& s, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
        int n = static_cast<int>(s.size());
        mu = Eigen::VectorXd::Zero(d);
        for (const auto& f : s)
            for (int i = 0; i < d; ++i) mu[i] += f[i];
        mu /= n;
        cov = Eigen::MatrixXd::Zero(d, d);
        for (const auto& f : s) {
            Eigen::VectorXd v(d);
            for (int i = 0; i < d; ++i) v[i] = f[i] - mu[i];
            cov += v * v.transpose();
        }
        cov /= (n - 1);
        if (shrinkage) cov += 1e-6 * Eigen::MatrixXd::Identity(d, d);
    };
    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    fit(a, mu_a, cov_a);
    fit(b, mu_b, cov_b);

    // sqrt(cov_a) via eigendecomposition of the symmetric matrix
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(cov_a);
    Eigen::VectorXd ev = es_a.eigenvalues();
    for (int i = 0; i < d; ++i) {
        if (ev[i] < -1e-8) throw std::runtime_error("frechet: covariance not PSD");
        ev[i] = std::sqrt(std::max(0.0, ev[i]));
    }
    Eigen::MatrixXd sqrt_a = es_a.eigenvectors() * ev.asDiagonal() * es_a.eigenvectors().transpose();

    Eigen::MatrixXd m = sqrt_a * cov_b * sqrt_a;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(m);
    double tr_sqrt = 0;
    for (int i = 0; i < d; ++i) {
        double l = es_m.eigenvalues()[i];
        if (l < -1e-8) throw std::runtime_error("frechet: product matrix not PSD");
        tr_sqrt += std::sqrt(std::max(0.0, l));
    }
    double d2 = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, d2);
}

double frechet_stats_distance(const std::vector<Tensor>& images_a,
                              const std::vector<Tensor>& images_b, bool shrinkage) {
    std::vector<Tensor> fa, fb;
    fa.reserve(images_a.size());
    fb.reserve(images_b.size());
    for (const auto& im : images_a) fa.push_back(image_features(im));
    for (const auto& im : images_b) fb.push_back(image_features(im));
    return frechet_from_features(fa, fb, shrinkage);
}

}  // namespace dimba
