#include <doctest.h>

#include <cmath>
#include <set>

#include "dimba/evalsuite.hpp"

using namespace dimba;

TEST_SUITE("evalsuite") {

TEST_CASE("verifier is self-consistent on rendered scenes at side 64") {
    int checked = 0;
    for (int k = 0; k < 40; ++k) {
        Rng rng = Rng::derive(31, static_cast<std::uint64_t>(k));
        SceneSpec sc = sample_scene(rng);
        // skip scenes with duplicate colors: component merging across equal
        // colors is out of the verifier's contract
        std::set<int> colors;
        bool dup = false;
        for (const auto& o : sc.objects) dup |= !colors.insert(o.color).second;
        if (dup) continue;
        Tensor img = render(sc, 64);
        VerifyResult r = verify(img, sc);
        CHECK(r.color);
        CHECK(r.shape);
        if (sc.objects.size() >= 2) CHECK(r.spatial);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("wrong color and centroid swap are caught") {
    SceneSpec sc;
    sc.objects = {{Shape::square, 0, 5, 1}, {Shape::circle, 3, 10, 1}};
    Tensor img = render(sc, 64);
    SceneSpec wrong_color = sc;
    wrong_color.objects[0].color = 6;
    CHECK_FALSE(verify(img, wrong_color).color);

    SceneSpec swapped = sc;
    std::swap(swapped.objects[0].cell, swapped.objects[1].cell);
    CHECK_FALSE(verify(render(swapped, 64), sc).spatial);
}

TEST_CASE("shape is judged independently of color") {
    // a red circle against a "blue circle" claim: color fails, shape passes
    SceneSpec sc;
    sc.objects = {{Shape::circle, 0, 5, 1}};
    Tensor img = render(sc, 64);
    SceneSpec claim = sc;
    claim.objects[0].color = 1;
    VerifyResult r = verify(img, claim);
    CHECK_FALSE(r.color);
    CHECK(r.shape);
}

TEST_CASE("spurious small components do not spoil the color check") {
    SceneSpec sc;
    sc.objects = {{Shape::square, 2, 5, 1}};
    Tensor img = render(sc, 64);
    // paint an extra off-spec blob much smaller than the object
    for (int y = 1; y < 7; ++y)
        for (int x = 58; x < 63; ++x) {
            std::size_t i = static_cast<std::size_t>(y) * 64 + x;
            img[i] = kPalette[6].r / 255.0;
            img[64 * 64 + i] = kPalette[6].g / 255.0;
            img[2 * 64 * 64 + i] = kPalette[6].b / 255.0;
        }
    VerifyResult r = verify(img, sc);
    CHECK(r.color);
    CHECK(r.shape);
}

TEST_CASE("wrong shape is caught") {
    SceneSpec sc;
    sc.objects = {{Shape::square, 2, 5, 1}};
    Tensor img = render(sc, 64);
    SceneSpec claim_circle = sc;
    claim_circle.objects[0].shape = Shape::circle;
    CHECK(verify(img, sc).shape);
    CHECK_FALSE(verify(img, claim_circle).shape);
}

TEST_CASE("blank image fails every category") {
    SceneSpec claim;
    claim.objects = {{Shape::circle, 1, 4, 1}};
    SceneSpec blank;
    Tensor img = render(blank, 64);
    VerifyResult r = verify(img, claim);
    CHECK_FALSE(r.color);
    CHECK_FALSE(r.shape);
}

TEST_CASE("prompt set composition: single-object short vs two-object long") {
    auto prompts = make_prompt_set(10, 3);
    REQUIRE(prompts.size() == 30);
    int n_color = 0, n_shape = 0, n_spatial = 0;
    for (const auto& p : prompts) {
        switch (p.category) {
            case EvalCategory::color:
                ++n_color;
                CHECK(p.spec.objects.size() == 1);
                break;
            case EvalCategory::shape:
                ++n_shape;
                CHECK(p.spec.objects.size() == 1);
                break;
            case EvalCategory::spatial:
                ++n_spatial;
                REQUIRE(p.spec.objects.size() == 2);
                CHECK(p.spec.objects[0].color != p.spec.objects[1].color);
                break;
        }
        CHECK_FALSE(p.caption.empty());
    }
    CHECK(n_color == 10);
    CHECK(n_shape == 10);
    CHECK(n_spatial == 10);
    // deterministic in the seed
    auto again = make_prompt_set(10, 3);
    for (std::size_t i = 0; i < prompts.size(); ++i) CHECK(prompts[i].caption == again[i].caption);
}

TEST_CASE("category score confidence intervals") {
    CategoryScore s;
    s.correct = 50;
    s.total = 200;
    // normal-approx binomial: 0.25 +/- 1.96*sqrt(p(1-p)/n)
    double half = 1.96 * std::sqrt(0.25 * 0.75 / 200.0);
    CompbenchReport r;
    r.color = s;
    (void)r;
    // composite averages the three categories
    CompbenchReport rep;
    rep.color.acc = 0.3;
    rep.color.total = 10;
    rep.shape.acc = 0.6;
    rep.shape.total = 10;
    rep.spatial.acc = 0.9;
    rep.spatial.total = 10;
    CHECK(composite_score(rep) == doctest::Approx(0.6).epsilon(1e-12));
    // categories with no prompts are excluded from the average
    rep.spatial.total = 0;
    CHECK(composite_score(rep) == doctest::Approx(0.45).epsilon(1e-12));
    (void)half;
}

TEST_CASE("image features have the documented dimension and react to content") {
    SceneSpec a, b;
    a.objects = {{Shape::square, 0, 5, 1}};
    b.objects = {{Shape::circle, 4, 9, 0}};
    Tensor fa = image_features(render(a, 32));
    Tensor fb = image_features(render(b, 32));
    REQUIRE(static_cast<int>(fa.numel()) == kFeatureDim);
    double diff = 0;
    for (std::size_t i = 0; i < fa.numel(); ++i) diff += std::abs(fa[i] - fb[i]);
    CHECK(diff > 1e-6);
}

TEST_CASE("frechet: zero on identical sets, symmetric") {
    Rng rng(7);
    std::vector<Tensor> a, b;
    for (int i = 0; i < 32; ++i) {
        Tensor f({kFeatureDim});
        rng.fill_normal(f);
        a.push_back(f);
        Tensor g({kFeatureDim});
        rng.fill_normal(g);
        g[0] += 2.0;
        b.push_back(g);
    }
    CHECK(frechet_from_features(a, a) == doctest::Approx(0.0).epsilon(1e-9));
    double ab = frechet_from_features(a, b);
    double ba = frechet_from_features(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-9));
    CHECK(ab > 0);
}

TEST_CASE("frechet matches the closed-form diagonal-Gaussian oracle within 2%") {
    // populations from N(mu_i, diag(v_i)); closed form:
    // |mu1-mu2|^2 + sum (sqrt(v1) - sqrt(v2))^2
    const int n = 20000;
    std::vector<double> mu1{0, 1, -1, 0.5, 2, -0.3}, v1{1, 0.5, 2, 1, 0.7, 1.2};
    std::vector<double> mu2{0.4, 0.2, -1, 1.5, 2, 0.1}, v2{0.6, 0.5, 1, 2, 0.7, 0.9};
    Rng rng(13);
    std::vector<Tensor> a, b;
    for (int i = 0; i < n; ++i) {
        Tensor f({kFeatureDim}), g({kFeatureDim});
        for (int d = 0; d < kFeatureDim; ++d) {
            f[d] = mu1[static_cast<std::size_t>(d)] +
                   std::sqrt(v1[static_cast<std::size_t>(d)]) * rng.normal();
            g[d] = mu2[static_cast<std::size_t>(d)] +
                   std::sqrt(v2[static_cast<std::size_t>(d)]) * rng.normal();
        }
        a.push_back(f);
        b.push_back(g);
    }
    double oracle = 0;
    for (int d = 0; d < kFeatureDim; ++d) {
        double dm = mu1[static_cast<std::size_t>(d)] - mu2[static_cast<std::size_t>(d)];
        double ds = std::sqrt(v1[static_cast<std::size_t>(d)]) -
                    std::sqrt(v2[static_cast<std::size_t>(d)]);
        oracle += dm * dm + ds * ds;
    }
    CHECK(frechet_from_features(a, b) == doctest::Approx(oracle).epsilon(0.02));
}

TEST_CASE("frechet sample-size guard suggests shrinkage") {
    std::vector<Tensor> tiny;
    for (int i = 0; i < 3; ++i) {
        Tensor f({kFeatureDim});
        f[0] = i;
        tiny.push_back(f);
    }
    CHECK_THROWS_AS(frechet_from_features(tiny, tiny), std::invalid_argument);
}

}  // TEST_SUITE
