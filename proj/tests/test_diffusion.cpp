#include <doctest.h>

#include "dimba/diffusion.hpp"
#include "dimba/text.hpp"
#include "testutil.hpp"

using namespace dimba;
using testutil::random_tensor;

TEST_SUITE("diffusion") {

TEST_CASE("linear schedule endpoints and cumulative product") {
    NoiseSchedule s = make_schedule(1000);
    REQUIRE(s.T == 1000);
    CHECK(s.beta.front() == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(s.beta.back() == doctest::Approx(2e-2).epsilon(1e-12));
    // alpha_bar matches an independent loop oracle and decreases monotonically
    double prod = 1;
    for (int t = 0; t < s.T; ++t) {
        prod *= 1.0 - s.beta[t];
        CHECK(s.alpha_bar[t] == doctest::Approx(prod).epsilon(1e-12));
        if (t > 0) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    }
    CHECK_THROWS_AS(make_schedule(1), std::invalid_argument);
}

TEST_CASE("q_sample Monte-Carlo variance matches the closed form within 2%") {
    NoiseSchedule s = make_schedule(1000);
    Rng rng(3);
    int t = 400;
    const int n = 100000;
    Tensor x0({1, 1});
    double m1 = 0, m2 = 0;
    for (int i = 0; i < n; ++i) {
        x0[0] = rng.normal() * 1.5;  // var(x0) = 2.25
        Tensor eps({1, 1});
        eps[0] = rng.normal();
        Tensor xt = q_sample(x0, t, eps, s);
        m1 += xt[0];
        m2 += xt[0] * xt[0];
    }
    m1 /= n;
    double var = m2 / n - m1 * m1;
    double expect = s.alpha_bar[t] * 2.25 + (1.0 - s.alpha_bar[t]);
    CHECK(var == doctest::Approx(expect).epsilon(0.02));
}

TEST_CASE("cfg_combine algebra") {
    Tensor c({2, 1}, {1.0, -2.0}), u({2, 1}, {0.5, 0.5});
    Tensor w1 = cfg_combine(c, u, 1.0);
    for (std::size_t i = 0; i < 2; ++i) CHECK(w1[i] == c[i]);  // w = 1 -> conditional
    Tensor w0 = cfg_combine(c, u, 0.0);
    for (std::size_t i = 0; i < 2; ++i) CHECK(w0[i] == u[i]);  // w = 0 -> unconditional
    Tensor w45 = cfg_combine(c, u, 4.5);
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(w45[i] == doctest::Approx(u[i] + 4.5 * (c[i] - u[i])).epsilon(1e-13));
}

TEST_CASE("zero predictor loss is the variance of standard normal eps") {
    // With eps_hat = 0, MSE loss = E[eps^2] = 1.
    NoiseSchedule s = make_schedule(1000);
    Rng rng(7);
    double acc = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double e = rng.normal();
        acc += e * e;
    }
    CHECK(acc / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("dpm solver recovers an analytic Gaussian; error shrinks with steps") {
    // data x0 ~ N(mu, sigma^2) per pixel; exact posterior epsilon is linear in x
    const double mu = 0.7, sigma = 0.6;
    NoiseSchedule s = make_schedule(1000);
    auto eps_fn = [&](const Tensor& x, int t) {
        double ab = s.alpha_bar[t];
        Tensor e(x.shape());
        double denom = ab * sigma * sigma + (1.0 - ab);
        for (std::size_t i = 0; i < x.numel(); ++i)
            e[i] = (x[i] - std::sqrt(ab) * mu) * std::sqrt(1.0 - ab) / denom;
        return e;
    };
    auto run = [&](int steps) {
        double m1 = 0, m2 = 0;
        const int chains = 600, dim = 16;
        for (int k = 0; k < chains; ++k) {
            Rng rng = Rng::derive(42, static_cast<std::uint64_t>(k));
            Tensor x = dpm_solver_sample(eps_fn, {dim}, steps, s, rng);
            for (std::size_t i = 0; i < x.numel(); ++i) {
                m1 += x[i];
                m2 += x[i] * x[i];
            }
        }
        double n = 600.0 * 16;
        m1 /= n;
        double var = m2 / n - m1 * m1;
        return std::pair<double, double>(std::abs(m1 - mu), std::abs(var - sigma * sigma));
    };
    auto [e1m, e1v] = run(1);
    auto [e5m, e5v] = run(5);
    auto [e20m, e20v] = run(20);
    CHECK(e20m < mu * 0.05);                  // mean within 5%
    CHECK(e20v < sigma * sigma * 0.10);       // variance within 10%
    // the mean is matched almost exactly at every step count (the update is
    // linear in x), so convergence order shows up in the variance error
    CHECK(e5v < e1v);
    CHECK(e20v < e5v);
    CHECK(e1m < mu);  // even one step keeps the mean bounded
}

TEST_CASE("training loss is finite and decreasing-capable; p_uncond = 1 uses the null path") {
    ModelConfig c;
    c.n_blocks = 1;
    c.hidden = 16;
    c.d_text = 8;
    c.max_text_tokens = 8;
    c.n_heads = 4;
    Model m = build_model(c, 11);
    // nudge every parameter off the zero-gate initialization so conditioning
    // actually influences the output (and therefore receives gradient)
    {
        Rng nr(77);
        for (auto& p : m.params())
            for (std::size_t i = 0; i < p->value.numel(); ++i) p->value[i] += 0.05 * nr.normal();
    }
    NoiseSchedule s = make_schedule(1000);
    TextEncoder enc = TextEncoder::init(8, 8, 1234);
    Rng rng(3);
    Tensor x0({3, 16, 16});
    rng.fill_normal(x0, 0.5);
    auto cond = enc.condition("a blue square");
    Var l0 = training_loss(m, {x0}, {cond}, s, 0.0, rng);
    CHECK(l0->value.numel() == 1);
    CHECK(std::isfinite(l0->value[0]));
    // always-dropped conditioning still works (trains the null embedding)
    Var l1 = training_loss(m, {x0}, {cond}, s, 1.0, rng);
    CHECK(std::isfinite(l1->value[0]));
    backward(l1);
    double gnorm = 0;
    for (std::size_t i = 0; i < m.null_cond->grad.numel(); ++i)
        gnorm += std::abs(m.null_cond->grad[i]);
    CHECK(gnorm > 0);  // null embedding received gradient
}

TEST_CASE("sampler seed determinism") {
    ModelConfig c;
    c.n_blocks = 1;
    c.hidden = 16;
    c.d_text = 8;
    c.max_text_tokens = 8;
    c.n_heads = 4;
    Model m = build_model(c, 19);
    NoiseSchedule s = make_schedule(1000);
    TextEncoder enc = TextEncoder::init(8, 8, 1234);
    auto cond = enc.condition("a green triangle");
    Rng r1(5), r2(5), r3(6);
    Tensor a = sample_image(m, cond, s, 4, 4.5, r1);
    Tensor b = sample_image(m, cond, s, 4, 4.5, r2);
    Tensor d = sample_image(m, cond, s, 4, 4.5, r3);
    double diff_same = 0, diff_other = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        diff_same += std::abs(a[i] - b[i]);
        diff_other += std::abs(a[i] - d[i]);
    }
    CHECK(diff_same == 0.0);
    CHECK(diff_other > 0.0);
}

}  // TEST_SUITE
