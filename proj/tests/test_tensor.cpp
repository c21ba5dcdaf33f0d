#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "recam/adamw.hpp"
#include "recam/errors.hpp"
#include "recam/ops.hpp"
#include "recam/tensor.hpp"
#include "test_support.hpp"

using namespace recam;
using test_support::random_tensor;

TEST_CASE("matmul identity and scalar cases") {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor out = matmul(eye, a);
    for (std::size_t i = 0; i < 4; ++i) CHECK(out.data()[i] == a.data()[i]);

    Tensor s = matmul(Tensor::from_data({1, 1}, {2}), Tensor::from_data({1, 1}, {3}));
    CHECK(s.item() == 6.0);
}

TEST_CASE("matmul matches a triple-loop oracle") {
    RandomSource rng(11);
    Tensor a = random_tensor({4, 5}, rng);
    Tensor b = random_tensor({5, 3}, rng);
    Tensor out = matmul(a, b);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double expect = 0.0;
            for (std::size_t k = 0; k < 5; ++k) {
                expect += a.at(i, k) * b.at(k, j);
            }
            CHECK(out.at(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), dimension_error);
    try {
        matmul(a, b);
    } catch (const dimension_error& e) {
        CHECK(std::string(e.what()).find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("softmax uniform and shift invariance") {
    Tensor x = Tensor::zeros({5});
    Tensor s = softmax(x, 0);
    for (double v : s.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));

    RandomSource rng(3);
    Tensor y = random_tensor({7}, rng);
    Tensor shifted = Tensor::zeros({7});
    for (std::size_t i = 0; i < 7; ++i) shifted.data()[i] = y.data()[i] + 13.5;
    Tensor sy = softmax(y, 0);
    Tensor ss = softmax(shifted, 0);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(sy.data()[i] == doctest::Approx(ss.data()[i]).epsilon(1e-9));
    }
}

TEST_CASE("softmax matches the exp/sum formula") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3});
    Tensor s = softmax(x, 0);
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(s.data()[i] == doctest::Approx(std::exp(x.data()[i]) / z).epsilon(1e-12));
    }
}

TEST_CASE("softmax sums to one along any axis and rejects bad axes") {
    RandomSource rng(4);
    Tensor x = random_tensor({3, 4, 2}, rng, 2.0);
    for (int axis = 0; axis < 3; ++axis) {
        Tensor s = softmax(x, axis);
        // Sum along the reduced axis must be 1 for every line.
        const auto& shape = x.shape();
        std::size_t outer = 1, inner = 1;
        for (int d = 0; d < axis; ++d) outer *= shape[static_cast<std::size_t>(d)];
        for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < 3; ++d) inner *= shape[d];
        const std::size_t len = shape[static_cast<std::size_t>(axis)];
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                double sum = 0.0;
                for (std::size_t t = 0; t < len; ++t) {
                    sum += s.data()[o * len * inner + t * inner + in];
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
            }
        }
    }
    CHECK_THROWS_AS(softmax(x, 3), dimension_error);
    CHECK_THROWS_AS(softmax(x, -1), dimension_error);
}

TEST_CASE("cross entropy anchors") {
    Tensor uniform = Tensor::zeros({5});
    for (int label = 0; label < 5; ++label) {
        CHECK(cross_entropy(uniform, label).item() ==
              doctest::Approx(std::log(5.0)).epsilon(1e-9));
    }

    Tensor sure = Tensor::from_data({5}, {100, 0, 0, 0, 0});
    CHECK(cross_entropy(sure, 0).item() == doctest::Approx(0.0).epsilon(1e-9));

    Tensor logits = Tensor::from_data({5}, {1, 2, 0.5, -1, 0});
    double z = 0.0;
    for (double v : logits.data()) z += std::exp(v);
    const double expect = -std::log(std::exp(2.0) / z);
    CHECK(cross_entropy(logits, 1).item() == doctest::Approx(expect).epsilon(1e-10));

    CHECK_THROWS_AS(cross_entropy(logits, 5), argument_error);
    CHECK_THROWS_AS(cross_entropy(logits, -1), argument_error);
}

TEST_CASE("dropout identity paths and statistics") {
    RandomSource rng(9);
    Tensor x = random_tensor({50}, rng);

    RandomSource r1(1);
    Tensor eval_out = dropout(x, 0.5, /*training=*/false, r1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(eval_out.data()[i] == x.data()[i]);

    Tensor zero_rate = dropout(x, 0.0, /*training=*/true, r1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(zero_rate.data()[i] == x.data()[i]);

    CHECK_THROWS_AS(dropout(x, 1.0, true, r1), argument_error);

    Tensor big = Tensor::full({100000}, 1.0);
    RandomSource r2(123);
    Tensor dropped = dropout(big, 0.5, /*training=*/true, r2);
    std::size_t zeros = 0;
    for (double v : dropped.data()) {
        if (v == 0.0) ++zeros;
        else CHECK(v == doctest::Approx(2.0));
    }
    const double frac = static_cast<double>(zeros) / 100000.0;
    CHECK(frac > 0.49);
    CHECK(frac < 0.51);
}

TEST_CASE("mean_pool against a loop oracle") {
    Tensor single = Tensor::from_data({1, 3}, {4, 5, 6});
    Tensor p1 = mean_pool(single, {1});
    CHECK(p1.data() == std::vector<double>{4, 5, 6});

    Tensor two = Tensor::from_data({2, 2}, {1, 1, 3, 3});
    Tensor p2 = mean_pool(two, {1, 1});
    CHECK(p2.data() == std::vector<double>{2, 2});

    RandomSource rng(21);
    Tensor x = random_tensor({7, 4}, rng);
    std::vector<std::uint8_t> valid = {1, 0, 1, 1, 0, 0, 1};
    Tensor pooled = mean_pool(x, valid);
    for (std::size_t j = 0; j < 4; ++j) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < 7; ++i) {
            if (valid[i]) {
                sum += x.at(i, j);
                ++count;
            }
        }
        CHECK(pooled.data()[j] == doctest::Approx(sum / count).epsilon(1e-12));
    }

    CHECK_THROWS_AS(mean_pool(x, std::vector<std::uint8_t>(7, 0)), degenerate_input_error);
}

TEST_CASE("backward: polynomial derivative") {
    Tensor x = Tensor::scalar(3.0, /*requires_grad=*/true);
    Tensor loss = mul(x, x);
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));

    CHECK_THROWS_AS(Tensor::zeros({2}).backward(), argument_error);
}

TEST_CASE("backward: softmax cross entropy closed form") {
    Tensor logits = Tensor::from_data({5}, {1, 2, 0.5, -1, 0}, /*requires_grad=*/true);
    const int label = 1;
    cross_entropy(logits, label).backward();
    Tensor sm = softmax(logits, 0);
    for (std::size_t i = 0; i < 5; ++i) {
        const double expect = sm.data()[i] - (i == label ? 1.0 : 0.0);
        CHECK(logits.grad()[i] == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("backward: gradient accumulation is additive") {
    Tensor x = Tensor::scalar(2.0, true);
    mul(x, x).backward();
    const double g1 = x.grad()[0];
    mul(x, x).backward();
    CHECK(x.grad()[0] == 2.0 * g1);

    // Repeated backward through the same recorded loss also adds.
    x.zero_grad();
    Tensor loss = mul(x, x);
    loss.backward();
    loss.backward();
    CHECK(x.grad()[0] == 2.0 * g1);
}

TEST_CASE("elementwise op gradients pass finite differences") {
    RandomSource rng(31);
    Tensor a = random_tensor({3, 4}, rng, 0.8, true);
    Tensor b = random_tensor({3, 4}, rng, 0.8, true);
    Tensor w = random_tensor({4, 2}, rng, 0.8, true);
    Tensor gain = Tensor::full({4}, 1.0, true);
    Tensor bias = Tensor::zeros({4}, true);

    auto forward = [&]() {
        Tensor h = layer_norm(add(gelu(mul(a, b)), a), gain, bias);
        Tensor y = matmul(h, w);
        Tensor pooled = mean_pool(y, {1, 1, 0});
        return dot(pooled, pooled);
    };
    forward().backward();
    auto report = test_support::finite_difference_check(
        {{"a", a}, {"b", b}, {"w", w}, {"gain", gain}, {"bias", bias}},
        [&]() { return forward().item(); });
    CHECK(report.max_rel_err <= 1e-4);
    CHECK(report.checked == 12 + 12 + 8 + 4 + 4);
}

TEST_CASE("fixed seed reproduces streams bit for bit") {
    RandomSource a(777), b(777);
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    RandomSource c(777);
    std::vector<double> first, second;
    for (int i = 0; i < 100; ++i) first.push_back(c.normal());
    c.restore_state(RandomSource(777).serialize_state());
    for (int i = 0; i < 100; ++i) second.push_back(c.normal());
    CHECK(first == second);
}

TEST_CASE("forward ops keep finite values finite") {
    RandomSource rng(5);
    Tensor x = random_tensor({6, 6}, rng, 50.0);
    CHECK(softmax(x, 1).all_finite());
    CHECK(gelu(x).all_finite());
    Tensor g = Tensor::full({6}, 1.0);
    Tensor b = Tensor::zeros({6});
    CHECK(layer_norm(x, g, b).all_finite());
}

TEST_CASE("adamw: pure decay shrinks by exactly (1 - lr*wd)") {
    Tensor w = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
    w.grad(); // allocate zero gradient
    AdamWConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.weight_decay = 0.01;
    AdamW opt({w}, cfg);
    opt.step();
    CHECK(w.data()[0] == 1.0 * (1.0 - 1e-6));
    CHECK(w.data()[1] == -2.0 * (1.0 - 1e-6));
    CHECK(w.data()[2] == 0.5 * (1.0 - 1e-6));
}

TEST_CASE("adamw: zero gradient and zero decay leaves params unchanged") {
    Tensor w = Tensor::from_data({2}, {0.7, -0.3}, true);
    w.grad();
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt({w}, cfg);
    opt.step();
    CHECK(w.data()[0] == 0.7);
    CHECK(w.data()[1] == -0.3);
}

TEST_CASE("adamw: one step on f(w)=w^2 matches the hand formula") {
    Tensor w = Tensor::scalar(1.0, true);
    mul(w, w).backward(); // gradient 2
    AdamWConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.weight_decay = 0.01;
    AdamW opt({w}, cfg);
    opt.step();

    const double g = 2.0;
    const double m = (1 - cfg.beta1) * g;
    const double v = (1 - cfg.beta2) * g * g;
    const double mhat = m / (1 - cfg.beta1);
    const double vhat = v / (1 - cfg.beta2);
    const double expect =
        1.0 - cfg.learning_rate * (mhat / (std::sqrt(vhat) + cfg.epsilon) + cfg.weight_decay * 1.0);
    CHECK(w.item() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adamw: two optimizers stepping identical setups agree bitwise") {
    auto run = [](std::uint64_t seed) {
        RandomSource rng(seed);
        Tensor w = random_tensor({8}, rng, 1.0, true);
        AdamW opt({w});
        for (int i = 0; i < 25; ++i) {
            Tensor target = Tensor::zeros({8});
            dot(sub(w, target), sub(w, target)).backward();
            opt.step();
            opt.zero_grad();
        }
        return w.data();
    };
    CHECK(run(42) == run(42));
}
