#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "shiftmmd/errors.hpp"
#include "shiftmmd/models.hpp"

using namespace shiftmmd;

namespace {

Matrix logistic_noise_for_u(int rows, int cols, double u) {
    Matrix m(rows, cols);
    const double v = std::log(u) - std::log1p(-u);
    m.fill(v);
    return m;
}

void set_all_params(Mlp& net, double value) {
    for (Variable* p : net.params()) p->value.fill(value);
}

} // namespace

TEST_CASE("init is deterministic under seed and sensitive to it") {
    MlpSpec spec{4, {8, 8}, 1};
    Mlp a = Mlp::init(spec, 7);
    Mlp b = Mlp::init(spec, 7);
    Mlp c = Mlp::init(spec, 8);
    auto pa = a.params(), pb = b.params(), pc = c.params();
    bool all_equal = true, any_diff = false;
    for (std::size_t k = 0; k < pa.size(); ++k) {
        if (!(pa[k]->value == pb[k]->value)) all_equal = false;
        if (!(pa[k]->value == pc[k]->value)) any_diff = true;
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("parameter count matches the layer-size formula") {
    Mlp net = Mlp::init(MlpSpec{2, {16, 16, 16}, 1}, 0);
    CHECK(net.param_count() == 609);
}

TEST_CASE("biases start at zero and weights within the glorot bound") {
    MlpSpec spec{3, {5}, 2};
    Mlp net = Mlp::init(spec, 123);
    auto params = net.params();
    // layer 0: weights 3x5, bias 1x5; layer 1: weights 5x2, bias 1x2
    const double bound0 = std::sqrt(6.0 / (3 + 5));
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 5; ++j) {
            CHECK(std::fabs(params[0]->value(i, j)) <= bound0);
        }
    }
    CHECK(params[1]->value == Matrix(1, 5));
    CHECK(params[3]->value == Matrix(1, 2));
}

TEST_CASE("zero parameters map everything to zero") {
    Mlp net = Mlp::init(MlpSpec{3, {4, 4}, 1}, 1);
    set_all_params(net, 0.0);
    Matrix x(5, 3, 1.7);
    CHECK(net.embed(x) == Matrix(5, 4));
    CHECK(net.predict(x) == Matrix(5, 1));
}

TEST_CASE("identity-weight single hidden layer reproduces relu") {
    Mlp net = Mlp::init(MlpSpec{2, {2}, 1}, 1);
    auto params = net.params();
    params[0]->value = Matrix(2, 2);
    params[0]->value(0, 0) = 1.0;
    params[0]->value(1, 1) = 1.0;
    params[1]->value = Matrix(1, 2);
    Matrix x(2, 2);
    x(0, 0) = -1.5;
    x(0, 1) = 2.0;
    x(1, 0) = 0.5;
    x(1, 1) = -3.0;
    Matrix emb = net.embed(x);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            CHECK(emb(i, j) == std::max(0.0, x(i, j)));
        }
    }
}

TEST_CASE("forward shapes and tape/plain agreement") {
    Mlp net = Mlp::init(MlpSpec{4, {6, 5}, 1}, 3);
    Matrix x(7, 4, 0.3);
    Matrix plain = net.predict(x);
    CHECK(plain.rows() == 7);
    CHECK(plain.cols() == 1);
    CHECK(net.embed(x).cols() == 5);

    Tape tape;
    std::vector<Tensor> hidden;
    Tensor out = net.forward(tape, tape.constant_view(x), &hidden);
    CHECK(hidden.size() == 2);
    CHECK(hidden[0].cols() == 6);
    CHECK(out.value() == plain);
    CHECK(net.embed(x) == hidden[1].value());
}

TEST_CASE("gradient check through extractor plus head") {
    Mlp net = Mlp::init(MlpSpec{3, {4}, 1}, 9);
    Matrix x(6, 3);
    Rng rng(15);
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
    }
    double err = gradient_check(
        [&](Tape& t, Tensor v) { return t.mean_all(t.square(net.forward(t, v))); }, x, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("masker output shape and zero-parameter logits") {
    const int d = 3;
    Mlp masker = Mlp::init(MlpSpec{2 * d, {8, 8}, d}, 5);
    Matrix xi(10, 2 * d, 0.4);
    CHECK(masker.predict(xi).rows() == 10);
    CHECK(masker.predict(xi).cols() == d);

    set_all_params(masker, 0.0);
    Matrix logits = masker.predict(xi);
    CHECK(logits == Matrix(10, d));

    // Zero logit and centered noise (u = 0.5) give mask probability 1/2.
    Tape tape;
    Tensor m = relaxed_mask_from_noise(tape, tape.constant_view(logits),
                                       logistic_noise_for_u(10, d, 0.5), 0.1);
    CHECK(m.value()(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("relaxed mask hand values") {
    Tape tape;
    Matrix logit(1, 1, 1.0);
    Tensor m = relaxed_mask_from_noise(tape, tape.constant_view(logit),
                                       logistic_noise_for_u(1, 1, 0.5), 0.1);
    const double expected = 1.0 / (1.0 + std::exp(-10.0));
    CHECK(m.value()(0, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(m.value()(0, 0) == doctest::Approx(0.99995).epsilon(1e-4));
}

TEST_CASE("relaxed mask stays strictly inside (0,1) and sharpens as tau drops") {
    Rng rng(77);
    Matrix logits(50, 4);
    for (int i = 0; i < 50; ++i) {
        for (int j = 0; j < 4; ++j) logits(i, j) = rng.uniform(-3.0, 3.0);
    }
    Tape tape;
    Tensor m = sample_relaxed_mask(tape, tape.constant_view(logits), 0.1, rng);
    for (int i = 0; i < 50; ++i) {
        for (int j = 0; j < 4; ++j) {
            CHECK(m.value()(i, j) > 0.0);
            CHECK(m.value()(i, j) < 1.0);
        }
    }

    Matrix one(1, 1, 1.0);
    Tensor sharp = relaxed_mask_from_noise(tape, tape.constant_view(one),
                                           logistic_noise_for_u(1, 1, 0.3), 1e-4);
    const double v = sharp.value()(0, 0);
    CHECK(std::fabs(v - std::round(v)) < 1e-3);
}

TEST_CASE("relaxed mask empirical mean at logit zero") {
    Rng rng(101);
    const int draws = 100000;
    Matrix logits(draws, 1, 0.0);
    Tape tape;
    Tensor m = sample_relaxed_mask(tape, tape.constant_view(logits), 0.1, rng);
    double mean = 0.0;
    for (int i = 0; i < draws; ++i) mean += m.value()(i, 0);
    mean /= draws;
    CHECK(std::fabs(mean - 0.5) < 0.01);
}

TEST_CASE("relaxed mask rejects nonpositive tau") {
    Tape tape;
    Matrix logits(1, 1, 0.0);
    Rng rng(1);
    CHECK_THROWS_AS(sample_relaxed_mask(tape, tape.constant_view(logits), 0.0, rng), ArgumentError);
}

TEST_CASE("gradient flows through the relaxed mask at fixed noise") {
    Rng rng(31);
    Matrix logits(5, 3);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 3; ++j) logits(i, j) = rng.uniform(-1.0, 1.0);
    }
    Matrix noise = sample_logistic_noise(5, 3, rng);
    double err = gradient_check(
        [&](Tape& t, Tensor v) {
            return t.mean_all(t.square(relaxed_mask_from_noise(t, v, noise, 0.5)));
        },
        logits, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("apply_mask identity, full mask, and missingness preservation") {
    Matrix x(2, 2);
    x(0, 0) = 1.0;
    x(0, 1) = 2.0;
    x(1, 0) = 3.0;
    x(1, 1) = 4.0;
    Matrix ind(2, 2);
    std::vector<double> impute{-1.0, -2.0};

    MaskedDataset none = apply_mask(x, ind, Matrix(2, 2, 0.0), impute, false);
    CHECK(none.features_prime == x);
    CHECK(none.indicator_hat == Matrix(2, 2));

    MaskedDataset full = apply_mask(x, ind, Matrix(2, 2, 1.0), impute, false);
    CHECK(full.indicator_hat == Matrix(2, 2, 1.0));
    CHECK(full.features_prime(0, 0) == -1.0);
    CHECK(full.features_prime(1, 1) == -2.0);

    Matrix pre(2, 2);
    pre(0, 0) = 1.0;   // originally missing
    MaskedDataset kept = apply_mask(x, pre, Matrix(2, 2, 0.2), impute, false);
    CHECK(kept.indicator_hat(0, 0) == 1.0);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            CHECK(kept.indicator_hat(i, j) >= pre(i, j));
        }
    }
}

TEST_CASE("hard masking is idempotent") {
    Matrix x(3, 2);
    x(0, 0) = 5.0;
    x(1, 1) = -2.0;
    x(2, 0) = 0.5;
    Matrix ind(3, 2);
    ind(1, 0) = 1.0;
    Matrix m(3, 2);
    m(0, 0) = 0.8;
    m(2, 1) = 0.4;
    std::vector<double> impute{0.25, 0.75};

    MaskedDataset first = apply_mask(x, ind, m, impute, true);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) {
            const double v = first.indicator_hat(i, j);
            CHECK((v == 0.0 || v == 1.0));
            if (v == 1.0) CHECK(first.features_prime(i, j) == impute[static_cast<std::size_t>(j)]);
        }
    }
    MaskedDataset second = apply_mask(first.features_prime, first.indicator_hat,
                                      first.indicator_hat, impute, true);
    CHECK(second.features_prime == first.features_prime);
    CHECK(second.indicator_hat == first.indicator_hat);
}

TEST_CASE("soft tape masking agrees with the plain version") {
    Rng rng(41);
    Matrix x(6, 3), ind(6, 3), m(6, 3);
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 3; ++j) {
            x(i, j) = rng.uniform(-2.0, 2.0);
            ind(i, j) = rng.uniform() < 0.3 ? 1.0 : 0.0;
            m(i, j) = rng.uniform();
        }
    }
    std::vector<double> impute{0.1, 0.2, 0.3};
    MaskedDataset plain = apply_mask(x, ind, m, impute, false);

    Tape tape;
    MaskedTensors soft = apply_mask_soft(tape, tape.constant_view(x), tape.constant_view(ind),
                                         tape.constant_view(m), impute);
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(soft.indicator_hat.value()(i, j) ==
                  doctest::Approx(plain.indicator_hat(i, j)).epsilon(1e-15));
            CHECK(soft.features_prime.value()(i, j) ==
                  doctest::Approx(plain.features_prime(i, j)).epsilon(1e-15));
        }
    }
}

TEST_CASE("tau annealing endpoints and midpoint") {
    MaskerConfig cfg;
    CHECK(anneal_tau(cfg, 0, 101) == doctest::Approx(0.1));
    CHECK(anneal_tau(cfg, 100, 101) == doctest::Approx(0.01));
    CHECK(anneal_tau(cfg, 50, 101) == doctest::Approx(std::sqrt(0.1 * 0.01)).epsilon(1e-12));
    CHECK(anneal_tau(cfg, 0, 1) == doctest::Approx(0.1));

    MaskerConfig bad;
    bad.tau_end = 0.2;
    CHECK_THROWS_AS(anneal_tau(bad, 0, 10), ArgumentError);
}
