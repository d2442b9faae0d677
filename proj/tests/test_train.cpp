#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "shiftmmd/errors.hpp"
#include "shiftmmd/metrics.hpp"
#include "shiftmmd/train.hpp"

using namespace shiftmmd;

namespace {

Dataset constant_target_toy(int n, double c, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.features = Matrix(n, 2);
    d.indicators = Matrix(n, 2);
    d.target.assign(static_cast<std::size_t>(n), c);
    for (int i = 0; i < n; ++i) {
        d.features(i, 0) = rng.uniform(-1.0, 1.0);
        d.features(i, 1) = rng.uniform(-1.0, 1.0);
    }
    d.meta = {{"a", FeatureKind::numeric, 0.0}, {"b", FeatureKind::numeric, 0.0}};
    return d;
}

// y = 2 x0 - x1 + 3, noiseless.
Dataset linear_toy(int n, std::uint64_t seed) {
    Dataset d = constant_target_toy(n, 0.0, seed);
    for (int i = 0; i < n; ++i) {
        d.target[static_cast<std::size_t>(i)] = 2.0 * d.features(i, 0) - d.features(i, 1) + 3.0;
    }
    return d;
}

TrainingConfig small_config(int epochs, std::uint64_t seed) {
    TrainingConfig cfg;
    cfg.epochs = epochs;
    cfg.hidden_sizes = {8, 8};
    cfg.masker_hidden = {8, 8};
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("baseline fits a constant target") {
    Dataset train = constant_target_toy(100, 3.0, 1);
    TrainingConfig cfg = small_config(500, 2);
    cfg.learning_rate = 0.003;   // low enough that RMSProp settles instead of orbiting
    TrainedModel model = train_baseline(train, cfg);
    CHECK(model.loss_trace.size() == 500);
    CHECK(model.loss_trace.back() < 1e-3);
    CHECK(mse(model.predict(train), train.target) < 1e-3);
}

TEST_CASE("zero epochs is an argument error") {
    Dataset train = constant_target_toy(20, 1.0, 1);
    TrainingConfig cfg = small_config(0, 1);
    CHECK_THROWS_AS(train_baseline(train, cfg), ArgumentError);
}

TEST_CASE("same seed reproduces the loss trace exactly") {
    Dataset train = linear_toy(60, 3);
    TrainingConfig cfg = small_config(80, 7);
    TrainedModel a = train_baseline(train, cfg);
    TrainedModel b = train_baseline(train, cfg);
    CHECK(a.loss_trace == b.loss_trace);

    TrainingConfig other = cfg;
    other.seed = 8;
    TrainedModel c = train_baseline(train, other);
    CHECK(a.loss_trace != c.loss_trace);
}

TEST_CASE("baseline loss on a noiseless linear toy is eventually nonincreasing") {
    Dataset train = linear_toy(120, 5);
    TrainingConfig cfg = small_config(400, 9);
    cfg.learning_rate = 0.003;
    TrainedModel model = train_baseline(train, cfg);
    for (std::size_t e = 51; e < model.loss_trace.size(); ++e) {
        CHECK(model.loss_trace[e] <= model.loss_trace[e - 1] + 1e-9);
    }
}

TEST_CASE("lambda = 0 representation run reproduces the baseline trace") {
    Dataset train = linear_toy(80, 11);
    Dataset test = linear_toy(40, 12);
    TrainingConfig cfg = small_config(60, 13);
    cfg.lambda = 0.0;

    TrainedModel base = train_baseline(train, cfg);
    TrainedModel repr = train_mmd_repr(train, test, cfg);
    TrainedModel dan = train_dan(train, test, cfg);
    TrainedModel jan = train_jan(train, test, cfg);
    for (std::size_t e = 0; e < base.loss_trace.size(); ++e) {
        CHECK(std::fabs(base.loss_trace[e] - repr.loss_trace[e]) <= 1e-12);
        CHECK(std::fabs(base.loss_trace[e] - dan.loss_trace[e]) <= 1e-12);
        CHECK(std::fabs(base.loss_trace[e] - jan.loss_trace[e]) <= 1e-12);
    }
}

TEST_CASE("uniform weights reproduce the baseline trace") {
    Dataset train = linear_toy(70, 17);
    TrainingConfig cfg = small_config(60, 19);
    TrainedModel base = train_baseline(train, cfg);
    TrainedModel weighted =
        train_weighted(train, std::vector<double>(70, 1.0), cfg);
    CHECK(base.loss_trace == weighted.loss_trace);
}

TEST_CASE("zero-weight samples contribute nothing") {
    Dataset train = linear_toy(50, 23);
    std::vector<double> weights(50, 1.0);
    weights[7] = 0.0;

    TrainingConfig cfg = small_config(40, 29);
    TrainedModel a = train_weighted(train, weights, cfg);

    Dataset corrupted = train;
    corrupted.target[7] = 1e6;   // only visible through its weight
    TrainedModel b = train_weighted(corrupted, weights, cfg);
    CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("negative weights are rejected") {
    Dataset train = linear_toy(10, 31);
    TrainingConfig cfg = small_config(5, 1);
    CHECK_THROWS_AS(train_weighted(train, std::vector<double>(10, -1.0), cfg), ArgumentError);
}

TEST_CASE("dan with a single matched layer equals mmd_repr step for step") {
    Dataset train = linear_toy(50, 37);
    Dataset test = linear_toy(50, 38);
    TrainingConfig cfg = small_config(40, 39);
    cfg.lambda = 2.0;
    cfg.mmd_batch = 16;
    cfg.mmd_layers = 1;
    TrainedModel repr = train_mmd_repr(train, test, cfg);
    TrainedModel dan = train_dan(train, test, cfg);
    CHECK(repr.loss_trace == dan.loss_trace);
    CHECK(repr.mmd_trace == dan.mmd_trace);
}

TEST_CASE("dan and jan require enough hidden layers") {
    Dataset train = linear_toy(30, 41);
    Dataset test = linear_toy(30, 42);
    TrainingConfig cfg = small_config(5, 43);
    cfg.hidden_sizes = {8};
    cfg.mmd_layers = 2;
    CHECK_THROWS_AS(train_dan(train, test, cfg), ConfigError);
    CHECK_THROWS_AS(train_jan(train, test, cfg), ConfigError);
}

TEST_CASE("representation mmd pressure drives embeddings together") {
    // Same marginal task, shifted test inputs.
    Dataset train = linear_toy(60, 47);
    Dataset test = linear_toy(60, 48);
    for (int i = 0; i < test.n(); ++i) test.features(i, 0) += 2.0;

    TrainingConfig cfg = small_config(150, 49);
    cfg.mmd_batch = 32;

    cfg.lambda = 0.0;
    TrainedModel plain = train_mmd_repr(train, test, cfg);
    cfg.lambda = 10.0;
    TrainedModel pulled = train_mmd_repr(train, test, cfg);

    KernelSpec spec;
    const double gap_plain = mmd2_biased_value(plain.embed(train), plain.embed(test), spec);
    const double gap_pulled = mmd2_biased_value(pulled.embed(train), pulled.embed(test), spec);
    CHECK(gap_pulled < gap_plain);
}

TEST_CASE("hybrid with frozen zero mask and lambda 0 equals the baseline") {
    Dataset train = linear_toy(60, 53);
    Dataset test = linear_toy(30, 54);
    TrainingConfig cfg = small_config(50, 55);
    cfg.lambda = 0.0;
    cfg.freeze_masker_zero = true;
    TrainedModel hybrid = train_mmd_hybrid(train, test, cfg);
    TrainedModel base = train_baseline(train, cfg);
    CHECK(hybrid.loss_trace == base.loss_trace);
}

TEST_CASE("masker learns to mask a feature that is fully missing in test") {
    Rng rng(61);
    const int n = 120;
    Dataset train;
    train.features = Matrix(n, 2);
    train.indicators = Matrix(n, 2);
    train.target.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        train.features(i, 0) = rng.uniform(-1.0, 1.0);
        train.features(i, 1) = rng.uniform(-1.0, 1.0);
        train.target[static_cast<std::size_t>(i)] = train.features(i, 0);
    }
    train.meta = {{"a", FeatureKind::numeric, 0.0}, {"b", FeatureKind::numeric, 0.0}};

    Dataset test = train;
    for (int i = 0; i < n; ++i) {
        test.features(i, 0) = 0.0;      // imputed
        test.indicators(i, 0) = 1.0;    // feature 0 always missing
    }

    TrainingConfig cfg = small_config(400, 63);
    cfg.masker_hidden = {16, 16};
    cfg.mmd_batch = 40;
    MaskTrainResult result = train_mmd_mask(train, test, cfg);

    CHECK(result.masker_model.loss_trace.size() == 400);
    // Joint MMD fell during training.
    CHECK(result.masker_model.loss_trace.back() < result.masker_model.loss_trace.front());

    int masked0 = 0, masked1 = 0;
    for (int i = 0; i < n; ++i) {
        if (result.masked.indicator_hat(i, 0) == 1.0) ++masked0;
        if (result.masked.indicator_hat(i, 1) == 1.0) ++masked1;
        CHECK(result.masked.indicator_hat(i, 0) >= train.indicators(i, 0));
        if (result.masked.indicator_hat(i, 0) == 1.0) {
            CHECK(result.masked.features_prime(i, 0) == 0.0);
        }
    }
    CHECK(masked0 > static_cast<int>(0.9 * n));
    CHECK(masked1 < masked0);
}

TEST_CASE("masker drifts toward no masking when test matches train") {
    Dataset train = linear_toy(100, 67);
    Dataset test = train;
    TrainingConfig cfg = small_config(400, 69);
    cfg.mmd_batch = 40;
    MaskTrainResult result = train_mmd_mask(train, test, cfg);
    CHECK(result.masker_model.loss_trace.back() < result.masker_model.loss_trace.front());
    int masked = 0;
    for (int i = 0; i < train.n(); ++i) {
        for (int j = 0; j < 2; ++j) {
            if (result.masked.indicator_hat(i, j) == 1.0) ++masked;
        }
    }
    CHECK(masked < train.n());   // well under half of all entries
}

TEST_CASE("masked training set multiplicity") {
    Dataset train = linear_toy(40, 71);
    Dataset test = train;
    TrainingConfig cfg = small_config(20, 73);
    cfg.mmd_batch = 20;
    MaskTrainResult result = train_mmd_mask(train, test, cfg);

    Mlp& masker = *result.masker_model.bundle.masker;
    Dataset once = build_masked_training_set(masker, train, 0.01, 5, 1, false);
    CHECK(once.n() == 40);
    Dataset many = build_masked_training_set(masker, train, 0.01, 5, 3, true);
    CHECK(many.n() == 160);
    for (int i = 0; i < 40; ++i) {
        CHECK(many.target[static_cast<std::size_t>(120 + i)] ==
              train.target[static_cast<std::size_t>(i)]);
        CHECK(many.features(120 + i, 0) == train.features(i, 0));
    }
}

TEST_CASE("hybrid trains and reduces test error on a masked-feature shift") {
    // Feature 0 explains y but is missing at test time; feature 1 is a noisy
    // copy that survives. The hybrid should lean on feature 1.
    Rng rng(79);
    const int n = 150;
    Dataset train;
    train.features = Matrix(n, 2);
    train.indicators = Matrix(n, 2);
    train.target.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(-1.5, 1.5);
        train.features(i, 0) = t;
        train.features(i, 1) = t + rng.normal(0.0, 0.2);
        train.target[static_cast<std::size_t>(i)] = t;
    }
    train.meta = {{"a", FeatureKind::numeric, 0.0}, {"b", FeatureKind::numeric, 0.0}};
    Dataset test = train;
    for (int i = 0; i < n; ++i) {
        test.features(i, 0) = 0.0;
        test.indicators(i, 0) = 1.0;
    }

    TrainingConfig cfg = small_config(400, 83);
    cfg.mmd_batch = 40;
    cfg.lambda = 1.0;
    TrainedModel hybrid = train_mmd_hybrid(train, test, cfg);
    TrainedModel base = train_baseline(train, cfg);
    const double hybrid_mse = mse(hybrid.predict(test), test.target);
    const double base_mse = mse(base.predict(test), test.target);
    CHECK(hybrid_mse < base_mse);
    for (double v : hybrid.loss_trace) CHECK(std::isfinite(v));
}

TEST_CASE("hybrid updates both the masker and the predictor") {
    Dataset train = linear_toy(50, 301);
    Dataset test = train;
    for (int i = 0; i < test.n(); ++i) {
        test.features(i, 0) = 0.0;
        test.indicators(i, 0) = 1.0;
    }
    TrainingConfig cfg = small_config(15, 303);
    cfg.mmd_batch = 20;
    cfg.lambda = 1.0;

    TrainingConfig one_epoch = cfg;
    one_epoch.epochs = 1;
    TrainedModel early = train_mmd_hybrid(train, test, one_epoch);
    TrainedModel late = train_mmd_hybrid(train, test, cfg);
    REQUIRE(early.bundle.masker.has_value());
    REQUIRE(late.bundle.masker.has_value());
    CHECK(!(late.bundle.masker->layer_weight(0) == early.bundle.masker->layer_weight(0)));
    CHECK(!(late.bundle.predictor.layer_weight(0) == early.bundle.predictor.layer_weight(0)));
}

TEST_CASE("binary classification path trains with finite losses") {
    Rng rng(89);
    const int n = 120;
    Dataset train;
    train.features = Matrix(n, 2);
    train.indicators = Matrix(n, 2);
    train.target.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double a = rng.uniform(-1.0, 1.0);
        const double b = rng.uniform(-1.0, 1.0);
        train.features(i, 0) = a;
        train.features(i, 1) = b;
        train.target[static_cast<std::size_t>(i)] = a + b > 0.0 ? 1.0 : 0.0;
    }
    train.meta = {{"a", FeatureKind::numeric, 0.0}, {"b", FeatureKind::numeric, 0.0}};

    TrainingConfig cfg = small_config(200, 91);
    cfg.task = Task::binary_classification;
    TrainedModel model = train_baseline(train, cfg);
    CHECK(model.loss_trace.back() < model.loss_trace.front());
    CHECK(std::isfinite(model.loss_trace.back()));

    // Raw logits separate the classes.
    std::vector<double> scores = model.predict(train);
    CHECK(auc(scores, train.target) > 0.9);
}

TEST_CASE("mini-batch training visits every row") {
    Dataset train = linear_toy(33, 97);
    TrainingConfig cfg = small_config(30, 99);
    cfg.batch_size = 10;   // 4 batches, last partial
    TrainedModel model = train_baseline(train, cfg);
    CHECK(model.loss_trace.size() == 30);
    CHECK(model.loss_trace.back() < model.loss_trace.front());
}

TEST_CASE("probe lambda returns a positive magnitude ratio") {
    Dataset train = linear_toy(60, 101);
    Dataset test = linear_toy(60, 102);
    for (int i = 0; i < test.n(); ++i) test.features(i, 0) += 1.0;
    TrainingConfig cfg = small_config(60, 103);
    cfg.method = Method::mmd_repr;
    cfg.mmd_batch = 24;
    const double lam = probe_lambda(train, test, cfg);
    CHECK(lam > 0.0);
    CHECK(std::isfinite(lam));
}
