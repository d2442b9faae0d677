#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "shiftmmd/datasets.hpp"
#include "shiftmmd/errors.hpp"

using namespace shiftmmd;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content)
        : path("/tmp/shiftmmd_test_" + name) {
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

const char* kSchemaText =
    "target = cnt\n"
    "target_transform = log1p\n"
    "date_column = dteday\n"
    "train_range = 2011-03..2011-11\n"
    "test_range = 2011-12..2012-03\n"
    "[columns]\n"
    "mnth = ordinal\n"
    "temp = numeric\n"
    "weather = onehot\n";

} // namespace

TEST_CASE("synthetic generator shapes, determinism, and shift fractions") {
    SyntheticConfig cfg;
    cfg.n_train = 5000;
    cfg.seed = 4;
    SyntheticData data = generate_synthetic(cfg);

    CHECK(data.train.n() == 5000);
    CHECK(data.train.dim() == 2);
    CHECK(data.test.n() == 5000);
    CHECK(data.test.dim() == 2);
    CHECK(data.train.indicators == Matrix(5000, 2));
    CHECK(data.golden.size() == 5000);

    // Masked fraction tracks the uniform-latent share of [-3.5, 0]
    // within the [-4.5, 4.5] latent range.
    int masked = 0;
    for (int i = 0; i < data.test.n(); ++i) {
        if (data.test.indicators(i, 0) == 1.0) ++masked;
    }
    CHECK(std::fabs(masked / 5000.0 - 3.5 / 9.0) < 0.03);

    // Golden predictions equal the targets: y is deterministic in the latent.
    for (int i = 0; i < 100; ++i) {
        CHECK(data.golden[static_cast<std::size_t>(i)] ==
              doctest::Approx(data.test.target[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }

    SyntheticData again = generate_synthetic(cfg);
    CHECK(again.train.features == data.train.features);
    CHECK(again.test.features == data.test.features);
}

TEST_CASE("synthetic test rows are resampled train rows with shifts applied") {
    SyntheticConfig cfg;
    cfg.n_train = 400;
    cfg.seed = 9;
    SyntheticData data = generate_synthetic(cfg);

    std::set<std::pair<double, double>> train_rows;
    for (int i = 0; i < data.train.n(); ++i) {
        train_rows.insert({data.train.features(i, 0), data.train.features(i, 1)});
    }
    for (int i = 0; i < data.test.n(); ++i) {
        std::pair<double, double> clean{data.test_clean_features(i, 0),
                                        data.test_clean_features(i, 1)};
        CHECK(train_rows.count(clean) == 1);

        const double x1_clean = clean.first;
        if (x1_clean >= -3.5 && x1_clean <= 0.0) {
            CHECK(data.test.indicators(i, 0) == 1.0);
            CHECK(data.test.features(i, 0) ==
                  doctest::Approx(data.train.meta[0].impute_value).epsilon(1e-15));
        } else if (x1_clean > 0.0 && x1_clean <= 3.5) {
            CHECK(data.test.indicators(i, 0) == 0.0);
            // Shift is roughly N(1, 0.1): stays well under 2 units.
            CHECK(data.test.features(i, 0) < x1_clean);
            CHECK(std::fabs(x1_clean - data.test.features(i, 0) - 1.0) < 1.0);
        } else {
            CHECK(data.test.features(i, 0) == x1_clean);
        }
        CHECK(data.test.features(i, 1) == clean.second);
    }
}

TEST_CASE("synthetic config validation") {
    SyntheticConfig bad;
    bad.noise_x1_sd = 0.0;
    CHECK_THROWS_AS(generate_synthetic(bad), ConfigError);
}

TEST_CASE("schema parsing") {
    TempFile schema_file("schema.ini", kSchemaText);
    TableSchema schema = load_schema(schema_file.path);
    CHECK(schema.target_column == "cnt");
    CHECK(schema.target_transform == TargetTransform::log1p);
    CHECK(schema.feature_columns.size() == 3);
    CHECK(schema.feature_columns[0].kind == FeatureKind::ordinal);
    CHECK(schema.feature_columns[2].kind == FeatureKind::onehot);
    CHECK(schema.is_missing_cell(""));
    CHECK(schema.is_missing_cell("NA"));
}

TEST_CASE("csv loading: header only, missing cells, malformed rows") {
    TempFile schema_file("schema2.ini", kSchemaText);
    TableSchema schema = load_schema(schema_file.path);

    TempFile empty("empty.csv", "dteday,mnth,temp,weather,cnt\n");
    RawTable t0 = load_csv(empty.path, schema);
    CHECK(t0.rows.empty());

    TempFile good("good.csv",
                  "dteday,mnth,temp,weather,cnt\n"
                  "2011-03-01,3,0.3,clear,120\n"
                  "2011-04-02,4,,rain,80\n");
    RawTable t1 = load_csv(good.path, schema);
    CHECK(t1.rows.size() == 2);
    CHECK(schema.is_missing_cell(t1.rows[1][2]));

    TempFile bad("bad.csv",
                 "dteday,mnth,temp,weather,cnt\n"
                 "2011-03-01,3,0.3,clear\n");
    CHECK_THROWS_WITH_AS(load_csv(bad.path, schema),
                         doctest::Contains(":2"), IoError);

    TempFile missing_col("missing_col.csv", "dteday,mnth,temp,cnt\n");
    CHECK_THROWS_AS(load_csv(missing_col.path, schema), SchemaError);
}

TEST_CASE("date filtering keeps inclusive month ranges") {
    TempFile schema_file("schema3.ini", kSchemaText);
    TableSchema schema = load_schema(schema_file.path);
    TempFile csv("dates.csv",
                 "dteday,mnth,temp,weather,cnt\n"
                 "2011-02-28,2,0.1,clear,5\n"
                 "2011-03-01,3,0.2,clear,10\n"
                 "2011-11-30,11,0.3,rain,20\n"
                 "2011-12-01,12,0.4,rain,30\n"
                 "2012-03-31,3,0.5,snow,40\n"
                 "2012-04-01,4,0.6,snow,50\n");
    RawTable table = load_csv(csv.path, schema);
    CHECK(filter_by_month_range(table, schema, schema.train_range).rows.size() == 2);
    CHECK(filter_by_month_range(table, schema, schema.test_range).rows.size() == 2);
}

TEST_CASE("preprocessing: imputation, indicators, ordinal unseen, one-hot") {
    TempFile schema_file("schema4.ini", kSchemaText);
    TableSchema schema = load_schema(schema_file.path);
    TempFile train_csv("train.csv",
                       "dteday,mnth,temp,weather,cnt\n"
                       "2011-03-01,3,1,clear,10\n"
                       "2011-04-01,4,,rain,20\n"
                       "2011-05-01,5,3,clear,30\n");
    RawTable train = load_csv(train_csv.path, schema);
    PreprocessSpec spec = fit_preprocess(train, schema);
    Dataset train_ds = transform(train, spec);

    // numeric [1, missing, 3] -> mean 2 with indicators [0,1,0]
    const int temp_col = 1;
    CHECK(train_ds.features(0, temp_col) == 1.0);
    CHECK(train_ds.features(1, temp_col) == 2.0);
    CHECK(train_ds.indicators(1, temp_col) == 1.0);
    CHECK(train_ds.indicators(0, temp_col) == 0.0);
    CHECK(train_ds.meta[temp_col].impute_value == 2.0);

    // one-hot expands sorted categories; dims: mnth, temp, weather=clear, weather=rain
    CHECK(train_ds.dim() == 4);
    CHECK(train_ds.meta[2].name == "weather=clear");
    CHECK(train_ds.features(0, 2) == 1.0);
    CHECK(train_ds.features(1, 3) == 1.0);

    // log1p target
    CHECK(train_ds.target[0] == doctest::Approx(std::log1p(10.0)));

    TempFile test_csv("test.csv",
                      "dteday,mnth,temp,weather,cnt\n"
                      "2011-12-01,12,2,fog,40\n");
    RawTable test = load_csv(test_csv.path, schema);
    Dataset test_ds = transform(test, spec);
    // Unseen ordinal month 12 becomes missing and takes the train mean (4).
    CHECK(test_ds.indicators(0, 0) == 1.0);
    CHECK(test_ds.features(0, 0) == doctest::Approx(4.0));
    // Unseen one-hot category: all-zero row, group indicators set.
    CHECK(test_ds.features(0, 2) == 0.0);
    CHECK(test_ds.features(0, 3) == 0.0);
    CHECK(test_ds.indicators(0, 2) == 1.0);
    CHECK(test_ds.indicators(0, 3) == 1.0);
}

TEST_CASE("transform rejects tables that do not match the fitted layout") {
    TempFile schema_file("schema5.ini", kSchemaText);
    TableSchema schema = load_schema(schema_file.path);
    TempFile train_csv("train5.csv",
                       "dteday,mnth,temp,weather,cnt\n"
                       "2011-03-01,3,1,clear,10\n");
    RawTable train = load_csv(train_csv.path, schema);
    PreprocessSpec spec = fit_preprocess(train, schema);

    RawTable reshaped;
    reshaped.columns = {"mnth", "temp"};
    reshaped.rows = {{"3", "1"}};
    CHECK_THROWS_AS(transform(reshaped, spec), SchemaError);

    RawTable empty_table;
    empty_table.columns = train.columns;
    CHECK_THROWS_AS(fit_preprocess(empty_table, schema), ArgumentError);
}

TEST_CASE("fitting ignores test rows: spec is unchanged by transforming test data") {
    TempFile schema_file("schema6.ini", kSchemaText);
    TableSchema schema = load_schema(schema_file.path);
    TempFile train_csv("train6.csv",
                       "dteday,mnth,temp,weather,cnt\n"
                       "2011-03-01,3,1,clear,10\n"
                       "2011-04-01,4,3,rain,20\n");
    RawTable train = load_csv(train_csv.path, schema);
    PreprocessSpec spec = fit_preprocess(train, schema);
    const double mean_before = spec.columns[1].mean;

    TempFile test_csv("test6.csv",
                      "dteday,mnth,temp,weather,cnt\n"
                      "2011-12-01,12,100,fog,40\n");
    transform(load_csv(test_csv.path, schema), spec);
    CHECK(spec.columns[1].mean == mean_before);
}

TEST_CASE("train/val split is a deterministic partition") {
    SyntheticConfig cfg;
    cfg.n_train = 100;
    cfg.seed = 2;
    Dataset train = generate_synthetic(cfg).train;

    auto [a, b] = split_train_val(train, 0.75, 5);
    CHECK(a.n() == 75);
    CHECK(b.n() == 25);

    auto [a2, b2] = split_train_val(train, 0.75, 5);
    CHECK(a.features == a2.features);
    CHECK(b.features == b2.features);

    std::multiset<double> original, recombined;
    for (int i = 0; i < train.n(); ++i) original.insert(train.features(i, 0));
    for (int i = 0; i < a.n(); ++i) recombined.insert(a.features(i, 0));
    for (int i = 0; i < b.n(); ++i) recombined.insert(b.features(i, 0));
    CHECK(original == recombined);

    CHECK_THROWS_AS(split_train_val(train, 1.5, 1), ArgumentError);
}

TEST_CASE("target transform inversion") {
    std::vector<double> y{0.0, 1.0, 2.0};
    auto back = invert_target_transform(y, TargetTransform::log1p);
    CHECK(back[0] == doctest::Approx(0.0));
    CHECK(back[1] == doctest::Approx(std::expm1(1.0)));
    CHECK(invert_target_transform(y, TargetTransform::none) == y);
}

TEST_CASE("model inputs append indicators") {
    SyntheticConfig cfg;
    cfg.n_train = 10;
    SyntheticData data = generate_synthetic(cfg);
    Matrix inputs = model_inputs(data.test);
    CHECK(inputs.cols() == 4);
    CHECK(inputs(0, 0) == data.test.features(0, 0));
    CHECK(inputs(0, 2) == data.test.indicators(0, 0));
}
