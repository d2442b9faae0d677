#include "shiftmmd/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "shiftmmd/errors.hpp"
#include "shiftmmd/rng.hpp"

namespace shiftmmd {

std::vector<double> Dataset::impute_vector() const {
    std::vector<double> v;
    v.reserve(meta.size());
    for (const auto& m : meta) v.push_back(m.impute_value);
    return v;
}

std::vector<std::string> Dataset::feature_names() const {
    std::vector<std::string> v;
    v.reserve(meta.size());
    for (const auto& m : meta) v.push_back(m.name);
    return v;
}

void SyntheticConfig::validate() const {
    if (n_train < 1) throw ConfigError("synthetic: n_train must be >= 1");
    if (!(noise_x1_sd > 0.0) || !(noise_x2_sd > 0.0) || !(shift_sd > 0.0)) {
        throw ConfigError("synthetic: noise standard deviations must be positive");
    }
    if (!(curvature > 0.0)) throw ConfigError("synthetic: curvature must be positive");
    if (missing_lo > missing_hi || shift_lo > shift_hi || latent_lo >= latent_hi) {
        throw ConfigError("synthetic: shift or latent ranges are inverted");
    }
    if (slope * latent_lo + intercept <= 0.0 || slope * latent_hi + intercept <= 0.0) {
        throw ConfigError("synthetic: y must stay positive over the latent range");
    }
}

SyntheticData generate_synthetic(const SyntheticConfig& config) {
    config.validate();
    const int n = config.n_train;

    Rng latent_rng(Rng::derive(config.seed, 11));
    Rng resample_rng(Rng::derive(config.seed, 12));
    Rng shift_rng(Rng::derive(config.seed, 13));

    Matrix train_x(n, 2);
    std::vector<double> train_y(n);
    std::vector<double> latent(n);
    for (int i = 0; i < n; ++i) {
        const double t = latent_rng.uniform(config.latent_lo, config.latent_hi);
        const double y = config.slope * t + config.intercept;
        const double x1 = t + latent_rng.normal(0.0, config.noise_x1_sd);
        const double sign = latent_rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double x2 = sign * std::sqrt(y / config.curvature) +
                          latent_rng.normal(0.0, config.noise_x2_sd);
        latent[i] = t;
        train_x(i, 0) = x1;
        train_x(i, 1) = x2;
        train_y[i] = y;
    }

    double mean_x1 = 0.0, mean_x2 = 0.0;
    for (int i = 0; i < n; ++i) {
        mean_x1 += train_x(i, 0);
        mean_x2 += train_x(i, 1);
    }
    mean_x1 /= n;
    mean_x2 /= n;

    SyntheticData out;
    out.train.features = train_x;
    out.train.indicators = Matrix(n, 2);
    out.train.target = train_y;
    out.train.meta = {{"X1", FeatureKind::numeric, mean_x1},
                      {"X2", FeatureKind::numeric, mean_x2}};

    out.test.features = Matrix(n, 2);
    out.test.indicators = Matrix(n, 2);
    out.test.target.resize(n);
    out.test.meta = out.train.meta;
    out.golden.resize(n);
    out.test_clean_features = Matrix(n, 2);

    for (int i = 0; i < n; ++i) {
        const int src = static_cast<int>(resample_rng.below(static_cast<std::uint64_t>(n)));
        double x1 = train_x(src, 0);
        const double x2 = train_x(src, 1);
        out.test_clean_features(i, 0) = x1;
        out.test_clean_features(i, 1) = x2;
        out.test.target[i] = train_y[src];
        // y is a deterministic function of the latent draw, so the golden
        // prediction is the target itself.
        out.golden[i] = config.slope * latent[src] + config.intercept;

        if (x1 >= config.missing_lo && x1 <= config.missing_hi) {
            out.test.indicators(i, 0) = 1.0;
            x1 = mean_x1;
        } else if (x1 > config.shift_lo && x1 <= config.shift_hi) {
            x1 -= shift_rng.normal(config.shift_mean, config.shift_sd);
        }
        out.test.features(i, 0) = x1;
        out.test.features(i, 1) = x2;
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

bool TableSchema::is_missing_cell(const std::string& cell) const {
    for (const auto& s : missing_sentinels) {
        if (cell == s) return true;
    }
    return false;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return std::nullopt;
    return v;
}

FeatureKind parse_kind(const std::string& s) {
    if (s == "numeric") return FeatureKind::numeric;
    if (s == "ordinal") return FeatureKind::ordinal;
    if (s == "onehot") return FeatureKind::onehot;
    throw SchemaError("unknown column kind: " + s);
}

} // namespace

TableSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schema file: " + path);
    TableSchema schema;
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = t.substr(1, t.size() - 2);
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw SchemaError(path + ":" + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (section == "columns") {
            schema.feature_columns.push_back({key, parse_kind(value)});
        } else if (key == "target") {
            schema.target_column = value;
        } else if (key == "target_transform") {
            if (value == "none") schema.target_transform = TargetTransform::none;
            else if (value == "log1p") schema.target_transform = TargetTransform::log1p;
            else throw SchemaError("unknown target_transform: " + value);
        } else if (key == "date_column") {
            schema.date_column = value;
        } else if (key == "train_range") {
            schema.train_range = value;
        } else if (key == "test_range") {
            schema.test_range = value;
        } else if (key == "missing_sentinels") {
            schema.missing_sentinels.clear();
            schema.missing_sentinels.push_back("");
            std::stringstream ss(value);
            std::string tok;
            while (std::getline(ss, tok, ',')) schema.missing_sentinels.push_back(trim(tok));
        } else {
            throw SchemaError(path + ":" + std::to_string(line_no) + ": unknown schema key " + key);
        }
    }
    if (schema.feature_columns.empty()) throw SchemaError("schema declares no feature columns");
    return schema;
}

int RawTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return static_cast<int>(i);
    }
    return -1;
}

RawTable load_csv(const std::string& path, const TableSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open csv file: " + path);
    RawTable table;
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty csv file: " + path);
    for (auto& c : split_csv_line(line)) table.columns.push_back(trim(c));

    for (const auto& col : schema.feature_columns) {
        if (table.column_index(col.name) < 0) {
            throw SchemaError("csv is missing schema column: " + col.name);
        }
    }
    if (!schema.target_column.empty() && table.column_index(schema.target_column) < 0) {
        throw SchemaError("csv is missing target column: " + schema.target_column);
    }
    if (!schema.date_column.empty() && table.column_index(schema.date_column) < 0) {
        throw SchemaError("csv is missing date column: " + schema.date_column);
    }

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() && in.eof()) break;
        auto cells = split_csv_line(line);
        if (cells.size() != table.columns.size()) {
            throw IoError(path + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(table.columns.size()) + " fields, got " +
                          std::to_string(cells.size()));
        }
        for (auto& c : cells) c = trim(c);
        table.rows.push_back(std::move(cells));
    }
    return table;
}

RawTable filter_by_month_range(const RawTable& table, const TableSchema& schema,
                               const std::string& range) {
    auto sep = range.find("..");
    if (sep == std::string::npos) throw SchemaError("date range must look like YYYY-MM..YYYY-MM");
    const std::string lo = range.substr(0, sep);
    const std::string hi = range.substr(sep + 2);
    const int date_col = table.column_index(schema.date_column);
    if (date_col < 0) throw SchemaError("table has no date column " + schema.date_column);

    RawTable out;
    out.columns = table.columns;
    for (const auto& row : table.rows) {
        const std::string month = row[static_cast<std::size_t>(date_col)].substr(0, 7);
        if (month >= lo && month <= hi) out.rows.push_back(row);
    }
    return out;
}

PreprocessSpec fit_preprocess(const RawTable& train, const TableSchema& schema) {
    if (train.rows.empty()) throw ArgumentError("fit_preprocess on an empty table");
    PreprocessSpec spec;
    spec.raw_columns = train.columns;
    spec.target_transform = schema.target_transform;
    spec.missing_sentinels = schema.missing_sentinels;
    if (!schema.target_column.empty()) {
        spec.target_raw_index = train.column_index(schema.target_column);
    }

    for (const auto& col : schema.feature_columns) {
        PreprocessSpec::Column c;
        c.spec = col;
        c.raw_index = train.column_index(col.name);
        if (c.raw_index < 0) throw SchemaError("training table lacks column " + col.name);

        if (col.kind == FeatureKind::onehot) {
            for (const auto& row : train.rows) {
                const std::string& cell = row[static_cast<std::size_t>(c.raw_index)];
                if (schema.is_missing_cell(cell)) continue;
                if (std::find(c.categories.begin(), c.categories.end(), cell) == c.categories.end()) {
                    c.categories.push_back(cell);
                }
            }
            std::sort(c.categories.begin(), c.categories.end());
            if (c.categories.empty()) {
                throw SchemaError("one-hot column " + col.name + " has no observed categories");
            }
        } else {
            double sum = 0.0;
            int observed = 0;
            for (const auto& row : train.rows) {
                const std::string& cell = row[static_cast<std::size_t>(c.raw_index)];
                if (schema.is_missing_cell(cell)) continue;
                double v;
                if (col.kind == FeatureKind::ordinal) {
                    // Numeric-looking categories keep their numeric value so
                    // natural order survives; otherwise rank by sorted name.
                    auto parsed = parse_double(cell);
                    if (parsed) {
                        c.ordinal_map[cell] = *parsed;
                    } else {
                        c.ordinal_map.emplace(cell, 0.0);
                    }
                    continue;
                }
                auto parsed = parse_double(cell);
                if (!parsed) {
                    throw SchemaError("numeric column " + col.name + " has non-numeric cell '" +
                                      cell + "'");
                }
                v = *parsed;
                sum += v;
                ++observed;
            }
            if (col.kind == FeatureKind::ordinal) {
                double rank = 0.0;
                for (auto& [key, value] : c.ordinal_map) {
                    if (!parse_double(key)) value = rank;
                    rank += 1.0;
                }
                double osum = 0.0;
                int ocount = 0;
                for (const auto& row : train.rows) {
                    const std::string& cell = row[static_cast<std::size_t>(c.raw_index)];
                    auto it = schema.is_missing_cell(cell) ? c.ordinal_map.end()
                                                           : c.ordinal_map.find(cell);
                    if (it != c.ordinal_map.end()) {
                        osum += it->second;
                        ++ocount;
                    }
                }
                if (ocount == 0) throw SchemaError("ordinal column " + col.name + " fully missing");
                c.mean = osum / ocount;
            } else {
                if (observed == 0) throw SchemaError("numeric column " + col.name + " fully missing");
                c.mean = sum / observed;
            }
        }
        spec.columns.push_back(std::move(c));
    }
    return spec;
}

Dataset transform(const RawTable& table, const PreprocessSpec& spec) {
    if (table.columns != spec.raw_columns) {
        throw SchemaError("table layout does not match the fitted preprocessing spec");
    }
    auto is_missing = [&](const std::string& cell) {
        for (const auto& s : spec.missing_sentinels) {
            if (cell == s) return true;
        }
        return false;
    };

    int out_dim = 0;
    for (const auto& c : spec.columns) {
        out_dim += c.spec.kind == FeatureKind::onehot ? static_cast<int>(c.categories.size()) : 1;
    }
    const int n = static_cast<int>(table.rows.size());
    Dataset out;
    out.features = Matrix(n, out_dim);
    out.indicators = Matrix(n, out_dim);
    out.target_transform = spec.target_transform;

    for (const auto& c : spec.columns) {
        if (c.spec.kind == FeatureKind::onehot) {
            for (const auto& cat : c.categories) {
                out.meta.push_back({c.spec.name + "=" + cat, FeatureKind::onehot, 0.0});
            }
        } else {
            out.meta.push_back({c.spec.name, c.spec.kind, c.mean});
        }
    }

    for (int i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        int j = 0;
        for (const auto& c : spec.columns) {
            const std::string& cell = row[static_cast<std::size_t>(c.raw_index)];
            const bool missing = is_missing(cell);
            if (c.spec.kind == FeatureKind::onehot) {
                const auto hit = missing ? c.categories.end()
                                         : std::find(c.categories.begin(), c.categories.end(), cell);
                for (std::size_t k = 0; k < c.categories.size(); ++k) {
                    const bool absent = hit == c.categories.end();
                    out.features(i, j + static_cast<int>(k)) =
                        (!absent && c.categories[k] == cell) ? 1.0 : 0.0;
                    out.indicators(i, j + static_cast<int>(k)) = absent ? 1.0 : 0.0;
                }
                j += static_cast<int>(c.categories.size());
            } else if (c.spec.kind == FeatureKind::ordinal) {
                auto it = missing ? c.ordinal_map.end() : c.ordinal_map.find(cell);
                if (it == c.ordinal_map.end()) {
                    out.features(i, j) = c.mean;
                    out.indicators(i, j) = 1.0;
                } else {
                    out.features(i, j) = it->second;
                }
                ++j;
            } else {
                if (missing) {
                    out.features(i, j) = c.mean;
                    out.indicators(i, j) = 1.0;
                } else {
                    auto parsed = parse_double(cell);
                    if (!parsed) {
                        throw SchemaError("numeric column " + c.spec.name + " has non-numeric cell '" +
                                          cell + "'");
                    }
                    out.features(i, j) = *parsed;
                }
                ++j;
            }
        }
    }

    if (spec.target_raw_index >= 0) {
        out.target.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const std::string& cell = table.rows[static_cast<std::size_t>(i)]
                                               [static_cast<std::size_t>(spec.target_raw_index)];
            auto parsed = parse_double(cell);
            if (!parsed) throw SchemaError("target cell is not numeric: '" + cell + "'");
            double y = *parsed;
            if (spec.target_transform == TargetTransform::log1p) y = std::log1p(y);
            out.target[static_cast<std::size_t>(i)] = y;
        }
    }
    return out;
}

Dataset select_rows(const Dataset& data, const std::vector<int>& rows) {
    Dataset out;
    out.meta = data.meta;
    out.target_transform = data.target_transform;
    out.features = Matrix(static_cast<int>(rows.size()), data.dim());
    out.indicators = Matrix(static_cast<int>(rows.size()), data.dim());
    if (data.has_target()) out.target.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int src = rows[i];
        for (int j = 0; j < data.dim(); ++j) {
            out.features(static_cast<int>(i), j) = data.features(src, j);
            out.indicators(static_cast<int>(i), j) = data.indicators(src, j);
        }
        if (data.has_target()) out.target[i] = data.target[static_cast<std::size_t>(src)];
    }
    return out;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& data, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ArgumentError("split ratio must be in (0,1)");
    std::vector<int> idx(static_cast<std::size_t>(data.n()));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(Rng::derive(seed, 21));
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.below(i)]);
    }
    const int n_first = static_cast<int>(std::llround(ratio * data.n()));
    std::vector<int> first(idx.begin(), idx.begin() + n_first);
    std::vector<int> second(idx.begin() + n_first, idx.end());
    return {select_rows(data, first), select_rows(data, second)};
}

Standardizer fit_standardizer(const Dataset& train) {
    Standardizer s;
    const int n = train.n(), d = train.dim();
    if (n < 1) throw ArgumentError("fit_standardizer on an empty dataset");
    s.mean.assign(static_cast<std::size_t>(d), 0.0);
    s.scale.assign(static_cast<std::size_t>(d), 1.0);
    for (int j = 0; j < d; ++j) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i) sum += train.features(i, j);
        const double mean = sum / n;
        double ss = 0.0;
        for (int i = 0; i < n; ++i) {
            const double dlt = train.features(i, j) - mean;
            ss += dlt * dlt;
        }
        const double sd = std::sqrt(ss / n);
        s.mean[static_cast<std::size_t>(j)] = mean;
        s.scale[static_cast<std::size_t>(j)] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

void apply_standardizer(Dataset& data, const Standardizer& s) {
    if (static_cast<int>(s.mean.size()) != data.dim()) {
        throw ShapeError("standardizer does not match the dataset width");
    }
    for (int i = 0; i < data.n(); ++i) {
        for (int j = 0; j < data.dim(); ++j) {
            data.features(i, j) = (data.features(i, j) - s.mean[static_cast<std::size_t>(j)]) /
                                  s.scale[static_cast<std::size_t>(j)];
        }
    }
    for (int j = 0; j < data.dim(); ++j) {
        auto& meta = data.meta[static_cast<std::size_t>(j)];
        meta.impute_value = (meta.impute_value - s.mean[static_cast<std::size_t>(j)]) /
                            s.scale[static_cast<std::size_t>(j)];
    }
}

std::vector<double> invert_target_transform(const std::vector<double>& values, TargetTransform t) {
    if (t == TargetTransform::none) return values;
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::expm1(values[i]);
    return out;
}

Matrix model_inputs(const Dataset& data) {
    return hcat(data.features, data.indicators);
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (int j = 0; j < data.dim(); ++j) {
        out << data.meta[static_cast<std::size_t>(j)].name << ","
            << data.meta[static_cast<std::size_t>(j)].name << "_missing";
        if (j + 1 < data.dim() || data.has_target()) out << ",";
    }
    if (data.has_target()) out << "y";
    out << "\n";
    char buf[64];
    for (int i = 0; i < data.n(); ++i) {
        for (int j = 0; j < data.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", data.features(i, j));
            out << buf << "," << (data.indicators(i, j) != 0.0 ? 1 : 0);
            if (j + 1 < data.dim() || data.has_target()) out << ",";
        }
        if (data.has_target()) {
            std::snprintf(buf, sizeof(buf), "%.17g", data.target[static_cast<std::size_t>(i)]);
            out << buf;
        }
        out << "\n";
    }
}

} // namespace shiftmmd
