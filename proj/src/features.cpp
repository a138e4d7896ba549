#include "features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"

namespace ecnet {

namespace {

// Absent service is encoded as the "-" token; it is frequent and informative
// in conn logs, so it gets a regular vocabulary slot rather than OOV.
std::optional<double> numeric_value(const FlowRecord& r, const std::string& col) {
    auto from_count = [](const std::optional<std::uint64_t>& v) -> std::optional<double> {
        if (!v) return std::nullopt;
        return static_cast<double>(*v);
    };
    auto from_port = [](const std::optional<int>& v) -> std::optional<double> {
        if (!v) return std::nullopt;
        return static_cast<double>(*v);
    };
    if (col == "duration") return r.duration;
    if (col == "orig_bytes") return from_count(r.orig_bytes);
    if (col == "resp_bytes") return from_count(r.resp_bytes);
    if (col == "orig_pkts") return from_count(r.orig_pkts);
    if (col == "resp_pkts") return from_count(r.resp_pkts);
    if (col == "orig_port") return from_port(r.orig_port);
    if (col == "resp_port") return from_port(r.resp_port);
    throw DataError("unknown numeric feature column '" + col + "'");
}

std::string categorical_value(const FlowRecord& r, const std::string& col) {
    if (col == "proto") return proto_name(r.proto);
    if (col == "service") return r.service ? *r.service : std::string("-");
    if (col == "conn_state") return r.conn_state;
    throw DataError("unknown categorical feature column '" + col + "'");
}

}  // namespace

std::size_t FeatureSchema::categorical_width() const {
    std::size_t w = 0;
    for (const auto& c : categorical) w += c.width();
    return w;
}

FeatureSchema fit_schema(const std::vector<FlowRecord>& train, const FeatureConfig& config) {
    if (train.empty()) throw DataError("fit_schema: empty training set");
    if (config.window < 1 || config.stride < 1)
        throw DataError("fit_schema: window and stride must be >= 1");

    FeatureSchema schema;
    schema.window = config.window;
    schema.stride = config.stride;

    for (const auto& col : config.numeric_cols) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& r : train) {
            if (auto v = numeric_value(r, col)) {
                sum += *v;
                ++n;
            }
        }
        NumericColumn nc;
        nc.name = col;
        if (n > 0) {
            nc.mean = sum / static_cast<double>(n);
            double ss = 0.0;
            for (const auto& r : train) {
                if (auto v = numeric_value(r, col)) {
                    const double d = *v - nc.mean;
                    ss += d * d;
                }
            }
            const double var = ss / static_cast<double>(n);  // population variance
            nc.sd = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        schema.numeric.push_back(std::move(nc));
    }

    for (const auto& col : config.categorical_cols) {
        std::map<std::string, std::size_t> counts;
        for (const auto& r : train) ++counts[categorical_value(r, col)];
        std::vector<std::pair<std::string, std::size_t>> order(counts.begin(), counts.end());
        std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        CategoricalColumn cc;
        cc.name = col;
        for (auto& [value, count] : order) cc.values.push_back(std::move(value));
        schema.categorical.push_back(std::move(cc));
    }
    return schema;
}

void encode_record(const FlowRecord& r, const FeatureSchema& schema, double* numeric_out,
                   double* categorical_out) {
    for (std::size_t i = 0; i < schema.numeric.size(); ++i) {
        const auto& col = schema.numeric[i];
        const auto v = numeric_value(r, col.name);
        numeric_out[i] = v ? (*v - col.mean) / col.sd : 0.0;
    }
    std::size_t offset = 0;
    for (const auto& col : schema.categorical) {
        for (std::size_t k = 0; k < col.width(); ++k) categorical_out[offset + k] = 0.0;
        const std::string value = categorical_value(r, col.name);
        std::size_t hot = 0;  // OOV
        for (std::size_t k = 0; k < col.values.size(); ++k) {
            if (col.values[k] == value) {
                hot = k + 1;
                break;
            }
        }
        categorical_out[offset + hot] = 1.0;
        offset += col.width();
    }
}

std::pair<Matrix, Matrix> encode_record(const FlowRecord& r, const FeatureSchema& schema) {
    Matrix numeric(1, schema.numeric_width());
    Matrix categorical(1, schema.categorical_width());
    encode_record(r, schema, numeric.data(), categorical.data());
    return {std::move(numeric), std::move(categorical)};
}

std::vector<SequenceSample> make_sequences(const std::vector<FlowRecord>& records,
                                           const FeatureSchema& schema,
                                           const LabelVocab& vocab) {
    const std::size_t w = schema.window;
    const std::size_t stride = schema.stride;
    std::vector<SequenceSample> samples;
    if (records.size() < w) return samples;

    // encode once, window by row copies
    const std::size_t d_num = schema.numeric_width();
    const std::size_t d_cat = schema.categorical_width();
    Matrix all_num(records.size(), d_num);
    Matrix all_cat(records.size(), d_cat);
    for (std::size_t i = 0; i < records.size(); ++i)
        encode_record(records[i], schema, all_num.row_ptr(i), all_cat.row_ptr(i));

    for (std::size_t start = 0; start + w <= records.size(); start += stride) {
        SequenceSample s;
        s.numeric = Matrix(w, d_num);
        s.categorical = Matrix(w, d_cat);
        for (std::size_t t = 0; t < w; ++t) {
            std::copy_n(all_num.row_ptr(start + t), d_num, s.numeric.row_ptr(t));
            std::copy_n(all_cat.row_ptr(start + t), d_cat, s.categorical.row_ptr(t));
        }
        s.target = vocab.id_of(records[start + w - 1].label);
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<SequenceBatch> batch(const std::vector<SequenceSample>& samples,
                                 std::size_t batch_size, std::uint64_t seed, bool shuffle) {
    if (batch_size < 1) throw DataError("batch: batch_size must be >= 1");
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (shuffle) {
        Rng rng(seed);
        rng.shuffle(order);
    }

    std::vector<SequenceBatch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t b = std::min(batch_size, order.size() - start);
        const std::size_t w = samples[order[start]].numeric.rows();
        SequenceBatch sb;
        sb.window = w;
        sb.numeric = Matrix(b * w, samples[order[start]].numeric.cols());
        sb.categorical = Matrix(b * w, samples[order[start]].categorical.cols());
        for (std::size_t k = 0; k < b; ++k) {
            const SequenceSample& s = samples[order[start + k]];
            if (s.numeric.rows() != w)
                throw ShapeError("batch: mixed window lengths");
            for (std::size_t t = 0; t < w; ++t) {
                std::copy_n(s.numeric.row_ptr(t), s.numeric.cols(),
                            sb.numeric.row_ptr(k * w + t));
                std::copy_n(s.categorical.row_ptr(t), s.categorical.cols(),
                            sb.categorical.row_ptr(k * w + t));
            }
            sb.targets.push_back(s.target);
        }
        batches.push_back(std::move(sb));
    }
    return batches;
}

std::string schema_to_json(const FeatureSchema& schema) {
    nlohmann::json j;
    j["version"] = 1;
    j["window"] = schema.window;
    j["stride"] = schema.stride;
    j["numeric"] = nlohmann::json::array();
    for (const auto& c : schema.numeric)
        j["numeric"].push_back({{"name", c.name}, {"mean", c.mean}, {"sd", c.sd}});
    j["categorical"] = nlohmann::json::array();
    for (const auto& c : schema.categorical)
        j["categorical"].push_back({{"name", c.name}, {"values", c.values}});
    return j.dump(2) + "\n";
}

FeatureSchema schema_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("schema: invalid JSON: ") + e.what());
    }
    if (j.value("version", 0) != 1) throw DataError("schema: unsupported version");
    FeatureSchema schema;
    schema.window = j.at("window").get<std::size_t>();
    schema.stride = j.at("stride").get<std::size_t>();
    for (const auto& c : j.at("numeric")) {
        NumericColumn nc;
        nc.name = c.at("name").get<std::string>();
        nc.mean = c.at("mean").get<double>();
        nc.sd = c.at("sd").get<double>();
        if (!(nc.sd > 0.0)) throw DataError("schema: non-positive sd for " + nc.name);
        schema.numeric.push_back(std::move(nc));
    }
    for (const auto& c : j.at("categorical")) {
        CategoricalColumn cc;
        cc.name = c.at("name").get<std::string>();
        cc.values = c.at("values").get<std::vector<std::string>>();
        schema.categorical.push_back(std::move(cc));
    }
    return schema;
}

}  // namespace ecnet
