#include "model.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ecnet {

const char* feature_mode_name(FeatureMode m) {
    return m == FeatureMode::separate ? "separate" : "merged";
}

FeatureMode feature_mode_from_string(const std::string& s) {
    if (s == "separate") return FeatureMode::separate;
    if (s == "merged") return FeatureMode::merged;
    throw std::invalid_argument("unknown feature mode '" + s + "'");
}

std::vector<std::string> config_violations(const ModelConfig& config) {
    std::vector<std::string> v;
    if (config.n_classes < 2) v.push_back("n_classes must be >= 2");
    if (config.hidden_numeric < 1) v.push_back("hidden_numeric must be >= 1");
    if (config.hidden_categorical < 1) v.push_back("hidden_categorical must be >= 1");
    if (config.use_attention) {
        if (config.d_k < 1) v.push_back("d_k must be >= 1");
        if (config.heads < 1) v.push_back("heads must be >= 1");
        else if (config.d_k % config.heads != 0)
            v.push_back("d_k must be divisible by heads");
    }
    for (std::size_t s : config.fc_sizes)
        if (s < 1) v.push_back("fc layer widths must be >= 1");
    return v;
}

std::string model_config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["cell_type"] = cell_type_name(c.cell_type);
    j["use_attention"] = c.use_attention;
    j["feature_mode"] = feature_mode_name(c.feature_mode);
    j["hidden_numeric"] = c.hidden_numeric;
    j["hidden_categorical"] = c.hidden_categorical;
    j["d_k"] = c.d_k;
    j["heads"] = c.heads;
    j["fc_sizes"] = c.fc_sizes;
    j["n_classes"] = c.n_classes;
    j["pooling"] = pooling_name(c.pooling);
    j["seed"] = c.seed;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("model config: invalid JSON: ") + e.what());
    }
    ModelConfig c;
    if (j.contains("cell_type")) c.cell_type = cell_type_from_string(j["cell_type"]);
    if (j.contains("use_attention")) c.use_attention = j["use_attention"].get<bool>();
    if (j.contains("feature_mode"))
        c.feature_mode = feature_mode_from_string(j["feature_mode"]);
    if (j.contains("hidden_numeric")) c.hidden_numeric = j["hidden_numeric"].get<std::size_t>();
    if (j.contains("hidden_categorical"))
        c.hidden_categorical = j["hidden_categorical"].get<std::size_t>();
    if (j.contains("d_k")) c.d_k = j["d_k"].get<std::size_t>();
    if (j.contains("heads")) c.heads = j["heads"].get<std::size_t>();
    if (j.contains("fc_sizes")) c.fc_sizes = j["fc_sizes"].get<std::vector<std::size_t>>();
    if (j.contains("n_classes")) c.n_classes = j["n_classes"].get<std::size_t>();
    if (j.contains("pooling")) c.pooling = pooling_from_string(j["pooling"]);
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    return c;
}

std::size_t EcNetModel::hidden_total() const {
    return config.hidden_numeric + config.hidden_categorical;
}

std::size_t EcNetModel::pooled_width() const {
    return config.use_attention ? config.d_k : hidden_total();
}

std::vector<ParamRef> EcNetModel::parameters() {
    std::vector<ParamRef> out;
    for (std::size_t b = 0; b < branches.size(); ++b) {
        const std::string prefix = "branch" + std::to_string(b) + ".";
        for (auto& p : branches[b].parameters()) out.push_back({prefix + p.name, p.value});
    }
    if (attention) {
        out.push_back({"attention.w_q", &attention->w_q});
        out.push_back({"attention.w_k", &attention->w_k});
        out.push_back({"attention.w_v", &attention->w_v});
    }
    for (std::size_t i = 0; i < fc.size(); ++i) {
        const std::string prefix = "fc" + std::to_string(i) + ".";
        out.push_back({prefix + "w", &fc[i].w});
        out.push_back({prefix + "b", &fc[i].b});
    }
    return out;
}

std::size_t EcNetModel::parameter_count() const {
    std::size_t n = 0;
    for (auto& p : const_cast<EcNetModel*>(this)->parameters()) n += p.value->size();
    return n;
}

EcNetModel build_model(const ModelConfig& config_in, const FeatureSchema& schema,
                       const LabelVocab& vocab, Rng& rng) {
    ModelConfig config = config_in;
    if (config.n_classes == 0) config.n_classes = static_cast<std::size_t>(vocab.size());
    auto violations = config_violations(config);
    if (config.n_classes != static_cast<std::size_t>(vocab.size()))
        violations.push_back("n_classes " + std::to_string(config.n_classes) +
                             " != vocab size " + std::to_string(vocab.size()));
    if (schema.numeric_width() == 0 && schema.categorical_width() == 0)
        violations.push_back("schema has no feature columns");
    if (!violations.empty()) {
        std::string msg = "invalid model config:";
        for (const auto& v : violations) msg += " " + v + ";";
        throw std::invalid_argument(msg);
    }

    EcNetModel m;
    m.config = config;
    m.vocab = vocab;
    m.schema = schema;

    const std::size_t d_num = schema.numeric_width();
    const std::size_t d_cat = schema.categorical_width();
    if (config.feature_mode == FeatureMode::separate) {
        m.branches.push_back(
            RecurrentCell::create(config.cell_type, d_num, config.hidden_numeric, rng));
        m.branches.push_back(
            RecurrentCell::create(config.cell_type, d_cat, config.hidden_categorical, rng));
    } else {
        m.branches.push_back(RecurrentCell::create(config.cell_type, d_num + d_cat,
                                                   m.hidden_total(), rng));
    }
    if (config.use_attention)
        m.attention = make_attention(m.hidden_total(), config.d_k, config.heads, rng);

    std::size_t in = m.pooled_width();
    for (std::size_t width : config.fc_sizes) {
        m.fc.push_back({xavier_init(width, in, rng), Matrix(1, width)});
        in = width;
    }
    m.fc.push_back({xavier_init(config.n_classes, in, rng), Matrix(1, config.n_classes)});
    return m;
}

GradientBundle zero_gradients(const EcNetModel& model) {
    GradientBundle g;
    for (const auto& b : model.branches) g.branches.push_back(RecurrentCell::zeros_like(b));
    if (model.attention) {
        AttentionParams a;
        a.w_q = Matrix(model.attention->w_q.rows(), model.attention->w_q.cols());
        a.w_k = a.w_q;
        a.w_v = a.w_q;
        a.heads = model.attention->heads;
        a.d_k = model.attention->d_k;
        g.attention = std::move(a);
    }
    for (const auto& layer : model.fc)
        g.fc.push_back({Matrix(layer.w.rows(), layer.w.cols()),
                        Matrix(layer.b.rows(), layer.b.cols())});
    return g;
}

std::vector<ParamRef> GradientBundle::parameters() {
    std::vector<ParamRef> out;
    for (std::size_t b = 0; b < branches.size(); ++b) {
        const std::string prefix = "branch" + std::to_string(b) + ".";
        for (auto& p : branches[b].parameters()) out.push_back({prefix + p.name, p.value});
    }
    if (attention) {
        out.push_back({"attention.w_q", &attention->w_q});
        out.push_back({"attention.w_k", &attention->w_k});
        out.push_back({"attention.w_v", &attention->w_v});
    }
    for (std::size_t i = 0; i < fc.size(); ++i) {
        const std::string prefix = "fc" + std::to_string(i) + ".";
        out.push_back({prefix + "w", &fc[i].w});
        out.push_back({prefix + "b", &fc[i].b});
    }
    return out;
}

ForwardResult forward(const EcNetModel& model, const SequenceBatch& batch) {
    const std::size_t b = batch.batch_size();
    const std::size_t w = batch.window;
    if (b == 0) throw ShapeError("forward: empty batch");
    if (batch.numeric.cols() != model.schema.numeric_width() ||
        batch.categorical.cols() != model.schema.categorical_width())
        throw ShapeError("forward: batch channel widths (" +
                         std::to_string(batch.numeric.cols()) + "," +
                         std::to_string(batch.categorical.cols()) +
                         ") do not match schema (" +
                         std::to_string(model.schema.numeric_width()) + "," +
                         std::to_string(model.schema.categorical_width()) + ")");

    ForwardResult out;
    ForwardCache& cache = out.cache;
    cache.batch = b;
    cache.window = w;

    if (model.config.feature_mode == FeatureMode::separate) {
        cache.branch_fwd.push_back(run_sequence(model.branches[0], batch.numeric, b, w));
        cache.branch_fwd.push_back(run_sequence(model.branches[1], batch.categorical, b, w));
        cache.h_concat = hconcat(cache.branch_fwd[0].h_all, cache.branch_fwd[1].h_all);
    } else {
        const Matrix merged = hconcat(batch.numeric, batch.categorical);
        cache.branch_fwd.push_back(run_sequence(model.branches[0], merged, b, w));
        cache.h_concat = cache.branch_fwd[0].h_all;
    }

    const std::size_t pooled_width = model.pooled_width();
    cache.pooled = Matrix(b, pooled_width);
    if (model.attention) {
        cache.att.resize(b);
        Matrix h_sample(w, model.hidden_total());
        for (std::size_t s = 0; s < b; ++s) {
            for (std::size_t t = 0; t < w; ++t)
                std::copy_n(cache.h_concat.row_ptr(s * w + t), model.hidden_total(),
                            h_sample.row_ptr(t));
            AttentionOutput att = attend(h_sample, *model.attention, cache.att[s]);
            const Matrix pooled = pool_context(att.context, model.config.pooling);
            cache.pooled.set_row(s, pooled);
        }
    } else {
        Matrix h_sample(w, model.hidden_total());
        for (std::size_t s = 0; s < b; ++s) {
            for (std::size_t t = 0; t < w; ++t)
                std::copy_n(cache.h_concat.row_ptr(s * w + t), model.hidden_total(),
                            h_sample.row_ptr(t));
            cache.pooled.set_row(s, pool_context(h_sample, model.config.pooling));
        }
    }

    // FC stack, tanh between layers, linear head
    Matrix a = cache.pooled;
    for (std::size_t i = 0; i < model.fc.size(); ++i) {
        cache.fc_inputs.push_back(a);
        Matrix z = add_bias_rows(matmul_nt(a, model.fc[i].w), model.fc[i].b);
        if (i + 1 < model.fc.size()) {
            a = tanh_m(z);
            cache.fc_taps.push_back(a);
        } else {
            a = std::move(z);
        }
    }
    out.probabilities = softmax_rows(a);
    return out;
}

GradientBundle backward(const EcNetModel& model, ForwardCache& cache,
                        const Matrix& d_logits) {
    if (cache.consumed) throw std::logic_error("backward: forward cache already consumed");
    cache.consumed = true;
    if (d_logits.rows() != cache.batch || d_logits.cols() != model.config.n_classes)
        throw ShapeError("backward: d_logits " + d_logits.shape_str() + " vs batch " +
                         std::to_string(cache.batch) + " x " +
                         std::to_string(model.config.n_classes));

    GradientBundle grads = zero_gradients(model);

    // FC stack in reverse
    Matrix d = d_logits;
    for (std::size_t i = model.fc.size(); i-- > 0;) {
        if (i + 1 < model.fc.size()) {
            // through the tanh tap of layer i
            const Matrix& tap = cache.fc_taps[i];
            Matrix dt(d.rows(), d.cols());
            for (std::size_t idx = 0; idx < d.size(); ++idx) {
                const double a = tap.data()[idx];
                dt.data()[idx] = d.data()[idx] * (1.0 - a * a);
            }
            d = std::move(dt);
        }
        add_in_place(grads.fc[i].w, matmul_tn(d, cache.fc_inputs[i]));
        add_in_place(grads.fc[i].b, col_sums(d));
        d = matmul(d, model.fc[i].w);
    }
    // d is now the gradient at the pooled features (B x pooled_width)

    const std::size_t b = cache.batch, w = cache.window;
    Matrix d_h_concat(b * w, model.hidden_total());
    for (std::size_t s = 0; s < b; ++s) {
        const Matrix d_pooled = d.row(s);
        Matrix d_h_sample;
        if (model.attention) {
            const Matrix d_context =
                pool_context_backward(d_pooled, w, model.config.pooling);
            d_h_sample = attend_backward(*model.attention, cache.att[s], d_context,
                                         *grads.attention);
        } else {
            d_h_sample = pool_context_backward(d_pooled, w, model.config.pooling);
        }
        for (std::size_t t = 0; t < w; ++t)
            std::copy_n(d_h_sample.row_ptr(t), model.hidden_total(),
                        d_h_concat.row_ptr(s * w + t));
    }

    if (model.config.feature_mode == FeatureMode::separate) {
        const std::size_t h_num = model.config.hidden_numeric;
        const Matrix d_num = d_h_concat.col_range(0, h_num);
        const Matrix d_cat = d_h_concat.col_range(h_num, d_h_concat.cols());
        run_sequence_backward(model.branches[0], cache.branch_fwd[0], d_num,
                              grads.branches[0]);
        run_sequence_backward(model.branches[1], cache.branch_fwd[1], d_cat,
                              grads.branches[1]);
    } else {
        run_sequence_backward(model.branches[0], cache.branch_fwd[0], d_h_concat,
                              grads.branches[0]);
    }
    return grads;
}

int argmax_row(const Matrix& m, std::size_t row) {
    int best = 0;
    double best_v = m(row, 0);
    for (std::size_t c = 1; c < m.cols(); ++c) {
        if (m(row, c) > best_v) {
            best_v = m(row, c);
            best = static_cast<int>(c);
        }
    }
    return best;
}

Prediction predict(const EcNetModel& model, const std::vector<SequenceSample>& samples) {
    Prediction out;
    out.probabilities = Matrix(samples.size(), model.config.n_classes);
    if (samples.empty()) return out;

    const std::size_t chunk = 256;
    const auto batches = batch(samples, chunk, 0, false);
    std::size_t row = 0;
    for (const auto& sb : batches) {
        ForwardResult fr = forward(model, sb);
        for (std::size_t r = 0; r < fr.probabilities.rows(); ++r, ++row)
            for (std::size_t c = 0; c < fr.probabilities.cols(); ++c)
                out.probabilities(row, c) = fr.probabilities(r, c);
    }
    for (std::size_t r = 0; r < out.probabilities.rows(); ++r)
        out.class_ids.push_back(argmax_row(out.probabilities, r));
    return out;
}

// ---- checkpoint -----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'E', 'C', 'N', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

std::uint32_t crc32(const unsigned char* data, std::size_t len) {
    static std::uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        init = true;
    }
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i)
        crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

class CheckpointError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace

void save_checkpoint(const EcNetModel& model, const std::string& path) {
    auto params = const_cast<EcNetModel&>(model).parameters();

    nlohmann::json header;
    header["config"] = nlohmann::json::parse(model_config_to_json(model.config));
    header["schema"] = nlohmann::json::parse(schema_to_json(model.schema));
    header["vocab"] = nlohmann::json::parse(vocab_to_json(model.vocab));
    auto shapes = nlohmann::json::array();
    for (const auto& p : params)
        shapes.push_back({{"name", p.name}, {"rows", p.value->rows()}, {"cols", p.value->cols()}});
    header["params"] = shapes;
    const std::string header_text = header.dump();

    std::string payload;
    for (const auto& p : params) {
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            std::uint64_t bits;
            static_assert(sizeof(double) == sizeof(std::uint64_t));
            std::memcpy(&bits, &p.value->data()[i], sizeof(bits));
            put_u64(payload, bits);
        }
    }

    std::string blob;
    blob.append(kMagic, 4);
    put_u32(blob, kFormatVersion);
    put_u64(blob, header_text.size());
    blob += header_text;
    put_u64(blob, payload.size());
    blob += payload;
    put_u32(blob, crc32(reinterpret_cast<const unsigned char*>(payload.data()),
                        payload.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot open '" + path + "' for writing");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("checkpoint: write failed for '" + path + "'");
}

EcNetModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
    const std::size_t n = blob.size();

    if (n < 16 || std::memcmp(p, kMagic, 4) != 0)
        throw CheckpointError("checkpoint: bad magic in '" + path + "'");
    const std::uint32_t version = get_u32(p + 4);
    if (version > kFormatVersion)
        throw CheckpointError("checkpoint: format version " + std::to_string(version) +
                              " is newer than supported " + std::to_string(kFormatVersion));
    const std::uint64_t header_len = get_u64(p + 8);
    std::size_t off = 16;
    if (off + header_len + 8 > n) throw CheckpointError("checkpoint: truncated header");
    const std::string header_text(blob.data() + off, header_len);
    off += header_len;
    const std::uint64_t payload_len = get_u64(p + off);
    off += 8;
    if (off + payload_len + 4 > n) throw CheckpointError("checkpoint: truncated payload");
    const std::uint32_t stored_crc = get_u32(p + off + payload_len);
    if (crc32(p + off, payload_len) != stored_crc)
        throw CheckpointError("checkpoint: checksum mismatch in '" + path + "'");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: bad header JSON: ") + e.what());
    }

    const ModelConfig config = model_config_from_json(header.at("config").dump());
    const FeatureSchema schema = schema_from_json(header.at("schema").dump());
    const LabelVocab vocab = vocab_from_json(header.at("vocab").dump());

    Rng rng(config.seed);
    EcNetModel model = build_model(config, schema, vocab, rng);
    auto params = model.parameters();

    const auto& shapes = header.at("params");
    if (shapes.size() != params.size())
        throw CheckpointError("checkpoint: parameter list mismatch");
    std::size_t expected_doubles = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& s = shapes[i];
        if (s.at("name").get<std::string>() != params[i].name ||
            s.at("rows").get<std::size_t>() != params[i].value->rows() ||
            s.at("cols").get<std::size_t>() != params[i].value->cols())
            throw CheckpointError("checkpoint: shape mismatch at parameter '" +
                                  params[i].name + "'");
        expected_doubles += params[i].value->size();
    }
    if (payload_len != expected_doubles * 8)
        throw CheckpointError("checkpoint: payload size mismatch");

    const unsigned char* cursor = p + off;
    for (auto& param : params) {
        for (std::size_t i = 0; i < param.value->size(); ++i) {
            const std::uint64_t bits = get_u64(cursor);
            cursor += 8;
            double v;
            std::memcpy(&v, &bits, sizeof(v));
            param.value->data()[i] = v;
        }
    }
    return model;
}

}  // namespace ecnet
