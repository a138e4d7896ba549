#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "model.hpp"
#include "selfcheck.hpp"
#include "support/oracles.hpp"
#include "train.hpp"

using namespace ecnet;
namespace fs = std::filesystem;

namespace {

FeatureSchema toy_schema(std::size_t window, std::size_t d_num, std::size_t cat_values) {
    FeatureSchema schema;
    schema.window = window;
    schema.stride = 1;
    for (std::size_t i = 0; i < d_num; ++i)
        schema.numeric.push_back({"n" + std::to_string(i), 0.0, 1.0});
    CategoricalColumn cc;
    cc.name = "c0";
    for (std::size_t i = 0; i < cat_values; ++i) cc.values.push_back(std::string(1, 'a' + i));
    schema.categorical.push_back(cc);
    return schema;
}

LabelVocab toy_vocab(std::size_t n) {
    LabelVocab v;
    for (std::size_t i = 0; i < n; ++i) {
        v.names.push_back("k" + std::to_string(i));
        v.index[v.names.back()] = static_cast<int>(i);
    }
    return v;
}

ModelConfig toy_config(std::size_t n_classes) {
    ModelConfig c;
    c.hidden_numeric = 4;
    c.hidden_categorical = 3;
    c.d_k = 4;
    c.heads = 1;
    c.fc_sizes = {5};
    c.n_classes = n_classes;
    c.seed = 11;
    return c;
}

SequenceBatch random_batch(std::size_t batch_n, std::size_t window, std::size_t d_num,
                           std::size_t d_cat, Rng& rng, std::size_t n_classes) {
    SequenceBatch sb;
    sb.window = window;
    sb.numeric = Matrix(batch_n * window, d_num);
    for (std::size_t i = 0; i < sb.numeric.size(); ++i)
        sb.numeric.data()[i] = rng.uniform(-1.0, 1.0);
    sb.categorical = Matrix(batch_n * window, d_cat);
    for (std::size_t r = 0; r < batch_n * window; ++r)
        sb.categorical(r, rng.uniform_index(d_cat)) = 1.0;
    for (std::size_t b = 0; b < batch_n; ++b)
        sb.targets.push_back(static_cast<int>(rng.uniform_index(n_classes)));
    return sb;
}

bool params_equal(EcNetModel& a, EcNetModel& b) {
    auto pa = a.parameters();
    auto pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].value->size() != pb[i].value->size()) return false;
        for (std::size_t k = 0; k < pa[i].value->size(); ++k)
            if (pa[i].value->data()[k] != pb[i].value->data()[k]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("build_model: identical seeds give bit-identical parameters") {
    const FeatureSchema schema = toy_schema(3, 3, 3);
    const LabelVocab vocab = toy_vocab(3);
    const ModelConfig config = toy_config(3);
    Rng r1(5), r2(5);
    EcNetModel a = build_model(config, schema, vocab, r1);
    EcNetModel b = build_model(config, schema, vocab, r2);
    CHECK(params_equal(a, b));
}

TEST_CASE("build_model: attention off allocates no attention parameters") {
    const FeatureSchema schema = toy_schema(3, 3, 3);
    const LabelVocab vocab = toy_vocab(3);
    ModelConfig with = toy_config(3);
    ModelConfig without = toy_config(3);
    without.use_attention = false;
    Rng r1(5), r2(5);
    EcNetModel m_with = build_model(with, schema, vocab, r1);
    EcNetModel m_without = build_model(without, schema, vocab, r2);
    CHECK(m_with.attention.has_value());
    CHECK_FALSE(m_without.attention.has_value());
    CHECK(m_without.parameter_count() < m_with.parameter_count());
}

TEST_CASE("parameter count matches the closed-form shape sum") {
    const std::size_t d_num = 3, d_cat = 4, h1 = 4, h2 = 3, d_k = 4, fc = 5, classes = 3;
    const FeatureSchema schema = toy_schema(3, d_num, d_cat - 1);
    const LabelVocab vocab = toy_vocab(classes);
    const ModelConfig config = toy_config(classes);
    Rng rng(5);
    EcNetModel m = build_model(config, schema, vocab, rng);

    const std::size_t lstm1 = 4 * (h1 * (h1 + d_num)) + 4 * h1;
    const std::size_t lstm2 = 4 * (h2 * (h2 + d_cat)) + 4 * h2;
    const std::size_t att = 3 * (h1 + h2) * d_k;
    const std::size_t head = fc * d_k + fc + classes * fc + classes;
    CHECK(m.parameter_count() == lstm1 + lstm2 + att + head);

    // FC head shapes are fixed across cell types
    for (CellType t : {CellType::rnn, CellType::gru}) {
        ModelConfig c2 = config;
        c2.cell_type = t;
        Rng r2(5);
        EcNetModel m2 = build_model(c2, schema, vocab, r2);
        REQUIRE(m2.fc.size() == m.fc.size());
        for (std::size_t i = 0; i < m.fc.size(); ++i) {
            CHECK(m2.fc[i].w.rows() == m.fc[i].w.rows());
            CHECK(m2.fc[i].w.cols() == m.fc[i].w.cols());
        }
    }
}

TEST_CASE("build_model rejects bad configs listing the violations") {
    const FeatureSchema schema = toy_schema(3, 3, 3);
    const LabelVocab vocab = toy_vocab(3);
    ModelConfig bad = toy_config(3);
    bad.n_classes = 1;
    bad.hidden_numeric = 0;
    Rng rng(5);
    CHECK_THROWS_AS(build_model(bad, schema, vocab, rng), std::invalid_argument);
    const auto violations = config_violations(bad);
    CHECK(violations.size() >= 2);
}

TEST_CASE("forward: zeroed FC head gives exactly uniform probabilities") {
    const FeatureSchema schema = toy_schema(3, 3, 3);
    const LabelVocab vocab = toy_vocab(4);
    ModelConfig config = toy_config(4);
    Rng rng(5);
    EcNetModel m = build_model(config, schema, vocab, rng);
    for (auto& layer : m.fc) {
        layer.w = Matrix(layer.w.rows(), layer.w.cols());
        layer.b = Matrix(layer.b.rows(), layer.b.cols());
    }
    Rng data_rng(6);
    const SequenceBatch sb = random_batch(3, 3, 3, 4, data_rng, 4);
    const ForwardResult out = forward(m, sb);
    for (std::size_t r = 0; r < out.probabilities.rows(); ++r)
        for (std::size_t c = 0; c < out.probabilities.cols(); ++c)
            CHECK(out.probabilities(r, c) == 0.25);
}

TEST_CASE("forward: a sample's output does not depend on its batch") {
    const FeatureSchema schema = toy_schema(3, 3, 3);
    const LabelVocab vocab = toy_vocab(3);
    Rng rng(5);
    EcNetModel m = build_model(toy_config(3), schema, vocab, rng);
    Rng data_rng(7);
    const SequenceBatch big = random_batch(4, 3, 3, 4, data_rng, 3);

    for (std::size_t pick = 0; pick < 4; ++pick) {
        SequenceBatch one;
        one.window = big.window;
        one.numeric = Matrix(big.window, big.numeric.cols());
        one.categorical = Matrix(big.window, big.categorical.cols());
        for (std::size_t t = 0; t < big.window; ++t) {
            for (std::size_t c = 0; c < big.numeric.cols(); ++c)
                one.numeric(t, c) = big.numeric(pick * big.window + t, c);
            for (std::size_t c = 0; c < big.categorical.cols(); ++c)
                one.categorical(t, c) = big.categorical(pick * big.window + t, c);
        }
        one.targets = {big.targets[pick]};
        const ForwardResult solo = forward(m, one);
        const ForwardResult all = forward(m, big);
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(solo.probabilities(0, c) == all.probabilities(pick, c));
    }
}

TEST_CASE("forward matches a composed scalar-loop reference (B=2, W=3)") {
    const std::size_t window = 3, batch_n = 2, d_num = 3, d_cat = 4;
    const FeatureSchema schema = toy_schema(window, d_num, d_cat - 1);
    const LabelVocab vocab = toy_vocab(3);
    const ModelConfig config = toy_config(3);
    Rng rng(23);
    EcNetModel m = build_model(config, schema, vocab, rng);
    Rng data_rng(29);
    const SequenceBatch sb = random_batch(batch_n, window, d_num, d_cat, data_rng, 3);
    const ForwardResult out = forward(m, sb);

    auto to_vv = [](const Matrix& mat) {
        std::vector<std::vector<double>> vv(mat.rows(), std::vector<double>(mat.cols()));
        for (std::size_t r = 0; r < mat.rows(); ++r)
            for (std::size_t c = 0; c < mat.cols(); ++c) vv[r][c] = mat(r, c);
        return vv;
    };
    auto to_v = [](const Matrix& mat) {
        return std::vector<double>(mat.data(), mat.data() + mat.size());
    };

    const auto& p1 = m.branches[0].lstm();
    const auto& p2 = m.branches[1].lstm();
    const std::size_t h1 = config.hidden_numeric, h2 = config.hidden_categorical;

    for (std::size_t b = 0; b < batch_n; ++b) {
        // branch recurrences, scalar loops
        testsupport::ScalarLstmState s1{std::vector<double>(h1, 0.0),
                                        std::vector<double>(h1, 0.0)};
        testsupport::ScalarLstmState s2{std::vector<double>(h2, 0.0),
                                        std::vector<double>(h2, 0.0)};
        std::vector<std::vector<double>> h_concat;
        for (std::size_t t = 0; t < window; ++t) {
            std::vector<double> x1(d_num), x2(d_cat);
            for (std::size_t c = 0; c < d_num; ++c) x1[c] = sb.numeric(b * window + t, c);
            for (std::size_t c = 0; c < d_cat; ++c)
                x2[c] = sb.categorical(b * window + t, c);
            s1 = testsupport::scalar_lstm_step(to_vv(p1.w_f), to_vv(p1.w_i), to_vv(p1.w_c),
                                               to_vv(p1.w_o), to_v(p1.b_f), to_v(p1.b_i),
                                               to_v(p1.b_c), to_v(p1.b_o), s1, x1);
            s2 = testsupport::scalar_lstm_step(to_vv(p2.w_f), to_vv(p2.w_i), to_vv(p2.w_c),
                                               to_vv(p2.w_o), to_v(p2.b_f), to_v(p2.b_i),
                                               to_v(p2.b_c), to_v(p2.b_o), s2, x2);
            std::vector<double> row = s1.h;
            row.insert(row.end(), s2.h.begin(), s2.h.end());
            h_concat.push_back(std::move(row));
        }
        // projections, scalar loops
        const std::size_t h_total = h1 + h2, d_k = config.d_k;
        auto project = [&](const Matrix& w) {
            std::vector<std::vector<double>> out_m(window, std::vector<double>(d_k, 0.0));
            for (std::size_t t = 0; t < window; ++t)
                for (std::size_t c = 0; c < d_k; ++c)
                    for (std::size_t k = 0; k < h_total; ++k)
                        out_m[t][c] += h_concat[t][k] * w(k, c);
            return out_m;
        };
        const auto context = testsupport::scalar_attention(
            project(m.attention->w_q), project(m.attention->w_k), project(m.attention->w_v));
        const std::vector<double>& pooled = context.back();  // final pooling

        // FC stack
        std::vector<double> a = pooled;
        for (std::size_t layer = 0; layer < m.fc.size(); ++layer) {
            std::vector<double> z(m.fc[layer].w.rows(), 0.0);
            for (std::size_t r = 0; r < z.size(); ++r) {
                z[r] = m.fc[layer].b(0, r);
                for (std::size_t c = 0; c < a.size(); ++c) z[r] += m.fc[layer].w(r, c) * a[c];
                if (layer + 1 < m.fc.size()) z[r] = std::tanh(z[r]);
            }
            a = std::move(z);
        }
        double mx = a[0], z_sum = 0.0;
        for (double v : a) mx = std::max(mx, v);
        std::vector<double> probs(a.size());
        for (std::size_t c = 0; c < a.size(); ++c) {
            probs[c] = std::exp(a[c] - mx);
            z_sum += probs[c];
        }
        for (std::size_t c = 0; c < a.size(); ++c)
            CHECK(out.probabilities(b, c) == doctest::Approx(probs[c] / z_sum).epsilon(1e-10));
    }
}

TEST_CASE("output rows are probability vectors across every config variant") {
    Rng data_rng(41);
    for (CellType cell : {CellType::lstm, CellType::rnn, CellType::gru}) {
        for (bool attention : {true, false}) {
            for (FeatureMode mode : {FeatureMode::separate, FeatureMode::merged}) {
                const FeatureSchema schema = toy_schema(4, 3, 3);
                const LabelVocab vocab = toy_vocab(3);
                ModelConfig config = toy_config(3);
                config.cell_type = cell;
                config.use_attention = attention;
                config.feature_mode = mode;
                Rng rng(31);
                EcNetModel m = build_model(config, schema, vocab, rng);
                for (int trial = 0; trial < 5; ++trial) {
                    const SequenceBatch sb = random_batch(3, 4, 3, 4, data_rng, 3);
                    const ForwardResult out = forward(m, sb);
                    CHECK(out.probabilities.all_finite());
                    for (std::size_t r = 0; r < out.probabilities.rows(); ++r) {
                        double sum = 0.0;
                        for (std::size_t c = 0; c < 3; ++c) {
                            CHECK(out.probabilities(r, c) >= 0.0);
                            sum += out.probabilities(r, c);
                        }
                        CHECK(std::fabs(sum - 1.0) < 1e-9);
                    }
                }
            }
        }
    }
}

TEST_CASE("a zeroed inactive branch behaves like explicit zero padding") {
    const std::size_t window = 3, d_num = 3, d_cat = 4;
    const FeatureSchema schema = toy_schema(window, d_num, d_cat - 1);
    const LabelVocab vocab = toy_vocab(3);
    const ModelConfig config = toy_config(3);
    Rng rng(53);
    EcNetModel m = build_model(config, schema, vocab, rng);
    // kill the categorical branch
    for (auto& p : m.branches[1].parameters())
        *p.value = Matrix(p.value->rows(), p.value->cols());

    Rng data_rng(59);
    SequenceBatch sb = random_batch(2, window, d_num, d_cat, data_rng, 3);
    const ForwardResult with_cat = forward(m, sb);
    // any categorical input gives the same output once the branch is zeroed
    SequenceBatch sb2 = sb;
    sb2.categorical = Matrix(sb.categorical.rows(), sb.categorical.cols(), 0.7);
    const ForwardResult without_cat = forward(m, sb2);
    for (std::size_t i = 0; i < with_cat.probabilities.size(); ++i)
        CHECK(with_cat.probabilities.data()[i] == without_cat.probabilities.data()[i]);
}

TEST_CASE("backward: full-model finite differences, zero gradient, additivity") {
    const SelfCheckReport report = run_selfcheck(1e-5, 3);
    for (const auto& e : report.entries)
        if (e.component == "ecnet_full") CHECK(e.max_rel_error < 1e-4);

    const FeatureSchema schema = toy_schema(3, 3, 3);
    const LabelVocab vocab = toy_vocab(3);
    Rng rng(5);
    EcNetModel m = build_model(toy_config(3), schema, vocab, rng);
    Rng data_rng(6);
    const SequenceBatch sb = random_batch(2, 3, 3, 4, data_rng, 3);

    ForwardResult fwd = forward(m, sb);
    GradientBundle zero = backward(m, fwd.cache, Matrix(2, 3));
    for (auto& p : zero.parameters())
        for (std::size_t i = 0; i < p.value->size(); ++i) CHECK(p.value->data()[i] == 0.0);

    // cache reuse is rejected
    CHECK_THROWS_AS(backward(m, fwd.cache, Matrix(2, 3)), std::logic_error);

    // gradient of a summed two-sample loss equals the sum of per-sample grads
    ForwardResult fwd_all = forward(m, sb);
    GradientBundle g_all = backward(m, fwd_all.cache, fwd_all.probabilities);

    GradientBundle g_sum = zero_gradients(m);
    for (std::size_t pick = 0; pick < 2; ++pick) {
        SequenceBatch one;
        one.window = sb.window;
        one.numeric = Matrix(sb.window, sb.numeric.cols());
        one.categorical = Matrix(sb.window, sb.categorical.cols());
        for (std::size_t t = 0; t < sb.window; ++t) {
            for (std::size_t c = 0; c < sb.numeric.cols(); ++c)
                one.numeric(t, c) = sb.numeric(pick * sb.window + t, c);
            for (std::size_t c = 0; c < sb.categorical.cols(); ++c)
                one.categorical(t, c) = sb.categorical(pick * sb.window + t, c);
        }
        one.targets = {sb.targets[pick]};
        ForwardResult f1 = forward(m, one);
        GradientBundle g1 = backward(m, f1.cache, f1.probabilities);
        auto refs_sum = g_sum.parameters();
        auto refs_one = g1.parameters();
        for (std::size_t i = 0; i < refs_sum.size(); ++i)
            add_in_place(*refs_sum[i].value, *refs_one[i].value);
    }
    auto ra = g_all.parameters();
    auto rs = g_sum.parameters();
    for (std::size_t i = 0; i < ra.size(); ++i)
        for (std::size_t k = 0; k < ra[i].value->size(); ++k)
            CHECK(ra[i].value->data()[k] ==
                  doctest::Approx(rs[i].value->data()[k]).epsilon(1e-12));
}

TEST_CASE("multi-head model: forward contract and exact gradients") {
    const FeatureSchema schema = toy_schema(3, 3, 3);
    const LabelVocab vocab = toy_vocab(3);
    ModelConfig config = toy_config(3);
    config.heads = 2;  // d_k 4 split into two heads
    Rng rng(67);
    EcNetModel m = build_model(config, schema, vocab, rng);
    Rng data_rng(68);
    const SequenceBatch sb = random_batch(2, 3, 3, 4, data_rng, 3);

    const ForwardResult out = forward(m, sb);
    for (std::size_t r = 0; r < out.probabilities.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 3; ++c) sum += out.probabilities(r, c);
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }

    auto params = m.parameters();
    auto loss_of = [&](const std::vector<double>& theta) {
        unflatten_params(theta, params);
        ForwardResult fwd = forward(m, sb);
        return cross_entropy(fwd.probabilities, sb.targets).loss;
    };
    const std::vector<double> theta = flatten_params(params);
    ForwardResult fwd = forward(m, sb);
    CrossEntropy ce = cross_entropy(fwd.probabilities, sb.targets);
    GradientBundle grads = backward(m, fwd.cache, ce.d_logits);
    const std::vector<double> analytic = flatten_params(grads.parameters());
    CHECK(grad_check(loss_of, theta, analytic, 1e-5).max_rel_error < 1e-4);
}

TEST_CASE("predict: tie goes to the lower class id; monotone transforms agree") {
    Matrix probs = Matrix::from_rows({{0.25, 0.25, 0.25, 0.25}, {0.0, 0.0, 1.0, 0.0}});
    CHECK(argmax_row(probs, 0) == 0);
    CHECK(argmax_row(probs, 1) == 2);

    Rng rng(61);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix logits(1, 5);
        for (std::size_t i = 0; i < 5; ++i) logits.data()[i] = rng.uniform(-4.0, 4.0);
        const int base = argmax_row(logits, 0);
        Matrix warped(1, 5);
        for (std::size_t i = 0; i < 5; ++i)
            warped.data()[i] = 3.0 * logits.data()[i] + 1.0;  // strictly increasing
        CHECK(argmax_row(warped, 0) == base);
        CHECK(argmax_row(softmax_rows(logits), 0) == base);
    }
}

TEST_CASE("checkpoint: round trip is bit-exact; corruption is rejected") {
    const FeatureSchema schema = toy_schema(3, 3, 3);
    const LabelVocab vocab = toy_vocab(3);
    Rng rng(5);
    EcNetModel m = build_model(toy_config(3), schema, vocab, rng);
    Rng data_rng(6);
    const SequenceBatch sb = random_batch(2, 3, 3, 4, data_rng, 3);
    const ForwardResult before = forward(m, sb);

    const fs::path dir = fs::temp_directory_path() / "ecnet_model_test";
    fs::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();
    save_checkpoint(m, path);
    EcNetModel loaded = load_checkpoint(path);
    CHECK(params_equal(m, loaded));
    const ForwardResult after = forward(loaded, sb);
    for (std::size_t i = 0; i < before.probabilities.size(); ++i)
        CHECK(before.probabilities.data()[i] == after.probabilities.data()[i]);
    CHECK(loaded.vocab.names == m.vocab.names);
    CHECK(loaded.schema.window == m.schema.window);

    // truncation
    std::ifstream in(path, std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::string trunc_path = (dir / "trunc.ckpt").string();
    std::ofstream(trunc_path, std::ios::binary) << blob.substr(0, blob.size() - 9);
    CHECK_THROWS_AS(load_checkpoint(trunc_path), DataError);

    // flipped magic
    std::string bad_magic = blob;
    bad_magic[0] = 'X';
    const std::string magic_path = (dir / "magic.ckpt").string();
    std::ofstream(magic_path, std::ios::binary) << bad_magic;
    CHECK_THROWS_WITH_AS(load_checkpoint(magic_path),
                         ("checkpoint: bad magic in '" + magic_path + "'").c_str(),
                         DataError);

    // flipped payload byte -> checksum error
    std::string bad_payload = blob;
    bad_payload[blob.size() - 20] ^= 0x40;
    const std::string payload_path = (dir / "payload.ckpt").string();
    std::ofstream(payload_path, std::ios::binary) << bad_payload;
    CHECK_THROWS_AS(load_checkpoint(payload_path), DataError);

    // newer format version (bytes 4..7 little-endian)
    std::string newer = blob;
    newer[4] = 99;
    const std::string newer_path = (dir / "newer.ckpt").string();
    std::ofstream(newer_path, std::ios::binary) << newer;
    CHECK_THROWS_AS(load_checkpoint(newer_path), DataError);

    fs::remove_all(dir);
}
