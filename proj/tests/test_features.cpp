#include <cmath>

#include "doctest.h"
#include "features.hpp"

using namespace ecnet;

namespace {

FlowRecord flow(double ts, const std::string& label, std::optional<double> duration,
                std::optional<std::uint64_t> orig_bytes, Proto proto,
                std::optional<std::string> service, const std::string& conn_state) {
    FlowRecord r;
    r.ts = ts;
    r.uid = "u" + std::to_string(ts);
    r.label = label;
    r.label_raw = label;
    r.duration = duration;
    r.orig_bytes = orig_bytes;
    r.proto = proto;
    r.service = std::move(service);
    r.conn_state = conn_state;
    r.orig_port = 1000;
    r.resp_port = 80;
    return r;
}

LabelVocab ab_vocab() {
    LabelVocab v;
    v.names = {"A", "B"};
    v.index = {{"A", 0}, {"B", 1}};
    return v;
}

}  // namespace

TEST_CASE("fit_schema: zero-variance column stores sd 1") {
    std::vector<FlowRecord> train;
    for (int i = 0; i < 3; ++i)
        train.push_back(flow(i, "A", 0.0, 5, Proto::tcp, "dns", "SF"));
    FeatureConfig config;
    config.numeric_cols = {"duration"};
    config.categorical_cols = {"proto"};
    const FeatureSchema schema = fit_schema(train, config);
    CHECK(schema.numeric[0].mean == 0.0);
    CHECK(schema.numeric[0].sd == 1.0);
}

TEST_CASE("fit_schema: duration {1,3} gives mean 2, population sd 1") {
    std::vector<FlowRecord> train = {flow(0, "A", 1.0, 5, Proto::tcp, "dns", "SF"),
                                     flow(1, "A", 3.0, 5, Proto::tcp, "dns", "SF")};
    FeatureConfig config;
    config.numeric_cols = {"duration"};
    config.categorical_cols = {};
    const FeatureSchema schema = fit_schema(train, config);
    CHECK(schema.numeric[0].mean == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(schema.numeric[0].sd == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("fit_schema: proto vocabulary ordered by frequency then name, OOV at 0") {
    std::vector<FlowRecord> train = {flow(0, "A", 1.0, 5, Proto::tcp, "dns", "SF"),
                                     flow(1, "A", 1.0, 5, Proto::tcp, "dns", "SF"),
                                     flow(2, "A", 1.0, 5, Proto::udp, "dns", "SF")};
    FeatureConfig config;
    config.numeric_cols = {};
    config.categorical_cols = {"proto"};
    const FeatureSchema schema = fit_schema(train, config);
    REQUIRE(schema.categorical.size() == 1);
    CHECK(schema.categorical[0].values == std::vector<std::string>{"tcp", "udp"});
    CHECK(schema.categorical[0].width() == 3);
}

TEST_CASE("fit_schema: unknown column errors by name") {
    std::vector<FlowRecord> train = {flow(0, "A", 1.0, 5, Proto::tcp, "dns", "SF")};
    FeatureConfig config;
    config.numeric_cols = {"no_such_column"};
    CHECK_THROWS_WITH_AS(fit_schema(train, config),
                         "unknown numeric feature column 'no_such_column'", DataError);
    CHECK_THROWS_AS(fit_schema({}, FeatureConfig{}), DataError);
}

TEST_CASE("encode_record: z-score, imputation, OOV") {
    std::vector<FlowRecord> train = {flow(0, "A", 1.0, 5, Proto::tcp, "dns", "SF"),
                                     flow(1, "A", 3.0, 5, Proto::udp, "dns", "SF")};
    FeatureConfig config;
    config.numeric_cols = {"duration"};
    config.categorical_cols = {"proto"};
    const FeatureSchema schema = fit_schema(train, config);

    // mean-valued input encodes to 0; 3.0 -> (3-2)/1 = 1
    auto [n0, c0] = encode_record(flow(9, "A", 2.0, 5, Proto::tcp, "dns", "SF"), schema);
    CHECK(n0(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
    auto [n1, c1] = encode_record(flow(9, "A", 3.0, 5, Proto::tcp, "dns", "SF"), schema);
    CHECK(n1(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

    // absent duration imputes to the mean (encoded 0)
    auto [n2, c2] =
        encode_record(flow(9, "A", std::nullopt, 5, Proto::tcp, "dns", "SF"), schema);
    CHECK(n2(0, 0) == 0.0);

    // icmp was unseen at fit time -> OOV slot
    auto [n3, c3] = encode_record(flow(9, "A", 2.0, 5, Proto::icmp, "dns", "SF"), schema);
    CHECK(c3(0, 0) == 1.0);
    CHECK(c3(0, 1) == 0.0);
    CHECK(c3(0, 2) == 0.0);
    // tcp hits its vocabulary slot
    CHECK(c0(0, 1) == 1.0);
    CHECK(c0(0, 0) == 0.0);
}

TEST_CASE("encoded training set is standardized per column") {
    std::vector<FlowRecord> train;
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        auto r = flow(i, "A", rng.uniform(0.0, 9.0), rng.uniform_index(5000), Proto::tcp,
                      "dns", "SF");
        r.resp_bytes = rng.uniform_index(100);
        r.orig_pkts = rng.uniform_index(40);
        r.resp_pkts = rng.uniform_index(40);
        r.orig_port = static_cast<int>(rng.uniform_index(65536));
        r.resp_port = static_cast<int>(rng.uniform_index(65536));
        train.push_back(std::move(r));
    }
    const FeatureSchema schema = fit_schema(train, FeatureConfig{});
    const std::size_t d = schema.numeric_width();
    std::vector<double> sum(d, 0.0), sq(d, 0.0);
    for (const auto& r : train) {
        auto [num, cat] = encode_record(r, schema);
        for (std::size_t j = 0; j < d; ++j) {
            sum[j] += num(0, j);
            sq[j] += num(0, j) * num(0, j);
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        const double mean = sum[j] / 200.0;
        const double var = sq[j] / 200.0 - mean * mean;
        CHECK(std::fabs(mean) < 1e-9);
        CHECK(std::fabs(var - 1.0) < 1e-9);
    }
}

TEST_CASE("encode_record never yields non-finite values") {
    std::vector<FlowRecord> train = {flow(0, "A", 1.0, 5, Proto::tcp, "dns", "SF")};
    const FeatureSchema schema = fit_schema(train, FeatureConfig{});
    Rng rng(77);
    for (int i = 0; i < 200; ++i) {
        FlowRecord r;
        r.ts = i;
        r.uid = "x";
        r.conn_state = i % 2 ? "S0" : "-";
        r.label = "A";
        if (i % 3 == 0) r.duration = rng.uniform(0.0, 1e6);
        if (i % 4 == 0) r.orig_bytes = rng.next_u64() % 100000000ULL;
        if (i % 5 == 0) r.orig_port = static_cast<int>(rng.uniform_index(65536));
        auto [num, cat] = encode_record(r, schema);
        CHECK(num.all_finite());
        CHECK(cat.all_finite());
    }
}

TEST_CASE("make_sequences window arithmetic and targets") {
    auto make_records = [](int n) {
        std::vector<FlowRecord> out;
        for (int i = 0; i < n; ++i)
            out.push_back(flow(i, i % 2 ? "B" : "A", 1.0, 5, Proto::tcp, "dns", "SF"));
        return out;
    };
    FeatureConfig config;
    config.window = 10;
    config.stride = 1;
    const auto train = make_records(12);
    const FeatureSchema schema = fit_schema(train, config);
    const LabelVocab vocab = ab_vocab();

    CHECK(make_sequences(make_records(10), schema, vocab).size() == 1);
    CHECK(make_sequences(make_records(5), schema, vocab).empty());

    const auto seqs = make_sequences(train, schema, vocab);
    REQUIRE(seqs.size() == 3);
    // targets are the labels of records 10, 11, 12 (1-based): indices 9, 10, 11
    CHECK(seqs[0].target == vocab.id_of(train[9].label));
    CHECK(seqs[1].target == vocab.id_of(train[10].label));
    CHECK(seqs[2].target == vocab.id_of(train[11].label));
}

TEST_CASE("make_sequences count formula over window/stride combinations") {
    FeatureConfig config;
    const LabelVocab vocab = ab_vocab();
    for (std::size_t n : {1u, 7u, 20u, 33u}) {
        std::vector<FlowRecord> records;
        for (std::size_t i = 0; i < n; ++i)
            records.push_back(flow(i, "A", 1.0, 5, Proto::tcp, "dns", "SF"));
        for (std::size_t w : {1u, 3u, 10u}) {
            for (std::size_t stride : {1u, 2u, 5u}) {
                config.window = w;
                config.stride = stride;
                const FeatureSchema schema = fit_schema(records, config);
                const auto seqs = make_sequences(records, schema, vocab);
                const std::size_t expected = n >= w ? (n - w) / stride + 1 : 0;
                CHECK(seqs.size() == expected);
            }
        }
    }
}

TEST_CASE("batch: sizes, identity order, determinism, multiset preservation") {
    std::vector<SequenceSample> samples;
    for (int i = 0; i < 10; ++i) {
        SequenceSample s;
        s.numeric = Matrix(2, 1);
        s.numeric(0, 0) = i;
        s.categorical = Matrix(2, 1);
        s.target = i;
        samples.push_back(std::move(s));
    }

    const auto batches = batch(samples, 4, 1, false);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].batch_size() == 4);
    CHECK(batches[1].batch_size() == 4);
    CHECK(batches[2].batch_size() == 2);
    // shuffle off preserves order
    CHECK(batches[0].targets == std::vector<int>{0, 1, 2, 3});
    CHECK(batches[2].targets == std::vector<int>{8, 9});

    const auto s1 = batch(samples, 4, 42, true);
    const auto s2 = batch(samples, 4, 42, true);
    REQUIRE(s1.size() == s2.size());
    std::vector<int> seen;
    for (std::size_t b = 0; b < s1.size(); ++b) {
        CHECK(s1[b].targets == s2[b].targets);
        seen.insert(seen.end(), s1[b].targets.begin(), s1[b].targets.end());
    }
    std::sort(seen.begin(), seen.end());
    CHECK(seen == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("schema JSON round trip is exact") {
    std::vector<FlowRecord> train = {flow(0, "A", 1.0, 5, Proto::tcp, "dns", "SF"),
                                     flow(1, "A", 3.0, 7, Proto::udp, std::nullopt, "S0")};
    const FeatureSchema schema = fit_schema(train, FeatureConfig{});
    const FeatureSchema back = schema_from_json(schema_to_json(schema));
    CHECK(back.window == schema.window);
    CHECK(back.stride == schema.stride);
    REQUIRE(back.numeric.size() == schema.numeric.size());
    for (std::size_t i = 0; i < schema.numeric.size(); ++i) {
        CHECK(back.numeric[i].name == schema.numeric[i].name);
        CHECK(back.numeric[i].mean == schema.numeric[i].mean);
        CHECK(back.numeric[i].sd == schema.numeric[i].sd);
    }
    REQUIRE(back.categorical.size() == schema.categorical.size());
    for (std::size_t i = 0; i < schema.categorical.size(); ++i)
        CHECK(back.categorical[i].values == schema.categorical[i].values);

    CHECK_THROWS_AS(schema_from_json("{\"version\": 99}"), DataError);
    CHECK_THROWS_AS(schema_from_json("not json"), DataError);
}
