#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "flow.hpp"
#include "matrix.hpp"
#include "zeek.hpp"

using namespace ecnet;

namespace {

std::string fixture_path(const char* name) {
    return std::string(ECNET_FIXTURE_DIR) + "/" + name;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const char* kSmallLog =
    "#separator \\x09\n"
    "#fields\tts\tuid\tid.orig_h\tid.orig_p\tid.resp_h\tid.resp_p\tproto\tservice\t"
    "duration\torig_bytes\tresp_bytes\tconn_state\torig_pkts\tresp_pkts\tlabel\n"
    "1.5\tu1\ta\t1\tb\t2\ttcp\tdns\t0.5\t10\t20\tSF\t1\t1\tBenign\n"
    "2.5\tu2\ta\t1\tb\t2\ttcp\t-\t-\t10\t20\tSF\t1\t1\tPartOfAHorizontalPortScan\n"
    "3.5\tu3\ta\t1\tb\t2\tudp\t-\t0.25\t-\t-\tS0\t2\t0\tPartOfAHorizontalPortScan\n"
    "4.5\tu4\ta\t1\tb\t2\ttcp\tdns\t1.25\t10\t20\tSF\t1\t1\tBenign\n"
    "5.5\tu5\ta\t1\tb\t2\ticmp\t-\t0.75\t30\t0\tOTH\t3\t1\tPartOfAHorizontalPortScan\n";

std::vector<FlowRecord> records_with_counts(
    const std::vector<std::pair<std::string, std::size_t>>& plan) {
    std::vector<FlowRecord> out;
    double ts = 0.0;
    for (const auto& [label, count] : plan) {
        for (std::size_t i = 0; i < count; ++i) {
            FlowRecord r;
            r.ts = ts += 1.0;
            r.uid = label + std::to_string(i);
            r.label = label;
            r.label_raw = label;
            r.conn_state = "SF";
            out.push_back(std::move(r));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("parse_zeek_log: five-line fixture with known labels") {
    std::istringstream in(kSmallLog);
    const ParseResult result = parse_zeek_log(in);
    REQUIRE(result.records.size() == 5);
    CHECK(result.issues.empty());
    std::size_t benign = 0, scan = 0;
    for (const auto& r : result.records) {
        if (r.label == "Benign") ++benign;
        if (r.label == "PartOfAHorizontalPortScan") ++scan;
    }
    CHECK(benign == 2);
    CHECK(scan == 3);
    // order preserved
    CHECK(result.records[0].uid == "u1");
    CHECK(result.records[4].uid == "u5");
}

TEST_CASE("parse_zeek_log: header only gives empty list, no errors") {
    std::istringstream in(
        "#separator \\x09\n"
        "#fields\tts\tuid\tid.orig_h\tid.orig_p\tid.resp_h\tid.resp_p\tproto\t"
        "conn_state\tlabel\n");
    const ParseResult result = parse_zeek_log(in);
    CHECK(result.records.empty());
    CHECK(result.issues.empty());
}

TEST_CASE("parse_zeek_log: '-' fields become absent optionals") {
    std::istringstream in(kSmallLog);
    const ParseResult result = parse_zeek_log(in);
    CHECK_FALSE(result.records[1].duration.has_value());
    CHECK(result.records[0].duration == 0.5);
    CHECK_FALSE(result.records[2].orig_bytes.has_value());
    CHECK_FALSE(result.records[1].service.has_value());
    CHECK(result.records[0].service == "dns");
}

TEST_CASE("parse_zeek_log: data before #fields is fatal and names the line") {
    std::istringstream in("1.5\tu1\ta\n");
    CHECK_THROWS_WITH_AS(parse_zeek_log(in),
                         "line 1: data before #fields header (no #fields)",
                         ZeekParseError);
    std::istringstream empty("");
    CHECK_THROWS_AS(parse_zeek_log(empty), ZeekParseError);
}

TEST_CASE("parse_zeek_log: wrong column count is collected, line skipped") {
    std::string log = kSmallLog;
    log += "9.5\tu6\tonly-three\n";
    std::istringstream in(log);
    const ParseResult result = parse_zeek_log(in);
    CHECK(result.records.size() == 5);
    REQUIRE(result.issues.size() == 1);
    CHECK(result.issues[0].line_no == 8);
}

TEST_CASE("parse_zeek_log: unparseable numerics drop the line with an issue") {
    std::string log = kSmallLog;
    log += "9.5\tu6\ta\t1\tb\t2\ttcp\t-\tnot-a-number\t10\t20\tSF\t1\t1\tBenign\n";
    log += "10.5\tu7\ta\t99999\tb\t2\ttcp\t-\t0.5\t10\t20\tSF\t1\t1\tBenign\n";
    std::istringstream in(log);
    const ParseResult result = parse_zeek_log(in);
    CHECK(result.records.size() == 5);
    CHECK(result.issues.size() == 2);
}

TEST_CASE("canonical_label unifies flag prefixes and separators") {
    CHECK(canonical_label("Benign") == "Benign");
    CHECK(canonical_label("benign") == "Benign");
    CHECK(canonical_label("Malicious   PartOfAHorizontalPortScan") ==
          "PartOfAHorizontalPortScan");
    CHECK(canonical_label("C&C - HeartBeat") == "C&C-HeartBeat");
    CHECK(canonical_label("C&C-HeartBeat  FileDownload") == "C&C-HeartBeat-FileDownload");
    CHECK(canonical_label("C&C_Torii") == "C&C-Torii");
    CHECK(canonical_label("   DDoS  ") == "DDoS");
}

TEST_CASE("bundled fixture parses to hand-verified counts") {
    std::ifstream in(fixture_path("conn.log.labeled"));
    REQUIRE(in);
    const ParseResult result = parse_zeek_log(in);
    CHECK(result.records.size() == 30);
    CHECK(result.issues.size() == 1);  // the deliberately short line

    std::map<std::string, int> counts;
    for (const auto& r : result.records) ++counts[r.label];
    CHECK(counts["PartOfAHorizontalPortScan"] == 9);
    CHECK(counts["Benign"] == 8);
    CHECK(counts["Okiru"] == 4);
    CHECK(counts["DDoS"] == 4);
    CHECK(counts["C&C-HeartBeat"] == 2);
    CHECK(counts["Attack"] == 2);
    CHECK(counts["C&C-Mirai"] == 1);
    CHECK(counts.size() == 7);
}

TEST_CASE("round-trip fixture: parse then serialize is byte-identical") {
    const std::string original = slurp(fixture_path("conn_roundtrip.log.labeled"));
    std::istringstream in(original);
    const ParseResult result = parse_zeek_log(in);
    REQUIRE(result.records.size() == 5);
    CHECK(result.issues.empty());

    std::ostringstream out;
    write_zeek_tsv(result.records, out);
    CHECK(out.str() == original);

    // and the reparse sees identical field values
    std::istringstream again(out.str());
    const ParseResult second = parse_zeek_log(again);
    REQUIRE(second.records.size() == result.records.size());
    for (std::size_t i = 0; i < result.records.size(); ++i)
        CHECK(second.records[i] == result.records[i]);
}

TEST_CASE("canonical CSV round trip preserves records") {
    std::ifstream in(fixture_path("conn.log.labeled"));
    const ParseResult result = parse_zeek_log(in);

    std::ostringstream csv;
    write_canonical_csv(result.records, csv);
    std::istringstream back(csv.str());
    const auto reloaded = read_canonical_csv(back);
    REQUIRE(reloaded.size() == result.records.size());
    for (std::size_t i = 0; i < reloaded.size(); ++i) {
        CHECK(reloaded[i].ts == result.records[i].ts);
        CHECK(reloaded[i].uid == result.records[i].uid);
        CHECK(reloaded[i].duration == result.records[i].duration);
        CHECK(reloaded[i].orig_bytes == result.records[i].orig_bytes);
        CHECK(reloaded[i].service == result.records[i].service);
        CHECK(reloaded[i].label == result.records[i].label);
    }
    // rewriting the reloaded records is byte-stable
    std::ostringstream csv2;
    write_canonical_csv(reloaded, csv2);
    CHECK(csv2.str() == csv.str());
}

TEST_CASE("build_label_vocab orders by frequency then name") {
    // scaled-down label distribution with the real 11 class names
    const auto records = records_with_counts({{"PartOfAHorizontalPortScan", 826},
                                              {"Okiru", 263},
                                              {"Benign", 198},
                                              {"DDoS", 139},
                                              {"Attack", 4},
                                              {"C&C-HeartBeat", 2},
                                              {"C&C-FileDownload", 1},
                                              {"C&C-Torii", 1},
                                              {"FileDownload", 1},
                                              {"C&C-HeartBeat-FileDownload", 1},
                                              {"C&C-Mirai", 1}});
    const LabelVocab vocab = build_label_vocab(records);
    CHECK(vocab.size() == 11);
    CHECK(vocab.names[0] == "PartOfAHorizontalPortScan");
    CHECK(vocab.names[1] == "Okiru");
    CHECK(vocab.names[2] == "Benign");
    CHECK(vocab.benign_id == 2);
    CHECK(vocab.id_of("PartOfAHorizontalPortScan") == 0);
}

TEST_CASE("build_label_vocab: single class and equal-count tie break") {
    const auto single = records_with_counts({{"Benign", 3}});
    const LabelVocab v1 = build_label_vocab(single);
    CHECK(v1.size() == 1);
    CHECK(v1.benign_id == 0);

    const auto tied = records_with_counts({{"Zeta", 5}, {"Alpha", 5}});
    const LabelVocab v2 = build_label_vocab(tied);
    CHECK(v2.names[0] == "Alpha");
    CHECK(v2.names[1] == "Zeta");
    CHECK_FALSE(v2.benign_id.has_value());
    CHECK_THROWS_AS(v2.require_benign(), DataError);
}

TEST_CASE("stratified_sample keeps small classes in full") {
    const auto records = records_with_counts({{"PartOfAHorizontalPortScan", 826},
                                              {"Okiru", 263},
                                              {"Benign", 198},
                                              {"DDoS", 139},
                                              {"C&C-HeartBeat", 349},
                                              {"Attack", 40},
                                              {"C&C-FileDownload", 43},
                                              {"C&C-Torii", 30},
                                              {"FileDownload", 13},
                                              {"C&C-HeartBeat-FileDownload", 8},
                                              {"C&C-Mirai", 1}});
    const auto sampled = stratified_sample(records, 500, 17);
    CHECK(sampled.size() == 500);
    std::map<std::string, int> counts;
    for (const auto& r : sampled) ++counts[r.label];
    // quota is 500/11 = 45: smaller classes survive whole
    CHECK(counts["C&C-Mirai"] == 1);
    CHECK(counts["FileDownload"] == 13);
    CHECK(counts["C&C-Torii"] == 30);
    CHECK(counts["C&C-FileDownload"] == 43);
    CHECK(counts["C&C-HeartBeat-FileDownload"] == 8);
    CHECK(counts["Attack"] == 40);
    CHECK(counts.size() == 11);
}

TEST_CASE("stratified_sample: equal classes split the budget evenly") {
    const auto records =
        records_with_counts({{"a", 100}, {"b", 100}, {"c", 100}});
    const auto s1 = stratified_sample(records, 30, 1);
    const auto s2 = stratified_sample(records, 30, 2);
    std::map<std::string, int> c1, c2;
    std::set<std::string> ids1, ids2;
    for (const auto& r : s1) {
        ++c1[r.label];
        ids1.insert(r.uid);
    }
    for (const auto& r : s2) {
        ++c2[r.label];
        ids2.insert(r.uid);
    }
    CHECK(c1["a"] == 10);
    CHECK(c1["b"] == 10);
    CHECK(c1["c"] == 10);
    CHECK(c2 == c1);
    CHECK(ids1 != ids2);  // different seeds pick different members

    // determinism
    const auto s1_again = stratified_sample(records, 30, 1);
    REQUIRE(s1_again.size() == s1.size());
    for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1_again[i].uid == s1[i].uid);
}

TEST_CASE("stratified_sample edge contracts") {
    const auto records = records_with_counts({{"a", 5}, {"b", 3}});
    const auto full = stratified_sample(records, records.size(), 9);
    REQUIRE(full.size() == records.size());
    for (std::size_t i = 0; i < full.size(); ++i) CHECK(full[i].uid == records[i].uid);

    CHECK_THROWS_AS(stratified_sample(records, 1, 9), DataError);
    CHECK_THROWS_AS(stratified_sample({}, 5, 9), DataError);
}

TEST_CASE("stratified_sample preserves the class set for any budget >= classes") {
    const auto records = records_with_counts(
        {{"a", 50}, {"b", 20}, {"c", 7}, {"d", 2}, {"e", 1}});
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t budget = 5 + rng.uniform_index(75);
        const auto sampled =
            stratified_sample(records, budget, rng.next_u64());
        std::set<std::string> classes;
        for (const auto& r : sampled) classes.insert(r.label);
        CHECK(classes.size() == 5);
        CHECK(sampled.size() == std::min<std::size_t>(budget, records.size()));
    }
}

TEST_CASE("split_train_test: stratified counts and determinism") {
    const auto records = records_with_counts(
        {{"a", 25}, {"b", 25}, {"c", 25}, {"d", 25}});
    const DatasetSplit split = split_train_test(records, 0.8, 4);
    CHECK(split.train.size() == 80);
    CHECK(split.test.size() == 20);
    std::map<std::string, int> train_counts, test_counts;
    for (const auto& r : split.train) ++train_counts[r.label];
    for (const auto& r : split.test) ++test_counts[r.label];
    for (const auto& name : {"a", "b", "c", "d"}) {
        CHECK(train_counts[name] == 20);
        CHECK(test_counts[name] == 5);
    }

    const DatasetSplit again = split_train_test(records, 0.8, 4);
    REQUIRE(again.train.size() == split.train.size());
    for (std::size_t i = 0; i < split.train.size(); ++i)
        CHECK(again.train[i].uid == split.train[i].uid);

    // disjoint by identity
    std::set<std::string> train_ids;
    for (const auto& r : split.train) train_ids.insert(r.uid);
    for (const auto& r : split.test) CHECK(train_ids.count(r.uid) == 0);
}

TEST_CASE("split_train_test: forced 1/1 split and singleton warning") {
    const auto two = records_with_counts({{"a", 2}});
    const DatasetSplit split = split_train_test(two, 0.5, 1);
    CHECK(split.train.size() == 1);
    CHECK(split.test.size() == 1);

    const auto with_singleton = records_with_counts({{"a", 10}, {"solo", 1}});
    const DatasetSplit s2 = split_train_test(with_singleton, 0.5, 1);
    REQUIRE(s2.singleton_classes.size() == 1);
    CHECK(s2.singleton_classes[0] == "solo");
    int solo_in_train = 0;
    for (const auto& r : s2.train) solo_in_train += r.label == "solo";
    CHECK(solo_in_train == 1);

    CHECK_THROWS_AS(split_train_test(two, 0.0, 1), DataError);
    CHECK_THROWS_AS(split_train_test(two, 1.0, 1), DataError);
}

TEST_CASE("split_train_test: sizes always add up") {
    const auto records = records_with_counts({{"a", 13}, {"b", 7}, {"c", 3}, {"d", 1}});
    Rng rng(5);
    for (int trial = 0; trial < 25; ++trial) {
        const double ratio = 0.05 + 0.9 * rng.uniform();
        const DatasetSplit split = split_train_test(records, ratio, rng.next_u64());
        CHECK(split.train.size() + split.test.size() == records.size());
    }
}
