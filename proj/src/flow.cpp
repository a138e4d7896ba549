#include "flow.hpp"

#include <algorithm>
#include <cctype>

#include "matrix.hpp"
#include "json.hpp"

namespace ecnet {

namespace {

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool is_separator(char c) { return c == ' ' || c == '\t' || c == '_' || c == '-'; }

}  // namespace

const char* proto_name(Proto p) {
    switch (p) {
        case Proto::tcp: return "tcp";
        case Proto::udp: return "udp";
        case Proto::icmp: return "icmp";
        default: return "other";
    }
}

Proto proto_from_string(const std::string& s) {
    const std::string t = to_lower(s);
    if (t == "tcp") return Proto::tcp;
    if (t == "udp") return Proto::udp;
    if (t == "icmp") return Proto::icmp;
    return Proto::other;
}

std::string canonical_label(const std::string& raw) {
    // trim
    std::size_t b = raw.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = raw.find_last_not_of(" \t\r\n");
    std::string s = raw.substr(b, e - b + 1);

    // drop a leading benign/malicious flag token when more follows
    std::size_t sp = s.find_first_of(" \t");
    if (sp != std::string::npos) {
        const std::string head = to_lower(s.substr(0, sp));
        if (head == "malicious" || head == "benign") {
            std::size_t rest = s.find_first_not_of(" \t", sp);
            if (rest != std::string::npos) s = s.substr(rest);
        }
    }

    // fold separator runs to single hyphens
    std::string out;
    out.reserve(s.size());
    bool pending_sep = false;
    for (char c : s) {
        if (is_separator(c)) {
            pending_sep = !out.empty();
        } else {
            if (pending_sep) out.push_back('-');
            pending_sep = false;
            out.push_back(c);
        }
    }
    if (to_lower(out) == "benign") return "Benign";
    return out;
}

int LabelVocab::id_of(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw DataError("unknown label '" + name + "'");
    return it->second;
}

int LabelVocab::require_benign() const {
    if (!benign_id) throw DataError("no benign class in label vocabulary");
    return *benign_id;
}

LabelVocab build_label_vocab(const std::vector<FlowRecord>& records) {
    if (records.empty()) throw DataError("build_label_vocab: empty record list");
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records) ++counts[r.label];

    std::vector<std::pair<std::string, std::size_t>> order(counts.begin(), counts.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    LabelVocab vocab;
    for (const auto& [name, count] : order) {
        vocab.index[name] = static_cast<int>(vocab.names.size());
        vocab.names.push_back(name);
    }
    for (int i = 0; i < vocab.size(); ++i) {
        if (to_lower(vocab.names[i]) == "benign") {
            vocab.benign_id = i;
            break;
        }
    }
    return vocab;
}

std::string vocab_to_json(const LabelVocab& vocab) {
    nlohmann::json j;
    j["version"] = 1;
    j["names"] = vocab.names;
    if (vocab.benign_id)
        j["benign"] = vocab.names[*vocab.benign_id];
    else
        j["benign"] = nullptr;
    return j.dump(2) + "\n";
}

LabelVocab vocab_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("vocab: invalid JSON: ") + e.what());
    }
    if (!j.contains("names") || !j["names"].is_array())
        throw DataError("vocab: missing 'names' array");
    LabelVocab vocab;
    for (const auto& n : j["names"]) {
        std::string name = n.get<std::string>();
        if (vocab.index.count(name)) throw DataError("vocab: duplicate name '" + name + "'");
        vocab.index[name] = static_cast<int>(vocab.names.size());
        vocab.names.push_back(std::move(name));
    }
    if (j.contains("benign") && !j["benign"].is_null()) {
        const std::string benign = j["benign"].get<std::string>();
        auto it = vocab.index.find(benign);
        if (it == vocab.index.end())
            throw DataError("vocab: benign class '" + benign + "' not in names");
        vocab.benign_id = it->second;
    }
    return vocab;
}

std::map<std::string, std::size_t> class_counts(const std::vector<FlowRecord>& records) {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records) ++counts[r.label];
    return counts;
}

std::vector<FlowRecord> stratified_sample(const std::vector<FlowRecord>& records,
                                          std::size_t budget, std::uint64_t seed) {
    if (records.empty()) throw DataError("stratified_sample: empty input");
    const auto counts = class_counts(records);
    const std::size_t n_classes = counts.size();
    if (budget < n_classes)
        throw DataError("stratified_sample: budget " + std::to_string(budget) +
                        " below class count " + std::to_string(n_classes));
    if (budget >= records.size()) return records;

    // stable class order: by id in the eventual vocab ordering is not needed
    // here; alphabetical keeps the allocation deterministic
    std::vector<std::string> class_names;
    for (const auto& [name, count] : counts) class_names.push_back(name);

    std::map<std::string, std::size_t> alloc;
    const std::size_t quota = budget / n_classes;
    std::size_t allocated = 0;
    for (const auto& name : class_names) {
        alloc[name] = std::min(counts.at(name), std::max<std::size_t>(quota, 1));
        allocated += alloc[name];
    }

    // hand leftover budget to classes with headroom, proportional to their
    // original frequency (largest-remainder rounding)
    while (allocated < budget) {
        std::size_t leftover = budget - allocated;
        std::vector<std::string> open;
        std::size_t open_total = 0;
        for (const auto& name : class_names) {
            if (alloc[name] < counts.at(name)) {
                open.push_back(name);
                open_total += counts.at(name);
            }
        }
        if (open.empty()) break;

        std::vector<std::pair<double, std::string>> remainders;
        std::size_t given = 0;
        for (const auto& name : open) {
            const double share = static_cast<double>(leftover) *
                                 static_cast<double>(counts.at(name)) /
                                 static_cast<double>(open_total);
            std::size_t take = std::min(static_cast<std::size_t>(share),
                                        counts.at(name) - alloc[name]);
            alloc[name] += take;
            given += take;
            remainders.emplace_back(share - static_cast<double>(take), name);
        }
        // one extra each to the largest fractional remainders
        std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (const auto& [frac, name] : remainders) {
            if (given >= leftover) break;
            if (alloc[name] < counts.at(name)) {
                ++alloc[name];
                ++given;
            }
        }
        allocated += given;
        if (given == 0) break;  // all classes saturated
    }

    // per-class index pools in input order
    std::map<std::string, std::vector<std::size_t>> pools;
    for (std::size_t i = 0; i < records.size(); ++i) pools[records[i].label].push_back(i);

    Rng rng(seed);
    std::vector<std::size_t> chosen;
    chosen.reserve(budget);
    for (const auto& name : class_names) {
        auto& pool = pools[name];
        const std::size_t take = alloc[name];
        if (take >= pool.size()) {
            chosen.insert(chosen.end(), pool.begin(), pool.end());
        } else {
            rng.shuffle(pool);
            chosen.insert(chosen.end(), pool.begin(), pool.begin() + take);
        }
    }
    std::sort(chosen.begin(), chosen.end());

    std::vector<FlowRecord> out;
    out.reserve(chosen.size());
    for (std::size_t i : chosen) out.push_back(records[i]);
    return out;
}

DatasetSplit split_train_test(const std::vector<FlowRecord>& records, double ratio,
                              std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw DataError("split_train_test: ratio must be in (0,1)");
    if (records.empty()) throw DataError("split_train_test: empty input");

    std::map<std::string, std::vector<std::size_t>> pools;
    for (std::size_t i = 0; i < records.size(); ++i) pools[records[i].label].push_back(i);

    DatasetSplit split;
    split.seed = seed;
    split.ratio = ratio;

    Rng rng(seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (auto& [name, pool] : pools) {
        const std::size_t count = pool.size();
        if (count == 1) {
            split.singleton_classes.push_back(name);
            train_idx.push_back(pool[0]);
            continue;
        }
        std::size_t n_train = static_cast<std::size_t>(
            static_cast<double>(count) * ratio);
        n_train = std::clamp<std::size_t>(n_train, 1, count - 1);
        rng.shuffle(pool);
        for (std::size_t k = 0; k < count; ++k)
            (k < n_train ? train_idx : test_idx).push_back(pool[k]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    for (std::size_t i : train_idx) split.train.push_back(records[i]);
    for (std::size_t i : test_idx) split.test.push_back(records[i]);
    return split;
}

}  // namespace ecnet
