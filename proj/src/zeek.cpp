#include "zeek.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <system_error>

namespace ecnet {

namespace {

constexpr const char* kUnset = "-";
constexpr const char* kEmpty = "(empty)";

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

bool parse_double(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

bool parse_port(const std::string& s, int& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && out >= 0 && out <= 65535;
}

char parse_separator(const std::string& spec) {
    if (spec.size() >= 4 && spec[0] == '\\' && (spec[1] == 'x' || spec[1] == 'X')) {
        int value = 0;
        auto [ptr, ec] = std::from_chars(spec.data() + 2, spec.data() + 4, value, 16);
        if (ec == std::errc()) return static_cast<char>(value);
    }
    return spec.empty() ? '\t' : spec[0];
}

struct ColumnMap {
    int ts = -1, uid = -1, orig_h = -1, orig_p = -1, resp_h = -1, resp_p = -1;
    int proto = -1, service = -1, duration = -1, orig_bytes = -1, resp_bytes = -1;
    int conn_state = -1, orig_pkts = -1, resp_pkts = -1;
    int label = -1, detailed = -1, tunnel = -1;
};

ColumnMap map_columns(const std::vector<std::string>& fields, std::size_t line_no) {
    ColumnMap m;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        const std::string& f = fields[i];
        const int idx = static_cast<int>(i);
        if (f == "ts") m.ts = idx;
        else if (f == "uid") m.uid = idx;
        else if (f == "id.orig_h") m.orig_h = idx;
        else if (f == "id.orig_p") m.orig_p = idx;
        else if (f == "id.resp_h") m.resp_h = idx;
        else if (f == "id.resp_p") m.resp_p = idx;
        else if (f == "proto") m.proto = idx;
        else if (f == "service") m.service = idx;
        else if (f == "duration") m.duration = idx;
        else if (f == "orig_bytes") m.orig_bytes = idx;
        else if (f == "resp_bytes") m.resp_bytes = idx;
        else if (f == "conn_state") m.conn_state = idx;
        else if (f == "orig_pkts") m.orig_pkts = idx;
        else if (f == "resp_pkts") m.resp_pkts = idx;
        else if (f == "label") m.label = idx;
        else if (f == "detailed-label") m.detailed = idx;
        else if (f == "tunnel_parents") m.tunnel = idx;
    }
    auto require = [&](int col, const char* name) {
        if (col < 0)
            throw ZeekParseError("line " + std::to_string(line_no) +
                                 ": #fields header missing column '" + name + "'");
    };
    require(m.ts, "ts");
    require(m.uid, "uid");
    require(m.orig_h, "id.orig_h");
    require(m.orig_p, "id.orig_p");
    require(m.resp_h, "id.resp_h");
    require(m.resp_p, "id.resp_p");
    require(m.proto, "proto");
    require(m.conn_state, "conn_state");
    if (m.label < 0 && m.detailed < 0)
        throw ZeekParseError("line " + std::to_string(line_no) +
                             ": #fields header has no label/detailed-label column");
    return m;
}

bool unset(const std::string& v) { return v == kUnset; }

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

ParseResult parse_zeek_log(std::istream& input) {
    ParseResult result;
    ColumnMap cols;
    bool have_fields = false;
    char sep = '\t';
    std::size_t line_no = 0;
    std::string line;

    while (std::getline(input, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        if (line[0] == '#') {
            if (line.rfind("#separator", 0) == 0) {
                std::size_t pos = line.find_first_of(" \t");
                if (pos != std::string::npos)
                    sep = parse_separator(line.substr(line.find_first_not_of(" \t", pos)));
            } else if (line.rfind("#fields", 0) == 0) {
                auto parts = split(line, sep);
                result.fields.assign(parts.begin() + 1, parts.end());
                cols = map_columns(result.fields, line_no);
                have_fields = true;
            }
            continue;
        }

        if (!have_fields)
            throw ZeekParseError("line " + std::to_string(line_no) +
                                 ": data before #fields header (no #fields)");

        auto values = split(line, sep);

        // Some labeled captures jam "tunnel_parents label detailed-label"
        // into one cell with space separators; unpack that cell.
        if (values.size() != result.fields.size() && !values.empty()) {
            auto tail = split_ws(values.back());
            if (values.size() + tail.size() - 1 == result.fields.size()) {
                values.pop_back();
                values.insert(values.end(), tail.begin(), tail.end());
            }
        }
        if (values.size() != result.fields.size()) {
            result.issues.push_back({line_no, "expected " +
                                                  std::to_string(result.fields.size()) +
                                                  " columns, got " +
                                                  std::to_string(values.size())});
            continue;
        }

        FlowRecord rec;
        bool bad = false;
        auto fail = [&](const std::string& msg) {
            result.issues.push_back({line_no, msg});
            bad = true;
        };

        const std::string& ts_v = values[cols.ts];
        if (!parse_double(ts_v, rec.ts)) fail("bad ts '" + ts_v + "'");
        rec.uid = values[cols.uid];
        rec.orig_host = values[cols.orig_h];
        rec.resp_host = values[cols.resp_h];

        auto read_port = [&](int col, const char* name) -> std::optional<int> {
            const std::string& v = values[col];
            if (unset(v)) return std::nullopt;
            int port = 0;
            if (!parse_port(v, port)) {
                fail(std::string("bad ") + name + " '" + v + "'");
                return std::nullopt;
            }
            return port;
        };
        rec.orig_port = read_port(cols.orig_p, "id.orig_p");
        rec.resp_port = read_port(cols.resp_p, "id.resp_p");

        rec.proto = proto_from_string(values[cols.proto]);
        if (cols.service >= 0) {
            const std::string& v = values[cols.service];
            if (!unset(v)) rec.service = (v == kEmpty) ? std::string() : v;
        }
        if (cols.duration >= 0 && !unset(values[cols.duration])) {
            double d = 0.0;
            if (!parse_double(values[cols.duration], d) || d < 0.0)
                fail("bad duration '" + values[cols.duration] + "'");
            else
                rec.duration = d;
        }
        auto read_count = [&](int col, const char* name) -> std::optional<std::uint64_t> {
            if (col < 0 || unset(values[col])) return std::nullopt;
            std::uint64_t n = 0;
            if (!parse_u64(values[col], n)) {
                fail(std::string("bad ") + name + " '" + values[col] + "'");
                return std::nullopt;
            }
            return n;
        };
        rec.orig_bytes = read_count(cols.orig_bytes, "orig_bytes");
        rec.resp_bytes = read_count(cols.resp_bytes, "resp_bytes");
        rec.conn_state = values[cols.conn_state];
        rec.orig_pkts = read_count(cols.orig_pkts, "orig_pkts");
        rec.resp_pkts = read_count(cols.resp_pkts, "resp_pkts");

        if (cols.detailed >= 0 && !unset(values[cols.detailed]))
            rec.label_raw = values[cols.detailed];
        else if (cols.label >= 0 && !unset(values[cols.label]))
            rec.label_raw = values[cols.label];
        else
            fail("no label value");
        rec.label = canonical_label(rec.label_raw);
        if (!bad && rec.label.empty()) fail("empty label after canonicalization");

        if (!bad) result.records.push_back(std::move(rec));
    }

    if (!have_fields)
        throw ZeekParseError("line " + std::to_string(line_no + 1) +
                             ": no #fields header in input");
    return result;
}

namespace {

const char* kTsvFields =
    "ts\tuid\tid.orig_h\tid.orig_p\tid.resp_h\tid.resp_p\tproto\tservice\t"
    "duration\torig_bytes\tresp_bytes\tconn_state\torig_pkts\tresp_pkts\tlabel";
const char* kTsvTypes =
    "time\tstring\taddr\tport\taddr\tport\tenum\tstring\tinterval\tcount\t"
    "count\tstring\tcount\tcount\tstring";

template <typename T>
std::string opt_count(const std::optional<T>& v) {
    return v ? std::to_string(*v) : std::string(kUnset);
}

}  // namespace

void write_zeek_tsv(const std::vector<FlowRecord>& records, std::ostream& out) {
    out << "#separator \\x09\n#set_separator\t,\n#empty_field\t(empty)\n"
        << "#unset_field\t-\n#path\tconn\n";
    out << "#fields\t" << kTsvFields << "\n#types\t" << kTsvTypes << "\n";
    for (const auto& r : records) {
        out << format_double(r.ts) << '\t' << r.uid << '\t' << r.orig_host << '\t'
            << opt_count(r.orig_port) << '\t' << r.resp_host << '\t'
            << opt_count(r.resp_port) << '\t' << proto_name(r.proto) << '\t';
        if (r.service)
            out << (r.service->empty() ? kEmpty : r.service->c_str());
        else
            out << kUnset;
        out << '\t' << (r.duration ? format_double(*r.duration) : kUnset) << '\t'
            << opt_count(r.orig_bytes) << '\t' << opt_count(r.resp_bytes) << '\t'
            << r.conn_state << '\t' << opt_count(r.orig_pkts) << '\t'
            << opt_count(r.resp_pkts) << '\t' << r.label_raw << '\n';
    }
}

namespace {

const char* kCsvHeader =
    "ts,uid,orig_host,orig_port,resp_host,resp_port,proto,service,duration,"
    "orig_bytes,resp_bytes,conn_state,orig_pkts,resp_pkts,label";

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

}  // namespace

void write_canonical_csv(const std::vector<FlowRecord>& records, std::ostream& out) {
    out << kCsvHeader << '\n';
    for (const auto& r : records) {
        out << format_double(r.ts) << ',' << csv_escape(r.uid) << ','
            << csv_escape(r.orig_host) << ','
            << (r.orig_port ? std::to_string(*r.orig_port) : "") << ','
            << csv_escape(r.resp_host) << ','
            << (r.resp_port ? std::to_string(*r.resp_port) : "") << ','
            << proto_name(r.proto) << ',';
        if (r.service) out << csv_escape(r.service->empty() ? kEmpty : *r.service);
        out << ',' << (r.duration ? format_double(*r.duration) : "") << ','
            << (r.orig_bytes ? std::to_string(*r.orig_bytes) : "") << ','
            << (r.resp_bytes ? std::to_string(*r.resp_bytes) : "") << ','
            << csv_escape(r.conn_state) << ','
            << (r.orig_pkts ? std::to_string(*r.orig_pkts) : "") << ','
            << (r.resp_pkts ? std::to_string(*r.resp_pkts) : "") << ','
            << csv_escape(r.label) << '\n';
    }
}

std::vector<FlowRecord> read_canonical_csv(std::istream& input) {
    std::string line;
    if (!std::getline(input, line)) throw DataError("csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader)
        throw DataError("csv: unexpected header '" + line + "'");

    std::vector<FlowRecord> records;
    std::size_t line_no = 1;
    while (std::getline(input, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto v = csv_split(line);
        if (v.size() != 15)
            throw DataError("csv line " + std::to_string(line_no) + ": expected 15 columns, got " +
                            std::to_string(v.size()));
        FlowRecord r;
        auto bad = [&](const std::string& what) {
            throw DataError("csv line " + std::to_string(line_no) + ": bad " + what);
        };
        if (!parse_double(v[0], r.ts)) bad("ts");
        r.uid = v[1];
        r.orig_host = v[2];
        if (!v[3].empty()) {
            int p;
            if (!parse_port(v[3], p)) bad("orig_port");
            r.orig_port = p;
        }
        r.resp_host = v[4];
        if (!v[5].empty()) {
            int p;
            if (!parse_port(v[5], p)) bad("resp_port");
            r.resp_port = p;
        }
        r.proto = proto_from_string(v[6]);
        if (!v[7].empty()) r.service = (v[7] == kEmpty) ? std::string() : v[7];
        if (!v[8].empty()) {
            double d;
            if (!parse_double(v[8], d)) bad("duration");
            r.duration = d;
        }
        auto read_count = [&](const std::string& s, const char* what) -> std::optional<std::uint64_t> {
            if (s.empty()) return std::nullopt;
            std::uint64_t n;
            if (!parse_u64(s, n)) bad(what);
            return n;
        };
        r.orig_bytes = read_count(v[9], "orig_bytes");
        r.resp_bytes = read_count(v[10], "resp_bytes");
        r.conn_state = v[11];
        r.orig_pkts = read_count(v[12], "orig_pkts");
        r.resp_pkts = read_count(v[13], "resp_pkts");
        r.label = v[14];
        r.label_raw = v[14];
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace ecnet
