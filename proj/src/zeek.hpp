#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "flow.hpp"

namespace ecnet {

/// Unrecoverable log-structure problem (e.g. no #fields header).
class ZeekParseError : public DataError {
public:
    using DataError::DataError;
};

struct ParseIssue {
    std::size_t line_no = 0;
    std::string message;
};

struct ParseResult {
    std::vector<FlowRecord> records;
    std::vector<ParseIssue> issues;  // skipped data lines
    std::vector<std::string> fields;  // header column names
};

/// Parse a labeled Zeek conn log (tab-separated, `-` = unset, `(empty)` =
/// empty). Comment lines are skipped; a data line before any #fields header
/// is fatal. Data lines with a wrong column count or unparseable numerics
/// are skipped and reported in `issues`.
ParseResult parse_zeek_log(std::istream& input);

/// Serialize records back to the labeled conn-log TSV layout (fixed column
/// order, `-` for absent optionals, shortest round-trip float formatting).
void write_zeek_tsv(const std::vector<FlowRecord>& records, std::ostream& out);

/// Canonical CSV: header row, fixed column order
/// ts,uid,orig_host,orig_port,resp_host,resp_port,proto,service,duration,
/// orig_bytes,resp_bytes,conn_state,orig_pkts,resp_pkts,label
/// with empty cells for absent optionals.
void write_canonical_csv(const std::vector<FlowRecord>& records, std::ostream& out);
std::vector<FlowRecord> read_canonical_csv(std::istream& input);

/// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace ecnet
