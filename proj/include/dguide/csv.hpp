#pragma once

// CSV output with a schema line, an optional timestamp line and a header row.

#include <iosfwd>
#include <string>
#include <vector>

namespace dguide {

struct CsvOptions {
  bool timestamp = true;
};

/// "# schema: <name> v<version>", then "# generated: <UTC time>" unless
/// suppressed, then the header row.
void write_csv_preamble(std::ostream& out, const std::string& schema, int version,
                        const std::vector<std::string>& columns, const CsvOptions& options);

/// Shortest round-trip decimal form of a double ("nan", "inf" for specials).
std::string format_number(double v);

/// Quotes a field if it contains a comma, quote or newline.
std::string csv_field(const std::string& s);

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace dguide
