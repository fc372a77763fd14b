#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

// File plumbing shared by every module: locale-independent number text,
// a small CSV layer (no quoting; none of our schemas need it), the
// `[section]` / `key = value` config format, and atomic file writes.

namespace attribaudit::io {

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Shortest text that round-trips the value (std::to_chars).
std::string format_double(double v);
std::string format_int(long long v);

// Throw ConfigError on trailing garbage, empty input, or non-finite text.
double parse_double(std::string_view s, const std::string& what);
long long parse_int(std::string_view s, const std::string& what);

std::string read_file(const std::string& path);

// Write to <path>.tmp then rename, so readers never see a partial file.
void write_file_atomic(const std::string& path, std::string_view content);

struct CsvTable {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line per row

    std::size_t column(const std::string& name) const;  // SchemaError if absent
    const std::string& field(std::size_t row, std::size_t col) const;
    double field_double(std::size_t row, std::size_t col) const;
    long long field_int(std::size_t row, std::size_t col) const;
};

// Header must contain required_columns; ragged rows are schema errors.
CsvTable read_csv(const std::string& path,
                  const std::vector<std::string>& required_columns);

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void add_row(std::vector<std::string> fields);
    std::string str() const;
    void write(const std::string& path) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// `[section]` headers, `key = value` lines, `#`/`;` comments.
class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse_string(std::string_view text, const std::string& origin);

    bool has_section(const std::string& section) const;
    bool has(const std::string& section, const std::string& key) const;
    const std::string& get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const;
    long long get_int(const std::string& section, const std::string& key) const;
    long long get_int_or(const std::string& section, const std::string& key,
                         long long fallback) const;
    bool get_bool_or(const std::string& section, const std::string& key,
                     bool fallback) const;
    std::vector<std::string> get_list(const std::string& section,
                                      const std::string& key) const;  // comma-split

    void set(const std::string& section, const std::string& key, std::string value);
    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

    // FNV-1a over sorted section.key=value lines; insensitive to key order.
    std::uint64_t hash() const;

    const std::string& origin() const { return origin_; }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
    std::string origin_;
};

}  // namespace attribaudit::io
