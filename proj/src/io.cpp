#include "attribaudit/io.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>

#include "attribaudit/errors.hpp"

namespace attribaudit::io {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("to_chars failed");
    return std::string(buf, ptr);
}

std::string format_int(long long v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("to_chars failed");
    return std::string(buf, ptr);
}

double parse_double(std::string_view s, const std::string& what) {
    s = trim(s);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw ConfigError(what + ": '" + std::string(s) + "' is not a number");
    }
    return v;
}

long long parse_int(std::string_view s, const std::string& what) {
    s = trim(s);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw ConfigError(what + ": '" + std::string(s) + "' is not an integer");
    }
    return v;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("short write on '" + tmp + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw Error("rename '" + tmp + "' -> '" + path + "': " + ec.message());
}

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw SchemaError(path, 1, name, "missing column");
}

const std::string& CsvTable::field(std::size_t row, std::size_t col) const {
    return rows[row][col];
}

double CsvTable::field_double(std::size_t row, std::size_t col) const {
    const std::string& s = rows[row][col];
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw SchemaError(path, line_numbers[row], header[col],
                          "'" + s + "' is not a number");
    }
    return v;
}

long long CsvTable::field_int(std::size_t row, std::size_t col) const {
    const std::string& s = rows[row][col];
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw SchemaError(path, line_numbers[row], header[col],
                          "'" + s + "' is not an integer");
    }
    return v;
}

CsvTable read_csv(const std::string& path,
                  const std::vector<std::string>& required_columns) {
    const std::string text = read_file(path);
    CsvTable t;
    t.path = path;
    std::size_t line_no = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i != text.size() && text[i] != '\n') continue;
        std::string_view line(text.data() + start, i - start);
        start = i + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        if (line.empty()) continue;
        auto fields = split(line, ',');
        for (auto& f : fields) f = std::string(trim(f));
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw SchemaError(path, line_no, "(row)",
                              "expected " + std::to_string(t.header.size()) +
                                  " fields, got " + std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(line_no);
    }
    if (t.header.empty()) throw SchemaError(path, 1, "(header)", "empty file");
    for (const auto& c : required_columns) t.column(c);
    return t;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvWriter::add_row(std::vector<std::string> fields) {
    if (fields.size() != header_.size()) {
        throw Error("csv row width mismatch");
    }
    rows_.push_back(std::move(fields));
}

std::string CsvWriter::str() const {
    std::string out;
    auto emit = [&out](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out += ',';
            out += fields[i];
        }
        out += '\n';
    };
    emit(header_);
    for (const auto& r : rows_) emit(r);
    return out;
}

void CsvWriter::write(const std::string& path) const { write_file_atomic(path, str()); }

Config Config::parse_file(const std::string& path) {
    return parse_string(read_file(path), path);
}

Config Config::parse_string(std::string_view text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::string section;
    std::size_t line_no = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i != text.size() && text[i] != '\n') continue;
        std::string_view raw(text.data() + start, i - start);
        start = i + 1;
        ++line_no;
        std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": malformed section header '" + std::string(line) + "'");
            }
            section = std::string(trim(line.substr(1, line.size() - 2)));
            cfg.sections_[section];
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + std::string(line) + "'");
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

bool Config::has_section(const std::string& section) const {
    return sections_.count(section) != 0;
}

bool Config::has(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) != 0;
}

const std::string& Config::get(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    if (it != sections_.end()) {
        auto kv = it->second.find(key);
        if (kv != it->second.end()) return kv->second;
    }
    throw ConfigError(origin_ + ": missing key '" + key + "' in section [" + section + "]");
}

std::string Config::get_or(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
    return has(section, key) ? get(section, key) : fallback;
}

double Config::get_double(const std::string& section, const std::string& key) const {
    return parse_double(get(section, key), "[" + section + "] " + key);
}

double Config::get_double_or(const std::string& section, const std::string& key,
                             double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

long long Config::get_int(const std::string& section, const std::string& key) const {
    return parse_int(get(section, key), "[" + section + "] " + key);
}

long long Config::get_int_or(const std::string& section, const std::string& key,
                             long long fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

bool Config::get_bool_or(const std::string& section, const std::string& key,
                         bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& v = get(section, key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("[" + section + "] " + key + ": '" + v + "' is not a boolean");
}

std::vector<std::string> Config::get_list(const std::string& section,
                                          const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& part : split(get(section, key), ',')) {
        std::string item(trim(part));
        if (!item.empty()) out.push_back(std::move(item));
    }
    return out;
}

void Config::set(const std::string& section, const std::string& key, std::string value) {
    sections_[section][key] = std::move(value);
}

std::uint64_t Config::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](std::string_view s) {
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
    };
    // std::map keeps both levels sorted, so the digest ignores source order.
    for (const auto& [section, kvs] : sections_) {
        for (const auto& [key, value] : kvs) {
            feed(section);
            feed(".");
            feed(key);
            feed("=");
            feed(value);
            feed("\n");
        }
    }
    return h;
}

}  // namespace attribaudit::io
