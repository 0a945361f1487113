#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace celldiag {

/// Flat key-value config file: one `name = value` per line, `#` comments,
/// blank lines ignored. Keys may use dots for namespacing. Parse errors
/// carry the offending line number.
class KvFile {
public:
    KvFile() = default;

    static KvFile parse_file(const std::filesystem::path& path);
    static KvFile parse_string(const std::string& text, const std::string& origin = "<string>");

    [[nodiscard]] bool has(const std::string& key) const;

    [[nodiscard]] std::string get_string(const std::string& key) const;
    [[nodiscard]] double get_double(const std::string& key) const;
    [[nodiscard]] long get_int(const std::string& key) const;
    [[nodiscard]] bool get_bool(const std::string& key) const;

    [[nodiscard]] std::string get_string_or(const std::string& key, const std::string& fallback) const;
    [[nodiscard]] double get_double_or(const std::string& key, double fallback) const;
    [[nodiscard]] long get_int_or(const std::string& key, long fallback) const;
    [[nodiscard]] bool get_bool_or(const std::string& key, bool fallback) const;

    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, long value);
    void set(const std::string& key, bool value);

    /// Keys with the given prefix (prefix itself excluded), in file order.
    [[nodiscard]] std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
    [[nodiscard]] const std::vector<std::string>& keys() const { return order_; }

    /// Serialize in insertion order, `key = value` lines, LF endings.
    [[nodiscard]] std::string to_string() const;
    void write_file(const std::filesystem::path& path) const;

    [[nodiscard]] const std::string& origin() const { return origin_; }

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
    std::string origin_;
};

/// Format a double for config/CSV output ('.' decimal separator, locale-free).
[[nodiscard]] std::string format_double(double v);

/// Locale-independent strict double parse of a full token.
[[nodiscard]] double parse_double(const std::string& s);

/// Write `content` to `path` atomically (temp file in the same directory + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace celldiag
