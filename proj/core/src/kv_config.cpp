#include "celldiag/kv_config.hpp"

#include "celldiag/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <system_error>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace celldiag {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, e - b + 1);
}

}  // namespace

KvFile KvFile::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path.string());
}

KvFile KvFile::parse_string(const std::string& text, const std::string& origin) {
    KvFile f;
    f.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected `name = value`, got: " + line);
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        }
        if (!f.values_.count(key)) f.order_.push_back(key);
        f.values_[key] = value;
    }
    return f;
}

bool KvFile::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KvFile::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(origin_ + ": missing key `" + key + "`");
    return it->second;
}

double KvFile::get_double(const std::string& key) const {
    const std::string s = get_string(key);
    try {
        return parse_double(s);
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": key `" + key + "` is not a number: " + s);
    }
}

long KvFile::get_int(const std::string& key) const {
    const std::string s = get_string(key);
    try {
        size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": key `" + key + "` is not an integer: " + s);
    }
}

bool KvFile::get_bool(const std::string& key) const {
    std::string s = get_string(key);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(origin_ + ": key `" + key + "` is not a boolean: " + s);
}

std::string KvFile::get_string_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}
double KvFile::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}
long KvFile::get_int_or(const std::string& key, long fallback) const {
    return has(key) ? get_int(key) : fallback;
}
bool KvFile::get_bool_or(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

void KvFile::set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = value;
}
void KvFile::set(const std::string& key, double value) { set(key, format_double(value)); }
void KvFile::set(const std::string& key, long value) { set(key, std::to_string(value)); }
void KvFile::set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

std::vector<std::string> KvFile::keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& k : order_) {
        if (k.size() > prefix.size() && k.compare(0, prefix.size(), prefix) == 0) out.push_back(k);
    }
    return out;
}

std::string KvFile::to_string() const {
    std::string out;
    for (const auto& k : order_) {
        out += k;
        out += " = ";
        out += values_.at(k);
        out += "\n";
    }
    return out;
}

void KvFile::write_file(const std::filesystem::path& path) const {
    write_file_atomic(path, to_string());
}

std::string format_double(double v) {
    // locale-independent: the persisted formats pin the '.' decimal separator
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    bool negative = false;
    if (b < e && (*b == '+' || *b == '-')) {
        negative = *b == '-';
        ++b;
    }
    double v = 0.0;
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc{} || res.ptr != e) {
        throw std::invalid_argument("not a number: " + s);
    }
    return negative ? -v : v;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path dir = path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

}  // namespace celldiag
