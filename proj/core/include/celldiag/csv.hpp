#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace celldiag {

/// Minimal comma-separated table: header row + numeric columns.
/// All files use LF line endings and '.' decimal separator.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    [[nodiscard]] std::size_t column(const std::string& name) const;
    [[nodiscard]] std::size_t size() const { return rows.size(); }
};

CsvTable read_csv(const std::filesystem::path& path);

/// Serialize and write atomically. Values formatted with %.12g.
void write_csv(const std::filesystem::path& path, const CsvTable& table);

std::string csv_to_string(const CsvTable& table);

}  // namespace celldiag
