#include "celldiag/csv.hpp"

#include "celldiag/errors.hpp"
#include "celldiag/kv_config.hpp"

#include <fstream>
#include <sstream>

namespace celldiag {

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw ConfigError("csv: no column named `" + name + "`");
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open csv file: " + path.string());
    CsvTable t;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (lineno == 1) {
            t.header = cells;
            continue;
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            try {
                row.push_back(parse_double(c));
            } catch (const std::exception&) {
                throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                  ": not a number: " + c);
            }
        }
        if (row.size() != t.header.size()) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected " + std::to_string(t.header.size()) + " columns, got " +
                              std::to_string(row.size()));
        }
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw ConfigError(path.string() + ": empty csv");
    return t;
}

std::string csv_to_string(const CsvTable& table) {
    std::string out;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) out += ',';
        out += table.header[i];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_double(row[i]);
        }
        out += '\n';
    }
    return out;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    write_file_atomic(path, csv_to_string(table));
}

}  // namespace celldiag
