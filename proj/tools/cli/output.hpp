#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

namespace fastmr::cli {

using Json = nlohmann::ordered_json;

/// Scalar with the module operation that produced it.
inline Json traced(double value, const std::string& op) { return Json{{"value", value}, {"op", op}}; }

/// Column table; every cell comes from the one operation named in "op".
class Table {
public:
    Table(std::string op, std::vector<std::string> columns) : op_(std::move(op)), columns_(std::move(columns)) {}

    void add(std::vector<double> row) { rows_.push_back(std::move(row)); }
    std::size_t size() const { return rows_.size(); }
    const std::vector<std::vector<double>>& rows() const { return rows_; }

    Json to_json() const;
    /// Writes a header line and one line per row, shortest round-trip digits.
    void write_csv(const std::filesystem::path& path) const;

private:
    std::string op_;
    std::vector<std::string> columns_;
    std::vector<std::vector<double>> rows_;
};

/// Shortest decimal text that parses back to the same double.
std::string number_text(double v);

/// Writes text and a trailing newline, replacing the file.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace fastmr::cli
