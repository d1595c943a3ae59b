#include "output.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace fastmr::cli {

std::string number_text(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

Json Table::to_json() const {
    Json rows = Json::array();
    for (const auto& r : rows_) rows.push_back(r);
    return Json{{"op", op_}, {"columns", columns_}, {"rows", std::move(rows)}};
}

void Table::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t c = 0; c < columns_.size(); ++c) out << (c ? "," : "") << columns_[c];
    out << "\n";
    for (const auto& r : rows_) {
        for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << number_text(r[c]);
        out << "\n";
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text << "\n";
}

}  // namespace fastmr::cli
