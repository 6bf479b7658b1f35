#include "allnc/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "allnc/errors.hpp"

namespace allnc::io {

std::string fmt9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

double quantize9(double v) { return std::strtod(fmt9(v).c_str(), nullptr); }

void quantize9(Tensor& t) {
    for (double& v : t.data()) v = quantize9(v);
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string(), 0);
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    std::size_t width = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        std::vector<double> row(cells.size());
        bool numeric = true;
        for (std::size_t i = 0; i < cells.size(); ++i) numeric = numeric && parse_double(cells[i], row[i]);
        if (first) {
            first = false;
            width = cells.size();
            if (!numeric) {
                table.header = cells;
                continue;
            }
        }
        if (cells.size() != width) {
            throw ParseError(path.string() + ": expected " + std::to_string(width) + " columns, found " +
                                 std::to_string(cells.size()),
                             lineno);
        }
        if (!numeric) throw ParseError(path.string() + ": non-numeric cell", lineno);
        table.rows.push_back(std::move(row));
        table.lines.push_back(lineno);
    }
    if (table.rows.empty()) throw ParseError(path.string() + ": no data rows", lineno == 0 ? 1 : lineno);
    return table;
}

void write_csv_row(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    return os;
}

void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const Tensor& m,
                      const std::vector<double>* extra_column) {
    std::ofstream os = open_for_write(path);
    write_csv_row(os, header);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? "," : "") << fmt9(m(r, c));
        if (extra_column != nullptr) os << ',' << fmt9((*extra_column)[r]);
        os << '\n';
    }
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace allnc::io
