#pragma once

#include <cstddef>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "allnc/tensor.hpp"

namespace allnc::io {

// Nine significant digits, the precision of every CSV this project writes.
std::string fmt9(double v);

// Rounds v to what fmt9 would print.
double quantize9(double v);
void quantize9(Tensor& t);

struct CsvTable {
    std::vector<std::string> header;  // empty when the file has none
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> lines;   // 1-based source line of each row
};

/// Numeric CSV with an optional header row.
///
/// The first non-blank line is taken as a header when any of its cells is
/// not a number. Throws ParseError (with line number) for an empty file,
/// ragged rows, or non-numeric cells.
CsvTable read_csv(const std::filesystem::path& path);

void write_csv_row(std::ostream& os, const std::vector<std::string>& cells);

// Matrix rows, optionally followed by one extra column per row.
void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const Tensor& m,
                      const std::vector<double>* extra_column = nullptr);

std::ofstream open_for_write(const std::filesystem::path& path);

}  // namespace allnc::io
