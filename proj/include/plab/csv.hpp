#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace plab {

/// Shortest decimal text that reads back to the same double.
std::string format_number(double value);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;  // throws DataError if absent
};

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Matrix as a headerless grid, one row per line.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& values);

/// Comma-separated, no quoting. Throws DataError on ragged rows (with line number).
CsvTable read_csv(const std::filesystem::path& path, bool has_header = true);

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

}  // namespace plab
