#include "plab/csv.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>

#include "plab/error.hpp"

namespace plab {

std::string format_number(double value) {
    return fmt::format("{}", value);
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw DataError("no column named '" + std::string(name) + "'");
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ResourceError("cannot write " + path.string());
    return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        out << row[i];
    }
    out << '\n';
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    auto out = open_out(path);
    write_row(out, header);
    for (const auto& r : rows) {
        if (r.size() != header.size()) {
            throw ContractError("csv row has " + std::to_string(r.size()) + " fields, header has " +
                                std::to_string(header.size()));
        }
        write_row(out, r);
    }
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& values) {
    auto out = open_out(path);
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            if (c) out << ',';
            out << format_number(values(r, c));
        }
        out << '\n';
    }
}

CsvTable read_csv(const std::filesystem::path& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_line(line);
        if (width == 0) {
            width = fields.size();
        } else if (fields.size() != width) {
            throw DataError(path.string() + " line " + std::to_string(line_no) + ": expected " +
                            std::to_string(width) + " fields, got " + std::to_string(fields.size()));
        }
        if (has_header && table.header.empty()) {
            table.header = std::move(fields);
        } else {
            table.rows.push_back(std::move(fields));
        }
    }
    return table;
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
    const auto table = read_csv(path, false);
    const auto rows = static_cast<Eigen::Index>(table.rows.size());
    const auto cols = rows ? static_cast<Eigen::Index>(table.rows.front().size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto& s = table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            double v = 0;
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || ptr != s.data() + s.size()) {
                throw DataError(path.string() + " row " + std::to_string(r + 1) + ": '" + s +
                                "' is not a number");
            }
            m(r, c) = v;
        }
    }
    return m;
}

}  // namespace plab
