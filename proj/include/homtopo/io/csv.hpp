#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "homtopo/core/errors.hpp"

namespace homtopo {

/// Round-trip formatting of a double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_row(const std::vector<double> &values) {
    std::string s;
    for (size_t i = 0; i < values.size(); ++i) {
        if (i) s += ',';
        s += format_double(values[i]);
    }
    return s;
}

/// Row-based CSV table with a header line.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    void write(const std::string &path, const std::string &comment = {}) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot open " + path + " for writing");
        if (!comment.empty()) out << "# " << comment << "\n";
        for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
        out << "\n";
        for (const auto &r : rows) out << csv_row(r) << "\n";
    }

    static CsvTable read(const std::string &path, std::string *comment = nullptr) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open " + path);
        CsvTable t;
        std::string line;
        bool have_header = false;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (line[0] == '#') {
                if (comment) *comment = line.size() > 2 ? line.substr(2) : "";
                continue;
            }
            std::stringstream ss(line);
            std::string cell;
            if (!have_header) {
                while (std::getline(ss, cell, ',')) t.header.push_back(cell);
                have_header = true;
                continue;
            }
            std::vector<double> row;
            while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
            if (row.size() != t.header.size()) throw Error("malformed row in " + path);
            t.rows.push_back(std::move(row));
        }
        return t;
    }
};

/// Writes a per-entity field as rows (index, value...).
template <class Matrix>
void write_field_csv(const std::string &path, const std::vector<std::string> &names, const Matrix &values) {
    CsvTable t;
    t.header.push_back("index");
    t.header.insert(t.header.end(), names.begin(), names.end());
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        std::vector<double> row{static_cast<double>(i)};
        for (Eigen::Index j = 0; j < values.cols(); ++j) row.push_back(values(i, j));
        t.rows.push_back(std::move(row));
    }
    t.write(path);
}

}  // namespace homtopo
