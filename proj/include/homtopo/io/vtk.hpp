#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "homtopo/io/csv.hpp"
#include "homtopo/mesh/mesh.hpp"

namespace homtopo {

/// Legacy ASCII VTK writer for fields on a structured rectangular grid.
class VtkWriter {
  public:
    VtkWriter(int nx, int ny, double hx, double hy) : nx_(nx), ny_(ny), hx_(hx), hy_(hy) {}
    explicit VtkWriter(const Mesh2D &m) : VtkWriter(m.nx, m.ny, m.hx(), m.hy()) {}

    void point_scalar(const std::string &name, const VecX &v) { check(v.size(), (nx_ + 1) * (ny_ + 1)); point_s_.emplace_back(name, v); }
    void cell_scalar(const std::string &name, const VecX &v) { check(v.size(), nx_ * ny_); cell_s_.emplace_back(name, v); }
    void cell_vector(const std::string &name, const Eigen::Matrix<double, Eigen::Dynamic, 2> &v) {
        check(v.rows(), nx_ * ny_);
        cell_v_.emplace_back(name, v);
    }
    void point_vector(const std::string &name, const Eigen::Matrix<double, Eigen::Dynamic, 2> &v) {
        check(v.rows(), (nx_ + 1) * (ny_ + 1));
        point_v_.emplace_back(name, v);
    }

    void add(const std::string &name, const ScalarField &f) {
        if (f.association == Association::PerNode) point_scalar(name, f.values);
        else cell_scalar(name, f.values);
    }

    void write(const std::string &path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot open " + path + " for writing");
        out << "# vtk DataFile Version 3.0\nhomtopo\nASCII\nDATASET STRUCTURED_POINTS\n";
        out << "DIMENSIONS " << nx_ + 1 << " " << ny_ + 1 << " 1\n";
        out << "ORIGIN 0 0 0\nSPACING " << format_double(hx_) << " " << format_double(hy_) << " 1\n";
        if (!point_s_.empty() || !point_v_.empty()) {
            out << "POINT_DATA " << (nx_ + 1) * (ny_ + 1) << "\n";
            for (const auto &[n, v] : point_s_) scalars(out, n, v);
            for (const auto &[n, v] : point_v_) vectors(out, n, v);
        }
        if (!cell_s_.empty() || !cell_v_.empty()) {
            out << "CELL_DATA " << nx_ * ny_ << "\n";
            for (const auto &[n, v] : cell_s_) scalars(out, n, v);
            for (const auto &[n, v] : cell_v_) vectors(out, n, v);
        }
    }

  private:
    static void check(Eigen::Index got, int expected) {
        if (got != expected) throw InvalidArgument("VTK field size does not match the grid");
    }
    static void scalars(std::ofstream &out, const std::string &name, const VecX &v) {
        out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (Eigen::Index i = 0; i < v.size(); ++i) out << format_double(v(i)) << "\n";
    }
    static void vectors(std::ofstream &out, const std::string &name, const Eigen::Matrix<double, Eigen::Dynamic, 2> &v) {
        out << "VECTORS " << name << " double\n";
        for (Eigen::Index i = 0; i < v.rows(); ++i)
            out << format_double(v(i, 0)) << " " << format_double(v(i, 1)) << " 0\n";
    }

    int nx_, ny_;
    double hx_, hy_;
    std::vector<std::pair<std::string, VecX>> point_s_, cell_s_;
    std::vector<std::pair<std::string, Eigen::Matrix<double, Eigen::Dynamic, 2>>> point_v_, cell_v_;
};

}  // namespace homtopo
