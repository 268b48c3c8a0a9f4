#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "homtopo/homog/cell.hpp"
#include "homtopo/io/csv.hpp"

namespace homtopo {

/// Sampled A*(m1, m2, 0) of the holed cell on a uniform n_m x n_m grid of [0,1]^2.
class MicroTable {
  public:
    struct Lookup {
        Hooke2D a;
        Mat3 d1 = Mat3::Zero(), d2 = Mat3::Zero();        // interpolated stored gradients
        Mat3 slope1 = Mat3::Zero(), slope2 = Mat3::Zero();  // exact derivatives of the interpolant
    };

    IsotropicModuli base;
    double ersatz = 1e-3;
    int n_m = 0;
    int resolution = 0;
    std::vector<Mat3> values, grad1, grad2;  // sample (i1, i2) at index i2 * n_m + i1

    MicroTable() = default;
    MicroTable(const MicroTable &o)
        : base(o.base), ersatz(o.ersatz), n_m(o.n_m), resolution(o.resolution), values(o.values), grad1(o.grad1),
          grad2(o.grad2) {}
    MicroTable &operator=(const MicroTable &o) {
        base = o.base;
        ersatz = o.ersatz;
        n_m = o.n_m;
        resolution = o.resolution;
        values = o.values;
        grad1 = o.grad1;
        grad2 = o.grad2;
        return *this;
    }

    double spacing() const { return 1.0 / (n_m - 1); }
    int index(int i1, int i2) const { return i2 * n_m + i1; }
    double sample(int i) const { return i * spacing(); }

    /// Number of lookups whose argument had to be clamped into [0,1]^2.
    long clamp_count() const { return clamped_->load(); }

    Lookup lookup(const Vec2 &m_in) const {
        Vec2 m = m_in;
        if (m(0) < 0 || m(0) > 1 || m(1) < 0 || m(1) > 1 || !std::isfinite(m(0)) || !std::isfinite(m(1))) {
            clamped_->fetch_add(1);
            m = m.cwiseMax(0.0).cwiseMin(1.0);
            if (!std::isfinite(m(0))) m(0) = 0.0;
            if (!std::isfinite(m(1))) m(1) = 0.0;
        }
        const double h = spacing();
        const int i1 = std::min(static_cast<int>(m(0) / h), n_m - 2);
        const int i2 = std::min(static_cast<int>(m(1) / h), n_m - 2);
        const double s = m(0) / h - i1, t = m(1) / h - i2;
        const int c00 = index(i1, i2), c10 = index(i1 + 1, i2), c01 = index(i1, i2 + 1), c11 = index(i1 + 1, i2 + 1);
        const double w00 = (1 - s) * (1 - t), w10 = s * (1 - t), w01 = (1 - s) * t, w11 = s * t;
        auto blend = [&](const std::vector<Mat3> &v) {
            if (s == 0.0 && t == 0.0) return v[c00];
            return Mat3(w00 * v[c00] + w10 * v[c10] + w01 * v[c01] + w11 * v[c11]);
        };
        Lookup out;
        out.a = Hooke2D(blend(values));
        out.d1 = blend(grad1);
        out.d2 = blend(grad2);
        out.slope1 = ((1 - t) * (values[c10] - values[c00]) + t * (values[c11] - values[c01])) / h;
        out.slope2 = ((1 - s) * (values[c01] - values[c00]) + s * (values[c11] - values[c10])) / h;
        return out;
    }

    void save(const std::string &path) const {
        CsvTable t;
        t.header = {"m1", "m2"};
        const char *names[3] = {"K", "dK_dm1_", "dK_dm2_"};
        for (const char *n : names)
            for (int r = 1; r <= 3; ++r)
                for (int c = 1; c <= 3; ++c) t.header.push_back(std::string(n) + std::to_string(r) + std::to_string(c));
        for (int i2 = 0; i2 < n_m; ++i2)
            for (int i1 = 0; i1 < n_m; ++i1) {
                std::vector<double> row{sample(i1), sample(i2)};
                for (const auto *v : {&values, &grad1, &grad2})
                    for (int r = 0; r < 3; ++r)
                        for (int c = 0; c < 3; ++c) row.push_back((*v)[index(i1, i2)](r, c));
                t.rows.push_back(std::move(row));
            }
        std::ostringstream meta;
        meta << "micro_table n_m=" << n_m << " resolution=" << resolution << " lambda=" << format_double(base.lambda)
             << " mu=" << format_double(base.mu) << " ersatz=" << format_double(ersatz);
        t.write(path, meta.str());
    }

    static MicroTable load(const std::string &path) {
        std::string meta;
        const CsvTable t = CsvTable::read(path, &meta);
        MicroTable out;
        if (std::sscanf(meta.c_str(), "micro_table n_m=%d resolution=%d lambda=%lf mu=%lf ersatz=%lf", &out.n_m,
                        &out.resolution, &out.base.lambda, &out.base.mu, &out.ersatz) != 5)
            throw Error("missing micro table metadata in " + path);
        if (t.header.size() != 29 || static_cast<int>(t.rows.size()) != out.n_m * out.n_m)
            throw Error("malformed micro table " + path);
        out.values.resize(t.rows.size());
        out.grad1.resize(t.rows.size());
        out.grad2.resize(t.rows.size());
        for (size_t k = 0; k < t.rows.size(); ++k) {
            const auto &row = t.rows[k];
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) {
                    out.values[k](r, c) = row[2 + 3 * r + c];
                    out.grad1[k](r, c) = row[11 + 3 * r + c];
                    out.grad2[k](r, c) = row[20 + 3 * r + c];
                }
        }
        return out;
    }

  private:
    std::shared_ptr<std::atomic<long>> clamped_ = std::make_shared<std::atomic<long>>(0);
};

/// Finite-difference gradients of the sampled values (central inside, one-sided at the border).
inline void table_gradients(MicroTable &t) {
    const int n = t.n_m;
    const double h = t.spacing();
    t.grad1.assign(n * n, Mat3::Zero());
    t.grad2.assign(n * n, Mat3::Zero());
    for (int i2 = 0; i2 < n; ++i2)
        for (int i1 = 0; i1 < n; ++i1) {
            const int lo1 = std::max(i1 - 1, 0), hi1 = std::min(i1 + 1, n - 1);
            const int lo2 = std::max(i2 - 1, 0), hi2 = std::min(i2 + 1, n - 1);
            t.grad1[t.index(i1, i2)] = (t.values[t.index(hi1, i2)] - t.values[t.index(lo1, i2)]) / ((hi1 - lo1) * h);
            t.grad2[t.index(i1, i2)] = (t.values[t.index(i1, hi2)] - t.values[t.index(i1, lo2)]) / ((hi2 - lo2) * h);
        }
}

inline MicroTable build_micro_table(const IsotropicModuli &base, int n_m = 17, int resolution = 64,
                                    double ersatz = 1e-3) {
    if (n_m < 5) throw InvalidArgument("micro table needs at least 5 samples per axis");
    base.validate();
    MicroTable t;
    t.base = base;
    t.ersatz = ersatz;
    t.n_m = n_m;
    t.resolution = resolution;
    t.values.resize(n_m * n_m);
    const Hooke2D a = Hooke2D::isotropic(base);
    const PeriodicCell pc(resolution);
    LinearSolver solver;
    for (int i2 = 0; i2 < n_m; ++i2)
        for (int i1 = 0; i1 < n_m; ++i1) {
            const CellGeometry cell{t.sample(i1), t.sample(i2), resolution};
            const auto k = cell_hooke_field(cell, a, ersatz);
            t.values[t.index(i1, i2)] = homogenize_kelvin(pc, k, kelvin_correctors(pc, k, solver)).K;
        }
    table_gradients(t);
    return t;
}

}  // namespace homtopo
