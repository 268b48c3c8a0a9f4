#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "homtopo/io/csv.hpp"

namespace homtopo {

struct OptRecord {
    int iter = 0;
    double J = 0.0;
    double volume = 0.0;
    double step = 0.0;
    double multiplier = 0.0;
    double residual = 0.0;
    double criterion = 0.0;  // convergence measure reported by the optimizer
};

struct OptHistory {
    std::vector<OptRecord> records;

    void push(const OptRecord &r) { records.push_back(r); }
    size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    const OptRecord &back() const { return records.back(); }

    std::vector<double> objective() const {
        std::vector<double> j;
        for (const auto &r : records) j.push_back(r.J);
        return j;
    }

    /// Largest increase J_{n+1} - J_n over the run (negative when strictly decreasing).
    double max_increase() const {
        double m = -1e300;
        for (size_t i = 1; i < records.size(); ++i) m = std::max(m, records[i].J - records[i - 1].J);
        return m;
    }

    void write_thickness_csv(const std::string &path) const {
        CsvTable t;
        t.header = {"iter", "J", "volume", "step", "multiplier"};
        for (const auto &r : records) t.rows.push_back({double(r.iter), r.J, r.volume, r.step, r.multiplier});
        t.write(path);
    }

    void write_topopt_csv(const std::string &path) const {
        CsvTable t;
        t.header = {"iter", "J", "volume", "criterion"};
        for (const auto &r : records) t.rows.push_back({double(r.iter), r.J, r.volume, r.criterion});
        t.write(path);
    }
};

}  // namespace homtopo
