#pragma once

#include <Eigen/SparseCholesky>
#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "homtopo/fem/assembly.hpp"

namespace homtopo {

enum class SolverKind { Cg, Cholesky };

struct SolveOptions {
    SolverKind kind = SolverKind::Cholesky;
    double tol = 1e-10;  // relative residual for CG
    int max_iter = 0;    // 0 picks 10 x the number of unknowns
};

struct SolveResult {
    VecX x;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> history;
};

/// Preconditioned conjugate gradient with a Jacobi preconditioner.
inline SolveResult pcg(const SpMat &a, const VecX &b, double tol, int max_iter) {
    SolveResult res;
    const int n = static_cast<int>(b.size());
    res.x = VecX::Zero(n);
    const double bnorm = b.norm();
    if (bnorm == 0.0) return res;
    VecX dinv(n);
    for (int i = 0; i < n; ++i) {
        const double d = a.coeff(i, i);
        dinv(i) = d > 0.0 ? 1.0 / d : 1.0;
    }
    VecX r = b, z = dinv.cwiseProduct(r), p = z;
    double rz = r.dot(z);
    if (max_iter <= 0) max_iter = 10 * n;
    for (int it = 0; it < max_iter; ++it) {
        const VecX ap = a * p;
        const double alpha = rz / p.dot(ap);
        res.x += alpha * p;
        r -= alpha * ap;
        const double rel = r.norm() / bnorm;
        res.history.push_back(rel);
        res.iterations = it + 1;
        res.residual = rel;
        if (rel <= tol) return res;
        z = dinv.cwiseProduct(r);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    throw SolverError("conjugate gradient did not converge in " + std::to_string(max_iter) +
                          " iterations (residual " + std::to_string(res.residual) + ")",
                      res.history);
}

/// Eliminates constraints and periodic pairs, pins the kernel, solves, and
/// restores the full vector. A factorization is kept so several right-hand
/// sides can be solved with the same matrix.
class LinearSolver {
  public:
    explicit LinearSolver(SolveOptions opt = {}) : opt_(opt) {}

    void factorize(const SparseSystem &sys) {
        const int n = static_cast<int>(sys.matrix.rows());
        n_ = n;
        dpn_ = sys.dofs_per_node;
        nullspace_ = sys.nullspace;
        weights_ = sys.dof_weights;
        values_ = VecX::Zero(n);
        map_.assign(n, -2);
        for (const auto &[d, v] : sys.constrained_dofs) {
            map_[d] = -1;
            values_(d) = v;
        }
        std::vector<int> master(n);
        for (int i = 0; i < n; ++i) master[i] = i;
        for (const auto &[m, s] : sys.periodic_pairs) master[s] = m;
        for (int i = 0; i < n; ++i) {
            int r = i, guard = 0;
            while (master[r] != r && guard++ < n) r = master[r];
            master[i] = r;
        }
        int nr = 0;
        std::vector<int> root_index(n, -1);
        for (int i = 0; i < n; ++i) {
            if (master[i] != i || map_[i] == -1) continue;
            root_index[i] = nr++;
        }
        for (int i = 0; i < n; ++i) {
            if (map_[i] == -1) continue;
            const int r = master[i];
            map_[i] = map_[r] == -1 ? -1 : root_index[r];
            if (map_[i] == -1) values_(i) = values_(r);
        }
        // pin the kernel
        pinned_.clear();
        if (nullspace_ == Nullspace::Constant && nr > 0) {
            pinned_.push_back(0);
        } else if (nullspace_ == Nullspace::Translations) {
            for (int i = 0; i + 1 < n; i += 2)
                if (map_[i] >= 0 && map_[i + 1] >= 0) {
                    pinned_ = {map_[i], map_[i + 1]};
                    break;
                }
        }
        // renumber reduced unknowns without the pinned ones
        std::vector<int> shift(nr, 0);
        for (int p : pinned_) shift[p] = -1;
        int m = 0;
        for (int k = 0; k < nr; ++k) shift[k] = shift[k] == -1 ? -1 : m++;
        reduced_.assign(n, -1);
        for (int i = 0; i < n; ++i) reduced_[i] = map_[i] >= 0 ? shift[map_[i]] : -1;
        nr_ = m;

        std::vector<Triplet> trip;
        trip.reserve(sys.matrix.nonZeros());
        coupling_.clear();
        for (int k = 0; k < sys.matrix.outerSize(); ++k)
            for (SpMat::InnerIterator it(sys.matrix, k); it; ++it) {
                const int ri = reduced_[it.row()], rj = reduced_[it.col()];
                if (ri >= 0 && rj >= 0) trip.emplace_back(ri, rj, it.value());
                else if (ri >= 0 && map_[it.col()] == -1 && values_(it.col()) != 0.0)
                    coupling_.emplace_back(ri, it.col(), it.value());
            }
        a_.resize(nr_, nr_);
        a_.setFromTriplets(trip.begin(), trip.end());
        if (opt_.kind == SolverKind::Cholesky && nr_ > 0) {
            if (!analyzed_ || a_.nonZeros() != pattern_nnz_ || a_.rows() != pattern_rows_) {
                ldlt_.analyzePattern(a_);
                analyzed_ = true;
                pattern_nnz_ = a_.nonZeros();
                pattern_rows_ = a_.rows();
            }
            ldlt_.factorize(a_);
            if (ldlt_.info() != Eigen::Success) throw SolverError("sparse Cholesky factorization failed", {});
        }
    }

    SolveResult solve_rhs(const VecX &rhs) const {
        VecX br = VecX::Zero(nr_);
        std::vector<double> kernel_sum(dpn_, 0.0), kernel_abs(dpn_, 0.0);
        for (int i = 0; i < n_; ++i) {
            if (map_[i] < 0) continue;
            kernel_sum[i % dpn_] += rhs(i);
            kernel_abs[i % dpn_] += std::abs(rhs(i));
            if (reduced_[i] >= 0) br(reduced_[i]) += rhs(i);
        }
        if (nullspace_ != Nullspace::None)
            for (int d = 0; d < dpn_; ++d)
                if (std::abs(kernel_sum[d]) > 1e-9 * (kernel_abs[d] + 1e-300) && std::abs(kernel_sum[d]) > 1e-14)
                    throw InvalidArgument("right-hand side is not orthogonal to the kernel (compatibility fails)");
        for (const auto &[ri, col, v] : coupling_) br(ri) -= v * values_(col);

        SolveResult res;
        VecX xr;
        if (nr_ == 0) {
            xr = VecX();
        } else if (opt_.kind == SolverKind::Cholesky) {
            xr = ldlt_.solve(br);
            res.iterations = 1;
            const double bn = br.norm();
            res.residual = bn > 0 ? (a_ * xr - br).norm() / bn : 0.0;
            res.history = {res.residual};
        } else {
            SolveResult it = pcg(a_, br, opt_.tol, opt_.max_iter);
            xr = it.x;
            res.iterations = it.iterations;
            res.residual = it.residual;
            res.history = std::move(it.history);
        }
        res.x = values_;
        for (int i = 0; i < n_; ++i)
            if (map_[i] >= 0) res.x(i) = reduced_[i] >= 0 ? xr(reduced_[i]) : 0.0;
        if (nullspace_ != Nullspace::None) remove_mean(res.x);
        return res;
    }

    SolveResult solve(const SparseSystem &sys) {
        factorize(sys);
        return solve_rhs(sys.rhs);
    }

    /// Number of unknowns after elimination.
    int reduced_size() const { return nr_; }

  private:
    void remove_mean(VecX &x) const {
        for (int d = 0; d < dpn_; ++d) {
            double sw = 0.0, swx = 0.0;
            for (int i = d; i < n_; i += dpn_) {
                const double w = weights_.size() == n_ ? weights_(i) : 1.0;
                sw += w;
                swx += w * x(i);
            }
            if (sw <= 0.0) continue;
            const double mean = swx / sw;
            for (int i = d; i < n_; i += dpn_)
                if (map_[i] >= 0) x(i) -= mean;
        }
    }

    SolveOptions opt_;
    int n_ = 0, nr_ = 0, dpn_ = 1;
    Nullspace nullspace_ = Nullspace::None;
    VecX weights_, values_;
    std::vector<int> map_, reduced_, pinned_;
    std::vector<std::tuple<int, int, double>> coupling_;
    SpMat a_;
    Eigen::SimplicialLDLT<SpMat> ldlt_;
    bool analyzed_ = false;
    Eigen::Index pattern_nnz_ = -1, pattern_rows_ = -1;
};

inline SolveResult solve(const SparseSystem &sys, const SolveOptions &opt = {}) {
    LinearSolver s(opt);
    return s.solve(sys);
}

}  // namespace homtopo
