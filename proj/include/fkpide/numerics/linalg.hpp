#pragma once

#include <cmath>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "fkpide/core.hpp"

namespace fkpide {

/// Symmetric-or-not tridiagonal matrix stored by bands.
struct Tridiagonal {
    Vec lower, diag, upper;  // lower(i) = T(i+1, i), upper(i) = T(i, i+1)

    Tridiagonal() = default;
    explicit Tridiagonal(Eigen::Index n) : lower(Vec::Zero(n - 1)), diag(Vec::Zero(n)), upper(Vec::Zero(n - 1)) {}

    Eigen::Index size() const { return diag.size(); }

    Vec operator*(const Vec &x) const {
        const auto n = size();
        Vec y = diag.cwiseProduct(x);
        if (n > 1) {
            y.head(n - 1) += upper.cwiseProduct(x.tail(n - 1));
            y.tail(n - 1) += lower.cwiseProduct(x.head(n - 1));
        }
        return y;
    }

    Mat dense() const {
        const auto n = size();
        Mat m = Mat::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            m(i, i) = diag(i);
            if (i + 1 < n) {
                m(i, i + 1) = upper(i);
                m(i + 1, i) = lower(i);
            }
        }
        return m;
    }

    Tridiagonal scaled_sum(double a, const Tridiagonal &o, double b) const {
        Tridiagonal t;
        t.lower = a * lower + b * o.lower;
        t.diag = a * diag + b * o.diag;
        t.upper = a * upper + b * o.upper;
        return t;
    }

    /// Thomas algorithm; no pivoting, intended for diagonally dominant bands.
    Vec solve(const Vec &rhs) const {
        const auto n = size();
        Vec c(n), d(n);
        double m = diag(0);
        if (m == 0) throw SolverError("tridiagonal solve: zero pivot");
        c(0) = n > 1 ? upper(0) / m : 0.0;
        d(0) = rhs(0) / m;
        for (Eigen::Index i = 1; i < n; ++i) {
            m = diag(i) - lower(i - 1) * c(i - 1);
            if (m == 0) throw SolverError("tridiagonal solve: zero pivot");
            c(i) = i + 1 < n ? upper(i) / m : 0.0;
            d(i) = (rhs(i) - lower(i - 1) * d(i - 1)) / m;
        }
        for (Eigen::Index i = n - 2; i >= 0; --i) d(i) -= c(i) * d(i + 1);
        return d;
    }
};

/// Toeplitz matrix T(j, k) = t(k - j), given by its first row t(0..n-1)
/// and first column t(0), t(-1), ..., t(-(n-1)).
class Toeplitz {
public:
    Toeplitz() = default;
    Toeplitz(Vec row, Vec col) : row_(std::move(row)), col_(std::move(col)) {
        if (row_.size() != col_.size() || row_.size() == 0) throw DomainError("Toeplitz: generator size mismatch");
        if (row_(0) != col_(0)) throw DomainError("Toeplitz: row and column disagree on the diagonal");
    }

    Eigen::Index size() const { return row_.size(); }
    const Vec &row() const { return row_; }
    const Vec &col() const { return col_; }

    double operator()(Eigen::Index j, Eigen::Index k) const { return k >= j ? row_(k - j) : col_(j - k); }

    Mat dense() const {
        const auto n = size();
        Mat m(n, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index k = 0; k < n; ++k) m(j, k) = (*this)(j, k);
        return m;
    }

    /// y = T x through a circulant embedding and FFT.
    Vec apply(const Vec &x) const {
        prepare();
        const auto n = size();
        std::vector<Complex> xs(fft_n_, 0.0), xf, yf(fft_n_);
        for (Eigen::Index i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = x(i);
        fft_.fwd(xf, xs);
        for (std::size_t i = 0; i < fft_n_; ++i) yf[i] = xf[i] * symbol_[i];
        std::vector<Complex> ys;
        fft_.inv(ys, yf);
        Vec y(n);
        for (Eigen::Index i = 0; i < n; ++i) y(i) = ys[static_cast<std::size_t>(i)].real();
        return y;
    }

private:
    void prepare() const {
        if (!symbol_.empty()) return;
        const auto n = static_cast<std::size_t>(size());
        fft_n_ = 1;
        while (fft_n_ < 2 * n) fft_n_ <<= 1;
        // circulant first column: t(0), t(-1), ..., t(-(n-1)), 0..., t(n-1), ..., t(1)
        std::vector<Complex> c(fft_n_, 0.0);
        for (std::size_t i = 0; i < n; ++i) c[i] = col_(static_cast<Eigen::Index>(i));
        for (std::size_t i = 1; i < n; ++i) c[fft_n_ - i] = row_(static_cast<Eigen::Index>(i));
        fft_.fwd(symbol_, c);
    }

    Vec row_, col_;
    mutable std::size_t fft_n_ = 0;
    mutable std::vector<Complex> symbol_;
    mutable Eigen::FFT<double> fft_;
};

struct GmresResult {
    Vec x;
    int iterations = 0;
    double residual = 0.0;  // relative
    bool converged = false;
};

/// Restarted GMRES with right preconditioning.
template <class Op, class Prec>
GmresResult gmres(const Op &apply, const Prec &precondition, const Vec &b, const Vec &x0, double tol = 1e-10,
                  int restart = 60, int max_iter = 2000) {
    GmresResult res;
    res.x = x0;
    const double bnorm = std::max(b.norm(), 1e-300);
    const auto n = b.size();
    int total = 0;
    while (total < max_iter) {
        Vec r = b - apply(res.x);
        double beta = r.norm();
        res.residual = beta / bnorm;
        if (res.residual <= tol) {
            res.converged = true;
            break;
        }
        const int m = restart;
        Mat V(n, m + 1), H = Mat::Zero(m + 1, m), Z(n, m);
        Vec cs = Vec::Zero(m), sn = Vec::Zero(m), g = Vec::Zero(m + 1);
        V.col(0) = r / beta;
        g(0) = beta;
        int k = 0;
        for (; k < m && total < max_iter; ++k, ++total) {
            Z.col(k) = precondition(V.col(k).eval());
            Vec w = apply(Z.col(k).eval());
            for (int i = 0; i <= k; ++i) {
                H(i, k) = w.dot(V.col(i));
                w -= H(i, k) * V.col(i);
            }
            H(k + 1, k) = w.norm();
            if (H(k + 1, k) > 0) V.col(k + 1) = w / H(k + 1, k);
            for (int i = 0; i < k; ++i) {
                const double t = cs(i) * H(i, k) + sn(i) * H(i + 1, k);
                H(i + 1, k) = -sn(i) * H(i, k) + cs(i) * H(i + 1, k);
                H(i, k) = t;
            }
            const double den = std::hypot(H(k, k), H(k + 1, k));
            if (den == 0) throw SolverError("GMRES breakdown");
            cs(k) = H(k, k) / den;
            sn(k) = H(k + 1, k) / den;
            H(k, k) = den;
            H(k + 1, k) = 0;
            g(k + 1) = -sn(k) * g(k);
            g(k) = cs(k) * g(k);
            if (std::abs(g(k + 1)) / bnorm <= tol * 0.5) {
                ++k;
                ++total;
                break;
            }
        }
        Vec y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
        res.x += Z.leftCols(k) * y;
    }
    res.iterations = total;
    if (!res.converged) {
        res.residual = (b - apply(res.x)).norm() / bnorm;
        res.converged = res.residual <= tol;
    }
    return res;
}

}  // namespace fkpide
