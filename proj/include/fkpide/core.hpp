#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fkpide {

using Complex = std::complex<double>;
using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr Complex kI{0.0, 1.0};

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parameters outside the admissible domain of a family or operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Complex argument outside the strip on which a symbol is defined.
class StripError : public Error {
public:
    using Error::Error;
};

/// A quadrature, fit or iterative method failed to meet its tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Linear solver breakdown or non-finite values during time stepping.
class SolverError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A model fails a sampled well-posedness condition required by an operation.
class ConditionError : public Error {
public:
    using Error::Error;
};

inline void require(bool cond, const std::string &what) {
    if (!cond) throw DomainError(what);
}

/// Pairwise summation. Result depends only on the order of `v`.
template <class T>
T pairwise_sum(const T *v, std::size_t n) {
    if (n == 0) return T{};
    if (n <= 8) {
        T s = v[0];
        for (std::size_t i = 1; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

template <class T>
T pairwise_sum(const std::vector<T> &v) {
    return pairwise_sum(v.data(), v.size());
}

inline Vec vec1(double x) {
    Vec v(1);
    v(0) = x;
    return v;
}

inline CVec cvec1(Complex z) {
    CVec v(1);
    v(0) = z;
    return v;
}

inline Mat mat1(double x) {
    Mat m(1, 1);
    m(0, 0) = x;
    return m;
}

}  // namespace fkpide
