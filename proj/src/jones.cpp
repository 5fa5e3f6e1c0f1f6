#include "qdspin/jones.hpp"

#include <cmath>
#include <limits>

namespace qdspin {

JonesVector JonesVector::linear(double angle) { return {std::cos(angle), std::sin(angle)}; }

JonesVector JonesVector::sigma_plus() {
    const double s = 1.0 / std::sqrt(2.0);
    return {cplx{s, 0.0}, cplx{0.0, s}};
}

JonesVector JonesVector::sigma_minus() {
    const double s = 1.0 / std::sqrt(2.0);
    return {cplx{s, 0.0}, cplx{0.0, -s}};
}

double JonesVector::norm() const { return std::sqrt(std::norm(x) + std::norm(y)); }

JonesVector JonesVector::normalized() const {
    const double n = norm();
    return {x / n, y / n};
}

cplx inner(const JonesVector& a, const JonesVector& b) {
    return std::conj(a.x) * b.x + std::conj(a.y) * b.y;
}

JonesVector operator*(cplx s, const JonesVector& v) { return {s * v.x, s * v.y}; }

JonesVector operator+(const JonesVector& a, const JonesVector& b) { return {a.x + b.x, a.y + b.y}; }

Stokes stokes(const JonesVector& v) {
    const double ix = std::norm(v.x);
    const double iy = std::norm(v.y);
    const double s0 = ix + iy;
    const cplx c = std::conj(v.x) * v.y;
    return {(ix - iy) / s0, 2.0 * c.real() / s0, 2.0 * c.imag() / s0};
}

double JonesMatrix::condition_number() const {
    Eigen::JacobiSVD<Eigen::Matrix2cd> svd(m);
    const auto& s = svd.singularValues();
    if (s(1) == 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / s(1);
}

double JonesMatrix::largest_singular_value() const {
    Eigen::JacobiSVD<Eigen::Matrix2cd> svd(m);
    return svd.singularValues()(0);
}

double JonesMatrix::unitarity_defect() const {
    return (m.adjoint() * m - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff();
}

}  // namespace qdspin
