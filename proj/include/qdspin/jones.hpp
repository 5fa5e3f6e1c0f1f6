#pragma once

#include <Eigen/Dense>

#include "qdspin/constants.hpp"

namespace qdspin {

/// Fully polarized transverse field, components along x and y.
struct JonesVector {
    cplx x{1.0, 0.0};
    cplx y{0.0, 0.0};

    static JonesVector horizontal() { return {1.0, 0.0}; }
    static JonesVector vertical() { return {0.0, 1.0}; }
    /// Linear polarization at `angle` radians from the x axis.
    static JonesVector linear(double angle);
    /// (1, +i)/sqrt(2).
    static JonesVector sigma_plus();
    /// (1, -i)/sqrt(2).
    static JonesVector sigma_minus();

    double norm() const;
    JonesVector normalized() const;

    Eigen::Vector2cd vec() const { return {x, y}; }
    static JonesVector from(const Eigen::Vector2cd& v) { return {v(0), v(1)}; }
};

/// <a, b> = conj(a) . b
cplx inner(const JonesVector& a, const JonesVector& b);

JonesVector operator*(cplx s, const JonesVector& v);
JonesVector operator+(const JonesVector& a, const JonesVector& b);

/// Stokes parameters normalized to S0 = 1: (S1, S2, S3).
struct Stokes {
    double s1;
    double s2;
    double s3;
};
Stokes stokes(const JonesVector& v);

/// 2x2 complex optical element.
struct JonesMatrix {
    Eigen::Matrix2cd m = Eigen::Matrix2cd::Identity();

    static JonesMatrix identity() { return {}; }
    JonesVector operator*(const JonesVector& v) const { return JonesVector::from(m * v.vec()); }
    JonesMatrix operator*(const JonesMatrix& o) const { return {m * o.m}; }

    /// Ratio of largest to smallest singular value; infinite when singular.
    double condition_number() const;
    double largest_singular_value() const;
    double unitarity_defect() const;
};

}  // namespace qdspin
