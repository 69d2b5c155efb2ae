#pragma once

#include <array>
#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "xbody/errors.hpp"
#include "xbody/types.hpp"

namespace xbody {

template <typename Scalar>
Mat3<Scalar> skew(const Vec3<Scalar>& v) {
    Mat3<Scalar> m;
    m << Scalar(0), -v.z(), v.y(),
         v.z(), Scalar(0), -v.x(),
         -v.y(), v.x(), Scalar(0);
    return m;
}

/// Axis-angle to rotation matrix. Below 1e-8 rad the second order Taylor
/// expansion is used so the map stays smooth through the origin.
template <typename Scalar>
Mat3<Scalar> rodrigues(const Vec3<Scalar>& w) {
    if (!w.allFinite()) throw InvalidArgument("rodrigues: non-finite axis-angle");
    const Scalar theta = w.norm();
    const Mat3<Scalar> k = skew<Scalar>(w);
    if (theta < Scalar(1e-8)) {
        return Mat3<Scalar>::Identity() + k + Scalar(0.5) * k * k;
    }
    const Scalar a = std::sin(theta) / theta;
    const Scalar b = (Scalar(1) - std::cos(theta)) / (theta * theta);
    return Mat3<Scalar>::Identity() + a * k + b * k * k;
}

/// Partial derivatives dR/dw_i of the Rodrigues map.
template <typename Scalar>
std::array<Mat3<Scalar>, 3> rodrigues_jacobian(const Vec3<Scalar>& w) {
    std::array<Mat3<Scalar>, 3> d;
    const Scalar theta2 = w.squaredNorm();
    if (theta2 < Scalar(1e-12)) {
        const Mat3<Scalar> k = skew<Scalar>(w);
        for (int i = 0; i < 3; ++i) {
            const Mat3<Scalar> ei = skew<Scalar>(Vec3<Scalar>::Unit(i));
            d[i] = ei + Scalar(0.5) * (ei * k + k * ei);
        }
        return d;
    }
    const Mat3<Scalar> r = rodrigues(w);
    const Mat3<Scalar> k = skew<Scalar>(w);
    const Mat3<Scalar> i_minus_r = Mat3<Scalar>::Identity() - r;
    for (int i = 0; i < 3; ++i) {
        const Vec3<Scalar> c = w.cross(i_minus_r.col(i));
        d[i] = (w[i] * k + skew<Scalar>(c)) * r / theta2;
    }
    return d;
}

/// Rotation matrix to axis-angle, angle in [0, pi].
template <typename Scalar>
Vec3<Scalar> log_map(const Mat3<Scalar>& r) {
    Eigen::AngleAxis<Scalar> aa(r);
    return aa.angle() * aa.axis();
}

/// Pulls a gradient on w = log_map(R) back onto R. Only the tangential part
/// of the result is meaningful; it is chosen as the minimum norm matrix that
/// reproduces dL/dw on every tangent perturbation of R.
template <typename Scalar>
Mat3<Scalar> log_map_vjp(const Vec3<Scalar>& w, const Vec3<Scalar>& grad_w) {
    const auto d = rodrigues_jacobian(w);
    Eigen::Matrix<Scalar, 9, 3> jac;
    for (int i = 0; i < 3; ++i) jac.col(i) = Eigen::Map<const Eigen::Matrix<Scalar, 9, 1>>(d[i].data());
    const Mat3<Scalar> gram = jac.transpose() * jac;
    const Vec3<Scalar> y = gram.ldlt().solve(grad_w);
    Eigen::Matrix<Scalar, 9, 1> g = jac * y;
    return Eigen::Map<Mat3<Scalar>>(g.data());
}

/// Nearest rotation in Frobenius norm, with the cached SVD factors needed to
/// back-propagate through it. Signed singular values carry the reflection fix.
template <typename Scalar>
struct RotationProjection {
    Mat3<Scalar> rotation;
    Mat3<Scalar> u;
    Mat3<Scalar> v;
    Vec3<Scalar> signed_singular;
};

template <typename Scalar>
RotationProjection<Scalar> nearest_rotation(const Mat3<Scalar>& a) {
    Eigen::JacobiSVD<Mat3<Scalar>> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    RotationProjection<Scalar> out;
    out.u = svd.matrixU();
    out.v = svd.matrixV();
    out.signed_singular = svd.singularValues();
    if ((out.u * out.v.transpose()).determinant() < Scalar(0)) {
        out.u.col(2) *= Scalar(-1);
        out.signed_singular[2] *= Scalar(-1);
    }
    out.rotation = out.u * out.v.transpose();
    return out;
}

/// Gradient of L(nearest_rotation(A)) with respect to A given dL/dR.
template <typename Scalar>
Mat3<Scalar> nearest_rotation_vjp(const RotationProjection<Scalar>& p, const Mat3<Scalar>& grad_r) {
    const Mat3<Scalar> h = p.u.transpose() * grad_r * p.v;
    Mat3<Scalar> y = Mat3<Scalar>::Zero();
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            if (i == j) continue;
            Scalar denom = p.signed_singular[i] + p.signed_singular[j];
            if (std::abs(denom) < Scalar(1e-12)) denom = denom < Scalar(0) ? Scalar(-1e-12) : Scalar(1e-12);
            y(i, j) = (h(i, j) - h(j, i)) / denom;
        }
    }
    return p.u * y * p.v.transpose();
}

}  // namespace xbody
