#include "xbody/pose_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "xbody/rotation.hpp"
#include "xbody/synthetic.hpp"

namespace xbody {

namespace {

using V3 = Vec3<double>;
using M3 = Mat3<double>;

M3 rot_x(double a) { return Eigen::AngleAxisd(a, V3::UnitX()).toRotationMatrix(); }
M3 rot_y(double a) { return Eigen::AngleAxisd(a, V3::UnitY()).toRotationMatrix(); }
M3 rot_z(double a) { return Eigen::AngleAxisd(a, V3::UnitZ()).toRotationMatrix(); }

}  // namespace

PoseSampler::PoseSampler(std::uint64_t seed, double joint_noise) : rng_(seed), joint_noise_(joint_noise) {}

VecX<double> PoseSampler::sample() {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * unit(rng_); };
    auto norm = [&](double m, double s) { return m + s * gauss(rng_); };

    std::vector<M3> local(kBodyJoints + 1, M3::Identity());

    const double phase = uni(0.0, 2.0 * std::numbers::pi);
    const double gait = unit(rng_) < 0.6 ? uni(0.0, 0.6) : 0.0;
    const double crouch = std::pow(unit(rng_), 3.0);
    const double bend = norm(0.1, 0.15) + 0.4 * crouch;
    const double twist = norm(0.0, 0.2);
    const double lateral = norm(0.0, 0.1);

    for (int side = 0; side < 2; ++side) {
        const double s = side == 0 ? 1.0 : -1.0;
        const double ph = phase + (side == 0 ? 0.0 : std::numbers::pi);
        const double swing = gait * std::sin(ph);
        const double flex = -swing - 1.2 * crouch + norm(0.0, 0.05);
        const double abduct = s * norm(0.05, 0.06);
        const double knee = std::clamp(2.0 * crouch + 1.2 * gait * std::max(0.0, -std::sin(ph + 0.5)) +
                                           std::abs(norm(0.0, 0.05)),
                                       0.0, 2.3);
        local[side == 0 ? joint::LHip : joint::RHip] = rot_x(flex) * rot_z(abduct) * rot_y(norm(0.0, 0.1));
        local[side == 0 ? joint::LKnee : joint::RKnee] = rot_x(knee);
        local[side == 0 ? joint::LAnkle : joint::RAnkle] = rot_x(norm(-0.3 * crouch, 0.12)) * rot_z(norm(0.0, 0.08));
        local[side == 0 ? joint::LFoot : joint::RFoot] = rot_x(norm(0.0, 0.1));

        const double elevation = uni(-1.35, 0.5);
        const double azimuth = uni(-0.3, 1.4) - s * 0.4 * swing;
        const V3 rest(s, 0.0, 0.0);
        const V3 dir(s * std::cos(elevation) * std::cos(azimuth), std::sin(elevation),
                     std::cos(elevation) * std::sin(azimuth));
        const M3 arm = Eigen::AngleAxisd(norm(0.0, 0.35), dir).toRotationMatrix() *
                       Eigen::Quaterniond::FromTwoVectors(rest, dir).toRotationMatrix();
        const M3 collar = rot_z(s * 0.15 * std::max(0.0, elevation)) * rot_y(norm(0.0, 0.05));
        local[side == 0 ? joint::LCollar : joint::RCollar] = collar;
        local[side == 0 ? joint::LShoulder : joint::RShoulder] = collar.transpose() * arm;
        const double elbow = unit(rng_) < 0.8 ? uni(0.0, 2.2) : 0.0;
        local[side == 0 ? joint::LElbow : joint::RElbow] = rot_y(-s * elbow);
        local[side == 0 ? joint::LWrist : joint::RWrist] =
            rodrigues<double>(V3(norm(0.0, 0.3), norm(0.0, 0.3), norm(0.0, 0.3)));
    }
    for (int k : {joint::Spine1, joint::Spine2, joint::Spine3})
        local[k] = rot_x(bend / 3.0) * rot_y(twist / 3.0) * rot_z(lateral / 3.0);
    const double nod = norm(0.0, 0.2), turn = norm(0.0, 0.35);
    for (int k : {joint::Neck, joint::Head}) local[k] = rot_x(nod / 2.0) * rot_y(turn / 2.0);

    VecX<double> pose(kBodyPoseDim);
    for (int k = 1; k <= kBodyJoints; ++k) {
        const V3 eps(norm(0.0, joint_noise_), norm(0.0, joint_noise_), norm(0.0, joint_noise_));
        pose.segment<3>(3 * (k - 1)) = log_map<double>(local[k] * rodrigues<double>(eps));
    }
    return pose;
}

MatX<double> PoseSampler::corpus(int n) {
    MatX<double> out(n, kBodyPoseDim);
    for (int i = 0; i < n; ++i) out.row(i) = sample().transpose();
    return out;
}

}  // namespace xbody
