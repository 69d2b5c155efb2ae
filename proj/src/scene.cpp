#include "xbody/scene.hpp"

#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "xbody/errors.hpp"
#include "xbody/fit.hpp"
#include "xbody/pose_sampler.hpp"
#include "xbody/rotation.hpp"

namespace xbody {

SyntheticScene make_scene(const ModelAssets& assets, std::uint64_t seed, const SceneOptions& o) {
    if (!(o.focal > 0.0) || !(o.depth_min > 0.0) || o.depth_max < o.depth_min || o.noise_px < 0.0)
        throw InvalidArgument("make_scene: invalid options");
    if (static_cast<int>(assets.group_joints(JointGroup::Body).size()) != kBodyJoints)
        throw InvalidArgument("make_scene: the pose sampler needs 21 body joints");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PoseSampler sampler(seed ^ 0x9E3779B97F4A7C15ull);
    Vposer<double> source;
    if (o.latent_source) source = o.latent_source->cast<double>();

    SyntheticScene sc;
    sc.camera.focal = Vec2<double>(o.focal, o.focal);
    sc.camera.principal_point = 0.5 * o.image_size;

    for (int attempt = 1; attempt <= o.max_attempts; ++attempt) {
        ParamVector p = ParamVector::zeros(assets);
        p.body_pose = sampler.sample();
        VecX<double> latent;
        if (o.latent_source) {
            latent = source.encode(pose_to_rotations<double>(p.body_pose)).mu;
            p.body_pose = source.decode(latent).axis_angle();
        }
        for (Eigen::Index i = 0; i < p.shape.size(); ++i) p.shape[i] = o.shape_scale * gauss(rng);
        for (Eigen::Index i = 0; i < p.expression.size(); ++i) p.expression[i] = o.expression_scale * gauss(rng);
        for (Eigen::Index i = 0; i < p.hand_coeffs.size(); ++i) p.hand_coeffs[i] = o.hand_scale * gauss(rng);
        if (p.jaw_pose.size() == 3) p.jaw_pose = Vec3<double>(std::abs(0.15 * gauss(rng)), 0.03 * gauss(rng), 0.0);
        for (Eigen::Index i = 0; i < p.eye_pose.size(); ++i) p.eye_pose[i] = 0.05 * gauss(rng);

        const double yaw = o.max_yaw * (2.0 * unit(rng) - 1.0);
        const Mat3<double> orient = Eigen::AngleAxisd(std::numbers::pi, Vec3<double>::UnitX()).toRotationMatrix() *
                                    Eigen::AngleAxisd(yaw, Vec3<double>::UnitY()).toRotationMatrix();
        p.global_orient = log_map<double>(orient);

        const ForwardResult fr = forward(p, assets);
        const double depth = o.depth_min + (o.depth_max - o.depth_min) * unit(rng);
        const Vec3<double> centre = fr.vertices.colwise().mean().transpose();
        p.camera_translation = Vec3<double>(0.05 * gauss(rng), 0.05 * gauss(rng), depth) - centre;

        const auto [energy, pairs] = mesh_collision_energy(fr.vertices, assets);
        const bool colliding = pairs > 0 && energy > 0.0;
        if ((o.collisions == SceneCollisions::Reject && colliding) ||
            (o.collisions == SceneCollisions::Require && !colliding))
            continue;

        Camera cam = sc.camera;
        cam.translation = p.camera_translation;
        const Points3d lm = landmark_positions(fr.joints, fr.vertices, assets);
        const Points2d uv = project(lm, cam);
        Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> clean =
            Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>::Zero(kTotalKeypoints, 3);
        for (int i = 0; i < kTotalKeypoints; ++i) {
            if (assets.landmarks[i].kind == LandmarkKind::None) continue;
            clean(i, 0) = uv(i, 0);
            clean(i, 1) = uv(i, 1);
            clean(i, 2) = 1.0;
        }
        auto noisy = clean;
        if (o.noise_px > 0.0)
            for (int i = 0; i < kTotalKeypoints; ++i)
                if (noisy(i, 2) > 0.0) {
                    noisy(i, 0) += o.noise_px * gauss(rng);
                    noisy(i, 1) += o.noise_px * gauss(rng);
                }

        sc.params = p;
        sc.latent = latent;
        sc.clean_keypoints = KeypointSet::from_stacked(clean);
        sc.keypoints = KeypointSet::from_stacked(noisy);
        sc.vertices = fr.vertices;
        sc.joints = fr.joints;
        sc.collision_energy = energy;
        sc.attempts = attempt;
        return sc;
    }
    throw InvalidArgument("make_scene: no sample met the collision requirement");
}

}  // namespace xbody
