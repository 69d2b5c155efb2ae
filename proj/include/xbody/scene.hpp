#pragma once

#include <cstdint>

#include "xbody/camera.hpp"
#include "xbody/keypoints.hpp"
#include "xbody/model.hpp"
#include "xbody/vposer.hpp"

namespace xbody {

enum class SceneCollisions { Reject, Require, Any };

struct SceneOptions {
    double focal = 1000.0;
    Vec2<double> image_size = Vec2<double>(1000.0, 1000.0);
    double noise_px = 0.0;  // Gaussian pixel noise on the keypoints
    double depth_min = 2.6;
    double depth_max = 3.2;
    double max_yaw = 0.6;  // radians either way from facing the camera
    double shape_scale = 1.0;
    double expression_scale = 0.5;
    double hand_scale = 0.5;
    SceneCollisions collisions = SceneCollisions::Reject;
    int max_attempts = 200;
    // When set, sampled body poses are replaced by decode(encoder mean), their
    // projection onto the prior's pose manifold.
    const Vposer<float>* latent_source = nullptr;
};

/// Ground truth of one synthetic image.
struct SyntheticScene {
    ParamVector params;  // axis-angle body pose, camera translation set
    VecX<double> latent;  // encoder mean behind the body pose, empty without a latent source
    Camera camera;
    KeypointSet keypoints;        // observed, noise applied
    KeypointSet clean_keypoints;  // exact projections
    Points3d vertices;            // model space
    Points3d joints;
    double collision_energy = 0.0;
    int attempts = 0;
};

/// Samples parameters (body pose from PoseSampler or the latent source), places the body in front
/// of the camera and projects every landmark with confidence 1. Throws
/// InvalidArgument when no sample meets the collision requirement.
SyntheticScene make_scene(const ModelAssets& assets, std::uint64_t seed, const SceneOptions& options = {});

}  // namespace xbody
