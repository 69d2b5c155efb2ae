#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xbody/model.hpp"

namespace xbody {

// Joint indices of the default 55-joint skeleton used throughout.
namespace joint {
inline constexpr int Pelvis = 0, LHip = 1, RHip = 2, Spine1 = 3, LKnee = 4, RKnee = 5, Spine2 = 6, LAnkle = 7,
                     RAnkle = 8, Spine3 = 9, LFoot = 10, RFoot = 11, Neck = 12, LCollar = 13, RCollar = 14,
                     Head = 15, LShoulder = 16, RShoulder = 17, LElbow = 18, RElbow = 19, LWrist = 20,
                     RWrist = 21, Jaw = 22, LEye = 23, REye = 24, LHandFirst = 25, RHandFirst = 40;
}

struct SyntheticModelOptions {
    int num_vertices = 1000;
    int num_articulated = 54;  // 21..24 (no fingers) or 54
    int num_shape = 10;
    int num_expression = 10;
    int hand_components = 12;  // per side
    Gender gender = Gender::Neutral;
    std::uint64_t seed = 7;
    bool contact_mask = true;
    // Slightly curled mean finger pose; when set, zero hand coefficients no
    // longer give the rest pose.
    bool hand_mean = false;  // mask region pairs whose drivers are within two tree edges
};

/// Seeded tube-skeleton humanoid with a face patch, full blend-shape bases,
/// a skinning rig, hand PCA, landmark table and triangle regions. Stored
/// values are rounded to float32 so the asset survives save/load unchanged.
/// Throws InvalidArgument when the options cannot be realized exactly.
ModelAssets make_synthetic_model(const SyntheticModelOptions& options = {});

const std::vector<std::string>& joint_names();

}  // namespace xbody
