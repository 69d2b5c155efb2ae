#pragma once

#include "xbody/keypoints.hpp"
#include "xbody/model.hpp"
#include "xbody/types.hpp"

namespace xbody {

/// Pinhole camera. A model point X maps to camera space as R X + t.
struct Camera {
    Vec2<double> focal = Vec2<double>(5000.0, 5000.0);
    Vec2<double> principal_point = Vec2<double>::Zero();
    Mat3<double> rotation = Mat3<double>::Identity();
    Vec3<double> translation = Vec3<double>::Zero();

    // Throws InvalidArgument on non-positive focal or an improper rotation.
    void validate() const;
    double mean_focal() const { return 0.5 * (focal.x() + focal.y()); }
};

inline constexpr double kMinDepth = 1e-6;

/// Pixel coordinates of points (one per row). Throws BehindCamera listing
/// every point with camera depth <= kMinDepth.
Points2d project(const Points3d& points, const Camera& camera);

/// d(pixel)/d(camera-space point) at a point in front of the camera.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3<double>& camera_point, const Camera& camera);

struct CameraInit {
    Vec3<double> translation = Vec3<double>::Zero();
    Vec3<double> global_orient = Vec3<double>::Zero();
    double torso_rmse = 0.0;  // pixels, over the detected torso keypoints
};

/// Estimates camera translation and global body orientation from the
/// shoulder and hip detections with the body at rest. Depth comes from
/// similar triangles on the torso, x and y from back-projecting the torso
/// centre; orientation is searched over four yaw hypotheses and refined.
/// Throws InitializationError when the torso is missing or degenerate.
CameraInit init_camera(const KeypointSet& keypoints, const ModelAssets& assets, const Camera& camera,
                       const VecX<double>& shape = VecX<double>());

}  // namespace xbody
