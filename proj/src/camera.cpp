#include "xbody/camera.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "xbody/errors.hpp"
#include "xbody/lbfgs.hpp"
#include "xbody/rotation.hpp"

namespace xbody {

void Camera::validate() const {
    if (!(focal.x() > 0.0 && focal.y() > 0.0)) throw InvalidArgument("camera: focal lengths must be positive");
    if (!principal_point.allFinite() || !translation.allFinite()) throw InvalidArgument("camera: non-finite values");
    const double orth = (rotation.transpose() * rotation - Mat3<double>::Identity()).cwiseAbs().maxCoeff();
    if (orth > 1e-8 || std::abs(rotation.determinant() - 1.0) > 1e-8)
        throw InvalidArgument("camera: rotation is not a proper rotation");
}

Points2d project(const Points3d& points, const Camera& camera) {
    Points2d out(points.rows(), 2);
    std::vector<int> behind;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const Vec3<double> p = camera.rotation * points.row(i).transpose() + camera.translation;
        if (!(p.z() > kMinDepth)) {
            behind.push_back(static_cast<int>(i));
            continue;
        }
        out(i, 0) = camera.focal.x() * p.x() / p.z() + camera.principal_point.x();
        out(i, 1) = camera.focal.y() * p.y() / p.z() + camera.principal_point.y();
    }
    if (!behind.empty()) {
        std::ostringstream os;
        os << "project: " << behind.size() << " point(s) behind the camera, first index " << behind.front();
        throw BehindCamera(os.str(), std::move(behind));
    }
    return out;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3<double>& p, const Camera& camera) {
    const double iz = 1.0 / p.z();
    Eigen::Matrix<double, 2, 3> j;
    j << camera.focal.x() * iz, 0.0, -camera.focal.x() * p.x() * iz * iz,
         0.0, camera.focal.y() * iz, -camera.focal.y() * p.y() * iz * iz;
    return j;
}

namespace {

constexpr int kTorsoSlots[4] = {body25::LShoulder, body25::RShoulder, body25::LHip, body25::RHip};

struct TorsoProblem {
    const Camera& camera;
    Eigen::Matrix<double, 4, 3> model;  // rest torso points relative to the root joint
    Vec3<double> root;
    Eigen::Matrix<double, 4, 2> pixels;
    Eigen::Vector4d conf;

    // Confidence-weighted squared reprojection error and its gradient in (w, t).
    double loss(const Vec3<double>& w, const Vec3<double>& t, Vec3<double>* gw, Vec3<double>* gt) const {
        const Mat3<double> r = rodrigues<double>(w);
        const auto dr = rodrigues_jacobian<double>(w);
        double f = 0.0;
        if (gw) gw->setZero();
        if (gt) gt->setZero();
        for (int i = 0; i < 4; ++i) {
            const Vec3<double> local = model.row(i).transpose();
            const Vec3<double> pc = camera.rotation * (r * local + root) + t;
            if (!(pc.z() > kMinDepth)) return std::numeric_limits<double>::infinity();
            const Vec2<double> uv(camera.focal.x() * pc.x() / pc.z() + camera.principal_point.x(),
                                  camera.focal.y() * pc.y() / pc.z() + camera.principal_point.y());
            const Vec2<double> e = uv - pixels.row(i).transpose();
            f += conf[i] * e.squaredNorm();
            const Vec3<double> g = 2.0 * conf[i] * projection_jacobian(pc, camera).transpose() * e;
            if (gt) *gt += g;
            if (gw)
                for (int j = 0; j < 3; ++j) (*gw)[j] += g.dot(camera.rotation * (dr[j] * local));
        }
        return f;
    }
};

}  // namespace

CameraInit init_camera(const KeypointSet& keypoints, const ModelAssets& assets, const Camera& camera,
                       const VecX<double>& shape) {
    camera.validate();
    for (int slot : kTorsoSlots)
        if (!(keypoints.body(slot, 2) > 0.0) || !keypoints.body.row(slot).allFinite())
            throw InitializationError("camera init: both shoulders and both hips must be detected");

    ParamVector rest = ParamVector::zeros(assets);
    if (shape.size() > 0) rest.shape = shape;
    const ForwardResult fr = forward(rest, assets);
    const Points3d lm = landmark_positions(fr.joints, fr.vertices, assets);

    TorsoProblem prob{camera, {}, fr.joints.row(0).transpose(), {}, {}};
    for (int i = 0; i < 4; ++i) {
        const int slot = kTorsoSlots[i];
        if (assets.landmarks[slot].kind == LandmarkKind::None)
            throw InitializationError("camera init: torso keypoints have no model landmark");
        prob.model.row(i) = lm.row(slot) - fr.joints.row(0);
        prob.pixels.row(i) = keypoints.body.block<1, 2>(slot, 0);
        prob.conf[i] = keypoints.body(slot, 2);
    }

    const Vec2<double> px_shoulders = 0.5 * (prob.pixels.row(0) + prob.pixels.row(1)).transpose();
    const Vec2<double> px_hips = 0.5 * (prob.pixels.row(2) + prob.pixels.row(3)).transpose();
    const double px_torso = (px_shoulders - px_hips).norm();
    const double px_width = (prob.pixels.row(0) - prob.pixels.row(1)).norm() +
                            (prob.pixels.row(2) - prob.pixels.row(3)).norm();
    if (!(px_torso > 1.0) || !(px_width > 1e-6))
        throw InitializationError("camera init: degenerate torso detections");
    const Vec3<double> m_shoulders = 0.5 * (prob.model.row(0) + prob.model.row(1)).transpose();
    const Vec3<double> m_hips = 0.5 * (prob.model.row(2) + prob.model.row(3)).transpose();
    const double depth = camera.mean_focal() * (m_shoulders - m_hips).norm() / px_torso;

    const Vec2<double> px_centre = prob.pixels.colwise().mean().transpose();
    const Vec3<double> m_centre = prob.model.colwise().mean().transpose();
    const Vec3<double> target((px_centre.x() - camera.principal_point.x()) / camera.focal.x() * depth,
                              (px_centre.y() - camera.principal_point.y()) / camera.focal.y() * depth, depth);

    LbfgsSettings ls;
    ls.max_iterations = 100;
    ls.gradient_tolerance = 1e-9;
    ls.function_tolerance = 1e-14;

    CameraInit best;
    double best_loss = std::numeric_limits<double>::infinity();
    for (int h = 0; h < 4; ++h) {
        const double yaw = 0.5 * std::numbers::pi * h;
        const Mat3<double> r0 = Eigen::AngleAxisd(std::numbers::pi, Vec3<double>::UnitX()).toRotationMatrix() *
                                Eigen::AngleAxisd(yaw, Vec3<double>::UnitY()).toRotationMatrix();
        Vec3<double> w = log_map<double>(r0);
        const Vec3<double> t = target - camera.rotation * (r0 * m_centre + prob.root);

        // Orientation with the translation held, then a joint polish of both.
        auto orient_only = [&](const VecX<double>& x, VecX<double>& g) {
            Vec3<double> gw;
            const double f = prob.loss(x, t, &gw, nullptr);
            g = gw;
            return f;
        };
        w = lbfgs_minimize(orient_only, w, ls).x;
        auto joint = [&](const VecX<double>& x, VecX<double>& g) {
            Vec3<double> gw, gt;
            const double f = prob.loss(x.head<3>(), x.tail<3>(), &gw, &gt);
            g.resize(6);
            g << gw, gt;
            return f;
        };
        VecX<double> x0(6);
        x0 << w, t;
        const LbfgsResult r = lbfgs_minimize(joint, x0, ls);
        if (r.f < best_loss) {
            best_loss = r.f;
            best.global_orient = r.x.head<3>();
            best.translation = r.x.tail<3>();
        }
    }
    TorsoProblem unweighted = prob;
    unweighted.conf.setOnes();
    best.torso_rmse = std::sqrt(unweighted.loss(best.global_orient, best.translation, nullptr, nullptr) / 4.0);
    return best;
}

}  // namespace xbody
