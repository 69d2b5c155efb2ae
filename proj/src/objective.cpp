#include "xbody/objective.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "xbody/errors.hpp"
#include "xbody/rotation.hpp"

namespace xbody {

FitConfig FitConfig::preset() {
    FitConfig c;
    StageWeights s1{"global", {1.0, 0.0, 0.0}, 404.0, 404.0, 404.0, 15.2, 100.0, 100.0, 0.0};
    StageWeights s2{"arms", {1.0, 1.0, 0.0}, 57.4, 57.4, 57.4, 15.2, 50.0, 50.0, 1e3};
    StageWeights s3{"expressive", {1.0, 2.0, 2.0}, 4.78, 4.78, 4.78, 5.7, 5.0, 5.0, 1e5};
    c.stages = {s1, s2, s3};
    c.camera.focal = Vec2<double>(5000.0, 5000.0);
    // The conditioning of the joint problem calls for a long history.
    c.lbfgs.memory = 100;
    c.lbfgs.max_iterations = 1000;
    c.lbfgs.gradient_tolerance = 1e-6;
    c.lbfgs.function_tolerance = 1e-10;
    return c;
}

void FitConfig::validate() const {
    if (stages.empty()) throw ConfigError("fit config: no stages");
    if (!(sigma_per_1000 > 0.0)) throw ConfigError("fit config: robust scale must be positive");
    if (gender != "neutral" && gender != "male" && gender != "female" && gender != "auto")
        throw ConfigError("fit config: unknown gender '" + gender + "'");
    if (!(gender_threshold >= 0.0 && gender_threshold <= 1.0)) throw ConfigError("fit config: gender threshold");
    for (const auto& s : stages) {
        const double w[] = {s.data.body, s.data.hands, s.data.face, s.body_pose, s.face_pose, s.hands,
                            s.angle, s.shape, s.expression, s.collision};
        for (double v : w)
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("fit config: stage '" + s.name + "' has a negative weight");
    }
    lbfgs.validate();
    try {
        camera.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("fit config: ") + e.what());
    }
}

double geman_mcclure(double e, double sigma) {
    const double s2 = sigma * sigma, e2 = e * e;
    return s2 * e2 / (s2 + e2);
}

double data_term(const Points3d& model_points, const std::vector<Landmark>& landmarks, const Camera& camera,
                 const KeypointSet& keypoints, const DataWeights& weights, double sigma, Points3d* grad_points,
                 Vec3<double>* grad_translation) {
    if (model_points.rows() != kTotalKeypoints) throw DimensionMismatch("data_term: expected one point per keypoint slot");
    if (static_cast<int>(landmarks.size()) != kTotalKeypoints) throw ConfigError("data_term: landmark table size");
    const auto kp = keypoints.stacked();
    const double s2 = sigma * sigma;
    if (grad_points) grad_points->setZero(kTotalKeypoints, 3);
    if (grad_translation) grad_translation->setZero();
    double e = 0.0;
    for (int i = 0; i < kTotalKeypoints; ++i) {
        const double conf = kp(i, 2);
        if (!(conf > 0.0)) continue;
        const KeypointPart part = keypoint_part(i);
        const double gamma = part == KeypointPart::Body ? weights.body
                             : part == KeypointPart::Hand ? weights.hands
                                                          : weights.face;
        if (gamma == 0.0) continue;
        if (landmarks[i].kind == LandmarkKind::None) {
            std::ostringstream os;
            os << "data_term: keypoint slot " << i << " is detected but has no model landmark";
            throw ConfigError(os.str());
        }
        const Vec3<double> pc = camera.rotation * model_points.row(i).transpose() + camera.translation;
        if (!(pc.z() > kMinDepth)) return std::numeric_limits<double>::infinity();
        const Vec2<double> uv(camera.focal.x() * pc.x() / pc.z() + camera.principal_point.x(),
                              camera.focal.y() * pc.y() / pc.z() + camera.principal_point.y());
        const Vec2<double> r = uv - kp.block<1, 2>(i, 0).transpose();
        const double sq = r.squaredNorm();
        const double denom = s2 + sq;
        e += gamma * conf * s2 * sq / denom;
        if (grad_points || grad_translation) {
            const Vec2<double> g_uv = gamma * conf * 2.0 * s2 * s2 / (denom * denom) * r;
            const Vec3<double> g_pc = projection_jacobian(pc, camera).transpose() * g_uv;
            if (grad_translation) *grad_translation += g_pc;
            if (grad_points) grad_points->row(i) = (camera.rotation.transpose() * g_pc).transpose();
        }
    }
    return e;
}

double data_term(const ParamVector& params, const ModelAssets& assets, const Camera& camera,
                 const KeypointSet& keypoints, const DataWeights& weights, double sigma) {
    const ForwardResult fr = forward(params, assets);
    Camera cam = camera;
    cam.translation = params.camera_translation;
    return data_term(landmark_positions(fr.joints, fr.vertices, assets), assets.landmarks, cam, keypoints, weights,
                     sigma);
}

ParamLayout ParamLayout::make(const ParamVector& p) {
    ParamLayout l;
    l.mode = p.body_mode;
    l.body_size = static_cast<int>(p.body_mode == BodyPoseMode::Latent ? p.latent.size() : p.body_pose.size());
    l.jaw_size = static_cast<int>(p.jaw_pose.size());
    l.eye_size = static_cast<int>(p.eye_pose.size());
    l.hands_size = static_cast<int>(p.hand_coeffs.size());
    l.shape_size = static_cast<int>(p.shape.size());
    l.expression_size = static_cast<int>(p.expression.size());
    l.orient = 0;
    l.body = 3;
    l.jaw = l.body + l.body_size;
    l.eye = l.jaw + l.jaw_size;
    l.hands = l.eye + l.eye_size;
    l.shape = l.hands + l.hands_size;
    l.expression = l.shape + l.shape_size;
    l.translation = l.expression + l.expression_size;
    l.size = l.translation + 3;
    return l;
}

VecX<double> ParamLayout::pack(const ParamVector& p) const {
    VecX<double> x(size);
    x.segment<3>(orient) = p.global_orient;
    x.segment(body, body_size) = mode == BodyPoseMode::Latent ? p.latent : p.body_pose;
    x.segment(jaw, jaw_size) = p.jaw_pose;
    x.segment(eye, eye_size) = p.eye_pose;
    x.segment(hands, hands_size) = p.hand_coeffs;
    x.segment(shape, shape_size) = p.shape;
    x.segment(expression, expression_size) = p.expression;
    x.segment<3>(translation) = p.camera_translation;
    return x;
}

void ParamLayout::unpack(const VecX<double>& x, ParamVector& p) const {
    if (x.size() != size) throw DimensionMismatch("param layout: vector size");
    p.body_mode = mode;
    p.global_orient = x.segment<3>(orient);
    if (mode == BodyPoseMode::Latent)
        p.latent = x.segment(body, body_size);
    else
        p.body_pose = x.segment(body, body_size);
    p.jaw_pose = x.segment(jaw, jaw_size);
    p.eye_pose = x.segment(eye, eye_size);
    p.hand_coeffs = x.segment(hands, hands_size);
    p.shape = x.segment(shape, shape_size);
    p.expression = x.segment(expression, expression_size);
    p.camera_translation = x.segment<3>(translation);
}

FitObjective::FitObjective(const ModelAssets& assets, const Camera& camera, const KeypointSet& keypoints,
                           const StageWeights& weights, double sigma, const ParamVector& like,
                           const Vposer<double>* vposer, const GmmPrior* gmm, const ContactMask* mask)
    : assets_(assets), camera_(camera), keypoints_(keypoints), weights_(weights), sigma_(sigma),
      layout_(ParamLayout::make(like)), vposer_(vposer), gmm_(gmm), mask_(mask ? *mask : ContactMask{}) {
    like.check(assets);
    if (assets.landmarks.empty()) throw ConfigError("fit: model assets carry no landmark table");
    if (layout_.mode == BodyPoseMode::Latent) {
        if (!vposer_) throw ConfigError("fit: latent body mode needs a pose prior network");
        if (vposer_->arch.joints != static_cast<int>(assets.group_joints(JointGroup::Body).size()))
            throw ConfigError("fit: pose prior network does not match the body joint count");
        if (layout_.body_size != vposer_->latent_dim()) throw DimensionMismatch("fit: latent size");
    } else if (weights_.body_pose > 0.0) {
        if (!gmm_) throw ConfigError("fit: axis-angle body mode needs a mixture prior");
        if (gmm_->dim() != layout_.body_size) throw DimensionMismatch("fit: mixture prior dimension");
    }
}

std::vector<Mat3<double>> FitObjective::rotations(const VecX<double>& x,
                                                  typename Vposer<double>::Decoding* decoding) const {
    std::vector<Mat3<double>> rot(assets_.num_joints(), Mat3<double>::Identity());
    rot[0] = rodrigues<double>(x.segment<3>(layout_.orient));
    auto fill = [&](JointGroup g, const VecX<double>& values) {
        const auto& joints = assets_.group_joints(g);
        for (size_t i = 0; i < joints.size(); ++i)
            rot[joints[i]] = rodrigues<double>(values.segment<3>(3 * static_cast<Eigen::Index>(i)));
    };
    const auto& body = assets_.group_joints(JointGroup::Body);
    if (layout_.mode == BodyPoseMode::Latent) {
        *decoding = vposer_->decode(x.segment(layout_.body, layout_.body_size));
        for (size_t i = 0; i < body.size(); ++i) rot[body[i]] = decoding->projected[i].rotation;
    } else {
        fill(JointGroup::Body, x.segment(layout_.body, layout_.body_size));
    }
    fill(JointGroup::Jaw, x.segment(layout_.jaw, layout_.jaw_size));
    fill(JointGroup::Eye, x.segment(layout_.eye, layout_.eye_size));
    if (assets_.has_hands()) {
        const int m = layout_.hands_size / 2;
        fill(JointGroup::LeftHand, hand_pca_to_pose(x.segment(layout_.hands, m), assets_, HandSide::Left));
        fill(JointGroup::RightHand, hand_pca_to_pose(x.segment(layout_.hands + m, m), assets_, HandSide::Right));
    }
    return rot;
}

Points3d FitObjective::vertices(const VecX<double>& x) const {
    typename Vposer<double>::Decoding dec;
    ForwardPass pass;
    forward_pass(rotations(x, &dec), x.segment(layout_.shape, layout_.shape_size),
                 x.segment(layout_.expression, layout_.expression_size), assets_, pass);
    return pass.vertices;
}

ParamVector FitObjective::params(const VecX<double>& x) const {
    ParamVector p = ParamVector::zeros(assets_, layout_.mode == BodyPoseMode::Latent ? layout_.body_size : 32);
    layout_.unpack(x, p);
    if (layout_.mode == BodyPoseMode::Latent) p.body_pose = vposer_->decode(p.latent).axis_angle();
    return p;
}

bool FitObjective::refresh_collisions(const VecX<double>& x) {
    if (weights_.collision == 0.0) return false;
    const VertexBuffer vb(vertices(x));
    const Bvh bvh = build_bvh(vb, assets_.faces);
    std::vector<CollisionPair> fresh = find_colliding_pairs(bvh, vb, assets_.faces, mask_);
    bool changed = fresh.size() != pairs_.size();
    for (size_t i = 0; !changed && i < fresh.size(); ++i)
        changed = fresh[i].s != pairs_[i].s || fresh[i].t != pairs_[i].t;
    pairs_ = std::move(fresh);
    return changed;
}

namespace {

// Frobenius products <G, dR/dw_i>.
Vec3<double> rotation_vjp(const Vec3<double>& w, const Mat3<double>& g) {
    const auto d = rodrigues_jacobian<double>(w);
    return Vec3<double>(g.cwiseProduct(d[0]).sum(), g.cwiseProduct(d[1]).sum(), g.cwiseProduct(d[2]).sum());
}

}  // namespace

double FitObjective::evaluate(const VecX<double>& x, VecX<double>* grad, TermBreakdown* terms) const {
    if (x.size() != layout_.size) throw DimensionMismatch("fit objective: parameter vector size");
    const bool want_grad = grad != nullptr;
    const StageWeights& w = weights_;
    TermBreakdown t;

    typename Vposer<double>::Decoding dec;
    ForwardPass pass;
    forward_pass(rotations(x, &dec), x.segment(layout_.shape, layout_.shape_size),
                 x.segment(layout_.expression, layout_.expression_size), assets_, pass);

    Camera cam = camera_;
    cam.translation = x.segment<3>(layout_.translation);
    const Points3d points = landmark_positions(pass.posed_joints, pass.vertices, assets_);
    Points3d g_points;
    Vec3<double> g_trans = Vec3<double>::Zero();
    t.data = data_term(points, assets_.landmarks, cam, keypoints_, w.data, sigma_, want_grad ? &g_points : nullptr,
                       want_grad ? &g_trans : nullptr);
    if (!std::isfinite(t.data)) {
        if (terms) *terms = t;
        if (grad) grad->setZero(layout_.size);
        return std::numeric_limits<double>::infinity();
    }

    VecX<double> g = VecX<double>::Zero(layout_.size);
    Points3d joint_grad = Points3d::Zero(assets_.num_joints(), 3);
    Points3d vertex_grad = Points3d::Zero(assets_.num_vertices(), 3);
    if (want_grad) {
        for (int i = 0; i < kTotalKeypoints; ++i) {
            const Landmark& lm = assets_.landmarks[i];
            if (lm.kind == LandmarkKind::Joint)
                joint_grad.row(lm.index) += g_points.row(i);
            else if (lm.kind == LandmarkKind::Vertex)
                vertex_grad.row(lm.index) += g_points.row(i);
        }
        g.segment<3>(layout_.translation) = g_trans;
    }

    if (w.collision > 0.0 && !pairs_.empty()) {
        Points3d gc;
        t.collision = collision_energy(pairs_, pass.vertices, assets_.faces, want_grad ? &gc : nullptr);
        if (want_grad) vertex_grad += w.collision * gc;
    }

    // Body pose prior and the bending prior.
    const auto& body = assets_.group_joints(JointGroup::Body);
    std::vector<Mat3<double>> extra_rot_grad(body.size(), Mat3<double>::Zero());
    VecX<double> body_param_grad = VecX<double>::Zero(layout_.body_size);
    {
        const VecX<double> b = x.segment(layout_.body, layout_.body_size);
        VecX<double> gb;
        if (layout_.mode == BodyPoseMode::Latent) {
            t.body_pose = latent_prior<double>(b, &gb);
            if (want_grad) body_param_grad += w.body_pose * gb;
            const VecX<double> aa = dec.axis_angle();
            VecX<double> ga;
            t.angle = angle_prior(aa, &ga);
            if (want_grad && w.angle > 0.0) {
                for (size_t j = 0; j < body.size(); ++j) {
                    const Vec3<double> gj = ga.segment<3>(3 * static_cast<Eigen::Index>(j));
                    if (!gj.isZero(0.0))
                        extra_rot_grad[j] = w.angle * log_map_vjp<double>(aa.segment<3>(3 * static_cast<Eigen::Index>(j)), gj);
                }
            }
        } else {
            if (gmm_) {
                t.body_pose = gmm_->energy(b, &gb);
                if (want_grad) body_param_grad += w.body_pose * gb;
            }
            VecX<double> ga;
            t.angle = angle_prior(b, &ga);
            if (want_grad) body_param_grad += w.angle * ga;
        }
    }

    const VecX<double> jaw = x.segment(layout_.jaw, layout_.jaw_size), eye = x.segment(layout_.eye, layout_.eye_size);
    t.face_pose = jaw.squaredNorm() + eye.squaredNorm();
    t.hands = x.segment(layout_.hands, layout_.hands_size).squaredNorm();
    t.shape = x.segment(layout_.shape, layout_.shape_size).squaredNorm();
    t.expression = x.segment(layout_.expression, layout_.expression_size).squaredNorm();

    t.total = t.data + w.body_pose * t.body_pose + w.face_pose * t.face_pose + w.hands * t.hands + w.angle * t.angle +
              w.shape * t.shape + w.expression * t.expression + w.collision * t.collision;
    if (terms) *terms = t;
    if (!want_grad) return t.total;

    ModelGradient mg;
    backward_pass(pass, joint_grad, vertex_grad, assets_, mg);

    g.segment<3>(layout_.orient) = rotation_vjp(x.segment<3>(layout_.orient), mg.rotations[0]);
    if (layout_.mode == BodyPoseMode::Latent) {
        std::vector<Mat3<double>> g_rot(body.size());
        for (size_t j = 0; j < body.size(); ++j) g_rot[j] = mg.rotations[body[j]] + extra_rot_grad[j];
        body_param_grad += vposer_->decode_vjp(dec, g_rot);
    } else {
        for (size_t j = 0; j < body.size(); ++j) {
            const Eigen::Index o = layout_.body + 3 * static_cast<Eigen::Index>(j);
            body_param_grad.segment<3>(3 * static_cast<Eigen::Index>(j)) +=
                rotation_vjp(x.segment<3>(o), mg.rotations[body[j]]);
        }
    }
    g.segment(layout_.body, layout_.body_size) = body_param_grad;

    auto group_grad = [&](JointGroup grp, const VecX<double>& pose) {
        const auto& joints = assets_.group_joints(grp);
        VecX<double> out(3 * joints.size());
        for (size_t j = 0; j < joints.size(); ++j)
            out.segment<3>(3 * static_cast<Eigen::Index>(j)) =
                rotation_vjp(pose.segment<3>(3 * static_cast<Eigen::Index>(j)), mg.rotations[joints[j]]);
        return out;
    };
    g.segment(layout_.jaw, layout_.jaw_size) = group_grad(JointGroup::Jaw, jaw) + 2.0 * w.face_pose * jaw;
    g.segment(layout_.eye, layout_.eye_size) = group_grad(JointGroup::Eye, eye) + 2.0 * w.face_pose * eye;
    if (assets_.has_hands()) {
        const int m = layout_.hands_size / 2;
        const VecX<double> cl = x.segment(layout_.hands, m), cr = x.segment(layout_.hands + m, m);
        const VecX<double> gl = group_grad(JointGroup::LeftHand, hand_pca_to_pose(cl, assets_, HandSide::Left));
        const VecX<double> gr = group_grad(JointGroup::RightHand, hand_pca_to_pose(cr, assets_, HandSide::Right));
        g.segment(layout_.hands, m) = assets_.hand_pca_left.leftCols(m).transpose() * gl + 2.0 * w.hands * cl;
        g.segment(layout_.hands + m, m) = assets_.hand_pca_right.leftCols(m).transpose() * gr + 2.0 * w.hands * cr;
    }
    g.segment(layout_.shape, layout_.shape_size) =
        mg.beta.head(layout_.shape_size) + 2.0 * w.shape * x.segment(layout_.shape, layout_.shape_size);
    g.segment(layout_.expression, layout_.expression_size) =
        mg.psi.head(layout_.expression_size) + 2.0 * w.expression * x.segment(layout_.expression, layout_.expression_size);
    *grad = std::move(g);
    return t.total;
}

}  // namespace xbody
