#include "xbody/model.hpp"

#include <cmath>
#include <sstream>

#include "xbody/errors.hpp"
#include "xbody/keypoints.hpp"
#include "xbody/rotation.hpp"

namespace xbody {

std::string to_string(Gender g) {
    switch (g) {
        case Gender::Male: return "male";
        case Gender::Female: return "female";
        default: return "neutral";
    }
}

Gender parse_gender(const std::string& s) {
    if (s == "neutral") return Gender::Neutral;
    if (s == "male") return Gender::Male;
    if (s == "female") return Gender::Female;
    throw ConfigError("unknown gender '" + s + "'");
}

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument("model assets: " + msg);
}

void check_orthonormal(const MatX<double>& basis, const char* name) {
    if (basis.cols() == 0) return;
    const MatX<double> gram = basis.transpose() * basis;
    const double err = (gram - MatX<double>::Identity(basis.cols(), basis.cols())).cwiseAbs().maxCoeff();
    // Bases round-trip through float32 storage.
    require(err < 1e-5, std::string(name) + " declared orthonormal but is not");
}

}  // namespace

void ModelAssets::finalize() {
    const int n = num_vertices();
    const int nj = num_joints();
    require(n > 0, "empty template");
    require(nj >= 1 && parents[0] == -1, "parents[0] must be -1");
    for (int k = 1; k < nj; ++k)
        require(parents[k] >= 0 && parents[k] < k, "parents must precede children");
    require(static_cast<int>(joint_groups.size()) == nj, "joint_groups size");
    require(joint_groups[0] == JointGroup::Root, "joint 0 must be the root");
    for (int k = 1; k < nj; ++k) require(joint_groups[k] != JointGroup::Root, "only joint 0 can be the root");

    require(faces.size() == 0 || (faces.minCoeff() >= 0 && faces.maxCoeff() < n), "face index out of range");
    require(shape_dirs.rows() == 3 * n || shape_dirs.cols() == 0, "shape_dirs rows");
    require(expr_dirs.rows() == 3 * n || expr_dirs.cols() == 0, "expr_dirs rows");
    if (shape_dirs.cols() == 0) shape_dirs.resize(3 * n, 0);
    if (expr_dirs.cols() == 0) expr_dirs.resize(3 * n, 0);
    require(pose_dirs.rows() == 3 * n && pose_dirs.cols() == 9 * num_articulated(), "pose_dirs shape");
    require(joint_regressor.rows() == nj && joint_regressor.cols() == n, "joint_regressor shape");
    require(skin_weights.rows() == n && skin_weights.cols() == nj, "skin_weights shape");
    for (int v = 0; v < n; ++v) {
        require(skin_weights.row(v).minCoeff() >= 0.0, "negative skinning weight");
        require(std::abs(skin_weights.row(v).sum() - 1.0) <= 1e-6, "skinning weights must sum to 1");
    }
    if (shape_orthonormal) check_orthonormal(shape_dirs, "shape_dirs");
    if (expr_orthonormal) check_orthonormal(expr_dirs, "expr_dirs");
    if (regressor_convex) {
        for (int k = 0; k < nj; ++k) require(std::abs(joint_regressor.row(k).sum() - 1.0) <= 1e-5, "regressor row sum");
    }

    for (auto& g : group_joints_) g.clear();
    for (int k = 0; k < nj; ++k) group_joints_[static_cast<int>(joint_groups[k])].push_back(k);
    const auto left = group_joints(JointGroup::LeftHand).size();
    const auto right = group_joints(JointGroup::RightHand).size();
    require(left == right, "hands must have the same joint count");
    if (left > 0) {
        require(left * 3 == kHandPoseDim, "hand groups must hold 15 joints");
        require(hand_pca_left.rows() == kHandPoseDim && hand_pca_right.rows() == kHandPoseDim, "hand PCA rows");
        require(hand_pca_left.cols() == hand_pca_right.cols(), "hand PCA widths differ");
        require(hand_mean_left.size() == 0 || hand_mean_left.size() == kHandPoseDim, "left hand mean size");
        require(hand_mean_right.size() == 0 || hand_mean_right.size() == kHandPoseDim, "right hand mean size");
    } else {
        hand_pca_left.resize(kHandPoseDim, 0);
        hand_pca_right.resize(kHandPoseDim, 0);
    }

    if (!landmarks.empty()) {
        require(static_cast<int>(landmarks.size()) == kTotalKeypoints, "landmark table size");
        for (const auto& lm : landmarks) {
            if (lm.kind == LandmarkKind::Joint) require(lm.index >= 0 && lm.index < nj, "landmark joint index");
            if (lm.kind == LandmarkKind::Vertex) require(lm.index >= 0 && lm.index < n, "landmark vertex index");
        }
    }
    require(triangle_regions.empty() || static_cast<int>(triangle_regions.size()) == num_faces(),
            "triangle_regions size");

    children_.assign(nj, {});
    for (int k = 1; k < nj; ++k) children_[parents[k]].push_back(k);

    joint_template_ = joint_regressor * template_vertices;
    joint_shape_dirs_.resize(3 * nj, num_shape());
    for (int s = 0; s < num_shape(); ++s) {
        Eigen::Map<const Points3d> col(shape_dirs.col(s).data(), n, 3);
        Points3d j = joint_regressor * Points3d(col);
        joint_shape_dirs_.col(s) = Eigen::Map<const VecX<double>>(j.data(), 3 * nj);
    }

    skin_offsets_.assign(1, 0);
    skin_joints_.clear();
    skin_values_.clear();
    for (int v = 0; v < n; ++v) {
        // Renormalized so stored float32 weights still form an exact partition of unity.
        const double total = skin_weights.row(v).sum();
        for (int k = 0; k < nj; ++k) {
            if (skin_weights(v, k) != 0.0) {
                skin_joints_.push_back(k);
                skin_values_.push_back(skin_weights(v, k) / total);
            }
        }
        skin_offsets_.push_back(static_cast<int>(skin_joints_.size()));
    }
}

ArrayStore ModelAssets::to_store() const {
    ArrayStore s;
    s.meta()["kind"] = "body-model";
    s.meta()["gender_tag"] = to_string(gender);
    s.meta()["flags"] = {{"shape_orthonormal", shape_orthonormal},
                         {"expr_orthonormal", expr_orthonormal},
                         {"regressor_convex", regressor_convex}};
    s.put_matrix("template_vertices", template_vertices);
    s.put_int_matrix("faces", faces);
    s.put_matrix("shape_dirs", shape_dirs);
    s.put_matrix("expr_dirs", expr_dirs);
    s.put_matrix("pose_dirs", pose_dirs);
    s.put_matrix("joint_regressor", MatX<double>(joint_regressor));
    s.put_matrix("skin_weights", skin_weights);
    s.put_ints("parents", std::vector<std::int32_t>(parents.begin(), parents.end()));
    std::vector<std::int32_t> groups;
    for (auto g : joint_groups) groups.push_back(static_cast<std::int32_t>(g));
    s.put_ints("joint_groups", groups);
    s.put_matrix("hand_pca_left", hand_pca_left);
    s.put_matrix("hand_pca_right", hand_pca_right);
    if (hand_mean_left.size() > 0) s.put_vector("hand_mean_left", hand_mean_left);
    if (hand_mean_right.size() > 0) s.put_vector("hand_mean_right", hand_mean_right);
    if (!landmarks.empty()) {
        std::vector<std::int32_t> lm;
        for (const auto& l : landmarks) {
            lm.push_back(static_cast<std::int32_t>(l.kind));
            lm.push_back(l.index);
        }
        s.put_ints("landmarks", lm, {static_cast<std::int64_t>(landmarks.size()), 2});
    }
    if (!triangle_regions.empty())
        s.put_ints("triangle_regions", std::vector<std::int32_t>(triangle_regions.begin(), triangle_regions.end()));
    if (!contact_mask.empty()) {
        std::vector<std::int32_t> cm;
        for (const auto& [a, b] : contact_mask) {
            cm.push_back(a);
            cm.push_back(b);
        }
        s.put_ints("contact_mask", cm, {static_cast<std::int64_t>(contact_mask.size()), 2});
    }
    return s;
}

ModelAssets ModelAssets::from_store(const ArrayStore& s) {
    ModelAssets a;
    if (s.meta().value("kind", std::string()) != "body-model")
        throw ParseError("asset store does not hold a body model");
    a.gender = parse_gender(s.meta().value("gender_tag", std::string("neutral")));
    const auto flags = s.meta().value("flags", nlohmann::json::object());
    a.shape_orthonormal = flags.value("shape_orthonormal", false);
    a.expr_orthonormal = flags.value("expr_orthonormal", false);
    a.regressor_convex = flags.value("regressor_convex", false);

    a.template_vertices = s.matrix("template_vertices");
    a.faces = s.int_matrix("faces");
    a.shape_dirs = s.matrix("shape_dirs");
    a.expr_dirs = s.matrix("expr_dirs");
    a.pose_dirs = s.matrix("pose_dirs");
    a.joint_regressor = MatX<double>(s.matrix("joint_regressor")).sparseView();
    a.skin_weights = s.matrix("skin_weights");
    for (auto p : s.ints("parents")) a.parents.push_back(p);
    for (auto g : s.ints("joint_groups")) {
        if (g < 0 || g > 5) throw ParseError("invalid joint group id");
        a.joint_groups.push_back(static_cast<JointGroup>(g));
    }
    a.hand_pca_left = s.matrix("hand_pca_left");
    a.hand_pca_right = s.matrix("hand_pca_right");
    if (s.has("hand_mean_left")) a.hand_mean_left = s.vector("hand_mean_left");
    if (s.has("hand_mean_right")) a.hand_mean_right = s.vector("hand_mean_right");
    if (s.has("landmarks")) {
        const auto lm = s.ints("landmarks");
        for (size_t i = 0; i + 1 < lm.size(); i += 2) {
            if (lm[i] < 0 || lm[i] > 2) throw ParseError("invalid landmark kind");
            a.landmarks.push_back({static_cast<LandmarkKind>(lm[i]), lm[i + 1]});
        }
    }
    if (s.has("triangle_regions")) {
        const auto r = s.ints("triangle_regions");
        a.triangle_regions.assign(r.begin(), r.end());
    }
    if (s.has("contact_mask")) {
        const auto cm = s.ints("contact_mask");
        for (size_t i = 0; i + 1 < cm.size(); i += 2) a.contact_mask.emplace_back(cm[i], cm[i + 1]);
    }
    a.finalize();
    return a;
}

ModelAssets ModelAssets::load(const std::filesystem::path& dir) { return from_store(ArrayStore::load(dir)); }

void ModelAssets::save(const std::filesystem::path& dir) const { to_store().save(dir); }

ParamVector ParamVector::zeros(const ModelAssets& assets, int latent_dim) {
    ParamVector p;
    p.body_pose = VecX<double>::Zero(3 * static_cast<int>(assets.group_joints(JointGroup::Body).size()));
    p.latent = VecX<double>::Zero(latent_dim);
    p.jaw_pose = VecX<double>::Zero(3 * static_cast<int>(assets.group_joints(JointGroup::Jaw).size()));
    p.eye_pose = VecX<double>::Zero(3 * static_cast<int>(assets.group_joints(JointGroup::Eye).size()));
    p.hand_coeffs = VecX<double>::Zero(assets.has_hands() ? 2 * assets.hand_components() : 0);
    p.shape = VecX<double>::Zero(assets.num_shape());
    p.expression = VecX<double>::Zero(assets.num_expression());
    return p;
}

void ParamVector::check(const ModelAssets& assets) const {
    auto expect = [](Eigen::Index got, Eigen::Index want, const char* what) {
        if (got != want) {
            std::ostringstream os;
            os << "param vector: " << what << " has " << got << " values, expected " << want;
            throw DimensionMismatch(os.str());
        }
    };
    expect(body_pose.size(), 3 * static_cast<Eigen::Index>(assets.group_joints(JointGroup::Body).size()), "body_pose");
    expect(jaw_pose.size(), 3 * static_cast<Eigen::Index>(assets.group_joints(JointGroup::Jaw).size()), "jaw_pose");
    expect(eye_pose.size(), 3 * static_cast<Eigen::Index>(assets.group_joints(JointGroup::Eye).size()), "eye_pose");
    expect(hand_coeffs.size(), assets.has_hands() ? 2 * assets.hand_components() : 0, "hand_coeffs");
    if (shape.size() > assets.num_shape()) expect(shape.size(), assets.num_shape(), "shape");
    if (expression.size() > assets.num_expression()) expect(expression.size(), assets.num_expression(), "expression");
}

int ParamVector::model_parameter_count() const {
    return static_cast<int>(3 + body_pose.size() + jaw_pose.size() + eye_pose.size() + hand_coeffs.size() +
                            shape.size() + expression.size());
}

ArrayStore ParamVector::to_store() const {
    ArrayStore s;
    s.meta()["kind"] = "param-vector";
    s.meta()["body_mode"] = body_mode == BodyPoseMode::Latent ? "latent" : "axis_angle";
    s.put_vector("global_orient", global_orient);
    s.put_vector("body_pose", body_pose);
    s.put_vector("latent", latent);
    s.put_vector("jaw_pose", jaw_pose);
    s.put_vector("eye_pose", eye_pose);
    s.put_vector("hand_coeffs", hand_coeffs);
    s.put_vector("shape", shape);
    s.put_vector("expression", expression);
    s.put_vector("camera_translation", camera_translation);
    return s;
}

ParamVector ParamVector::from_store(const ArrayStore& s) {
    if (s.meta().value("kind", std::string()) != "param-vector")
        throw ParseError("asset store does not hold a parameter vector");
    ParamVector p;
    p.body_mode = s.meta().value("body_mode", std::string("axis_angle")) == "latent" ? BodyPoseMode::Latent
                                                                                    : BodyPoseMode::AxisAngle;
    p.global_orient = s.vector("global_orient");
    p.body_pose = s.vector("body_pose");
    p.latent = s.vector("latent");
    p.jaw_pose = s.vector("jaw_pose");
    p.eye_pose = s.vector("eye_pose");
    p.hand_coeffs = s.vector("hand_coeffs");
    p.shape = s.vector("shape");
    p.expression = s.vector("expression");
    p.camera_translation = s.vector("camera_translation");
    return p;
}

namespace {

Points3d basis_blend(const VecX<double>& coeffs, const MatX<double>& basis, int n, const char* what) {
    if (coeffs.size() > basis.cols()) {
        std::ostringstream os;
        os << what << ": " << coeffs.size() << " coefficients but only " << basis.cols() << " basis vectors";
        throw DimensionMismatch(os.str());
    }
    Points3d out(n, 3);
    Eigen::Map<VecX<double>> flat(out.data(), 3 * n);
    flat.noalias() = basis.leftCols(coeffs.size()) * coeffs;
    return out;
}

}  // namespace

Points3d shape_blend(const VecX<double>& beta, const ModelAssets& assets) {
    return basis_blend(beta, assets.shape_dirs, assets.num_vertices(), "shape_blend");
}

Points3d expression_blend(const VecX<double>& psi, const ModelAssets& assets) {
    return basis_blend(psi, assets.expr_dirs, assets.num_vertices(), "expression_blend");
}

namespace {

VecX<double> pose_feature(const std::vector<Mat3<double>>& rot, int num_joints) {
    VecX<double> f(9 * (num_joints - 1));
    for (int k = 1; k < num_joints; ++k) {
        const Mat3<double> d = rot[k] - Mat3<double>::Identity();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) f[9 * (k - 1) + 3 * r + c] = d(r, c);
    }
    return f;
}

}  // namespace

Points3d pose_blend_from_rotations(const std::vector<Mat3<double>>& local_rotations, const ModelAssets& assets) {
    if (static_cast<int>(local_rotations.size()) != assets.num_joints())
        throw DimensionMismatch("pose_blend: expected one rotation per joint");
    const int n = assets.num_vertices();
    Points3d out(n, 3);
    Eigen::Map<VecX<double>> flat(out.data(), 3 * n);
    flat.noalias() = assets.pose_dirs * pose_feature(local_rotations, assets.num_joints());
    return out;
}

Points3d pose_blend(const VecX<double>& articulated_pose, const ModelAssets& assets) {
    if (articulated_pose.size() != 3 * assets.num_articulated())
        throw DimensionMismatch("pose_blend: expected 3K axis-angle values");
    std::vector<Mat3<double>> rot(assets.num_joints(), Mat3<double>::Identity());
    for (int k = 1; k < assets.num_joints(); ++k) rot[k] = rodrigues<double>(articulated_pose.segment<3>(3 * (k - 1)));
    return pose_blend_from_rotations(rot, assets);
}

VecX<double> hand_pca_to_pose(const VecX<double>& coeffs, const ModelAssets& assets, HandSide side) {
    const MatX<double>& basis = side == HandSide::Left ? assets.hand_pca_left : assets.hand_pca_right;
    const VecX<double>& mean = side == HandSide::Left ? assets.hand_mean_left : assets.hand_mean_right;
    if (coeffs.size() > basis.cols()) throw DimensionMismatch("hand_pca_to_pose: too many coefficients");
    VecX<double> pose = basis.leftCols(coeffs.size()) * coeffs;
    if (mean.size() == kHandPoseDim) pose += mean;
    return pose;
}

Points3d regress_joints(const Points3d& shaped_vertices, const ModelAssets& assets) {
    if (shaped_vertices.rows() != assets.num_vertices())
        throw DimensionMismatch("regress_joints: vertex count mismatch");
    return assets.joint_regressor * shaped_vertices;
}

std::vector<Mat3<double>> local_rotations(const ParamVector& params, const ModelAssets& assets) {
    if (params.body_mode != BodyPoseMode::AxisAngle)
        throw InvalidArgument("local_rotations: decode the latent body pose before calling forward");
    params.check(assets);
    std::vector<Mat3<double>> rot(assets.num_joints(), Mat3<double>::Identity());
    rot[0] = rodrigues<double>(params.global_orient);
    auto fill = [&](JointGroup g, const VecX<double>& values) {
        const auto& joints = assets.group_joints(g);
        for (size_t i = 0; i < joints.size(); ++i)
            rot[joints[i]] = rodrigues<double>(values.segment<3>(3 * static_cast<Eigen::Index>(i)));
    };
    fill(JointGroup::Body, params.body_pose);
    fill(JointGroup::Jaw, params.jaw_pose);
    fill(JointGroup::Eye, params.eye_pose);
    if (assets.has_hands()) {
        const int m = assets.hand_components();
        fill(JointGroup::LeftHand, hand_pca_to_pose(params.hand_coeffs.head(m), assets, HandSide::Left));
        fill(JointGroup::RightHand, hand_pca_to_pose(params.hand_coeffs.tail(m), assets, HandSide::Right));
    }
    return rot;
}

void forward_pass(const std::vector<Mat3<double>>& local_rotations, const VecX<double>& beta,
                  const VecX<double>& psi, const ModelAssets& assets, ForwardPass& out) {
    const int n = assets.num_vertices();
    const int nj = assets.num_joints();
    if (static_cast<int>(local_rotations.size()) != nj) throw DimensionMismatch("forward: rotation count");
    if (beta.size() > assets.num_shape() || psi.size() > assets.num_expression())
        throw DimensionMismatch("forward: too many shape or expression coefficients");

    out.local_rotations = local_rotations;

    out.rest_joints = assets.joint_template();
    if (beta.size() > 0) {
        VecX<double> dj = assets.joint_shape_dirs().leftCols(beta.size()) * beta;
        out.rest_joints += Eigen::Map<const Points3d>(dj.data(), nj, 3);
    }

    out.blended = assets.template_vertices;
    Eigen::Map<VecX<double>> flat(out.blended.data(), 3 * n);
    if (beta.size() > 0) flat.noalias() += assets.shape_dirs.leftCols(beta.size()) * beta;
    if (psi.size() > 0) flat.noalias() += assets.expr_dirs.leftCols(psi.size()) * psi;
    if (nj > 1) flat.noalias() += assets.pose_dirs * pose_feature(local_rotations, nj);

    out.global_rotations.resize(nj);
    out.posed_joints.resize(nj, 3);
    out.skin_translations.resize(nj);
    out.global_rotations[0] = local_rotations[0];
    out.posed_joints.row(0) = out.rest_joints.row(0);
    for (int k = 1; k < nj; ++k) {
        const int p = assets.parents[k];
        out.global_rotations[k] = out.global_rotations[p] * local_rotations[k];
        const Vec3<double> bone = (out.rest_joints.row(k) - out.rest_joints.row(p)).transpose();
        out.posed_joints.row(k) = (out.global_rotations[p] * bone).transpose() + out.posed_joints.row(p);
    }
    for (int k = 0; k < nj; ++k) {
        out.skin_translations[k] = out.posed_joints.row(k).transpose() -
                                   out.global_rotations[k] * out.rest_joints.row(k).transpose();
    }

    out.vertices.resize(n, 3);
    const auto& off = assets.skin_offsets();
    const auto& sj = assets.skin_joints();
    const auto& sv = assets.skin_values();
    for (int v = 0; v < n; ++v) {
        Mat3<double> m = Mat3<double>::Zero();
        Vec3<double> t = Vec3<double>::Zero();
        for (int i = off[v]; i < off[v + 1]; ++i) {
            m.noalias() += sv[i] * out.global_rotations[sj[i]];
            t.noalias() += sv[i] * out.skin_translations[sj[i]];
        }
        out.vertices.row(v) = (m * out.blended.row(v).transpose() + t).transpose();
    }
}

void backward_pass(const ForwardPass& pass, const Points3d& joint_grad, const Points3d& vertex_grad,
                   const ModelAssets& assets, ModelGradient& out) {
    const int n = assets.num_vertices();
    const int nj = assets.num_joints();
    if (joint_grad.rows() != nj || vertex_grad.rows() != n) throw DimensionMismatch("backward: seed shapes");

    std::vector<Mat3<double>> d_global(nj, Mat3<double>::Zero());
    std::vector<Vec3<double>> d_trans(nj, Vec3<double>::Zero());
    std::vector<Vec3<double>> d_skin(nj, Vec3<double>::Zero());
    Points3d d_rest = Points3d::Zero(nj, 3);
    VecX<double> d_blended = VecX<double>::Zero(3 * n);

    const auto& off = assets.skin_offsets();
    const auto& sj = assets.skin_joints();
    const auto& sv = assets.skin_values();
    for (int v = 0; v < n; ++v) {
        const Vec3<double> g = vertex_grad.row(v).transpose();
        if (g.isZero(0.0)) continue;
        const Vec3<double> p = pass.blended.row(v).transpose();
        Mat3<double> m = Mat3<double>::Zero();
        for (int i = off[v]; i < off[v + 1]; ++i) {
            const int k = sj[i];
            d_global[k].noalias() += sv[i] * g * p.transpose();
            d_skin[k] += sv[i] * g;
            m.noalias() += sv[i] * pass.global_rotations[k];
        }
        d_blended.segment<3>(3 * v) = m.transpose() * g;
    }

    for (int k = 0; k < nj; ++k) {
        d_trans[k] += d_skin[k] + joint_grad.row(k).transpose();
        d_global[k].noalias() -= d_skin[k] * pass.rest_joints.row(k);
        d_rest.row(k) -= (pass.global_rotations[k].transpose() * d_skin[k]).transpose();
    }

    out.rotations.assign(nj, Mat3<double>::Zero());
    for (int k = nj - 1; k >= 1; --k) {
        const int p = assets.parents[k];
        const Vec3<double> bone = (pass.rest_joints.row(k) - pass.rest_joints.row(p)).transpose();
        d_global[p].noalias() += d_global[k] * pass.local_rotations[k].transpose() + d_trans[k] * bone.transpose();
        out.rotations[k] = pass.global_rotations[p].transpose() * d_global[k];
        d_trans[p] += d_trans[k];
        const Vec3<double> back = pass.global_rotations[p].transpose() * d_trans[k];
        d_rest.row(k) += back.transpose();
        d_rest.row(p) -= back.transpose();
    }
    out.rotations[0] = d_global[0];
    d_rest.row(0) += d_trans[0].transpose();

    if (nj > 1) {
        const VecX<double> d_feature = assets.pose_dirs.transpose() * d_blended;
        for (int k = 1; k < nj; ++k)
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) out.rotations[k](r, c) += d_feature[9 * (k - 1) + 3 * r + c];
    }

    const Eigen::Map<const VecX<double>> d_rest_flat(d_rest.data(), 3 * nj);
    out.beta = assets.shape_dirs.transpose() * d_blended + assets.joint_shape_dirs().transpose() * d_rest_flat;
    out.psi = assets.expr_dirs.transpose() * d_blended;
}

ForwardResult forward(const ParamVector& params, const ModelAssets& assets) {
    ForwardPass pass;
    forward_pass(local_rotations(params, assets), params.shape, params.expression, assets, pass);
    ForwardResult r;
    r.vertices = std::move(pass.vertices);
    r.joints = pass.posed_joints;
    r.joint_transforms.resize(assets.num_joints());
    for (int k = 0; k < assets.num_joints(); ++k) {
        Mat4<double> t = Mat4<double>::Identity();
        t.topLeftCorner<3, 3>() = pass.global_rotations[k];
        t.topRightCorner<3, 1>() = pass.posed_joints.row(k).transpose();
        r.joint_transforms[k] = t;
    }
    return r;
}

Points3d landmark_positions(const Points3d& joints, const Points3d& vertices, const ModelAssets& assets) {
    if (assets.landmarks.empty()) throw ConfigError("model assets carry no landmark table");
    Points3d out = Points3d::Zero(kTotalKeypoints, 3);
    for (int i = 0; i < kTotalKeypoints; ++i) {
        const Landmark& lm = assets.landmarks[i];
        if (lm.kind == LandmarkKind::Joint)
            out.row(i) = joints.row(lm.index);
        else if (lm.kind == LandmarkKind::Vertex)
            out.row(i) = vertices.row(lm.index);
    }
    return out;
}

}  // namespace xbody
