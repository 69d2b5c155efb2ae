#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "xbody/asset_store.hpp"
#include "xbody/types.hpp"

namespace xbody {

enum class Gender { Neutral, Male, Female };

std::string to_string(Gender g);
Gender parse_gender(const std::string& s);

// Role of each joint in the parameterization.
enum class JointGroup : int { Root = 0, Body = 1, Jaw = 2, Eye = 3, LeftHand = 4, RightHand = 5 };

enum class HandSide { Left, Right };

// Correspondence of a 2D keypoint slot with a point on the model.
enum class LandmarkKind : int { None = 0, Joint = 1, Vertex = 2 };

struct Landmark {
    LandmarkKind kind = LandmarkKind::None;
    int index = -1;
};

inline constexpr int kHandPoseDim = 45;

/// All learned tensors of the body model. Immutable once finalize() has run;
/// share freely across threads.
///
/// Layout conventions: blend-shape bases have one row per vertex coordinate
/// (row 3v + c); pose features are the row-major entries of (R_k - I) for the
/// articulated joints k = 1..K, so column 9(k-1) + 3r + c.
struct ModelAssets {
    Points3d template_vertices;
    Faces faces;
    MatX<double> shape_dirs;
    MatX<double> expr_dirs;
    MatX<double> pose_dirs;
    SparseMatrixd joint_regressor;  // (K+1) x N
    MatX<double> skin_weights;      // N x (K+1)
    std::vector<int> parents;       // parents[0] == -1
    std::vector<JointGroup> joint_groups;
    MatX<double> hand_pca_left;  // 45 x n per side
    MatX<double> hand_pca_right;
    VecX<double> hand_mean_left;  // empty when the asset carries no mean
    VecX<double> hand_mean_right;
    Gender gender = Gender::Neutral;
    bool shape_orthonormal = false;
    bool expr_orthonormal = false;
    bool regressor_convex = false;

    std::vector<Landmark> landmarks;  // one per keypoint slot, may be empty
    std::vector<int> triangle_regions;
    std::vector<std::pair<int, int>> contact_mask;  // region pairs never reported as collisions

    /// Validates every invariant and builds the derived tables below.
    void finalize();

    int num_vertices() const { return static_cast<int>(template_vertices.rows()); }
    int num_faces() const { return static_cast<int>(faces.rows()); }
    int num_joints() const { return static_cast<int>(parents.size()); }  // K + 1
    int num_articulated() const { return num_joints() - 1; }             // K
    int num_shape() const { return static_cast<int>(shape_dirs.cols()); }
    int num_expression() const { return static_cast<int>(expr_dirs.cols()); }
    int hand_components() const { return static_cast<int>(hand_pca_left.cols()); }
    bool has_hands() const { return !group_joints(JointGroup::LeftHand).empty(); }

    const std::vector<int>& group_joints(JointGroup g) const { return group_joints_[static_cast<int>(g)]; }
    const std::vector<std::vector<int>>& children() const { return children_; }
    const Points3d& joint_template() const { return joint_template_; }
    const MatX<double>& joint_shape_dirs() const { return joint_shape_dirs_; }

    // Sparse skinning rows: weights of vertex v live in [skin_offsets[v], skin_offsets[v+1]).
    const std::vector<int>& skin_offsets() const { return skin_offsets_; }
    const std::vector<int>& skin_joints() const { return skin_joints_; }
    const std::vector<double>& skin_values() const { return skin_values_; }

    ArrayStore to_store() const;
    static ModelAssets from_store(const ArrayStore& store);
    static ModelAssets load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;

private:
    std::vector<std::vector<int>> group_joints_ = std::vector<std::vector<int>>(6);
    std::vector<std::vector<int>> children_;
    Points3d joint_template_;
    MatX<double> joint_shape_dirs_;
    std::vector<int> skin_offsets_;
    std::vector<int> skin_joints_;
    std::vector<double> skin_values_;
};

enum class BodyPoseMode { AxisAngle, Latent };

/// Optimizable state of one body. Exactly one of body_pose / latent drives the
/// body joints, selected by body_mode.
struct ParamVector {
    Vec3<double> global_orient = Vec3<double>::Zero();
    VecX<double> body_pose;
    VecX<double> latent;
    BodyPoseMode body_mode = BodyPoseMode::AxisAngle;
    VecX<double> jaw_pose;
    VecX<double> eye_pose;
    VecX<double> hand_coeffs;  // left block then right block
    VecX<double> shape;
    VecX<double> expression;
    Vec3<double> camera_translation = Vec3<double>::Zero();

    static ParamVector zeros(const ModelAssets& assets, int latent_dim = 32);

    // Throws DimensionMismatch when the sizes disagree with the assets.
    void check(const ModelAssets& assets) const;

    // Model parameters proper (camera translation and latent excluded).
    int model_parameter_count() const;

    ArrayStore to_store() const;
    static ParamVector from_store(const ArrayStore& store);
};

Points3d shape_blend(const VecX<double>& beta, const ModelAssets& assets);
Points3d expression_blend(const VecX<double>& psi, const ModelAssets& assets);

/// Pose corrective offsets for articulated joint rotations in axis-angle (3K
/// values, global rotation excluded). Exactly zero at the rest pose.
Points3d pose_blend(const VecX<double>& articulated_pose, const ModelAssets& assets);

/// Same, from local rotation matrices of all K+1 joints (entry 0 is ignored).
Points3d pose_blend_from_rotations(const std::vector<Mat3<double>>& local_rotations, const ModelAssets& assets);

/// Finger pose (15 joints x 3, flattened) from hand PCA coefficients of one side.
VecX<double> hand_pca_to_pose(const VecX<double>& coeffs, const ModelAssets& assets, HandSide side);

/// Rest-pose joint locations regressed from a shaped (N x 3) template.
Points3d regress_joints(const Points3d& shaped_vertices, const ModelAssets& assets);

/// Local rotation matrices of all joints; requires body_mode == AxisAngle.
std::vector<Mat3<double>> local_rotations(const ParamVector& params, const ModelAssets& assets);

struct ForwardResult {
    Points3d vertices;                         // N x 3, model space
    Points3d joints;                           // (K+1) x 3, posed
    std::vector<Mat4<double>> joint_transforms;  // global rigid transform of each joint
};

/// Posed mesh and joints. The camera translation is not applied.
ForwardResult forward(const ParamVector& params, const ModelAssets& assets);

/// Model points of every keypoint slot (kTotalKeypoints x 3); slots without a
/// landmark are zero. Throws ConfigError when the assets carry no table.
Points3d landmark_positions(const Points3d& joints, const Points3d& vertices, const ModelAssets& assets);

/// Intermediates of one evaluation, kept for the reverse pass. Caller owned,
/// so concurrent evaluations only need one instance each.
struct ForwardPass {
    std::vector<Mat3<double>> local_rotations;
    Points3d rest_joints;
    Points3d blended;  // template plus all blend shapes, before skinning
    std::vector<Mat3<double>> global_rotations;
    Points3d posed_joints;
    std::vector<Vec3<double>> skin_translations;
    Points3d vertices;
};

void forward_pass(const std::vector<Mat3<double>>& local_rotations, const VecX<double>& beta,
                  const VecX<double>& psi, const ModelAssets& assets, ForwardPass& out);

struct ModelGradient {
    std::vector<Mat3<double>> rotations;  // dL/dR_k for every local rotation
    VecX<double> beta;
    VecX<double> psi;
};

/// Reverse pass: gradients of a scalar loss given dL/d(posed joints) and
/// dL/d(vertices). Rows of vertex_grad that are exactly zero are skipped.
void backward_pass(const ForwardPass& pass, const Points3d& joint_grad, const Points3d& vertex_grad,
                   const ModelAssets& assets, ModelGradient& out);

}  // namespace xbody
