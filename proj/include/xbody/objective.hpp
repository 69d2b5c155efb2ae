#pragma once

#include <string>
#include <vector>

#include "xbody/camera.hpp"
#include "xbody/collision.hpp"
#include "xbody/keypoints.hpp"
#include "xbody/lbfgs.hpp"
#include "xbody/model.hpp"
#include "xbody/priors.hpp"
#include "xbody/vposer.hpp"

namespace xbody {

/// Data-term weights per keypoint group.
struct DataWeights {
    double body = 1.0;
    double hands = 0.0;
    double face = 0.0;
};

/// Term weights of one annealing stage.
struct StageWeights {
    std::string name;
    DataWeights data;
    double body_pose = 0.0;   // latent penalty or GMM energy
    double face_pose = 0.0;   // jaw and eyes
    double hands = 0.0;       // hand PCA coefficients
    double angle = 0.0;       // elbow and knee bending
    double shape = 0.0;
    double expression = 0.0;
    double collision = 0.0;
};

enum class BodyPrior { Vposer, Gmm };

struct FitConfig {
    std::vector<StageWeights> stages;
    double sigma_per_1000 = 100.0;  // Geman-McClure scale in pixels at 1000 px focal
    LbfgsSettings lbfgs;
    Camera camera;                   // intrinsics and rotation; translation is estimated
    std::string gender = "neutral";  // neutral, male, female or auto
    double gender_threshold = 0.9;
    BodyPrior prior = BodyPrior::Vposer;
    bool collision = true;  // false zeroes every collision weight

    /// Camera initialization followed by three annealing stages.
    static FitConfig preset();
    /// Throws ConfigError on negative weights, no stages or a non-positive scale.
    void validate() const;
    double sigma() const { return sigma_per_1000 * camera.mean_focal() / 1000.0; }
};

/// sigma^2 e^2 / (sigma^2 + e^2).
double geman_mcclure(double residual, double sigma);

/// Robust reprojection error of the model points of every keypoint slot
/// (kTotalKeypoints x 3, from landmark_positions). The camera translation is
/// the one stored in `camera`. Returns +infinity when a used point is behind
/// the camera. Throws ConfigError when a detected keypoint has no landmark.
double data_term(const Points3d& model_points, const std::vector<Landmark>& landmarks, const Camera& camera,
                 const KeypointSet& keypoints, const DataWeights& weights, double sigma,
                 Points3d* grad_points = nullptr, Vec3<double>* grad_translation = nullptr);

/// Same from a full parameter vector in axis-angle mode; the camera
/// translation is taken from params.
double data_term(const ParamVector& params, const ModelAssets& assets, const Camera& camera,
                 const KeypointSet& keypoints, const DataWeights& weights, double sigma);

/// Position of each parameter block inside the flat optimizer vector.
struct ParamLayout {
    BodyPoseMode mode = BodyPoseMode::AxisAngle;
    int orient = 0, body = 0, jaw = 0, eye = 0, hands = 0, shape = 0, expression = 0, translation = 0;
    int body_size = 0, jaw_size = 0, eye_size = 0, hands_size = 0, shape_size = 0, expression_size = 0;
    int size = 0;

    static ParamLayout make(const ParamVector& like);
    VecX<double> pack(const ParamVector& p) const;
    void unpack(const VecX<double>& x, ParamVector& p) const;
};

struct TermBreakdown {
    double data = 0.0;
    double body_pose = 0.0;
    double face_pose = 0.0;
    double hands = 0.0;
    double angle = 0.0;
    double shape = 0.0;
    double expression = 0.0;
    double collision = 0.0;
    double total = 0.0;  // weighted sum
};

/// Total weighted energy of one stage over the flat parameter vector. The
/// collision pair set is frozen between calls to refresh_collisions().
class FitObjective {
public:
    FitObjective(const ModelAssets& assets, const Camera& camera, const KeypointSet& keypoints,
                 const StageWeights& weights, double sigma, const ParamVector& like,
                 const Vposer<double>* vposer = nullptr, const GmmPrior* gmm = nullptr,
                 const ContactMask* mask = nullptr);

    const ParamLayout& layout() const { return layout_; }
    const StageWeights& weights() const { return weights_; }

    /// Weighted total (raw per-term values in terms). +infinity when a used
    /// landmark falls behind the camera.
    double evaluate(const VecX<double>& x, VecX<double>* grad = nullptr, TermBreakdown* terms = nullptr) const;

    /// Posed vertices at x (model space).
    Points3d vertices(const VecX<double>& x) const;
    /// Full parameter vector at x; in latent mode body_pose holds the decoded pose.
    ParamVector params(const VecX<double>& x) const;

    /// Re-detects colliding pairs at x. Returns true when the set changed.
    /// No-op while the collision weight is zero.
    bool refresh_collisions(const VecX<double>& x);
    void set_pairs(std::vector<CollisionPair> pairs) { pairs_ = std::move(pairs); }
    const std::vector<CollisionPair>& pairs() const { return pairs_; }

private:
    std::vector<Mat3<double>> rotations(const VecX<double>& x, typename Vposer<double>::Decoding* decoding) const;

    const ModelAssets& assets_;
    Camera camera_;
    const KeypointSet& keypoints_;
    StageWeights weights_;
    double sigma_;
    ParamLayout layout_;
    const Vposer<double>* vposer_;
    const GmmPrior* gmm_;
    ContactMask mask_;
    std::vector<CollisionPair> pairs_;
};

}  // namespace xbody
