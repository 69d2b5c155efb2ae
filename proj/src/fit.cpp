#include "xbody/fit.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "xbody/errors.hpp"
#include "xbody/rotation.hpp"

namespace xbody {

namespace {

template <typename E>
[[noreturn]] void rethrow_in_stage(const std::string& stage, const E& e) {
    throw E("stage '" + stage + "': " + e.what());
}

bool anything_detected(const KeypointSet& k) { return (k.stacked().col(2).array() > 0.0).any(); }

// The optimizer works on y = s * x with per-block factors that bring the
// curvature of the data term to a common order of magnitude.
VecX<double> variable_scale(const ParamLayout& l) {
    VecX<double> s = VecX<double>::Ones(l.size);
    s.segment(l.orient, 3).setConstant(10.0);
    if (l.mode == BodyPoseMode::AxisAngle) s.segment(l.body, l.body_size).setConstant(3.0);
    s.segment(l.hands, l.hands_size).setConstant(0.3);
    s.segment(l.expression, l.expression_size).setConstant(2.0);
    s.segment(l.translation, 3).setConstant(30.0);
    return s;
}

}  // namespace

std::pair<double, int> mesh_collision_energy(const Points3d& vertices, const ModelAssets& assets) {
    const VertexBuffer vb(vertices);
    const Bvh bvh = build_bvh(vb, assets.faces);
    const auto pairs = find_colliding_pairs(bvh, vb, assets.faces, ContactMask::from_assets(assets));
    return {collision_energy(pairs, vertices, assets.faces), static_cast<int>(pairs.size())};
}

FitResult fit(const KeypointSet& keypoints, const ModelAssets& assets, const FitConfig& config,
              const FitPriors& priors) {
    config.validate();
    FitResult result;

    const bool latent = config.prior == BodyPrior::Vposer;
    Vposer<double> vposer;
    if (latent) {
        if (!priors.vposer) throw ConfigError("fit: the VPoser prior is selected but not loaded");
        vposer = priors.vposer->cast<double>();
    } else if (!priors.gmm) {
        throw ConfigError("fit: the GMM prior is selected but not loaded");
    }

    ParamVector p = ParamVector::zeros(assets, latent ? vposer.latent_dim() : 32);
    p.body_mode = latent ? BodyPoseMode::Latent : BodyPoseMode::AxisAngle;

    // Stage 0: camera translation and global orientation.
    if (anything_detected(keypoints)) {
        result.camera_init = init_camera(keypoints, assets, config.camera);
        p.global_orient = result.camera_init.global_orient;
        p.camera_translation = result.camera_init.translation;
    } else {
        result.camera_from_detections = false;
        const Mat3<double> flip = Eigen::AngleAxisd(std::numbers::pi, Vec3<double>::UnitX()).toRotationMatrix();
        p.global_orient = log_map<double>(flip);
        p.camera_translation = Vec3<double>(0.0, 0.0, 3.0 * config.camera.mean_focal() / 1000.0);
        result.camera_init.global_orient = p.global_orient;
        result.camera_init.translation = p.camera_translation;
    }

    const ContactMask mask = ContactMask::from_assets(assets);
    VecX<double> x;
    for (const StageWeights& stage : config.stages) {
        StageWeights w = stage;
        if (!config.collision) w.collision = 0.0;
        StageReport rep;
        rep.name = w.name;
        try {
            FitObjective obj(assets, config.camera, keypoints, w, config.sigma(), p, latent ? &vposer : nullptr,
                             priors.gmm, &mask);
            x = obj.layout().pack(p);
            const VecX<double> scale = variable_scale(obj.layout());
            obj.refresh_collisions(x);
            rep.start.total = obj.evaluate(x, nullptr, &rep.start);
            rep.trace.push_back(rep.start.total);
            auto fn = [&](const VecX<double>& y, VecX<double>& g) {
                const double f = obj.evaluate(y.cwiseQuotient(scale), &g);
                g = g.cwiseQuotient(scale);
                return f;
            };
            auto on_step = [&](const VecX<double>& y, double f) {
                rep.trace.push_back(f);
                return obj.refresh_collisions(y.cwiseQuotient(scale));
            };
            const LbfgsResult r = lbfgs_minimize(fn, x.cwiseProduct(scale), config.lbfgs, on_step);
            x = r.x.cwiseQuotient(scale);
            obj.evaluate(x, nullptr, &rep.end);
            rep.iterations = r.iterations;
            rep.evaluations = r.evaluations;
            rep.converged = r.converged;
            rep.line_search_failed = r.line_search_failed;
            rep.message = r.message;
            rep.steps = r.history;
            rep.collision_pairs = static_cast<int>(obj.pairs().size());
            p = obj.params(x);
        } catch (const NumericError& e) {
            rethrow_in_stage(w.name, e);
        } catch (const ConfigError& e) {
            rethrow_in_stage(w.name, e);
        }
        result.stages.push_back(std::move(rep));
    }

    result.params = p;
    if (latent) result.params.body_pose = vposer.decode(p.latent).axis_angle();
    ParamVector posed = result.params;
    posed.body_mode = BodyPoseMode::AxisAngle;
    const ForwardResult fr = forward(posed, assets);
    result.vertices = fr.vertices;
    result.joints = fr.joints;
    std::tie(result.collision_energy, result.collision_pairs) = mesh_collision_energy(fr.vertices, assets);
    return result;
}

}  // namespace xbody
