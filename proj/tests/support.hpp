#pragma once

// Reference implementations shared by the unit tests and the acceptance
// runner. Everything here is written independently of the library code it
// checks: rotations through quaternions, gradients through central
// differences, intersections through segment/triangle crossings and pair sets
// through exhaustive enumeration.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "xbody/collision.hpp"
#include "xbody/fit.hpp"
#include "xbody/model.hpp"
#include "xbody/objective.hpp"
#include "xbody/pose_sampler.hpp"
#include "xbody/priors.hpp"
#include "xbody/scene.hpp"
#include "xbody/synthetic.hpp"
#include "xbody/vposer.hpp"

namespace xbody::testing {

inline const ModelAssets& default_model() {
    static const ModelAssets assets = make_synthetic_model({});
    return assets;
}

/// Rotation from axis-angle through a unit quaternion.
inline Mat3<double> quaternion_rotation(const Vec3<double>& w) {
    const double theta = w.norm();
    if (theta == 0.0) return Mat3<double>::Identity();
    const Vec3<double> axis = w / theta;
    const double s = std::sin(0.5 * theta);
    const double a = std::cos(0.5 * theta), b = s * axis.x(), c = s * axis.y(), d = s * axis.z();
    Mat3<double> r;
    r << a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c),
         2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b),
         2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d;
    return r;
}

/// Central differences of a scalar function.
inline VecX<double> numeric_gradient(const std::function<double(const VecX<double>&)>& f, const VecX<double>& x,
                                     double h = 1e-6) {
    VecX<double> g(x.size());
    VecX<double> y = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        y[i] = x[i] + h;
        const double fp = f(y);
        y[i] = x[i] - h;
        const double fm = f(y);
        y[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// ||a - b|| / max(||b||, floor).
inline double relative_error(const VecX<double>& a, const VecX<double>& b, double floor = 1e-12) {
    return (a - b).norm() / std::max(b.norm(), floor);
}

/// Does the closed segment p-q cross triangle abc? Solves p + t (q - p) =
/// a + u (b - a) + v (c - a) by Cramer's rule; parallel segments never cross.
inline bool segment_crosses_triangle(const Vec3<double>& p, const Vec3<double>& q, const Vec3<double>& a,
                                     const Vec3<double>& b, const Vec3<double>& c) {
    Mat3<double> m;
    m.col(0) = p - q;
    m.col(1) = b - a;
    m.col(2) = c - a;
    const double det = m.determinant();
    if (std::abs(det) < 1e-14) return false;
    const Vec3<double> rhs = p - a;
    auto replaced = [&](int k) {
        Mat3<double> mk = m;
        mk.col(k) = rhs;
        return mk.determinant() / det;
    };
    const double t = replaced(0), u = replaced(1), v = replaced(2);
    return t >= 0.0 && t <= 1.0 && u >= 0.0 && v >= 0.0 && u + v <= 1.0;
}

/// Two non-coplanar triangles intersect exactly when an edge of one crosses
/// the other.
inline bool triangles_intersect_oracle(const std::array<Vec3<double>, 3>& s, const std::array<Vec3<double>, 3>& t) {
    for (int e = 0; e < 3; ++e) {
        if (segment_crosses_triangle(s[e], s[(e + 1) % 3], t[0], t[1], t[2])) return true;
        if (segment_crosses_triangle(t[e], t[(e + 1) % 3], s[0], s[1], s[2])) return true;
    }
    return false;
}

/// Every intersecting pair (s < t) by exhaustive enumeration, with the same
/// exclusions as the hierarchy query: shared vertices and masked regions.
inline std::set<std::pair<int, int>> brute_force_pairs(const Points3d& v, const Faces& f, const ContactMask& mask = {}) {
    std::set<std::pair<int, int>> out;
    for (int s = 0; s < f.rows(); ++s)
        for (int t = s + 1; t < f.rows(); ++t) {
            bool shared = false;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) shared = shared || f(s, i) == f(t, j);
            if (shared || mask.masks(s, t)) continue;
            if (triangles_intersect(v.row(f(s, 0)).transpose(), v.row(f(s, 1)).transpose(), v.row(f(s, 2)).transpose(),
                                    v.row(f(t, 0)).transpose(), v.row(f(t, 1)).transpose(), v.row(f(t, 2)).transpose()))
                out.insert({s, t});
        }
    return out;
}

inline std::set<std::pair<int, int>> pair_set(const std::vector<CollisionPair>& pairs) {
    std::set<std::pair<int, int>> out;
    for (const auto& p : pairs) out.insert({p.s, p.t});
    return out;
}

/// Soup of n triangles with corners in a box of side `extent`; triangle
/// edges are around `size` long.
inline std::pair<Points3d, Faces> random_soup(std::mt19937_64& rng, int n, double extent = 1.0, double size = 0.15) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Points3d v(3 * n, 3);
    Faces f(n, 3);
    for (int i = 0; i < n; ++i) {
        const Vec3<double> c(extent * unit(rng), extent * unit(rng), extent * unit(rng));
        for (int k = 0; k < 3; ++k) {
            v.row(3 * i + k) = (c + size * Vec3<double>(gauss(rng), gauss(rng), gauss(rng))).transpose();
            f(i, k) = 3 * i + k;
        }
    }
    return {v, f};
}

/// Random but plausible parameters: sampled body pose, random shape,
/// expression, hands, jaw and eyes, placed in front of the camera.
inline ParamVector random_params(const ModelAssets& assets, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    ParamVector p = ParamVector::zeros(assets);
    p.body_pose = PoseSampler(seed).sample();
    p.global_orient = Vec3<double>(3.0 + 0.1 * gauss(rng), 0.3 * gauss(rng), 0.1 * gauss(rng));
    for (Eigen::Index i = 0; i < p.shape.size(); ++i) p.shape[i] = 0.5 * scale * gauss(rng);
    for (Eigen::Index i = 0; i < p.expression.size(); ++i) p.expression[i] = 0.5 * scale * gauss(rng);
    for (Eigen::Index i = 0; i < p.hand_coeffs.size(); ++i) p.hand_coeffs[i] = 0.5 * scale * gauss(rng);
    for (Eigen::Index i = 0; i < p.jaw_pose.size(); ++i) p.jaw_pose[i] = 0.1 * gauss(rng);
    for (Eigen::Index i = 0; i < p.eye_pose.size(); ++i) p.eye_pose[i] = 0.1 * gauss(rng);
    p.camera_translation = Vec3<double>(0.05 * gauss(rng), 0.05 * gauss(rng), 3.0 + 0.2 * gauss(rng));
    return p;
}

/// Priors for gradient checks. Their values need not be meaningful, so an
/// untrained network and a mixture fitted to a small corpus are enough.
struct CheckPriors {
    Vposer<double> vposer;
    GmmPrior gmm;
};

inline const CheckPriors& check_priors() {
    static const CheckPriors p = [] {
        CheckPriors c;
        c.vposer = make_vposer(VposerArch{}, 11).cast<double>();
        c.gmm = GmmPrior::fit(PoseSampler(5).corpus(400), 4, 5, 30);
        return c;
    }();
    return p;
}

struct GradientCheck {
    double relative_error = 0.0;
    int collision_pairs = 0;
    bool latent = false;
};

/// Analytic gradient of the full stage objective against central differences
/// at one random configuration. Even seeds run in latent mode with the
/// network prior, odd seeds in axis-angle mode with the mixture. Collision
/// pairs are detected once at the evaluation point and then frozen.
inline GradientCheck check_objective_gradient(std::uint64_t seed) {
    const ModelAssets& assets = default_model();
    const CheckPriors& priors = check_priors();
    SceneOptions so;
    so.collisions = SceneCollisions::Any;
    so.noise_px = 3.0;
    const SyntheticScene scene = make_scene(assets, seed + 1000, so);

    ParamVector p = random_params(assets, seed);
    GradientCheck out;
    out.latent = seed % 2 == 0;
    if (out.latent) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 0.5);
        p.body_mode = BodyPoseMode::Latent;
        p.latent = VecX<double>(priors.vposer.latent_dim());
        for (Eigen::Index i = 0; i < p.latent.size(); ++i) p.latent[i] = gauss(rng);
    }
    StageWeights w{"check", {1.0, 2.0, 2.0}, 4.78, 4.78, 4.78, 5.7, 5.0, 5.0, 1e5};
    const ContactMask mask = ContactMask::from_assets(assets);
    FitObjective obj(assets, scene.camera, scene.keypoints, w, 100.0, p, &priors.vposer, &priors.gmm, &mask);
    const VecX<double> x = obj.layout().pack(p);
    obj.refresh_collisions(x);
    out.collision_pairs = static_cast<int>(obj.pairs().size());

    VecX<double> g;
    obj.evaluate(x, &g);
    const VecX<double> fd = numeric_gradient([&](const VecX<double>& y) { return obj.evaluate(y); }, x);
    out.relative_error = relative_error(g, fd);
    return out;
}

}  // namespace xbody::testing
