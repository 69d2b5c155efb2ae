#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "support.hpp"
#include "xbody/camera.hpp"
#include "xbody/errors.hpp"
#include "xbody/lbfgs.hpp"
#include "xbody/priors.hpp"
#include "xbody/rotation.hpp"

using namespace xbody;
namespace xt = xbody::testing;

namespace {

double rosenbrock(const VecX<double>& x, VecX<double>& g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
}

// Log of w_k N(x; mu_k, P_k^-1) and of its peak value, per component.
std::vector<double> component_log_terms(const GmmPrior& gmm, const VecX<double>& x, bool peak) {
    std::vector<double> out;
    const double d = static_cast<double>(gmm.dim());
    for (int k = 0; k < gmm.components(); ++k) {
        const MatX<double> p = gmm.precision_factors()[k] * gmm.precision_factors()[k].transpose();
        const VecX<double> r = x - gmm.means().row(k).transpose();
        const MatX<double> l = p.llt().matrixL();
        const double log_det = 2.0 * l.diagonal().array().log().sum();
        out.push_back(std::log(gmm.weights()[k]) + 0.5 * log_det - 0.5 * d * std::log(2.0 * std::numbers::pi) -
                      (peak ? 0.0 : 0.5 * r.dot(p * r)));
    }
    return out;
}

double log_sum(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double e : v) s += std::exp(e - m);
    return m + std::log(s);
}

}  // namespace

TEST(Lbfgs, RosenbrockWithStrongWolfeSteps) {
    LbfgsSettings s;
    s.gradient_tolerance = 1e-10;
    const LbfgsResult r = lbfgs_minimize(rosenbrock, Vec2<double>(-1.2, 1.0), s);
    EXPECT_LT((r.x - Vec2<double>(1.0, 1.0)).norm(), 1e-6);
    ASSERT_FALSE(r.history.empty());
    for (const auto& h : r.history) {
        EXPECT_LT(h.slope0, 0.0);
        EXPECT_LE(h.f, h.f0 + s.c1 * h.step * h.slope0);
        EXPECT_LE(std::abs(h.slope), s.c2 * std::abs(h.slope0));
    }
}

TEST(Lbfgs, QuadraticAndErrors) {
    MatX<double> a(3, 3);
    a << 4, 1, 0, 1, 3, 1, 0, 1, 2;
    const VecX<double> b = Eigen::Vector3d(1, -2, 3);
    auto f = [&](const VecX<double>& x, VecX<double>& g) {
        g = a * x - b;
        return 0.5 * x.dot(a * x) - b.dot(x);
    };
    const LbfgsResult r = lbfgs_minimize(f, VecX<double>::Zero(3), {});
    EXPECT_TRUE(r.converged);
    EXPECT_LT((r.x - a.ldlt().solve(b)).norm(), 1e-8);

    auto nan_f = [](const VecX<double>& x, VecX<double>& g) {
        g = x;
        return std::nan("");
    };
    EXPECT_THROW(lbfgs_minimize(nan_f, VecX<double>::Ones(2), {}), NumericError);
    LbfgsSettings bad;
    bad.c2 = 1e-5;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Priors, L2AndAngle) {
    const VecX<double> x = Eigen::Vector3d(1, -2, 0.5);
    VecX<double> g;
    EXPECT_DOUBLE_EQ(l2_prior(x, &g), 5.25);
    EXPECT_LT((g - 2.0 * x).norm(), 1e-15);

    const VecX<double> pose = PoseSampler(3).sample();
    VecX<double> ga;
    const double e = angle_prior(pose, &ga);
    double expect = 0.0;
    for (const auto& c : default_bend_table()) expect += std::exp(c.sign * pose[3 * (c.joint - 1) + c.axis]);
    EXPECT_NEAR(e, expect, 1e-12);
    const VecX<double> fd = xt::numeric_gradient([](const VecX<double>& p) { return angle_prior(p); }, pose);
    EXPECT_LT(xt::relative_error(ga, fd), 1e-8);
    EXPECT_THROW(angle_prior(pose, nullptr, {}), ConfigError);
}

TEST(Priors, MixtureEnergyMatchesNaiveSum) {
    const GmmPrior gmm = GmmPrior::fit(PoseSampler(8).corpus(600), 3, 8, 40);
    const double log_peak = log_sum(component_log_terms(gmm, VecX<double>::Zero(gmm.dim()), true));
    PoseSampler s(9);
    for (int i = 0; i < 10; ++i) {
        const VecX<double> x = s.sample();
        VecX<double> g;
        const double e = gmm.energy(x, &g);
        EXPECT_GE(e, 0.0);
        EXPECT_NEAR(e, log_peak - log_sum(component_log_terms(gmm, x, false)), 1e-6 * std::max(1.0, e));
        const VecX<double> fd = xt::numeric_gradient([&](const VecX<double>& y) { return gmm.energy(y); }, x);
        EXPECT_LT(xt::relative_error(g, fd), 1e-6);
    }
}

TEST(Objective, GemanMcClure) {
    EXPECT_DOUBLE_EQ(geman_mcclure(0.0, 10.0), 0.0);
    EXPECT_DOUBLE_EQ(geman_mcclure(10.0, 10.0), 50.0);
    EXPECT_LT(geman_mcclure(1e6, 10.0), 100.0);
}

TEST(Objective, GradientMatchesDifferences) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const xt::GradientCheck c = xt::check_objective_gradient(seed);
        EXPECT_LT(c.relative_error, 1e-4) << "seed " << seed << (c.latent ? " latent" : " axis-angle");
    }
}

TEST(Camera, ProjectionAndJacobian) {
    Camera cam;
    cam.focal = Vec2<double>(1000.0, 1100.0);
    cam.principal_point = Vec2<double>(320.0, 240.0);
    cam.rotation = rodrigues<double>(Vec3<double>(0.1, -0.2, 0.05));
    cam.translation = Vec3<double>(0.1, 0.0, 3.0);
    Points3d pts(2, 3);
    pts << 0.1, 0.2, 0.3, -0.4, 0.1, 0.0;
    const Points2d uv = project(pts, cam);
    for (int i = 0; i < 2; ++i) {
        const Vec3<double> c = cam.rotation * pts.row(i).transpose() + cam.translation;
        EXPECT_NEAR(uv(i, 0), 1000.0 * c.x() / c.z() + 320.0, 1e-10);
        EXPECT_NEAR(uv(i, 1), 1100.0 * c.y() / c.z() + 240.0, 1e-10);
        const auto j = projection_jacobian(c, cam);
        for (int k = 0; k < 3; ++k) {
            Vec3<double> cp = c, cm = c;
            cp[k] += 1e-6;
            cm[k] -= 1e-6;
            const double fu = 1000.0 * (cp.x() / cp.z() - cm.x() / cm.z()) / 2e-6;
            const double fv = 1100.0 * (cp.y() / cp.z() - cm.y() / cm.z()) / 2e-6;
            EXPECT_NEAR(j(0, k), fu, 1e-4);
            EXPECT_NEAR(j(1, k), fv, 1e-4);
        }
    }
    Points3d behind(1, 3);
    behind << 0.0, 0.0, -5.0;
    try {
        project(behind, cam);
        FAIL();
    } catch (const BehindCamera& e) {
        EXPECT_EQ(e.indices(), std::vector<int>{0});
    }
}

TEST(Camera, InitializationFitsTheTorso) {
    const ModelAssets& assets = xt::default_model();
    for (int i = 0; i < 10; ++i) {
        SceneOptions so;
        so.shape_scale = 0.0;
        const SyntheticScene sc = make_scene(assets, 60 + i, so);
        const CameraInit init = init_camera(sc.keypoints, assets, sc.camera);
        EXPECT_LT(init.torso_rmse, 10.0) << "scene " << i;
        EXPECT_GT(init.translation.z(), 0.0);
    }
    EXPECT_THROW(init_camera(KeypointSet{}, assets, Camera{}), InitializationError);
}
