#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "support.hpp"
#include "xbody/asset_store.hpp"
#include "xbody/errors.hpp"
#include "xbody/io.hpp"
#include "xbody/rotation.hpp"

using namespace xbody;
using xbody::testing::default_model;

namespace {

Vec3<double> random_axis_angle(std::mt19937_64& rng, double max_angle) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vec3<double> axis(gauss(rng), gauss(rng), gauss(rng));
    return axis.normalized() * max_angle * unit(rng);
}

}  // namespace

TEST(Rotation, RodriguesMatchesQuaternion) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
        const Vec3<double> w = random_axis_angle(rng, 3.1);
        EXPECT_LT((rodrigues<double>(w) - xbody::testing::quaternion_rotation(w)).norm(), 1e-13);
    }
    const Vec3<double> tiny(3e-9, -1e-9, 2e-9);
    EXPECT_LT((rodrigues<double>(tiny) - xbody::testing::quaternion_rotation(tiny)).norm(), 1e-15);
}

TEST(Rotation, JacobianMatchesDifferences) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 50; ++i) {
        const Vec3<double> w = i == 0 ? Vec3<double>::Zero() : random_axis_angle(rng, 3.0);
        const auto d = rodrigues_jacobian<double>(w);
        for (int k = 0; k < 3; ++k) {
            const double h = 1e-6;
            const Vec3<double> e = Vec3<double>::Unit(k) * h;
            const Mat3<double> fd = (rodrigues<double>(w + e) - rodrigues<double>(w - e)) / (2.0 * h);
            EXPECT_LT((d[k] - fd).norm(), 1e-8);
        }
    }
}

TEST(Rotation, LogMapInvertsRodrigues) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
        const Vec3<double> w = random_axis_angle(rng, 3.0);
        EXPECT_LT((log_map<double>(rodrigues<double>(w)) - w).norm(), 1e-10);
    }
    EXPECT_THROW(rodrigues<double>(Vec3<double>(std::nan(""), 0.0, 0.0)), InvalidArgument);
}

TEST(Rotation, NearestRotationGradient) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        Mat3<double> a = rodrigues<double>(random_axis_angle(rng, 3.0));
        for (int k = 0; k < 9; ++k) a.data()[k] += 0.2 * gauss(rng);
        Mat3<double> weight;
        for (int k = 0; k < 9; ++k) weight.data()[k] = gauss(rng);
        auto loss = [&](const Mat3<double>& m) { return (weight.cwiseProduct(nearest_rotation<double>(m).rotation)).sum(); };
        const Mat3<double> g = nearest_rotation_vjp<double>(nearest_rotation<double>(a), weight);
        for (int k = 0; k < 9; ++k) {
            Mat3<double> ap = a, am = a;
            ap.data()[k] += 1e-6;
            am.data()[k] -= 1e-6;
            EXPECT_NEAR(g.data()[k], (loss(ap) - loss(am)) / 2e-6, 1e-6);
        }
        const Mat3<double> r = nearest_rotation<double>(a).rotation;
        EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    }
}

TEST(Model, RestPoseIsTemplate) {
    const ModelAssets& assets = default_model();
    const ForwardResult r = forward(ParamVector::zeros(assets), assets);
    EXPECT_LT((r.vertices - assets.template_vertices).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((r.joints - assets.joint_template()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Model, HandMeanOffsetsZeroCoefficients) {
    SyntheticModelOptions o;
    o.hand_mean = true;
    const ModelAssets assets = make_synthetic_model(o);
    const VecX<double> zero = VecX<double>::Zero(assets.hand_components());
    EXPECT_EQ((hand_pca_to_pose(zero, assets, HandSide::Left) - assets.hand_mean_left).norm(), 0.0);
    EXPECT_GT(hand_pca_to_pose(zero, assets, HandSide::Left).norm(), 0.1);
    EXPECT_EQ(hand_pca_to_pose(zero, default_model(), HandSide::Right).norm(), 0.0);
}

TEST(Model, PoseBlendVanishesAtRest) {
    const ModelAssets& assets = default_model();
    const Points3d b = pose_blend(VecX<double>::Zero(3 * assets.num_articulated()), assets);
    EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Model, GlobalOrientationIsRigid) {
    const ModelAssets& assets = default_model();
    std::mt19937_64 rng(5);
    const ForwardResult rest = forward(ParamVector::zeros(assets), assets);
    const Vec3<double> root = rest.joints.row(0).transpose();
    for (int i = 0; i < 10; ++i) {
        ParamVector p = ParamVector::zeros(assets);
        p.global_orient = random_axis_angle(rng, 3.1);
        const Mat3<double> r = xbody::testing::quaternion_rotation(p.global_orient);
        const ForwardResult f = forward(p, assets);
        for (int v = 0; v < assets.num_vertices(); ++v) {
            const Vec3<double> expect = r * (rest.vertices.row(v).transpose() - root) + root;
            EXPECT_LT((f.vertices.row(v).transpose() - expect).norm(), 1e-8);
        }
    }
}

TEST(Model, BackwardPassMatchesDifferences) {
    const ModelAssets& assets = default_model();
    const ParamVector p = xbody::testing::random_params(assets, 9);
    const std::vector<Mat3<double>> rot = local_rotations(p, assets);

    std::mt19937_64 rng(6);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Points3d wv(assets.num_vertices(), 3), wj(assets.num_joints(), 3);
    for (Eigen::Index i = 0; i < wv.size(); ++i) wv.data()[i] = gauss(rng);
    for (Eigen::Index i = 0; i < wj.size(); ++i) wj.data()[i] = gauss(rng);

    auto loss = [&](const std::vector<Mat3<double>>& r, const VecX<double>& beta, const VecX<double>& psi) {
        ForwardPass pass;
        forward_pass(r, beta, psi, assets, pass);
        return pass.vertices.cwiseProduct(wv).sum() + pass.posed_joints.cwiseProduct(wj).sum();
    };
    ForwardPass pass;
    forward_pass(rot, p.shape, p.expression, assets, pass);
    ModelGradient g;
    backward_pass(pass, wj, wv, assets, g);

    const VecX<double> fd_beta = xbody::testing::numeric_gradient(
        [&](const VecX<double>& b) { return loss(rot, b, p.expression); }, p.shape);
    EXPECT_LT(xbody::testing::relative_error(g.beta, fd_beta), 1e-7);
    const VecX<double> fd_psi = xbody::testing::numeric_gradient(
        [&](const VecX<double>& e) { return loss(rot, p.shape, e); }, p.expression);
    EXPECT_LT(xbody::testing::relative_error(g.psi, fd_psi), 1e-7);

    for (int k : {0, 3, 16, 20, 30}) {
        for (int e = 0; e < 9; ++e) {
            auto rp = rot, rm = rot;
            rp[k].data()[e] += 1e-6;
            rm[k].data()[e] -= 1e-6;
            const double fd = (loss(rp, p.shape, p.expression) - loss(rm, p.shape, p.expression)) / 2e-6;
            EXPECT_NEAR(g.rotations[k].data()[e], fd, 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(Model, ParameterSizesAreChecked) {
    const ModelAssets& assets = default_model();
    ParamVector p = ParamVector::zeros(assets);
    p.shape.resize(assets.num_shape() + 1);
    EXPECT_THROW(p.check(assets), DimensionMismatch);
    p = ParamVector::zeros(assets);
    p.body_pose.resize(60);
    EXPECT_THROW(p.check(assets), DimensionMismatch);
}

TEST(Model, AssetStoreRoundTripIsBitExact) {
    const ModelAssets& assets = default_model();
    const auto dir = std::filesystem::temp_directory_path() / "xbody_model_store";
    std::filesystem::remove_all(dir);
    assets.save(dir);
    const ModelAssets back = ModelAssets::load(dir);
    EXPECT_EQ((back.template_vertices - assets.template_vertices).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((back.shape_dirs - assets.shape_dirs).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(back.faces, assets.faces);
    EXPECT_EQ(back.parents, assets.parents);
    const auto dir2 = std::filesystem::temp_directory_path() / "xbody_model_store2";
    std::filesystem::remove_all(dir2);
    ArrayStore::load(dir).save(dir2);
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto other = dir2 / entry.path().filename();
        ASSERT_TRUE(std::filesystem::exists(other));
        EXPECT_EQ(read_text(entry.path()), read_text(other)) << entry.path();
    }
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}
