#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "support.hpp"
#include "xbody/errors.hpp"
#include "xbody/io.hpp"
#include "xbody/metrics.hpp"
#include "xbody/rotation.hpp"

using namespace xbody;
namespace xt = xbody::testing;
namespace fs = std::filesystem;

namespace {

Mat3<double> random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    return xt::quaternion_rotation(Vec3<double>(gauss(rng), gauss(rng), gauss(rng)));
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("xbody_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(Vposer, LossGradientsMatchDifferences) {
    const VposerArch arch{21, 16, 4};
    std::mt19937_64 rng(31);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int batch = 3;
    MatX<double> target(arch.input_dim(), batch), raw(arch.input_dim(), batch), mu(arch.latent, batch),
        ls(arch.latent, batch);
    PoseSampler sampler(31);
    for (int b = 0; b < batch; ++b) target.col(b) = pose_to_rotations<double>(sampler.sample());
    raw = target;
    for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] += 0.1 * gauss(rng);
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        mu.data()[i] = gauss(rng);
        ls.data()[i] = 0.3 * gauss(rng);
    }
    const VaeLossWeights w;
    VaeLossGrad<double> g;
    vae_losses<double>(target, raw, mu, ls, 0.0, w, &g);
    auto total = [&](const MatX<double>& r, const MatX<double>& m, const MatX<double>& s) {
        return vae_losses<double>(target, r, m, s, 0.0, w).total;
    };
    auto flat_check = [&](MatX<double> base, const MatX<double>& grad, auto eval) {
        const VecX<double> x = Eigen::Map<VecX<double>>(base.data(), base.size());
        const VecX<double> fd = xt::numeric_gradient(
            [&](const VecX<double>& y) {
                MatX<double> m = Eigen::Map<const MatX<double>>(y.data(), base.rows(), base.cols());
                return eval(m);
            },
            x);
        const VecX<double> ga = Eigen::Map<const VecX<double>>(grad.data(), grad.size());
        return xt::relative_error(ga, fd);
    };
    EXPECT_LT(flat_check(raw, g.raw, [&](const MatX<double>& m) { return total(m, mu, ls); }), 1e-6);
    EXPECT_LT(flat_check(mu, g.mu, [&](const MatX<double>& m) { return total(raw, m, ls); }), 1e-6);
    EXPECT_LT(flat_check(ls, g.log_sigma, [&](const MatX<double>& m) { return total(raw, mu, m); }), 1e-6);

    // A perfect rotation output has zero orthonormality and determinant losses.
    const VaeLosses exact = vae_losses<double>(target, target, mu, ls, 0.0, w);
    EXPECT_LT(exact.rec, 1e-24);
    EXPECT_LT(exact.orth, 1e-24);
    EXPECT_LT(exact.det1, 1e-12);
}

TEST(Vposer, DecoderGradientMatchesDifferences) {
    const Vposer<double> net = make_vposer(VposerArch{21, 32, 8}, 3).cast<double>();
    std::mt19937_64 rng(32);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Mat3<double>> weight(21);
    for (auto& m : weight)
        for (int k = 0; k < 9; ++k) m.data()[k] = gauss(rng);
    auto loss = [&](const VecX<double>& z) {
        const auto d = net.decode(z);
        double s = 0.0;
        for (int j = 0; j < 21; ++j) s += weight[j].cwiseProduct(d.projected[j].rotation).sum();
        return s;
    };
    VecX<double> z(8);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = gauss(rng);
    const VecX<double> g = net.decode_vjp(net.decode(z), weight);
    EXPECT_LT(xt::relative_error(g, xt::numeric_gradient(loss, z)), 1e-6);
    EXPECT_THROW(net.decode(VecX<double>::Zero(3)), DimensionMismatch);
}

TEST(Vposer, TrainingReducesReconstructionAndStoresExactly) {
    VposerTrainConfig c;
    c.arch = VposerArch{21, 64, 8};
    c.epochs = 3;
    const MatX<double> corpus = PoseSampler(33).corpus(600);
    const VposerTrainResult r = train_vposer(corpus, c);
    ASSERT_EQ(r.curve.size(), 4u);
    EXPECT_LT(r.curve.back().validation.rec, r.curve.front().validation.rec);

    const fs::path dir = scratch("vposer");
    vposer_to_store(r.model).save(dir);
    const Vposer<float> back = vposer_from_store(ArrayStore::load(dir));
    const VecX<float> z = VecX<float>::Constant(8, 0.3f);
    EXPECT_EQ((back.decode(z).raw - r.model.decode(z).raw).cwiseAbs().maxCoeff(), 0.0f);
    fs::remove_all(dir);

    MatX<double> bad = corpus;
    bad(5, 2) = std::nan("");
    EXPECT_THROW(train_vposer(bad, c), NumericError);
    EXPECT_THROW(train_vposer(MatX<double>(0, 63), c), InvalidArgument);
}

TEST(Metrics, AlignedErrorIsSimilarityInvariant) {
    const ModelAssets& assets = xt::default_model();
    const ForwardResult a = forward(xt::random_params(assets, 41), assets);
    const ForwardResult b = forward(xt::random_params(assets, 42), assets);
    const double base = v2v_error(a.vertices, b.vertices);
    EXPECT_GT(base, 1.0);
    std::mt19937_64 rng(43);
    for (int i = 0; i < 20; ++i) {
        Similarity t;
        t.scale = 0.5 + static_cast<double>(i) / 10.0;
        t.rotation = random_rotation(rng);
        t.translation = Vec3<double>(0.3 * i, -1.0, 2.0);
        EXPECT_NEAR(v2v_error(t.apply(a.vertices), b.vertices), base, 1e-9);
    }
    EXPECT_EQ(v2v_error(a.vertices, a.vertices, Alignment::None), 0.0);
    EXPECT_THROW(v2v_error(a.vertices, b.vertices.topRows(10)), DimensionMismatch);
}

TEST(Metrics, ProcrustesRecoversConstructedTransform) {
    std::mt19937_64 rng(44);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Points3d src(50, 3);
    for (Eigen::Index i = 0; i < src.size(); ++i) src.data()[i] = gauss(rng);
    for (int i = 0; i < 10; ++i) {
        Similarity t;
        t.scale = 0.2 + 0.4 * i;
        t.rotation = random_rotation(rng);
        t.translation = Vec3<double>(gauss(rng), gauss(rng), gauss(rng)) * 5.0;
        const Similarity s = procrustes_align(src, t.apply(src));
        EXPECT_NEAR(s.scale, t.scale, 1e-8);
        EXPECT_LT((s.rotation - t.rotation).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LT((s.translation - t.translation).cwiseAbs().maxCoeff(), 1e-8);
        const Similarity r = procrustes_align(src, t.apply(src), Alignment::Rigid);
        EXPECT_EQ(r.scale, 1.0);
    }
    EXPECT_THROW(procrustes_align(src.topRows(2), src.topRows(2)), DegenerateAlignment);
    const Points3d line = (VecX<double>::LinSpaced(10, 0.0, 1.0) * Eigen::RowVector3d(1, 2, 3)).eval();
    EXPECT_THROW(procrustes_align(line, line), DegenerateAlignment);
}

TEST(Metrics, ReportStatistics) {
    EvalReport r;
    for (double v : {3.0, 1.0, 2.0, 10.0}) {
        FrameError f;
        f.v2v_mm = v;
        f.mpjpe_mm = 2.0 * v;
        r.frames.push_back(f);
    }
    EXPECT_DOUBLE_EQ(r.mean_v2v(), 4.0);
    EXPECT_DOUBLE_EQ(r.median_v2v(), 2.5);
    EXPECT_DOUBLE_EQ(r.median_mpjpe(), 5.0);
}

TEST(Io, OpenPoseRoundTrip) {
    std::mt19937_64 rng(51);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    KeypointSet k;
    auto fill = [&](auto& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) << 4000.0 * unit(rng), 3000.0 * unit(rng), unit(rng);
    };
    fill(k.body);
    fill(k.left_hand);
    fill(k.right_hand);
    fill(k.face);
    const fs::path p = scratch("kp.json");
    write_openpose(p, k);
    const KeypointSet back = read_openpose(p);
    EXPECT_EQ(back.stacked(), k.stacked());
    fs::remove(p);

    std::string doc = R"({"people":[{"pose_keypoints_2d":[1,2,0.5)";
    for (int i = 1; i < kBodyKeypoints; ++i) doc += ",0,0,0";
    doc += "]}]}";
    const KeypointSet body_only = parse_openpose(doc);
    EXPECT_EQ(body_only.body(0, 2), 0.5);
    EXPECT_EQ(body_only.face.col(2).sum(), 0.0);
    EXPECT_THROW(parse_openpose(R"({"people":[]})"), ParseError);
    EXPECT_THROW(parse_openpose("{not json"), ParseError);
}

TEST(Io, ObjRoundTripAtNineDigits) {
    const ModelAssets& assets = xt::default_model();
    const ForwardResult f = forward(xt::random_params(assets, 52), assets);
    const fs::path p = scratch("mesh.obj");
    export_mesh(f.vertices, assets.faces, p);
    const Mesh m = import_mesh(p);
    EXPECT_EQ(m.faces, assets.faces);
    for (Eigen::Index i = 0; i < m.vertices.size(); ++i)
        EXPECT_NEAR(m.vertices.data()[i], f.vertices.data()[i], 1e-8 * std::max(1.0, std::abs(f.vertices.data()[i])));
    write_text(p, "v 0 0 0\nv 1 0 0\nf 1 2 3\n");
    EXPECT_THROW(import_mesh(p), ParseError);
    fs::remove(p);
    EXPECT_THROW(export_mesh(Points3d(0, 3), Faces(0, 3), p), InvalidArgument);
}

TEST(Io, ConfigRoundTripAndValidation) {
    FitConfig c = FitConfig::preset();
    c.prior = BodyPrior::Gmm;
    c.stages[1].collision = 123.5;
    VposerTrainConfig t;
    t.epochs = 7;
    VposerTrainConfig t2;
    const FitConfig back = fit_config_from_json(fit_config_to_json(c, &t), &t2);
    EXPECT_EQ(fit_config_to_json(back, &t2), fit_config_to_json(c, &t));
    EXPECT_EQ(t2.epochs, 7);
    EXPECT_THROW(fit_config_from_json(R"({"schema_version": 2})"), ConfigError);
    EXPECT_THROW(fit_config_from_json(R"({"bogus": 1})"), ConfigError);
    EXPECT_THROW(fit_config_from_json(R"({"stages": [{"body_pose": -1}]})"), ConfigError);
}

TEST(Io, GenderResolution) {
    EXPECT_EQ(resolve_gender({"male", 0.95}, 0.9), "male");
    EXPECT_EQ(resolve_gender({"male", 0.5}, 0.9), "neutral");
}
