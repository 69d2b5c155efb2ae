#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "xbody/errors.hpp"

using namespace xbody;
namespace xt = xbody::testing;

TEST(TriangleIntersection, AgreesWithEdgeCrossingOracle) {
    std::mt19937_64 rng(21);
    int hits = 0;
    for (int i = 0; i < 5000; ++i) {
        auto [v, f] = xt::random_soup(rng, 2, 0.3, 0.3);
        std::array<Vec3<double>, 3> s, t;
        for (int k = 0; k < 3; ++k) {
            s[k] = v.row(k).transpose();
            t[k] = v.row(3 + k).transpose();
        }
        const bool expect = xt::triangles_intersect_oracle(s, t);
        hits += expect;
        EXPECT_EQ(triangles_intersect(s[0], s[1], s[2], t[0], t[1], t[2]), expect) << "trial " << i;
    }
    EXPECT_GT(hits, 200);
}

TEST(TriangleIntersection, SpecialCases) {
    const Vec3<double> a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
    // Coplanar overlap and coplanar separation.
    EXPECT_TRUE(triangles_intersect(a, b, c, Vec3<double>(0.2, 0.2, 0), Vec3<double>(2, 0.2, 0), Vec3<double>(0.2, 2, 0)));
    EXPECT_FALSE(triangles_intersect(a, b, c, Vec3<double>(2, 2, 0), Vec3<double>(3, 2, 0), Vec3<double>(2, 3, 0)));
    // A vertex touching the face counts.
    EXPECT_TRUE(triangles_intersect(a, b, c, Vec3<double>(0.2, 0.2, 0), Vec3<double>(0.2, 0.2, 1), Vec3<double>(0.5, 0.2, 1)));
    // Parallel planes.
    EXPECT_FALSE(triangles_intersect(a, b, c, Vec3<double>(0, 0, 0.1), Vec3<double>(1, 0, 0.1), Vec3<double>(0, 1, 0.1)));
    // Zero area never intersects.
    EXPECT_FALSE(triangles_intersect(a, b, Vec3<double>(2, 0, 0), Vec3<double>(0.5, -1, -1), Vec3<double>(0.5, 1, -1),
                                     Vec3<double>(0.5, 0, 1)));
}

TEST(Bvh, PairsEqualBruteForceOnSoups) {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 300);
        auto [v, f] = xt::random_soup(rng, n);
        const VertexBuffer buf(v);
        const Bvh bvh = build_bvh(buf, f);
        EXPECT_EQ(xt::pair_set(find_colliding_pairs(bvh, buf, f)), xt::brute_force_pairs(v, f)) << "soup " << trial;
    }
}

TEST(Bvh, TreeIsConsistent) {
    std::mt19937_64 rng(23);
    auto [v, f] = xt::random_soup(rng, 200);
    const VertexBuffer buf(v);
    const Bvh bvh = build_bvh(buf, f);
    ASSERT_EQ(bvh.nodes.size(), 2u * 200u - 1u);
    EXPECT_TRUE(std::is_sorted(bvh.morton.begin(), bvh.morton.end()));
    std::vector<int> seen(200, 0);
    for (int i = 0; i < bvh.num_leaves(); ++i) ++seen[bvh.nodes[bvh.leaf_node(i)].triangle];
    for (int s : seen) EXPECT_EQ(s, 1);
    for (int i = 0; i < bvh.num_internal(); ++i) {
        const BvhNode& n = bvh.nodes[i];
        EXPECT_TRUE(n.box.contains(bvh.nodes[n.left].box));
        EXPECT_TRUE(n.box.contains(bvh.nodes[n.right].box));
        EXPECT_EQ(bvh.nodes[n.left].parent, i);
        EXPECT_EQ(bvh.nodes[n.right].parent, i);
    }
}

TEST(Bvh, StaleHierarchyIsRejected) {
    std::mt19937_64 rng(24);
    auto [v, f] = xt::random_soup(rng, 20);
    VertexBuffer buf(v);
    const Bvh bvh = build_bvh(buf, f);
    buf.update(v);
    EXPECT_THROW(find_colliding_pairs(bvh, buf, f), ContractError);
    EXPECT_THROW(build_bvh(buf, Faces(0, 3)), InvalidArgument);
}

TEST(Bvh, PairsEqualBruteForceOnPosedBodies) {
    const ModelAssets& assets = xt::default_model();
    const ContactMask mask = ContactMask::from_assets(assets);
    for (int i = 0; i < 3; ++i) {
        SceneOptions so;
        so.collisions = SceneCollisions::Require;
        const SyntheticScene sc = make_scene(assets, 40 + i, so);
        const VertexBuffer buf(sc.vertices);
        const Bvh bvh = build_bvh(buf, assets.faces);
        const auto found = xt::pair_set(find_colliding_pairs(bvh, buf, assets.faces, mask));
        EXPECT_FALSE(found.empty());
        EXPECT_EQ(found, xt::brute_force_pairs(sc.vertices, assets.faces, mask));
    }
}

TEST(ConeField, ValueAndGradient) {
    const Vec3<double> a0(0, 0, 0), a1(1, 0, 0), a2(0, 1, 0);
    const TriangleFrame fr = triangle_frame(a0, a1, a2);
    // Points in front of the triangle or outside the cone give zero.
    EXPECT_EQ(cone_field(a0, a1, a2, fr.center + 0.2 * fr.normal), 0.0);
    EXPECT_EQ(cone_field(a0, a1, a2, fr.center - 0.1 * fr.normal + Vec3<double>(5, 0, 0)), 0.0);
    // Straight behind the centre the field is the depth.
    EXPECT_NEAR(cone_field(a0, a1, a2, fr.center - 0.1 * fr.normal), 0.1, 1e-12);

    std::mt19937_64 rng(25);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        std::array<Vec3<double>, 4> p;
        for (auto& q : p) q = Vec3<double>(gauss(rng), gauss(rng), gauss(rng)) * 0.3;
        const TriangleFrame f = triangle_frame(p[0], p[1], p[2]);
        p[3] = f.center - 0.05 * f.normal + 0.1 * f.radius * Vec3<double>(gauss(rng), gauss(rng), gauss(rng));
        std::array<Vec3<double>, 4> g{};
        for (auto& q : g) q.setZero();
        const double value = cone_field(p[0], p[1], p[2], p[3], 1.0, g);
        if (value <= 0.0) continue;
        VecX<double> x(12), ga(12);
        for (int k = 0; k < 4; ++k) {
            x.segment<3>(3 * k) = p[k];
            ga.segment<3>(3 * k) = g[k];
        }
        auto f_at = [](const VecX<double>& y) {
            return cone_field(y.segment<3>(0), y.segment<3>(3), y.segment<3>(6), y.segment<3>(9));
        };
        EXPECT_LT(xt::relative_error(ga, xt::numeric_gradient(f_at, x)), 1e-6);
    }
}

TEST(CollisionEnergy, ZeroWithoutContactAndGradientMatches) {
    const ModelAssets& assets = xt::default_model();
    EXPECT_EQ(collision_energy({}, assets.template_vertices, assets.faces), 0.0);
    EXPECT_EQ(mesh_collision_energy(assets.template_vertices, assets).first, 0.0);

    SceneOptions so;
    so.collisions = SceneCollisions::Require;
    const SyntheticScene sc = make_scene(assets, 7, so);
    const VertexBuffer buf(sc.vertices);
    const auto pairs = find_colliding_pairs(build_bvh(buf, assets.faces), buf, assets.faces,
                                            ContactMask::from_assets(assets));
    ASSERT_FALSE(pairs.empty());
    Points3d g = Points3d::Zero(sc.vertices.rows(), 3);
    const double e = collision_energy(pairs, sc.vertices, assets.faces, &g);
    EXPECT_GT(e, 0.0);

    std::set<int> touched;
    for (const auto& p : pairs)
        for (int k = 0; k < 3; ++k) {
            touched.insert(assets.faces(p.s, k));
            touched.insert(assets.faces(p.t, k));
        }
    for (int v : touched)
        for (int c = 0; c < 3; ++c) {
            Points3d vp = sc.vertices, vm = sc.vertices;
            vp(v, c) += 1e-7;
            vm(v, c) -= 1e-7;
            const double fd = (collision_energy(pairs, vp, assets.faces) - collision_energy(pairs, vm, assets.faces)) / 2e-7;
            EXPECT_NEAR(g(v, c), fd, 1e-6 * std::max(1e-3, std::abs(fd)) + 1e-9);
        }
}
