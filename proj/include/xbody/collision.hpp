#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <set>
#include <utility>
#include <vector>

#include "xbody/model.hpp"
#include "xbody/types.hpp"

namespace xbody {

struct Aabb {
    Vec3<double> lo = Vec3<double>::Constant(std::numeric_limits<double>::infinity());
    Vec3<double> hi = Vec3<double>::Constant(-std::numeric_limits<double>::infinity());

    void expand(const Vec3<double>& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    void expand(const Aabb& b) {
        lo = lo.cwiseMin(b.lo);
        hi = hi.cwiseMax(b.hi);
    }
    bool overlaps(const Aabb& b) const { return (lo.array() <= b.hi.array()).all() && (b.lo.array() <= hi.array()).all(); }
    bool contains(const Aabb& b) const { return (lo.array() <= b.lo.array()).all() && (b.hi.array() <= hi.array()).all(); }
};

/// Vertex positions tagged with a revision that changes on every update, so a
/// hierarchy can tell whether it was built from the current positions.
class VertexBuffer {
public:
    VertexBuffer() = default;
    explicit VertexBuffer(Points3d positions);

    const Points3d& positions() const { return positions_; }
    std::uint64_t revision() const { return revision_; }
    void update(Points3d positions);

private:
    Points3d positions_;
    std::uint64_t revision_ = 0;
};

/// Node of a linear BVH. Internal nodes occupy [0, n-1), leaves [n-1, 2n-1);
/// with a single triangle the root is the only (leaf) node.
struct BvhNode {
    Aabb box;
    int left = -1;
    int right = -1;
    int parent = -1;
    int triangle = -1;  // leaves only

    bool is_leaf() const { return triangle >= 0; }
};

struct Bvh {
    std::vector<BvhNode> nodes;
    std::vector<std::uint32_t> morton;  // 30-bit codes in leaf order
    std::vector<int> leaf_order;        // triangle of each leaf, sorted by code then index
    std::uint64_t revision = 0;

    int num_leaves() const { return static_cast<int>(leaf_order.size()); }
    int num_internal() const { return num_leaves() - 1; }
    int leaf_node(int leaf) const { return num_internal() + leaf; }
};

/// Radix-tree hierarchy over sorted Morton codes of the triangle centroids.
/// Throws InvalidArgument on an empty face list or non-finite coordinates.
Bvh build_bvh(const VertexBuffer& vertices, const Faces& faces);

/// Region pairs whose triangles are never reported as colliding.
struct ContactMask {
    std::vector<int> triangle_regions;
    std::set<std::pair<int, int>> region_pairs;  // stored with first <= second

    static ContactMask from_assets(const ModelAssets& assets);
    bool masks(int face_a, int face_b) const;
};

struct CollisionPair {
    int s = -1;  // s < t
    int t = -1;
    std::array<double, 3> psi_s{};  // field of t at the vertices of s
    std::array<double, 3> psi_t{};  // field of s at the vertices of t
};

/// Exact triangle-triangle intersection with a 1e-10 coplanarity guard.
/// Touching counts as intersecting; zero-area triangles never intersect.
bool triangles_intersect(const Vec3<double>& p0, const Vec3<double>& p1, const Vec3<double>& p2,
                         const Vec3<double>& q0, const Vec3<double>& q1, const Vec3<double>& q2);

/// Intersecting triangle pairs, excluding pairs that share a vertex and
/// masked region pairs, sorted by (s, t). Throws ContractError when the
/// hierarchy was built from another revision of the vertex buffer.
std::vector<CollisionPair> find_colliding_pairs(const Bvh& bvh, const VertexBuffer& vertices, const Faces& faces,
                                                const ContactMask& mask = {});

inline constexpr double kMinTriangleArea = 1e-12;

/// Barycenter, unit normal and circumradius of one triangle.
struct TriangleFrame {
    Vec3<double> center = Vec3<double>::Zero();
    Vec3<double> normal = Vec3<double>::Zero();
    double radius = 0.0;
    bool degenerate = true;
};

TriangleFrame triangle_frame(const Vec3<double>& a0, const Vec3<double>& a1, const Vec3<double>& a2);

/// Intrusion depth behind the triangle, tapered to zero at the cone boundary:
/// max(0, -(v - b).n) * max(0, 1 - |tangential part of v - b| / r).
/// Degenerate triangles give 0 and bump degenerate_triangle_count().
double cone_field(const Vec3<double>& a0, const Vec3<double>& a1, const Vec3<double>& a2, const Vec3<double>& v);

/// Same, with gradients with respect to the three triangle corners and the
/// query point added into grad (order a0, a1, a2, v) scaled by `scale`.
double cone_field(const Vec3<double>& a0, const Vec3<double>& a1, const Vec3<double>& a2, const Vec3<double>& v,
                  double scale, std::array<Vec3<double>, 4>& grad);

std::uint64_t degenerate_triangle_count();
void reset_degenerate_triangle_count();

/// Sum over pairs of the squared fields of each triangle at the other's
/// vertices, in both directions. Gradient with respect to the vertices is
/// written when grad is non-null.
double collision_energy(const std::vector<CollisionPair>& pairs, const Points3d& vertices, const Faces& faces,
                        Points3d* grad = nullptr);

}  // namespace xbody
