#include "xbody/collision.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <numeric>
#include <tuple>

#include <Eigen/Geometry>

#include "xbody/errors.hpp"

namespace xbody {

namespace {

std::atomic<std::uint64_t> g_revision{0};
std::atomic<std::uint64_t> g_degenerate{0};

constexpr double kPlaneEps = 1e-10;

std::uint32_t spread_bits(std::uint32_t v) {
    v = (v * 0x00010001u) & 0xFF0000FFu;
    v = (v * 0x00000101u) & 0x0F00F00Fu;
    v = (v * 0x00000011u) & 0xC30C30C3u;
    v = (v * 0x00000005u) & 0x49249249u;
    return v;
}

std::uint32_t morton3(const Vec3<double>& unit) {
    auto q = [](double x) {
        return static_cast<std::uint32_t>(std::clamp(x * 1024.0, 0.0, 1023.0));
    };
    return (spread_bits(q(unit.x())) << 2) | (spread_bits(q(unit.y())) << 1) | spread_bits(q(unit.z()));
}

Vec3<double> corner(const Points3d& v, const Faces& f, int tri, int k) { return v.row(f(tri, k)).transpose(); }

}  // namespace

VertexBuffer::VertexBuffer(Points3d positions) : positions_(std::move(positions)), revision_(++g_revision) {}

void VertexBuffer::update(Points3d positions) {
    positions_ = std::move(positions);
    revision_ = ++g_revision;
}

Bvh build_bvh(const VertexBuffer& vb, const Faces& faces) {
    const Points3d& v = vb.positions();
    const int n = static_cast<int>(faces.rows());
    if (n < 1) throw InvalidArgument("build_bvh: no triangles");
    if (!v.allFinite()) throw InvalidArgument("build_bvh: non-finite vertex coordinates");
    if (faces.minCoeff() < 0 || faces.maxCoeff() >= v.rows()) throw InvalidArgument("build_bvh: face index out of range");

    std::vector<Aabb> boxes(n);
    Points3d centroids(n, 3);
    Aabb scene;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) boxes[i].expand(corner(v, faces, i, k));
        centroids.row(i) = (v.row(faces(i, 0)) + v.row(faces(i, 1)) + v.row(faces(i, 2))) / 3.0;
        scene.expand(centroids.row(i).transpose());
    }
    const Vec3<double> extent = scene.hi - scene.lo;
    std::vector<std::uint64_t> keys(n);
    for (int i = 0; i < n; ++i) {
        Vec3<double> u = centroids.row(i).transpose() - scene.lo;
        for (int a = 0; a < 3; ++a) u[a] = extent[a] > 0.0 ? u[a] / extent[a] : 0.0;
        keys[i] = (static_cast<std::uint64_t>(morton3(u)) << 32) | static_cast<std::uint32_t>(i);
    }
    std::sort(keys.begin(), keys.end());

    Bvh bvh;
    bvh.revision = vb.revision();
    bvh.nodes.resize(2 * n - 1);
    bvh.morton.resize(n);
    bvh.leaf_order.resize(n);
    for (int i = 0; i < n; ++i) {
        bvh.morton[i] = static_cast<std::uint32_t>(keys[i] >> 32);
        bvh.leaf_order[i] = static_cast<int>(keys[i] & 0xFFFFFFFFu);
        BvhNode& leaf = bvh.nodes[bvh.leaf_node(i)];
        leaf.triangle = bvh.leaf_order[i];
        leaf.box = boxes[leaf.triangle];
    }
    if (n == 1) return bvh;

    // Length of the common prefix of keys i and j, -1 outside the range.
    auto delta = [&](int i, int j) -> int {
        if (j < 0 || j >= n) return -1;
        return std::countl_zero(keys[i] ^ keys[j]);
    };
    for (int i = 0; i < n - 1; ++i) {
        const int d = delta(i, i + 1) > delta(i, i - 1) ? 1 : -1;
        const int dmin = delta(i, i - d);
        int lmax = 2;
        while (delta(i, i + lmax * d) > dmin) lmax *= 2;
        int l = 0;
        for (int t = lmax / 2; t >= 1; t /= 2)
            if (delta(i, i + (l + t) * d) > dmin) l += t;
        const int j = i + l * d;
        const int dnode = delta(i, j);
        int s = 0;
        for (int t = (l + 1) / 2;; t = (t + 1) / 2) {
            if (delta(i, i + (s + t) * d) > dnode) s += t;
            if (t == 1) break;
        }
        const int split = i + s * d + std::min(d, 0);
        const int left = std::min(i, j) == split ? bvh.leaf_node(split) : split;
        const int right = std::max(i, j) == split + 1 ? bvh.leaf_node(split + 1) : split + 1;
        bvh.nodes[i].left = left;
        bvh.nodes[i].right = right;
        bvh.nodes[left].parent = i;
        bvh.nodes[right].parent = i;
    }

    // Fit boxes bottom-up: post-order over an explicit stack.
    std::vector<std::pair<int, bool>> stack{{0, false}};
    while (!stack.empty()) {
        auto [node, expanded] = stack.back();
        stack.pop_back();
        BvhNode& nd = bvh.nodes[node];
        if (nd.is_leaf()) continue;
        if (expanded) {
            nd.box = bvh.nodes[nd.left].box;
            nd.box.expand(bvh.nodes[nd.right].box);
        } else {
            stack.push_back({node, true});
            stack.push_back({nd.left, false});
            stack.push_back({nd.right, false});
        }
    }
    return bvh;
}

ContactMask ContactMask::from_assets(const ModelAssets& assets) {
    ContactMask m;
    if (assets.contact_mask.empty()) return m;
    if (assets.triangle_regions.empty()) throw ConfigError("contact mask given without triangle regions");
    m.triangle_regions = assets.triangle_regions;
    for (auto [a, b] : assets.contact_mask) m.region_pairs.insert({std::min(a, b), std::max(a, b)});
    return m;
}

bool ContactMask::masks(int fa, int fb) const {
    if (region_pairs.empty()) return false;
    const int a = triangle_regions[fa], b = triangle_regions[fb];
    return region_pairs.count({std::min(a, b), std::max(a, b)}) > 0;
}

namespace {

// Interval of the triangle on the intersection line of the two planes.
void line_interval(const double p[3], const double d[3], double& t0, double& t1) {
    int k;
    if (d[0] * d[1] > 0.0) k = 2;
    else if (d[0] * d[2] > 0.0) k = 1;
    else if (d[1] * d[2] > 0.0 || d[0] != 0.0) k = 0;
    else if (d[1] != 0.0) k = 1;
    else k = 2;
    const int a = (k + 1) % 3, b = (k + 2) % 3;
    t0 = p[a] + (p[k] - p[a]) * d[a] / (d[a] - d[k]);
    t1 = p[b] + (p[k] - p[b]) * d[b] / (d[b] - d[k]);
    if (t0 > t1) std::swap(t0, t1);
}

double orient2(const Vec2<double>& a, const Vec2<double>& b, const Vec2<double>& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

bool segments_cross(const Vec2<double>& a, const Vec2<double>& b, const Vec2<double>& c, const Vec2<double>& d) {
    const double o1 = orient2(a, b, c), o2 = orient2(a, b, d), o3 = orient2(c, d, a), o4 = orient2(c, d, b);
    if (((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0))) return true;
    auto on_segment = [](const Vec2<double>& p, const Vec2<double>& q, const Vec2<double>& r) {
        return std::min(p.x(), q.x()) <= r.x() && r.x() <= std::max(p.x(), q.x()) && std::min(p.y(), q.y()) <= r.y() &&
               r.y() <= std::max(p.y(), q.y());
    };
    return (o1 == 0 && on_segment(a, b, c)) || (o2 == 0 && on_segment(a, b, d)) || (o3 == 0 && on_segment(c, d, a)) ||
           (o4 == 0 && on_segment(c, d, b));
}

bool point_in_triangle(const Vec2<double>& p, const Vec2<double>* t) {
    const double d0 = orient2(t[0], t[1], p), d1 = orient2(t[1], t[2], p), d2 = orient2(t[2], t[0], p);
    const bool neg = d0 < 0 || d1 < 0 || d2 < 0, pos = d0 > 0 || d1 > 0 || d2 > 0;
    return !(neg && pos);
}

bool coplanar_intersect(const Vec3<double>& n, const Vec3<double>* p, const Vec3<double>* q) {
    int drop;
    n.cwiseAbs().maxCoeff(&drop);
    const int i0 = (drop + 1) % 3, i1 = (drop + 2) % 3;
    Vec2<double> a[3], b[3];
    for (int k = 0; k < 3; ++k) {
        a[k] = {p[k][i0], p[k][i1]};
        b[k] = {q[k][i0], q[k][i1]};
    }
    for (int e = 0; e < 3; ++e)
        for (int f = 0; f < 3; ++f)
            if (segments_cross(a[e], a[(e + 1) % 3], b[f], b[(f + 1) % 3])) return true;
    return point_in_triangle(a[0], b) || point_in_triangle(b[0], a);
}

}  // namespace

bool triangles_intersect(const Vec3<double>& p0, const Vec3<double>& p1, const Vec3<double>& p2,
                         const Vec3<double>& q0, const Vec3<double>& q1, const Vec3<double>& q2) {
    const Vec3<double> p[3] = {p0, p1, p2}, q[3] = {q0, q1, q2};
    Vec3<double> n2 = (q1 - q0).cross(q2 - q0);
    Vec3<double> n1 = (p1 - p0).cross(p2 - p0);
    if (0.5 * n1.norm() < kMinTriangleArea || 0.5 * n2.norm() < kMinTriangleArea) return false;
    n1.normalize();
    n2.normalize();

    auto signed_distances = [](const Vec3<double>& n, const Vec3<double>& origin, const Vec3<double>* pts, double* d) {
        for (int k = 0; k < 3; ++k) {
            d[k] = n.dot(pts[k] - origin);
            if (std::abs(d[k]) < kPlaneEps) d[k] = 0.0;
        }
        return (d[0] > 0 && d[1] > 0 && d[2] > 0) || (d[0] < 0 && d[1] < 0 && d[2] < 0);
    };
    double dp[3], dq[3];
    if (signed_distances(n2, q0, p, dp)) return false;
    if (signed_distances(n1, p0, q, dq)) return false;
    if (dp[0] == 0 && dp[1] == 0 && dp[2] == 0) return coplanar_intersect(n1, p, q);

    const Vec3<double> dir = n1.cross(n2);
    int axis;
    dir.cwiseAbs().maxCoeff(&axis);
    const double pp[3] = {p0[axis], p1[axis], p2[axis]}, qq[3] = {q0[axis], q1[axis], q2[axis]};
    double a0, a1, b0, b1;
    line_interval(pp, dp, a0, a1);
    line_interval(qq, dq, b0, b1);
    return !(a1 < b0 || b1 < a0);
}

std::vector<CollisionPair> find_colliding_pairs(const Bvh& bvh, const VertexBuffer& vb, const Faces& faces,
                                                const ContactMask& mask) {
    if (bvh.revision != vb.revision())
        throw ContractError("find_colliding_pairs: hierarchy built from a different vertex revision");
    if (bvh.num_leaves() != faces.rows()) throw ContractError("find_colliding_pairs: hierarchy built for other faces");
    if (!mask.region_pairs.empty() && static_cast<Eigen::Index>(mask.triangle_regions.size()) != faces.rows())
        throw ConfigError("contact mask regions do not cover the faces");
    const Points3d& v = vb.positions();
    const int n = static_cast<int>(faces.rows());
    std::vector<CollisionPair> pairs;
    std::vector<int> stack;
    for (int s = 0; s < n; ++s) {
        Aabb query;
        for (int k = 0; k < 3; ++k) query.expand(corner(v, faces, s, k));
        stack.assign(1, 0);
        while (!stack.empty()) {
            const BvhNode& nd = bvh.nodes[stack.back()];
            stack.pop_back();
            if (!nd.box.overlaps(query)) continue;
            if (!nd.is_leaf()) {
                stack.push_back(nd.left);
                stack.push_back(nd.right);
                continue;
            }
            const int t = nd.triangle;
            if (t <= s) continue;
            bool shared = false;
            for (int a = 0; a < 3 && !shared; ++a)
                for (int b = 0; b < 3; ++b) shared = shared || faces(s, a) == faces(t, b);
            if (shared || mask.masks(s, t)) continue;
            if (!triangles_intersect(corner(v, faces, s, 0), corner(v, faces, s, 1), corner(v, faces, s, 2),
                                     corner(v, faces, t, 0), corner(v, faces, t, 1), corner(v, faces, t, 2)))
                continue;
            CollisionPair cp{s, t, {}, {}};
            for (int k = 0; k < 3; ++k) {
                cp.psi_s[k] = cone_field(corner(v, faces, t, 0), corner(v, faces, t, 1), corner(v, faces, t, 2),
                                         corner(v, faces, s, k));
                cp.psi_t[k] = cone_field(corner(v, faces, s, 0), corner(v, faces, s, 1), corner(v, faces, s, 2),
                                         corner(v, faces, t, k));
            }
            pairs.push_back(cp);
        }
    }
    std::sort(pairs.begin(), pairs.end(),
              [](const CollisionPair& a, const CollisionPair& b) { return std::tie(a.s, a.t) < std::tie(b.s, b.t); });
    return pairs;
}

TriangleFrame triangle_frame(const Vec3<double>& a0, const Vec3<double>& a1, const Vec3<double>& a2) {
    TriangleFrame f;
    const Vec3<double> e1 = a1 - a0, e2 = a2 - a0;
    const Vec3<double> c = e1.cross(e2);
    const double cn = c.norm();
    f.center = (a0 + a1 + a2) / 3.0;
    if (!(0.5 * cn >= kMinTriangleArea)) return f;
    f.normal = c / cn;
    f.radius = e1.norm() * e2.norm() * (a2 - a1).norm() / (2.0 * cn);
    f.degenerate = false;
    return f;
}

double cone_field(const Vec3<double>& a0, const Vec3<double>& a1, const Vec3<double>& a2, const Vec3<double>& v) {
    std::array<Vec3<double>, 4> unused;
    for (auto& g : unused) g.setZero();
    return cone_field(a0, a1, a2, v, 0.0, unused);
}

double cone_field(const Vec3<double>& a0, const Vec3<double>& a1, const Vec3<double>& a2, const Vec3<double>& v,
                  double scale, std::array<Vec3<double>, 4>& grad) {
    const TriangleFrame fr = triangle_frame(a0, a1, a2);
    if (fr.degenerate) {
        ++g_degenerate;
        return 0.0;
    }
    const Vec3<double> q = v - fr.center;
    const double depth = -q.dot(fr.normal);
    if (depth <= 0.0) return 0.0;
    const Vec3<double> p = q + depth * fr.normal;
    const double rho = p.norm();
    const double taper = 1.0 - rho / fr.radius;
    if (taper <= 0.0) return 0.0;
    const double psi = depth * taper;
    if (scale == 0.0) return psi;

    const Vec3<double> phat = rho > 0.0 ? Vec3<double>(p / rho) : Vec3<double>::Zero();
    const Vec3<double> g_q = scale * (-taper * fr.normal - (depth / fr.radius) * phat);
    const Vec3<double> g_n = scale * (-taper * q - (depth * depth / fr.radius) * phat);
    const double g_r = scale * depth * rho / (fr.radius * fr.radius);

    grad[3] += g_q;
    for (int k = 0; k < 3; ++k) grad[k] -= g_q / 3.0;

    // Pull the normal and circumradius back to the corners.
    const Vec3<double> e1 = a1 - a0, e2 = a2 - a0, e3 = a2 - a1;
    const Vec3<double> c = e1.cross(e2);
    const double cn = c.norm();
    Vec3<double> g_c = (g_n - fr.normal * fr.normal.dot(g_n)) / cn;
    g_c -= g_r * fr.radius * fr.normal / cn;
    const Vec3<double> g_e1 = e2.cross(g_c) + g_r * fr.radius * e1 / e1.squaredNorm();
    const Vec3<double> g_e2 = g_c.cross(e1) + g_r * fr.radius * e2 / e2.squaredNorm();
    const Vec3<double> g_e3 = g_r * fr.radius * e3 / e3.squaredNorm();
    grad[0] -= g_e1 + g_e2;
    grad[1] += g_e1 - g_e3;
    grad[2] += g_e2 + g_e3;
    return psi;
}

std::uint64_t degenerate_triangle_count() { return g_degenerate.load(); }
void reset_degenerate_triangle_count() { g_degenerate.store(0); }

double collision_energy(const std::vector<CollisionPair>& pairs, const Points3d& vertices, const Faces& faces,
                        Points3d* grad) {
    if (grad) grad->setZero(vertices.rows(), 3);
    double e = 0.0;
    std::array<Vec3<double>, 4> g;
    auto accumulate = [&](int field_tri, int vert) {
        const Vec3<double> a0 = corner(vertices, faces, field_tri, 0), a1 = corner(vertices, faces, field_tri, 1),
                           a2 = corner(vertices, faces, field_tri, 2), v = vertices.row(vert).transpose();
        const double psi = cone_field(a0, a1, a2, v);
        if (psi <= 0.0) return;
        e += psi * psi;
        if (!grad) return;
        for (auto& x : g) x.setZero();
        cone_field(a0, a1, a2, v, 2.0 * psi, g);
        for (int k = 0; k < 3; ++k) grad->row(faces(field_tri, k)) += g[k].transpose();
        grad->row(vert) += g[3].transpose();
    };
    for (const auto& cp : pairs) {
        for (int k = 0; k < 3; ++k) accumulate(cp.t, faces(cp.s, k));
        for (int k = 0; k < 3; ++k) accumulate(cp.s, faces(cp.t, k));
    }
    return e;
}

}  // namespace xbody
