#include "xbody/synthetic.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Geometry>
#include <Eigen/QR>

#include "xbody/errors.hpp"
#include "xbody/keypoints.hpp"

namespace xbody {

namespace {

using V3 = Vec3<double>;

constexpr int kFullJoints = 55;
constexpr int kFingerSides = 3;
constexpr int kFingerRings = 2;
constexpr int kFacePatchRows = 7;
constexpr int kFacePatchCols = 10;

struct JointDef {
    int parent;
    V3 pos;
    JointGroup group;
};

// Finger chains in skeleton order: index, middle, pinky, ring, thumb.
struct FingerDef {
    V3 base;
    V3 dirs[3];  // offsets to the next two joints and the tip
};

const std::array<FingerDef, 5>& left_fingers() {
    static const std::array<FingerDef, 5> f = {{
        {{0.780, 1.420, 0.025}, {{0.035, 0.0, 0.0}, {0.025, 0.0, 0.0}, {0.020, 0.0, 0.0}}},
        {{0.785, 1.420, 0.005}, {{0.037, 0.0, 0.0}, {0.026, 0.0, 0.0}, {0.021, 0.0, 0.0}}},
        {{0.770, 1.420, -0.035}, {{0.027, 0.0, 0.0}, {0.020, 0.0, 0.0}, {0.017, 0.0, 0.0}}},
        {{0.780, 1.420, -0.015}, {{0.034, 0.0, 0.0}, {0.025, 0.0, 0.0}, {0.020, 0.0, 0.0}}},
        {{0.710, 1.410, 0.025}, {{0.025, -0.005, 0.020}, {0.025, -0.005, 0.015}, {0.020, -0.005, 0.012}}},
    }};
    return f;
}

std::vector<JointDef> full_skeleton() {
    using G = JointGroup;
    std::vector<JointDef> j = {
        {-1, {0.0, 0.95, 0.0}, G::Root},      {0, {0.09, 0.88, 0.0}, G::Body},
        {0, {-0.09, 0.88, 0.0}, G::Body},     {0, {0.0, 1.05, -0.01}, G::Body},
        {1, {0.10, 0.50, 0.01}, G::Body},     {2, {-0.10, 0.50, 0.01}, G::Body},
        {3, {0.0, 1.15, -0.01}, G::Body},     {4, {0.10, 0.09, -0.02}, G::Body},
        {5, {-0.10, 0.09, -0.02}, G::Body},   {6, {0.0, 1.25, 0.0}, G::Body},
        {7, {0.11, 0.03, 0.09}, G::Body},     {8, {-0.11, 0.03, 0.09}, G::Body},
        {9, {0.0, 1.47, -0.01}, G::Body},     {9, {0.07, 1.39, 0.0}, G::Body},
        {9, {-0.07, 1.39, 0.0}, G::Body},     {12, {0.0, 1.57, 0.01}, G::Body},
        {13, {0.18, 1.42, -0.01}, G::Body},   {14, {-0.18, 1.42, -0.01}, G::Body},
        {16, {0.44, 1.42, -0.02}, G::Body},   {17, {-0.44, 1.42, -0.02}, G::Body},
        {18, {0.69, 1.42, -0.01}, G::Body},   {19, {-0.69, 1.42, -0.01}, G::Body},
        {15, {0.0, 1.56, 0.03}, G::Jaw},      {15, {0.03, 1.64, 0.085}, G::Eye},
        {15, {-0.03, 1.64, 0.085}, G::Eye},
    };
    for (int side = 0; side < 2; ++side) {
        const double sx = side == 0 ? 1.0 : -1.0;
        const int wrist = side == 0 ? joint::LWrist : joint::RWrist;
        const G group = side == 0 ? G::LeftHand : G::RightHand;
        for (const auto& f : left_fingers()) {
            V3 p = f.base;
            int parent = wrist;
            for (int i = 0; i < 3; ++i) {
                const int idx = static_cast<int>(j.size());
                j.push_back({parent, {sx * p.x(), p.y(), p.z()}, group});
                if (i < 2) p += f.dirs[i];
                parent = idx;
            }
        }
    }
    return j;
}

struct Segment {
    V3 a, b;
    double radius;
    int driver;
    int end_joint;  // joint at b, or -1 for tips
    bool fine;      // finger resolution
    int start_joint = -1;  // joint located at a
    int region = 0;
    int ring_start = 0;  // first vertex of ring 0
    int end_cap = -1;    // centre vertex of the cap at b
};

double bone_radius(int k) {
    switch (k) {
        case joint::LHip: case joint::RHip: return 0.07;
        case joint::Spine1: case joint::Spine2: case joint::Spine3: return 0.12;
        case joint::LKnee: case joint::RKnee: return 0.065;
        case joint::LAnkle: case joint::RAnkle: return 0.05;
        case joint::LFoot: case joint::RFoot: return 0.04;
        case joint::Neck: return 0.11;
        case joint::LCollar: case joint::RCollar: return 0.05;
        case joint::Head: return 0.05;
        case joint::LShoulder: case joint::RShoulder: return 0.05;
        case joint::LElbow: case joint::RElbow: return 0.045;
        case joint::LWrist: case joint::RWrist: return 0.04;
        default: return 0.0;
    }
}

// Right-handed frame (u, w, d) with u x w = d.
std::pair<V3, V3> ring_frame(const V3& d) {
    const V3 ref = std::abs(d.z()) < 0.9 ? V3::UnitZ() : V3::UnitX();
    const V3 u = d.cross(ref).normalized();
    return {u, d.cross(u)};
}

using WeightList = std::vector<std::pair<int, double>>;

struct Builder {
    std::vector<V3> verts;
    std::vector<WeightList> weights;
    std::vector<V3> radial;  // outward unit direction from the local axis
    std::vector<std::array<int, 3>> faces;
    std::vector<int> regions;

    int add(const V3& p, WeightList w, const V3& r) {
        verts.push_back(p);
        weights.push_back(std::move(w));
        radial.push_back(r);
        return static_cast<int>(verts.size()) - 1;
    }
    void tri(int a, int b, int c, int region) {
        faces.push_back({a, b, c});
        regions.push_back(region);
    }
};

WeightList segment_weights(const Segment& s, double t, const std::vector<int>& parents) {
    WeightList w;
    double own = 1.0;
    const int up = parents[s.driver];
    if (up >= 0 && t < 0.35) {
        const double f = 0.5 * (1.0 - t / 0.35);
        w.emplace_back(up, f);
        own -= f;
    }
    if (s.end_joint >= 0 && t > 0.65) {
        const double g = 0.5 * (t - 0.65) / 0.35;
        w.emplace_back(s.end_joint, g);
        own -= g;
    }
    w.emplace_back(s.driver, own);
    return w;
}

void build_tube(Segment& s, int sides, int rings, int inner, const std::vector<int>& parents, Builder& out) {
    const V3 axis = s.b - s.a;
    const V3 d = axis.normalized();
    const auto [u, w] = ring_frame(d);
    s.ring_start = static_cast<int>(out.verts.size());
    auto ring_vertex = [&](int i, int j) { return s.ring_start + i * sides + (j % sides); };
    for (int i = 0; i < rings; ++i) {
        const double t = static_cast<double>(i) / (rings - 1);
        const V3 c = s.a + t * axis;
        for (int j = 0; j < sides; ++j) {
            const double phi = 2.0 * std::numbers::pi * j / sides;
            const V3 r = std::cos(phi) * u + std::sin(phi) * w;
            out.add(c + s.radius * r, segment_weights(s, t, parents), r);
        }
    }
    const int c0 = out.add(s.a, segment_weights(s, 0.0, parents), -d);
    const int c1 = out.add(s.b, segment_weights(s, 1.0, parents), d);
    s.end_cap = c1;

    for (int i = 0; i + 1 < rings; ++i) {
        for (int j = 0; j < sides; ++j) {
            const int a0 = ring_vertex(i, j), a1 = ring_vertex(i, j + 1);
            const int b0 = ring_vertex(i + 1, j), b1 = ring_vertex(i + 1, j + 1);
            out.tri(a0, a1, b1, s.region);
            out.tri(a0, b1, b0, s.region);
        }
    }
    for (int j = 0; j < sides; ++j) out.tri(c0, ring_vertex(0, j + 1), ring_vertex(0, j), s.region);

    if (inner == 0) {
        for (int j = 0; j < sides; ++j) out.tri(c1, ring_vertex(rings - 1, j), ring_vertex(rings - 1, j + 1), s.region);
        return;
    }
    // Cap split by an inner ring: stitch outer to inner by angle, then fan.
    const int first_inner = static_cast<int>(out.verts.size());
    for (int j = 0; j < inner; ++j) {
        const double phi = 2.0 * std::numbers::pi * (j + 0.5) / inner;
        const V3 r = std::cos(phi) * u + std::sin(phi) * w;
        out.add(s.b + 0.5 * s.radius * r + 0.1 * s.radius * d, segment_weights(s, 1.0, parents), d);
    }
    auto inner_vertex = [&](int jj) { return first_inner + ((jj - 1 + inner) % inner); };
    auto outer_angle = [&](int i) { return 2.0 * std::numbers::pi * i / sides; };
    auto inner_angle = [&](int jj) { return 2.0 * std::numbers::pi * (jj - 0.5) / inner; };
    int i = 0, jj = 0;
    while (i < sides || jj < inner) {
        const bool advance_outer = jj == inner || (i < sides && outer_angle(i + 1) < inner_angle(jj + 1));
        if (advance_outer) {
            out.tri(ring_vertex(rings - 1, i), ring_vertex(rings - 1, i + 1), inner_vertex(jj), s.region);
            ++i;
        } else {
            out.tri(ring_vertex(rings - 1, i), inner_vertex(jj + 1), inner_vertex(jj), s.region);
            ++jj;
        }
    }
    for (int j = 0; j < inner; ++j) out.tri(c1, first_inner + j, first_inner + (j + 1) % inner, s.region);
}

int tree_distance(int a, int b, const std::vector<int>& parents) {
    std::vector<int> da(parents.size(), -1);
    for (int k = a, d = 0; k >= 0; k = parents[k], ++d) da[k] = d;
    for (int k = b, d = 0; k >= 0; k = parents[k], ++d)
        if (da[k] >= 0) return da[k] + d;
    return std::numeric_limits<int>::max();
}

MatX<double> orthonormalize(const MatX<double>& candidates) {
    Eigen::HouseholderQR<MatX<double>> qr(candidates);
    MatX<double> q = qr.householderQ() * MatX<double>::Identity(candidates.rows(), candidates.cols());
    // Fix the sign so every column correlates positively with its candidate.
    for (Eigen::Index c = 0; c < q.cols(); ++c)
        if (q.col(c).dot(candidates.col(c)) < 0.0) q.col(c) *= -1.0;
    return q;
}

MatX<double> round_to_float(const MatX<double>& m) { return m.cast<float>().cast<double>(); }

int nearest_vertex(const std::vector<V3>& verts, const V3& target) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t v = 0; v < verts.size(); ++v) {
        const double d = (verts[v] - target).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(v);
        }
    }
    return best;
}

}  // namespace

const std::vector<std::string>& joint_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n = {"pelvis",     "left_hip",      "right_hip",      "spine1",     "left_knee",
                                      "right_knee", "spine2",        "left_ankle",     "right_ankle", "spine3",
                                      "left_foot",  "right_foot",    "neck",           "left_collar", "right_collar",
                                      "head",       "left_shoulder", "right_shoulder", "left_elbow",  "right_elbow",
                                      "left_wrist", "right_wrist",   "jaw",            "left_eye",    "right_eye"};
        const char* fingers[] = {"index", "middle", "pinky", "ring", "thumb"};
        for (const char* side : {"left", "right"})
            for (const char* f : fingers)
                for (int i = 1; i <= 3; ++i) n.push_back(std::string(side) + "_" + f + std::to_string(i));
        return n;
    }();
    return names;
}

ModelAssets make_synthetic_model(const SyntheticModelOptions& opt) {
    const int k_art = opt.num_articulated;
    if (!((k_art >= 21 && k_art <= 24) || k_art == kFullJoints - 1))
        throw InvalidArgument("synthetic model: articulated joint count must be in [21, 24] or 54");
    if (opt.num_shape < 0 || opt.num_expression < 0 || opt.hand_components < 1 ||
        opt.hand_components > kHandPoseDim)
        throw InvalidArgument("synthetic model: invalid basis sizes");
    const int nj = k_art + 1;
    const bool hands = nj == kFullJoints;
    const double scale = opt.gender == Gender::Male ? 1.06 : opt.gender == Gender::Female ? 0.94 : 1.0;

    std::vector<JointDef> defs = full_skeleton();
    defs.resize(nj);
    std::vector<int> parents(nj);
    std::vector<JointGroup> groups(nj);
    std::vector<V3> jp(nj);
    for (int k = 0; k < nj; ++k) {
        parents[k] = defs[k].parent;
        groups[k] = defs[k].group;
        jp[k] = scale * defs[k].pos;
    }

    // Segments: one tube per bone, plus tips on leaves and the head.
    std::vector<Segment> segs;
    auto internal_bone = [](int k) { return k == joint::Jaw || k == joint::LEye || k == joint::REye; };
    for (int k = 1; k < nj; ++k) {
        if (internal_bone(k)) continue;
        const bool fine = k >= joint::LHandFirst;
        double r = bone_radius(k);
        if (fine) r = parents[k] == joint::LWrist || parents[k] == joint::RWrist ? 0.010 : 0.008;
        Segment s{jp[parents[k]], jp[k], scale * r, parents[k], k, fine};
        s.start_joint = parents[k];
        segs.push_back(s);
    }
    auto add_tip = [&](int k, const V3& offset, double r, bool fine) {
        Segment s{jp[k], jp[k] + scale * offset, scale * r, k, -1, fine};
        s.start_joint = k;
        segs.push_back(s);
    };
    add_tip(joint::LFoot, {0.0, -0.005, 0.08}, 0.035, false);
    add_tip(joint::RFoot, {0.0, -0.005, 0.08}, 0.035, false);
    const int head_tip = static_cast<int>(segs.size());
    add_tip(joint::Head, {0.0, 0.20, 0.0}, 0.09, false);
    if (nj > joint::Jaw) add_tip(joint::Jaw, {0.0, -0.03, 0.06}, 0.025, false);
    if (nj > joint::LEye) add_tip(joint::LEye, {0.0, 0.0, 0.012}, 0.012, false);
    if (nj > joint::REye) add_tip(joint::REye, {0.0, 0.0, 0.012}, 0.012, false);
    std::array<std::array<int, 5>, 2> fingertip_segment{};
    if (hands) {
        for (int side = 0; side < 2; ++side) {
            const double sx = side == 0 ? 1.0 : -1.0;
            const int first = side == 0 ? joint::LHandFirst : joint::RHandFirst;
            for (int f = 0; f < 5; ++f) {
                const V3 d = left_fingers()[f].dirs[2];
                fingertip_segment[side][f] = static_cast<int>(segs.size());
                add_tip(first + 3 * f + 2, {sx * d.x(), d.y(), d.z()}, 0.007, true);
            }
        }
    } else {
        add_tip(joint::LWrist, {0.12, 0.0, 0.0}, 0.035, false);
        add_tip(joint::RWrist, {-0.12, 0.0, 0.0}, 0.035, false);
    }
    for (size_t i = 0; i < segs.size(); ++i) segs[i].region = static_cast<int>(i);
    const int face_region = static_cast<int>(segs.size());

    // Resolution: fingers fixed, body tubes sized to hit the vertex budget,
    // remainder absorbed by an inner ring on the head cap.
    int n_fine = 0, n_body = 0;
    for (const auto& s : segs) (s.fine ? n_fine : n_body)++;
    const int face_verts = kFacePatchRows * kFacePatchCols;
    const int budget = opt.num_vertices - n_fine * (kFingerSides * kFingerRings + 2) - face_verts;
    int best_sides = 0, best_rings = 0, best_count = -1, best_balance = 0;
    for (int sides = 4; sides <= 24; ++sides) {
        for (int rings = 2; rings <= 16; ++rings) {
            const int count = n_body * (sides * rings + 2);
            const int rest = budget - count;
            if (rest < 0 || rest == 1 || rest == 2) continue;
            const int balance = std::abs(sides - 2 * rings);
            if (count > best_count || (count == best_count && balance < best_balance)) {
                best_count = count;
                best_sides = sides;
                best_rings = rings;
                best_balance = balance;
            }
        }
    }
    if (best_count < 0) throw InvalidArgument("synthetic model: vertex count too small for the skeleton");
    const int inner = budget - best_count;

    Builder b;
    for (size_t i = 0; i < segs.size(); ++i) {
        auto& s = segs[i];
        if (s.fine)
            build_tube(s, kFingerSides, kFingerRings, 0, parents, b);
        else
            build_tube(s, best_sides, best_rings, static_cast<int>(i) == head_tip ? inner : 0, parents, b);
    }

    // Face patch in front of the head, lower rows following the jaw.
    const int face_first = static_cast<int>(b.verts.size());
    for (int r = 0; r < kFacePatchRows; ++r) {
        for (int c = 0; c < kFacePatchCols; ++c) {
            const V3 p = scale * V3(-0.045 + 0.01 * c, 1.70 - 0.02 * r, 0.104);
            WeightList w;
            const double jaw = nj > joint::Jaw ? std::max(0.0, (r - 3) / 3.0) * 0.8 : 0.0;
            if (jaw > 0.0) w.emplace_back(joint::Jaw, jaw);
            w.emplace_back(joint::Head, 1.0 - jaw);
            b.add(p, w, V3::UnitZ());
        }
    }
    for (int r = 0; r + 1 < kFacePatchRows; ++r) {
        for (int c = 0; c + 1 < kFacePatchCols; ++c) {
            const int v00 = face_first + r * kFacePatchCols + c;
            const int v10 = v00 + kFacePatchCols;
            b.tri(v00, v10, v10 + 1, face_region);
            b.tri(v00, v10 + 1, v00 + 1, face_region);
        }
    }

    const int n = static_cast<int>(b.verts.size());
    if (n != opt.num_vertices) throw InvalidArgument("synthetic model: vertex budget could not be met exactly");

    ModelAssets a;
    a.gender = opt.gender;
    a.parents = parents;
    a.joint_groups = groups;
    a.template_vertices.resize(n, 3);
    for (int v = 0; v < n; ++v) a.template_vertices.row(v) = b.verts[v].transpose();
    a.template_vertices = round_to_float(a.template_vertices);
    a.faces.resize(static_cast<Eigen::Index>(b.faces.size()), 3);
    for (size_t f = 0; f < b.faces.size(); ++f)
        for (int c = 0; c < 3; ++c) a.faces(static_cast<Eigen::Index>(f), c) = b.faces[f][c];

    a.skin_weights = MatX<double>::Zero(n, nj);
    for (int v = 0; v < n; ++v)
        for (const auto& [k, w] : b.weights[v]) a.skin_weights(v, k) += w;
    a.skin_weights = round_to_float(a.skin_weights);

    // Regressor: each joint is the centroid of a ring centred on it.
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<bool> has_row(nj, false);
    auto claim = [&](int k, const Segment& s, int ring, int sides) {
        if (k < 0 || has_row[k]) return;
        has_row[k] = true;
        for (int j = 0; j < sides; ++j)
            trips.emplace_back(k, s.ring_start + ring * sides + j, static_cast<double>(static_cast<float>(1.0 / sides)));
    };
    for (const auto& s : segs) {
        const int sides = s.fine ? kFingerSides : best_sides;
        const int rings = s.fine ? kFingerRings : best_rings;
        claim(s.start_joint, s, 0, sides);
        claim(s.end_joint, s, rings - 1, sides);
    }
    for (int k = 0; k < nj; ++k)
        if (!has_row[k]) throw InvalidArgument("synthetic model: joint without a centring ring");
    a.joint_regressor.resize(nj, n);
    a.joint_regressor.setFromTriplets(trips.begin(), trips.end());
    a.regressor_convex = true;

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Shape: height, width, girth, limb ratio, then smooth random bumps.
    MatX<double> shape_cand(3 * n, opt.num_shape);
    for (int c = 0; c < opt.num_shape; ++c) {
        V3 centres[4], amps[4];
        for (int m = 0; m < 4; ++m) {
            centres[m] = jp[std::uniform_int_distribution<int>(0, std::min(nj, 25) - 1)(rng)];
            amps[m] = V3(gauss(rng), gauss(rng), gauss(rng));
        }
        for (int v = 0; v < n; ++v) {
            const V3& p = b.verts[v];
            V3 d = V3::Zero();
            switch (c) {
                case 0: d = V3(0.0, p.y(), 0.0); break;
                case 1: d = V3(p.x(), 0.0, 0.0); break;
                case 2: d = b.radial[v]; break;
                case 3: d = V3(0.0, std::max(0.0, jp[0].y() - p.y()), 0.0); break;
                default:
                    for (int m = 0; m < 4; ++m)
                        d += std::exp(-(p - centres[m]).squaredNorm() / (2.0 * 0.15 * 0.15)) * amps[m];
            }
            shape_cand.block<3, 1>(3 * v, c) = d;
        }
    }
    a.shape_dirs = opt.num_shape > 0 ? round_to_float(orthonormalize(shape_cand)) : MatX<double>(3 * n, 0);
    a.shape_orthonormal = true;

    // Expression: smooth deformations of the face patch only.
    if (opt.num_expression > 3 * face_verts) throw InvalidArgument("synthetic model: too many expression components");
    MatX<double> expr_cand = MatX<double>::Zero(3 * n, opt.num_expression);
    for (int c = 0; c < opt.num_expression; ++c) {
        V3 centres[3], amps[3];
        for (int m = 0; m < 3; ++m) {
            centres[m] = b.verts[face_first + std::uniform_int_distribution<int>(0, face_verts - 1)(rng)];
            amps[m] = V3(gauss(rng), gauss(rng), 2.0 * gauss(rng));
        }
        for (int r = 0; r < kFacePatchRows; ++r) {
            for (int col = 0; col < kFacePatchCols; ++col) {
                const int v = face_first + r * kFacePatchCols + col;
                const V3& p = b.verts[v];
                V3 d = V3::Zero();
                if (c == 0) {
                    d = V3(0.0, -std::max(0.0, r - 3.0), 0.0);
                } else if (c == 1) {
                    const double edge = std::abs(col - 4.5) / 4.5;
                    d = V3(0.0, r >= 4 ? edge * edge : 0.0, 0.0);
                } else {
                    for (int m = 0; m < 3; ++m)
                        d += std::exp(-(p - centres[m]).squaredNorm() / (2.0 * 0.025 * 0.025)) * amps[m];
                }
                expr_cand.block<3, 1>(3 * v, c) = d;
            }
        }
    }
    a.expr_dirs = opt.num_expression > 0 ? round_to_float(orthonormalize(expr_cand)) : MatX<double>(3 * n, 0);
    a.expr_orthonormal = true;

    // Pose correctives: small linear fields around each joint, masked by its weight.
    a.pose_dirs = MatX<double>::Zero(3 * n, 9 * k_art);
    for (int k = 1; k < nj; ++k) {
        for (int f = 0; f < 9; ++f) {
            Mat3<double> m;
            for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = gauss(rng);
            for (int v = 0; v < n; ++v) {
                const double w = a.skin_weights(v, k);
                if (w == 0.0) continue;
                a.pose_dirs.block<3, 1>(3 * v, 9 * (k - 1) + f) = 0.02 * w * (m * (b.verts[v] - jp[k]));
            }
        }
    }
    a.pose_dirs = round_to_float(a.pose_dirs);

    // Hand PCA: per-finger curl, spread, and base/tip counter-curl.
    const int mh = opt.hand_components;
    if (hands) {
        std::vector<V3> bend(5);
        for (int f = 0; f < 5; ++f) {
            const FingerDef& fd = left_fingers()[f];
            const V3 dir = (fd.dirs[0] + fd.dirs[1]).normalized();
            bend[f] = dir.cross(V3(0.0, -1.0, 0.0)).normalized();
        }
        MatX<double> cand = MatX<double>::Zero(kHandPoseDim, std::max(mh, 12));
        int col = 0;
        for (int f = 0; f < 5; ++f, ++col)
            for (int i = 0; i < 3; ++i) cand.block<3, 1>(9 * f + 3 * i, col) = bend[f];
        for (int f : {0, 2, 3, 4}) {
            cand.block<3, 1>(9 * f, col) = V3(0.0, f == 4 ? 0.5 : 1.0, 0.0);
            ++col;
        }
        for (int f : {0, 1, 3}) {
            cand.block<3, 1>(9 * f, col) = bend[f];
            cand.block<3, 1>(9 * f + 6, col) = -bend[f];
            ++col;
        }
        for (; col < cand.cols(); ++col)
            for (int i = 0; i < kHandPoseDim; ++i) cand(i, col) = gauss(rng);
        const MatX<double> left = orthonormalize(cand).leftCols(mh);
        VecX<double> mean(kHandPoseDim);
        for (int f = 0; f < 5; ++f)
            for (int i = 0; i < 3; ++i) mean.segment<3>(9 * f + 3 * i) = 0.15 * bend[f];
        // Mirror through the sagittal plane: (x, y, z) axis-angle -> (x, -y, -z).
        MatX<double> right = left;
        VecX<double> mean_right = mean;
        for (int j = 0; j < 15; ++j) {
            right.middleRows(3 * j + 1, 2) *= -1.0;
            mean_right.segment<2>(3 * j + 1) *= -1.0;
        }
        a.hand_pca_left = round_to_float(left);
        a.hand_pca_right = round_to_float(right);
        if (opt.hand_mean) {
            a.hand_mean_left = round_to_float(mean);
            a.hand_mean_right = round_to_float(mean_right);
        }
    } else {
        a.hand_pca_left.resize(kHandPoseDim, 0);
        a.hand_pca_right.resize(kHandPoseDim, 0);
    }

    // Landmarks.
    a.landmarks.assign(kTotalKeypoints, Landmark{});
    auto set_joint = [&](int slot, int k) { a.landmarks[slot] = {LandmarkKind::Joint, k}; };
    auto set_vertex = [&](int slot, int v) { a.landmarks[slot] = {LandmarkKind::Vertex, v}; };
    auto near = [&](double x, double y, double z) { return nearest_vertex(b.verts, scale * V3(x, y, z)); };
    const int nose = face_first + 3 * kFacePatchCols + 4;
    set_vertex(body25::Nose, nose);
    set_joint(body25::Neck, joint::Neck);
    set_joint(body25::RShoulder, joint::RShoulder);
    set_joint(body25::RElbow, joint::RElbow);
    set_joint(body25::RWrist, joint::RWrist);
    set_joint(body25::LShoulder, joint::LShoulder);
    set_joint(body25::LElbow, joint::LElbow);
    set_joint(body25::LWrist, joint::LWrist);
    set_joint(body25::MidHip, joint::Pelvis);
    set_joint(body25::RHip, joint::RHip);
    set_joint(body25::RKnee, joint::RKnee);
    set_joint(body25::RAnkle, joint::RAnkle);
    set_joint(body25::LHip, joint::LHip);
    set_joint(body25::LKnee, joint::LKnee);
    set_joint(body25::LAnkle, joint::LAnkle);
    if (nj > joint::REye) {
        set_joint(body25::REye, joint::REye);
        set_joint(body25::LEye, joint::LEye);
    } else {
        set_vertex(body25::REye, face_first + kFacePatchCols + 2);
        set_vertex(body25::LEye, face_first + kFacePatchCols + 7);
    }
    set_vertex(body25::REar, near(-0.09, 1.64, 0.01));
    set_vertex(body25::LEar, near(0.09, 1.64, 0.01));
    set_vertex(body25::LBigToe, near(0.09, 0.02, 0.17));
    set_vertex(body25::LSmallToe, near(0.14, 0.02, 0.15));
    set_vertex(body25::LHeel, near(0.10, 0.05, -0.06));
    set_vertex(body25::RBigToe, near(-0.09, 0.02, 0.17));
    set_vertex(body25::RSmallToe, near(-0.14, 0.02, 0.15));
    set_vertex(body25::RHeel, near(-0.10, 0.05, -0.06));

    for (int side = 0; side < 2; ++side) {
        const int offset = side == 0 ? kLeftHandOffset : kRightHandOffset;
        set_joint(offset, side == 0 ? joint::LWrist : joint::RWrist);
        if (!hands) continue;
        const int first = side == 0 ? joint::LHandFirst : joint::RHandFirst;
        // Keypoint order: thumb, index, middle, ring, pinky.
        const int chain[5] = {4, 0, 1, 3, 2};
        for (int f = 0; f < 5; ++f) {
            for (int i = 0; i < 3; ++i) set_joint(offset + 1 + 4 * f + i, first + 3 * chain[f] + i);
            set_vertex(offset + 4 + 4 * f, segs[fingertip_segment[side][chain[f]]].end_cap);
        }
    }
    for (int i = 0; i < kFaceKeypoints; ++i) set_vertex(kFaceOffset + i, face_first + i);

    // Regions and the permanent-contact mask.
    a.triangle_regions = b.regions;
    if (opt.contact_mask) {
        std::vector<int> driver(face_region + 1);
        for (const auto& s : segs) driver[s.region] = s.driver;
        driver[face_region] = joint::Head;
        for (int r0 = 0; r0 <= face_region; ++r0)
            for (int r1 = r0; r1 <= face_region; ++r1)
                if (tree_distance(driver[r0], driver[r1], parents) <= 2) a.contact_mask.emplace_back(r0, r1);
    }

    a.finalize();
    return a;
}

}  // namespace xbody
