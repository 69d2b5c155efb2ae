#include "xbody/metrics.hpp"

#include <algorithm>

#include <Eigen/Dense>

#include "xbody/errors.hpp"

namespace xbody {

Points3d Similarity::apply(const Points3d& p) const {
    Points3d out = (scale * p * rotation.transpose()).rowwise() + translation.transpose();
    return out;
}

Similarity procrustes_align(const Points3d& source, const Points3d& target, Alignment mode) {
    if (source.rows() != target.rows()) throw DimensionMismatch("procrustes: point counts differ");
    Similarity s;
    if (mode == Alignment::None) return s;
    if (source.rows() < 3) throw DegenerateAlignment("procrustes: need at least three points");
    const Vec3<double> ms = source.colwise().mean().transpose(), mt = target.colwise().mean().transpose();
    const Points3d a = source.rowwise() - ms.transpose();
    const Points3d b = target.rowwise() - mt.transpose();
    const Mat3<double> cov = b.transpose() * a;  // sum of t s^T
    Eigen::JacobiSVD<Mat3<double>> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3<double> sv = svd.singularValues();
    if (!(sv[1] > 1e-12 * std::max(1.0, sv[0]))) throw DegenerateAlignment("procrustes: rank-deficient cross-covariance");
    Vec3<double> d(1.0, 1.0, 1.0);
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d[2] = -1.0;
    s.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
    if (mode == Alignment::Similarity) {
        const double var = a.squaredNorm();
        if (!(var > 0.0)) throw DegenerateAlignment("procrustes: source points coincide");
        s.scale = sv.dot(d) / var;
    }
    s.translation = mt - s.scale * s.rotation * ms;
    return s;
}

namespace {

double mean_distance_mm(const Points3d& a, const Points3d& b) {
    return 1000.0 * (a - b).rowwise().norm().mean();
}

Points3d rows_of(const Points3d& p, const std::vector<int>& idx) {
    Points3d out(idx.size(), 3);
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= p.rows()) throw InvalidArgument("joint subset index out of range");
        out.row(i) = p.row(idx[i]);
    }
    return out;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + m, v.end());
    const double hi = v[m];
    if (v.size() % 2) return hi;
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + m));
}

}  // namespace

double v2v_error(const Points3d& pred, const Points3d& gt, Alignment align, Similarity* used) {
    if (pred.rows() != gt.rows()) throw DimensionMismatch("v2v: vertex counts differ");
    if (pred.rows() == 0) throw InvalidArgument("v2v: empty mesh");
    const Similarity s = procrustes_align(pred, gt, align);
    if (used) *used = s;
    return mean_distance_mm(align == Alignment::None ? pred : s.apply(pred), gt);
}

double joint_error(const Points3d& pred, const Points3d& gt, const std::vector<int>& subset, Alignment align) {
    if (pred.rows() != gt.rows()) throw DimensionMismatch("joint error: joint counts differ");
    const Points3d p = subset.empty() ? pred : rows_of(pred, subset);
    const Points3d g = subset.empty() ? gt : rows_of(gt, subset);
    if (p.rows() == 0) throw InvalidArgument("joint error: empty subset");
    if (align == Alignment::None) return mean_distance_mm(p, g);
    return mean_distance_mm(procrustes_align(p, g, align).apply(p), g);
}

double per_part_joint_error(const Points3d& pred, const Points3d& gt, const std::vector<std::vector<int>>& parts,
                            Alignment align) {
    if (parts.empty()) throw InvalidArgument("per-part joint error: no parts");
    double sum = 0.0;
    for (const auto& part : parts) {
        if (part.empty()) throw InvalidArgument("per-part joint error: empty part");
        sum += joint_error(pred, gt, part, align);
    }
    return sum / static_cast<double>(parts.size());
}

namespace {

template <typename F>
std::vector<double> column(const std::vector<FrameError>& frames, F f) {
    std::vector<double> v;
    for (const auto& fr : frames) v.push_back(f(fr));
    return v;
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

double EvalReport::mean_v2v() const { return mean(column(frames, [](const FrameError& f) { return f.v2v_mm; })); }
double EvalReport::median_v2v() const { return median(column(frames, [](const FrameError& f) { return f.v2v_mm; })); }
double EvalReport::mean_mpjpe() const { return mean(column(frames, [](const FrameError& f) { return f.mpjpe_mm; })); }
double EvalReport::median_mpjpe() const {
    return median(column(frames, [](const FrameError& f) { return f.mpjpe_mm; }));
}
double EvalReport::mean_left_hand() const {
    return mean(column(frames, [](const FrameError& f) { return f.left_hand_mm; }));
}
double EvalReport::mean_right_hand() const {
    return mean(column(frames, [](const FrameError& f) { return f.right_hand_mm; }));
}

}  // namespace xbody
