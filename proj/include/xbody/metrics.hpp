#pragma once

#include <string>
#include <vector>

#include "xbody/types.hpp"

namespace xbody {

/// x -> s R x + t.
struct Similarity {
    double scale = 1.0;
    Mat3<double> rotation = Mat3<double>::Identity();
    Vec3<double> translation = Vec3<double>::Zero();

    Points3d apply(const Points3d& points) const;
};

enum class Alignment { None, Similarity, Rigid };

/// Least-squares transform of source onto target (rows correspond), proper
/// rotation enforced. Rigid keeps s = 1. Throws DegenerateAlignment on fewer
/// than three points or a rank-deficient cross-covariance.
Similarity procrustes_align(const Points3d& source, const Points3d& target, Alignment mode = Alignment::Similarity);

/// Mean per-vertex distance in millimeters after the requested alignment of
/// pred onto gt. Throws DimensionMismatch when the vertex counts differ.
double v2v_error(const Points3d& pred, const Points3d& gt, Alignment align = Alignment::Similarity,
                 Similarity* used = nullptr);

/// Mean joint distance (mm) over `subset` (all rows when empty), aligned on
/// that subset.
double joint_error(const Points3d& pred, const Points3d& gt, const std::vector<int>& subset = {},
                   Alignment align = Alignment::Similarity);

/// Each part aligned independently, result is the mean of the per-part errors.
double per_part_joint_error(const Points3d& pred, const Points3d& gt, const std::vector<std::vector<int>>& parts,
                            Alignment align = Alignment::Similarity);

struct FrameError {
    std::string name;
    double v2v_mm = 0.0;
    double mpjpe_mm = 0.0;
    double left_hand_mm = 0.0;
    double right_hand_mm = 0.0;
    Similarity alignment;  // used for v2v
};

struct EvalReport {
    std::vector<FrameError> frames;

    double mean_v2v() const;
    double median_v2v() const;
    double mean_mpjpe() const;
    double median_mpjpe() const;
    double mean_left_hand() const;
    double mean_right_hand() const;
};

}  // namespace xbody
