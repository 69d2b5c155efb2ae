#pragma once

#include <cstdint>
#include <random>

#include "xbody/types.hpp"

namespace xbody {

inline constexpr int kBodyJoints = 21;
inline constexpr int kBodyPoseDim = 3 * kBodyJoints;

/// Procedural generator of plausible body poses (21 joints, axis-angle).
///
/// Poses are driven by a handful of activity variables (gait phase, crouch,
/// spine bend and twist, per-arm elevation/azimuth/twist/elbow flexion) that
/// respect joint limits, plus a small independent perturbation on every
/// joint. The result has low intrinsic dimension, like captured motion.
class PoseSampler {
public:
    explicit PoseSampler(std::uint64_t seed, double joint_noise = 0.03);

    VecX<double> sample();

    /// n poses, one per row.
    MatX<double> corpus(int n);

private:
    std::mt19937_64 rng_;
    double joint_noise_;
};

}  // namespace xbody
