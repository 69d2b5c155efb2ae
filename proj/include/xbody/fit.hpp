#pragma once

#include <string>
#include <vector>

#include "xbody/camera.hpp"
#include "xbody/objective.hpp"

namespace xbody {

/// Trained pose priors available to a fit; the one selected by
/// FitConfig::prior must be present.
struct FitPriors {
    const Vposer<float>* vposer = nullptr;
    const GmmPrior* gmm = nullptr;
};

struct StageReport {
    std::string name;
    TermBreakdown start;
    TermBreakdown end;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    bool line_search_failed = false;
    std::string message;
    std::vector<double> trace;  // total energy after every accepted step, start first
    std::vector<LineSearchRecord> steps;
    int collision_pairs = 0;  // pairs in force at the end of the stage
};

struct FitResult {
    ParamVector params;  // body_pose always holds the axis-angle body pose
    CameraInit camera_init;
    bool camera_from_detections = true;  // false when nothing was detected
    std::vector<StageReport> stages;
    Points3d vertices;  // model space
    Points3d joints;
    double collision_energy = 0.0;  // on the final mesh, contact mask applied
    int collision_pairs = 0;
};

/// Camera initialization followed by the annealed stages of the config.
/// Errors raised inside a stage are rethrown with the stage name prefixed.
FitResult fit(const KeypointSet& keypoints, const ModelAssets& assets, const FitConfig& config,
              const FitPriors& priors);

/// Colliding pairs and their energy on a posed mesh, contact mask applied.
std::pair<double, int> mesh_collision_energy(const Points3d& vertices, const ModelAssets& assets);

}  // namespace xbody
