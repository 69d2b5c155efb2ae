#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xbody/fit.hpp"
#include "xbody/keypoints.hpp"
#include "xbody/metrics.hpp"
#include "xbody/objective.hpp"
#include "xbody/vposer.hpp"

namespace xbody {

/// First person of an OpenPose JSON document. Missing blocks stay at zero
/// confidence. Throws ParseError on malformed input or an empty people list.
KeypointSet parse_openpose(const std::string& text);
KeypointSet read_openpose(const std::filesystem::path& path);
/// Single-person document; values are written so they parse back exactly.
std::string format_openpose(const KeypointSet& keypoints);
void write_openpose(const std::filesystem::path& path, const KeypointSet& keypoints);

struct Mesh {
    Points3d vertices;
    Faces faces;
};

/// ASCII Wavefront OBJ with 9 significant digits and 1-based indices.
/// Throws InvalidArgument on an empty mesh and IoError on write failure.
void export_mesh(const Points3d& vertices, const Faces& faces, const std::filesystem::path& path);
/// Reads v and f records (polygons are rejected). Throws ParseError on
/// malformed records or out-of-range indices.
Mesh import_mesh(const std::filesystem::path& path);

inline constexpr int kConfigSchemaVersion = 1;

/// Fit configuration document, every field optional over the preset:
///   { "schema_version": 1,
///     "camera": { "focal": [fx, fy], "principal_point": [cx, cy] },
///     "sigma_per_1000": 100, "prior": "vposer" | "gmm", "collision": true,
///     "gender": "neutral", "gender_threshold": 0.9,
///     "lbfgs": { "memory", "max_iterations", "c1", "c2", "gradient_tolerance",
///                "function_tolerance", "max_line_search" },
///     "stages": [ { "name", "data": { "body", "hands", "face" }, "body_pose",
///                   "face_pose", "hands", "angle", "shape", "expression",
///                   "collision" } ],
///     "train": { "epochs", "batch_size", "learning_rate", "lr_decay",
///                "validation_fraction", "hidden", "latent",
///                "loss_weights": [c1, c2, c3, c4, c5] } }
/// Throws ConfigError on unknown keys, bad types or an unsupported version.
FitConfig fit_config_from_json(const std::string& text, VposerTrainConfig* train = nullptr);
std::string fit_config_to_json(const FitConfig& config, const VposerTrainConfig* train = nullptr);
FitConfig load_fit_config(const std::filesystem::path& path, VposerTrainConfig* train = nullptr);

/// Per-image gender label {"gender": "male", "confidence": 0.97}.
struct GenderLabel {
    std::string gender = "neutral";
    double confidence = 1.0;
};
GenderLabel read_gender_label(const std::filesystem::path& path);
/// Label gender when its confidence reaches the threshold, neutral otherwise.
std::string resolve_gender(const GenderLabel& label, double threshold);

/// Columns: frame,v2v_mm,mpjpe_mm,left_hand_mm,right_hand_mm,scale, then a
/// final "mean" and "median" row.
void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);
/// Columns: stage,step,total.
void write_energy_csv(const FitResult& result, const std::filesystem::path& path);
/// Columns: epoch,train_total,val_total,val_kl,val_rec,val_orth,val_det1,val_reg.
void write_training_csv(const std::vector<EpochRecord>& curve, const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace xbody
