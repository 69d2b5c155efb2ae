#pragma once

#include <cstdint>
#include <string>

namespace xbody::cli {

// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kUsage = 1,          // bad flags or configuration
    kParse = 2,          // unreadable or malformed input files
    kInitialization = 3, // camera initialization failed
    kOptimizer = 4,      // numeric failure while fitting or training
    kData = 5,           // inputs that disagree (topology, dimensions, alignment)
};

struct FitArgs {
    std::string model;
    std::string keypoints;  // one OpenPose file or a directory of them
    std::string output;
    std::string config;
    std::string priors;  // directory written by train-prior
    std::string prior = "vposer";
    std::string gender = "neutral";
    std::string gender_label;
    double focal = 0.0;  // 0 keeps the config value
    bool collision = true;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct EvalArgs {
    std::string pred;
    std::string gt;
    std::string output;
    std::string model;  // optional, enables joint errors
    std::string align = "similarity";
    int threads = 1;
};

struct TrainArgs {
    std::string output;
    std::string prior = "vposer";
    std::string corpus;  // optional CSV of 63-value poses
    std::string config;
    int poses = 10000;
    int epochs = 50;
    int components = 8;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct SynthArgs {
    std::string output;
    int frames = 4;
    int vertices = 1000;
    int joints = 54;
    double noise = 0.0;
    double focal = 1000.0;
    std::string gender = "neutral";
    std::string collisions = "reject";
    std::uint64_t seed = 1;
};

int cmd_fit(const FitArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_train_prior(const TrainArgs& args);
int cmd_synth(const SynthArgs& args);

}  // namespace xbody::cli
