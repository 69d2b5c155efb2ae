#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "xbody/errors.hpp"
#include "xbody/fit.hpp"
#include "xbody/io.hpp"
#include "xbody/metrics.hpp"
#include "xbody/pose_sampler.hpp"
#include "xbody/priors.hpp"
#include "xbody/scene.hpp"
#include "xbody/synthetic.hpp"
#include "xbody/vposer.hpp"

namespace fs = std::filesystem;

namespace xbody::cli {

namespace {

std::mutex g_log_mutex;

void log(const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_log_mutex);
    std::cerr << msg << '\n';
}

// Runs body and maps library errors onto exit codes.
int guarded(const char* command, const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        log(std::string(command) + ": configuration error: " + e.what());
        return kUsage;
    } catch (const InvalidArgument& e) {
        log(std::string(command) + ": invalid argument: " + e.what());
        return kUsage;
    } catch (const ParseError& e) {
        log(std::string(command) + ": parse error: " + e.what());
        return kParse;
    } catch (const IoError& e) {
        log(std::string(command) + ": i/o error: " + e.what());
        return kParse;
    } catch (const InitializationError& e) {
        log(std::string(command) + ": initialization failed: " + e.what());
        return kInitialization;
    } catch (const NumericError& e) {
        log(std::string(command) + ": numeric failure: " + e.what());
        return kOptimizer;
    } catch (const BehindCamera& e) {
        log(std::string(command) + ": numeric failure: " + e.what());
        return kOptimizer;
    } catch (const DimensionMismatch& e) {
        log(std::string(command) + ": inconsistent inputs: " + e.what());
        return kData;
    } catch (const DegenerateAlignment& e) {
        log(std::string(command) + ": inconsistent inputs: " + e.what());
        return kData;
    } catch (const Error& e) {
        log(std::string(command) + ": " + e.what());
        return kUsage;
    } catch (const fs::filesystem_error& e) {
        log(std::string(command) + ": i/o error: " + e.what());
        return kParse;
    }
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; the first error is rethrown.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (int i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < std::min(threads, n); ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

ModelAssets load_model(const fs::path& dir, const std::string& gender) {
    if (fs::exists(dir / kManifestName)) {
        ModelAssets a = ModelAssets::load(dir);
        if (gender != "neutral" && to_string(a.gender) != gender)
            log("fit: no " + gender + " model in " + dir.string() + ", using its " + to_string(a.gender) + " model");
        return a;
    }
    for (const std::string& g : {gender, std::string("neutral")})
        if (fs::exists(dir / g / kManifestName)) return ModelAssets::load(dir / g);
    throw IoError("no model assets under " + dir.string());
}

std::string frame_name(int i) {
    std::ostringstream os;
    os << "frame_" << std::setw(4) << std::setfill('0') << i;
    return os.str();
}

MatX<double> read_pose_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ParseError(path.string() + ": row " + std::to_string(rows.size()) + ": bad number '" + cell + "'");
            }
        }
        if (row.size() != static_cast<size_t>(kBodyPoseDim))
            throw ParseError(path.string() + ": row " + std::to_string(rows.size()) + " does not have 63 values");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError(path.string() + ": empty pose corpus");
    MatX<double> out(rows.size(), kBodyPoseDim);
    for (size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < kBodyPoseDim; ++j) out(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<size_t>(j)];
    return out;
}

}  // namespace

int cmd_fit(const FitArgs& args) {
    return guarded("fit", [&]() {
        FitConfig config = args.config.empty() ? FitConfig::preset() : load_fit_config(args.config);
        if (args.focal > 0.0) config.camera.focal = Vec2<double>(args.focal, args.focal);
        config.prior = args.prior == "gmm" ? BodyPrior::Gmm : BodyPrior::Vposer;
        config.collision = args.collision;
        config.validate();

        std::string gender = args.gender;
        if (gender == "auto") {
            if (args.gender_label.empty()) throw ConfigError("--gender auto needs --gender-label");
            gender = resolve_gender(read_gender_label(args.gender_label), config.gender_threshold);
            log("fit: using the " + gender + " model");
        }
        const ModelAssets assets = load_model(args.model, gender);

        Vposer<float> vposer;
        GmmPrior gmm;
        FitPriors priors;
        const fs::path prior_dir = fs::path(args.priors) / (args.prior == "gmm" ? "gmm" : "vposer");
        if (args.prior == "gmm") {
            gmm = GmmPrior::from_store(ArrayStore::load(prior_dir));
            priors.gmm = &gmm;
        } else {
            vposer = vposer_from_store(ArrayStore::load(prior_dir));
            priors.vposer = &vposer;
        }

        std::vector<fs::path> inputs;
        if (fs::is_directory(args.keypoints))
            inputs = files_with_extension(args.keypoints, ".json");
        else if (fs::exists(args.keypoints))
            inputs.push_back(args.keypoints);
        else
            throw IoError("keypoint file not found: " + args.keypoints);
        if (inputs.empty()) throw IoError("no keypoint files in " + args.keypoints);

        // Parse everything first so malformed input fails before any fitting.
        std::vector<KeypointSet> keypoints;
        for (const auto& p : inputs) keypoints.push_back(read_openpose(p));

        const fs::path out(args.output);
        fs::create_directories(out);
        parallel_for(static_cast<int>(inputs.size()), args.threads, [&](int i) {
            const std::string stem = inputs[static_cast<size_t>(i)].stem().string();
            const FitResult r = fit(keypoints[static_cast<size_t>(i)], assets, config, priors);
            export_mesh(r.vertices, assets.faces, out / (stem + ".obj"));
            r.params.to_store().save(out / (stem + "_params"));
            write_energy_csv(r, out / (stem + "_energy.csv"));
            std::ostringstream os;
            os << "fit: " << stem << " done, final energy "
               << (r.stages.empty() ? 0.0 : r.stages.back().end.total) << ", collision pairs " << r.collision_pairs;
            log(os.str());
        });
        return static_cast<int>(kOk);
    });
}

int cmd_eval(const EvalArgs& args) {
    return guarded("eval", [&]() {
        const Alignment align = args.align == "none"    ? Alignment::None
                                : args.align == "rigid" ? Alignment::Rigid
                                                        : Alignment::Similarity;
        ModelAssets assets;
        const bool with_joints = !args.model.empty();
        if (with_joints) assets = ModelAssets::load(args.model);

        const auto preds = files_with_extension(args.pred, ".obj");
        if (preds.empty()) throw IoError("no OBJ meshes in " + args.pred);
        EvalReport report;
        report.frames.resize(preds.size());
        parallel_for(static_cast<int>(preds.size()), args.threads, [&](int i) {
            const fs::path& pp = preds[static_cast<size_t>(i)];
            const fs::path gp = fs::path(args.gt) / pp.filename();
            if (!fs::exists(gp)) throw IoError("no ground truth for " + pp.filename().string());
            const Mesh pred = import_mesh(pp), gt = import_mesh(gp);
            if (pred.vertices.rows() != gt.vertices.rows() || pred.faces != gt.faces)
                throw DimensionMismatch(pp.filename().string() + ": mesh topology differs from the ground truth");
            FrameError& fe = report.frames[static_cast<size_t>(i)];
            fe.name = pp.stem().string();
            fe.v2v_mm = v2v_error(pred.vertices, gt.vertices, align, &fe.alignment);
            if (with_joints) {
                if (pred.vertices.rows() != assets.num_vertices())
                    throw DimensionMismatch(pp.filename().string() + ": mesh does not match the model");
                const Points3d jp = assets.joint_regressor * pred.vertices, jg = assets.joint_regressor * gt.vertices;
                std::vector<int> body;
                for (int k = 0; k < 22; ++k) body.push_back(k);
                fe.mpjpe_mm = joint_error(jp, jg, body, align);
                if (assets.has_hands()) {
                    auto hand = [&](JointGroup g, int wrist) {
                        std::vector<int> idx{wrist};
                        for (int j : assets.group_joints(g)) idx.push_back(j);
                        return idx;
                    };
                    fe.left_hand_mm = joint_error(jp, jg, hand(JointGroup::LeftHand, 20), align);
                    fe.right_hand_mm = joint_error(jp, jg, hand(JointGroup::RightHand, 21), align);
                }
            }
        });
        write_eval_csv(report, fs::path(args.output) / "report.csv");
        std::ostringstream os;
        os << "eval: " << report.frames.size() << " frames, mean v2v " << report.mean_v2v() << " mm";
        log(os.str());
        return static_cast<int>(kOk);
    });
}

int cmd_train_prior(const TrainArgs& args) {
    return guarded("train-prior", [&]() {
        VposerTrainConfig tc;
        if (!args.config.empty()) load_fit_config(args.config, &tc);
        tc.epochs = args.epochs;
        tc.seed = args.seed;
        const MatX<double> corpus =
            args.corpus.empty() ? PoseSampler(args.seed).corpus(args.poses) : read_pose_csv(args.corpus);
        for (Eigen::Index i = 0; i < corpus.rows(); ++i)
            if (!corpus.row(i).allFinite())
                throw NumericError("non-finite value in corpus row " + std::to_string(i));

        const fs::path out(args.output);
        fs::create_directories(out);
        if (args.prior == "gmm") {
            const GmmPrior gmm = GmmPrior::fit(corpus, args.components, args.seed);
            gmm.to_store().save(out / "gmm");
            double ll = 0.0;
            for (Eigen::Index i = 0; i < corpus.rows(); ++i) ll += gmm.log_density(corpus.row(i).transpose());
            std::ostringstream os;
            os << std::setprecision(10) << "components,samples,mean_log_density\n"
               << gmm.components() << ',' << corpus.rows() << ',' << ll / static_cast<double>(corpus.rows()) << '\n';
            write_text(out / "training.csv", os.str());
        } else {
            const VposerTrainResult r = train_vposer(corpus, tc);
            vposer_to_store(r.model).save(out / "vposer");
            write_training_csv(r.curve, out / "training.csv");
            std::ostringstream os;
            os << "train-prior: best epoch " << r.best_epoch << ", validation rec "
               << r.curve[static_cast<size_t>(r.best_epoch)].validation.rec;
            log(os.str());
        }
        return static_cast<int>(kOk);
    });
}

int cmd_synth(const SynthArgs& args) {
    return guarded("synth", [&]() {
        SyntheticModelOptions mo;
        mo.num_vertices = args.vertices;
        mo.num_articulated = args.joints;
        mo.gender = parse_gender(args.gender);
        mo.seed = args.seed;
        const ModelAssets assets = make_synthetic_model(mo);

        SceneOptions so;
        so.focal = args.focal;
        so.noise_px = args.noise;
        so.collisions = args.collisions == "require" ? SceneCollisions::Require
                        : args.collisions == "any"   ? SceneCollisions::Any
                                                     : SceneCollisions::Reject;

        const fs::path out(args.output);
        fs::create_directories(out);
        assets.save(out / "model");
        FitConfig config = FitConfig::preset();
        config.camera.focal = Vec2<double>(so.focal, so.focal);
        config.camera.principal_point = 0.5 * so.image_size;
        write_text(out / "config.json", fit_config_to_json(config));
        for (int i = 0; i < args.frames; ++i) {
            const SyntheticScene sc = make_scene(assets, args.seed * 1000003ull + static_cast<std::uint64_t>(i), so);
            const std::string name = frame_name(i);
            write_openpose(out / "keypoints" / (name + ".json"), sc.keypoints);
            export_mesh(sc.vertices, assets.faces, out / "gt" / (name + ".obj"));
            sc.params.to_store().save(out / "params" / name);
        }
        log("synth: wrote " + std::to_string(args.frames) + " frames to " + out.string());
        return static_cast<int>(kOk);
    });
}

}  // namespace xbody::cli
