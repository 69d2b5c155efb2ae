#include "xbody/io.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "xbody/errors.hpp"

namespace xbody {

using nlohmann::json;

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

namespace {

using Block = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

void read_block(const json& person, const char* key, Block& out) {
    if (!person.contains(key) || person[key].is_null()) return;
    const json& arr = person[key];
    if (!arr.is_array()) throw ParseError(std::string("openpose: ") + key + " is not an array");
    if (arr.empty()) return;
    if (arr.size() != static_cast<size_t>(3 * out.rows())) {
        std::ostringstream os;
        os << "openpose: " << key << " has " << arr.size() << " values, expected " << 3 * out.rows();
        throw ParseError(os.str());
    }
    for (size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) throw ParseError(std::string("openpose: non-numeric value in ") + key);
        out(static_cast<Eigen::Index>(i / 3), static_cast<Eigen::Index>(i % 3)) = arr[i].get<double>();
    }
}

json write_block(const Block& b) {
    json arr = json::array();
    for (Eigen::Index r = 0; r < b.rows(); ++r)
        for (int c = 0; c < 3; ++c) arr.push_back(b(r, c));
    return arr;
}

}  // namespace

KeypointSet parse_openpose(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("openpose: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("people") || !doc["people"].is_array())
        throw ParseError("openpose: missing people array");
    if (doc["people"].empty()) throw ParseError("openpose: no people detected");
    const json& person = doc["people"][0];
    if (!person.is_object()) throw ParseError("openpose: person entry is not an object");
    KeypointSet k;
    read_block(person, "pose_keypoints_2d", k.body);
    read_block(person, "hand_left_keypoints_2d", k.left_hand);
    read_block(person, "hand_right_keypoints_2d", k.right_hand);
    read_block(person, "face_keypoints_2d", k.face);
    return k;
}

KeypointSet read_openpose(const std::filesystem::path& path) { return parse_openpose(read_text(path)); }

std::string format_openpose(const KeypointSet& k) {
    json person;
    person["person_id"] = json::array({-1});
    person["pose_keypoints_2d"] = write_block(k.body);
    person["face_keypoints_2d"] = write_block(k.face);
    person["hand_left_keypoints_2d"] = write_block(k.left_hand);
    person["hand_right_keypoints_2d"] = write_block(k.right_hand);
    json doc;
    doc["version"] = 1.3;
    doc["people"] = json::array({person});
    return doc.dump();
}

void write_openpose(const std::filesystem::path& path, const KeypointSet& k) { write_text(path, format_openpose(k)); }

void export_mesh(const Points3d& vertices, const Faces& faces, const std::filesystem::path& path) {
    if (vertices.rows() == 0 || faces.rows() == 0) throw InvalidArgument("export_mesh: empty mesh");
    if (faces.minCoeff() < 0 || faces.maxCoeff() >= vertices.rows())
        throw InvalidArgument("export_mesh: face index out of range");
    std::ostringstream os;
    os << std::setprecision(9);
    for (Eigen::Index i = 0; i < vertices.rows(); ++i)
        os << "v " << vertices(i, 0) << ' ' << vertices(i, 1) << ' ' << vertices(i, 2) << '\n';
    for (Eigen::Index i = 0; i < faces.rows(); ++i)
        os << "f " << faces(i, 0) + 1 << ' ' << faces(i, 1) + 1 << ' ' << faces(i, 2) + 1 << '\n';
    write_text(path, os.str());
}

Mesh import_mesh(const std::filesystem::path& path) {
    std::istringstream in(read_text(path));
    std::vector<double> v;
    std::vector<int> f;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& what) {
        std::ostringstream os;
        os << path.string() << ":" << lineno << ": " << what;
        throw ParseError(os.str());
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) fail("malformed vertex");
            v.insert(v.end(), {x, y, z});
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) {
                try {
                    idx.push_back(std::stoi(tok.substr(0, tok.find('/'))));
                } catch (const std::exception&) {
                    fail("malformed face index '" + tok + "'");
                }
            }
            if (idx.size() != 3) fail("only triangles are supported");
            for (int i : idx) f.push_back(i);
        }
    }
    Mesh m;
    const Eigen::Index nv = static_cast<Eigen::Index>(v.size() / 3), nf = static_cast<Eigen::Index>(f.size() / 3);
    if (nv == 0 || nf == 0) throw ParseError(path.string() + ": mesh has no vertices or faces");
    m.vertices = Eigen::Map<Points3d>(v.data(), nv, 3);
    m.faces.resize(nf, 3);
    for (Eigen::Index i = 0; i < nf; ++i)
        for (int k = 0; k < 3; ++k) {
            int idx = f[static_cast<size_t>(3 * i + k)];
            if (idx < 0) idx += static_cast<int>(nv) + 1;  // relative indices
            if (idx < 1 || idx > nv) {
                std::ostringstream os;
                os << path.string() << ": face " << i << " index " << f[static_cast<size_t>(3 * i + k)] << " out of range";
                throw ParseError(os.str());
            }
            m.faces(i, k) = idx - 1;
        }
    return m;
}

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError("config: " + where + " must be an object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key())) throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
}

template <typename T>
void get_to(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for " + where + "." + key + ": " + e.what());
    }
}

Vec2<double> get_vec2(const json& obj, const char* key, const Vec2<double>& fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    std::vector<double> v;
    get_to(obj, key, v, where);
    if (v.size() != 2) throw ConfigError("config: " + where + "." + key + " needs two values");
    return {v[0], v[1]};
}

json stage_to_json(const StageWeights& s) {
    return {{"name", s.name},
            {"data", {{"body", s.data.body}, {"hands", s.data.hands}, {"face", s.data.face}}},
            {"body_pose", s.body_pose},
            {"face_pose", s.face_pose},
            {"hands", s.hands},
            {"angle", s.angle},
            {"shape", s.shape},
            {"expression", s.expression},
            {"collision", s.collision}};
}

StageWeights stage_from_json(const json& j, int index) {
    const std::string where = "stages[" + std::to_string(index) + "]";
    check_keys(j, {"name", "data", "body_pose", "face_pose", "hands", "angle", "shape", "expression", "collision"},
               where);
    StageWeights s;
    s.name = "stage" + std::to_string(index + 1);
    get_to(j, "name", s.name, where);
    if (j.contains("data")) {
        const json& d = j["data"];
        check_keys(d, {"body", "hands", "face"}, where + ".data");
        get_to(d, "body", s.data.body, where + ".data");
        get_to(d, "hands", s.data.hands, where + ".data");
        get_to(d, "face", s.data.face, where + ".data");
    }
    get_to(j, "body_pose", s.body_pose, where);
    get_to(j, "face_pose", s.face_pose, where);
    get_to(j, "hands", s.hands, where);
    get_to(j, "angle", s.angle, where);
    get_to(j, "shape", s.shape, where);
    get_to(j, "expression", s.expression, where);
    get_to(j, "collision", s.collision, where);
    return s;
}

}  // namespace

FitConfig fit_config_from_json(const std::string& text, VposerTrainConfig* train) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    check_keys(doc, {"schema_version", "camera", "sigma_per_1000", "prior", "collision", "gender", "gender_threshold",
                     "lbfgs", "stages", "train"},
               "document");
    int version = kConfigSchemaVersion;
    get_to(doc, "schema_version", version, "document");
    if (version != kConfigSchemaVersion)
        throw ConfigError("config: unsupported schema_version " + std::to_string(version));

    FitConfig c = FitConfig::preset();
    if (doc.contains("camera")) {
        const json& cam = doc["camera"];
        check_keys(cam, {"focal", "principal_point"}, "camera");
        c.camera.focal = get_vec2(cam, "focal", c.camera.focal, "camera");
        c.camera.principal_point = get_vec2(cam, "principal_point", c.camera.principal_point, "camera");
    }
    get_to(doc, "sigma_per_1000", c.sigma_per_1000, "document");
    std::string prior = c.prior == BodyPrior::Vposer ? "vposer" : "gmm";
    get_to(doc, "prior", prior, "document");
    if (prior == "vposer")
        c.prior = BodyPrior::Vposer;
    else if (prior == "gmm")
        c.prior = BodyPrior::Gmm;
    else
        throw ConfigError("config: prior must be 'vposer' or 'gmm'");
    get_to(doc, "collision", c.collision, "document");
    get_to(doc, "gender", c.gender, "document");
    get_to(doc, "gender_threshold", c.gender_threshold, "document");
    if (doc.contains("lbfgs")) {
        const json& l = doc["lbfgs"];
        check_keys(l, {"memory", "max_iterations", "c1", "c2", "gradient_tolerance", "function_tolerance",
                       "max_line_search"},
                   "lbfgs");
        get_to(l, "memory", c.lbfgs.memory, "lbfgs");
        get_to(l, "max_iterations", c.lbfgs.max_iterations, "lbfgs");
        get_to(l, "c1", c.lbfgs.c1, "lbfgs");
        get_to(l, "c2", c.lbfgs.c2, "lbfgs");
        get_to(l, "gradient_tolerance", c.lbfgs.gradient_tolerance, "lbfgs");
        get_to(l, "function_tolerance", c.lbfgs.function_tolerance, "lbfgs");
        get_to(l, "max_line_search", c.lbfgs.max_line_search, "lbfgs");
    }
    if (doc.contains("stages")) {
        if (!doc["stages"].is_array()) throw ConfigError("config: stages must be an array");
        c.stages.clear();
        for (size_t i = 0; i < doc["stages"].size(); ++i)
            c.stages.push_back(stage_from_json(doc["stages"][i], static_cast<int>(i)));
    }
    if (doc.contains("train")) {
        const json& t = doc["train"];
        check_keys(t, {"epochs", "batch_size", "learning_rate", "lr_decay", "validation_fraction", "hidden", "latent",
                       "loss_weights", "seed"},
                   "train");
        if (train) {
            get_to(t, "epochs", train->epochs, "train");
            get_to(t, "batch_size", train->batch_size, "train");
            get_to(t, "learning_rate", train->learning_rate, "train");
            get_to(t, "lr_decay", train->lr_decay, "train");
            get_to(t, "validation_fraction", train->validation_fraction, "train");
            get_to(t, "hidden", train->arch.hidden, "train");
            get_to(t, "latent", train->arch.latent, "train");
            get_to(t, "seed", train->seed, "train");
            if (t.contains("loss_weights")) {
                std::vector<double> w;
                get_to(t, "loss_weights", w, "train");
                if (w.size() != 5) throw ConfigError("config: train.loss_weights needs five values");
                train->weights = {w[0], w[1], w[2], w[3], w[4]};
            }
            train->validate();
        }
    }
    c.validate();
    return c;
}

std::string fit_config_to_json(const FitConfig& c, const VposerTrainConfig* train) {
    json doc;
    doc["schema_version"] = kConfigSchemaVersion;
    doc["camera"] = {{"focal", {c.camera.focal.x(), c.camera.focal.y()}},
                     {"principal_point", {c.camera.principal_point.x(), c.camera.principal_point.y()}}};
    doc["sigma_per_1000"] = c.sigma_per_1000;
    doc["prior"] = c.prior == BodyPrior::Vposer ? "vposer" : "gmm";
    doc["collision"] = c.collision;
    doc["gender"] = c.gender;
    doc["gender_threshold"] = c.gender_threshold;
    doc["lbfgs"] = {{"memory", c.lbfgs.memory},
                    {"max_iterations", c.lbfgs.max_iterations},
                    {"c1", c.lbfgs.c1},
                    {"c2", c.lbfgs.c2},
                    {"gradient_tolerance", c.lbfgs.gradient_tolerance},
                    {"function_tolerance", c.lbfgs.function_tolerance},
                    {"max_line_search", c.lbfgs.max_line_search}};
    doc["stages"] = json::array();
    for (const auto& s : c.stages) doc["stages"].push_back(stage_to_json(s));
    if (train) {
        const auto& w = train->weights;
        doc["train"] = {{"epochs", train->epochs},
                        {"batch_size", train->batch_size},
                        {"learning_rate", train->learning_rate},
                        {"lr_decay", train->lr_decay},
                        {"validation_fraction", train->validation_fraction},
                        {"hidden", train->arch.hidden},
                        {"latent", train->arch.latent},
                        {"seed", train->seed},
                        {"loss_weights", {w.kl, w.rec, w.orth, w.det1, w.reg}}};
    }
    return doc.dump(2) + "\n";
}

FitConfig load_fit_config(const std::filesystem::path& path, VposerTrainConfig* train) {
    return fit_config_from_json(read_text(path), train);
}

GenderLabel read_gender_label(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    GenderLabel l;
    try {
        l.gender = doc.at("gender").get<std::string>();
        l.confidence = doc.value("confidence", 1.0);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (l.gender != "neutral" && l.gender != "male" && l.gender != "female")
        throw ParseError(path.string() + ": unknown gender '" + l.gender + "'");
    if (!(l.confidence >= 0.0 && l.confidence <= 1.0)) throw ParseError(path.string() + ": confidence outside [0, 1]");
    return l;
}

std::string resolve_gender(const GenderLabel& label, double threshold) {
    return label.confidence >= threshold ? label.gender : "neutral";
}

void write_eval_csv(const EvalReport& r, const std::filesystem::path& path) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "frame,v2v_mm,mpjpe_mm,left_hand_mm,right_hand_mm,scale\n";
    for (const auto& f : r.frames)
        os << f.name << ',' << f.v2v_mm << ',' << f.mpjpe_mm << ',' << f.left_hand_mm << ',' << f.right_hand_mm << ','
           << f.alignment.scale << '\n';
    os << "mean," << r.mean_v2v() << ',' << r.mean_mpjpe() << ',' << r.mean_left_hand() << ',' << r.mean_right_hand()
       << ",\n";
    os << "median," << r.median_v2v() << ',' << r.median_mpjpe() << ",,,\n";
    write_text(path, os.str());
}

void write_energy_csv(const FitResult& result, const std::filesystem::path& path) {
    std::ostringstream os;
    os << std::setprecision(12) << "stage,step,total\n";
    for (const auto& s : result.stages)
        for (size_t i = 0; i < s.trace.size(); ++i) os << s.name << ',' << i << ',' << s.trace[i] << '\n';
    write_text(path, os.str());
}

void write_training_csv(const std::vector<EpochRecord>& curve, const std::filesystem::path& path) {
    std::ostringstream os;
    os << std::setprecision(10) << "epoch,train_total,val_total,val_kl,val_rec,val_orth,val_det1,val_reg\n";
    for (const auto& e : curve)
        os << e.epoch << ',' << e.train_total << ',' << e.validation.total << ',' << e.validation.kl << ','
           << e.validation.rec << ',' << e.validation.orth << ',' << e.validation.det1 << ',' << e.validation.reg
           << '\n';
    write_text(path, os.str());
}

}  // namespace xbody
