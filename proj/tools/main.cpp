#include <CLI11.hpp>

#include "commands.hpp"

using namespace xbody::cli;

int main(int argc, char** argv) {
    CLI::App app{"Expressive body model fitting to 2D keypoints"};
    app.require_subcommand(1);

    FitArgs fit;
    auto* f = app.add_subcommand("fit", "Fit the body model to OpenPose keypoints");
    f->add_option("--model", fit.model, "Model asset directory, or one with neutral/male/female subdirectories")->required();
    f->add_option("--keypoints", fit.keypoints, "OpenPose JSON file or directory of files")->required();
    f->add_option("--output", fit.output, "Output directory")->required();
    f->add_option("--config", fit.config, "Fit configuration JSON");
    f->add_option("--priors", fit.priors, "Directory holding trained vposer/ and gmm/ priors")->required();
    f->add_option("--prior", fit.prior, "Body pose prior")->check(CLI::IsMember({"vposer", "gmm"}));
    f->add_option("--gender", fit.gender, "Body model gender")->check(CLI::IsMember({"neutral", "male", "female", "auto"}));
    f->add_option("--gender-label", fit.gender_label, "Gender label JSON used with --gender auto");
    f->add_option("--focal", fit.focal, "Focal length in pixels (default 5000 or the config value)");
    std::string collision = "on";
    f->add_option("--collision", collision, "Self-collision term")->check(CLI::IsMember({"on", "off"}));
    f->add_option("--seed", fit.seed, "Seed");
    f->add_option("--threads", fit.threads, "Frames fitted in parallel")->check(CLI::PositiveNumber);

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Compare predicted meshes with ground truth");
    e->add_option("--pred", ev.pred, "Directory of predicted OBJ meshes")->required();
    e->add_option("--gt", ev.gt, "Directory of ground-truth OBJ meshes")->required();
    e->add_option("--output", ev.output, "Output directory")->required();
    e->add_option("--model", ev.model, "Model assets, enables joint errors");
    e->add_option("--align", ev.align, "Alignment")->check(CLI::IsMember({"similarity", "rigid", "none"}));
    e->add_option("--threads", ev.threads, "Worker threads")->check(CLI::PositiveNumber);

    TrainArgs tr;
    auto* t = app.add_subcommand("train-prior", "Train the VPoser or GMM body pose prior");
    t->add_option("--output", tr.output, "Output directory")->required();
    t->add_option("--prior", tr.prior, "Prior to train")->check(CLI::IsMember({"vposer", "gmm"}));
    t->add_option("--corpus", tr.corpus, "CSV of body poses (63 values per row); synthetic when omitted");
    t->add_option("--config", tr.config, "Configuration JSON with a train section");
    t->add_option("--poses", tr.poses, "Synthetic corpus size")->check(CLI::PositiveNumber);
    t->add_option("--epochs", tr.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
    t->add_option("--components", tr.components, "GMM components")->check(CLI::PositiveNumber);
    t->add_option("--seed", tr.seed, "Seed");
    t->add_option("--threads", tr.threads, "Worker threads")->check(CLI::PositiveNumber);

    SynthArgs sy;
    auto* s = app.add_subcommand("synth", "Write a synthetic model with ground-truth frames and keypoints");
    s->add_option("--output", sy.output, "Output directory")->required();
    s->add_option("--frames", sy.frames, "Number of frames")->check(CLI::NonNegativeNumber);
    s->add_option("--vertices", sy.vertices, "Vertex count of the synthetic model")->check(CLI::PositiveNumber);
    s->add_option("--joints", sy.joints, "Articulated joint count (21..24 or 54)");
    s->add_option("--noise", sy.noise, "Keypoint noise in pixels")->check(CLI::NonNegativeNumber);
    s->add_option("--focal", sy.focal, "Focal length in pixels")->check(CLI::PositiveNumber);
    s->add_option("--gender", sy.gender, "Gender tag")->check(CLI::IsMember({"neutral", "male", "female"}));
    s->add_option("--collisions", sy.collisions, "Ground truth self-contact")
        ->check(CLI::IsMember({"reject", "require", "any"}));
    s->add_option("--seed", sy.seed, "Seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kUsage;
    }

    if (*f) {
        fit.collision = collision == "on";
        return cmd_fit(fit);
    }
    if (*e) return cmd_eval(ev);
    if (*t) return cmd_train_prior(tr);
    return cmd_synth(sy);
}
