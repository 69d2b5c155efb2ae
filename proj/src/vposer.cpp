#include "xbody/vposer.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

namespace xbody {

void VaeLossWeights::validate() const {
    if (!(kl > 0.0 && rec > 0.0 && orth > 0.0 && det1 > 0.0 && reg > 0.0))
        throw ConfigError("vae loss weights must all be positive");
}

void VposerTrainConfig::validate() const {
    weights.validate();
    if (arch.joints < 1 || arch.hidden < 1 || arch.latent < 1) throw ConfigError("vposer: invalid architecture");
    if (epochs < 0 || batch_size < 1) throw ConfigError("vposer: invalid epoch or batch settings");
    if (!(learning_rate > 0.0) || !(lr_decay > 0.0)) throw ConfigError("vposer: invalid learning rate");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw ConfigError("vposer: validation fraction must be in (0, 1)");
}

namespace {

DenseLayer<float> he_layer(int out, int in, std::mt19937_64& rng) {
    std::normal_distribution<float> gauss(0.0f, std::sqrt(2.0f / static_cast<float>(in)));
    DenseLayer<float> l;
    l.weight = MatX<float>::NullaryExpr(out, in, [&]() { return gauss(rng); });
    l.bias = VecX<float>::Zero(out);
    return l;
}

void put_mlp(ArrayStore& s, const std::string& prefix, const Mlp<float>& m) {
    for (size_t l = 0; l < m.layers.size(); ++l) {
        s.put_matrix(prefix + "_w" + std::to_string(l), m.layers[l].weight.cast<double>());
        s.put_vector(prefix + "_b" + std::to_string(l), m.layers[l].bias.cast<double>());
    }
}

Mlp<float> get_mlp(const ArrayStore& s, const std::string& prefix, int layers, float leak) {
    Mlp<float> m;
    m.leak = leak;
    for (int l = 0; l < layers; ++l) {
        DenseLayer<float> d;
        d.weight = s.matrix(prefix + "_w" + std::to_string(l)).cast<float>();
        d.bias = s.vector(prefix + "_b" + std::to_string(l)).cast<float>();
        if (d.bias.size() != d.weight.rows()) throw ParseError("vposer: bias size mismatch in " + prefix);
        if (l > 0 && d.weight.cols() != m.layers.back().weight.rows())
            throw ParseError("vposer: layer size mismatch in " + prefix);
        m.layers.push_back(std::move(d));
    }
    return m;
}

MatX<float> rotation_batch(const MatX<double>& poses) {
    MatX<float> out(9 * (poses.cols() / 3), poses.rows());
    for (Eigen::Index i = 0; i < poses.rows(); ++i)
        out.col(i) = pose_to_rotations<double>(poses.row(i).transpose()).cast<float>();
    return out;
}

VaeLosses evaluate_batch(const Vposer<float>& model, const MatX<float>& x, const VaeLossWeights& w) {
    const MatX<float> enc = model.encoder.forward(x);
    const MatX<float> mu = enc.topRows(model.arch.latent);
    const MatX<float> ls = enc.bottomRows(model.arch.latent);
    const MatX<float> raw = model.decoder.forward(mu);
    return vae_losses<float>(x, raw, mu, ls, model.squared_weight_norm(), w);
}

struct Adam {
    std::vector<DenseLayer<float>> m, v;
    int step = 0;

    void update(Mlp<float>& net, std::vector<DenseLayer<float>>& g, std::vector<DenseLayer<float>>& m1,
                std::vector<DenseLayer<float>>& m2, float lr) const {
        const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
        const float c1 = 1.0f - std::pow(b1, static_cast<float>(step));
        const float c2 = 1.0f - std::pow(b2, static_cast<float>(step));
        for (size_t l = 0; l < net.layers.size(); ++l) {
            m1[l].weight = b1 * m1[l].weight + (1.0f - b1) * g[l].weight;
            m2[l].weight = b2 * m2[l].weight + (1.0f - b2) * g[l].weight.cwiseAbs2();
            net.layers[l].weight.array() -=
                lr * (m1[l].weight.array() / c1) / ((m2[l].weight.array() / c2).sqrt() + eps);
            m1[l].bias = b1 * m1[l].bias + (1.0f - b1) * g[l].bias;
            m2[l].bias = b2 * m2[l].bias + (1.0f - b2) * g[l].bias.cwiseAbs2();
            net.layers[l].bias.array() -= lr * (m1[l].bias.array() / c1) / ((m2[l].bias.array() / c2).sqrt() + eps);
        }
    }
};

}  // namespace

Vposer<float> make_vposer(const VposerArch& arch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Vposer<float> v;
    v.arch = arch;
    v.encoder.leak = v.decoder.leak = static_cast<float>(arch.leak);
    v.encoder.layers = {he_layer(arch.hidden, arch.input_dim(), rng), he_layer(arch.hidden, arch.hidden, rng),
                        he_layer(2 * arch.latent, arch.hidden, rng)};
    v.decoder.layers = {he_layer(arch.hidden, arch.latent, rng), he_layer(arch.hidden, arch.hidden, rng),
                        he_layer(arch.input_dim(), arch.hidden, rng)};
    // Start with small posterior variances so sampling does not swamp the signal.
    v.encoder.layers.back().weight.bottomRows(arch.latent) *= 0.1f;
    v.encoder.layers.back().bias.tail(arch.latent).setConstant(-2.0f);
    return v;
}

ArrayStore vposer_to_store(const Vposer<float>& model) {
    ArrayStore s;
    s.meta()["kind"] = "vposer";
    s.meta()["joints"] = model.arch.joints;
    s.meta()["hidden"] = model.arch.hidden;
    s.meta()["latent"] = model.arch.latent;
    s.meta()["leak"] = model.arch.leak;
    s.meta()["encoder_layers"] = model.encoder.layers.size();
    s.meta()["decoder_layers"] = model.decoder.layers.size();
    put_mlp(s, "encoder", model.encoder);
    put_mlp(s, "decoder", model.decoder);
    return s;
}

Vposer<float> vposer_from_store(const ArrayStore& s) {
    if (s.meta().value("kind", std::string()) != "vposer") throw ParseError("asset store does not hold a VPoser");
    Vposer<float> v;
    try {
        v.arch.joints = s.meta().at("joints").get<int>();
        v.arch.hidden = s.meta().at("hidden").get<int>();
        v.arch.latent = s.meta().at("latent").get<int>();
        v.arch.leak = s.meta().at("leak").get<double>();
        const float leak = static_cast<float>(v.arch.leak);
        v.encoder = get_mlp(s, "encoder", s.meta().at("encoder_layers").get<int>(), leak);
        v.decoder = get_mlp(s, "decoder", s.meta().at("decoder_layers").get<int>(), leak);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("vposer metadata: ") + e.what());
    }
    if (v.encoder.layers.front().weight.cols() != v.arch.input_dim() ||
        v.encoder.layers.back().weight.rows() != 2 * v.arch.latent ||
        v.decoder.layers.front().weight.cols() != v.arch.latent ||
        v.decoder.layers.back().weight.rows() != v.arch.input_dim())
        throw ParseError("vposer: layer shapes disagree with the architecture");
    return v;
}

VaeLosses evaluate_vposer(const Vposer<float>& model, const MatX<double>& poses, const VaeLossWeights& weights) {
    if (poses.rows() == 0) throw InvalidArgument("evaluate_vposer: empty pose set");
    if (poses.cols() != 3 * model.arch.joints) throw DimensionMismatch("evaluate_vposer: pose width");
    return evaluate_batch(model, rotation_batch(poses), weights);
}

VposerTrainResult train_vposer(const MatX<double>& poses, const VposerTrainConfig& cfg) {
    cfg.validate();
    if (poses.rows() < 2) throw InvalidArgument("train_vposer: corpus needs at least two poses");
    if (poses.cols() != 3 * cfg.arch.joints) throw DimensionMismatch("train_vposer: pose width");
    for (Eigen::Index i = 0; i < poses.rows(); ++i) {
        if (!poses.row(i).allFinite()) {
            std::ostringstream os;
            os << "train_vposer: non-finite value in corpus row " << i;
            throw NumericError(os.str());
        }
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<Eigen::Index> order(static_cast<size_t>(poses.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    std::shuffle(order.begin(), order.end(), rng);
    const Eigen::Index n_val = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::llround(cfg.validation_fraction * static_cast<double>(poses.rows()))), 1,
        poses.rows() - 1);
    const Eigen::Index n_train = poses.rows() - n_val;
    const MatX<float> all = rotation_batch(poses);
    MatX<float> train(all.rows(), n_train), val(all.rows(), n_val);
    for (Eigen::Index i = 0; i < n_train; ++i) train.col(i) = all.col(order[static_cast<size_t>(i)]);
    for (Eigen::Index i = 0; i < n_val; ++i) val.col(i) = all.col(order[static_cast<size_t>(n_train + i)]);

    VposerTrainResult result;
    result.train_size = static_cast<int>(n_train);
    result.validation_size = static_cast<int>(n_val);
    Vposer<float> model = make_vposer(cfg.arch, cfg.seed + 1);
    result.model = model;
    result.curve.push_back({0, 0.0, evaluate_batch(model, val, cfg.weights)});
    double best = result.curve[0].validation.total;

    Adam adam;
    auto enc_m = model.encoder.zeros_like(), enc_v = model.encoder.zeros_like();
    auto dec_m = model.decoder.zeros_like(), dec_v = model.decoder.zeros_like();
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    std::vector<Eigen::Index> idx(static_cast<size_t>(n_train));
    std::iota(idx.begin(), idx.end(), Eigen::Index(0));
    const int latent = cfg.arch.latent;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const float lr = static_cast<float>(cfg.learning_rate * std::pow(cfg.lr_decay, epoch - 1));
        double epoch_total = 0.0;
        int batches = 0;
        for (Eigen::Index start = 0; start < n_train; start += cfg.batch_size) {
            const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n_train - start);
            MatX<float> x(train.rows(), b);
            for (Eigen::Index i = 0; i < b; ++i) x.col(i) = train.col(idx[static_cast<size_t>(start + i)]);

            Mlp<float>::Cache ec, dc;
            const MatX<float> enc = model.encoder.forward(x, &ec);
            const MatX<float> mu = enc.topRows(latent);
            const MatX<float> ls = enc.bottomRows(latent);
            const MatX<float> eps = MatX<float>::NullaryExpr(latent, b, [&]() { return gauss(rng); });
            const MatX<float> sigma = ls.array().exp().matrix();
            const MatX<float> z = mu + sigma.cwiseProduct(eps);
            const MatX<float> raw = model.decoder.forward(z, &dc);

            VaeLossGrad<float> g;
            const VaeLosses loss = vae_losses<float>(x, raw, mu, ls, model.squared_weight_norm(), cfg.weights, &g);
            if (!std::isfinite(loss.total)) {
                std::ostringstream os;
                os << "train_vposer: non-finite loss in epoch " << epoch << " (kl " << loss.kl << ", rec "
                   << loss.rec << ", orth " << loss.orth << ")";
                throw NumericError(os.str());
            }
            epoch_total += loss.total;
            ++batches;

            auto dec_g = model.decoder.zeros_like();
            const MatX<float> gz = model.decoder.backward(dc, g.raw, &dec_g);
            MatX<float> genc(2 * latent, b);
            genc.topRows(latent) = g.mu + gz;
            genc.bottomRows(latent) = g.log_sigma + gz.cwiseProduct(sigma).cwiseProduct(eps);
            auto enc_g = model.encoder.zeros_like();
            model.encoder.backward(ec, genc, &enc_g);
            const float reg2 = static_cast<float>(2.0 * cfg.weights.reg);
            for (size_t l = 0; l < enc_g.size(); ++l) enc_g[l].weight += reg2 * model.encoder.layers[l].weight;
            for (size_t l = 0; l < dec_g.size(); ++l) dec_g[l].weight += reg2 * model.decoder.layers[l].weight;

            ++adam.step;
            adam.update(model.encoder, enc_g, enc_m, enc_v, lr);
            adam.update(model.decoder, dec_g, dec_m, dec_v, lr);
        }
        EpochRecord rec{epoch, epoch_total / std::max(1, batches), evaluate_batch(model, val, cfg.weights)};
        if (!std::isfinite(rec.validation.total)) {
            std::ostringstream os;
            os << "train_vposer: non-finite validation loss after epoch " << epoch;
            throw NumericError(os.str());
        }
        result.curve.push_back(rec);
        if (rec.validation.total < best) {
            best = rec.validation.total;
            result.model = model;
            result.best_epoch = epoch;
        }
    }
    return result;
}

}  // namespace xbody
