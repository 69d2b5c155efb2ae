#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "xbody/asset_store.hpp"
#include "xbody/errors.hpp"
#include "xbody/rotation.hpp"
#include "xbody/types.hpp"

namespace xbody {

template <typename Scalar>
struct DenseLayer {
    MatX<Scalar> weight;  // out x in
    VecX<Scalar> bias;
};

/// Fully connected network, leaky ReLU after every layer but the last.
/// Batches are stored one sample per column.
template <typename Scalar>
class Mlp {
public:
    struct Cache {
        std::vector<MatX<Scalar>> inputs;  // input of each layer
        std::vector<MatX<Scalar>> pre;     // pre-activation of each layer
    };

    std::vector<DenseLayer<Scalar>> layers;
    Scalar leak = Scalar(0.2);

    MatX<Scalar> forward(const MatX<Scalar>& x, Cache* cache = nullptr) const {
        MatX<Scalar> h = x;
        if (cache) {
            cache->inputs.resize(layers.size());
            cache->pre.resize(layers.size());
        }
        for (size_t l = 0; l < layers.size(); ++l) {
            MatX<Scalar> z = layers[l].weight * h;
            z.colwise() += layers[l].bias;
            if (cache) {
                cache->inputs[l] = std::move(h);
                cache->pre[l] = z;
            }
            if (l + 1 < layers.size()) {
                h = z.unaryExpr([this](Scalar v) { return v > Scalar(0) ? v : leak * v; });
            } else {
                h = std::move(z);
            }
        }
        return h;
    }

    /// Gradient with respect to the input; parameter gradients are accumulated
    /// into grads when it is non-null (sized like layers).
    MatX<Scalar> backward(const Cache& cache, const MatX<Scalar>& grad_out,
                          std::vector<DenseLayer<Scalar>>* grads = nullptr) const {
        MatX<Scalar> g = grad_out;
        for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
            if (l + 1 < static_cast<int>(layers.size()))
                g.array() *= cache.pre[l].array().unaryExpr([this](Scalar v) { return v > Scalar(0) ? Scalar(1) : leak; });
            if (grads) {
                (*grads)[l].weight.noalias() += g * cache.inputs[l].transpose();
                (*grads)[l].bias += g.rowwise().sum();
            }
            g = layers[l].weight.transpose() * g;
        }
        return g;
    }

    std::vector<DenseLayer<Scalar>> zeros_like() const {
        std::vector<DenseLayer<Scalar>> z(layers.size());
        for (size_t l = 0; l < layers.size(); ++l) {
            z[l].weight = MatX<Scalar>::Zero(layers[l].weight.rows(), layers[l].weight.cols());
            z[l].bias = VecX<Scalar>::Zero(layers[l].bias.size());
        }
        return z;
    }

    Scalar squared_weight_norm() const {
        Scalar s(0);
        for (const auto& layer : layers) s += layer.weight.squaredNorm();
        return s;
    }

    template <typename Other>
    Mlp<Other> cast() const {
        Mlp<Other> m;
        m.leak = static_cast<Other>(leak);
        for (const auto& layer : layers) m.layers.push_back({layer.weight.template cast<Other>(), layer.bias.template cast<Other>()});
        return m;
    }
};

struct VposerArch {
    int joints = 21;
    int hidden = 512;
    int latent = 32;
    double leak = 0.2;

    int input_dim() const { return 9 * joints; }
};

/// Flattened rotation blocks: entry 9j + 3r + c holds R_j(r, c).
template <typename Scalar>
Mat3<Scalar> rotation_block(const VecX<Scalar>& flat, int j) {
    return Eigen::Map<const Eigen::Matrix<Scalar, 3, 3, Eigen::RowMajor>>(flat.data() + 9 * j);
}

template <typename Scalar>
void set_rotation_block(VecX<Scalar>& flat, int j, const Mat3<Scalar>& r) {
    Eigen::Map<Eigen::Matrix<Scalar, 3, 3, Eigen::RowMajor>>(flat.data() + 9 * j) = r;
}

/// Axis-angle body pose (3 values per joint) to flattened rotation blocks.
template <typename Scalar>
VecX<Scalar> pose_to_rotations(const VecX<Scalar>& pose) {
    const int joints = static_cast<int>(pose.size() / 3);
    VecX<Scalar> flat(9 * joints);
    for (int j = 0; j < joints; ++j) set_rotation_block<Scalar>(flat, j, rodrigues<Scalar>(pose.template segment<3>(3 * j)));
    return flat;
}

/// Variational autoencoder over body-local joint rotations.
template <typename Scalar>
class Vposer {
public:
    struct Encoding {
        VecX<Scalar> mu;
        VecX<Scalar> log_sigma;
    };

    struct Decoding {
        VecX<Scalar> raw;  // decoder output, losses are taken on this
        std::vector<RotationProjection<Scalar>> projected;
        typename Mlp<Scalar>::Cache cache;

        std::vector<Mat3<Scalar>> rotations() const {
            std::vector<Mat3<Scalar>> r;
            for (const auto& p : projected) r.push_back(p.rotation);
            return r;
        }
        VecX<Scalar> axis_angle() const {
            VecX<Scalar> out(3 * projected.size());
            for (size_t j = 0; j < projected.size(); ++j) out.template segment<3>(3 * j) = log_map<Scalar>(projected[j].rotation);
            return out;
        }
    };

    VposerArch arch;
    Mlp<Scalar> encoder;  // input_dim -> hidden -> hidden -> 2 * latent (mu, log sigma)
    Mlp<Scalar> decoder;  // latent -> hidden -> hidden -> input_dim

    int latent_dim() const { return arch.latent; }

    Encoding encode(const VecX<Scalar>& rotations) const {
        if (rotations.size() != arch.input_dim()) throw DimensionMismatch("vposer encode: input size");
        const MatX<Scalar> out = encoder.forward(rotations);
        if (!out.allFinite()) throw NumericError("vposer encode: non-finite activations");
        return {out.col(0).head(arch.latent), out.col(0).tail(arch.latent)};
    }

    /// z = mu + sigma * eps.
    VecX<Scalar> sample(const Encoding& e, const VecX<Scalar>& eps) const {
        return e.mu + (e.log_sigma.array().exp() * eps.array()).matrix();
    }

    Decoding decode(const VecX<Scalar>& z) const {
        if (z.size() != arch.latent) throw DimensionMismatch("vposer decode: latent size");
        Decoding d;
        d.raw = decoder.forward(z, &d.cache).col(0);
        d.projected.reserve(arch.joints);
        for (int j = 0; j < arch.joints; ++j) d.projected.push_back(nearest_rotation<Scalar>(rotation_block<Scalar>(d.raw, j)));
        return d;
    }

    /// dL/dz given dL/d(projected rotation) of every joint.
    VecX<Scalar> decode_vjp(const Decoding& d, const std::vector<Mat3<Scalar>>& grad_rot) const {
        VecX<Scalar> g_raw(arch.input_dim());
        for (int j = 0; j < arch.joints; ++j)
            set_rotation_block<Scalar>(g_raw, j, nearest_rotation_vjp<Scalar>(d.projected[j], grad_rot[j]));
        return decoder.backward(d.cache, g_raw).col(0);
    }

    Scalar squared_weight_norm() const { return encoder.squared_weight_norm() + decoder.squared_weight_norm(); }

    template <typename Other>
    Vposer<Other> cast() const {
        Vposer<Other> v;
        v.arch = arch;
        v.encoder = encoder.template cast<Other>();
        v.decoder = decoder.template cast<Other>();
        return v;
    }
};

/// Untrained network with He-initialized weights and small initial posterior variances.
Vposer<float> make_vposer(const VposerArch& arch, std::uint64_t seed);

ArrayStore vposer_to_store(const Vposer<float>& model);
Vposer<float> vposer_from_store(const ArrayStore& store);

/// Loss weights c1..c5 for KL, reconstruction, orthonormality, unit
/// determinant and weight decay.
struct VaeLossWeights {
    double kl = 1.0;
    double rec = 4.0;
    double orth = 1.0;
    double det1 = 1.0;
    double reg = 1e-4;

    void validate() const;
};

struct VaeLosses {
    double total = 0.0;
    double kl = 0.0;
    double rec = 0.0;
    double orth = 0.0;
    double det1 = 0.0;
    double reg = 0.0;
};

/// Gradients of the batch-averaged losses with respect to the network outputs.
template <typename Scalar>
struct VaeLossGrad {
    MatX<Scalar> raw;
    MatX<Scalar> mu;
    MatX<Scalar> log_sigma;
};

/// Losses of a batch (one sample per column), averaged over the batch.
/// reg is the squared weight norm passed in. Gradients are written when
/// grad is non-null.
template <typename Scalar>
VaeLosses vae_losses(const MatX<Scalar>& target, const MatX<Scalar>& raw, const MatX<Scalar>& mu,
                     const MatX<Scalar>& log_sigma, double weight_norm_sq, const VaeLossWeights& w,
                     VaeLossGrad<Scalar>* grad = nullptr) {
    const Eigen::Index batch = target.cols();
    const int joints = static_cast<int>(target.rows() / 9);
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(batch);
    VaeLosses l;
    if (grad) {
        grad->raw = MatX<Scalar>::Zero(raw.rows(), batch);
        grad->mu = MatX<Scalar>::Zero(mu.rows(), batch);
        grad->log_sigma = MatX<Scalar>::Zero(log_sigma.rows(), batch);
    }
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (Eigen::Index i = 0; i < mu.rows(); ++i) {
            const Scalar m = mu(i, b), s = log_sigma(i, b);
            const Scalar var = std::exp(Scalar(2) * s);
            l.kl += 0.5 * static_cast<double>(m * m + var - Scalar(1) - Scalar(2) * s);
            if (grad) {
                grad->mu(i, b) = static_cast<Scalar>(w.kl) * m * inv_b;
                grad->log_sigma(i, b) = static_cast<Scalar>(w.kl) * (var - Scalar(1)) * inv_b;
            }
        }
        for (int j = 0; j < joints; ++j) {
            using RowMat = Eigen::Matrix<Scalar, 3, 3, Eigen::RowMajor>;
            const Mat3<Scalar> r = Eigen::Map<const RowMat>(target.col(b).data() + 9 * j);
            const Mat3<Scalar> rh = Eigen::Map<const RowMat>(raw.col(b).data() + 9 * j);
            const Mat3<Scalar> diff = rh - r;
            const Mat3<Scalar> a = rh * rh.transpose() - Mat3<Scalar>::Identity();
            const Scalar det = rh.determinant();
            l.rec += static_cast<double>(diff.squaredNorm());
            l.orth += static_cast<double>(a.squaredNorm());
            l.det1 += static_cast<double>(std::abs(det - Scalar(1)));
            if (grad) {
                Mat3<Scalar> cof;
                cof.col(0) = rh.col(1).cross(rh.col(2));
                cof.col(1) = rh.col(2).cross(rh.col(0));
                cof.col(2) = rh.col(0).cross(rh.col(1));
                const Scalar sgn = det > Scalar(1) ? Scalar(1) : (det < Scalar(1) ? Scalar(-1) : Scalar(0));
                const Mat3<Scalar> g = (static_cast<Scalar>(2 * w.rec) * diff +
                                        static_cast<Scalar>(4 * w.orth) * a * rh + static_cast<Scalar>(w.det1) * sgn * cof) *
                                       inv_b;
                Eigen::Map<RowMat>(grad->raw.col(b).data() + 9 * j) = g;
            }
        }
    }
    l.kl /= static_cast<double>(batch);
    l.rec /= static_cast<double>(batch);
    l.orth /= static_cast<double>(batch);
    l.det1 /= static_cast<double>(batch);
    l.reg = weight_norm_sq;
    l.total = w.kl * l.kl + w.rec * l.rec + w.orth * l.orth + w.det1 * l.det1 + w.reg * l.reg;
    return l;
}

/// ||z||^2 with gradient 2z.
template <typename Scalar>
Scalar latent_prior(const VecX<Scalar>& z, VecX<Scalar>* grad = nullptr) {
    if (grad) *grad = Scalar(2) * z;
    return z.squaredNorm();
}

struct VposerTrainConfig {
    VposerArch arch;
    VaeLossWeights weights;
    int epochs = 50;
    int batch_size = 128;
    double learning_rate = 1e-3;
    double lr_decay = 0.96;  // per epoch
    double validation_fraction = 0.06;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;  // 0 is the untrained network
    double train_total = 0.0;
    VaeLosses validation;
};

struct VposerTrainResult {
    Vposer<float> model;  // best validation checkpoint
    std::vector<EpochRecord> curve;
    int best_epoch = 0;
    int train_size = 0;
    int validation_size = 0;
};

/// Validation losses with z = mu (no sampling); rows of poses are axis-angle body poses.
VaeLosses evaluate_vposer(const Vposer<float>& model, const MatX<double>& poses, const VaeLossWeights& weights);

/// Minibatch Adam on the weighted loss with reparameterized sampling.
/// Throws InvalidArgument on an empty corpus and NumericError naming the row
/// of a non-finite pose or the epoch of a non-finite loss.
VposerTrainResult train_vposer(const MatX<double>& poses, const VposerTrainConfig& config);

}  // namespace xbody
