#include "xbody/priors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>

#include "xbody/errors.hpp"

namespace xbody {

double l2_prior(const VecX<double>& x, VecX<double>* grad) {
    if (grad) *grad = 2.0 * x;
    return x.squaredNorm();
}

const std::vector<BendComponent>& default_bend_table() {
    static const std::vector<BendComponent> table = {
        {18, 1, 1.0},   // left elbow
        {19, 1, -1.0},  // right elbow
        {4, 0, -1.0},   // left knee
        {5, 0, -1.0},   // right knee
    };
    return table;
}

double angle_prior(const VecX<double>& body_pose, VecX<double>* grad, const std::vector<BendComponent>& table) {
    if (table.empty()) throw ConfigError("angle prior: empty bend table");
    if (grad) *grad = VecX<double>::Zero(body_pose.size());
    double e = 0.0;
    for (const auto& c : table) {
        const int idx = 3 * (c.joint - 1) + c.axis;
        if (c.joint < 1 || c.axis < 0 || c.axis > 2 || idx >= body_pose.size())
            throw ConfigError("angle prior: bend table entry outside the body pose");
        const double v = std::exp(c.sign * body_pose[idx]);
        e += v;
        if (grad) (*grad)[idx] += c.sign * v;
    }
    return e;
}

namespace {

double log_sum_exp(const VecX<double>& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

GmmPrior::GmmPrior(VecX<double> weights, MatX<double> means, std::vector<MatX<double>> factors)
    : weights_(std::move(weights)), means_(std::move(means)), factors_(std::move(factors)) {
    prepare();
}

void GmmPrior::prepare() {
    const int k = static_cast<int>(weights_.size());
    const int d = static_cast<int>(means_.cols());
    if (k == 0 || means_.rows() != k || static_cast<int>(factors_.size()) != k)
        throw DimensionMismatch("gmm: inconsistent component counts");
    if ((weights_.array() <= 0.0).any() || std::abs(weights_.sum() - 1.0) > 1e-6)
        throw InvalidArgument("gmm: weights must be positive and sum to 1");
    log_norm_.resize(k);
    for (int c = 0; c < k; ++c) {
        const MatX<double>& l = factors_[c];
        if (l.rows() != d || l.cols() != d) throw DimensionMismatch("gmm: precision factor shape");
        if (!l.isLowerTriangular(0.0) || (l.diagonal().array() <= 0.0).any())
            throw InvalidArgument("gmm: precision factors must be lower triangular with positive diagonal");
        log_norm_[c] = std::log(weights_[c]) + l.diagonal().array().log().sum() -
                       0.5 * d * std::log(2.0 * std::numbers::pi);
    }
    shift_ = log_sum_exp(log_norm_);
}

double GmmPrior::log_density(const VecX<double>& x) const {
    if (x.size() != dim()) throw DimensionMismatch("gmm: input dimension");
    VecX<double> ll(components());
    for (int c = 0; c < components(); ++c) {
        const VecX<double> z = factors_[c].transpose() * (x - means_.row(c).transpose());
        ll[c] = log_norm_[c] - 0.5 * z.squaredNorm();
    }
    return log_sum_exp(ll);
}

double GmmPrior::energy(const VecX<double>& x, VecX<double>* grad) const {
    if (x.size() != dim()) throw DimensionMismatch("gmm: input dimension");
    const int k = components();
    VecX<double> ll(k);
    std::vector<VecX<double>> pd(k);  // P_k (x - mu_k)
    for (int c = 0; c < k; ++c) {
        const VecX<double> diff = x - means_.row(c).transpose();
        const VecX<double> z = factors_[c].transpose() * diff;
        ll[c] = log_norm_[c] - 0.5 * z.squaredNorm();
        if (grad) pd[c] = factors_[c] * z;
    }
    const double lse = log_sum_exp(ll);
    if (grad) {
        grad->setZero(x.size());
        for (int c = 0; c < k; ++c) *grad += std::exp(ll[c] - lse) * pd[c];
    }
    return std::max(0.0, shift_ - lse);
}

GmmPrior GmmPrior::fit(const MatX<double>& data, int k, std::uint64_t seed, int iterations, double ridge) {
    const Eigen::Index n = data.rows();
    const Eigen::Index d = data.cols();
    if (k < 1 || n < k) throw InvalidArgument("gmm fit: need at least as many samples as components");
    if (!data.allFinite()) throw NumericError("gmm fit: non-finite sample");
    std::mt19937_64 rng(seed);

    // k-means++ seeding.
    MatX<double> means(k, d);
    means.row(0) = data.row(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
    VecX<double> dist = (data.rowwise() - means.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        std::discrete_distribution<Eigen::Index> pick(dist.data(), dist.data() + n);
        means.row(c) = data.row(pick(rng));
        dist = dist.cwiseMin((data.rowwise() - means.row(c)).rowwise().squaredNorm());
    }

    VecX<double> weights = VecX<double>::Constant(k, 1.0 / k);
    MatX<double> cov0 = MatX<double>::Zero(d, d);
    {
        const MatX<double> centred = data.rowwise() - data.colwise().mean();
        cov0 = centred.transpose() * centred / static_cast<double>(n);
        cov0.diagonal().array() += ridge;
    }
    std::vector<MatX<double>> factors(k);
    auto factor_of = [&](const MatX<double>& cov) {
        const MatX<double> precision = cov.llt().solve(MatX<double>::Identity(d, d));
        Eigen::LLT<MatX<double>> llt(0.5 * (precision + precision.transpose()));
        if (llt.info() != Eigen::Success) throw NumericError("gmm fit: covariance is not positive definite");
        return MatX<double>(llt.matrixL());
    };
    for (int c = 0; c < k; ++c) factors[c] = factor_of(cov0);

    MatX<double> resp(n, k);
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < iterations; ++it) {
        GmmPrior cur(weights, means, factors);
        MatX<double> ll(n, k);
        for (int c = 0; c < k; ++c) {
            const MatX<double> z = (data.rowwise() - means.row(c)) * factors[c];
            ll.col(c) = (cur.log_norm_[c] - 0.5 * z.rowwise().squaredNorm().array()).matrix();
        }
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double lse = log_sum_exp(ll.row(i).transpose());
            total += lse;
            resp.row(i) = (ll.row(i).array() - lse).exp();
        }
        const VecX<double> nk = resp.colwise().sum().transpose();
        for (int c = 0; c < k; ++c) {
            const double mass = std::max(nk[c], 1e-10);
            weights[c] = mass / static_cast<double>(n);
            means.row(c) = resp.col(c).transpose() * data / mass;
            const MatX<double> centred = data.rowwise() - means.row(c);
            const MatX<double> weighted = centred.array().colwise() * resp.col(c).array();
            MatX<double> cov = centred.transpose() * weighted / mass;
            cov.diagonal().array() += ridge;
            factors[c] = factor_of(cov);
        }
        weights /= weights.sum();
        if (std::abs(total - prev) <= 1e-8 * std::abs(total)) break;
        prev = total;
    }
    return GmmPrior(weights, means, factors);
}

ArrayStore GmmPrior::to_store() const {
    ArrayStore s;
    s.meta()["kind"] = "gmm-prior";
    s.put_vector("weights", weights_);
    s.put_matrix("means", means_);
    for (int c = 0; c < components(); ++c) s.put_matrix("precision_factor_" + std::to_string(c), factors_[c]);
    return s;
}

GmmPrior GmmPrior::from_store(const ArrayStore& s) {
    if (s.meta().value("kind", std::string()) != "gmm-prior") throw ParseError("asset store does not hold a GMM");
    VecX<double> w = s.vector("weights");
    // Weights were narrowed to float32; restore an exact partition.
    w /= w.sum();
    MatX<double> means = s.matrix("means");
    std::vector<MatX<double>> factors;
    for (Eigen::Index c = 0; c < w.size(); ++c)
        factors.push_back(MatX<double>(s.matrix("precision_factor_" + std::to_string(c)).triangularView<Eigen::Lower>()));
    return GmmPrior(std::move(w), std::move(means), std::move(factors));
}

}  // namespace xbody
