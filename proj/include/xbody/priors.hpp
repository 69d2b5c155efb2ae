#pragma once

#include <cstdint>
#include <vector>

#include "xbody/asset_store.hpp"
#include "xbody/types.hpp"

namespace xbody {

/// ||x||^2, gradient 2x written when grad is non-null.
double l2_prior(const VecX<double>& x, VecX<double>* grad = nullptr);

/// One penalized bending component: axis `axis` of body joint `joint`
/// (skeleton index, 1..21), with `sign` chosen so natural flexion is negative.
struct BendComponent {
    int joint;
    int axis;
    double sign;
};

/// Elbows bend about y (left +, right -), knees about x (both -).
const std::vector<BendComponent>& default_bend_table();

/// sum exp(sign * theta) over the bending components of a 63-value body pose.
/// Throws ConfigError on an empty table or an out-of-range entry.
double angle_prior(const VecX<double>& body_pose, VecX<double>* grad = nullptr,
                   const std::vector<BendComponent>& table = default_bend_table());

/// Gaussian mixture over body poses with precision P_k = L_k L_k^T.
class GmmPrior {
public:
    GmmPrior() = default;
    GmmPrior(VecX<double> weights, MatX<double> means, std::vector<MatX<double>> precision_factors);

    int components() const { return static_cast<int>(weights_.size()); }
    int dim() const { return static_cast<int>(means_.cols()); }
    const VecX<double>& weights() const { return weights_; }
    const MatX<double>& means() const { return means_; }  // one component per row
    const std::vector<MatX<double>>& precision_factors() const { return factors_; }

    /// -log p(x) + log sum_k w_k c_k, where c_k is the peak density of
    /// component k. Non-negative by construction.
    double energy(const VecX<double>& x, VecX<double>* grad = nullptr) const;

    /// Unnormalized log density log p(x) (kept for reference checks).
    double log_density(const VecX<double>& x) const;

    /// EM on the rows of data, k-means++ seeding, covariances regularized by
    /// `ridge` on the diagonal.
    static GmmPrior fit(const MatX<double>& data, int components, std::uint64_t seed, int iterations = 100,
                        double ridge = 1e-4);

    ArrayStore to_store() const;
    static GmmPrior from_store(const ArrayStore& store);

private:
    void prepare();

    VecX<double> weights_;
    MatX<double> means_;
    std::vector<MatX<double>> factors_;
    VecX<double> log_norm_;  // log w_k + log det L_k - D/2 log(2 pi)
    double shift_ = 0.0;     // log sum_k exp(log_norm_k)
};

}  // namespace xbody
