#pragma once

#include <Eigen/Dense>

#include <vector>

namespace skp {

// Per-attribute polynomial over the normalized line parameter t in [0, 1].
// coeffs is (degree + 1) x k in ascending powers; column j holds component j.
struct PolyModel {
    int degree = 0;
    Eigen::MatrixXd coeffs;

    int components() const { return static_cast<int>(coeffs.cols()); }
    Eigen::VectorXd evaluate(double t) const;
};

// Least-squares fit of a fixed-degree polynomial to k-component samples.
// Rank deficiency (repeated t, too few points) resolves to the minimum-norm
// solution. Throws std::invalid_argument on empty or mismatched input.
PolyModel fit_poly(const std::vector<double>& t,
                   const std::vector<Eigen::VectorXd>& values, int degree);

// Degree grid search over [1, min(10, n-1)]: scores by leave-one-out RMSE
// when n >= 12, training RMSE otherwise, and returns the smallest degree
// whose score is within 1% (relative) of the minimum.
int select_degree(const std::vector<double>& t, const std::vector<Eigen::VectorXd>& values);

} // namespace skp
