#include "skp/polyfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace skp {

namespace {

Eigen::MatrixXd vandermonde(const std::vector<double>& t, int degree) {
    Eigen::MatrixXd v(t.size(), degree + 1);
    for (size_t i = 0; i < t.size(); ++i) {
        double p = 1.0;
        for (int j = 0; j <= degree; ++j) {
            v(static_cast<Eigen::Index>(i), j) = p;
            p *= t[i];
        }
    }
    return v;
}

Eigen::MatrixXd stack_values(const std::vector<Eigen::VectorXd>& values) {
    auto k = values[0].size();
    Eigen::MatrixXd y(values.size(), k);
    for (size_t i = 0; i < values.size(); ++i) {
        if (values[i].size() != k) {
            throw std::invalid_argument("fit_poly: inconsistent component counts");
        }
        y.row(static_cast<Eigen::Index>(i)) = values[i].transpose();
    }
    return y;
}

} // namespace

Eigen::VectorXd PolyModel::evaluate(double t) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(coeffs.cols());
    for (Eigen::Index j = coeffs.rows() - 1; j >= 0; --j) {
        out = out * t + coeffs.row(j).transpose();
    }
    return out;
}

PolyModel fit_poly(const std::vector<double>& t,
                   const std::vector<Eigen::VectorXd>& values, int degree) {
    if (t.empty() || t.size() != values.size()) {
        throw std::invalid_argument("fit_poly: empty or mismatched input");
    }
    if (degree < 0 || degree > 10) {
        throw std::invalid_argument("fit_poly: degree out of range");
    }
    Eigen::MatrixXd v = vandermonde(t, degree);
    Eigen::MatrixXd y = stack_values(values);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
    PolyModel model;
    model.degree = degree;
    model.coeffs = svd.solve(y);
    return model;
}

int select_degree(const std::vector<double>& t, const std::vector<Eigen::VectorXd>& values) {
    if (t.size() < 2 || t.size() != values.size()) {
        throw std::invalid_argument("select_degree: need at least two samples");
    }
    const auto n = static_cast<Eigen::Index>(t.size());
    const auto k = values[0].size();
    const int max_degree = std::min<int>(10, static_cast<int>(t.size()) - 1);
    const bool use_loo = t.size() >= 12;

    Eigen::MatrixXd y = stack_values(values);
    double value_rms = std::sqrt(y.squaredNorm() / static_cast<double>(n * k));

    std::vector<double> scores(static_cast<size_t>(max_degree) + 1, 0.0);
    for (int d = 1; d <= max_degree; ++d) {
        Eigen::MatrixXd v = vandermonde(t, d);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Eigen::MatrixXd c = svd.solve(y);
        Eigen::MatrixXd resid = y - v * c;

        double sum = 0.0;
        if (use_loo) {
            // Leave-one-out residual r_i / (1 - h_ii), with the hat diagonal
            // h_ii from the thin-U factor restricted to retained directions.
            const auto& u = svd.matrixU();
            const auto& s = svd.singularValues();
            double tol = std::max(v.rows(), v.cols()) * s(0) *
                         std::numeric_limits<double>::epsilon();
            Eigen::Index rank = 0;
            while (rank < s.size() && s(rank) > tol) ++rank;
            for (Eigen::Index i = 0; i < n; ++i) {
                double h = u.row(i).head(rank).squaredNorm();
                double denom = std::max(1.0 - h, 1e-8);
                sum += (resid.row(i) / denom).squaredNorm();
            }
        } else {
            sum = resid.squaredNorm();
        }
        scores[static_cast<size_t>(d)] = std::sqrt(sum / static_cast<double>(n * k));
    }

    double best = scores[1];
    for (int d = 2; d <= max_degree; ++d) best = std::min(best, scores[static_cast<size_t>(d)]);
    // Absolute floor keeps exactly-representable data (score ~ machine eps)
    // from preferring a higher degree over an equally exact lower one.
    double threshold = 1.01 * best + 1e-12 * (1.0 + value_rms);
    for (int d = 1; d <= max_degree; ++d) {
        if (scores[static_cast<size_t>(d)] <= threshold) return d;
    }
    return max_degree;
}

} // namespace skp
