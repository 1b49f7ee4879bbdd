#pragma once

#include <failstack/cart.hpp>

#include <Eigen/Dense>

#include <json.hpp>

namespace failstack {

namespace linear_detail {

inline Eigen::MatrixXd to_matrix(const ColumnView& x) {
  const auto n = static_cast<Eigen::Index>(view_rows(x));
  Eigen::MatrixXd m(n, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j)
    for (Eigen::Index i = 0; i < n; ++i) m(i, static_cast<Eigen::Index>(j)) = x[j][static_cast<std::size_t>(i)];
  return m;
}

}  // namespace linear_detail

// L2-regularized least squares solved in closed form on centered data:
// (Xc'Xc + alpha I) w = Xc'yc, intercept = mean(y) - w . mean(X).
struct RidgeModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double alpha = 1.0;

  static RidgeModel fit(const ColumnView& x, std::span<const double> y, double alpha) {
    if (alpha < 0.0) throw Error("ridge: alpha must be >= 0");
    if (x.empty() || y.empty()) throw Error("ridge: empty input");
    for (const auto& c : x)
      if (c.size() != y.size()) throw Error("ridge: feature/target length mismatch");
    Eigen::MatrixXd xm = linear_detail::to_matrix(x);
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    const Eigen::RowVectorXd xbar = xm.colwise().mean();
    const double ybar = yv.mean();
    xm.rowwise() -= xbar;
    yv.array() -= ybar;

    Eigen::MatrixXd a = xm.transpose() * xm;
    a.diagonal().array() += alpha;
    const Eigen::VectorXd rhs = xm.transpose() * yv;
    Eigen::VectorXd w;
    if (alpha == 0.0) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xm);
      if (qr.rank() < xm.cols()) throw Error("ridge: singular system (alpha = 0 and X is rank deficient)");
      w = qr.solve(yv);
    } else {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
      if (ldlt.info() != Eigen::Success) throw Error("ridge: factorization failed");
      w = ldlt.solve(rhs);
    }
    RidgeModel m;
    m.alpha = alpha;
    m.weights.assign(w.data(), w.data() + w.size());
    m.intercept = ybar - xbar.dot(w);
    return m;
  }

  double predict_row(const ColumnView& x, std::size_t row) const {
    double s = intercept;
    for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * x[j][row];
    return s;
  }

  std::vector<double> predict(const ColumnView& x) const {
    if (x.size() != weights.size()) throw Error("ridge: feature count mismatch");
    std::vector<double> out(view_rows(x));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = predict_row(x, i);
    return out;
  }

  friend bool operator==(const RidgeModel&, const RidgeModel&) = default;
};

inline void to_json(nlohmann::ordered_json& j, const RidgeModel& m) {
  j = nlohmann::ordered_json{{"weights", m.weights}, {"intercept", m.intercept}, {"alpha", m.alpha}};
}
inline void from_json(const nlohmann::ordered_json& j, RidgeModel& m) {
  m.weights = j.at("weights").get<std::vector<double>>();
  m.intercept = j.at("intercept").get<double>();
  m.alpha = j.at("alpha").get<double>();
}

// Binary logistic regression minimizing (1/C) * 0.5 * |w|^2 + sum of log-loss
// (intercept unpenalized) by damped Newton iterations.
struct LogisticModel {
  std::vector<std::string> features;
  std::vector<double> weights;
  double intercept = 0.0;
  double C = 1.0;
  bool converged = false;
  std::size_t iterations = 0;

  static LogisticModel fit(const ColumnView& x, std::span<const int> y, double C, double tol = 1e-8,
                           std::size_t max_iter = 100, std::vector<std::string> names = {}) {
    check_training_input(x, y, "logistic regression");
    if (!(C > 0.0)) throw Error("logistic regression: C must be > 0");
    const auto counts = class_counts(y);
    if (counts[0] == 0 || counts[1] == 0) throw Error("logistic regression: both classes must be present");
    if (names.empty()) names = default_feature_names(x.size());

    const Eigen::Index n = static_cast<Eigen::Index>(y.size());
    const Eigen::Index p = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd xa(n, p + 1);
    xa.leftCols(p) = linear_detail::to_matrix(x);
    xa.col(p).setOnes();
    Eigen::VectorXd yv(n);
    for (Eigen::Index i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)];

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
    const double inv_c = 1.0 / C;
    auto objective = [&](const Eigen::VectorXd& b) {
      const Eigen::VectorXd z = xa * b;
      double f = 0.5 * inv_c * b.head(p).squaredNorm();
      for (Eigen::Index i = 0; i < n; ++i) {
        // log(1 + e^z) - y z, evaluated stably
        const double zi = z(i);
        f += (zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi))) - yv(i) * zi;
      }
      return f;
    };

    LogisticModel m;
    m.C = C;
    m.features = std::move(names);
    double f = objective(beta);
    for (std::size_t it = 0; it < max_iter; ++it) {
      const Eigen::VectorXd z = xa * beta;
      Eigen::VectorXd prob(n), d(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        prob(i) = sigmoid(z(i));
        d(i) = prob(i) * (1.0 - prob(i));
      }
      Eigen::VectorXd grad = xa.transpose() * (prob - yv);
      grad.head(p) += inv_c * beta.head(p);
      m.iterations = it;
      if (grad.norm() <= tol) {
        m.converged = true;
        break;
      }
      Eigen::MatrixXd hess = xa.transpose() * d.asDiagonal() * xa;
      hess.diagonal().head(p).array() += inv_c;
      hess.diagonal().array() += 1e-12;
      const Eigen::VectorXd step = hess.ldlt().solve(grad);
      double t = 1.0;
      const double slope = grad.dot(step);
      Eigen::VectorXd next = beta - step;
      double fn = objective(next);
      while (fn > f - 1e-4 * t * slope && t > 1e-10) {
        t *= 0.5;
        next = beta - t * step;
        fn = objective(next);
      }
      if (t <= 1e-10) break;
      beta = next;
      f = fn;
      m.iterations = it + 1;
    }
    if (!m.converged) {
      // Final gradient check after the last step.
      const Eigen::VectorXd z = xa * beta;
      Eigen::VectorXd prob(n);
      for (Eigen::Index i = 0; i < n; ++i) prob(i) = sigmoid(z(i));
      Eigen::VectorXd grad = xa.transpose() * (prob - yv);
      grad.head(p) += inv_c * beta.head(p);
      m.converged = grad.norm() <= tol;
    }
    m.weights.assign(beta.data(), beta.data() + p);
    m.intercept = beta(p);
    return m;
  }

  double decision(const ColumnView& x, std::size_t row) const {
    double s = intercept;
    for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * x[j][row];
    return s;
  }

  std::vector<double> predict_proba(const ColumnView& x) const {
    if (x.size() != weights.size()) throw Error("logistic regression: feature count mismatch");
    std::vector<double> out(view_rows(x));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(decision(x, i));
    return out;
  }

  Labels predict(const ColumnView& x) const {
    const auto p = predict_proba(x);
    Labels out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > 0.5 ? 1 : 0;
    return out;
  }
};

inline void to_json(nlohmann::ordered_json& j, const LogisticModel& m) {
  j = nlohmann::ordered_json{{"features", m.features},   {"weights", m.weights},
                             {"intercept", m.intercept}, {"C", m.C},
                             {"converged", m.converged}, {"iterations", m.iterations}};
}
inline void from_json(const nlohmann::ordered_json& j, LogisticModel& m) {
  m.features = j.at("features").get<std::vector<std::string>>();
  m.weights = j.at("weights").get<std::vector<double>>();
  m.intercept = j.at("intercept").get<double>();
  m.C = j.at("C").get<double>();
  m.converged = j.at("converged").get<bool>();
  m.iterations = j.at("iterations").get<std::size_t>();
}

}  // namespace failstack
