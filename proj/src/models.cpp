#include "qsfusion/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "qsfusion/errors.hpp"

namespace qsfusion {

namespace {

constexpr double kPi = 3.14159265358979323846;

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

void check_shapes(const Eigen::MatrixXd& X, std::span<const double> y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw std::invalid_argument("row count does not match targets");
  if (!X.allFinite()) throw std::invalid_argument("non-finite feature value");
  for (double v : y)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite target value");
}

Eigen::MatrixXd pairwise_sq_dist(const Eigen::MatrixXd& X) {
  const Eigen::VectorXd norms = X.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * X * X.transpose();
  d.colwise() += norms;
  d.rowwise() += norms.transpose();
  return d.cwiseMax(0.0);
}

template <typename Rng>
void fisher_yates(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

// Shuffles the first `count` entries only.
template <typename Rng>
void fisher_yates_prefix(std::vector<std::size_t>& v, std::size_t count, Rng& rng) {
  for (std::size_t i = count; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

// Minimizes 0.5|w|^2 + C sum h_mu(|y - Zw| - eps), where h_mu is the eps-insensitive
// loss with a quadratic corner of width mu, by Newton steps while mu shrinks. Used only
// to guess which points end up outside, inside and on the tube edge. At a stationary
// point w = Z^T coef with |coef| <= C, so coef is also a feasible dual whose gap is at
// most C*mu/4 per corner point. `accept` sees coef after each fine smoothing level and
// ends the search by returning true.
template <typename Mat, typename Accept>
bool smoothed_svr_newton(const Mat& Z, const Eigen::VectorXd& y, double C, double eps, Eigen::VectorXd& w,
                         Accept&& accept) {
  const Eigen::Index n = Z.rows();
  const Eigen::Index p = Z.cols();
  w = Eigen::VectorXd::Zero(p);
  auto objective = [&](const Eigen::VectorXd& v, double mu) {
    const Eigen::VectorXd r = y - Z * v;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = std::abs(r(i)) - eps;
      if (t > mu) loss += t - 0.5 * mu;
      else if (t > 0.0) loss += 0.5 * t * t / mu;
    }
    return 0.5 * v.squaredNorm() + C * loss;
  };
  std::vector<Eigen::Index> corner;
  for (double mu = 1.0; mu >= 1e-8; mu *= 0.1) {
    Eigen::VectorXd coef;
    for (int it = 0; it < 100; ++it) {
      const Eigen::VectorXd r = y - Z * w;
      coef = Eigen::VectorXd::Zero(n);
      corner.clear();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = std::abs(r(i)) - eps;
        if (t <= 0.0) continue;
        const double sgn = r(i) > 0.0 ? 1.0 : -1.0;
        if (t > mu) {
          coef(i) = C * sgn;
        } else {
          coef(i) = C * sgn * (t / mu);
          corner.push_back(i);
        }
      }
      const Eigen::VectorXd grad = w - Z.transpose() * coef;
      if (grad.norm() <= 1e-9 * std::max(1.0, w.norm())) break;
      Eigen::MatrixXd ZM(static_cast<Eigen::Index>(corner.size()), p);
      for (std::size_t k = 0; k < corner.size(); ++k) ZM.row(static_cast<Eigen::Index>(k)) = Z.row(corner[k]);
      Eigen::MatrixXd H = Eigen::MatrixXd::Identity(p, p);
      H.selfadjointView<Eigen::Lower>().rankUpdate(ZM.transpose(), C / mu);
      const Eigen::VectorXd step = H.selfadjointView<Eigen::Lower>().ldlt().solve(-grad);
      const double f0 = objective(w, mu);
      const double slope = grad.dot(step);
      double a = 1.0;
      while (a > 1e-12 && objective(w + a * step, mu) > f0 + 1e-4 * a * slope) a *= 0.5;
      if (a <= 1e-12) break;
      w += a * step;
      if (a * step.norm() <= 1e-13 * std::max(1.0, w.norm())) break;
    }
    if (mu <= 1e-3 && accept(coef)) return true;
  }
  return false;
}

}  // namespace

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Constant: return "constant";
    case ModelKind::SvrLinear: return "svr_linear";
    case ModelKind::GpRbf: return "gp_rbf";
    case ModelKind::LanguageSplit: return "language_split";
  }
  return "constant";
}

ModelKind model_kind_from_string(std::string_view s) {
  for (ModelKind k : {ModelKind::Constant, ModelKind::SvrLinear, ModelKind::GpRbf, ModelKind::LanguageSplit}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown model kind '" + std::string(s) + "'");
}

std::vector<double> RegressionModel::predict(const Eigen::MatrixXd& X, std::span<const std::string> langs) const {
  std::vector<double> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const std::string_view lang = langs.empty() ? std::string_view{} : std::string_view(langs[static_cast<std::size_t>(r)]);
    out[static_cast<std::size_t>(r)] = predict_one(X.row(r), lang);
  }
  return out;
}

// ---- constant ----

nlohmann::json ConstantModel::to_json() const { return {{"kind", "constant"}, {"value", value_}}; }

std::unique_ptr<ConstantModel> train_constant(std::span<const double> y) {
  if (y.empty()) throw std::invalid_argument("train_constant: empty targets");
  return std::make_unique<ConstantModel>(mean_of(y));
}

// ---- linear SVR ----

double SvrLinearModel::predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x, std::string_view) const {
  return intercept_ + x.dot(weights_);
}

nlohmann::json SvrLinearModel::to_json() const {
  return {{"kind", "svr_linear"},
          {"C", options_.C},
          {"epsilon", options_.epsilon},
          {"intercept", intercept_},
          {"weights", std::vector<double>(weights_.data(), weights_.data() + weights_.size())},
          {"converged", converged_},
          {"duality_gap", gap_},
          {"epochs", epochs_}};
}

std::unique_ptr<SvrLinearModel> train_svr_linear(const Eigen::MatrixXd& X, std::span<const double> y,
                                                 const SvrOptions& options) {
  check_shapes(X, y);
  if (X.rows() < 2) throw std::invalid_argument("train_svr_linear: need at least two rows");
  if (!(options.C > 0.0) || options.epsilon < 0.0) throw std::invalid_argument("train_svr_linear: bad C/epsilon");

  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  const double y_mean = mean_of(y);
  // C and epsilon act on the standardized target, so the fit does not depend on the unit of y.
  const double y_sd = std::sqrt(variance_of(y));
  const double y_scale = y_sd > 1e-12 ? y_sd : 1.0;
  const Eigen::RowVectorXd x_mean = X.colwise().mean();

  // Centered design with a trailing bias column of ones.
  // Row-major: the solver touches one row at a time.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Z(n, d + 1);
  Z.leftCols(d) = X.rowwise() - x_mean;
  Z.col(d).setOnes();
  Eigen::VectorXd yc(n);
  for (Eigen::Index i = 0; i < n; ++i) yc(i) = (y[static_cast<std::size_t>(i)] - y_mean) / y_scale;

  const double C = options.C;
  const double eps = options.epsilon;
  const Eigen::VectorXd qdiag = Z.rowwise().squaredNorm();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);

  auto duality_gap = [&](double& primal) {
    const Eigen::VectorXd resid = yc - Z * w;
    const double wsq = w.squaredNorm();
    const double loss = (resid.array().abs() - eps).max(0.0).sum();
    primal = 0.5 * wsq + C * loss;
    const double dual = beta.dot(yc) - eps * beta.lpNorm<1>() - 0.5 * wsq;
    return primal - dual;
  };

  // Partition guess from residuals: outside the tube -> at the bound, inside -> zero,
  // within `band` of the edge -> free. Free duals solve
  //   Q_FF b = y_F - eps*s_F - Q_F,rest beta_rest;
  // duals that come out past a bound or with the wrong sign are pinned and it is re-solved.
  auto solve_partition = [&](const Eigen::VectorXd& resid, double band, Eigen::VectorXd& cand) {
    cand = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::Index> freeset;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double excess = std::abs(resid(i)) - eps;
      if (std::abs(excess) <= band) {
        freeset.push_back(i);
      } else if (excess > 0.0) {
        cand(i) = resid(i) > 0.0 ? C : -C;
      }
    }
    if (freeset.size() > static_cast<std::size_t>(2 * (d + 1))) return false;
    for (int round = 0; round < 50; ++round) {
      const auto nf = static_cast<Eigen::Index>(freeset.size());
      if (nf == 0) return true;
      Eigen::MatrixXd ZF(nf, d + 1);
      Eigen::VectorXd rhs(nf);
      for (Eigen::Index k = 0; k < nf; ++k) {
        const Eigen::Index i = freeset[static_cast<std::size_t>(k)];
        ZF.row(k) = Z.row(i);
        rhs(k) = yc(i) - (resid(i) > 0.0 ? eps : -eps);
        cand(i) = 0.0;
      }
      rhs -= ZF * (Z.transpose() * cand);
      const Eigen::VectorXd bf = (ZF * ZF.transpose()).completeOrthogonalDecomposition().solve(rhs);
      if (!bf.allFinite()) return false;
      std::vector<Eigen::Index> keep;
      for (Eigen::Index k = 0; k < nf; ++k) {
        const Eigen::Index i = freeset[static_cast<std::size_t>(k)];
        const double sgn = resid(i) > 0.0 ? 1.0 : -1.0;
        const double v = sgn * bf(k);
        if (v < 0.0) {
          cand(i) = 0.0;
        } else if (v > C) {
          cand(i) = sgn * C;
        } else {
          cand(i) = bf(k);
          keep.push_back(i);
        }
      }
      if (keep.size() == freeset.size()) return true;
      freeset.swap(keep);
    }
    return false;
  };

  // Candidates are accepted only when the duality gap certifies them: first the exact
  // partition solve, then the smoothed solution's own dual.
  double polished_gap = 0.0;
  auto certified = [&]() {
    double primal = 0.0;
    polished_gap = duality_gap(primal);
    return polished_gap <= options.tolerance * std::max(1.0, std::abs(primal));
  };
  auto try_polish = [&](const Eigen::VectorXd& smoothed_dual) {
    const Eigen::VectorXd w_save = w;
    const Eigen::VectorXd resid = yc - Z * w;
    Eigen::VectorXd cand;
    for (const double band : {1e-2, 1e-3, 1e-4}) {
      if (!solve_partition(resid, band, cand)) continue;
      beta = cand;
      w = Z.transpose() * beta;
      if (certified()) return true;
    }
    beta = smoothed_dual;
    w = Z.transpose() * beta;
    if (certified()) return true;
    w = w_save;
    return false;
  };

  auto model = std::unique_ptr<SvrLinearModel>(new SvrLinearModel());
  model->options_ = options;
  double gap = std::numeric_limits<double>::infinity();
  std::size_t epoch = 0;
  // Shrinking: variables settled at a bound are dropped from the sweep until the
  // active set stalls. The stopping rule always uses the full duality gap.
  std::size_t active = order.size();
  double gmax_old = std::numeric_limits<double>::infinity();
  double gnorm_init = -1.0;
  // Fast path; coordinate descent below is the fallback.
  const bool polished = smoothed_svr_newton(Z, yc, C, eps, w, try_polish);
  if (polished) {
    gap = polished_gap;
    model->converged_ = true;
  } else {
    w.setZero();
    beta.setZero();
  }
  for (; !polished && epoch < options.max_epochs; ++epoch) {
    fisher_yates_prefix(order, active, rng);
    double gmax_new = 0.0;
    double gnorm = 0.0;
    for (std::size_t s_i = 0; s_i < active;) {
      const auto i = static_cast<Eigen::Index>(order[s_i]);
      const double h = qdiag(i);
      const double g = Z.row(i).dot(w) - yc(i);
      const double gp = g + eps;
      const double gn = g - eps;
      double violation = 0.0;
      bool shrink = false;
      if (beta(i) == 0.0) {
        if (gp < 0.0) violation = -gp;
        else if (gn > 0.0) violation = gn;
        else if (gp > gmax_old && gn < -gmax_old) shrink = true;
      } else if (beta(i) >= C) {
        if (gp > 0.0) violation = gp;
        else if (gp < -gmax_old) shrink = true;
      } else if (beta(i) <= -C) {
        if (gn < 0.0) violation = -gn;
        else if (gn > gmax_old) shrink = true;
      } else {
        violation = beta(i) > 0.0 ? std::abs(gp) : std::abs(gn);
      }
      if (shrink) {
        --active;
        std::swap(order[s_i], order[active]);
        continue;
      }
      gmax_new = std::max(gmax_new, violation);
      gnorm += violation;
      ++s_i;
      if (h <= 0.0) continue;
      double target;
      if (gp < h * beta(i)) {
        target = beta(i) - gp / h;
      } else if (gn > h * beta(i)) {
        target = beta(i) - gn / h;
      } else {
        target = 0.0;
      }
      target = std::clamp(target, -C, C);
      const double delta = target - beta(i);
      if (delta != 0.0) {
        beta(i) = target;
        w.noalias() += delta * Z.row(i).transpose();
      }
    }
    if (gnorm_init < 0.0) gnorm_init = gnorm;
    gmax_old = gmax_new;
    double primal = 0.0;
    gap = duality_gap(primal);
    if (gap <= options.tolerance * std::max(1.0, std::abs(primal))) {
      model->converged_ = true;
      ++epoch;
      break;
    }
    if (active < order.size() && gnorm <= 1e-3 * gnorm_init) {
      active = order.size();
      gmax_old = std::numeric_limits<double>::infinity();
    }
  }
  model->epochs_ = epoch;
  model->gap_ = gap;
  model->weights_ = y_scale * w.head(d);
  model->intercept_ = y_mean - x_mean.dot(model->weights_) + y_scale * w(d);
  return model;
}

// ---- Gaussian process ----

double squared_exponential(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
                           double length_scale, double signal_var) {
  return signal_var * std::exp(-(a - b).squaredNorm() / (2.0 * length_scale * length_scale));
}

GpHyperparameters default_gp_hyperparameters(std::span<const double> y) {
  const double v = std::max(variance_of(y), 1e-6);
  return {1.0, v, 0.1 * v};
}

double GpModel::predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x, std::string_view) const {
  const Eigen::VectorXd sq = (train_x_.rowwise() - x).rowwise().squaredNorm();
  const double scale = 1.0 / (2.0 * hp_.length_scale * hp_.length_scale);
  const Eigen::VectorXd k = hp_.signal_var * (-scale * sq.array()).exp();
  return mean_ + k.dot(alpha_);
}

nlohmann::json GpModel::to_json() const {
  return {{"kind", "gp_rbf"},
          {"length_scale", hp_.length_scale},
          {"signal_var", hp_.signal_var},
          {"noise_var", hp_.noise_var},
          {"prior_mean", mean_},
          {"n_train", train_x_.rows()},
          {"log_marginal_likelihood", log_ml_}};
}

std::unique_ptr<GpModel> train_gp(const Eigen::MatrixXd& X, std::span<const double> y, const GpHyperparameters& hp) {
  check_shapes(X, y);
  if (y.empty()) throw std::invalid_argument("train_gp: empty targets");
  if (!(hp.noise_var > 0.0)) throw std::invalid_argument("train_gp: noise_var must be positive");
  if (!(hp.length_scale > 0.0) || hp.signal_var < 0.0) throw std::invalid_argument("train_gp: bad hyperparameters");

  auto model = std::unique_ptr<GpModel>(new GpModel());
  model->hp_ = hp;
  model->train_x_ = X;
  model->mean_ = mean_of(y);
  const Eigen::Index n = X.rows();

  const Eigen::MatrixXd sq = pairwise_sq_dist(X);
  Eigen::MatrixXd K = hp.signal_var * (-sq.array() / (2.0 * hp.length_scale * hp.length_scale)).exp();
  K.diagonal().array() += hp.noise_var;

  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) throw ModelError("kernel not positive definite");
  Eigen::VectorXd yc(n);
  for (Eigen::Index i = 0; i < n; ++i) yc(i) = y[static_cast<std::size_t>(i)] - model->mean_;
  model->alpha_ = llt.solve(yc);
  model->chol_l_ = llt.matrixL();
  const double logdet = 2.0 * model->chol_l_.diagonal().array().log().sum();
  model->log_ml_ = -0.5 * yc.dot(model->alpha_) - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * kPi);
  return model;
}

GpHyperparameters select_gp_hyperparameters(const Eigen::MatrixXd& X, std::span<const double> y, const GpGrid& grid) {
  check_shapes(X, y);
  if (y.empty()) throw std::invalid_argument("select_gp_hyperparameters: empty targets");
  const double var = std::max(variance_of(y), 1e-6);
  const double base = std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, X.cols())));
  const Eigen::MatrixXd sq = pairwise_sq_dist(X);
  const Eigen::Index n = X.rows();
  Eigen::VectorXd yc(n);
  const double m = mean_of(y);
  for (Eigen::Index i = 0; i < n; ++i) yc(i) = y[static_cast<std::size_t>(i)] - m;

  GpHyperparameters best = default_gp_hyperparameters(y);
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double lf : grid.length_scale_factors) {
    const double ls = lf * base;
    const Eigen::MatrixXd Kf = var * (-sq.array() / (2.0 * ls * ls)).exp();
    for (double nr : grid.noise_ratios) {
      Eigen::MatrixXd K = Kf;
      K.diagonal().array() += nr * var;
      Eigen::LLT<Eigen::MatrixXd> llt(K);
      if (llt.info() != Eigen::Success) continue;
      const Eigen::VectorXd alpha = llt.solve(yc);
      const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
      const double lml = -0.5 * yc.dot(alpha) - 0.5 * logdet;
      if (lml > best_lml) {
        best_lml = lml;
        best = {ls, var, nr * var};
      }
    }
  }
  return best;
}

// ---- language split ----

double LanguageSplitModel::predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x, std::string_view lang) const {
  auto it = groups_.find(std::string(lang));
  if (it != groups_.end()) return it->second->predict_one(x, lang);
  return pooled_->predict_one(x, lang);
}

nlohmann::json LanguageSplitModel::to_json() const {
  nlohmann::json g = nlohmann::json::object();
  for (const auto& [lang, m] : groups_) g[lang] = m->to_json();
  return {{"kind", "language_split"}, {"groups", g}, {"pooled", pooled_->to_json()}};
}

std::unique_ptr<LanguageSplitModel> language_split_fit(const Eigen::MatrixXd& X, std::span<const double> y,
                                                       std::span<const std::string> langs, const Trainer& base) {
  check_shapes(X, y);
  if (langs.size() != y.size()) throw std::invalid_argument("language_split_fit: every row needs a language tag");
  auto model = std::unique_ptr<LanguageSplitModel>(new LanguageSplitModel());
  model->pooled_ = base(X, y, langs);
  std::map<std::string, std::vector<Eigen::Index>> rows;
  for (std::size_t i = 0; i < langs.size(); ++i) rows[langs[i]].push_back(static_cast<Eigen::Index>(i));
  for (const auto& [lang, idx] : rows) {
    if (idx.size() < 2) continue;
    Eigen::MatrixXd Xg(static_cast<Eigen::Index>(idx.size()), X.cols());
    std::vector<double> yg;
    std::vector<std::string> lg(idx.size(), lang);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      Xg.row(static_cast<Eigen::Index>(k)) = X.row(idx[k]);
      yg.push_back(y[static_cast<std::size_t>(idx[k])]);
    }
    model->groups_[lang] = base(Xg, yg, lg);
  }
  return model;
}

// ---- metrics ----

nlohmann::json Metrics::to_json() const {
  return {{"R", r ? nlohmann::json(*r) : nlohmann::json(nullptr)}, {"MAE", mae}, {"RMSE", rmse}, {"n", n}};
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  if (a.empty()) return std::nullopt;
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

Metrics compute_metrics(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("compute_metrics: length mismatch");
  if (y_true.empty()) throw std::invalid_argument("compute_metrics: empty input");
  Metrics m;
  m.n = y_true.size();
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double e = y_pred[i] - y_true[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  m.mae = abs_sum / static_cast<double>(m.n);
  m.rmse = std::sqrt(sq_sum / static_cast<double>(m.n));
  m.r = pearson(y_true, y_pred);
  return m;
}

// ---- cross-validation ----

std::vector<std::size_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold: k must be at least 2");
  if (k > n) throw std::invalid_argument("kfold: k exceeds the number of rows");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  fisher_yates(perm, rng);
  std::vector<std::size_t> fold(n);
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t p = f * n / k; p < (f + 1) * n / k; ++p) fold[perm[p]] = f;
  }
  return fold;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json folds_j = nlohmann::json::array();
  for (const auto& f : folds) {
    auto fj = f.metrics.to_json();
    fj["fold"] = f.fold;
    folds_j.push_back(fj);
  }
  return {{"model", model}, {"feature_config", feature_config}, {"seed", seed}, {"k", k},
          {"pooled", pooled.to_json()}, {"folds", folds_j}};
}

MetricsReport kfold_cv(const CvProblem& problem, std::size_t k, std::uint64_t seed, const Trainer& trainer) {
  const std::size_t n = problem.y.size();
  if (problem.users.size() != n || problem.langs.size() != n)
    throw std::invalid_argument("kfold: users/langs/y length mismatch");
  const auto fold_of = assign_folds(n, k, seed);
  MetricsReport report;
  report.seed = seed;
  report.k = k;
  std::vector<double> pooled_true, pooled_pred;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
    const FeatureMatrix design = problem.features(train);
    Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(train.size()), design.values.cols());
    Eigen::MatrixXd Xte(static_cast<Eigen::Index>(test.size()), design.values.cols());
    std::vector<double> ytr, yte;
    std::vector<std::string> ltr, lte;
    for (std::size_t r = 0; r < train.size(); ++r) {
      Xtr.row(static_cast<Eigen::Index>(r)) = design.values.row(static_cast<Eigen::Index>(train[r]));
      ytr.push_back(problem.y[train[r]]);
      ltr.push_back(problem.langs[train[r]]);
    }
    for (std::size_t r = 0; r < test.size(); ++r) {
      Xte.row(static_cast<Eigen::Index>(r)) = design.values.row(static_cast<Eigen::Index>(test[r]));
      yte.push_back(problem.y[test[r]]);
      lte.push_back(problem.langs[test[r]]);
    }
    const auto model = trainer(Xtr, ytr, ltr);
    const auto pred = model->predict(Xte, lte);
    report.folds.push_back({f, compute_metrics(yte, pred)});
    for (std::size_t r = 0; r < test.size(); ++r) {
      report.predictions.push_back({problem.users[test[r]], f, yte[r], pred[r]});
      pooled_true.push_back(yte[r]);
      pooled_pred.push_back(pred[r]);
    }
  }
  report.pooled = compute_metrics(pooled_true, pooled_pred);
  return report;
}

// ---- coefficients ----

nlohmann::json CoefficientReport::to_json() const {
  auto list = [](const auto& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [name, c] : v) a.push_back({{"feature", name}, {"coefficient", c}});
    return a;
  };
  return {{"positive", list(positive)}, {"negative", list(negative)}};
}

CoefficientReport top_features(const SvrLinearModel& model, std::span<const std::string> feature_names, std::size_t k) {
  const auto& w = model.weights();
  if (static_cast<std::size_t>(w.size()) != feature_names.size())
    throw std::invalid_argument("top_features: name count does not match weight count");
  CoefficientReport rep;
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    const double c = w(static_cast<Eigen::Index>(i));
    if (c > 0.0) rep.positive.emplace_back(feature_names[i], c);
    if (c < 0.0) rep.negative.emplace_back(feature_names[i], c);
  }
  std::sort(rep.positive.begin(), rep.positive.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::sort(rep.negative.begin(), rep.negative.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  if (rep.positive.size() > k) rep.positive.resize(k);
  if (rep.negative.size() > k) rep.negative.resize(k);
  return rep;
}

// ---- feature assembly ----

std::string FeatureSetOptions::label() const {
  return std::string(include_bio ? "tweet_plus_bio" : "tweet_only") + "/" + (bow ? "with_bow" : "without_bow");
}

FeatureMatrix assemble_features(const ModelingDataset& data, const FeatureSetOptions& options,
                                std::span<const std::size_t> train_rows) {
  FeatureMatrix m = select_columns(data.lexical, [&](const std::string& name) {
    return options.include_bio || name.rfind("Bio_", 0) != 0;
  });
  if (options.bow) {
    auto add_bow = [&](const std::vector<TokenCounts>& docs, std::string_view prefix) {
      if (docs.size() != data.users.size()) throw std::invalid_argument("assemble_features: token docs missing");
      const auto vocab = build_vocabulary(docs, train_rows, options.bow_min_df, options.bow_max_vocab);
      FeatureMatrix b;
      b.users = data.users;
      for (const auto& t : vocab) b.features.push_back(std::string(prefix) + t);
      b.values = bow_values(docs, vocab);
      m = hconcat(m, b);
    };
    if (options.include_bio) add_bow(data.bio_tokens, "Bio_BoW_");
    add_bow(data.tweet_tokens, "Tweet_BoW_");
  }
  return minmax_scale(std::move(m), train_rows);
}

CvProblem make_cv_problem(const ModelingDataset& data, const FeatureSetOptions& options) {
  CvProblem p;
  p.users = data.users;
  p.langs = data.langs;
  p.y = data.y;
  p.features = [&data, options](std::span<const std::size_t> train_rows) {
    return assemble_features(data, options, train_rows);
  };
  return p;
}

}  // namespace qsfusion
