#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "mafm/error.hpp"
#include "mafm/estimate.hpp"
#include "mafm/evalx.hpp"
#include "mafm/io.hpp"
#include "mafm/series.hpp"

namespace mafm {

// ---------------------------------------------------------------------------
// Transforms and pooled standardization

enum class Transform { none, log_diff, diff_scaled };

inline const char* to_string(Transform t) noexcept {
  switch (t) {
    case Transform::none: return "none";
    case Transform::log_diff: return "log_diff";
    case Transform::diff_scaled: return "diff_scaled";
  }
  return "?";
}

inline Transform parse_transform(const std::string& s) {
  if (s == "none") return Transform::none;
  if (s == "log_diff") return Transform::log_diff;
  if (s == "diff_scaled") return Transform::diff_scaled;
  fail(ErrorKind::invalid_argument,
       "unknown transform '" + s + "' (expected none, log_diff, diff_scaled)");
}

struct PanelSpec {
  std::vector<std::string> row_labels;  // optional; d1 entries when given
  std::vector<std::string> col_labels;  // optional; d2 entries when given
  std::vector<Transform> transforms;    // one per column
  double scale = 0.01;                  // c in diff_scaled(c)

  void validate(Index d1, Index d2) const {
    require(static_cast<Index>(transforms.size()) == d2, ErrorKind::invalid_argument,
            "PanelSpec.transforms: need one tag per column (" + std::to_string(d2) + ")");
    auto check_labels = [](const std::vector<std::string>& v, Index d, const char* field) {
      if (v.empty()) return;
      require(static_cast<Index>(v.size()) == d, ErrorKind::invalid_argument,
              std::string("PanelSpec.") + field + ": wrong number of labels");
      require(std::set<std::string>(v.begin(), v.end()).size() == v.size(),
              ErrorKind::invalid_argument, std::string("PanelSpec.") + field + ": labels must be unique");
    };
    check_labels(row_labels, d1, "row_labels");
    check_labels(col_labels, d2, "col_labels");
    require(std::isfinite(scale), ErrorKind::invalid_argument, "PanelSpec.scale: must be finite");
  }

  static PanelSpec identity(Index d2) {
    PanelSpec s;
    s.transforms.assign(static_cast<std::size_t>(d2), Transform::none);
    return s;
  }
};

inline PanelSpec panel_spec_from_json(const nlohmann::json& j, Index d2) {
  PanelSpec s;
  try {
    if (j.contains("row_labels")) s.row_labels = j.at("row_labels").get<std::vector<std::string>>();
    if (j.contains("col_labels")) s.col_labels = j.at("col_labels").get<std::vector<std::string>>();
    if (j.contains("scale")) s.scale = j.at("scale").get<double>();
    if (!j.contains("transforms")) {
      s.transforms.assign(static_cast<std::size_t>(d2), Transform::none);
    } else if (j.at("transforms").is_string()) {
      s.transforms.assign(static_cast<std::size_t>(d2), parse_transform(j.at("transforms").get<std::string>()));
    } else {
      for (const auto& t : j.at("transforms")) s.transforms.push_back(parse_transform(t.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_argument, std::string("PanelSpec: ") + e.what());
  }
  return s;
}

/// Per-column transforms; one time point is lost when any column is differenced.
inline MatrixSeries apply_transforms(const MatrixSeries& raw, const PanelSpec& spec) {
  spec.validate(raw.rows(), raw.cols());
  const bool differenced = std::any_of(spec.transforms.begin(), spec.transforms.end(),
                                       [](Transform t) { return t != Transform::none; });
  const Index lag = differenced ? 1 : 0;
  require(raw.size() >= lag + 1, ErrorKind::invalid_argument,
          "preprocess: differencing needs at least 2 time points");
  for (Index j = 0; j < raw.cols(); ++j) {
    if (spec.transforms[static_cast<std::size_t>(j)] != Transform::log_diff) continue;
    for (Index t = 0; t < raw.size(); ++t)
      for (Index i = 0; i < raw.rows(); ++i)
        if (!(raw[t](i, j) > 0.0))
          fail(ErrorKind::invalid_data, "preprocess: log_diff needs positive values, got " +
                                            io::format_double(raw[t](i, j)) + " at (t=" +
                                            std::to_string(t) + ", i=" + std::to_string(i) +
                                            ", j=" + std::to_string(j) + ")");
  }
  MatrixSeries out(raw.rows(), raw.cols(), raw.size() - lag);
  for (Index t = 0; t < out.size(); ++t)
    for (Index j = 0; j < raw.cols(); ++j) {
      const auto cur = raw[t + lag].col(j);
      switch (spec.transforms[static_cast<std::size_t>(j)]) {
        case Transform::none: out[t].col(j) = cur; break;
        case Transform::log_diff:
          out[t].col(j) = cur.array().log() - raw[t].col(j).array().log();
          break;
        case Transform::diff_scaled: out[t].col(j) = spec.scale * (cur - raw[t].col(j)); break;
      }
    }
  return out;
}

struct ColumnMoments {
  Vector mean;
  Vector sd;
};

/// Per-column mean and population sd pooled over all (t, i).
inline ColumnMoments pooled_moments(const MatrixSeries& x) {
  const double m = static_cast<double>(x.size() * x.rows());
  ColumnMoments out{Vector::Zero(x.cols()), Vector::Zero(x.cols())};
  for (Index t = 0; t < x.size(); ++t) out.mean += x[t].colwise().sum().transpose();
  out.mean /= m;
  for (Index t = 0; t < x.size(); ++t)
    out.sd += (x[t].rowwise() - out.mean.transpose()).colwise().squaredNorm().transpose();
  out.sd = (out.sd / m).cwiseSqrt();
  return out;
}

inline MatrixSeries standardize(const MatrixSeries& x, const std::vector<std::string>& col_labels = {}) {
  require(x.size() >= 1, ErrorKind::invalid_argument, "standardize: empty panel");
  const ColumnMoments mom = pooled_moments(x);
  for (Index j = 0; j < x.cols(); ++j) {
    // Zero up to rounding counts as zero: a constant difference series is degenerate.
    if (!(mom.sd(j) > 1e-12 * std::abs(mom.mean(j))) || mom.sd(j) == 0.0) {
      const std::string name = col_labels.empty() ? std::to_string(j)
                                                  : col_labels[static_cast<std::size_t>(j)];
      fail(ErrorKind::degenerate_column,
           "preprocess: column " + name + " has zero pooled standard deviation");
    }
  }
  MatrixSeries out(x.rows(), x.cols(), x.size());
  const Vector inv = mom.sd.cwiseInverse();
  for (Index t = 0; t < x.size(); ++t)
    out[t] = (x[t].rowwise() - mom.mean.transpose()) * inv.asDiagonal();
  return out;
}

/// Transforms then pooled standardization.
inline MatrixSeries preprocess(const MatrixSeries& raw, const PanelSpec& spec) {
  return standardize(apply_transforms(raw, spec), spec.col_labels);
}

// ---------------------------------------------------------------------------
// Rank diagnostics and in-sample statistics

struct RankDiagnostics {
  Vector row_side;  // from (1/n) sum X_t' X_t, the row-factor loading side
  Vector col_side;  // from (1/n) sum X_t X_t'
};

inline RankDiagnostics rank_diagnostics(const MatrixSeries& x, Index rmax) {
  require(x.size() >= 1, ErrorKind::invalid_argument, "rank: empty panel");
  require(rmax >= 1 && rmax <= std::min(x.rows(), x.cols()), ErrorKind::invalid_argument,
          "rank: rmax must satisfy 1 <= rmax <= min(d1, d2)");
  const detail::GramCache cache(x);
  auto proportions = [rmax](const Matrix& g) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (g + g.transpose()), Eigen::EigenvaluesOnly);
    const Vector ev = es.eigenvalues().reverse().cwiseMax(0.0);
    const double total = ev.sum();
    return total > 0.0 ? Vector(ev.head(rmax) / total) : Vector(Vector::Zero(rmax));
  };
  return {proportions(cache.col_gram()), proportions(cache.row_gram())};
}

struct InsampleStats {
  double r2 = 0.0;
  double fit_err = 0.0;
};

inline InsampleStats insample_stats(const MatrixSeries& x, const MatrixSeries& fitted) {
  require(fitted.rows() == x.rows() && fitted.cols() == x.cols() && fitted.size() == x.size(),
          ErrorKind::invalid_argument, "insample_stats: fitted values do not match the panel");
  const double count = static_cast<double>(x.stacked().size());
  const double grand = x.stacked().mean();
  const double rss = (x.stacked() - fitted.stacked()).squaredNorm();
  const double tss = (x.stacked().array() - grand).matrix().squaredNorm();
  if (!(tss > 0.0)) fail(ErrorKind::undefined_r2, "insample_stats: data have zero total variation");
  return {1.0 - rss / tss, rss / count};
}

inline InsampleStats insample_stats(const MatrixSeries& x, const MafmFit& fit) {
  return insample_stats(x, fitted_values(x, fit.U_A, fit.U_B));
}

// ---------------------------------------------------------------------------
// Autoregressions selected by AIC

struct ArFit {
  int order = 0;
  double intercept = 0.0;
  Vector coef;  // coef(k) multiplies y_{t-1-k}
  double sigma2 = 0.0;
  std::vector<double> aic;  // per candidate order, NaN when the design was rank deficient

  double forecast(const Vector& history) const {
    require(history.size() >= order, ErrorKind::invalid_argument, "ArFit::forecast: history too short");
    double y = intercept;
    for (int k = 0; k < order; ++k) y += coef(k) * history(history.size() - 1 - k);
    return y;
  }
};

inline int default_pmax(Index n) { return static_cast<int>(std::min<Index>(10, n / 10)); }

/// Least-squares AR(p) with intercept for p = 0..pmax on the common window t > pmax,
/// scored by n_eff log(sigma^2) + 2p.
inline ArFit fit_ar_aic(const Vector& y, int pmax = -1) {
  const Index n = y.size();
  if (pmax < 0) pmax = default_pmax(n);
  require(n >= pmax + 10, ErrorKind::invalid_argument, "fit_ar_aic: need n >= pmax + 10");
  const Index n_eff = n - pmax;
  const Vector target = y.tail(n_eff);
  ArFit best;
  double best_aic = std::numeric_limits<double>::infinity();
  bool have = false;
  for (int p = 0; p <= pmax; ++p) {
    Matrix design(n_eff, p + 1);
    design.col(0).setOnes();
    for (int k = 0; k < p; ++k) design.col(k + 1) = y.segment(pmax - 1 - k, n_eff);
    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < p + 1) {
      best.aic.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const Vector beta = qr.solve(target);
    const double sigma2 = (target - design * beta).squaredNorm() / static_cast<double>(n_eff);
    const double aic = static_cast<double>(n_eff) *
                           std::log(std::max(sigma2, std::numeric_limits<double>::min())) +
                       2.0 * p;
    best.aic.push_back(aic);
    if (!have || aic < best_aic) {
      have = true;
      best_aic = aic;
      best.order = p;
      best.intercept = beta(0);
      best.coef = beta.tail(p);
      best.sigma2 = sigma2;
    }
  }
  if (!have) {  // intercept alone is always full rank, kept for safety
    best.order = 0;
    best.intercept = target.mean();
    best.coef.resize(0);
    best.sigma2 = (target.array() - best.intercept).square().mean();
  }
  return best;
}

/// Independent one-step AR forecasts of every column of a stacked factor history
/// (rows are time).
inline Vector forecast_columns(const Matrix& history, int pmax) {
  Vector out(history.cols());
  for (Index c = 0; c < history.cols(); ++c) {
    const Vector y = history.col(c);
    out(c) = fit_ar_aic(y, pmax < 0 ? default_pmax(y.size()) : pmax).forecast(y);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vectorized PCA baseline

struct VecFactorFit {
  Vector mean;      // d1*d2
  Matrix loadings;  // d1*d2 x r, orthonormal
  Matrix factors;   // n x r
  MatrixSeries fitted;
};

/// Centered principal components of vec(X_t); fitted values include the mean.
inline VecFactorFit vec_factor_baseline(const MatrixSeries& x, Index r) {
  const Index d = x.rows() * x.cols();
  const Index n = x.size();
  require(r >= 0 && r <= d, ErrorKind::invalid_argument, "vec_factor_baseline: need 0 <= r <= d1*d2");
  require(n >= 1, ErrorKind::invalid_argument, "vec_factor_baseline: empty panel");
  Matrix y(n, d);
  for (Index t = 0; t < n; ++t) y.row(t) = Eigen::Map<const Vector>(Matrix(x[t]).data(), d).transpose();
  VecFactorFit out;
  out.mean = y.colwise().mean().transpose();
  const Matrix yc = y.rowwise() - out.mean.transpose();
  const Index k = std::min(r, std::min(n, d));
  if (k > 0) {
    Eigen::BDCSVD<Matrix> svd(yc, Eigen::ComputeThinV);
    out.loadings = svd.matrixV().leftCols(k);
    for (Index c = 0; c < k; ++c) {
      const Index arg = [&] {
        Index best = 0;
        out.loadings.col(c).cwiseAbs().maxCoeff(&best);
        return best;
      }();
      if (out.loadings(arg, c) < 0) out.loadings.col(c) *= -1.0;
    }
  } else {
    out.loadings = Matrix::Zero(d, 0);
  }
  out.factors = yc * out.loadings;
  const Matrix fitted = (out.factors * out.loadings.transpose()).rowwise() + out.mean.transpose();
  out.fitted = MatrixSeries(x.rows(), x.cols(), n);
  for (Index t = 0; t < n; ++t)
    out.fitted[t] = Eigen::Map<const Matrix>(Vector(fitted.row(t).transpose()).data(), x.rows(), x.cols());
  return out;
}

// ---------------------------------------------------------------------------
// Expanding-window forecasting

/// Produces the one-step forecast of X_{w+1} from a training window X_1..X_w.
using Forecaster = std::function<Matrix(const MatrixSeries& train)>;

inline Forecaster mafm_forecaster(Index r1, Index r2, int pmax = -1, CompasOptions opt = {}) {
  return [=](const MatrixSeries& train) {
    const MafmFit fit = fit_mafm(train, r1, r2, opt);
    const Index w = train.size();
    Matrix fh(w, train.rows() * r1), gh(w, train.cols() * r2);
    for (Index t = 0; t < w; ++t) {
      fh.row(t) = Eigen::Map<const Vector>(Matrix(fit.F[t]).data(), fh.cols()).transpose();
      gh.row(t) = Eigen::Map<const Vector>(Matrix(fit.G[t]).data(), gh.cols()).transpose();
    }
    const Vector f_next = forecast_columns(fh, pmax);
    const Vector g_next = forecast_columns(gh, pmax);
    const Eigen::Map<const Matrix> f(f_next.data(), train.rows(), r1);
    const Eigen::Map<const Matrix> g(g_next.data(), train.cols(), r2);
    return Matrix(f * fit.U_A.matrix().transpose() + fit.U_B.matrix() * g.transpose());
  };
}

/// Grand mean of the training window, broadcast to every entry.
inline Forecaster mean_forecaster() {
  return [](const MatrixSeries& train) {
    return Matrix(Matrix::Constant(train.rows(), train.cols(), train.stacked().mean()));
  };
}

inline Forecaster vec_factor_forecaster(Index r, int pmax = -1) {
  return [=](const MatrixSeries& train) {
    const VecFactorFit fit = vec_factor_baseline(train, r);
    const Vector f_next = forecast_columns(fit.factors, pmax);
    const Vector v = fit.mean + fit.loadings * f_next;
    return Matrix(Eigen::Map<const Matrix>(v.data(), train.rows(), train.cols()));
  };
}

struct ForecastOptions {
  Index w0 = -1;          // first origin; default is the minimum window
  Index min_window = -1;  // default max(40, 4 max(r1, r2) + 20)
  std::vector<int> horizons{5, 10};
  int jobs = 1;
};

struct ForecastReport {
  std::vector<int> horizons;
  std::vector<Index> origins;     // successful origins w (training on X_1..X_w)
  std::vector<double> fe;         // FE(w+1) per successful origin
  std::vector<Index> failed;      // origins whose fit failed
  std::vector<std::string> failure_messages;
  std::map<int, double> fe_bar;   // mean of the last h FE values
};

inline Index default_min_window(Index r1, Index r2) {
  return std::max<Index>(40, 4 * std::max(r1, r2) + 20);
}

/// Refits on X_1..X_w for each origin w = w0..n-1 and scores the forecast of X_{w+1}.
/// The forecaster only ever sees the truncated window.
inline ForecastReport forecast_expanding(const MatrixSeries& x, const Forecaster& forecaster,
                                         Index min_window, ForecastOptions opt) {
  const Index n = x.size();
  if (opt.w0 < 0) opt.w0 = min_window;
  require(opt.w0 >= min_window, ErrorKind::invalid_argument,
          "forecast: w0 must be at least the minimum window (" + std::to_string(min_window) + ")");
  require(opt.w0 <= n - 1, ErrorKind::invalid_argument,
          "forecast: w0 must be <= n - 1 (n = " + std::to_string(n) + ")");
  require(!opt.horizons.empty(), ErrorKind::invalid_argument, "forecast: need at least one horizon");
  const Index count = n - opt.w0;
  for (int h : opt.horizons)
    require(h >= 1 && h <= count, ErrorKind::invalid_argument,
            "forecast: horizon " + std::to_string(h) + " outside 1.." + std::to_string(count));

  std::vector<double> fe(static_cast<std::size_t>(count), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> msg(static_cast<std::size_t>(count));
  const double scale = 1.0 / static_cast<double>(x.rows() * x.cols());
  parallel_for(static_cast<std::size_t>(count), opt.jobs, [&](std::size_t k) {
    const Index w = opt.w0 + static_cast<Index>(k);
    try {
      const Matrix pred = forecaster(x.head(w));
      fe[k] = scale * (x[w] - pred).squaredNorm();
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::invalid_argument) throw;
      msg[k] = e.what();
    }
  });

  ForecastReport rep;
  rep.horizons = opt.horizons;
  for (Index k = 0; k < count; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    if (std::isfinite(fe[kk])) {
      rep.origins.push_back(opt.w0 + k);
      rep.fe.push_back(fe[kk]);
    } else {
      rep.failed.push_back(opt.w0 + k);
      rep.failure_messages.push_back(msg[kk]);
    }
  }
  for (int h : opt.horizons) {
    if (static_cast<std::size_t>(h) > rep.fe.size()) {
      rep.fe_bar[h] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double s = 0.0;
    for (std::size_t k = rep.fe.size() - static_cast<std::size_t>(h); k < rep.fe.size(); ++k) s += rep.fe[k];
    rep.fe_bar[h] = s / h;
  }
  return rep;
}

inline ForecastReport forecast_expanding(const MatrixSeries& x, Index r1, Index r2,
                                         ForecastOptions opt = {}, int pmax = -1,
                                         CompasOptions copt = {}) {
  const Index min_window = opt.min_window >= 0 ? opt.min_window : default_min_window(r1, r2);
  return forecast_expanding(x, mafm_forecaster(r1, r2, pmax, copt), min_window, opt);
}

inline std::string fe_csv(const ForecastReport& r) {
  std::string out = "origin,fe\n";
  for (std::size_t k = 0; k < r.fe.size(); ++k)
    out += std::to_string(r.origins[k]) + ',' + io::format_double(r.fe[k]) + '\n';
  return out;
}

inline nlohmann::json to_json(const ForecastReport& r) {
  nlohmann::json bar = nlohmann::json::object();
  for (const auto& [h, v] : r.fe_bar) bar[std::to_string(h)] = detail::json_number(v);
  nlohmann::json failed = nlohmann::json::array();
  for (std::size_t k = 0; k < r.failed.size(); ++k)
    failed.push_back({{"origin", r.failed[k]}, {"message", r.failure_messages[k]}});
  return {{"horizons", r.horizons}, {"fe_bar", bar}, {"origins", r.origins.size()}, {"failed", failed}};
}

}  // namespace mafm
