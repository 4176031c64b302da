#include "pimdp/gp.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "pimdp/csvio.hpp"
#include "pimdp/errors.hpp"
#include "pimdp/optimize.hpp"
#include "pimdp/rng.hpp"

namespace pimdp {

using nlohmann::json;

void TrainingSet::validate() const {
  if (inputs.rows() != targets.rows())
    throw std::invalid_argument("training inputs/targets row mismatch");
  if (inputs.rows() < 1) throw std::invalid_argument("empty training set");
  if (!inputs.allFinite() || !targets.allFinite())
    throw std::invalid_argument("training data must be finite");
}

Eigen::VectorXd GpHyperparams::pack() const {
  Eigen::VectorXd v(log_lengthscales.size() + 2);
  v.head(log_lengthscales.size()) = log_lengthscales;
  v[log_lengthscales.size()] = log_signal;
  v[log_lengthscales.size() + 1] = log_noise;
  return v;
}

GpHyperparams GpHyperparams::unpack(const Eigen::VectorXd& v) {
  GpHyperparams hp;
  hp.log_lengthscales = v.head(v.size() - 2);
  hp.log_signal = v[v.size() - 2];
  hp.log_noise = v[v.size() - 1];
  return hp;
}

Eigen::MatrixXd se_ard_kernel(const GpHyperparams& hp,
                              const Eigen::MatrixXd& A,
                              const Eigen::MatrixXd& B) {
  const Eigen::VectorXd ilam =
      (-2.0 * hp.log_lengthscales.array()).exp().matrix();
  const double sf2 = hp.sf2();
  Eigen::MatrixXd K(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      const Eigen::VectorXd d = A.row(i) - B.row(j);
      K(i, j) = sf2 * std::exp(-0.5 * d.cwiseProduct(d).dot(ilam));
    }
  }
  return K;
}

namespace {

// Cholesky with a jitter ladder; throws after the last rung.
Eigen::LLT<Eigen::MatrixXd> chol_with_jitter(Eigen::MatrixXd K) {
  const double scale = K.diagonal().mean();
  double jitter = 1e-8 * std::max(scale, 1e-12);
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() == Eigen::Success) return llt;
    K.diagonal().array() += jitter;
    jitter *= 10.0;
  }
  throw ConditioningError(
      "kernel matrix is not positive definite even after jitter");
}

// Squared distances per input dimension, computed once per fit.
std::vector<Eigen::MatrixXd> sq_dists(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows(), D = X.cols();
  std::vector<Eigen::MatrixXd> S(static_cast<std::size_t>(D));
  for (Eigen::Index d = 0; d < D; ++d) {
    const Eigen::VectorXd c = X.col(d);
    Eigen::MatrixXd diff = c.replicate(1, n) - c.transpose().replicate(n, 1);
    S[static_cast<std::size_t>(d)] = diff.cwiseProduct(diff);
  }
  return S;
}

Eigen::MatrixXd kernel_from_dists(const std::vector<Eigen::MatrixXd>& S,
                                  const GpHyperparams& hp) {
  const Eigen::Index n = S.empty() ? 0 : S[0].rows();
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t d = 0; d < S.size(); ++d) {
    const double il = std::exp(-2.0 * hp.log_lengthscales[static_cast<Eigen::Index>(d)]);
    E.noalias() += il * S[d];
  }
  return hp.sf2() * (-0.5 * E.array()).exp().matrix();
}

double lml_impl(const GpHyperparams& hp, const std::vector<Eigen::MatrixXd>& S,
                const Eigen::VectorXd& y, Eigen::VectorXd* grad) {
  const Eigen::Index n = y.size();
  const Eigen::MatrixXd K = kernel_from_dists(S, hp);
  Eigen::MatrixXd Kt = K;
  Kt.diagonal().array() += hp.sn2();
  const auto llt = chol_with_jitter(Kt);
  const Eigen::VectorXd alpha = llt.solve(y);
  double logdet = 0.0;
  const auto& L = llt.matrixLLT();
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(L(i, i));
  const double lml = -0.5 * y.dot(alpha) - logdet -
                     0.5 * n * std::log(2.0 * M_PI);
  if (grad) {
    const Eigen::MatrixXd Kinv =
        llt.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd A = alpha * alpha.transpose() - Kinv;
    grad->resize(static_cast<Eigen::Index>(S.size()) + 2);
    for (std::size_t d = 0; d < S.size(); ++d) {
      const double il =
          std::exp(-2.0 * hp.log_lengthscales[static_cast<Eigen::Index>(d)]);
      // dK/dlog(l_d) = K .* S_d / l_d^2
      const double g =
          0.5 * (A.array() * K.array() * S[d].array()).sum() * il;
      (*grad)[static_cast<Eigen::Index>(d)] = g;
    }
    (*grad)[static_cast<Eigen::Index>(S.size())] =
        (A.array() * K.array()).sum();                    // dK/dlog sf = 2K
    (*grad)[static_cast<Eigen::Index>(S.size()) + 1] =
        hp.sn2() * A.trace();                             // dKt/dlog sn = 2 sn2 I
  }
  return lml;
}

}  // namespace

double log_marginal_likelihood(const GpHyperparams& hp,
                               const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y,
                               Eigen::VectorXd* grad) {
  return lml_impl(hp, sq_dists(X), y, grad);
}

GpModel GpModel::fit(const TrainingSet& train, const GpFitOptions& opts) {
  train.validate();
  if (train.n() < 5)
    throw std::invalid_argument("GP fit needs at least 5 points");
  const Eigen::Index D = train.inputs.cols();
  const Eigen::Index E = train.targets.cols();
  const auto S = sq_dists(train.inputs);

  GpModel model;
  model.X_ = train.inputs;
  model.Y_ = train.targets;
  model.fit_seed_ = opts.seed;

  const double log_snr_cap = std::log(opts.snr_cap);

  for (Eigen::Index e = 0; e < E; ++e) {
    const Eigen::VectorXd y = train.targets.col(e);
    const double sy = std::max(std::sqrt(
        (y.array() - y.mean()).square().sum() / std::max<double>(1, y.size() - 1)),
        1e-6);

    GpHyperparams init;
    init.log_lengthscales.resize(D);
    for (Eigen::Index d = 0; d < D; ++d) {
      const Eigen::VectorXd c = train.inputs.col(d);
      const double sd = std::sqrt(
          (c.array() - c.mean()).square().sum() / std::max<double>(1, c.size() - 1));
      init.log_lengthscales[d] = std::log(std::max(sd, 1e-3));
    }
    init.log_signal = std::log(sy);
    init.log_noise = std::log(0.1 * sy);
    if (static_cast<Eigen::Index>(opts.warm_start.size()) == E)
      init = opts.warm_start[static_cast<std::size_t>(e)];

    // Maximize lml minus a soft SNR penalty that keeps sigma_f / sigma_n
    // from running away on noise-free simulator data, plus smooth box
    // penalties that stop degenerate optima (exactly-zero targets would
    // otherwise push every scale to zero).
    const auto box_pen = [](double x, double lo, double hi,
                            double& dpen) -> double {
      if (x < lo) {
        dpen = 20.0 * (x - lo);
        return 10.0 * (x - lo) * (x - lo);
      }
      if (x > hi) {
        dpen = 20.0 * (x - hi);
        return 10.0 * (x - hi) * (x - hi);
      }
      dpen = 0.0;
      return 0.0;
    };
    const double log_scale_lo = std::log(1e-6), log_scale_hi = std::log(1e3);
    const double log_len_lo = std::log(1e-3), log_len_hi = std::log(1e3);

    const auto objective = [&](const Eigen::VectorXd& v,
                               Eigen::VectorXd& grad) -> double {
      const GpHyperparams hp = GpHyperparams::unpack(v);
      Eigen::VectorXd lml_grad;
      double lml;
      try {
        lml = lml_impl(hp, S, y, &lml_grad);
      } catch (const ConditioningError&) {
        grad.setZero(v.size());
        return std::numeric_limits<double>::infinity();
      }
      const double r = (hp.log_signal - hp.log_noise) / log_snr_cap;
      double penalty = std::pow(r, 30);
      const double dsnr = 30.0 * std::pow(r, 29) / log_snr_cap;
      grad = -lml_grad;
      grad[v.size() - 2] += dsnr;
      grad[v.size() - 1] -= dsnr;
      double dp = 0.0;
      for (Eigen::Index i = 0; i < v.size() - 2; ++i) {
        penalty += box_pen(v[i], log_len_lo, log_len_hi, dp);
        grad[i] += dp;
      }
      penalty += box_pen(v[v.size() - 2], log_scale_lo, log_scale_hi, dp);
      grad[v.size() - 2] += dp;
      penalty += box_pen(v[v.size() - 1], log_scale_lo, log_scale_hi, dp);
      grad[v.size() - 1] += dp;
      return -lml + penalty;
    };

    OptimizeOptions oo;
    oo.max_iters = opts.max_iters;
    oo.plateau_tol = opts.plateau_tol;

    double best_f = std::numeric_limits<double>::infinity();
    GpHyperparams best_hp = init;
    for (int r = 0; r < opts.restarts; ++r) {
      Eigen::VectorXd x0 = init.pack();
      if (r > 0) {
        auto rng = make_rng(derive_seed(opts.seed, static_cast<std::uint64_t>(e),
                                        static_cast<std::uint64_t>(r)));
        std::normal_distribution<double> jitter(0.0, 0.5);
        for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] += jitter(rng);
      }
      const auto res = minimize(objective, x0, oo);
      if (res.f < best_f) {
        best_f = res.f;
        best_hp = GpHyperparams::unpack(res.x);
      }
    }
    PerOutput out;
    out.hp = best_hp;
    model.outputs_.push_back(std::move(out));
  }
  model.finalize(train);
  return model;
}

GpModel GpModel::from_hyperparams(const TrainingSet& train,
                                  std::vector<GpHyperparams> hps) {
  train.validate();
  if (static_cast<Eigen::Index>(hps.size()) != train.targets.cols())
    throw std::invalid_argument("one hyperparameter set per output dim");
  GpModel model;
  model.X_ = train.inputs;
  model.Y_ = train.targets;
  for (auto& hp : hps) {
    PerOutput out;
    out.hp = std::move(hp);
    model.outputs_.push_back(std::move(out));
  }
  model.finalize(train);
  return model;
}

void GpModel::finalize(const TrainingSet& train) {
  const auto S = sq_dists(train.inputs);
  const Eigen::Index n = train.inputs.rows();
  for (std::size_t e = 0; e < outputs_.size(); ++e) {
    auto& out = outputs_[e];
    out.ilam = (-2.0 * out.hp.log_lengthscales.array()).exp().matrix();
    Eigen::MatrixXd Kt = kernel_from_dists(S, out.hp);
    Kt.diagonal().array() += out.hp.sn2();
    const auto llt = chol_with_jitter(Kt);
    out.beta = llt.solve(train.targets.col(static_cast<Eigen::Index>(e)));
    out.kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  }
}

void GpModel::predict_point(const Eigen::VectorXd& x, Eigen::VectorXd& mean,
                            Eigen::VectorXd& var) const {
  const Eigen::Index E = static_cast<Eigen::Index>(outputs_.size());
  mean.resize(E);
  var.resize(E);
  for (Eigen::Index e = 0; e < E; ++e) {
    const auto& out = outputs_[static_cast<std::size_t>(e)];
    const double sf2 = out.hp.sf2();
    Eigen::VectorXd k(X_.rows());
    for (Eigen::Index i = 0; i < X_.rows(); ++i) {
      const Eigen::VectorXd d = X_.row(i).transpose() - x;
      k[i] = sf2 * std::exp(-0.5 * d.cwiseProduct(d).dot(out.ilam));
    }
    mean[e] = k.dot(out.beta);
    const double var_f = sf2 - k.dot(out.kinv * k);
    var[e] = std::max(var_f, 0.0) + out.hp.sn2();
  }
}

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::VectorXd vector_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j].get<double>();
  return m;
}

}  // namespace

std::string GpModel::to_json() const {
  json dims = json::array();
  for (const auto& out : outputs_) {
    dims.push_back({{"log_lengthscales", vector_to_json(out.hp.log_lengthscales)},
                    {"log_signal", out.hp.log_signal},
                    {"log_noise", out.hp.log_noise}});
  }
  json j{{"format", "pimdp-gp-checkpoint"},
         {"version", 1},
         {"fit_seed", fit_seed_},
         {"inputs", matrix_to_json(X_)},
         {"targets", matrix_to_json(Y_)},
         {"outputs", dims}};
  return j.dump(2);
}

GpModel GpModel::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("bad GP checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "pimdp-gp-checkpoint")
    throw ConfigError("not a GP checkpoint file");
  if (j.value("version", 0) != 1)
    throw ConfigError("unsupported GP checkpoint version");
  TrainingSet train;
  train.inputs = matrix_from_json(j.at("inputs"));
  train.targets = matrix_from_json(j.at("targets"));
  std::vector<GpHyperparams> hps;
  for (const auto& d : j.at("outputs")) {
    GpHyperparams hp;
    hp.log_lengthscales = vector_from_json(d.at("log_lengthscales"));
    hp.log_signal = d.at("log_signal").get<double>();
    hp.log_noise = d.at("log_noise").get<double>();
    hps.push_back(std::move(hp));
  }
  GpModel model = from_hyperparams(train, std::move(hps));
  model.fit_seed_ = j.value("fit_seed", 0ULL);
  return model;
}

void GpModel::save(const std::string& path) const {
  atomic_write_file(path, to_json());
}

GpModel GpModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open GP checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace pimdp
