#include "pimdp/policy.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pimdp/csvio.hpp"
#include "pimdp/errors.hpp"
#include "pimdp/moments.hpp"

namespace pimdp {

using nlohmann::json;

RbfPolicy::RbfPolicy(Eigen::MatrixXd centers, Eigen::VectorXd weights,
                     Eigen::VectorXd log_lengthscales, double bound)
    : centers_(std::move(centers)),
      weights_(std::move(weights)),
      log_lengthscales_(std::move(log_lengthscales)),
      bound_(bound) {
  if (centers_.rows() != weights_.size())
    throw std::invalid_argument("one weight per basis function");
  if (centers_.cols() != log_lengthscales_.size())
    throw std::invalid_argument("one lengthscale per input dimension");
  if (centers_.rows() < 1)
    throw std::invalid_argument("policy needs at least one basis function");
}

double RbfPolicy::activation(const Eigen::VectorXd& obs_pi) const {
  const Eigen::VectorXd ilam =
      (-2.0 * log_lengthscales_.array()).exp().matrix();
  double z = 0.0;
  for (int i = 0; i < n_basis(); ++i) {
    const Eigen::VectorXd d = centers_.row(i).transpose() - obs_pi;
    z += weights_[i] * std::exp(-0.5 * d.cwiseProduct(d).dot(ilam));
  }
  return z;
}

double RbfPolicy::act(const Eigen::VectorXd& obs_pi) const {
  return bound_ * squash(activation(obs_pi));
}

RbfPolicy::UncertainAction RbfPolicy::act_uncertain(
    const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
    UncertainActionGrads* grads) const {
  const Eigen::Index D = centers_.cols();
  const Eigen::Index nin = D + D * D;

  MomentOutputSpec spec;
  spec.beta = &weights_;
  spec.ilam = (-2.0 * log_lengthscales_.array()).exp().matrix();
  spec.sf2 = 1.0;
  spec.sn2 = 0.0;

  MomentMatchResult rbf;
  MomentMatchGrads mgrads;
  RbfParamGrads pgrads;
  moment_match(centers_, {spec}, mu, sigma, rbf, grads ? &mgrads : nullptr,
               grads ? &pgrads : nullptr);
  const double mz = rbf.mean[0];
  const double vz = std::max(rbf.cov(0, 0), 0.0);

  SquashGrads sq_grads;
  const SquashResult sq =
      squash_moments(mz, vz, bound_, grads ? &sq_grads : nullptr);

  UncertainAction out;
  out.mean = sq.mean;
  out.var = sq.var;
  out.v = rbf.vmat.col(0) * sq.v_scalar;

  if (grads) {
    // chain (mz, vz) jacobians through the squash stage
    const Eigen::RowVectorXd dmz_in = mgrads.dmean.row(0);
    const Eigen::RowVectorXd dvz_in = mgrads.dcov.row(0);
    grads->dmean_din = sq_grads.d(0, 0) * dmz_in + sq_grads.d(0, 1) * dvz_in;
    grads->dvar_din = sq_grads.d(1, 0) * dmz_in + sq_grads.d(1, 1) * dvz_in;
    const Eigen::RowVectorXd dvs_in =
        sq_grads.d(2, 0) * dmz_in + sq_grads.d(2, 1) * dvz_in;
    grads->dv_din.resize(D, nin);
    for (Eigen::Index r = 0; r < D; ++r)
      grads->dv_din.row(r) = sq.v_scalar * mgrads.dvmat.row(r) +
                             rbf.vmat(r, 0) * dvs_in;

    const Eigen::RowVectorXd dmz_p = pgrads.dmean;
    const Eigen::RowVectorXd dvz_p = pgrads.dcov;
    grads->dmean_dp = sq_grads.d(0, 0) * dmz_p + sq_grads.d(0, 1) * dvz_p;
    grads->dvar_dp = sq_grads.d(1, 0) * dmz_p + sq_grads.d(1, 1) * dvz_p;
    const Eigen::RowVectorXd dvs_p =
        sq_grads.d(2, 0) * dmz_p + sq_grads.d(2, 1) * dvz_p;
    grads->dv_dp.resize(D, n_params());
    for (Eigen::Index r = 0; r < D; ++r)
      grads->dv_dp.row(r) =
          sq.v_scalar * pgrads.dvmat.row(r) + rbf.vmat(r, 0) * dvs_p;
  }
  return out;
}

Eigen::VectorXd RbfPolicy::pack_params() const {
  const int n = n_basis(), D = input_dim();
  Eigen::VectorXd p(n_params());
  p.head(n) = weights_;
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < D; ++d) p[n + i * D + d] = centers_(i, d);
  p.tail(D) = log_lengthscales_;
  return p;
}

void RbfPolicy::unpack_params(const Eigen::VectorXd& p) {
  const int n = n_basis(), D = input_dim();
  if (p.size() != n_params())
    throw std::invalid_argument("parameter vector size mismatch");
  weights_ = p.head(n);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < D; ++d) centers_(i, d) = p[n + i * D + d];
  log_lengthscales_ = p.tail(D);
}

RbfPolicy init_policy(std::mt19937_64& rng,
                      const Eigen::MatrixXd& seed_observations, int n_basis,
                      int input_dim, double bound) {
  std::normal_distribution<double> wdist(0.0, 0.1);
  std::uniform_real_distribution<double> box(-1.0, 1.0);

  Eigen::MatrixXd centers(n_basis, input_dim);
  const Eigen::Index n_obs = seed_observations.rows();
  if (n_obs >= n_basis) {
    // sample rows without replacement
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n_obs));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < n_basis; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(
          i, static_cast<Eigen::Index>(idx.size()) - 1);
      std::swap(idx[static_cast<std::size_t>(i)],
                idx[static_cast<std::size_t>(pick(rng))]);
      centers.row(i) = seed_observations.row(idx[static_cast<std::size_t>(i)]);
    }
  } else {
    for (int i = 0; i < n_basis; ++i)
      for (int d = 0; d < input_dim; ++d) centers(i, d) = box(rng);
  }

  Eigen::VectorXd weights(n_basis);
  for (int i = 0; i < n_basis; ++i) weights[i] = wdist(rng);

  Eigen::VectorXd log_len(input_dim);
  for (int d = 0; d < input_dim; ++d) {
    double sd = 1.0;
    if (n_obs >= 2) {
      const auto col = seed_observations.col(d);
      sd = std::sqrt((col.array() - col.mean()).square().sum() /
                     static_cast<double>(n_obs - 1));
    }
    log_len[d] = std::log(std::max(sd, 0.1));
  }
  return RbfPolicy(std::move(centers), std::move(weights), std::move(log_len),
                   bound);
}

Eigen::VectorXd pi_observation(const Eigen::VectorXd& state, int angle_index,
                               const Eigen::VectorXd& state_scale_factors) {
  const Eigen::VectorXd s_pi = state.cwiseProduct(state_scale_factors);
  Eigen::VectorXd obs(state.size() + 1);
  int k = 0;
  for (int i = 0; i < state.size(); ++i) {
    if (i == angle_index) {
      obs[k++] = std::sin(s_pi[i]);
      obs[k++] = std::cos(s_pi[i]);
    } else {
      obs[k++] = s_pi[i];
    }
  }
  return obs;
}

NaturalAction act_natural(const RbfPolicy& policy,
                          const Eigen::VectorXd& natural_state,
                          int angle_index,
                          const Eigen::VectorXd& state_scale_factors,
                          double action_scale_factor, double actuator_bound) {
  const Eigen::VectorXd obs =
      pi_observation(natural_state, angle_index, state_scale_factors);
  const double a_pi = policy.act(obs);
  NaturalAction out;
  out.preclip = a_pi / action_scale_factor;
  out.action = std::clamp(out.preclip, -actuator_bound, actuator_bound);
  out.clipped = out.action != out.preclip;
  return out;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
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

json rational_to_json(const Rational& r) {
  return json::array({r.num(), r.den()});
}

Rational rational_from_json(const json& j) {
  return Rational(j.at(0).get<std::int64_t>(), j.at(1).get<std::int64_t>());
}

}  // namespace

std::string pi_basis_to_json(const PiBasis& basis) {
  json groups = json::array();
  for (const auto& g : basis.groups) {
    json exps = json::array();
    for (const auto& e : g.context_exps) exps.push_back(rational_to_json(e));
    groups.push_back({{"target", g.target},
                      {"target_exp", rational_to_json(g.target_exp)},
                      {"context_exps", exps}});
  }
  json j{{"context_names", basis.context_names}, {"groups", groups}};
  return j.dump();
}

PiBasis pi_basis_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("bad Pi basis JSON: ") + e.what());
  }
  PiBasis basis;
  for (const auto& name : j.at("context_names"))
    basis.context_names.push_back(name.get<std::string>());
  for (const auto& gj : j.at("groups")) {
    PiGroup g;
    g.target = gj.at("target").get<std::string>();
    g.target_exp = rational_from_json(gj.at("target_exp"));
    for (const auto& e : gj.at("context_exps"))
      g.context_exps.push_back(rational_from_json(e));
    basis.groups.push_back(std::move(g));
  }
  return basis;
}

std::string RbfPolicy::to_json() const {
  json j{{"format", "pimdp-policy"},
         {"version", 1},
         {"centers", matrix_to_json(centers_)},
         {"weights", matrix_to_json(weights_)},
         {"lengthscales",
          matrix_to_json(log_lengthscales_.array().exp().matrix())},
         {"log_lengthscales", matrix_to_json(log_lengthscales_)},
         {"bound", bound_}};
  return j.dump(2);
}

RbfPolicy RbfPolicy::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("bad policy checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "pimdp-policy" || j.value("version", 0) != 1)
    throw ConfigError("not a supported policy checkpoint");
  const Eigen::MatrixXd centers = matrix_from_json(j.at("centers"));
  const Eigen::MatrixXd weights = matrix_from_json(j.at("weights"));
  // the log parameterization is the exact one; "lengthscales" is the
  // readable mirror
  const Eigen::MatrixXd loglens = matrix_from_json(j.at("log_lengthscales"));
  return RbfPolicy(centers, weights.col(0), loglens.col(0),
                   j.at("bound").get<double>());
}

void PolicyCheckpoint::save(const std::string& path) const {
  json j{{"format", "pimdp-policy-checkpoint"},
         {"version", 1},
         {"env", env_name},
         {"space", space},
         {"policy", json::parse(policy.to_json())},
         {"basis", json::parse(pi_basis_to_json(basis))}};
  atomic_write_file(path, j.dump(2));
}

PolicyCheckpoint PolicyCheckpoint::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open policy checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("bad policy checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "pimdp-policy-checkpoint")
    throw ConfigError("not a policy checkpoint file");
  PolicyCheckpoint ck;
  ck.env_name = j.at("env").get<std::string>();
  ck.space = j.at("space").get<std::string>();
  ck.policy = RbfPolicy::from_json(j.at("policy").dump());
  ck.basis = pi_basis_from_json(j.at("basis").dump());
  return ck;
}

}  // namespace pimdp
