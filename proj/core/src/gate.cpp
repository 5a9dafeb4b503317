#include "carrm/gate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "carrm/error.hpp"
#include "carrm/random.hpp"

namespace carrm {

GateParams GateParams::zeros(Library rules, std::size_t dim) {
  GateParams p;
  const auto r = static_cast<Eigen::Index>(rules.size());
  p.rules = std::move(rules);
  p.alpha = Eigen::VectorXd::Zero(r);
  p.beta = Eigen::MatrixXd::Zero(r, static_cast<Eigen::Index>(dim));
  return p;
}

std::optional<std::size_t> GateParams::position(RuleId r) const {
  for (std::size_t i = 0; i < rules.size(); ++i)
    if (rules[i] == r) return i;
  return std::nullopt;
}

GateParams GateParams::normalized(RuleId base) const {
  const auto pos = position(base);
  if (!pos) throw Error(ErrorKind::InvalidArgument, "baseline rule not in library");
  GateParams out = *this;
  const auto b = static_cast<Eigen::Index>(*pos);
  out.alpha.array() -= alpha(b);
  out.beta.rowwise() -= beta.row(b);
  out.alpha(b) = 0.0;
  out.beta.row(b).setZero();
  out.baseline = base;
  return out;
}

namespace {

void check_dim(const GateParams& params, std::size_t d) {
  if (params.dim() != d)
    throw Error(ErrorKind::DimensionMismatch, "gate expects " + std::to_string(params.dim()) +
                                                  " features, got " + std::to_string(d));
}

// Row-wise softmax of alpha + Z beta^T, max-subtracted.
Eigen::MatrixXd softmax_rows(const GateParams& params, const Eigen::MatrixXd& Z) {
  Eigen::MatrixXd s = Z * params.beta.transpose();
  s.rowwise() += params.alpha.transpose();
  Eigen::VectorXd mx = s.rowwise().maxCoeff();
  s.colwise() -= mx;
  s = s.array().exp().matrix();
  Eigen::VectorXd total = s.rowwise().sum();
  for (Eigen::Index i = 0; i < s.rows(); ++i) s.row(i) /= total(i);
  return s;
}

}  // namespace

Eigen::VectorXd gate_weights(const GateParams& params, std::span<const double> z) {
  check_dim(params, z.size());
  Eigen::Map<const Eigen::VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
  Eigen::VectorXd s = params.alpha + params.beta * zv;
  s.array() -= s.maxCoeff();
  s = s.array().exp().matrix();
  return s / s.sum();
}

Prediction predict(const GateParams& params, std::span<const double> z, const RuleRow& row,
                   double m_min) {
  if (!(m_min > 0.0)) throw Error(ErrorKind::InvalidArgument, "m_min must be positive");
  const Eigen::VectorXd q = gate_weights(params, z);
  const std::size_t r = params.n_rules();
  Prediction p;
  p.q.assign(q.data(), q.data() + q.size());
  p.q_tilde.assign(r, 0.0);
  double ell = 0.0;
  double m = 0.0;
  for (std::size_t f = 0; f < r; ++f) {
    const auto& o = row[index_of(params.rules[f])];
    if (o.active) m += p.q[f];
    if (o.left) ell += p.q[f];
  }
  if (m > m_min) {
    for (std::size_t f = 0; f < r; ++f)
      if (row[index_of(params.rules[f])].active) p.q_tilde[f] = p.q[f] / m;
    p.g = ell / m;
  } else {
    p.guard_hit = true;
    p.g = ell / m_min;
  }
  p.g = std::clamp(p.g, 0.0, 1.0);
  return p;
}

Prediction predict(const GateParams& params, std::span<const double> z, const RuleRow& row) {
  return predict(params, z, row, params.m_min);
}

GateBatch make_batch(const RuleMatrix& matrix, const FeatureMatrix& features,
                     std::span<const double> targets, const Library& library,
                     std::span<const std::size_t> rows) {
  if (static_cast<std::size_t>(features.rows()) != matrix.size())
    throw Error(ErrorKind::LengthMismatch, "features and rule matrix differ in length");
  if (!targets.empty() && targets.size() != matrix.size())
    throw Error(ErrorKind::LengthMismatch, "targets and rule matrix differ in length");
  if (library.empty()) throw Error(ErrorKind::InvalidArgument, "empty rule library");

  GateBatch b;
  b.rules = library;
  if (rows.empty()) {
    b.rows.resize(matrix.size());
    std::iota(b.rows.begin(), b.rows.end(), 0);
  } else {
    b.rows.assign(rows.begin(), rows.end());
  }
  const auto n = static_cast<Eigen::Index>(b.rows.size());
  const auto r = static_cast<Eigen::Index>(library.size());
  b.Z.resize(n, features.cols());
  b.L.resize(n, r);
  b.A.resize(n, r);
  b.y = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t t = b.rows[static_cast<std::size_t>(i)];
    if (t >= matrix.size()) throw Error(ErrorKind::InvalidArgument, "row index out of range");
    b.Z.row(i) = features.row(static_cast<Eigen::Index>(t));
    const auto& row = matrix.row(t);
    for (Eigen::Index f = 0; f < r; ++f) {
      const auto& o = row[index_of(library[static_cast<std::size_t>(f)])];
      b.A(i, f) = o.active ? 1.0 : 0.0;
      b.L(i, f) = o.left ? 1.0 : 0.0;
    }
    if (!targets.empty()) b.y(i) = targets[t];
  }
  return b;
}

GateBatch restrict_batch(const GateBatch& batch, const Library& library) {
  GateBatch b;
  b.rules = library;
  b.Z = batch.Z;
  b.y = batch.y;
  b.rows = batch.rows;
  const auto n = batch.L.rows();
  b.L.resize(n, static_cast<Eigen::Index>(library.size()));
  b.A.resize(n, static_cast<Eigen::Index>(library.size()));
  for (std::size_t f = 0; f < library.size(); ++f) {
    auto it = std::find(batch.rules.begin(), batch.rules.end(), library[f]);
    if (it == batch.rules.end())
      throw Error(ErrorKind::InvalidArgument, "rule not present in source batch");
    const auto src = static_cast<Eigen::Index>(it - batch.rules.begin());
    b.L.col(static_cast<Eigen::Index>(f)) = batch.L.col(src);
    b.A.col(static_cast<Eigen::Index>(f)) = batch.A.col(src);
  }
  return b;
}

GateBatch with_targets(const GateBatch& batch, const Eigen::VectorXd& y) {
  if (y.size() != batch.y.size())
    throw Error(ErrorKind::LengthMismatch, "replacement targets differ in length");
  GateBatch b = batch;
  b.y = y;
  return b;
}

BatchPrediction predict_batch(const GateParams& params, const GateBatch& batch) {
  check_dim(params, batch.dim());
  if (params.rules != batch.rules)
    throw Error(ErrorKind::DimensionMismatch, "parameter and batch libraries differ");
  BatchPrediction out;
  out.q = softmax_rows(params, batch.Z);
  const Eigen::VectorXd ell = (out.q.array() * batch.L.array()).rowwise().sum();
  const Eigen::VectorXd m = (out.q.array() * batch.A.array()).rowwise().sum();
  const auto n = batch.Z.rows();
  out.g.resize(n);
  out.q_tilde = Eigen::MatrixXd::Zero(n, out.q.cols());
  out.guard_hit.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (m(i) > params.m_min) {
      out.g(i) = ell(i) / m(i);
      out.q_tilde.row(i) = (out.q.row(i).array() * batch.A.row(i).array()) / m(i);
    } else {
      out.guard_hit[static_cast<std::size_t>(i)] = true;
      out.g(i) = ell(i) / params.m_min;
    }
    out.g(i) = std::clamp(out.g(i), 0.0, 1.0);
  }
  return out;
}

double loss_and_gradient(const GateParams& params, const GateBatch& batch,
                         Eigen::VectorXd* grad_alpha, Eigen::MatrixXd* grad_beta) {
  check_dim(params, batch.dim());
  const auto n = batch.Z.rows();
  if (n == 0) throw Error(ErrorKind::EmptyDataset, "empty training batch");
  const Eigen::MatrixXd q = softmax_rows(params, batch.Z);
  const Eigen::ArrayXd ell = (q.array() * batch.L.array()).rowwise().sum();
  const Eigen::ArrayXd m = (q.array() * batch.A.array()).rowwise().sum();
  const double m_min = params.m_min;

  Eigen::ArrayXd g(n);
  std::vector<char> guard(static_cast<std::size_t>(n));
  std::vector<char> clamped(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool gh = !(m(i) > m_min);
    const double raw = gh ? ell(i) / m_min : ell(i) / m(i);
    guard[static_cast<std::size_t>(i)] = gh;
    clamped[static_cast<std::size_t>(i)] = raw > 1.0 || raw < 0.0;
    g(i) = std::clamp(raw, 0.0, 1.0);
  }
  const Eigen::ArrayXd e = g - batch.y.array();
  const double loss = e.square().mean();
  if (!std::isfinite(loss)) throw Error(ErrorKind::NonFiniteLoss, "training loss is not finite");
  if (!grad_alpha && !grad_beta) return loss;

  // dLoss/dscore_{i,f} = (2 e_i / n) * dg_i/dscore_{i,f}
  Eigen::MatrixXd ds(n, q.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    if (clamped[si]) {
      ds.row(i).setZero();
      continue;
    }
    const double c = 2.0 * e(i) / static_cast<double>(n);
    if (guard[si]) {
      ds.row(i) = (c / m_min) * (q.row(i).array() * (batch.L.row(i).array() - ell(i))).matrix();
    } else {
      ds.row(i) = (c / m(i)) *
                  (q.row(i).array() * (batch.L.row(i).array() - g(i) * batch.A.row(i).array()))
                      .matrix();
    }
  }
  if (grad_alpha) *grad_alpha = ds.colwise().sum().transpose();
  if (grad_beta) *grad_beta = ds.transpose() * batch.Z;
  return loss;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0))
    throw Error(ErrorKind::InvalidArgument, "learning_rate must be positive");
  if (!(cfg.m_min > 0.0)) throw Error(ErrorKind::InvalidArgument, "m_min must be positive");
  if (cfg.epochs < 0) throw Error(ErrorKind::InvalidArgument, "epochs must be non-negative");
  if (!(cfg.clip_norm > 0.0)) throw Error(ErrorKind::InvalidArgument, "clip_norm must be positive");
  for (double lr : cfg.lr_grid)
    if (!(lr > 0.0)) throw Error(ErrorKind::InvalidArgument, "lr_grid entries must be positive");
}

TrainResult train(const GateBatch& batch, const TrainConfig& cfg) {
  GateParams init = GateParams::zeros(batch.rules, batch.dim());
  if (cfg.init_scale > 0.0) {
    Rng rng(cfg.seed);
    std::normal_distribution<double> nd(0.0, cfg.init_scale);
    for (Eigen::Index i = 0; i < init.alpha.size(); ++i) init.alpha(i) = nd(rng);
    for (Eigen::Index i = 0; i < init.beta.size(); ++i) init.beta.data()[i] = nd(rng);
  }
  return train(batch, cfg, std::move(init));
}

TrainResult train(const GateBatch& batch, const TrainConfig& cfg, GateParams init) {
  validate(cfg);
  if (init.rules != batch.rules || init.dim() != batch.dim())
    throw Error(ErrorKind::DimensionMismatch, "initial parameters do not match the batch");
  GateParams p = std::move(init);
  p.m_min = cfg.m_min;

  Eigen::VectorXd ma = Eigen::VectorXd::Zero(p.alpha.size());
  Eigen::VectorXd va = ma;
  Eigen::MatrixXd mb = Eigen::MatrixXd::Zero(p.beta.rows(), p.beta.cols());
  Eigen::MatrixXd vb = mb;
  Eigen::VectorXd ga;
  Eigen::MatrixXd gb;

  TrainResult out;
  out.trace.reserve(static_cast<std::size_t>(cfg.epochs));
  double b1t = 1.0;
  double b2t = 1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = loss_and_gradient(p, batch, &ga, &gb);
    out.trace.push_back(loss);
    const double norm = std::sqrt(ga.squaredNorm() + gb.squaredNorm());
    if (norm > cfg.clip_norm) {
      const double s = cfg.clip_norm / norm;
      ga *= s;
      gb *= s;
    }
    b1t *= cfg.adam_beta1;
    b2t *= cfg.adam_beta2;
    ma = cfg.adam_beta1 * ma + (1.0 - cfg.adam_beta1) * ga;
    va = cfg.adam_beta2 * va + (1.0 - cfg.adam_beta2) * ga.cwiseAbs2();
    mb = cfg.adam_beta1 * mb + (1.0 - cfg.adam_beta1) * gb;
    vb = cfg.adam_beta2 * vb + (1.0 - cfg.adam_beta2) * gb.cwiseAbs2();
    const double step = cfg.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
    p.alpha.array() -= step * ma.array() / (va.array().sqrt() + cfg.adam_eps);
    p.beta.array() -= step * mb.array() / (vb.array().sqrt() + cfg.adam_eps);
  }
  out.final_mse = loss_and_gradient(p, batch, nullptr, nullptr);
  out.params = std::move(p);
  return out;
}

GradientCheck gradient_check(const GateParams& params, const GateBatch& batch,
                             std::uint64_t seed, std::size_t coordinates) {
  GradientCheck out;
  const auto pred = predict_batch(params, batch);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (pred.guard_hit[i]) {
      ++out.guard_excluded;
    } else {
      keep.push_back(i);
    }
  }
  if (keep.empty()) return out;
  GateBatch b;
  b.rules = batch.rules;
  const auto n = static_cast<Eigen::Index>(keep.size());
  b.Z.resize(n, batch.Z.cols());
  b.L.resize(n, batch.L.cols());
  b.A.resize(n, batch.A.cols());
  b.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = static_cast<Eigen::Index>(keep[static_cast<std::size_t>(i)]);
    b.Z.row(i) = batch.Z.row(src);
    b.L.row(i) = batch.L.row(src);
    b.A.row(i) = batch.A.row(src);
    b.y(i) = batch.y(src);
    b.rows.push_back(batch.rows[static_cast<std::size_t>(src)]);
  }

  Eigen::VectorXd ga;
  Eigen::MatrixXd gb;
  loss_and_gradient(params, b, &ga, &gb);

  const std::size_t n_alpha = static_cast<std::size_t>(params.alpha.size());
  const std::size_t total = n_alpha + static_cast<std::size_t>(params.beta.size());
  Rng rng(seed);
  constexpr double h = 1e-5;
  // Floor on the denominator so coordinates with a vanishing derivative
  // compare on an absolute scale.
  constexpr double floor = 1e-6;
  for (std::size_t c = 0; c < coordinates; ++c) {
    const std::size_t k = uniform_index(rng, total);
    GateParams plus = params;
    GateParams minus = params;
    double analytic;
    if (k < n_alpha) {
      const auto i = static_cast<Eigen::Index>(k);
      plus.alpha(i) += h;
      minus.alpha(i) -= h;
      analytic = ga(i);
    } else {
      const auto j = static_cast<Eigen::Index>(k - n_alpha);
      const auto row = j % params.beta.rows();
      const auto col = j / params.beta.rows();
      plus.beta(row, col) += h;
      minus.beta(row, col) -= h;
      analytic = gb(row, col);
    }
    const double numeric = (loss_and_gradient(plus, b, nullptr, nullptr) -
                            loss_and_gradient(minus, b, nullptr, nullptr)) /
                           (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / denom);
    ++out.coordinates;
  }
  return out;
}

Responsibilities responsibilities(const GateParams& params, const GateBatch& batch) {
  const auto pred = predict_batch(params, batch);
  Responsibilities out;
  out.menus = batch.size();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(pred.q_tilde.cols());
  std::size_t used = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (pred.guard_hit[i]) {
      ++out.guard_excluded;
      continue;
    }
    acc += pred.q_tilde.row(static_cast<Eigen::Index>(i)).transpose();
    ++used;
  }
  if (used > 0) acc /= static_cast<double>(used);
  out.w.assign(acc.data(), acc.data() + acc.size());
  return out;
}

}  // namespace carrm
