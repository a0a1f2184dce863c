#include "demi/gaussian_world.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "demi/errors.hpp"

namespace demi {

namespace {

constexpr int kFormatVersion = 1;

void check_finite(const Eigen::Matrix3d& m) {
  if (!m.allFinite()) throw InvariantError("TriCov: non-finite entry");
}

}  // namespace

TriCov::TriCov(const Eigen::Matrix3d& m) : m_(m) {
  check_finite(m_);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < i; ++j) {
      if (std::abs(m_(i, j) - m_(j, i)) > kSymmetryTol)
        throw InvariantError("TriCov: matrix is not symmetric");
    }
    if (std::abs(m_(i, i) - 1.0) > kDiagonalTol)
      throw InvariantError("TriCov: diagonal entries must be 1");
  }
  Eigen::LLT<Eigen::Matrix3d> llt(m_);
  if (llt.info() != Eigen::Success)
    throw InvariantError("TriCov: matrix is not positive definite");
  chol_ = llt.matrixL();
  for (int i = 0; i < 3; ++i) {
    if (!(chol_(i, i) > 0.0)) throw InvariantError("TriCov: zero Cholesky pivot");
  }
}

TriCov TriCov::from_lower(const std::array<double, 6>& v) {
  Eigen::Matrix3d m;
  m << v[0], v[1], v[3],
       v[1], v[2], v[4],
       v[3], v[4], v[5];
  return TriCov(m);
}

std::array<double, 6> TriCov::lower() const {
  return {m_(0, 0), m_(1, 0), m_(1, 1), m_(2, 0), m_(2, 1), m_(2, 2)};
}

TriCov TriCov::equicorrelated(double rho) {
  Eigen::Matrix3d m;
  m << 1.0, rho, rho,
       rho, 1.0, rho,
       rho, rho, 1.0;
  return TriCov(m);
}

TriMi analytical_mi(const Eigen::Matrix3d& cov) {
  const double det_all = cov.determinant();
  const double det_xxp = cov.topLeftCorner<2, 2>().determinant();
  const double det_xpy = cov.bottomRightCorner<2, 2>().determinant();
  const double var_xp = cov(1, 1);
  const double var_y = cov(2, 2);
  if (!(det_all > 0.0) || !(det_xxp > 0.0) || !(det_xpy > 0.0) || !(var_xp > 0.0) ||
      !(var_y > 0.0)) {
    throw InvariantError("analytical_mi: non-positive determinant");
  }
  TriMi mi;
  mi.joint = 0.5 * (std::log(det_xxp) + std::log(var_y) - std::log(det_all));
  mi.marginal = 0.5 * (std::log(var_xp) + std::log(var_y) - std::log(det_xpy));
  return mi;
}

ConditionalParams ConditionalParams::from_cov(const TriCov& cov) {
  const auto& s = cov.matrix();
  ConditionalParams p;
  p.var_y = s(2, 2);

  p.slope_xp = s(2, 1) / s(1, 1);
  const double res_xp = s(2, 2) - s(2, 1) * s(2, 1) / s(1, 1);
  if (!(res_xp > 0.0)) throw InvariantError("p(y|x'): residual variance not positive");
  p.log_var_xp = std::log(res_xp);
  p.var_xp = std::exp(p.log_var_xp);
  p.sd_xp = std::exp(0.5 * p.log_var_xp);

  const Eigen::Matrix2d a = s.topLeftCorner<2, 2>();
  const Eigen::Vector2d c(s(0, 2), s(1, 2));
  const Eigen::Vector2d b = a.llt().solve(c);
  p.joint_slope_x = b(0);
  p.joint_slope_xp = b(1);
  const double res_joint = s(2, 2) - b.dot(c);
  if (!(res_joint > 0.0)) throw InvariantError("p(y|x,x'): residual variance not positive");
  p.log_var_joint = std::log(res_joint);
  p.var_joint = std::exp(p.log_var_joint);
  return p;
}

double log_normal_pdf(double v, double mean, double var) {
  const double d = v - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

GaussianWorld::GaussianWorld(std::vector<TriCov> dims, WorldMetadata meta)
    : covs_(std::move(dims)), meta_(std::move(meta)) {
  if (covs_.empty()) throw InvariantError("GaussianWorld: needs at least one dimension");
  cond_.reserve(covs_.size());
  mi_.reserve(covs_.size());
  for (const auto& c : covs_) {
    cond_.push_back(ConditionalParams::from_cov(c));
    const TriMi m = analytical_mi(c);
    mi_.push_back(m);
    mi_joint_ += m.joint;
    mi_marg_ += m.marginal;
  }
  mi_cond_ = mi_joint_ - mi_marg_;
  // Rounding can leave an exactly-zero MI a hair below zero.
  if (mi_joint_ < -1e-12 || mi_marg_ < -1e-12 || mi_cond_ < -1e-9)
    throw InvariantError("GaussianWorld: negative mutual information");
}

JointSamples GaussianWorld::sample_joint(std::size_t n, Rng& rng) const {
  const auto d = static_cast<Eigen::Index>(dims());
  const auto rows = static_cast<Eigen::Index>(n);
  JointSamples s{Matrix(rows, d), Matrix(rows, d), Matrix(rows, d)};
  std::normal_distribution<double> normal;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto& l = covs_[static_cast<std::size_t>(i)].cholesky();
      const double z0 = normal(rng);
      const double z1 = normal(rng);
      const double z2 = normal(rng);
      s.x(r, i) = l(0, 0) * z0;
      s.xp(r, i) = l(1, 0) * z0 + l(1, 1) * z1;
      s.y(r, i) = l(2, 0) * z0 + l(2, 1) * z1 + l(2, 2) * z2;
    }
  }
  return s;
}

Matrix GaussianWorld::sample_y_given_xp(const RowRef& xp, std::size_t n, Rng& rng) const {
  const auto d = static_cast<Eigen::Index>(dims());
  if (xp.size() != d) throw InvariantError("sample_y_given_xp: x' has wrong length");
  if (!xp.allFinite()) throw InvariantError("sample_y_given_xp: x' not finite");
  Matrix out(static_cast<Eigen::Index>(n), d);
  std::normal_distribution<double> normal;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto& c = cond_[static_cast<std::size_t>(i)];
      out(r, i) = c.slope_xp * xp(i) + c.sd_xp * normal(rng);
    }
  }
  return out;
}

Matrix GaussianWorld::sample_marginal_y(std::size_t n, Rng& rng) const {
  const auto d = static_cast<Eigen::Index>(dims());
  Matrix out(static_cast<Eigen::Index>(n), d);
  std::normal_distribution<double> normal;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index i = 0; i < d; ++i) {
      out(r, i) = std::sqrt(cond_[static_cast<std::size_t>(i)].var_y) * normal(rng);
    }
  }
  return out;
}

double GaussianWorld::optimal_psi(const RowRef& xp, const RowRef& y) const {
  double total = 0.0;
  for (std::size_t i = 0; i < dims(); ++i) {
    const auto& c = cond_[i];
    const auto k = static_cast<Eigen::Index>(i);
    total += log_normal_pdf(y(k), c.slope_xp * xp(k), c.var_xp) -
             log_normal_pdf(y(k), 0.0, c.var_y);
  }
  return total;
}

double GaussianWorld::optimal_phi(const RowRef& xp, const RowRef& x, const RowRef& y) const {
  double total = 0.0;
  for (std::size_t i = 0; i < dims(); ++i) {
    const auto& c = cond_[i];
    const auto k = static_cast<Eigen::Index>(i);
    const double mean_joint = c.joint_slope_x * x(k) + c.joint_slope_xp * xp(k);
    total += log_normal_pdf(y(k), mean_joint, c.var_joint) -
             log_normal_pdf(y(k), c.slope_xp * xp(k), c.var_xp);
  }
  return total;
}

double GaussianWorld::optimal_joint(const RowRef& x, const RowRef& xp, const RowRef& y) const {
  double total = 0.0;
  for (std::size_t i = 0; i < dims(); ++i) {
    const auto& c = cond_[i];
    const auto k = static_cast<Eigen::Index>(i);
    const double mean_joint = c.joint_slope_x * x(k) + c.joint_slope_xp * xp(k);
    total += log_normal_pdf(y(k), mean_joint, c.var_joint) - log_normal_pdf(y(k), 0.0, c.var_y);
  }
  return total;
}

std::string GaussianWorld::to_json() const {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  auto dims_json = nlohmann::json::array();
  for (const auto& c : covs_) dims_json.push_back(c.lower());
  j["dims"] = std::move(dims_json);
  j["target_mi"] = meta_.target_mi ? nlohmann::json(*meta_.target_mi) : nlohmann::json();
  j["per_dim_mi"] = meta_.per_dim_mi;
  j["per_dim_alpha"] = meta_.per_dim_alpha;
  j["seed"] = meta_.seed ? nlohmann::json(*meta_.seed) : nlohmann::json();
  return j.dump(2) + "\n";
}

GaussianWorld GaussianWorld::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvariantError(std::string("world JSON: ") + e.what());
  }
  if (!j.contains("format_version") || j["format_version"].get<int>() != kFormatVersion)
    throw InvariantError("world JSON: unsupported format_version");
  if (!j.contains("dims") || !j["dims"].is_array())
    throw InvariantError("world JSON: missing dims");

  std::vector<TriCov> covs;
  for (const auto& entry : j["dims"]) {
    if (!entry.is_array() || entry.size() != 6)
      throw InvariantError("world JSON: each dim needs 6 lower-triangular entries");
    covs.push_back(TriCov::from_lower(entry.get<std::array<double, 6>>()));
  }
  WorldMetadata meta;
  if (j.contains("target_mi") && !j["target_mi"].is_null())
    meta.target_mi = j["target_mi"].get<double>();
  if (j.contains("per_dim_mi")) meta.per_dim_mi = j["per_dim_mi"].get<std::vector<double>>();
  if (j.contains("per_dim_alpha"))
    meta.per_dim_alpha = j["per_dim_alpha"].get<std::vector<double>>();
  if (j.contains("seed") && !j["seed"].is_null()) meta.seed = j["seed"].get<std::uint64_t>();
  return GaussianWorld(std::move(covs), std::move(meta));
}

void GaussianWorld::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << to_json();
}

GaussianWorld GaussianWorld::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

GaussianWorld uniform_world(const TriCov& cov, std::size_t dims) {
  return GaussianWorld(std::vector<TriCov>(dims, cov));
}

}  // namespace demi
