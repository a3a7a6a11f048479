#include "manifold_alm/problems.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace malm {

namespace {

void check_shape(const Matrix& q, Eigen::Index n, Eigen::Index r, const char* what) {
  if (q.rows() != n || q.cols() != r) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

/// Center each column and scale it to unit Euclidean length.
Matrix normalize_columns(Matrix a) {
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    auto col = a.col(j);
    col.array() -= col.mean();
    const double len = col.norm();
    if (len > 0.0) col /= len;
  }
  return a;
}

}  // namespace

// --- CM ---------------------------------------------------------------------

CmInstance build_cm(Eigen::Index n, double mu, double domain_length) {
  if (n < 3) throw std::invalid_argument("build_cm: need n >= 3");
  const double h = domain_length / static_cast<double>(n);
  const double diag = 1.0 / (h * h);
  const double off = -0.5 / (h * h);
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(3 * n));
  for (Eigen::Index i = 0; i < n; ++i) {
    entries.emplace_back(i, i, diag);
    entries.emplace_back(i, (i + 1) % n, off);
    entries.emplace_back(i, (i + n - 1) % n, off);
  }
  CmInstance inst;
  inst.H.resize(n, n);
  inst.H.setFromTriplets(entries.begin(), entries.end());
  inst.mu = mu;
  inst.domain_length = domain_length;
  return inst;
}

CmProblem::CmProblem(CmInstance instance, Eigen::Index r) : inst_(std::move(instance)), r_(r) {
  if (r_ < 1 || r_ > inst_.H.rows()) throw std::invalid_argument("CmProblem: need 1 <= r <= n");
}

double CmProblem::smooth_value(const Matrix& q) const {
  check_shape(q, n(), r_, "CmProblem");
  return frobenius_inner(q, Matrix(inst_.H * q));
}

Matrix CmProblem::euclidean_grad_smooth(const Matrix& q) const {
  check_shape(q, n(), r_, "CmProblem");
  return 2.0 * (inst_.H * q);
}

Matrix CmProblem::euclidean_hessvec_smooth(const Matrix& q, const Matrix& w) const {
  check_shape(q, n(), r_, "CmProblem");
  check_shape(w, n(), r_, "CmProblem");
  return 2.0 * (inst_.H * w);
}

ProblemOracle::SmoothParts CmProblem::smooth_value_and_grad(const Matrix& q) const {
  check_shape(q, n(), r_, "CmProblem");
  Matrix hq = inst_.H * q;
  const double value = frobenius_inner(q, hq);
  return {value, 2.0 * hq};
}

// --- SPCA -------------------------------------------------------------------

SpcaData generate_spca_data(Seed seed, Eigen::Index n, Eigen::Index p) {
  if (n < p || p < 1) throw std::invalid_argument("generate_spca_data: need n >= p >= 1");
  const Matrix a = gaussian_matrix(seed.derive(0), p, n);
  const Matrix w = gaussian_matrix(seed.derive(1), p, 1);

  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector s(p);
  for (Eigen::Index i = 0; i < p; ++i) s(i) = std::pow(w(i, 0), 4) + 1e-5;
  std::sort(s.data(), s.data() + p, std::greater<>());

  SpcaData data;
  data.raw = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  data.singular_values = s;
  data.A = normalize_columns(data.raw);
  return data;
}

SpcaInstance build_spca(Seed seed, Eigen::Index n, double mu, Eigen::Index p) {
  SpcaInstance inst;
  inst.A = generate_spca_data(seed, n, p).A;
  inst.M = inst.A.transpose() * inst.A;
  inst.mu = mu;
  return inst;
}

SpcaProblem::SpcaProblem(SpcaInstance instance, Eigen::Index r) : inst_(std::move(instance)), r_(r) {
  if (r_ < 1 || r_ > inst_.A.cols()) throw std::invalid_argument("SpcaProblem: need 1 <= r <= n");
}

Matrix SpcaProblem::gram_times(const Matrix& x) const {
  return inst_.A.transpose() * (inst_.A * x);
}

double SpcaProblem::smooth_value(const Matrix& q) const {
  check_shape(q, n(), r_, "SpcaProblem");
  return -(inst_.A * q).squaredNorm();
}

Matrix SpcaProblem::euclidean_grad_smooth(const Matrix& q) const {
  check_shape(q, n(), r_, "SpcaProblem");
  return -2.0 * gram_times(q);
}

Matrix SpcaProblem::euclidean_hessvec_smooth(const Matrix& q, const Matrix& w) const {
  check_shape(q, n(), r_, "SpcaProblem");
  check_shape(w, n(), r_, "SpcaProblem");
  return -2.0 * gram_times(w);
}

ProblemOracle::SmoothParts SpcaProblem::smooth_value_and_grad(const Matrix& q) const {
  check_shape(q, n(), r_, "SpcaProblem");
  const Matrix aq = inst_.A * q;
  return {-aq.squaredNorm(), -2.0 * (inst_.A.transpose() * aq)};
}

// --- Constrained SPCA -------------------------------------------------------

ConstrainedSpcaInstance build_cspca(Seed seed, Eigen::Index n, double mu, double delta,
                                    Eigen::Index r, Eigen::Index p) {
  if (r < 2) throw std::invalid_argument("build_cspca: need r >= 2");
  if (!(delta >= 0.0)) throw std::invalid_argument("build_cspca: delta must be nonnegative");
  ConstrainedSpcaInstance inst;
  inst.A = normalize_columns(gaussian_matrix(seed, p, n));
  inst.M = inst.A.transpose() * inst.A;
  inst.mu = mu;
  inst.Delta = Matrix::Constant(r, r, delta);
  inst.Delta.diagonal().setZero();
  return inst;
}

ConstrainedSpcaProblem::ConstrainedSpcaProblem(ConstrainedSpcaInstance instance, Eigen::Index r)
    : SpcaProblem(SpcaInstance{std::move(instance.A), std::move(instance.M), instance.mu}, r),
      delta_(std::move(instance.Delta)) {
  if (r < 2) throw std::invalid_argument("ConstrainedSpcaProblem: need r >= 2");
  if (delta_.rows() != r || delta_.cols() != r) {
    throw std::invalid_argument("ConstrainedSpcaProblem: Delta must be r x r");
  }
  if ((delta_.array() < 0.0).any()) throw std::invalid_argument("ConstrainedSpcaProblem: Delta < 0");
}

Vector ConstrainedSpcaProblem::h2(const Matrix& q) const {
  check_shape(q, n(), r_, "ConstrainedSpcaProblem");
  const Matrix aq = inst_.A * q;
  const Matrix cross = aq.transpose() * aq;
  Vector out(num_inequalities());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < r_; ++i) {
    for (Eigen::Index j = i + 1; j < r_; ++j, ++k) {
      out(2 * k) = cross(i, j) - delta_(i, j);
      out(2 * k + 1) = -cross(i, j) - delta_(i, j);
    }
  }
  return out;
}

Matrix ConstrainedSpcaProblem::pair_weights(const Vector& w) const {
  if (w.size() != num_inequalities()) throw std::invalid_argument("ConstrainedSpcaProblem: weight size");
  Matrix s = Matrix::Zero(r_, r_);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < r_; ++i) {
    for (Eigen::Index j = i + 1; j < r_; ++j, ++k) {
      s(i, j) = s(j, i) = w(2 * k) - w(2 * k + 1);
    }
  }
  return s;
}

Matrix ConstrainedSpcaProblem::h2_adjoint(const Matrix& q, const Vector& w) const {
  check_shape(q, n(), r_, "ConstrainedSpcaProblem");
  // grad of Q_iᵀMQ_j puts MQ_j in column i and MQ_i in column j.
  return gram_times(q) * pair_weights(w);
}

Vector ConstrainedSpcaProblem::h2_directional(const Matrix& q, const Matrix& w) const {
  check_shape(q, n(), r_, "ConstrainedSpcaProblem");
  check_shape(w, n(), r_, "ConstrainedSpcaProblem");
  const Matrix d = (inst_.A * w).transpose() * (inst_.A * q);
  const Matrix both = d + d.transpose();
  Vector out(num_inequalities());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < r_; ++i) {
    for (Eigen::Index j = i + 1; j < r_; ++j, ++k) {
      out(2 * k) = both(i, j);
      out(2 * k + 1) = -both(i, j);
    }
  }
  return out;
}

Matrix ConstrainedSpcaProblem::h2_hessvec(const Matrix& q, const Vector& w, const Matrix& dir) const {
  check_shape(q, n(), r_, "ConstrainedSpcaProblem");
  check_shape(dir, n(), r_, "ConstrainedSpcaProblem");
  return gram_times(dir) * pair_weights(w);
}

StiefelPoint ConstrainedSpcaProblem::feasible_point(const StiefelPoint& /*x0*/) const {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(inst_.M);
  // Eigenvalues ascend; take the last r columns, largest first.
  Matrix v = eig.eigenvectors().rightCols(r_).rowwise().reverse();
  return StiefelPoint(qr_orthonormal_factor(v));
}

// --- Metrics ----------------------------------------------------------------

double cpav(const Matrix& a, const Matrix& v) {
  if (a.cols() != v.rows()) throw std::invalid_argument("cpav: shape mismatch");
  const Matrix av = a * v;
  const Matrix c = av.transpose() * av;
  const double off = c.squaredNorm() - c.diagonal().squaredNorm();
  return (c.trace() - std::sqrt(std::max(off, 0.0))) / a.squaredNorm();
}

double sparsity_percent(const Matrix& q, double zero_tol) {
  if (!(zero_tol > 0.0)) throw std::invalid_argument("sparsity_percent: zero_tol must be positive");
  const auto zeros = (q.array().abs() <= zero_tol).count();
  return 100.0 * static_cast<double>(zeros) / static_cast<double>(q.size());
}

// --- Descriptors ------------------------------------------------------------

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::Cm: return "cm";
    case ProblemKind::Spca: return "spca";
    case ProblemKind::Cspca: return "cspca";
  }
  return "unknown";
}

ProblemKind parse_problem_kind(std::string_view name) {
  if (name == "cm") return ProblemKind::Cm;
  if (name == "spca") return ProblemKind::Spca;
  if (name == "cspca") return ProblemKind::Cspca;
  throw std::invalid_argument("unknown problem '" + std::string(name) + "'");
}

void to_json(nlohmann::json& j, const InstanceDescriptor& d) {
  j = nlohmann::json{{"problem", std::string(to_string(d.kind))},
                     {"n", d.n},
                     {"r", d.r},
                     {"mu", d.mu},
                     {"seed", d.seed},
                     {"p", d.p},
                     {"domain_length", d.domain_length},
                     {"delta", d.delta}};
}

void from_json(const nlohmann::json& j, InstanceDescriptor& d) {
  d.kind = parse_problem_kind(j.at("problem").get<std::string>());
  d.n = j.at("n").get<Eigen::Index>();
  d.r = j.at("r").get<Eigen::Index>();
  d.mu = j.at("mu").get<double>();
  d.seed = j.value("seed", std::uint64_t{0});
  d.p = j.value("p", Eigen::Index{50});
  d.domain_length = j.value("domain_length", 50.0);
  d.delta = j.value("delta", 1e-8);
}

std::unique_ptr<ProblemOracle> make_problem(const InstanceDescriptor& d) {
  switch (d.kind) {
    case ProblemKind::Cm:
      return std::make_unique<CmProblem>(build_cm(d.n, d.mu, d.domain_length), d.r);
    case ProblemKind::Spca:
      return std::make_unique<SpcaProblem>(build_spca(Seed{d.seed}, d.n, d.mu, d.p), d.r);
    case ProblemKind::Cspca:
      return std::make_unique<ConstrainedSpcaProblem>(
          build_cspca(Seed{d.seed}, d.n, d.mu, d.delta, d.r, d.p), d.r);
  }
  throw std::invalid_argument("make_problem: unknown kind");
}

}  // namespace malm
