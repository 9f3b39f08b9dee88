#include "relaxeq/intertwiner.hpp"

#include <map>
#include <mutex>

namespace relaxeq {

namespace {

constexpr std::size_t kMaxEntries = 1000000;

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return k;
}

std::string atoms_key(const SymmetrySpec& s) {
  std::string key;
  for (const Atom& a : s.atoms()) key += a.name() + ";";
  return key;
}

}  // namespace

Tensor to_tensor(const Matrix& m) {
  Tensor t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.at(i, j) = m(i, j);
  return t;
}

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  return m;
}

Matrix constraint_matrix(const GeneratorPair& pair) {
  if (pair.in.empty()) return Matrix(0, 0);
  const Eigen::Index n_in = pair.in.front().rows();
  const Eigen::Index n_out = pair.out.front().rows();
  const Eigen::Index block = n_in * n_out;
  Matrix c(block * static_cast<Eigen::Index>(pair.in.size()), block);
  const Matrix eye_in = Matrix::Identity(n_in, n_in);
  const Matrix eye_out = Matrix::Identity(n_out, n_out);
  for (std::size_t k = 0; k < pair.in.size(); ++k) {
    // vec(A W) = (A (x) I) vec(W),  vec(W B) = (I (x) B^T) vec(W)  for row-major vec.
    c.middleRows(static_cast<Eigen::Index>(k) * block, block) =
        kron(pair.out[k], eye_in) - kron(eye_out, pair.in[k].transpose());
  }
  return c;
}

Matrix null_space(const Matrix& constraints) {
  const Eigen::Index n = constraints.cols();
  if (constraints.rows() == 0) return Matrix::Identity(n, n);
  Eigen::JacobiSVD<Matrix> svd(constraints, Eigen::ComputeFullV);
  const auto& sigma = svd.singularValues();
  const double smax = sigma.size() ? sigma.maxCoeff() : 0.0;
  const double threshold = 1e-10 * smax;
  std::vector<Eigen::Index> null_cols;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i >= sigma.size() || smax == 0.0 || sigma(i) < threshold) null_cols.push_back(i);
  }
  Matrix basis(n, static_cast<Eigen::Index>(null_cols.size()));
  for (std::size_t k = 0; k < null_cols.size(); ++k) basis.col(static_cast<Eigen::Index>(k)) = svd.matrixV().col(null_cols[k]);
  return basis;
}

IntertwinerBasis solve_basis(const SymmetrySpec& rep_in, const SymmetrySpec& rep_out) {
  const auto in_dim = static_cast<std::size_t>(rep_in.dim());
  const auto out_dim = static_cast<std::size_t>(rep_out.dim());
  if (in_dim * out_dim > kMaxEntries) {
    throw DimensionError("intertwiner problem too large: " + std::to_string(out_dim) + "x" + std::to_string(in_dim));
  }
  const std::optional<GroupId> group = common_group(rep_in, rep_out);

  IntertwinerBasis result;
  result.in_dim = in_dim;
  result.out_dim = out_dim;

  std::map<std::pair<std::string, std::string>, Matrix> block_cache;
  const auto in_offs = rep_in.atom_offsets();
  const auto out_offs = rep_out.atom_offsets();
  for (std::size_t i = 0; i < rep_out.atoms().size(); ++i) {
    const Atom& ao = rep_out.atoms()[i];
    for (std::size_t j = 0; j < rep_in.atoms().size(); ++j) {
      const Atom& ai = rep_in.atoms()[j];
      auto key = std::make_pair(ao.name(), ai.name());
      auto it = block_cache.find(key);
      if (it == block_cache.end()) {
        GeneratorPair pair;
        if (group) {
          pair.kind = group->kind();
          pair.group = group;
          pair.in = ai.generators(*group);
          pair.out = ao.generators(*group);
        }
        Matrix ns = pair.in.empty() ? Matrix::Identity(ao.dim() * ai.dim(), ao.dim() * ai.dim())
                                    : null_space(constraint_matrix(pair));
        it = block_cache.emplace(key, std::move(ns)).first;
      }
      const Matrix& ns = it->second;
      for (Eigen::Index k = 0; k < ns.cols(); ++k) {
        Matrix b = Matrix::Zero(static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in_dim));
        for (int r = 0; r < ao.dim(); ++r)
          for (int c = 0; c < ai.dim(); ++c)
            b(static_cast<Eigen::Index>(out_offs[i]) + r, static_cast<Eigen::Index>(in_offs[j]) + c) = ns(r * ai.dim() + c, k);
        result.basis.push_back(std::move(b));
      }
    }
  }

  const std::size_t d = result.basis.size();
  result.stacked = Tensor(Shape{out_dim * in_dim, d});
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t r = 0; r < out_dim; ++r)
      for (std::size_t c = 0; c < in_dim; ++c)
        result.stacked.at(r * in_dim + c, k) = result.basis[k](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  return result;
}

std::shared_ptr<const IntertwinerBasis> cached_basis(const SymmetrySpec& rep_in, const SymmetrySpec& rep_out) {
  static std::mutex mutex;
  static std::map<std::pair<std::string, std::string>, std::shared_ptr<const IntertwinerBasis>> cache;
  auto key = std::make_pair(atoms_key(rep_in), atoms_key(rep_out));
  {
    std::lock_guard lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  auto basis = std::make_shared<const IntertwinerBasis>(solve_basis(rep_in, rep_out));
  std::lock_guard lock(mutex);
  return cache.emplace(key, std::move(basis)).first->second;
}

Var assemble(const IntertwinerBasis& basis, const Var& coeffs) {
  if (coeffs.value().size() != basis.dim()) {
    throw DimensionError("assemble: " + std::to_string(coeffs.value().size()) + " coefficients for a basis of dimension " +
                         std::to_string(basis.dim()));
  }
  const Shape out_shape{basis.out_dim, basis.in_dim};
  Tape& tape = coeffs.tape();
  if (basis.dim() == 0) {
    return tape.record(Tensor(out_shape), {coeffs}, [](const Tensor&, std::vector<Tensor>&) {});
  }
  Var column = reshape(coeffs, Shape{basis.dim(), 1});
  return reshape(matmul(tape.constant(basis.stacked), column), out_shape);
}

Matrix assemble(const IntertwinerBasis& basis, const std::vector<double>& coeffs) {
  if (coeffs.size() != basis.dim()) throw DimensionError("assemble: coefficient count differs from basis dimension");
  Matrix w = Matrix::Zero(static_cast<Eigen::Index>(basis.out_dim), static_cast<Eigen::Index>(basis.in_dim));
  for (std::size_t k = 0; k < coeffs.size(); ++k) w += coeffs[k] * basis.basis[k];
  return w;
}

std::vector<double> project_coefficients(const IntertwinerBasis& basis, const Matrix& m) {
  std::vector<double> c;
  c.reserve(basis.dim());
  for (const Matrix& b : basis.basis) c.push_back((b.array() * m.array()).sum());
  return c;
}

double constraint_residual(const IntertwinerBasis& basis, const SymmetrySpec& rep_in, const SymmetrySpec& rep_out) {
  const GeneratorPair pair = pair_generators(rep_in, rep_out);
  double worst = 0.0;
  for (const Matrix& b : basis.basis)
    for (std::size_t k = 0; k < pair.in.size(); ++k) worst = std::max(worst, (pair.out[k] * b - b * pair.in[k]).norm());
  return worst;
}

}  // namespace relaxeq
