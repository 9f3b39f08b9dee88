#pragma once

#include <memory>
#include <vector>

#include "relaxeq/symmetry.hpp"
#include "relaxeq/tensor.hpp"

namespace relaxeq {

/// Orthonormal basis of the equivariant linear maps rep_in -> rep_out.
struct IntertwinerBasis {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<Matrix> basis;  // each out_dim x in_dim
  /// Row-major vectorizations as columns: [(out_dim*in_dim) x d].
  Tensor stacked;

  std::size_t dim() const { return basis.size(); }
};

/// Null-space solve of the commutation constraints. The constraint
/// decouples over pairs of atoms, so each (out atom, in atom) block is
/// solved on its own with an SVD and embedded; results are orthonormal.
IntertwinerBasis solve_basis(const SymmetrySpec& rep_in, const SymmetrySpec& rep_out);

/// Memoized solve_basis, safe to call from several threads.
std::shared_ptr<const IntertwinerBasis> cached_basis(const SymmetrySpec& rep_in, const SymmetrySpec& rep_out);

/// Orthonormal null space (as columns) of a constraint matrix, threshold 1e-10 * sigma_max.
Matrix null_space(const Matrix& constraints);

/// Stacked constraint matrix acting on the row-major vec(W) of an
/// out_dim x in_dim map.
Matrix constraint_matrix(const GeneratorPair& pair);

/// W_e = sum_i c_i B_i, differentiable in the coefficients.
Var assemble(const IntertwinerBasis& basis, const Var& coeffs);
Matrix assemble(const IntertwinerBasis& basis, const std::vector<double>& coeffs);

/// Coefficients of the orthogonal projection of m onto the span of the basis.
std::vector<double> project_coefficients(const IntertwinerBasis& basis, const Matrix& m);

/// Largest generator residual over all basis elements.
double constraint_residual(const IntertwinerBasis& basis, const SymmetrySpec& rep_in, const SymmetrySpec& rep_out);

Tensor to_tensor(const Matrix& m);
Matrix to_matrix(const Tensor& t);

}  // namespace relaxeq
