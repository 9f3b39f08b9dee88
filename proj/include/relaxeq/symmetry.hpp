#pragma once

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "relaxeq/errors.hpp"

namespace relaxeq {

using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

enum class SymmetryKind { Continuous, Discrete };

/// The abstract group a representation is built on.
struct GroupId {
  enum class Family { SO2, SO3, Cyclic };
  Family family;
  int order = 0;  // Cyclic only

  bool operator==(const GroupId&) const = default;
  SymmetryKind kind() const { return family == Family::Cyclic ? SymmetryKind::Discrete : SymmetryKind::Continuous; }
  std::size_t generator_count() const { return family == Family::SO3 ? 3 : 1; }
  std::string name() const;
};

/// One abstract group element, drawn once and applied to every block.
struct GroupDraw {
  double angle = 0.0;                              // SO2
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // SO3
  int power = 0;                                   // Cyclic: g^power
};

/// Irreducible building block of a representation.
struct Atom {
  enum class Type { SO2Std, SO3Std, CnRot, CnRegular, Trivial };
  Type type;
  int param = 0;  // n for the cyclic actions, d for Trivial

  int dim() const;
  std::string name() const;
  std::optional<GroupId> group() const;
  /// Generator images for the given group (zeros / identity when trivial).
  std::vector<Matrix> generators(const GroupId& group) const;
  Matrix matrix(const std::optional<GroupId>& group, const GroupDraw& draw) const;

  bool operator==(const Atom&) const = default;
};

/// Contiguous coordinate range treated as one unit by nonlinearities and
/// invariant readouts. Trivial atoms contribute one block per coordinate.
struct Block {
  std::size_t offset;
  std::size_t size;
  bool trivial;
};

/// Representation matrix of a sampled group element.
struct GroupElement {
  Matrix matrix;
};

/// A group acting linearly on R^dim; immutable after construction.
class SymmetrySpec {
 public:
  static SymmetrySpec so2_std();
  static SymmetrySpec so3_std();
  static SymmetrySpec cn_rot(int n);
  static SymmetrySpec cn_regular(int n);
  static SymmetrySpec trivial(int d);
  /// Builtin by name: "so2_std", "so3_std", "cn_rot", "cn_regular", "trivial".
  static SymmetrySpec builtin(std::string_view name, int param = 0);
  /// Parses expressions like "copies(so2_std,3)" or "direct_sum(so3_std,trivial(2))".
  static SymmetrySpec parse(std::string_view text);

  static SymmetrySpec direct_sum(const SymmetrySpec& a, const SymmetrySpec& b);
  static SymmetrySpec copies(const SymmetrySpec& a, int m);

  SymmetryKind kind() const;
  int dim() const { return dim_; }
  const std::string& name() const { return name_; }
  const std::vector<Atom>& atoms() const { return atoms_; }
  std::vector<std::size_t> atom_offsets() const;
  std::vector<Block> blocks() const;
  const std::optional<GroupId>& group() const { return group_; }
  bool is_trivial() const { return !group_.has_value(); }

  /// dρ(A_k) for continuous specs; empty otherwise.
  const std::vector<Matrix>& algebra_generators() const;
  /// ρ(g_j) for discrete specs; empty otherwise.
  const std::vector<Matrix>& group_generators() const;
  /// Generator images with respect to a (possibly wider) group; a trivial
  /// spec yields zero matrices (continuous) or identities (discrete).
  std::vector<Matrix> generators_for(const GroupId& group) const;

  Matrix matrix(const GroupDraw& draw) const;
  GroupElement sample(Rng& rng) const;

  bool operator==(const SymmetrySpec& o) const { return atoms_ == o.atoms_; }

 private:
  SymmetrySpec(std::vector<Atom> atoms, std::string name);

  std::vector<Atom> atoms_;
  std::string name_;
  int dim_ = 0;
  std::optional<GroupId> group_;
  std::vector<Matrix> generators_;
  std::vector<Matrix> empty_;
};

/// Generator images of two representations of a common group.
struct GeneratorPair {
  SymmetryKind kind = SymmetryKind::Continuous;
  std::optional<GroupId> group;
  std::vector<Matrix> in;
  std::vector<Matrix> out;
};

GeneratorPair pair_generators(const SymmetrySpec& rep_in, const SymmetrySpec& rep_out);

/// Common group of two specs; throws ConfigError when they act by different groups.
std::optional<GroupId> common_group(const SymmetrySpec& a, const SymmetrySpec& b);

/// Haar-distributed draw from a group (uniform angle, uniform quaternion, uniform power).
GroupDraw draw_element(const std::optional<GroupId>& group, Rng& rng);

Matrix rotation2(double angle);
/// Rotation from a unit quaternion (w, x, y, z).
Eigen::Matrix3d quaternion_to_rotation(double w, double x, double y, double z);

/// Matrix exponential by scaling-and-squaring with a truncated Taylor series.
Matrix expm(const Matrix& a, double tol = 1e-13);

}  // namespace relaxeq
