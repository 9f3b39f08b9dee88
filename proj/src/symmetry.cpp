#include "relaxeq/symmetry.hpp"

#include <cctype>
#include <cmath>
#include <numbers>

namespace relaxeq {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Matrix cyclic_shift(int n) {
  Matrix p = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) p((i + 1) % n, i) = 1.0;
  return p;
}

Matrix so3_generator(int axis) {
  Matrix j = Matrix::Zero(3, 3);
  switch (axis) {
    case 0: j(1, 2) = -1.0; j(2, 1) = 1.0; break;
    case 1: j(0, 2) = 1.0; j(2, 0) = -1.0; break;
    default: j(0, 1) = -1.0; j(1, 0) = 1.0; break;
  }
  return j;
}

Matrix block_diag(const std::vector<Matrix>& parts, int dim) {
  Matrix m = Matrix::Zero(dim, dim);
  int off = 0;
  for (const Matrix& p : parts) {
    m.block(off, off, p.rows(), p.cols()) = p;
    off += static_cast<int>(p.rows());
  }
  return m;
}

void check_finite_order(const Matrix& g, const std::string& what) {
  Matrix p = g;
  const Matrix eye = Matrix::Identity(g.rows(), g.cols());
  for (int n = 1; n <= 10000; ++n) {
    if ((p - eye).norm() < 1e-9) return;
    p = p * g;
  }
  throw ConfigError(what + ": group generator does not have finite order");
}

}  // namespace

std::string GroupId::name() const {
  switch (family) {
    case Family::SO2: return "SO(2)";
    case Family::SO3: return "SO(3)";
    case Family::Cyclic: return "C" + std::to_string(order);
  }
  return "?";
}

int Atom::dim() const {
  switch (type) {
    case Type::SO2Std: return 2;
    case Type::SO3Std: return 3;
    case Type::CnRot: return 2;
    case Type::CnRegular: return param;
    case Type::Trivial: return param;
  }
  return 0;
}

std::string Atom::name() const {
  switch (type) {
    case Type::SO2Std: return "so2_std";
    case Type::SO3Std: return "so3_std";
    case Type::CnRot: return "cn_rot(" + std::to_string(param) + ")";
    case Type::CnRegular: return "cn_regular(" + std::to_string(param) + ")";
    case Type::Trivial: return "trivial(" + std::to_string(param) + ")";
  }
  return "?";
}

std::optional<GroupId> Atom::group() const {
  switch (type) {
    case Type::SO2Std: return GroupId{GroupId::Family::SO2};
    case Type::SO3Std: return GroupId{GroupId::Family::SO3};
    case Type::CnRot:
    case Type::CnRegular: return GroupId{GroupId::Family::Cyclic, param};
    case Type::Trivial: return std::nullopt;
  }
  return std::nullopt;
}

std::vector<Matrix> Atom::generators(const GroupId& group) const {
  const int d = dim();
  if (type == Type::Trivial) {
    const Matrix fill = group.kind() == SymmetryKind::Continuous ? Matrix(Matrix::Zero(d, d)) : Matrix(Matrix::Identity(d, d));
    return std::vector<Matrix>(group.generator_count(), fill);
  }
  if (group != *this->group()) throw ConfigError(name() + " does not act by group " + group.name());
  switch (type) {
    case Type::SO2Std: return {(Matrix(2, 2) << 0, -1, 1, 0).finished()};
    case Type::SO3Std: return {so3_generator(0), so3_generator(1), so3_generator(2)};
    case Type::CnRot: return {rotation2(kTwoPi / param)};
    case Type::CnRegular: return {cyclic_shift(param)};
    case Type::Trivial: break;
  }
  return {};
}

Matrix Atom::matrix(const std::optional<GroupId>& group, const GroupDraw& draw) const {
  const int d = dim();
  if (type == Type::Trivial || !group) return Matrix::Identity(d, d);
  switch (type) {
    case Type::SO2Std: return rotation2(draw.angle);
    case Type::SO3Std: return draw.rotation;
    case Type::CnRot: return rotation2(kTwoPi * draw.power / param);
    case Type::CnRegular: {
      Matrix p = Matrix::Identity(d, d);
      const Matrix shift = cyclic_shift(param);
      for (int k = 0; k < draw.power; ++k) p = shift * p;
      return p;
    }
    case Type::Trivial: break;
  }
  return Matrix::Identity(d, d);
}

// ---------------------------------------------------------------------------

SymmetrySpec::SymmetrySpec(std::vector<Atom> atoms, std::string name) : name_(std::move(name)) {
  // Adjacent trivial atoms merge so that copies(trivial(1), m) == trivial(m).
  for (const Atom& a : atoms) {
    if (a.dim() == 0) continue;
    if (a.type == Atom::Type::Trivial && !atoms_.empty() && atoms_.back().type == Atom::Type::Trivial) {
      atoms_.back().param += a.param;
    } else {
      atoms_.push_back(a);
    }
  }
  for (const Atom& a : atoms_) {
    dim_ += a.dim();
    auto g = a.group();
    if (!g) continue;
    if (group_ && *group_ != *g) {
      throw ConfigError("cannot combine representations of " + group_->name() + " and " + g->name());
    }
    group_ = g;
  }
  if (atoms_.size() == 1 && atoms_[0].type == Atom::Type::Trivial) name_ = atoms_[0].name();
  if (group_) generators_ = generators_for(*group_);
}

SymmetrySpec SymmetrySpec::so2_std() { return SymmetrySpec({Atom{Atom::Type::SO2Std}}, "so2_std"); }
SymmetrySpec SymmetrySpec::so3_std() { return SymmetrySpec({Atom{Atom::Type::SO3Std}}, "so3_std"); }

SymmetrySpec SymmetrySpec::cn_rot(int n) {
  if (n < 2) throw ConfigError("cn_rot requires n >= 2, got " + std::to_string(n));
  SymmetrySpec s({Atom{Atom::Type::CnRot, n}}, "cn_rot(" + std::to_string(n) + ")");
  check_finite_order(s.generators_[0], s.name_);
  return s;
}

SymmetrySpec SymmetrySpec::cn_regular(int n) {
  if (n < 2) throw ConfigError("cn_regular requires n >= 2, got " + std::to_string(n));
  SymmetrySpec s({Atom{Atom::Type::CnRegular, n}}, "cn_regular(" + std::to_string(n) + ")");
  check_finite_order(s.generators_[0], s.name_);
  return s;
}

SymmetrySpec SymmetrySpec::trivial(int d) {
  if (d < 1) throw ConfigError("trivial requires d >= 1, got " + std::to_string(d));
  return SymmetrySpec({Atom{Atom::Type::Trivial, d}}, "trivial(" + std::to_string(d) + ")");
}

SymmetrySpec SymmetrySpec::builtin(std::string_view name, int param) {
  if (name == "so2_std") return so2_std();
  if (name == "so3_std") return so3_std();
  if (name == "cn_rot") return cn_rot(param);
  if (name == "cn_regular") return cn_regular(param);
  if (name == "trivial") return trivial(param);
  throw ConfigError("unknown symmetry '" + std::string(name) + "'");
}

SymmetrySpec SymmetrySpec::direct_sum(const SymmetrySpec& a, const SymmetrySpec& b) {
  std::vector<Atom> atoms = a.atoms_;
  atoms.insert(atoms.end(), b.atoms_.begin(), b.atoms_.end());
  return SymmetrySpec(std::move(atoms), "direct_sum(" + a.name_ + "," + b.name_ + ")");
}

SymmetrySpec SymmetrySpec::copies(const SymmetrySpec& a, int m) {
  if (m < 1) throw ConfigError("copies requires m >= 1, got " + std::to_string(m));
  std::vector<Atom> atoms;
  for (int i = 0; i < m; ++i) atoms.insert(atoms.end(), a.atoms_.begin(), a.atoms_.end());
  return SymmetrySpec(std::move(atoms), "copies(" + a.name_ + "," + std::to_string(m) + ")");
}

namespace {

class SpecParser {
 public:
  explicit SpecParser(std::string_view text) : text_(text) {}

  SymmetrySpec parse_all() {
    SymmetrySpec s = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing input");
    return s;
  }

 private:
  SymmetrySpec expr() {
    const std::string id = ident();
    if (id == "so2_std" || id == "so3_std") {
      skip_ws();
      if (peek() == '(') {
        expect('(');
        expect(')');
      }
      return SymmetrySpec::builtin(id);
    }
    expect('(');
    if (id == "copies") {
      SymmetrySpec inner = expr();
      expect(',');
      const int m = integer();
      expect(')');
      return SymmetrySpec::copies(inner, m);
    }
    if (id == "direct_sum") {
      SymmetrySpec lhs = expr();
      expect(',');
      SymmetrySpec rhs = expr();
      expect(')');
      return SymmetrySpec::direct_sum(lhs, rhs);
    }
    if (id == "cn_rot" || id == "cn_regular" || id == "trivial") {
      const int n = integer();
      expect(')');
      return SymmetrySpec::builtin(id, n);
    }
    fail("unknown symmetry '" + id + "'");
  }

  std::string ident() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
    if (start == pos_) fail("expected a name");
    return std::string(text_.substr(start, pos_ - start));
  }

  int integer() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("expected an integer");
    return std::stoi(std::string(text_.substr(start, pos_ - start)));
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("cannot parse representation '" + std::string(text_) + "' at offset " +
                      std::to_string(pos_) + ": " + msg);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

SymmetrySpec SymmetrySpec::parse(std::string_view text) { return SpecParser(text).parse_all(); }

SymmetryKind SymmetrySpec::kind() const { return group_ ? group_->kind() : SymmetryKind::Continuous; }

std::vector<std::size_t> SymmetrySpec::atom_offsets() const {
  std::vector<std::size_t> offs;
  std::size_t off = 0;
  for (const Atom& a : atoms_) {
    offs.push_back(off);
    off += static_cast<std::size_t>(a.dim());
  }
  return offs;
}

std::vector<Block> SymmetrySpec::blocks() const {
  std::vector<Block> out;
  std::size_t off = 0;
  for (const Atom& a : atoms_) {
    const auto d = static_cast<std::size_t>(a.dim());
    if (a.type == Atom::Type::Trivial) {
      for (std::size_t i = 0; i < d; ++i) out.push_back(Block{off + i, 1, true});
    } else {
      out.push_back(Block{off, d, false});
    }
    off += d;
  }
  return out;
}

const std::vector<Matrix>& SymmetrySpec::algebra_generators() const {
  return kind() == SymmetryKind::Continuous ? generators_ : empty_;
}

const std::vector<Matrix>& SymmetrySpec::group_generators() const {
  return kind() == SymmetryKind::Discrete ? generators_ : empty_;
}

std::vector<Matrix> SymmetrySpec::generators_for(const GroupId& group) const {
  if (group_ && *group_ != group) {
    throw ConfigError(name_ + " acts by " + group_->name() + ", not " + group.name());
  }
  std::vector<std::vector<Matrix>> per_atom;
  for (const Atom& a : atoms_) per_atom.push_back(a.generators(group));
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < group.generator_count(); ++k) {
    std::vector<Matrix> parts;
    for (const auto& g : per_atom) parts.push_back(g[k]);
    out.push_back(block_diag(parts, dim_));
  }
  return out;
}

Matrix SymmetrySpec::matrix(const GroupDraw& draw) const {
  std::vector<Matrix> parts;
  for (const Atom& a : atoms_) parts.push_back(a.matrix(group_, draw));
  return block_diag(parts, dim_);
}

GroupElement SymmetrySpec::sample(Rng& rng) const { return GroupElement{matrix(draw_element(group_, rng))}; }

std::optional<GroupId> common_group(const SymmetrySpec& a, const SymmetrySpec& b) {
  if (a.group() && b.group() && *a.group() != *b.group()) {
    throw ConfigError("representations " + a.name() + " and " + b.name() + " act by different groups");
  }
  return a.group() ? a.group() : b.group();
}

GeneratorPair pair_generators(const SymmetrySpec& rep_in, const SymmetrySpec& rep_out) {
  GeneratorPair p;
  p.group = common_group(rep_in, rep_out);
  if (!p.group) return p;
  p.kind = p.group->kind();
  p.in = rep_in.generators_for(*p.group);
  p.out = rep_out.generators_for(*p.group);
  return p;
}

GroupDraw draw_element(const std::optional<GroupId>& group, Rng& rng) {
  GroupDraw d;
  if (!group) return d;
  switch (group->family) {
    case GroupId::Family::SO2: {
      std::uniform_real_distribution<double> u(0.0, kTwoPi);
      d.angle = u(rng);
      break;
    }
    case GroupId::Family::SO3: {
      std::normal_distribution<double> n(0.0, 1.0);
      double q[4];
      double norm = 0.0;
      do {
        norm = 0.0;
        for (double& c : q) {
          c = n(rng);
          norm += c * c;
        }
      } while (norm < 1e-24);
      norm = std::sqrt(norm);
      d.rotation = quaternion_to_rotation(q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
      break;
    }
    case GroupId::Family::Cyclic: {
      std::uniform_int_distribution<int> u(0, group->order - 1);
      d.power = u(rng);
      break;
    }
  }
  return d;
}

Matrix rotation2(double angle) {
  Matrix r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

Eigen::Matrix3d quaternion_to_rotation(double w, double x, double y, double z) {
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Matrix expm(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) {
    throw DimensionError("expm: non-square matrix " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  const auto n = a.rows();
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Matrix b = a / std::ldexp(1.0, squarings);
  // With |b| <= 1/2 the tail after term k is bounded by |term_k|.
  Matrix result = Matrix::Identity(n, n);
  Matrix term = Matrix::Identity(n, n);
  for (int k = 1; k < 64; ++k) {
    term = term * b / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().colwise().sum().maxCoeff() < tol) break;
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

}  // namespace relaxeq
