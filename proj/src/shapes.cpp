#include "diffcbf/shapes.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "diffcbf/errors.hpp"

namespace diffcbf {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

struct LocalEval {
  double value = 0.0;
  VectorXd grad;
  MatrixXd hess;
  bool has_hess = false;
};

// Capsule gauge in the body frame: smallest alpha with
// dist(y, segment scaled by alpha) <= alpha * radius.
LocalEval capsule_local(const Capsule& c, const VectorXd& y, bool want_grad) {
  LocalEval out;
  const int d = static_cast<int>(y.size());
  const double axial = y[0];
  VectorXd perp = y;
  perp[0] = 0.0;
  const double rho = perp.norm();
  const double abs_a = std::abs(axial);
  const double half_l = 0.5 * c.segment_length;
  const double rad = c.radius;
  out.grad = VectorXd::Zero(d);

  if (abs_a * rad <= rho * half_l) {
    // Perpendicular band: the nearest segment point is interior.
    out.value = rho / rad;
    if (want_grad && rho > 0.0) out.grad = perp / (rho * rad);
    return out;
  }
  // End cap: (|a| - alpha L/2)^2 + rho^2 = alpha^2 R^2 with |a| >= alpha L/2.
  const double sq = axial * axial + rho * rho;
  if (sq == 0.0) return out;
  const double quad = rad * rad - half_l * half_l;
  const double disc = axial * axial * c.segment_length * c.segment_length + 4.0 * quad * sq;
  const double alpha = 2.0 * sq / (abs_a * c.segment_length + std::sqrt(std::max(disc, 0.0)));
  out.value = alpha;
  if (want_grad) {
    const double gap = abs_a - alpha * half_l;
    const double sgn = axial >= 0.0 ? 1.0 : -1.0;
    const double d_alpha = -c.segment_length * gap - 2.0 * alpha * rad * rad;
    VectorXd dphi = 2.0 * perp;
    dphi[0] = 2.0 * gap * sgn;
    out.grad = -dphi / d_alpha;
  }
  return out;
}

LocalEval local_eval(const ShapeSpec& shape, const VectorXd& y, bool want_grad, bool want_hess) {
  return std::visit(
      Overloaded{
          [&](const Sphere& s) {
            LocalEval e;
            const double inv = 1.0 / (s.radius * s.radius);
            e.value = y.squaredNorm() * inv;
            if (want_grad) e.grad = 2.0 * inv * y;
            if (want_hess) {
              e.hess = 2.0 * inv * MatrixXd::Identity(y.size(), y.size());
              e.has_hess = true;
            }
            return e;
          },
          [&](const Ellipsoid& el) {
            LocalEval e;
            const VectorXd w = el.semi_axes.array().square().inverse().matrix();
            e.value = (y.array().square() * w.array()).sum();
            if (want_grad) e.grad = 2.0 * (w.array() * y.array()).matrix();
            if (want_hess) {
              e.hess = (2.0 * w).asDiagonal();
              e.has_hess = true;
            }
            return e;
          },
          [&](const Capsule& c) { return capsule_local(c, y, want_grad); },
          [&](const Polytope& poly) {
            LocalEval e;
            const VectorXd ratios =
                ((poly.normals * y).array() / poly.offsets.array()).matrix();
            Eigen::Index best = 0;
            e.value = ratios.maxCoeff(&best);
            if (want_grad) e.grad = poly.normals.row(best).transpose() / poly.offsets[best];
            return e;
          },
      },
      shape.variant());
}

void check_point(const ShapeSpec& shape, const Pose& pose, const VectorXd& p) {
  if (pose.dim() != shape.dim() || p.size() != shape.dim()) {
    throw DimensionMismatch("shape, pose and point dimensions differ");
  }
  if (!p.allFinite()) throw ValidationError("query point is not finite");
}

// Directions that would be extreme rays of the recession cone {y : A y <= 0}.
std::vector<VectorXd> recession_candidates(const MatrixXd& a) {
  std::vector<VectorXd> out;
  const int n = static_cast<int>(a.rows());
  if (a.cols() == 2) {
    for (int i = 0; i < n; ++i) {
      VectorXd v(2);
      v << -a(i, 1), a(i, 0);
      out.push_back(v);
      out.push_back(-v);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const Eigen::Vector3d v =
            Eigen::Vector3d(a.row(i).transpose()).cross(Eigen::Vector3d(a.row(j).transpose()));
        if (v.norm() < 1e-12) continue;
        out.push_back(v);
        out.push_back(-v);
      }
    }
  }
  return out;
}

double polytope_vertex_radius(const Polytope& poly) {
  const int n = static_cast<int>(poly.normals.rows());
  const int d = static_cast<int>(poly.normals.cols());
  double radius = 0.0;
  std::vector<int> idx(d);
  // Enumerate d-subsets of the facets.
  std::vector<bool> mask(n, false);
  std::fill(mask.begin(), mask.begin() + d, true);
  do {
    MatrixXd sub(d, d);
    VectorXd rhs(d);
    int k = 0;
    for (int i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      sub.row(k) = poly.normals.row(i);
      rhs[k] = poly.offsets[i];
      ++k;
    }
    Eigen::FullPivLU<MatrixXd> lu(sub);
    if (lu.rank() < d) continue;
    const VectorXd v = lu.solve(rhs);
    const VectorXd slack = poly.offsets - poly.normals * v;
    if (slack.minCoeff() >= -1e-9 * (1.0 + poly.offsets.maxCoeff())) {
      radius = std::max(radius, v.norm());
    }
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return radius;
}

}  // namespace

ShapeSpec::ShapeSpec(Variant v, int dim) : variant_(std::move(v)), dim_(dim) {
  if (dim != 2 && dim != 3) throw DimensionMismatch("shape dimension must be 2 or 3");
  validate();
}

ShapeSpec ShapeSpec::sphere(double radius, int dim) { return ShapeSpec(Sphere{radius}, dim); }

ShapeSpec ShapeSpec::ellipsoid(const VectorXd& semi_axes) {
  return ShapeSpec(Ellipsoid{semi_axes}, static_cast<int>(semi_axes.size()));
}

ShapeSpec ShapeSpec::capsule(double radius, double segment_length, int dim) {
  return ShapeSpec(Capsule{radius, segment_length}, dim);
}

ShapeSpec ShapeSpec::polytope(const MatrixXd& normals, const VectorXd& offsets) {
  return ShapeSpec(Polytope{normals, offsets}, static_cast<int>(normals.cols()));
}

ShapeSpec ShapeSpec::box(const VectorXd& half_extents) {
  const int d = static_cast<int>(half_extents.size());
  MatrixXd normals = MatrixXd::Zero(2 * d, d);
  VectorXd offsets(2 * d);
  for (int i = 0; i < d; ++i) {
    normals(2 * i, i) = 1.0;
    normals(2 * i + 1, i) = -1.0;
    offsets[2 * i] = half_extents[i];
    offsets[2 * i + 1] = half_extents[i];
  }
  return polytope(normals, offsets);
}

bool ShapeSpec::is_smooth() const {
  return std::holds_alternative<Sphere>(variant_) || std::holds_alternative<Ellipsoid>(variant_);
}

std::string ShapeSpec::kind() const {
  return std::visit(Overloaded{[](const Sphere&) { return std::string("sphere"); },
                               [](const Ellipsoid&) { return std::string("ellipsoid"); },
                               [](const Capsule&) { return std::string("capsule"); },
                               [](const Polytope&) { return std::string("polytope"); }},
                    variant_);
}

double ShapeSpec::bounding_radius() const {
  return std::visit(
      Overloaded{[](const Sphere& s) { return s.radius; },
                 [](const Ellipsoid& e) { return e.semi_axes.maxCoeff(); },
                 [](const Capsule& c) { return c.radius + 0.5 * c.segment_length; },
                 [](const Polytope& p) { return polytope_vertex_radius(p); }},
      variant_);
}

void ShapeSpec::validate() const {
  std::visit(
      Overloaded{
          [](const Sphere& s) {
            if (!(s.radius > 0.0) || !std::isfinite(s.radius)) {
              throw ValidationError("sphere radius must be positive");
            }
          },
          [this](const Ellipsoid& e) {
            if (e.semi_axes.size() != dim_) throw DimensionMismatch("ellipsoid axes vs dimension");
            if (!e.semi_axes.allFinite() || e.semi_axes.minCoeff() <= 0.0) {
              throw ValidationError("ellipsoid semi-axes must be positive");
            }
          },
          [](const Capsule& c) {
            if (!(c.radius > 0.0) || !std::isfinite(c.radius)) {
              throw ValidationError("capsule radius must be positive");
            }
            if (!(c.segment_length >= 0.0) || !std::isfinite(c.segment_length)) {
              throw ValidationError("capsule segment length must be non-negative");
            }
          },
          [this](const Polytope& p) {
            if (p.normals.cols() != dim_ || p.normals.rows() != p.offsets.size()) {
              throw DimensionMismatch("polytope normals/offsets shape mismatch");
            }
            if (p.normals.rows() <= dim_) {
              throw ValidationError("polytope needs more than D halfspaces to be bounded");
            }
            if (!p.normals.allFinite() || !p.offsets.allFinite()) {
              throw ValidationError("polytope has non-finite entries");
            }
            if (p.offsets.minCoeff() <= 0.0) {
              throw ValidationError("polytope offsets must be positive (origin interior)");
            }
            for (int i = 0; i < p.normals.rows(); ++i) {
              if (p.normals.row(i).norm() < 1e-12) {
                throw ValidationError("polytope has a zero normal");
              }
            }
            Eigen::FullPivLU<MatrixXd> lu(p.normals);
            if (lu.rank() < dim_) throw ValidationError("polytope is unbounded (rank-deficient)");
            for (const VectorXd& y : recession_candidates(p.normals)) {
              const double tol = 1e-12 * y.norm() * p.normals.norm();
              if ((p.normals * y).maxCoeff() <= tol) {
                throw ValidationError("polytope is unbounded (normals do not span)");
              }
            }
          },
      },
      variant_);
}

ScalingEval eval_scaling(const ShapeSpec& shape, const Pose& pose, const VectorXd& p,
                         ScalingOrder order) {
  check_point(shape, pose, p);
  const bool want_hess = order == ScalingOrder::Hessian;
  const bool want_grad = order != ScalingOrder::Value;
  if (want_hess && !shape.is_smooth()) {
    throw UnsupportedError("hessian requested for non-smooth shape '" + shape.kind() + "'");
  }
  const MatrixXd rot = pose.rotation();
  const VectorXd y = rot.transpose() * (p - pose.position());
  const LocalEval e = local_eval(shape, y, want_grad, want_hess);
  ScalingEval out;
  out.value = e.value;
  if (want_grad) out.gradient = rot * e.grad;
  if (want_hess) out.hessian = rot * e.hess * rot.transpose();
  return out;
}

double scaling_gauge(const ShapeSpec& shape, const Pose& pose, const VectorXd& p) {
  const double f = eval_scaling(shape, pose, p).value;
  return shape.is_smooth() ? std::sqrt(f) : f;
}

ScalingPoseDerivatives scaling_pose_derivatives(const ShapeSpec& shape, const Pose& pose,
                                                const VectorXd& p) {
  check_point(shape, pose, p);
  if (!shape.is_smooth()) {
    throw UnsupportedError("pose derivatives need a smooth shape, got '" + shape.kind() + "'");
  }
  const int d = shape.dim();
  const MatrixXd rot = pose.rotation();
  const VectorXd rel = p - pose.position();
  const VectorXd y = rot.transpose() * rel;
  const LocalEval e = local_eval(shape, y, true, true);
  const auto d_rot = pose.rotation_derivatives();

  ScalingPoseDerivatives out;
  out.d_mu = VectorXd::Zero(pose.param_count());
  out.d_p_mu = MatrixXd::Zero(d, pose.param_count());
  out.d_mu.head(d) = -rot * e.grad;
  out.d_p_mu.leftCols(d) = -rot * e.hess * rot.transpose();
  for (int k = 0; k < pose.orientation_size(); ++k) {
    const VectorXd dy = d_rot[k].transpose() * rel;
    out.d_mu[d + k] = e.grad.dot(dy);
    out.d_p_mu.col(d + k) = d_rot[k] * e.grad + rot * e.hess * dy;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

ConeBlock make_block(ConeKind kind, int owner, int rows, int num_vars, int n_params) {
  ConeBlock b;
  b.kind = kind;
  b.owner = owner;
  b.G = MatrixXd::Zero(rows, num_vars);
  b.h = VectorXd::Zero(rows);
  b.dG.assign(n_params, MatrixXd::Zero(rows, num_vars));
  b.dh.assign(n_params, VectorXd::Zero(rows));
  return b;
}

void append_shape_blocks(const ShapeSpec& shape, const Pose& pose, int owner, int aux_index,
                         int num_vars, std::vector<ConeBlock>& blocks) {
  const int d = shape.dim();
  const int alpha = d;
  const int n_params = pose.param_count();
  const VectorXd& r = pose.position();
  const MatrixXd rot = pose.rotation();
  const auto d_rot = pose.rotation_derivatives();

  std::visit(
      Overloaded{
          [&](const Sphere& s) {
            ConeBlock b = make_block(ConeKind::SecondOrder, owner, d + 1, num_vars, n_params);
            b.G(0, alpha) = -s.radius;
            for (int i = 0; i < d; ++i) {
              b.G(1 + i, i) = -1.0;
              b.h[1 + i] = -r[i];
              b.dh[i][1 + i] = -1.0;
            }
            blocks.push_back(std::move(b));
          },
          [&](const Ellipsoid& el) {
            ConeBlock b = make_block(ConeKind::SecondOrder, owner, d + 1, num_vars, n_params);
            const MatrixXd scale = el.semi_axes.array().inverse().matrix().asDiagonal();
            const MatrixXd e = scale * rot.transpose();
            b.G(0, alpha) = -1.0;
            b.G.block(1, 0, d, d) = -e;
            b.h.tail(d) = -e * r;
            for (int j = 0; j < d; ++j) b.dh[j].tail(d) = -e.col(j);
            for (int k = 0; k < pose.orientation_size(); ++k) {
              const MatrixXd de = scale * d_rot[k].transpose();
              b.dG[d + k].block(1, 0, d, d) = -de;
              b.dh[d + k].tail(d) = -de * r;
            }
            blocks.push_back(std::move(b));
          },
          [&](const Capsule& c) {
            const double half_l = 0.5 * c.segment_length;
            ConeBlock lin = make_block(ConeKind::Orthant, owner, 2, num_vars, n_params);
            lin.G(0, alpha) = -half_l;
            lin.G(0, aux_index) = 1.0;
            lin.G(1, alpha) = -half_l;
            lin.G(1, aux_index) = -1.0;
            blocks.push_back(std::move(lin));

            ConeBlock b = make_block(ConeKind::SecondOrder, owner, d + 1, num_vars, n_params);
            b.G(0, alpha) = -c.radius;
            const VectorXd axis = rot.col(0);
            for (int i = 0; i < d; ++i) {
              b.G(1 + i, i) = -1.0;
              b.G(1 + i, aux_index) = axis[i];
              b.h[1 + i] = -r[i];
              b.dh[i][1 + i] = -1.0;
            }
            for (int k = 0; k < pose.orientation_size(); ++k) {
              b.dG[d + k].block(1, aux_index, d, 1) = d_rot[k].col(0);
            }
            blocks.push_back(std::move(b));
          },
          [&](const Polytope& poly) {
            const int n = static_cast<int>(poly.offsets.size());
            ConeBlock b = make_block(ConeKind::Orthant, owner, n, num_vars, n_params);
            const MatrixXd e = poly.normals * rot.transpose();
            b.G.col(alpha) = -poly.offsets;
            b.G.leftCols(d) = e;
            b.h = e * r;
            for (int j = 0; j < d; ++j) b.dh[j] = e.col(j);
            for (int k = 0; k < pose.orientation_size(); ++k) {
              const MatrixXd de = poly.normals * d_rot[k].transpose();
              b.dG[d + k].leftCols(d) = de;
              b.dh[d + k] = de * r;
            }
            blocks.push_back(std::move(b));
          },
      },
      shape.variant());
}

bool needs_aux(const ShapeSpec& s) { return std::holds_alternative<Capsule>(s.variant()); }

}  // namespace

int ConeProblem::num_rows() const {
  int n = 0;
  for (const auto& b : blocks) n += b.size();
  return n;
}

int ConeProblem::num_orthant_blocks() const {
  return static_cast<int>(std::count_if(blocks.begin(), blocks.end(),
                                        [](const ConeBlock& b) { return b.kind == ConeKind::Orthant; }));
}

int ConeProblem::num_soc_blocks() const {
  return static_cast<int>(blocks.size()) - num_orthant_blocks();
}

MatrixXd ConeProblem::stacked_G() const {
  MatrixXd g(num_rows(), num_vars);
  int row = 0;
  for (const auto& b : blocks) {
    g.middleRows(row, b.size()) = b.G;
    row += b.size();
  }
  return g;
}

VectorXd ConeProblem::stacked_h() const {
  VectorXd h(num_rows());
  int row = 0;
  for (const auto& b : blocks) {
    h.segment(row, b.size()) = b.h;
    row += b.size();
  }
  return h;
}

ConeProblem to_cone_program(const ShapeSpec& a, const Pose& pose_a, const ShapeSpec& b,
                            const Pose& pose_b) {
  if (a.dim() != b.dim() || pose_a.dim() != a.dim() || pose_b.dim() != b.dim()) {
    throw DimensionMismatch("shape pair mixes 2D and 3D bodies");
  }
  a.validate();
  b.validate();
  pose_a.validate();
  pose_b.validate();

  ConeProblem prob;
  prob.dim = a.dim();
  prob.alpha_index = prob.dim;
  int next = prob.dim + 1;
  const int aux_a = needs_aux(a) ? next++ : -1;
  const int aux_b = needs_aux(b) ? next++ : -1;
  prob.num_vars = next;
  if (aux_a >= 0) prob.aux_owner.push_back(0);
  if (aux_b >= 0) prob.aux_owner.push_back(1);
  prob.c = VectorXd::Zero(prob.num_vars);
  prob.c[prob.alpha_index] = 1.0;
  prob.param_counts = {pose_a.param_count(), pose_b.param_count()};
  append_shape_blocks(a, pose_a, 0, aux_a, prob.num_vars, prob.blocks);
  append_shape_blocks(b, pose_b, 1, aux_b, prob.num_vars, prob.blocks);
  return prob;
}

bool cone_membership(const ShapeSpec& shape, const Pose& pose, const VectorXd& p, double alpha,
                     double tol) {
  check_point(shape, pose, p);
  const int d = shape.dim();
  const bool aux = needs_aux(shape);
  const int num_vars = d + 1 + (aux ? 1 : 0);
  std::vector<ConeBlock> blocks;
  append_shape_blocks(shape, pose, 0, aux ? d + 1 : -1, num_vars, blocks);

  VectorXd x(num_vars);
  x.head(d) = p;
  x[d] = alpha;
  if (aux) {
    const auto& c = std::get<Capsule>(shape.variant());
    const double axial = pose.rotation().col(0).dot(p - pose.position());
    const double lim = 0.5 * alpha * c.segment_length;
    x[d + 1] = std::clamp(axial, -lim, lim);
  }
  for (const auto& b : blocks) {
    const VectorXd s = b.h - b.G * x;
    if (b.kind == ConeKind::Orthant) {
      if (s.minCoeff() < -tol) return false;
    } else if (s[0] - s.tail(s.size() - 1).norm() < -tol) {
      return false;
    }
  }
  return true;
}

}  // namespace diffcbf
