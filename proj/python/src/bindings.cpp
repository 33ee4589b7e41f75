#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "diffcbf/config_io.hpp"
#include "diffcbf/diffgrad.hpp"
#include "diffcbf/gradcheck.hpp"
#include "diffcbf/kinematics.hpp"
#include "diffcbf/minscale.hpp"
#include "diffcbf/safety_filter.hpp"
#include "diffcbf/sim.hpp"

namespace py = pybind11;
using namespace diffcbf;

namespace {

MinScaleMethod parse_method(const std::string& s) {
  if (s == "auto") return MinScaleMethod::Auto;
  if (s == "conic") return MinScaleMethod::Conic;
  if (s == "smooth_kkt") return MinScaleMethod::SmoothKkt;
  throw py::value_error("method must be auto, conic or smooth_kkt");
}

py::dict result_dict(const MinScaleResult& r) {
  py::dict d;
  d["alpha_star"] = r.alpha_star;
  d["p_star"] = r.p_star;
  d["nu_a"] = r.nu_a;
  d["nu_b"] = r.nu_b;
  d["status"] = to_string(r.status);
  d["method"] = to_string(r.method);
  d["iterations"] = r.iterations;
  d["kkt_residual"] = r.kkt_residual;
  d["degenerate_contact"] = r.degenerate_contact;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Minimum-scaling collision queries, their gradients and CBF safety filtering.";

  // Translators are tried newest first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", PyExc_ValueError);
  py::register_exception<UnsupportedError>(m, "UnsupportedError", PyExc_NotImplementedError);
  py::register_exception<SingularKktError>(m, "SingularKktError", PyExc_ArithmeticError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_RuntimeError);

  py::class_<Pose>(m, "Pose")
      .def_static("planar", py::overload_cast<double, double, double>(&Pose::planar), py::arg("x"),
                  py::arg("y"), py::arg("heading") = 0.0)
      .def_static(
          "spatial",
          [](const VectorXd& r, std::optional<VectorXd> q) {
            if (r.size() != 3) throw DimensionMismatch("position must have 3 entries");
            if (q && q->size() != 4) throw DimensionMismatch("quaternion must have 4 entries");
            return Pose::spatial(r, q ? Quat(*q) : Quat(1, 0, 0, 0));
          },
          py::arg("position"), py::arg("quaternion") = py::none(),
          "Quaternion in (w, x, y, z) order.")
      .def_static("identity", &Pose::identity, py::arg("dim") = 3)
      .def_property_readonly("dim", &Pose::dim)
      .def_property_readonly("position", &Pose::position)
      .def_property_readonly("orientation", &Pose::orientation)
      .def_property_readonly("rotation", &Pose::rotation)
      .def("params", &Pose::params);

  py::class_<ShapeSpec>(m, "Shape")
      .def_static("sphere", &ShapeSpec::sphere, py::arg("radius"), py::arg("dim") = 3)
      .def_static("ellipsoid", &ShapeSpec::ellipsoid, py::arg("semi_axes"))
      .def_static("capsule", &ShapeSpec::capsule, py::arg("radius"), py::arg("segment_length"),
                  py::arg("dim") = 3)
      .def_static("polytope", &ShapeSpec::polytope, py::arg("normals"), py::arg("offsets"))
      .def_static("box", &ShapeSpec::box, py::arg("half_extents"))
      .def_property_readonly("dim", &ShapeSpec::dim)
      .def_property_readonly("kind", &ShapeSpec::kind)
      .def_property_readonly("smooth", &ShapeSpec::is_smooth)
      .def("__repr__", [](const ShapeSpec& s) {
        return "<Shape " + s.kind() + " dim=" + std::to_string(s.dim()) + ">";
      });

  m.def(
      "scaling",
      [](const ShapeSpec& s, const Pose& p, const VectorXd& x) {
        return eval_scaling(s, p, x).value;
      },
      py::arg("shape"), py::arg("pose"), py::arg("point"), "Scaling function F at a world point.");

  m.def(
      "min_scale",
      [](const ShapeSpec& sa, const Pose& pa, const ShapeSpec& sb, const Pose& pb,
         const std::string& method) {
        MinScaleOptions o;
        o.method = parse_method(method);
        return result_dict(solve_min_scale({sa, pa}, {sb, pb}, o));
      },
      py::arg("shape_a"), py::arg("pose_a"), py::arg("shape_b"), py::arg("pose_b"),
      py::arg("method") = "auto");

  m.def(
      "grad_alpha",
      [](const ShapeSpec& sa, const Pose& pa, const ShapeSpec& sb, const Pose& pb,
         const std::string& method, bool best_effort) {
        if (method != "ift" && method != "smooth_linear") {
          throw py::value_error("method must be ift or smooth_linear");
        }
        const GradMethod gm = method == "ift" ? GradMethod::Ift : GradMethod::SmoothLinear;
        MinScaleOptions o;
        o.method = gm == GradMethod::Ift ? MinScaleMethod::Conic : MinScaleMethod::SmoothKkt;
        const Body a{sa, pa}, b{sb, pb};
        GradOptions go;
        go.best_effort = best_effort;
        const AlphaJacobian j = grad_alpha(solve_min_scale(a, b, o), a, b, gm, go);
        py::dict d;
        d["d_r1"] = j.d_r1;
        d["d_q1"] = j.d_q1;
        d["d_r2"] = j.d_r2;
        d["d_q2"] = j.d_q2;
        d["full"] = j.flat();
        d["degenerate"] = j.degenerate;
        d["condition"] = j.condition;
        return d;
      },
      py::arg("shape_a"), py::arg("pose_a"), py::arg("shape_b"), py::arg("pose_b"),
      py::arg("method") = "ift", py::arg("best_effort") = false,
      "d alpha* / d(r1, q1, r2, q2).");

  m.def(
      "solve_qp",
      [](const MatrixXd& P, const VectorXd& q, const MatrixXd& A, const VectorXd& b,
         std::optional<VectorXd> lower, std::optional<VectorXd> upper) {
        const QpResult r = solve_qp({P, q, A, b, lower, upper});
        py::dict d;
        d["status"] = to_string(r.status);
        d["u"] = r.u;
        d["objective"] = r.objective;
        d["active_set"] = r.active_set;
        d["multipliers"] = r.multipliers;
        d["certificate"] = r.certificate;
        d["iterations"] = r.iterations;
        return d;
      },
      py::arg("P"), py::arg("q"), py::arg("A"), py::arg("b"), py::arg("lower") = py::none(),
      py::arg("upper") = py::none(), "min 0.5 u'Pu + q'u  s.t.  A u >= b and optional bounds.");

  m.def(
      "quat_rate_matrix",
      [](const VectorXd& q) {
        if (q.size() != 4) throw DimensionMismatch("quaternion must have 4 entries");
        return MatrixXd(quat_rate_matrix(Quat(q)));
      },
      py::arg("q"));

  m.def(
      "unicycle_performance",
      [](const VectorXd& x, const VectorXd& target, double k_v, double k_omega) {
        if (x.size() != 3 || target.size() != 2) throw DimensionMismatch("state is (x, y, heading), target is (x, y)");
        return VectorXd(unicycle_performance({x[0], x[1], x[2]}, Eigen::Vector2d(target), {k_v, k_omega}));
      },
      py::arg("state"), py::arg("target"), py::arg("k_v") = 0.5, py::arg("k_omega") = 2.0);

  m.def(
      "simulate",
      [](const std::string& path) {
        const TrajectoryLog log = run_scenario(load_scenario(path));
        return summary_json(log, -1);
      },
      py::arg("path"), py::call_guard<py::gil_scoped_release>(),
      "Runs a scenario file and returns the run summary as JSON text.");

  m.def(
      "gradcheck",
      [](int seeds, std::uint64_t seed) {
        const GradCheckReport r = run_gradcheck(seeds, seed);
        py::dict d;
        d["pairs"] = r.pairs;
        d["max_fd_error"] = r.max_fd_error;
        d["max_ift_fd_error"] = r.max_ift_fd_error;
        d["max_method_gap"] = r.max_method_gap;
        d["passed"] = r.passed();
        return d;
      },
      py::arg("seeds") = 20, py::arg("seed") = 0);
}
