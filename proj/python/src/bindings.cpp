#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "vigil/json_codec.hpp"
#include "vigil/report.hpp"
#include "vigil/synthetic.hpp"
#include "vigil/trace_io.hpp"
#include "vigil/vigilance.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::handle& obj) {
  if (obj.is_none()) return json::object();
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

using TracePtr = std::shared_ptr<vigil::MissionTrace>;

vigil::VigilanceConfig config_of(const py::object& config, std::optional<double> theta) {
  auto c = vigil::codec::config_from_json(from_py(config));
  if (theta) c.theta_s = *theta;
  vigil::validate(c);
  return c;
}

std::optional<vigil::InterventionModel> intervention_of(const py::object& obj) {
  if (obj.is_none()) return std::nullopt;
  if (py::isinstance<py::str>(obj)) {
    const auto name = obj.cast<std::string>();
    if (name == "operator") return vigil::InterventionModel::operator_profile();
    if (name == "immediate") return vigil::InterventionModel{};
    if (name == "never") return vigil::InterventionModel::never();
    throw py::value_error("intervention: expected operator, immediate, never or a dict");
  }
  auto m = vigil::intervention_from_json(from_py(obj));
  vigil::validate(m);
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Herd vigilance scoring, mission replay and metrics";

  static py::exception<vigil::TraceError> trace_error(m, "TraceError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const vigil::TraceError& e) {
      py::set_error(trace_error, e.what());
    } catch (const vigil::codec::JsonFieldError& e) {
      py::set_error(PyExc_ValueError, e.what());
    }
  });

  py::class_<vigil::MissionTrace, TracePtr>(m, "Trace")
      .def_static(
          "load", [](const std::string& path) { return TracePtr(std::make_shared<vigil::MissionTrace>(vigil::parse_trace(std::filesystem::path(path)))); },
          py::arg("path"))
      .def_static(
          "parse", [](const std::string& text) {
            std::istringstream in(text);
            return TracePtr(std::make_shared<vigil::MissionTrace>(vigil::parse_trace(in)));
          },
          py::arg("text"))
      .def_static(
          "generate",
          [](const py::object& params) {
            return TracePtr(std::make_shared<vigil::MissionTrace>(
                vigil::generate_synthetic_trace(vigil::synthetic_params_from_json(from_py(params)))));
          },
          py::arg("params"), "Synthetic trace from a phase-list dict.")
      .def_property_readonly("mission_id", [](const vigil::MissionTrace& t) { return t.metadata.mission_id; })
      .def_property_readonly("metadata", [](const vigil::MissionTrace& t) { return to_py(vigil::codec::to_json(t.metadata)); })
      .def_property_readonly("events", [](const vigil::MissionTrace& t) {
        json events = json::array();
        for (const auto& e : t.events) events.push_back(vigil::codec::to_json(e));
        return to_py(events);
      })
      .def("__len__", [](const vigil::MissionTrace& t) { return t.frames.size(); })
      .def(
          "frame", [](const vigil::MissionTrace& t, std::size_t i) {
            if (i >= t.frames.size()) throw py::index_error("frame index out of range");
            return to_py(vigil::codec::to_json(t.frames[i]));
          },
          py::arg("i"))
      .def("write", [](const vigil::MissionTrace& t, const std::string& path) { vigil::write_trace(t, std::filesystem::path(path)); }, py::arg("path"))
      .def("dumps", [](const vigil::MissionTrace& t) {
        std::ostringstream out;
        vigil::write_trace(t, out);
        return out.str();
      })
      .def("__eq__", [](const vigil::MissionTrace& a, const vigil::MissionTrace& b) { return a == b; })
      .def("__repr__", [](const vigil::MissionTrace& t) {
        return "<Trace " + t.metadata.mission_id + " frames=" + std::to_string(t.frames.size()) + ">";
      });

  m.def(
      "score_frame",
      [](const py::object& frame, const py::object& config) {
        const auto f = vigil::codec::frame_from_json(from_py(frame));
        return to_py(vigil::codec::to_json(vigil::compute_vigilance(f, config_of(config, std::nullopt))));
      },
      py::arg("frame"), py::arg("config") = py::none(), "Vigilance sample for one frame dict.");

  m.def(
      "instantaneous_level",
      [](double score, double theta_s) {
        vigil::VigilanceConfig c;
        c.theta_s = theta_s;
        return std::string(vigil::to_string(vigil::instantaneous_level(score, c)));
      },
      py::arg("score"), py::arg("theta_s") = 0.3);

  m.def(
      "validate",
      [](const std::string& path) {
        std::vector<std::string> out;
        for (const auto& d : vigil::validate_trace(vigil::parse_trace(std::filesystem::path(path)))) {
          out.push_back(d.describe());
        }
        return out;
      },
      py::arg("path"), "Warnings for a trace file; raises TraceError when it is invalid.");

  m.def(
      "replay",
      [](const TracePtr& trace, std::optional<double> theta, const py::object& config, const py::object& intervention) {
        const auto c = config_of(config, theta);
        const auto model = intervention_of(intervention);
        vigil::ReplayResult r;
        {
          py::gil_scoped_release release;
          r = vigil::replay_mission(*trace, c, model);
        }
        return to_py(vigil::to_json(r));
      },
      py::arg("trace"), py::arg("theta") = py::none(), py::arg("config") = py::none(),
      py::arg("intervention") = py::none(), "Replay result document.");

  m.def(
      "metrics",
      [](const TracePtr& trace, std::optional<double> theta, const py::object& config, const py::object& intervention) {
        const auto c = config_of(config, theta);
        const auto model = intervention_of(intervention);
        vigil::MetricsReport r;
        {
          py::gil_scoped_release release;
          r = vigil::compute_metrics(vigil::replay_mission(*trace, c, model));
        }
        return to_py(vigil::to_json(r));
      },
      py::arg("trace"), py::arg("theta") = py::none(), py::arg("config") = py::none(),
      py::arg("intervention") = py::none());

  m.def(
      "compare",
      [](const std::vector<std::pair<std::string, TracePtr>>& missions, std::optional<double> theta,
         const py::object& intervention, const std::string& format) -> py::object {
        const auto c = config_of(py::none(), theta);
        const auto model = intervention_of(intervention);
        std::vector<std::pair<std::string, vigil::ReplayResult>> results;
        for (const auto& [label, trace] : missions) results.emplace_back(label, vigil::replay_mission(*trace, c, model));
        const auto report = vigil::comparison_report(results);
        if (format == "csv") return py::str(report.to_csv());
        if (format == "markdown") return py::str(report.to_markdown());
        if (format == "json") return to_py(report.to_json());
        throw py::value_error("format: expected json, csv or markdown");
      },
      py::arg("missions"), py::arg("theta") = py::none(), py::arg("intervention") = py::none(),
      py::arg("format") = "json", "Comparison table over (label, Trace) pairs.");

  m.attr("MIN_THETA_S") = vigil::kMinThetaS;
  m.attr("MAX_THETA_S") = vigil::kMaxThetaS;
}
