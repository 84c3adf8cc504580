// Copyright 2026 The evadmm Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "evadmm/io.hpp"
#include "evadmm/oracle.hpp"

namespace py = pybind11;
using namespace evadmm;

PYBIND11_MODULE(_evadmm, m) {
  m.doc() = "Exchange-ADMM coordination of EV charging";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<InfeasibleScenario>(m, "InfeasibleScenario", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  py::enum_<AggregatorObjective>(m, "AggregatorObjective")
      .value("LOAD_VARIANCE", AggregatorObjective::kLoadVariance)
      .value("CHARGING_COST", AggregatorObjective::kChargingCost);
  py::enum_<UpdateMode>(m, "UpdateMode")
      .value("GAUSS_SEIDEL", UpdateMode::kGaussSeidel)
      .value("JACOBI", UpdateMode::kJacobi);
  py::enum_<ConstraintModel>(m, "ConstraintModel")
      .value("FULL", ConstraintModel::kFull)
      .value("RELAXED", ConstraintModel::kRelaxed);
  py::enum_<OracleMethod>(m, "OracleMethod")
      .value("CONVEX_QP", OracleMethod::kConvexQp)
      .value("ENUMERATION", OracleMethod::kEnumeration);

  py::class_<TimeGrid>(m, "TimeGrid")
      .def(py::init<>())
      .def(py::init([](int steps, int steps_per_hour) {
             return TimeGrid{steps, steps_per_hour};
           }),
           py::arg("steps"), py::arg("steps_per_hour"))
      .def_readwrite("steps", &TimeGrid::steps)
      .def_readwrite("steps_per_hour", &TimeGrid::steps_per_hour);

  py::class_<EvSpec>(m, "EvSpec")
      .def(py::init<>())
      .def_readwrite("id", &EvSpec::id)
      .def_readwrite("availability", &EvSpec::availability)
      .def_readwrite("required_energy", &EvSpec::required_energy)
      .def_readwrite("initial_energy", &EvSpec::initial_energy)
      .def_readwrite("energy_min", &EvSpec::energy_min)
      .def_readwrite("energy_max", &EvSpec::energy_max)
      .def_readwrite("p_ch_max", &EvSpec::p_ch_max)
      .def_readwrite("p_dis_max", &EvSpec::p_dis_max)
      .def_readwrite("eta_ch", &EvSpec::eta_ch)
      .def_readwrite("eta_dis", &EvSpec::eta_dis)
      .def_readwrite("alpha", &EvSpec::alpha);

  py::class_<Tariff>(m, "Tariff")
      .def(py::init<>())
      .def_readwrite("price_ch", &Tariff::price_ch)
      .def_readwrite("price_dis", &Tariff::price_dis);

  py::class_<AggregatorSpec>(m, "AggregatorSpec")
      .def(py::init<>())
      .def_readwrite("p_ch_max", &AggregatorSpec::p_ch_max)
      .def_readwrite("p_dis_max", &AggregatorSpec::p_dis_max)
      .def_readwrite("delta", &AggregatorSpec::delta)
      .def_readwrite("objective", &AggregatorSpec::objective);

  py::class_<Scenario>(m, "Scenario")
      .def(py::init<>())
      .def_readwrite("grid", &Scenario::grid)
      .def_readwrite("demand", &Scenario::demand)
      .def_readwrite("evs", &Scenario::evs)
      .def_readwrite("tariff", &Scenario::tariff)
      .def_readwrite("aggregator", &Scenario::aggregator);

  py::class_<AdmmConfig>(m, "AdmmConfig")
      .def(py::init<>())
      .def_readwrite("rho", &AdmmConfig::rho)
      .def_readwrite("gamma", &AdmmConfig::gamma)
      .def_readwrite("eps_p", &AdmmConfig::eps_p)
      .def_readwrite("eps_d", &AdmmConfig::eps_d)
      .def_readwrite("max_iter", &AdmmConfig::max_iter)
      .def_readwrite("update_mode", &AdmmConfig::update_mode)
      .def_readwrite("v2g_enabled", &AdmmConfig::v2g_enabled)
      .def_readwrite("constraint_model", &AdmmConfig::constraint_model)
      .def_readwrite("lvm_apply_caps", &AdmmConfig::lvm_apply_caps)
      .def_readwrite("qp_tol", &AdmmConfig::qp_tol)
      .def_readwrite("miqp_gap", &AdmmConfig::miqp_gap)
      .def_readwrite("miqp_max_nodes", &AdmmConfig::miqp_max_nodes)
      .def_readwrite("num_threads", &AdmmConfig::num_threads);

  py::class_<Schedule>(m, "Schedule")
      .def_readonly("x", &Schedule::x)
      .def_readonly("p_ch", &Schedule::p_ch)
      .def_readonly("p_dis", &Schedule::p_dis)
      .def_readonly("u_ch", &Schedule::u_ch)
      .def_readonly("u_dis", &Schedule::u_dis)
      .def_readonly("energy", &Schedule::energy);

  py::class_<ResidualRecord>(m, "ResidualRecord")
      .def_readonly("k", &ResidualRecord::k)
      .def_readonly("primal_norm", &ResidualRecord::primal_norm)
      .def_readonly("dual_norm", &ResidualRecord::dual_norm)
      .def_readonly("agent_dual_norms", &ResidualRecord::agent_dual_norms);

  py::class_<Metrics>(m, "Metrics")
      .def_readonly("load_variance", &Metrics::load_variance)
      .def_readonly("charging_cost", &Metrics::charging_cost)
      .def_readonly("degradation_cost", &Metrics::degradation_cost)
      .def_readonly("peak_kw", &Metrics::peak_kw);

  py::class_<RunResult>(m, "RunResult")
      .def_readonly("schedules", &RunResult::schedules)
      .def_readonly("x_a", &RunResult::x_a)
      .def_readonly("x0", &RunResult::x0)
      .def_readonly("converged", &RunResult::converged)
      .def_readonly("iterations", &RunResult::iterations)
      .def_readonly("history", &RunResult::history)
      .def_readonly("metrics", &RunResult::metrics)
      .def_readonly("objective", &RunResult::objective)
      .def_readonly("wall_time_s", &RunResult::wall_time_s)
      .def_readonly("gap_limited_solves", &RunResult::gap_limited_solves);

  py::class_<CentralSolution>(m, "CentralSolution")
      .def_readonly("x_a", &CentralSolution::x_a)
      .def_readonly("schedules", &CentralSolution::schedules)
      .def_readonly("objective", &CentralSolution::objective)
      .def_readonly("method", &CentralSolution::method);

  py::class_<Feasibility>(m, "Feasibility")
      .def_readonly("feasible", &Feasibility::feasible)
      .def_readonly("reason", &Feasibility::reason)
      .def("__bool__", [](const Feasibility& f) { return f.feasible; });

  m.def("default_admm_config", &default_admm_config, py::arg("objective"), py::arg("grid"));
  m.def("default_tariff", &default_tariff, py::arg("grid"), py::arg("peak_start") = 16.0,
        py::arg("peak_end") = 21.0);
  m.def("synth_scenario", &synth_scenario, py::arg("n_evs"), py::arg("steps"),
        py::arg("steps_per_hour"), py::arg("seed"),
        py::arg("objective") = AggregatorObjective::kLoadVariance);
  m.def("validate", py::overload_cast<const Scenario&>(&validate), py::arg("scenario"));
  m.def("feasibility_check", &feasibility_check, py::arg("ev"), py::arg("grid"), py::arg("v2g"),
        py::arg("model") = ConstraintModel::kFull);
  m.def(
      "run",
      [](const Scenario& s, const AdmmConfig& cfg) {
        py::gil_scoped_release release;
        return run(s, cfg);
      },
      py::arg("scenario"), py::arg("config"));
  m.def("solve_centralized_convex",
        py::overload_cast<const Scenario&, const AdmmConfig&>(&solve_centralized_convex),
        py::arg("scenario"), py::arg("config"));
  m.def("solve_centralized_enumeration",
        py::overload_cast<const Scenario&, const AdmmConfig&, int>(&solve_centralized_enumeration),
        py::arg("scenario"), py::arg("config"), py::arg("cap") = 12);
  m.def("system_objective", &system_objective, py::arg("scenario"), py::arg("schedules"),
        py::arg("gamma"));
  m.def(
      "parse_scenario",
      [](const std::string& demand, const std::string& events, const std::string& tariff,
         const std::string& config) {
        LoadedScenario ls = parse_scenario(demand, events, tariff, config);
        return py::make_tuple(ls.scenario, ls.config);
      },
      py::arg("demand_csv"), py::arg("events_csv"), py::arg("tariff_csv") = "",
      py::arg("config_text") = "");
  m.def(
      "serialize",
      [](const Scenario& s, const AdmmConfig& cfg) {
        const ScenarioText t = serialize(s, cfg);
        py::dict d;
        d["demand_csv"] = t.demand_csv;
        d["events_csv"] = t.events_csv;
        d["tariff_csv"] = t.tariff_csv;
        d["config_text"] = t.config_text;
        return d;
      },
      py::arg("scenario"), py::arg("config"));
  m.def("write_scenario", &write_scenario, py::arg("scenario"), py::arg("config"),
        py::arg("dir"));
}
