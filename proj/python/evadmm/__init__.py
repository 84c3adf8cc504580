# Copyright 2026 The evadmm Authors
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Exchange-ADMM coordination of EV charging and discharging."""

from ._evadmm import (
    AdmmConfig,
    AggregatorObjective,
    AggregatorSpec,
    CentralSolution,
    ConstraintModel,
    EvSpec,
    Feasibility,
    InfeasibleScenario,
    Metrics,
    OracleMethod,
    ParseError,
    ResidualRecord,
    RunResult,
    Scenario,
    Schedule,
    Tariff,
    TimeGrid,
    UpdateMode,
    ValidationError,
    default_admm_config,
    default_tariff,
    feasibility_check,
    parse_scenario,
    run,
    serialize,
    solve_centralized_convex,
    solve_centralized_enumeration,
    synth_scenario,
    system_objective,
    validate,
    write_scenario,
)

__all__ = [
    "AdmmConfig",
    "AggregatorObjective",
    "AggregatorSpec",
    "CentralSolution",
    "ConstraintModel",
    "EvSpec",
    "Feasibility",
    "InfeasibleScenario",
    "Metrics",
    "OracleMethod",
    "ParseError",
    "ResidualRecord",
    "RunResult",
    "Scenario",
    "Schedule",
    "Tariff",
    "TimeGrid",
    "UpdateMode",
    "ValidationError",
    "default_admm_config",
    "default_tariff",
    "feasibility_check",
    "parse_scenario",
    "run",
    "serialize",
    "solve_centralized_convex",
    "solve_centralized_enumeration",
    "synth_scenario",
    "system_objective",
    "validate",
    "write_scenario",
]
