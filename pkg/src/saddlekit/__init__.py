"""Composite saddle-point optimization with per-oracle call accounting."""

from .am_solver import (AMConfig, SolveReport, am_run, plan_tolerances, ram_minimize,
                        restarted_am)
from .catalyst import (CatalystConfig, Criterion, StageSchedule, catalyst_run, markov_boost,
                       prox_pipeline_solve)
from .oracle_core import (BudgetExceeded, CallLedger, ContractError, CountedOracle, OracleClass,
                          OracleSpec, SolverFailure, max_function_oracle, oracle_envelope_check)
from .problems import QuadraticSaddleInstance, brute_force_gap, generate, kkt_solve
from .saddle_framework import (FrameworkPlan, Order, SaddleProblem, SaddleSolution, SlidingF,
                               SlidingH, plan_framework, solve_saddle)
from .variance_reduction import FiniteSumProblem, SagaState, lsvrg_solve, prox_saddle, saga_sp_solve

__version__ = "0.1.0"
