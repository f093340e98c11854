"""
Coherence-aware incremental search over expansion dimension and order.

Starting from a low-dimensional, low-order expansion, every step tries
adding each remaining input (at the current order) and raising the total
order of the current inputs by one. The trial giving the sparsest feasible
recovery is committed; the search stops as soon as no trial beats the
incumbent sparsity. While the problem is overdetermined and the
least-squares misfit still exceeds the tolerance, trials are ranked by
least-squares residual instead.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import SampleSet, build_matrix, cardinality, total_degree_indices
from .diagnostics import coherence
from .exceptions import InfeasibleError, SparsePCEError
from .solvers import (SparseSolution, ToleranceSpec, bpdn, is_feasible, l1l2,
                      least_squares)

SPARSE_SOLVERS = {"bpdn": bpdn, "l1l2": l1l2}
LSE_RTOL = 1e-10


class Phase(str, enum.Enum):
    LSE = "LSE"
    SPARSITY = "SPARSITY"


class TieBreak(str, enum.Enum):
    PREFER_ORDER = "prefer_order"
    PREFER_DIM = "prefer_dim"


@dataclass(frozen=True)
class Trial:
    """One candidate increment: ``kind`` is 'order' or 'dim'."""

    kind: str
    dim: int | None = None

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim}


ADD_ORDER = Trial("order")


def add_dim(i) -> Trial:
    return Trial("dim", int(i))


@dataclass
class IncrementalConfig:
    epsilon: ToleranceSpec = field(default_factory=lambda: ToleranceSpec.rel(0.01))
    initial_order: int = 2
    initial_dims: tuple = ()
    max_order: int = 12
    max_dims: int | None = None
    basis_cap: int = 20_000
    tie_break: TieBreak = TieBreak.PREFER_ORDER
    solver: str = "bpdn"
    record_coefficients: bool = True
    coherence_max_terms: int = 5000

    def __post_init__(self):
        self.tie_break = TieBreak(self.tie_break)
        self.initial_dims = tuple(int(i) for i in self.initial_dims)
        if self.solver not in SPARSE_SOLVERS:
            raise ValueError(f"unknown sparse solver {self.solver!r}")
        if self.initial_order < 1 or self.max_order < 1 or self.basis_cap < 1:
            raise ValueError("orders and caps must be positive")
        if self.max_dims is not None and self.max_dims < 1:
            raise ValueError("max_dims must be positive")


@dataclass
class IncrementalState:
    step: int
    active_dims: tuple
    order: int
    phase: Phase
    s_min: int | None = None
    best_solution: SparseSolution | None = None
    incumbent: SparseSolution | None = None

    @property
    def incumbent_residual(self) -> float:
        return math.inf if self.incumbent is None else self.incumbent.residual_norm


@dataclass
class TrialScore:
    trial: Trial
    active_dims: tuple
    order: int
    n_terms: int
    method: str
    solution: SparseSolution | None = None
    s: float = math.inf
    residual: float = math.inf
    coherence: float | None = None
    error: str | None = None

    def score(self, phase: Phase) -> float:
        return self.residual if phase == Phase.LSE else self.s

    def to_dict(self, with_coefficients=True):
        out = {
            "trial": self.trial.to_dict(),
            "active_dims": list(self.active_dims),
            "order": self.order,
            "n_terms": self.n_terms,
            "method": self.method,
            "s": None if math.isinf(self.s) else int(self.s),
            "residual": None if math.isinf(self.residual) else self.residual,
            "coherence": self.coherence,
            "error": self.error,
        }
        if with_coefficients and self.solution is not None:
            out["coefficients"] = [float(c) for c in self.solution.coefficients]
        return out


@dataclass
class Decision:
    commit: bool
    choice: TrialScore | None = None

    def to_dict(self):
        return {"commit": self.commit,
                "trial": None if self.choice is None else self.choice.trial.to_dict()}


@dataclass
class IncrementalResult:
    solution: SparseSolution
    d_star: int
    k_star: int
    trace: list
    truncated: bool = False
    n_evaluations: int = 0

    @property
    def inclusion_order(self) -> list:
        return list(self.solution.active_dims)

    def trace_json(self) -> str:
        return json.dumps(self.trace, sort_keys=True, allow_nan=False)

    def summary(self) -> dict:
        out = self.solution.summary()
        out.update(d_star=self.d_star, k_star=self.k_star, truncated=self.truncated,
                   steps=len(self.trace), n_evaluations=self.n_evaluations)
        return out


def _trial_shape(state: IncrementalState, trial: Trial):
    if trial.kind == "order":
        return state.active_dims, state.order + 1
    if trial.dim in state.active_dims:
        raise ValueError(f"input {trial.dim} is already active")
    return state.active_dims + (trial.dim,), state.order


def _fit(samples, dims, order, method, config):
    basis = total_degree_indices(len(dims), order, cap=config.basis_cap)
    Psi = build_matrix(basis, samples, dims)
    if method == "LS":
        sol = least_squares(Psi, samples.values)
    else:
        sol = SPARSE_SOLVERS[config.solver](Psi, samples.values, config.epsilon)
    return Psi, sol.with_ambient_dim(samples.dim)


def evaluate_trial(state: IncrementalState, trial: Trial, samples: SampleSet,
                   config: IncrementalConfig, phase: Phase | None = None) -> TrialScore:
    """Fit one trial expansion on the fixed sample set and score it.

    Solver failures are recorded on the score (which then stays infinite)
    rather than raised.
    """
    phase = state.phase if phase is None else phase
    dims, order = _trial_shape(state, trial)
    K = cardinality(len(dims), order)
    method = "LS" if phase == Phase.LSE else config.solver.upper()
    score = TrialScore(trial, dims, order, K, method)
    try:
        Psi, sol = _fit(samples, dims, order, method, config)
    except (SparsePCEError, np.linalg.LinAlgError) as exc:
        score.error = f"{type(exc).__name__}: {exc}"
        return score
    score.solution = sol
    score.residual = sol.residual_norm
    score.s = sol.nnz
    if 2 <= K <= config.coherence_max_terms:
        try:
            score.coherence = coherence(Psi)
        except SparsePCEError:
            score.coherence = None
    return score


def _tie_rank(score: TrialScore, tie_break: TieBreak):
    is_order = score.trial.kind == "order"
    first = 0 if is_order == (tie_break == TieBreak.PREFER_ORDER) else 1
    return (first, -1 if is_order else score.trial.dim)


def select_increment(scores, s_min, phase, tie_break=TieBreak.PREFER_ORDER) -> Decision:
    """Pick the best trial and decide whether it improves on the incumbent.

    ``s_min`` is the incumbent sparsity in the sparsity phase (None when no
    feasible incumbent exists) and the incumbent least-squares residual in
    the LSE phase.
    """
    if not scores:
        raise ValueError("no trial scores to select from")
    phase = Phase(phase)
    tie_break = TieBreak(tie_break)
    best = min(scores, key=lambda sc: (sc.score(phase), _tie_rank(sc, tie_break)))
    value = best.score(phase)
    if math.isinf(value):
        return Decision(False)
    if phase == Phase.SPARSITY:
        improved = s_min is None or value < s_min
    else:
        improved = s_min is None or value < s_min * (1.0 - LSE_RTOL)
    return Decision(improved, best if improved else None)


def _legal_trials(state, ambient_dim, config):
    """Candidate trials within the caps, plus the ones the caps removed."""
    max_dims = ambient_dim if config.max_dims is None else min(config.max_dims, ambient_dim)
    trials, skipped = [], []
    if len(state.active_dims) < max_dims:
        for i in range(ambient_dim):
            if i not in state.active_dims:
                t = add_dim(i)
                if cardinality(len(state.active_dims) + 1, state.order) <= config.basis_cap:
                    trials.append(t)
                else:
                    skipped.append(t)
    if state.order < config.max_order and \
            cardinality(len(state.active_dims), state.order + 1) <= config.basis_cap:
        trials.append(ADD_ORDER)
    else:
        skipped.append(ADD_ORDER)
    return trials, skipped


def _enter_sparsity(state, samples, config):
    state.phase = Phase.SPARSITY
    try:
        _, sol = _fit(samples, state.active_dims, state.order, config.solver.upper(), config)
    except SparsePCEError:
        state.s_min, state.best_solution = None, None
        return
    state.s_min, state.best_solution = sol.nnz, sol


def run_incremental(samples: SampleSet, config: IncrementalConfig | None = None) -> IncrementalResult:
    """Search dimension/order increments for the sparsest feasible PCE.

    Returns the incumbent solution with a per-step trace. The returned
    result is flagged ``truncated`` when the caps ran out before the search
    stopped on its own.

    Raises
    ------
    InfeasibleError
        If the search ends without ever meeting the tolerance.
    """
    config = config or IncrementalConfig()
    u = samples.values
    M, d = samples.size, samples.dim
    if M < 2:
        raise ValueError("need at least two samples")
    eps = config.epsilon.epsilon(u)
    unorm = float(np.linalg.norm(u))
    if config.epsilon.relative and unorm == 0:
        raise ValueError("relative tolerance is undefined for all-zero observations")
    if any(i < 0 or i >= d for i in config.initial_dims) or \
            len(set(config.initial_dims)) != len(config.initial_dims):
        raise ValueError("initial_dims must be distinct indices below the ambient dimension")

    state = IncrementalState(step=1, active_dims=config.initial_dims,
                             order=config.initial_order, phase=Phase.LSE)
    K0 = cardinality(len(state.active_dims), state.order)
    try:
        _, state.incumbent = _fit(samples, state.active_dims, state.order, "LS", config)
    except SparsePCEError:
        state.incumbent = None
    if state.incumbent is None or M < K0 or is_feasible(state.incumbent.residual_norm, eps, unorm):
        _enter_sparsity(state, samples, config)

    trace = []
    truncated = False
    n_eval = 0
    while True:
        trials, skipped = _legal_trials(state, d, config)
        if not trials:
            truncated = True
            break
        Ks = [cardinality(len(_trial_shape(state, t)[0]), _trial_shape(state, t)[1])
              for t in trials]
        if state.phase == Phase.LSE and (max(Ks) > M or
                                         is_feasible(state.incumbent_residual, eps, unorm)):
            _enter_sparsity(state, samples, config)
        phase = state.phase
        scores = [evaluate_trial(state, t, samples, config) for t in trials]
        n_eval += len(scores)
        ref = state.incumbent_residual if phase == Phase.LSE else state.s_min
        decision = select_increment(scores, ref, phase, config.tie_break)
        trace.append({
            "step": state.step,
            "phase": phase.value,
            "active_dims": list(state.active_dims),
            "order": state.order,
            "incumbent": ref if ref is None or not math.isinf(ref) else None,
            "trials": [sc.to_dict(config.record_coefficients) for sc in scores],
            "skipped": [t.to_dict() for t in skipped],
            "decision": decision.to_dict(),
        })
        if not decision.commit:
            if phase == Phase.LSE:
                # least squares stalled above the tolerance: switch criteria
                _enter_sparsity(state, samples, config)
                continue
            break
        best = decision.choice
        state.active_dims, state.order = best.active_dims, best.order
        state.step += 1
        if phase == Phase.LSE:
            state.incumbent = best.solution
        else:
            state.s_min, state.best_solution = int(best.s), best.solution

    if state.best_solution is not None:
        solution = state.best_solution
    elif truncated and state.incumbent is not None:
        solution = state.incumbent
    else:
        raise InfeasibleError("incremental search never met the residual tolerance")
    solution = replace(solution, ambient_dim=d)
    return IncrementalResult(
        solution=solution, d_star=len(solution.active_dims),
        k_star=solution.basis.max_order, trace=trace, truncated=truncated,
        n_evaluations=n_eval)
