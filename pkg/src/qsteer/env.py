"""Episodic environment: a measurement-controlled central-spin system.

Each step lets the full system evolve freely for one interval tau and then
applies one of seven actions: a projection of the central spin onto one of
the six cardinal Bloch states, or nothing. Projections are post-selected:
the chosen branch is taken deterministically and its probability is
reported, so an episode's product of branch probabilities is the success
rate of reproducing it on hardware. Outcomes are therefore never sampled.

The observed state is the full density matrix, flattened losslessly to a
real vector (Hermiticity plus unit trace make the on-and-above-diagonal
entries, minus one diagonal element, a complete parameterization). With
two bath spins that is 70 numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import EpisodeFinished, NormalizationUnderflow
from .linalg import partial_trace_first
from .model import (
    BELL_NAMES,
    SPIN_STATES,
    ModelParams,
    bell_state,
    build_propagator,
    central_product_state,
    central_projector,
    fidelity_to_pure,
    hilbert_dim,
    measure,
    purity,
    trace_distance,
)

__all__ = [
    "ACTION_TOKENS",
    "ACTION_COUNT",
    "DO_NOTHING",
    "EnvConfig",
    "EnvState",
    "StepResult",
    "QSEEnv",
    "encoding_length",
    "encode_state",
    "decode_state",
    "episode_return",
    "start_state_vector",
]

#: Action index -> token. Order: z+, z-, x+, x-, y+, y-, do nothing.
ACTION_TOKENS = ("Pz+", "Pz-", "Px+", "Px-", "Py+", "Py-", "-")
ACTION_COUNT = 7
DO_NOTHING = 6

_PROJECTOR_SPEC = (("z", "+"), ("z", "-"), ("x", "+"), ("x", "-"), ("y", "+"), ("y", "-"))

START_MODES = ("fixed_xplus", "random_pure", "fixed_custom")


@dataclass(frozen=True)
class EnvConfig:
    """Episode parameters: model, target, rewards, and start-state policy.

    r_fatal punishes choosing a branch whose probability is at or below
    ``floor`` (the state could not be renormalized); it must not beat the
    worst regular episode, i.e. r_fatal <= r_minus * max_steps.
    """

    model: ModelParams = field(default_factory=ModelParams)
    target: str = "psi-"
    theta: float = 0.99
    r_plus: float = 10.0
    r_minus: float = -1.0
    r_fatal: float = -51.0
    max_steps: int = 50
    start_mode: str = "fixed_xplus"
    custom_start: tuple[complex, complex] | None = None
    floor: float = 1e-8

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must be in (0, 1), got {self.theta}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.r_fatal > self.r_minus * self.max_steps:
            raise ValueError(
                f"r_fatal={self.r_fatal} must not exceed r_minus*max_steps="
                f"{self.r_minus * self.max_steps} (fatal must never be preferable)"
            )
        if self.target not in BELL_NAMES:
            raise ValueError(f"target must be one of {BELL_NAMES}, got {self.target!r}")
        if self.model.n_bath != 2:
            raise ValueError(
                f"two-spin entangled targets need n_bath=2, got {self.model.n_bath}"
            )
        if self.start_mode not in START_MODES:
            raise ValueError(f"start_mode must be one of {START_MODES}, got {self.start_mode!r}")
        if self.start_mode == "fixed_custom" and self.custom_start is None:
            raise ValueError("start_mode=fixed_custom requires custom_start amplitudes")
        if not self.floor > 0:
            raise ValueError(f"floor must be positive, got {self.floor}")


@dataclass(frozen=True)
class EnvState:
    """Encoded observation plus the exact density matrix behind it."""

    encoding: np.ndarray
    rho: np.ndarray
    step_count: int = 0
    done: bool = False
    start_label: str = ""


@dataclass(frozen=True)
class StepResult:
    next: EnvState
    reward: float
    done: bool
    success_prob: float
    outcome: str  # success | continue | timeout | fatal
    fidelity: float
    trace_distance: float = float("nan")
    purity: float = float("nan")


def encoding_length(dim: int) -> int:
    """Real numbers needed for a dim x dim density matrix: dim*(dim+1) - 2."""
    return dim * (dim + 1) - 2


@lru_cache(maxsize=8)
def _triu_indices(dim: int):
    iu, ju = np.triu_indices(dim)
    keep = np.ones(len(iu), dtype=bool)
    keep[-1] = False  # the last diagonal entry is fixed by the unit trace
    return iu[keep], ju[keep]


def encode_state(rho: np.ndarray) -> np.ndarray:
    """Flatten rho to reals: on-and-above-diagonal entries in row-major
    order, last diagonal entry dropped, each complex entry emitted as a
    (real, imaginary) pair."""
    dim = rho.shape[0]
    iu, ju = _triu_indices(dim)
    entries = rho[iu, ju]
    out = np.empty(2 * len(entries))
    out[0::2] = entries.real
    out[1::2] = entries.imag
    return out


def decode_state(encoding: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of encode_state, restoring Hermiticity and unit trace."""
    iu, ju = _triu_indices(dim)
    entries = encoding[0::2] + 1j * encoding[1::2]
    rho = np.zeros((dim, dim), dtype=complex)
    rho[iu, ju] = entries
    lower = rho.conj().T.copy()
    np.fill_diagonal(lower, 0.0)
    rho += lower
    rho[dim - 1, dim - 1] = 1.0 - np.sum(rho.diagonal()[: dim - 1]).real
    return rho


def episode_return(rewards, gamma: float) -> float:
    """Discounted sum of a reward sequence, evaluated from its start."""
    if not 0 <= gamma <= 1:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    total = 0.0
    for i, r in enumerate(rewards):
        total += (gamma ** i) * r
    return total


class QSEEnv:
    """One environment instance; owns its precomputed operators.

    Instances are cheap and single-threaded. ``step`` is deterministic
    given (state, action); randomness only enters through ``reset`` in
    random_pure mode, via the generator the caller passes in.
    """

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        n = cfg.model.n_bath
        self.dim = hilbert_dim(n)
        self.propagator = build_propagator(cfg.model)
        self._propagator_dag = self.propagator.conj().T
        self.projectors = tuple(
            central_projector(axis, sign, n) for axis, sign in _PROJECTOR_SPEC
        )
        self.target_vector = bell_state(cfg.target)
        self.target_matrix = np.outer(self.target_vector, self.target_vector.conj())

    # -- start states -------------------------------------------------

    def _start(self, rng: np.random.Generator | None):
        cfg = self.cfg
        if cfg.start_mode == "fixed_xplus":
            return SPIN_STATES["x+"], "x+"
        if cfg.start_mode == "fixed_custom":
            v = np.asarray(cfg.custom_start, dtype=complex)
            v = v / np.linalg.norm(v)
            return v, _label_for(v)
        if rng is None:
            raise ValueError("random_pure start mode needs a random generator")
        # two independent complex standard Gaussians, normalized: uniform
        # over single-spin pure states
        raw = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        v = raw / np.linalg.norm(raw)
        return v, _label_for(v)

    def reset(self, rng: np.random.Generator | None = None) -> EnvState:
        central, label = self._start(rng)
        rho = central_product_state(central, self.cfg.model.n_bath)
        return EnvState(
            encoding=encode_state(rho), rho=rho, step_count=0, done=False,
            start_label=label,
        )

    # -- dynamics ------------------------------------------------------

    def step(self, state: EnvState, action: int, collect_stats: bool = False) -> StepResult:
        """Evolve for tau, apply the chosen action, and score the result.

        Exactly one of the four reward cases fires: success (bath fidelity
        above theta), continue, timeout (step budget exhausted), or fatal
        (measurement branch probability at or below the floor).
        """
        if state.done:
            raise EpisodeFinished(f"episode already ended after {state.step_count} steps")
        if not 0 <= action < ACTION_COUNT:
            raise ValueError(f"action index must be in [0, {ACTION_COUNT}), got {action}")
        cfg = self.cfg
        rho = self.propagator @ state.rho @ self._propagator_dag
        m = state.step_count + 1

        if action == DO_NOTHING:
            prob = 1.0
        else:
            try:
                rho, prob = measure(rho, self.projectors[action], cfg.floor)
            except NormalizationUnderflow as err:
                nxt = EnvState(encode_state(rho), rho, m, True, state.start_label)
                return StepResult(nxt, cfg.r_fatal, True, err.prob, "fatal",
                                  float("nan"))

        rho_bath = partial_trace_first(rho, 2)
        fid = fidelity_to_pure(rho_bath, self.target_vector)
        if fid > cfg.theta:
            reward, done, outcome = cfg.r_plus, True, "success"
        elif m < cfg.max_steps:
            reward, done, outcome = cfg.r_minus, False, "continue"
        else:
            reward, done, outcome = cfg.r_minus, True, "timeout"

        nxt = EnvState(encode_state(rho), rho, m, done, state.start_label)
        if collect_stats:
            td = trace_distance(rho_bath, self.target_matrix)
            pur = purity(rho_bath)
            return StepResult(nxt, reward, done, prob, outcome, fid, td, pur)
        return StepResult(nxt, reward, done, prob, outcome, fid)


def _label_for(v: np.ndarray) -> str:
    for name, ref in SPIN_STATES.items():
        # match up to global phase
        if abs(abs(np.vdot(ref, v)) - 1.0) < 1e-12:
            return name
    return f"({v[0]:.6f},{v[1]:.6f})"


def start_state_vector(name: str) -> np.ndarray:
    """Named single-spin state for CLI start overrides."""
    if name not in SPIN_STATES:
        raise ValueError(f"unknown start state {name!r}; expected one of {sorted(SPIN_STATES)}")
    return SPIN_STATES[name]
