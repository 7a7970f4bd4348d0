"""Experiment drivers, run configuration and the synthetic fidelity pipeline."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .bsm import BsmNoise, BsmVariant
from .cbm import (
    AdversaryModel,
    SimFidelity,
    Strategy,
    enumerate_ft,
    outcome_probabilities,
)
from .encoding import BELL_BASIS, BELL_KETS, EncodingParams, SecretSpec, Sign, Symbol, ghz_state
from .kernels import MCConfig, estimate_success, set_backend
from .protocol import (
    event_classes,
    event_distribution,
    run_teleportation,
    success_probability,
)
from .qstate import DensityMatrix, PureState, StateError, as_density, fidelity, make_state

EXPERIMENTS = ("teleport", "enumerate", "cbm", "sweep", "fidelity-pipeline")
CLASSICAL_BOUND = Fraction(2, 3)

# the three two-photon inputs of the experiment
PIPELINE_INPUTS = {
    "a": make_state([("HH", 1), ("VV", 1)]),
    "b": make_state([("HH", 1), ("VV", 1j)]),
    "c": make_state([("HH", 1)]),
}


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Every parameter of a CLI experiment.

    Sweep axes (``n``, ``p``, ``q``, ``eta``, ``f``, ``epsilon``) are tuples;
    other experiments require exactly one value on each axis.  Rates are
    kept as :class:`~fractions.Fraction` so enumeration stays exact.
    """

    experiment: str
    n: tuple[int, ...] = (2,)
    m: int = 2
    p: tuple[int, ...] = (2,)
    q: tuple[int | None, ...] = (None,)
    eta: tuple[Fraction, ...] = (Fraction(0),)
    f: tuple[Fraction, ...] = (Fraction(1),)
    epsilon: tuple[Fraction, ...] = (Fraction(0),)
    alpha: complex = 1 / math.sqrt(2)
    beta: complex = 1 / math.sqrt(2)
    trials: int = 1000
    seed: int | None = None
    out: str | None = None
    csv: bool = False
    sim: SimFidelity = SimFidelity.LABEL
    exact_check: bool = False
    dishonest: frozenset[int] = frozenset()
    strategy: Strategy = Strategy.FLIP_SYMBOL
    symbol_correct: bool = False
    fallback: BsmVariant = BsmVariant.BPLUS
    backend: str | None = None
    channel_fidelity: Fraction = Fraction(73, 100)
    input_noise: Fraction = Fraction(0)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.experiment != "sweep":
            for axis in ("n", "p", "q", "eta", "f", "epsilon"):
                if len(getattr(self, axis)) != 1:
                    raise ConfigError(f"--{axis} takes a single value outside sweeps")
        if any(v < 1 for v in self.n) or self.m < 1 or any(v < 1 for v in self.p):
            raise ConfigError("n, m and p must be at least 1")
        for axis in ("eta", "f", "epsilon"):
            if any(not 0 <= v <= 1 for v in getattr(self, axis)):
                raise ConfigError(f"{axis} must lie in [0, 1]")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.experiment in ("teleport", "cbm", "sweep") and self.seed is None:
            raise ConfigError(f"{self.experiment} samples and needs --seed")
        if not 0 <= self.channel_fidelity <= 1 or not 0 <= self.input_noise <= 1:
            raise ConfigError("channel fidelity and input noise must lie in [0, 1]")
        if abs(self.alpha) + abs(self.beta) == 0:
            raise ConfigError("secret amplitudes cannot both vanish")

    @property
    def secret(self) -> SecretSpec:
        return SecretSpec(self.alpha, self.beta)

    @property
    def adversary(self) -> AdversaryModel:
        return AdversaryModel(self.dishonest, self.strategy)

    def grid(self) -> Iterator["RunConfig"]:
        """Single-valued configs over the product of all sweep axes."""
        axes = ("n", "p", "q", "eta", "f", "epsilon")
        for combo in itertools.product(*(getattr(self, a) for a in axes)):
            yield replace(self, experiment="cbm", **{a: (v,) for a, v in zip(axes, combo)})

    def noise(self) -> BsmNoise:
        return BsmNoise(f=self.f[0], eta=self.eta[0], epsilon=self.epsilon[0])

    def parity(self) -> EncodingParams:
        n, p, q = self.n[0], self.p[0], self.q[0]
        try:
            return EncodingParams.parity(n, p, q)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


# synthetic states --------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticNoisyState:
    """``(1-w)|t><t| + w * I_S / d_S`` for a support ``S`` (the full space by default).

    ``support`` lists orthonormal kets spanning the noise subspace, e.g. the
    code space of an encoded qubit.
    """

    target: PureState
    w: float
    support: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if not 0 <= self.w <= 1:
            raise ValueError(f"mixing weight must lie in [0, 1], got {self.w}")

    @classmethod
    def with_fidelity(cls, target: PureState, fid: float, support=None) -> "SyntheticNoisyState":
        """Weight chosen so that ``<t|rho|t> = fid`` (needs ``t`` inside the support)."""
        d = target.amplitudes.size if support is None else len(support)
        w = (1 - float(fid)) / (1 - 1 / d)
        if not 0 <= w <= 1:
            raise ValueError(f"fidelity {fid} unreachable by white noise in dimension {d}")
        return cls(target, w, support)

    def density(self) -> DensityMatrix:
        t = self.target.amplitudes
        pure = np.outer(t, t.conj())
        if self.support is None:
            noise = np.eye(t.size) / t.size
        else:
            kets = np.array(self.support, dtype=complex)
            noise = kets.T @ kets.conj() / len(kets)
        return DensityMatrix((1 - self.w) * pure + self.w * noise)


def ghz_code_space(n: int) -> tuple[np.ndarray, np.ndarray]:
    d = 2**n
    zero, one = np.zeros(d, dtype=complex), np.zeros(d, dtype=complex)
    zero[0], one[-1] = 1, 1
    return zero, one


# ideal-analyzer pipeline -----------------------------------------------------

def _pattern_correction(labels: Sequence, m: int) -> np.ndarray:
    # symbol from sender 1, sign from the parity over every pair
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    z = np.diag([1, -1]).astype(complex)
    op = np.eye(1, dtype=complex)
    for k in range(m):
        u = np.eye(2, dtype=complex)
        if labels[0].symbol is Symbol.PSI:
            u = x @ u
        if k == 0 and sum(lb.sign is Sign.MINUS for lb in labels) % 2:
            u = z @ u
        op = np.kron(op, u)
    return op


def expected_output_under_ideal_bsm(
    input_rho: DensityMatrix | PureState, channel_rho: DensityMatrix | PureState, n: int, m: int
) -> DensityMatrix:
    """Corrected receiver state averaged over complete Bell measurements.

    ``input_rho`` holds the ``n`` secret photons, ``channel_rho`` the GHZ
    channel (``n`` sender photons then ``m`` receivers).  Every pair
    ``(k, n+k)`` is projected on the full Bell basis, the receivers get the
    Pauli fixed by the pattern, and branches are summed with their Born
    weights.
    """
    rin, rch = as_density(input_rho), as_density(channel_rho)
    if rin.num_photons != n or rch.num_photons != n + m:
        raise StateError(
            f"expected {n} input and {n + m} channel photons, got {rin.num_photons} and {rch.num_photons}"
        )
    joint = np.kron(rin.matrix, rch.matrix).reshape((2,) * (2 * (2 * n + m)))
    total = 2 * n + m
    # bring the pairs to the front: (0, n), (1, n+1), ...
    order = [q for k in range(n) for q in (k, n + k)] + list(range(2 * n, total))
    joint = np.transpose(joint, order + [total + q for q in order])
    dp, dr = 4**n, 2**m
    joint = joint.reshape(dp, dr, dp, dr)
    out = np.zeros((dr, dr), dtype=complex)
    for pattern in itertools.product(range(4), repeat=n):
        ket = np.ones(1, dtype=complex)
        for idx in pattern:
            ket = np.kron(ket, BELL_KETS[idx])
        block = np.einsum("a,arbs,b->rs", ket.conj(), joint, ket)
        c = _pattern_correction([BELL_BASIS[i] for i in pattern], m)
        out += c @ block @ c.conj().T
    return DensityMatrix(out)


def fidelity_pipeline(cfg: RunConfig) -> list[dict]:
    """Ideal-analyzer output fidelities for the three experimental inputs.

    The channel is a white-noise GHZ state with fidelity ``channel_fidelity``;
    inputs may carry code-space white noise of weight ``input_noise``.
    """
    n, m = cfg.n[0], cfg.m
    if n != 2:
        raise ConfigError("the experimental inputs are two-photon states (n = 2)")
    channel = SyntheticNoisyState.with_fidelity(ghz_state(n + m), float(cfg.channel_fidelity)).density()
    rows = []
    for name, target in PIPELINE_INPUTS.items():
        rin = SyntheticNoisyState(target, float(cfg.input_noise), ghz_code_space(n)).density()
        out = expected_output_under_ideal_bsm(rin, channel, n, m)
        f_out = fidelity(out, target)
        rows.append({
            "input": name,
            "channel_fidelity": float(cfg.channel_fidelity),
            "input_fidelity": round(fidelity(rin, target), 12),
            "output_fidelity": round(f_out, 12),
            "above_classical_bound": f_out > float(CLASSICAL_BOUND),
        })
    return rows


# drivers ---------------------------------------------------------------------

def _fmt(x) -> str:
    return str(x) if isinstance(x, (int, Fraction)) else f"{x:.6f}"


def teleport(cfg: RunConfig) -> tuple[list[str], list[str]]:
    """Sampled GHZ-protocol runs.  Returns ``(record lines, summary lines)``."""
    runs = run_teleportation(cfg.secret, cfg.n[0], cfg.m, cfg.noise(), "sample", cfg.seed, cfg.trials)
    records = [r.to_json() for r in runs]
    ok = [r for r in runs if r.succeeded]
    counts = {c: 0 for c in event_classes(cfg.n[0])}
    for r in runs:
        counts[r.event_class] += 1
    mean_fid = sum(r.fidelity for r in ok) / len(ok) if ok else float("nan")
    summary = [
        f"trials {cfg.trials}",
        f"success_rate {len(ok) / cfg.trials:.6f}",
        f"mean_fidelity {mean_fid:.12f}",
        "events " + " ".join(f"{c}={k}" for c, k in counts.items()),
    ]
    return records, summary


def enumerate_exact(cfg: RunConfig) -> tuple[list[str], list[str]]:
    """Exact branch enumeration of the GHZ protocol."""
    branches = run_teleportation(cfg.secret, cfg.n[0], cfg.m, cfg.noise().exact(), "enumerate")
    records = [b.to_json() for b in branches]
    summary = [f"success_probability {success_probability(branches)}"]
    uncond = event_distribution(branches, conditional=False)
    summary.append("events " + " ".join(f"{c}={v}" for c, v in uncond.items()))
    if sum(v for c, v in uncond.items() if c != "E"):
        cond = event_distribution(branches, conditional=True)
        summary.append("recorded_events " + " ".join(f"{c}={v}" for c, v in cond.items()))
    return records, summary


def cbm_estimate(cfg: RunConfig) -> dict:
    enc = cfg.parity()
    adversary = cfg.adversary
    try:
        adversary.check(enc.n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.backend:
        set_backend(cfg.backend)
    mc = MCConfig(enc, cfg.m, cfg.noise(), adversary, cfg.symbol_correct, cfg.fallback)
    est = estimate_success(mc, cfg.trials, cfg.seed)
    rec = {
        "n": enc.n, "p": enc.p, "q": enc.q, "m": cfg.m,
        "eta": float(cfg.eta[0]), "f": float(cfg.f[0]), "epsilon": float(cfg.epsilon[0]),
        "adversary": str(adversary), "symbol_correct": cfg.symbol_correct,
        "trials": cfg.trials, "seed": cfg.seed,
        "success_rate": est["success"][0], "stderr": est["success"][1],
        "signonly_rate": est["signonly"][0], "failure_rate": est["failure"][0],
        "inconsistent_rate": est["inconsistent"][0], "correct_rate": est["correct"][0],
    }
    if cfg.exact_check:
        branches = enumerate_ft(
            cfg.secret, enc, cfg.m, cfg.noise(), adversary, cfg.sim, cfg.symbol_correct, cfg.fallback
        )
        exact = outcome_probabilities(branches)
        rec["exact"] = {k: _fmt(v) for k, v in exact.items()}
        rec["z_success"] = (est["success"][0] - float(exact["success"])) / max(est["success"][1], 1e-300)
    return rec


SWEEP_COLUMNS = (
    "n", "p", "q", "eta", "f", "epsilon", "adversary", "trials",
    "success_rate", "stderr", "signonly_rate", "failure_rate", "inconsistent_rate",
)


def cbm(cfg: RunConfig) -> tuple[list[str], list[str]]:
    rec = cbm_estimate(cfg)
    summary = [f"{k} {v}" for k, v in rec.items()]
    return [json.dumps(rec, separators=(",", ":"))], summary


def sweep(cfg: RunConfig) -> tuple[list[str], list[str]]:
    rows = []
    for point in cfg.grid():
        if point.q[0] is not None and not 0 <= point.q[0] <= point.p[0] - 1:
            continue
        rows.append(cbm_estimate(point))
    if cfg.csv:
        lines = [",".join(SWEEP_COLUMNS)]
        for r in rows:
            lines.append(",".join(
                f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in SWEEP_COLUMNS
            ))
    else:
        lines = [json.dumps({c: r[c] for c in SWEEP_COLUMNS}, separators=(",", ":")) for r in rows]
    return lines, [f"grid points {len(rows)}"]


def pipeline(cfg: RunConfig) -> tuple[list[str], list[str]]:
    rows = fidelity_pipeline(cfg)
    summary = [
        f"input {r['input']}: F_out {r['output_fidelity']:.6f} "
        f"({'above' if r['above_classical_bound'] else 'not above'} the 2/3 classical bound)"
        for r in rows
    ]
    return [json.dumps(r, separators=(",", ":")) for r in rows], summary


DRIVERS = {
    "teleport": teleport,
    "enumerate": enumerate_exact,
    "cbm": cbm,
    "sweep": sweep,
    "fidelity-pipeline": pipeline,
}


def execute(cfg: RunConfig) -> tuple[list[str], list[str]]:
    return DRIVERS[cfg.experiment](cfg)
