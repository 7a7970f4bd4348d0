"""Monte Carlo drivers and kernel backend selection.

The CBM kernel runs compiled when ``teleshare._mc_kernel`` was built and
falls back to the pure-Python twin otherwise; :func:`set_backend` switches
explicitly.  Trials are processed in fixed-size chunks, each drawing from
its own child of ``SeedSequence(seed)``, so results depend only on
``(config, trials, seed)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _mc_py
from .bsm import BsmNoise, BsmVariant
from .cbm import HONEST, AdversaryModel, Strategy
from .encoding import EncodingParams, Scheme

try:
    from . import _mc_kernel as _compiled
except ImportError:  # extension not built
    _compiled = None

CHUNK = 8192
_BACKENDS = {"python": _mc_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled
_active = "compiled" if _compiled is not None else "python"

_STRATEGY_CODE = {Strategy.FLIP_SIGN: 0, Strategy.FLIP_SYMBOL: 1, Strategy.REPORT_FAILURE: 2, Strategy.RANDOM: 3}


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; choose from {available_backends()}")
    _active = name


def _chunks(trials: int, seed: int):
    ss = np.random.SeedSequence(seed)
    nchunks = math.ceil(trials / CHUNK)
    for c, child in enumerate(ss.spawn(nchunks)):
        size = min(CHUNK, trials - c * CHUNK)
        yield np.random.default_rng(child), size


@dataclass(frozen=True)
class MCConfig:
    """Everything a Monte Carlo estimate depends on besides trials and seed."""

    enc: EncodingParams
    m: int = 1
    noise: BsmNoise = field(default_factory=BsmNoise)
    adversary: AdversaryModel = HONEST
    symbol_correct: bool = False
    fallback: BsmVariant = BsmVariant.BPLUS


def cbm_trials(config: MCConfig, trials: int, seed: int, backend: str | None = None) -> np.ndarray:
    """Raw per-trial kernel output (``trials x 6`` int8, see :mod:`teleshare._mc_py`)."""
    enc = config.enc
    if enc.scheme is not Scheme.PARITY:
        raise ValueError("the CBM kernel needs the parity encoding")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    config.adversary.check(enc.n)
    kern = _BACKENDS[backend or _active]
    n, p = enc.n, enc.p
    K = _mc_py.num_columns(n, p)
    dishonest = np.array([1 if j + 1 in config.adversary.dishonest else 0 for j in range(n)], dtype=np.int8)
    noise = config.noise
    out = np.empty((trials, _mc_py.OUT_COLUMNS), dtype=np.int8)
    start = 0
    for rng, size in _chunks(trials, seed):
        u = rng.random((size, K))
        kern.run_trials(
            u, n, p, enc.q, float(noise.eta), float(noise.f), float(noise.epsilon),
            int(config.fallback is BsmVariant.BPLUS), dishonest,
            _STRATEGY_CODE[config.adversary.strategy], int(config.symbol_correct),
            out[start:start + size],
        )
        start += size
    return out


def _rate(hits: np.ndarray | float, trials: int) -> tuple[float, float]:
    k = float(np.sum(hits))
    r = k / trials
    return r, math.sqrt(r * (1 - r) / trials)


def _ghz_estimate(config: MCConfig, trials: int, seed: int) -> dict[str, tuple[float, float]]:
    # vectorized label-level sampling: the sender pairs of the GHZ protocol
    # are uniformly distributed over hidden patterns with a common symbol
    n = config.enc.n
    noise = config.noise
    eta, f, eps = float(noise.eta), float(noise.f), float(noise.epsilon)
    tallies: dict[str, float] = {}
    for rng, size in _chunks(trials, seed):
        sym = (rng.random(size) >= 0.5)[:, None] & np.ones((1, n), dtype=bool)
        sign = rng.random((size, n)) >= 0.5
        lost = (rng.random((size, n, 2)) < eta).any(axis=2)
        uf = rng.random((size, n))
        s_sign = sign ^ (uf < eps / 2)
        s_sym = sym ^ ((uf >= eps / 2) & (uf < eps))
        det = s_sign & ~lost  # the GHZ protocol uses B- throughout
        flagged = rng.random((size, n)) < f
        undetected = lost | (~s_sign & ~flagged)
        # logical inference: symbol from any detection, must be common
        any_det = det.any(axis=1)
        recorded = ~undetected.any(axis=1)
        psi_det = (det & s_sym).sum(axis=1)
        n_det = det.sum(axis=1)
        consistent = (psi_det == 0) | (psi_det == n_det)
        success = recorded & any_det & consistent
        inconsistent = recorded & any_det & ~consistent
        # sign of the logical outcome: detected pairs give their sign, failed B- pairs are +
        minus = (det & s_sign).sum(axis=1) % 2
        id_sym = psi_det > 0
        correct = success & (id_sym == sym[:, 0]) & (minus == sign.sum(axis=1) % 2)
        tallies["success"] = tallies.get("success", 0) + success.sum()
        tallies["inconsistent"] = tallies.get("inconsistent", 0) + inconsistent.sum()
        tallies["failure"] = tallies.get("failure", 0) + (~success & ~inconsistent).sum()
        tallies["correct"] = tallies.get("correct", 0) + correct.sum()
        cls_codes = np.where(undetected.any(axis=1), -1, det @ (1 << np.arange(n - 1, -1, -1)))
        for code in range(-1, 2**n):
            key = "E" if code < 0 else "".join("S" if code >> (n - 1 - k) & 1 else "F" for k in range(n))
            tallies[key] = tallies.get(key, 0) + (cls_codes == code).sum()
    return {k: _rate(v, trials) for k, v in tallies.items()}


def estimate_success(config: MCConfig, trials: int, seed: int, backend: str | None = None) -> dict[str, tuple[float, float]]:
    """``(rate, standard error)`` for every outcome class.

    Keys: ``success`` (logical outcome identified), ``failure``,
    ``inconsistent``, ``correct`` (identified and equal to the true logical
    label).  Parity runs add ``signonly`` (per-block rate); GHZ runs add the
    event classes (``SS``, ``SF``, ..., ``E``), unconditional.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if config.enc.scheme is Scheme.GHZ:
        return _ghz_estimate(config, trials, seed)
    out = cbm_trials(config, trials, seed, backend)
    n = config.enc.n
    res = {
        "success": _rate(out[:, 0] == 0, trials),
        "failure": _rate(out[:, 0] == 1, trials),
        "inconsistent": _rate(out[:, 0] == 2, trials),
        "correct": _rate(out[:, 1], trials),
    }
    so = out[:, 2].astype(float) / n
    mean = float(so.mean())
    sd = float(so.std(ddof=1)) if trials > 1 else 0.0
    res["signonly"] = (mean, sd / math.sqrt(trials))
    return res
