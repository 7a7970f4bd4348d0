"""Command-line entry point: ``teleshare <experiment> [flags]``.

Flags may also come from an INI file given with ``--config``; keys are the
flag names without dashes (``alpha-re`` or ``alpha_re``) and may sit in any
section.  Flags on the command line override the file.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from fractions import Fraction

from .bsm import BsmVariant
from .cbm import SimFidelity, Strategy
from .harness import EXPERIMENTS, ConfigError, RunConfig, execute


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def _integer(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError as exc:
        raise ConfigError(f"not an integer: {text!r}") from exc


def _listed(parse):
    def inner(text):
        return tuple(parse(part) for part in str(text).split(",") if part.strip())
    return inner


def _q_value(text: str):
    return None if text.strip().lower() in ("", "default", "none") else _integer(text)


def _flag(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="teleshare", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="INI file with default flag values")
    g = ap.add_argument_group("protocol")
    g.add_argument("--n", help="senders (comma list in sweeps)")
    g.add_argument("--m", help="receivers")
    g.add_argument("--p", help="photons per parity block (comma list in sweeps)")
    g.add_argument("--q", help="Bpsi retry budget, default p-1 (comma list in sweeps)")
    g.add_argument("--eta", help="photon loss rate (comma list in sweeps)")
    g.add_argument("--f", help="failure-detection efficiency (comma list in sweeps)")
    g.add_argument("--epsilon", help="analyzer flip rate (comma list in sweeps)")
    g.add_argument("--alpha-re")
    g.add_argument("--alpha-im")
    g.add_argument("--beta-re")
    g.add_argument("--beta-im")
    g = ap.add_argument_group("fault-tolerant path")
    g.add_argument("--sim", choices=[s.value for s in SimFidelity], help="simulation fidelity of the exact check")
    g.add_argument("--exact-check", action="store_const", const=True, help="also enumerate exactly and report z")
    g.add_argument("--dishonest", help="comma list of dishonest sender indices (1-based)")
    g.add_argument("--strategy", choices=[s.value for s in Strategy])
    g.add_argument("--symbol-correct", action="store_const", const=True, help="majority-vote the logical symbol")
    g.add_argument("--fallback", choices=["B+", "B-"])
    g.add_argument("--backend", choices=["compiled", "python"])
    g = ap.add_argument_group("fidelity pipeline")
    g.add_argument("--channel-fidelity")
    g.add_argument("--input-noise")
    g = ap.add_argument_group("run")
    g.add_argument("--trials")
    g.add_argument("--seed")
    g.add_argument("--out", help="write records here instead of stdout")
    g.add_argument("--csv", action="store_const", const=True, help="tabular sweep output")
    return ap


def _read_config(path: str) -> dict:
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = {}
    for section in cp.sections():
        for key, val in cp.items(section):
            values[key.replace("-", "_").split(".")[-1]] = val
    return values


def to_config(ns: argparse.Namespace, file_values: dict) -> RunConfig:
    known = set(vars(ns)) - {"experiment", "config"}
    unknown = set(file_values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    raw = {k: v for k, v in file_values.items()}
    raw.update({k: v for k, v in vars(ns).items() if v is not None and k in known})

    def get(key, parse, default):
        return parse(raw[key]) if key in raw else default

    kw = {
        "experiment": ns.experiment,
        "n": get("n", _listed(_integer), (2,)),
        "m": get("m", _integer, 2),
        "p": get("p", _listed(_integer), (2,)),
        "q": get("q", _listed(_q_value), (None,)),
        "eta": get("eta", _listed(_rational), (Fraction(0),)),
        "f": get("f", _listed(_rational), (Fraction(1),)),
        "epsilon": get("epsilon", _listed(_rational), (Fraction(0),)),
        "trials": get("trials", _integer, 1000),
        "seed": get("seed", _integer, None),
        "out": raw.get("out"),
        "csv": get("csv", _flag, False),
        "exact_check": get("exact_check", _flag, False),
        "symbol_correct": get("symbol_correct", _flag, False),
        "dishonest": frozenset(get("dishonest", _listed(_integer), ())),
        "backend": raw.get("backend"),
        "channel_fidelity": get("channel_fidelity", _rational, Fraction(73, 100)),
        "input_noise": get("input_noise", _rational, Fraction(0)),
    }
    if any(k in raw for k in ("alpha_re", "alpha_im", "beta_re", "beta_im")):
        kw["alpha"] = complex(float(get("alpha_re", _rational, 0)), float(get("alpha_im", _rational, 0)))
        kw["beta"] = complex(float(get("beta_re", _rational, 0)), float(get("beta_im", _rational, 0)))
    try:
        if "sim" in raw:
            kw["sim"] = SimFidelity(raw["sim"])
        if "strategy" in raw:
            kw["strategy"] = Strategy(raw["strategy"])
        if "fallback" in raw:
            kw["fallback"] = BsmVariant(raw["fallback"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(**kw)


def run_cli(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        file_values = _read_config(ns.config) if ns.config else {}
        cfg = to_config(ns, file_values)
        records, summary = execute(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"teleshare: error: {exc}", file=sys.stderr)
        return 2
    text = "".join(line + "\n" for line in records)
    if cfg.out:
        try:
            with open(cfg.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"teleshare: error: cannot write {cfg.out}: {exc}", file=sys.stderr)
            return 2
    elif cfg.experiment in ("sweep", "fidelity-pipeline"):
        sys.stdout.write(text)
    for line in summary:
        print(line)
    return 0


def main() -> None:
    sys.exit(run_cli())
