"""Run-configuration files: flat INI-style sections, decimal numbers,
complex literals as whitespace-separated ``re,im`` pairs.

A config names either a built-in model with its parameters or an explicit
one (dimension, Hamiltonian literal, one ``[channel.N]`` section per
channel with a weight expression or sample table and a rate policy), plus
the simulation settings, observables and output options.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    AbsValueRate,
    Channel,
    ConstantRate,
    ConstantScalar,
    CustomRate,
    FuncScalar,
    TabulatedScalar,
    TimeLocalModel,
)
from . import models as m
from .trajectory import SchemeConfig

__all__ = ["ConfigError", "RunConfig", "BenchSpec", "load_config"]


class ConfigError(ValueError):
    """Anything wrong with a configuration file (exit code 2 territory)."""


_EXPR_NAMES = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "tanh": math.tanh,
    "cosh": math.cosh, "sinh": math.sinh, "exp": math.exp, "sqrt": math.sqrt,
    "log": math.log, "abs": abs, "pi": math.pi, "e": math.e,
    "min": min, "max": max,
}


class ExprScalar(FuncScalar):
    """Time scalar compiled from a restricted arithmetic expression of t."""

    def __init__(self, expr: str):
        self.expr = expr
        try:
            self._code = compile(expr, "<config expr>", "eval")
        except SyntaxError as exc:
            raise ConfigError(f"bad expression {expr!r}: {exc}") from exc
        for name in self._code.co_names:
            if name not in _EXPR_NAMES and name != "t":
                raise ConfigError(f"unknown name {name!r} in expression {expr!r}")
        self.bound = None
        self.fn = self._eval

    def _eval(self, t: float) -> float:
        return float(eval(self._code, {"__builtins__": {}}, {**_EXPR_NAMES, "t": t}))

    def __repr__(self):
        return f"ExprScalar({self.expr!r})"


def _parse_complex_array(text: str, what: str) -> np.ndarray:
    vals = []
    for token in text.split():
        parts = token.split(",")
        if len(parts) != 2:
            raise ConfigError(f"{what}: token {token!r} is not a re,im pair")
        try:
            vals.append(complex(float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ConfigError(f"{what}: bad number in {token!r}") from exc
    return np.array(vals, dtype=complex)


def _parse_vector(text: str, dim: int, what: str) -> np.ndarray:
    v = _parse_complex_array(text, what)
    if v.shape != (dim,):
        raise ConfigError(f"{what}: expected {dim} entries, got {len(v)}")
    return v


def _parse_matrix(text: str, dim: int, what: str) -> np.ndarray:
    v = _parse_complex_array(text, what)
    if v.shape != (dim * dim,):
        raise ConfigError(f"{what}: expected {dim * dim} row-major entries, got {len(v)}")
    return v.reshape(dim, dim)


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split()]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected decimal numbers") from exc


def _parse_time_scalar(text: str, base: Path, what: str):
    text = text.strip()
    if text.startswith("expr:"):
        return ExprScalar(text[len("expr:"):].strip())
    if text.startswith("table:"):
        path = base / text[len("table:"):].strip()
        if not path.exists():
            raise ConfigError(f"{what}: sample table {path} does not exist")
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        if data.shape[1] != 2:
            raise ConfigError(f"{what}: sample table must have two columns (t, value)")
        return TabulatedScalar(data[:, 0], data[:, 1])
    try:
        return ConstantScalar(float(text))
    except ValueError as exc:
        raise ConfigError(f"{what}: expected a number, expr:..., or table:FILE") from exc


def _parse_rate_policy(text: str, base: Path, what: str):
    text = text.strip()
    if text in ("abs", ""):
        return AbsValueRate()
    if text.startswith("const:"):
        return ConstantRate(float(text[len("const:"):]))
    if text.startswith("expr:") or text.startswith("table:"):
        return CustomRate(_parse_time_scalar(text, base, what))
    raise ConfigError(f"{what}: unknown rate policy {text!r}")


@dataclass
class RunConfig:
    model: TimeLocalModel
    psi0: np.ndarray
    method: str                      # oracle | trajectories | both
    scheme: SchemeConfig
    grid: np.ndarray
    realizations: int
    seed: int
    threads: int
    observables: list
    out_dir: Path
    formats: list[str]
    figures: bool
    dump_trajectories: int
    horizon: float
    echo: dict
    bench: "BenchSpec | None" = None


@dataclass
class BenchSpec:
    n_list: list[int]
    realizations: int = 1000
    dt: float = 0.01
    horizon: float = 1.0
    record_points: int = 11
    seed: int = 20
    repeats: int = 3
    oracle_cap_dim: int = 512
    parallel_threads: int | None = None


def _build_builtin_model(cp, base):
    sec = cp["model"]
    name = sec.get("name", "").strip()
    if name == "decay":
        gamma = _parse_time_scalar(sec.get("gamma", "1.0"), base, "model.gamma")
        return m.build_decay(gamma), name
    if name == "qubit_exchange":
        gm = _parse_time_scalar(sec.get("gamma_minus", "1.0"), base, "model.gamma_minus")
        gp = _parse_time_scalar(sec.get("gamma_plus", "0.0"), base, "model.gamma_plus")
        return m.build_qubit_exchange(gm, gp), name
    if name == "pbg":
        if "lamb_shift" in sec or "weight" in sec:
            s = _parse_time_scalar(sec.get("lamb_shift", "0.0"), base, "model.lamb_shift")
            w = _parse_time_scalar(sec.get("weight", "0.5"), base, "model.weight")
        else:
            s, w = m.pbg_demo_tables()
        return m.build_pbg(s, w), name
    if name == "controllable":
        defaults = m.controllable_demo_params()
        a = _parse_floats(sec.get("a", " ".join(map(str, defaults[0]))), "model.a")
        b = _parse_floats(sec.get("b", " ".join(map(str, defaults[1]))), "model.b")
        c = _parse_floats(sec.get("c", " ".join(map(str, defaults[2]))), "model.c")
        return m.build_controllable(a, b, c), name
    if name == "redfield":
        params = m.RedfieldParams(
            gamma1=sec.getfloat("gamma1", 1.0),
            gamma2=sec.getfloat("gamma2", 4.0),
            alpha=sec.getfloat("alpha", 3.0),
            kappa=sec.getfloat("kappa", 1.0),
        )
        return m.build_redfield(params), name
    if name == "chain":
        n = sec.getint("n_sites", 2)
        demo = m.chain_demo_params(n)
        modulation = None
        if "gamma1_modulation" in sec:
            text = sec.get("gamma1_modulation").strip()
            if text == "pulse":
                modulation = m.ChainPulse(sec.getfloat("gamma", demo.gamma))
            elif text not in ("", "none"):
                modulation = _parse_time_scalar(text, base, "model.gamma1_modulation")
        elif sec.getboolean("demo_weights", fallback=False):
            modulation = demo.gamma1_modulation
        params = m.ChainParams(
            n_sites=n,
            coupling=sec.getfloat("coupling", demo.coupling),
            gamma=sec.getfloat("gamma", demo.gamma),
            delta=sec.getfloat("delta", demo.delta),
            gamma1_modulation=modulation,
        )
        return m.build_chain(params), name
    raise ConfigError(f"unknown built-in model {name!r}")


def _build_explicit_model(cp, base):
    sec = cp["model"]
    try:
        dim = sec.getint("dim")
    except (TypeError, ValueError):
        raise ConfigError("explicit model needs an integer dim")
    if dim is None or dim < 1:
        raise ConfigError("explicit model needs a positive dim")
    if "hamiltonian" not in sec:
        raise ConfigError("explicit model needs a hamiltonian literal")
    h = _parse_matrix(sec.get("hamiltonian"), dim, "model.hamiltonian")
    chans = []
    for name in cp.sections():
        if not name.startswith("channel."):
            continue
        csec = cp[name]
        if "op" not in csec:
            raise ConfigError(f"{name}: missing op literal")
        op = _parse_matrix(csec.get("op"), dim, f"{name}.op")
        gamma = _parse_time_scalar(csec.get("gamma", "1.0"), base, f"{name}.gamma")
        rate = _parse_rate_policy(csec.get("rate", "abs"), base, f"{name}.rate")
        eps = csec.getfloat("energy_quantum", fallback=None)
        chans.append(Channel(op=op, gamma=gamma, rate_policy=rate,
                             energy_quantum=eps, label=name))
    if not chans:
        raise ConfigError("explicit model has no [channel.N] sections")
    bare = None
    if "bare_hamiltonian" in sec:
        bare = _parse_matrix(sec.get("bare_hamiltonian"), dim, "model.bare_hamiltonian")
    return TimeLocalModel(dim, h, chans, bare_hamiltonian=bare, label="explicit")


def _default_initial_state(name: str, model, cp, base) -> np.ndarray:
    if name == "controllable":
        return np.array([np.sqrt(3.0) / 2.0, 0.5], dtype=complex)
    if name == "redfield":
        sec = cp["model"]
        params = m.RedfieldParams(
            gamma1=sec.getfloat("gamma1", 1.0), gamma2=sec.getfloat("gamma2", 4.0),
            alpha=sec.getfloat("alpha", 3.0), kappa=sec.getfloat("kappa", 1.0),
        )
        return m.redfield_initial_state(params)
    if name == "pbg":
        return np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
    psi = np.zeros(model.dim, dtype=complex)
    psi[0] = 1.0
    return psi


def _default_observables(name: str, model, cp) -> list:
    if name == "redfield":
        sec = cp["model"]
        params = m.RedfieldParams(
            gamma1=sec.getfloat("gamma1", 1.0), gamma2=sec.getfloat("gamma2", 4.0),
            alpha=sec.getfloat("alpha", 3.0), kappa=sec.getfloat("kappa", 1.0),
        )
        return m.redfield_projectors(params)
    if name == "pbg":
        f1 = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
        return [("pop_f1", f1)]
    if name == "chain":
        n = int(np.log2(model.dim))
        return [
            (f"site{k + 1}",
             m.site_operator(np.diag([1.0, 0.0]).astype(complex), k, n))
            for k in range(n)
        ]
    basis0 = np.zeros(model.dim, dtype=complex)
    basis0[0] = 1.0
    return [("pop_e", basis0)]


def _parse_observables(cp, model) -> list:
    out = []
    for key, raw in cp["observables"].items():
        raw = raw.strip()
        if raw.startswith("basis:"):
            k = int(raw[len("basis:"):])
            if not (0 <= k < model.dim):
                raise ConfigError(f"observable {key}: basis index out of range")
            v = np.zeros(model.dim, dtype=complex)
            v[k] = 1.0
            out.append((key, v))
        elif raw.startswith("site:"):
            n = int(np.log2(model.dim))
            k = int(raw[len("site:"):]) - 1
            if not (0 <= k < n):
                raise ConfigError(f"observable {key}: site index out of range")
            out.append((key, m.site_operator(np.diag([1.0, 0.0]).astype(complex), k, n)))
        elif raw.startswith("projector:"):
            v = _parse_vector(raw[len("projector:"):], model.dim, f"observable {key}")
            out.append((key, v / np.linalg.norm(v)))
        elif raw.startswith("matrix:"):
            mat = _parse_matrix(raw[len("matrix:"):], model.dim, f"observable {key}")
            out.append((key, mat))
        else:
            raise ConfigError(
                f"observable {key}: expected basis:, site:, projector: or matrix:"
            )
    return out


def load_config(path, seed_override=None, threads_override=None,
                out_override=None) -> RunConfig:
    """Parse and validate a config file into a ready-to-run configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (configparser.Error, OSError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if "model" not in cp:
        raise ConfigError("config needs a [model] section")
    base = path.parent

    name = cp["model"].get("name", "").strip()
    if name == "explicit":
        model = _build_explicit_model(cp, base)
    else:
        model, name = _build_builtin_model(cp, base)

    def getval(key, default, cast):
        if "run" not in cp or key not in cp["run"]:
            return default
        try:
            return cast(cp["run"].get(key))
        except ValueError as exc:
            raise ConfigError(f"run.{key}: {exc}") from exc

    method = getval("method", "both", str).strip()
    if method not in ("oracle", "trajectories", "both"):
        raise ConfigError("run.method must be oracle, trajectories or both")
    dt = getval("dt", 0.01, float)
    horizon = getval("horizon", 1.0, float)
    stride = getval("record_stride", 10, int)
    realizations = getval("realizations", 1000, int)
    seed = getval("seed", 1234, int)
    threads = getval("threads", 1, int)
    p_max = getval("p_max", 0.1, float)
    variant = getval("scheme", "bernoulli", str).strip()
    representation = getval("representation", "nonlinear", str).strip()
    dump = getval("dump_trajectories", 0, int)
    if seed_override is not None:
        seed = int(seed_override)
    if threads_override is not None:
        threads = int(threads_override)
    if dt <= 0 or horizon <= 0:
        raise ConfigError("run.dt and run.horizon must be positive")
    if stride < 1:
        raise ConfigError("run.record_stride must be >= 1")
    try:
        scheme = SchemeConfig(variant=variant, dt=dt, p_max=p_max,
                              representation=representation)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    n_steps = int(round(horizon / dt))
    n_rec = max(1, n_steps // stride)
    grid = np.linspace(0.0, horizon, n_rec + 1)

    if "initial_state" in cp and "vector" in cp["initial_state"]:
        psi0 = _parse_vector(cp["initial_state"].get("vector"), model.dim,
                             "initial_state.vector")
        nrm = np.linalg.norm(psi0)
        if nrm == 0:
            raise ConfigError("initial_state.vector is zero")
        psi0 = psi0 / nrm
    else:
        psi0 = _default_initial_state(name, model, cp, base)

    if "observables" in cp and len(cp["observables"]) > 0:
        observables = _parse_observables(cp, model)
    else:
        observables = _default_observables(name, model, cp)

    out_sec = cp["output"] if "output" in cp else {}
    out_dir = Path(out_override) if out_override else Path(
        out_sec.get("directory", "out") if "output" in cp else "out")
    if not out_dir.is_absolute():
        out_dir = base / out_dir
    formats = (out_sec.get("formats", "csv json") if "output" in cp
               else "csv json").split()
    figures = (cp["output"].getboolean("figures", fallback=True)
               if "output" in cp else True)

    bench = None
    if "bench" in cp:
        bsec = cp["bench"]
        if "n_list" not in bsec:
            raise ConfigError("bench.n_list is required")
        bench = BenchSpec(
            n_list=[int(x) for x in bsec.get("n_list").split()],
            realizations=bsec.getint("realizations", 1000),
            dt=bsec.getfloat("dt", 0.01),
            horizon=bsec.getfloat("horizon", 1.0),
            record_points=bsec.getint("record_points", 11),
            seed=bsec.getint("seed", 20),
            repeats=bsec.getint("repeats", 3),
            oracle_cap_dim=bsec.getint("oracle_cap_dim", 512),
            parallel_threads=bsec.getint("parallel_threads", fallback=None),
        )

    echo = {s: dict(cp[s]) for s in cp.sections()}
    return RunConfig(
        model=model, psi0=psi0, method=method, scheme=scheme, grid=grid,
        realizations=realizations, seed=seed, threads=threads,
        observables=observables, out_dir=out_dir, formats=formats,
        figures=figures, dump_trajectories=dump, horizon=horizon,
        echo=echo, bench=bench,
    )
