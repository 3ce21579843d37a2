"""Benchmark experiments described by JSON configs: data synthesis and references.

A config has the keys ``system`` (lorenz | double_pendulum | emps), ``data``
(initial conditions, duration, rates, noise, seeds), ``library`` (spec text or
``builtin:<name>``), ``hyperparams`` (fields of :class:`Hyperparams`) and an
optional ``validation`` block.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import fields
from importlib import resources
from pathlib import Path

import numpy as np

from .data import DataSource, Dataset, add_noise, subsample
from .errors import InvalidArgument
from .library import (CandidateLibrary, double_pendulum_library, emps_library,
                      parse_library_spec)
from .objective import Hyperparams
from .ode import (DoublePendulumParams, EmpsParams, LorenzParams, MultiSine,
                  double_pendulum_rhs, emps_rhs, integrate, lorenz_rhs)

SYSTEMS = ("lorenz", "double_pendulum", "emps")
STATE_NAMES = {"lorenz": ("x", "y", "z"), "double_pendulum": ("th1", "th2"), "emps": ("q",)}
BUILTIN_LIBRARIES = {
    "double_pendulum": double_pendulum_library,
    "emps": emps_library,
}


# --------------------------------------------------------------------------- configs


def config_names() -> list[str]:
    root = resources.files("sparsespline") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_config(name_or_path) -> dict:
    """Load a config file, or a packaged config by bare name (e.g. ``lorenz_clean``)."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
    else:
        res = resources.files("sparsespline") / "configs" / f"{name_or_path}.json"
        if not res.is_file():
            raise InvalidArgument(f"no config {name_or_path!r}; packaged: {config_names()}")
        text = res.read_text()
    cfg = json.loads(text)
    if cfg.get("system") not in SYSTEMS:
        raise InvalidArgument(f"config system must be one of {SYSTEMS}, got {cfg.get('system')!r}")
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def hyperparams(cfg: dict, **overrides) -> Hyperparams:
    raw = dict(cfg.get("hyperparams", {}))
    raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(Hyperparams)}
    unknown = set(raw) - known
    if unknown:
        raise InvalidArgument(f"unknown hyperparameters {sorted(unknown)}")
    return Hyperparams(**raw)


def library_for(cfg: dict) -> CandidateLibrary:
    spec = cfg.get("library", "")
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN_LIBRARIES:
            raise InvalidArgument(f"unknown builtin library {name!r}")
        return BUILTIN_LIBRARIES[name]()
    names = STATE_NAMES[cfg["system"]]
    return parse_library_spec(spec, state_names=names if "states(" not in spec else None)


# --------------------------------------------------------------------------- systems


def lorenz_params(cfg: dict) -> LorenzParams:
    return LorenzParams(**cfg.get("params", {}))


def pendulum_params(cfg: dict) -> DoublePendulumParams:
    return DoublePendulumParams(**cfg.get("params", {}))


def emps_params(cfg: dict) -> EmpsParams:
    """Reference constants; ``emps_sign_convention`` (table4 | eq17) picks the friction signs."""
    raw = dict(cfg.get("params", {}))
    if "emps_sign_convention" in cfg:
        raw["sign_convention"] = cfg["emps_sign_convention"]
    return EmpsParams(**raw)


def emps_input(data: dict) -> MultiSine:
    spec = dict(data.get("input", {}))
    return MultiSine(amplitude=spec.get("amplitude", 3.0),
                     freqs=tuple(spec.get("freqs", (0.1, 0.23, 0.37, 0.61, 0.89))),
                     seed=spec.get("seed", 0), t_end=float(data["duration"]))


def rhs_for(cfg: dict, input_fn=None):
    system = cfg["system"]
    if system == "lorenz":
        p = lorenz_params(cfg)
        return lambda t, y: lorenz_rhs(y, p)
    if system == "double_pendulum":
        p = pendulum_params(cfg)
        return lambda t, y: double_pendulum_rhs(y, p)
    p = emps_params(cfg)
    tau = input_fn or emps_input(cfg["data"])
    return lambda t, y: emps_rhs(y, t, p, tau)


def simulate_truth(cfg: dict, ic, duration: float, rate_hz: float, input_fn=None):
    """Clean trajectory sampled uniformly; returns (times, full state)."""
    n = int(round(duration * rate_hz))
    if n < 1 or abs(n - duration * rate_hz) > 1e-9 * n:
        raise InvalidArgument(f"duration {duration} s is not a whole number of samples at {rate_hz} Hz")
    t = np.linspace(0.0, duration, n + 1)
    traj = integrate(rhs_for(cfg, input_fn), np.asarray(ic, dtype=float), (0.0, duration),
                     rtol=1e-10, atol=1e-10, dense_times=t)
    return t, traj.y


def reference(cfg: dict) -> dict[str, dict[str, float]]:
    system = cfg["system"]
    if system == "lorenz":
        p = lorenz_params(cfg)
        return {"x": {"x": -p.sigma, "y": p.sigma},
                "y": {"x": p.rho, "y": -1.0, "x*z": -1.0},
                "z": {"z": -p.beta_l, "x*y": 1.0}}
    if system == "double_pendulum":
        return pendulum_params(cfg).true_coefficients()
    return {"p": emps_params(cfg).true_coefficients()}


# --------------------------------------------------------------------------- measurement


def pendulum_to_cartesian(theta: np.ndarray, p: DoublePendulumParams) -> np.ndarray:
    th1, th2 = theta[:, 0], theta[:, 1]
    x1, y1 = p.l1 * np.sin(th1), -p.l1 * np.cos(th1)
    x2, y2 = x1 + p.l2 * np.sin(th2), y1 - p.l2 * np.cos(th2)
    return np.column_stack([x1, y1, x2, y2])


def cartesian_to_pendulum(xy: np.ndarray) -> np.ndarray:
    x1, y1, x2, y2 = xy.T
    th1 = np.unwrap(np.arctan2(x1, -y1))
    th2 = np.unwrap(np.arctan2(x2 - x1, -(y2 - y1)))
    return np.column_stack([th1, th2])


def _measure(cfg: dict, t: np.ndarray, Y: np.ndarray, noise: float, seed: int) -> np.ndarray:
    """Measured channels with noise; pendulum noise enters in pendulum coordinates."""
    system = cfg["system"]
    data = cfg["data"]
    if system == "lorenz":
        return add_noise(Y, noise, seed)
    if system == "double_pendulum":
        p = pendulum_params(cfg)
        if data.get("cartesian", True):
            xy = add_noise(pendulum_to_cartesian(Y[:, :2], p), noise, seed)
            return cartesian_to_pendulum(xy)
        return add_noise(Y[:, :2], noise, seed)
    return add_noise(Y[:, :1], noise, seed)


def build_datasets(cfg: dict) -> tuple[Dataset, Dataset]:
    """Return (clean, measured) datasets, one source per initial condition."""
    system = cfg["system"]
    data = cfg["data"]
    names = STATE_NAMES[system]
    clean_sources, noisy_sources = [], []
    input_fn = emps_input(data) if system == "emps" else None
    for k, ic in enumerate(data["ics"]):
        t, Y = simulate_truth(cfg, ic, float(data["duration"]), float(data["rate_hz"]), input_fn)
        U = input_fn(t)[:, None] if input_fn is not None else None
        measured = _measure(cfg, t, Y, float(data.get("noise", 0.0)),
                            int(data.get("noise_seed", 0)) + 1000 * k)
        clean_states = Y if system == "lorenz" else Y[:, :len(names)]
        clean = DataSource(t, clean_states, U)
        noisy = DataSource(t, measured, U)
        if data.get("subsample_hz"):
            clean = subsample(clean, rate_hz=float(data["subsample_hz"]))
            noisy = subsample(noisy, rate_hz=float(data["subsample_hz"]))
        elif data.get("random_count"):
            seed = int(data.get("subsample_seed", 0)) + k
            clean = subsample(clean, count=int(data["random_count"]), seed=seed)
            noisy = subsample(noisy, count=int(data["random_count"]), seed=seed)
        clean_sources.append(clean)
        noisy_sources.append(noisy)
    inputs = ("tau",) if system == "emps" else ()
    meta = {"system": system, "noise": data.get("noise", 0.0),
            "sample_rate": data.get("subsample_hz") or
            ("nonuniform" if data.get("random_count") else data["rate_hz"]),
            "seed": data.get("noise_seed", 0)}
    return (Dataset(clean_sources, names, inputs, dict(meta, noise=0.0)),
            Dataset(noisy_sources, names, inputs, meta))
