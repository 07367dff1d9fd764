"""Key-value scenario configuration.

Format: one ``key = value`` per line, ``#`` starts a comment, blank lines are
ignored.  Complex amplitudes are given as magnitude plus phase in radians
(``Omega0``, ``Omega0_phase``).  With ``units = Delta`` (the default) every
frequency is a multiple of ``Delta`` and every time a multiple of ``1/Delta``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .lambda_model import LambdaParams
from .propagation import Method, TimeGrid

AXES = ("delta", "Delta", "Omega_mag", "tau")
REDUCERS = ("min_F", "max_L", "final_F_prime_m")

DEFAULTS = {
    "delta": "0",
    "Delta": "1",
    "Omega0": "0.3",
    "Omega0_phase": "0",
    "Omega1": "0.3",
    "Omega1_phase": "0",
    "eta": "0",
    "units": "Delta",
    "t_start": "0",
    "t_end": "",
    "raman_periods": "3",
    "n_points": "401",
    "methods": "Exact,ME2",
    "tau": "auto",
    "regime": "coarse",
    "initial_state": "probe",
    "outputs": ".",
    "emit_F_prime_exact": "false",
    "axis": "",
    "values": "",
    "reduce": "min_F",
    "jobs": "1",
    "oracle_orders": "1,2,3,4",
    "oracle_deltas": "0,0.05,0.2",
    "oracle_omegas": "0.05,0.3",
    "oracle_taus": "6,20,60",
    "oracle_threshold": "1e-6",
}


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value.strip().strip('"').strip("'")
    return out


def load_raw(path: str | None, overrides: list[str] | None = None) -> dict[str, str]:
    """Defaults, then the file, then ``key=value`` overrides."""
    raw = dict(DEFAULTS)
    if path:
        p = Path(path)
        if not p.exists():
            packaged = resources.files("magnus_eff") / "configs" / p.name
            if packaged.is_file():
                raw.update(parse_text(packaged.read_text(), p.name))
            else:
                raise ConfigError(f"config file not found: {path}")
        else:
            raw.update(parse_text(p.read_text(), str(p)))
    for item in overrides or []:
        raw.update(parse_text(item, "--set"))
    return raw


def _float(raw: dict, key: str) -> float:
    try:
        v = float(raw[key])
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {raw[key]!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{key} must be finite, got {raw[key]!r}")
    return v


def _floats(raw: dict, key: str) -> list[float]:
    text = raw[key].strip()
    if not text:
        return []
    try:
        vals = [float(s) for s in text.split(",")]
    except ValueError:
        raise ConfigError(f"{key} must be a comma-separated list of numbers, got {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{key} values must be finite")
    return vals


def _bool(raw: dict, key: str) -> bool:
    v = raw[key].strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"{key} must be a boolean, got {raw[key]!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    params: LambdaParams
    grid: TimeGrid
    methods: tuple
    tau: float | None
    regime: str
    initial_state: tuple | None
    outputs: str
    emit_F_prime_exact: bool
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def finite(self) -> bool:
        return self.regime == "finite"


@dataclass(frozen=True)
class SweepConfig:
    base: ScenarioConfig
    axis: str
    values: tuple
    reduce: str
    raw: dict = field(default_factory=dict, compare=False)


def _exact_raman_period(p: LambdaParams) -> float:
    from .lambda_model import hamiltonian_lab, numeric_splittings

    eps10, _ = numeric_splittings(hamiltonian_lab(p.with_(eta=0.0)))
    if eps10 <= 0:
        raise ConfigError("relevant doublet is degenerate; give t_end explicitly")
    return 2 * math.pi / eps10


def build_params(raw: dict) -> LambdaParams:
    units = raw["units"].strip()
    if units not in ("Delta", "absolute"):
        raise ConfigError(f"units must be 'Delta' or 'absolute', got {units!r}")
    Delta = _float(raw, "Delta")
    scale = Delta if units == "Delta" else 1.0
    o0 = cmath.rect(_float(raw, "Omega0"), _float(raw, "Omega0_phase")) * scale
    o1 = cmath.rect(_float(raw, "Omega1"), _float(raw, "Omega1_phase")) * scale
    try:
        return LambdaParams(_float(raw, "delta") * scale, Delta, o0, o1, _float(raw, "eta") * scale)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def time_scale(raw: dict) -> float:
    return 1.0 / abs(_float(raw, "Delta")) if raw["units"].strip() == "Delta" else 1.0


def build_scenario(raw: dict) -> ScenarioConfig:
    p = build_params(raw)
    ts = time_scale(raw)
    t0 = _float(raw, "t_start") * ts
    if raw["t_end"].strip():
        t1 = _float(raw, "t_end") * ts
    else:
        t1 = t0 + _float(raw, "raman_periods") * _exact_raman_period(p)
    try:
        n = int(raw["n_points"])
    except ValueError:
        raise ConfigError(f"n_points must be an integer, got {raw['n_points']!r}") from None
    try:
        grid = TimeGrid(t0, t1, n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    names = [m.strip() for m in raw["methods"].split(",") if m.strip()]
    if not names:
        raise ConfigError("methods must not be empty")
    try:
        methods = tuple(Method(m) for m in names)
    except ValueError:
        raise ConfigError(f"unknown method in {names}; choose from {[m.value for m in Method]}") from None
    if Method.ME234 in methods and p.delta != 0:
        raise ConfigError("method ME234 requires delta = 0")

    tau_text = raw["tau"].strip().lower()
    tau = None if tau_text == "auto" else _float(raw, "tau") * ts
    if tau is not None and not tau > 0:
        raise ConfigError(f"tau must be positive, got {raw['tau']!r}")
    regime = raw["regime"].strip().lower()
    if regime not in ("coarse", "finite"):
        raise ConfigError(f"regime must be 'coarse' or 'finite', got {raw['regime']!r}")

    init = raw["initial_state"].strip()
    if init == "probe":
        state = None
    else:
        try:
            a, b = (float(s) for s in init.split(","))
        except ValueError:
            raise ConfigError(f"initial_state must be 'probe' or 'a,b', got {init!r}") from None
        state = (a, b)
    return ScenarioConfig(p, grid, methods, tau, regime, state, raw["outputs"],
                          _bool(raw, "emit_F_prime_exact"), raw)


def build_sweep(raw: dict) -> SweepConfig:
    axis = raw["axis"].strip()
    if axis not in AXES:
        raise ConfigError(f"axis must be one of {AXES}, got {axis!r}")
    values = _floats(raw, "values")
    if not values:
        raise ConfigError("sweep values must be non-empty")
    reduce = raw["reduce"].strip()
    if reduce not in REDUCERS:
        raise ConfigError(f"reduce must be one of {REDUCERS}, got {reduce!r}")
    base = build_scenario(raw)
    return SweepConfig(base, axis, tuple(values), reduce, raw)


def point_raw(raw: dict, axis: str, value: float) -> dict:
    """Raw config of one sweep point."""
    r = dict(raw)
    if axis == "Omega_mag":
        r["Omega0"] = r["Omega1"] = repr(value)
    else:
        r[axis] = repr(value)
        if axis == "tau":
            r["regime"] = "finite"
    return r


def parse_overrides(items: list[str]) -> list[str]:
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
    return items
