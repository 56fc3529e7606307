"""Scenario configuration files.

Grammar
-------
A configuration is an INI file (``configparser`` syntax: ``[section]``
headers, ``key = value`` lines, ``#`` or ``;`` comments). Recognised
sections and keys, with defaults:

``[scenario]``
    ``name`` = ``ccc`` | ``master_slave`` | ``custom``; ``fig`` = optional
    preset name (``1a``, ``1c``, ``2a``, ``2c``, ``3``) applied before the
    explicit entries of the file.
``[ccc]``
    ``M``, ``a0``, ``a1``, ``a2``, ``v_d``, ``headway``, ``rho``, ``tau``,
    ``xi`` (three comma-separated numbers), ``leader_levels`` (comma list),
    ``leader_period``, ``leader_bound``.
``[master_slave]``
    ``delta_m``, ``delta_s``, ``eps_m``, ``eps_s``, ``radius``, ``omega``,
    ``delay_law`` (``constant`` | ``sinusoidal``), ``delay_omega``,
    ``literal_gate`` (bool), ``xi`` (four numbers).
``[custom]``
    Scalar benchmark ``x' = a x + b x(t - delay) + u`` with surface
    ``x^2 + rho ln(1 + 1/(limit - x))`` (barrier omitted when ``limit`` is
    empty): ``a``, ``b``, ``delay``, ``xi``, ``limit``, ``rho``.
``[gain]``
    ``variant`` = ``sign`` | ``sigmoid`` | ``razumikhin`` | ``krasovskii``;
    ``K``, ``eps``, ``K1``, ``alpha_slope``.
``[numerics]``
    ``dt``, ``tf``, ``refine`` (window-supremum refinement), ``floor``
    (transversality floor; empty = scenario default).
``[metrics]``
    ``band`` (``lo, hi`` or empty), ``final_window``.
``[output]``
    ``directory``, ``channels`` (comma list; empty = all).

Overrides use dotted keys, ``section.key=value``.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .errors import ContractError

SCENARIOS = ("ccc", "master_slave", "custom")
GAINS = ("sign", "sigmoid", "razumikhin", "krasovskii")

DEFAULTS: Dict[str, Dict[str, str]] = {
    "scenario": {"name": "ccc", "fig": ""},
    "ccc": {
        "M": "1650", "a0": "0.1", "a1": "5", "a2": "0.25", "v_d": "22", "headway": "1.8",
        "rho": "50", "tau": "0.2", "xi": "18, 22, 60", "leader_levels": "2, 0, -2, 0",
        "leader_period": "15", "leader_bound": "2.5",
    },
    "master_slave": {
        "delta_m": "0.5", "delta_s": "0.2", "eps_m": "0.84", "eps_s": "0.84", "radius": "2",
        "omega": "0.3", "delay_law": "constant", "delay_omega": "1", "literal_gate": "false",
        "xi": "1, 0, 0, 0",
    },
    "custom": {"a": "0", "b": "1", "delay": "1", "xi": "1", "limit": "", "rho": "1"},
    "gain": {"variant": "sign", "K": "5", "eps": "0.1", "K1": "2.2", "alpha_slope": "2"},
    "numerics": {"dt": "0.001", "tf": "60", "refine": "4", "floor": ""},
    "metrics": {"band": "", "final_window": "10"},
    "output": {"directory": "out", "channels": ""},
}

#: Named override bundles reproducing the reference experiments (figure presets).
PRESETS: Dict[str, Dict[str, str]] = {
    "1a": {"scenario.name": "ccc", "ccc.tau": "0.2", "gain.variant": "sign", "gain.K": "5",
           "numerics.tf": "60"},
    "1c": {"scenario.name": "ccc", "ccc.tau": "0.2", "gain.variant": "razumikhin",
           "gain.K1": "2.2", "gain.alpha_slope": "2", "numerics.tf": "60"},
    "2a": {"scenario.name": "ccc", "ccc.tau": "0.5", "gain.variant": "sign", "gain.K": "10",
           "ccc.v_d": "21.5", "metrics.band": "21, 22", "numerics.tf": "100"},
    "2c": {"scenario.name": "ccc", "ccc.tau": "0.5", "gain.variant": "razumikhin",
           "gain.K1": "2.2", "gain.alpha_slope": "2", "ccc.v_d": "21.8",
           "metrics.band": "21.6, 22", "numerics.tf": "100"},
    "3": {"scenario.name": "master_slave", "gain.variant": "krasovskii", "gain.K1": "0.025",
          "numerics.tf": "40"},
}


_NON_NUMERIC = {"xi", "leader_levels", "band", "delay_law", "literal_gate", "variant"}


class ConfigError(ContractError):
    """Invalid configuration; the message names the offending field."""


def _floats(text: str, field_name: str, count: Optional[int] = None) -> Tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{field_name}: expected comma-separated numbers, got {text!r}") from exc
    if count is not None and len(vals) != count:
        raise ConfigError(f"{field_name}: expected {count} numbers, got {len(vals)}")
    return vals


@dataclass
class ScenarioConfig:
    """A fully resolved configuration (every key of :data:`DEFAULTS` present)."""

    data: Dict[str, Dict[str, str]]

    # ------------------------------------------------------------------
    def get(self, section: str, key: str) -> str:
        return self.data[section][key]

    def num(self, section: str, key: str) -> float:
        text = self.get(section, key)
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: expected a number, got {text!r}") from exc

    def opt_num(self, section: str, key: str) -> Optional[float]:
        return None if not self.get(section, key).strip() else self.num(section, key)

    def vec(self, section: str, key: str, count: Optional[int] = None) -> Tuple[float, ...]:
        return _floats(self.get(section, key), f"{section}.{key}", count)

    def flag(self, section: str, key: str) -> bool:
        text = self.get(section, key).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off", ""):
            return False
        raise ConfigError(f"{section}.{key}: expected a boolean, got {text!r}")

    @property
    def scenario(self) -> str:
        return self.get("scenario", "name").strip()

    @property
    def band(self) -> Optional[Tuple[float, float]]:
        text = self.get("metrics", "band").strip()
        return None if not text else _floats(text, "metrics.band", 2)  # type: ignore[return-value]

    @property
    def channels(self) -> Optional[List[str]]:
        text = self.get("output", "channels").strip()
        return None if not text else [c.strip() for c in text.split(",") if c.strip()]

    # ------------------------------------------------------------------
    def delays(self) -> Tuple[float, ...]:
        s = self.scenario
        if s == "ccc":
            return (self.num("ccc", "tau"),)
        if s == "master_slave":
            return (self.num("master_slave", "delta_m"), self.num("master_slave", "delta_s"))
        return (self.num("custom", "delay"),)

    def validate(self) -> "ScenarioConfig":
        """Check types, ranges and step compatibility.

        Raises
        ------
        ConfigError
            Naming the first invalid field.
        """
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario.name: must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.get("gain", "variant").strip() not in GAINS:
            raise ConfigError(f"gain.variant: must be one of {GAINS}")
        for sec, keys in DEFAULTS.items():
            for key, default in keys.items():
                if sec in ("scenario", "output") or key in _NON_NUMERIC:
                    continue
                if self.get(sec, key).strip() or default:
                    self.num(sec, key)
        dt, tf = self.num("numerics", "dt"), self.num("numerics", "tf")
        if not dt > 0:
            raise ConfigError("numerics.dt: must be positive")
        if not tf >= dt:
            raise ConfigError("numerics.tf: must be at least numerics.dt")
        for d in self.delays():
            if d < 0:
                raise ConfigError("delays must be nonnegative")
            q = d / dt
            if d > 0 and abs(q - round(q)) > 1e-9 * max(1.0, q):
                raise ConfigError(f"numerics.dt = {dt:g} does not divide the delay {d:g}")
        q = tf / dt
        if abs(q - round(q)) > 1e-9 * max(1.0, q):
            raise ConfigError(f"numerics.dt = {dt:g} does not divide numerics.tf = {tf:g}")
        n = {"ccc": 3, "master_slave": 4, "custom": 1}[self.scenario]
        self.vec(self.scenario, "xi", n)
        if self.scenario == "master_slave":
            law = self.get("master_slave", "delay_law").strip()
            if law not in ("constant", "sinusoidal"):
                raise ConfigError("master_slave.delay_law: must be constant or sinusoidal")
            self.flag("master_slave", "literal_gate")
        if self.scenario == "ccc":
            self.vec("ccc", "leader_levels")
        _ = self.band
        return self

    # ------------------------------------------------------------------
    def dumps(self) -> str:
        """Serialise the resolved configuration (parseable by :func:`loads`)."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str  # type: ignore[assignment]
        for sec, keys in self.data.items():
            cp[sec] = dict(keys)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _apply(data: Dict[str, Dict[str, str]], section: str, key: str, value: str,
           where: str) -> None:
    if section not in data:
        raise ConfigError(f"{where}: unknown section [{section}]")
    if key not in data[section]:
        raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
    data[section][key] = value.strip()


def apply_preset(data: Dict[str, Dict[str, str]], fig: str) -> None:
    if fig not in PRESETS:
        raise ConfigError(f"scenario.fig: unknown preset {fig!r}; known: {sorted(PRESETS)}")
    for dotted, value in PRESETS[fig].items():
        sec, key = dotted.split(".", 1)
        _apply(data, sec, key, value, f"preset {fig}")
    data["scenario"]["fig"] = fig


def loads(text: str = "", overrides: Optional[Mapping[str, str]] = None,
          fig: Optional[str] = None, source: str = "<config>") -> ScenarioConfig:
    """Resolve configuration text, an optional preset and dotted overrides.

    Precedence (lowest first): defaults, preset (from ``fig`` or the file's
    ``scenario.fig``), file entries, ``overrides``.

    Raises
    ------
    ConfigError
        On syntax errors (with line numbers), unknown sections/keys or
        invalid values.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # type: ignore[assignment]
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    data = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
    overrides = dict(overrides or {})
    preset = fig or overrides.get("scenario.fig") or (
        cp.get("scenario", "fig", fallback="").strip() if cp.has_section("scenario") else "")
    if preset:
        apply_preset(data, preset)
    for sec in cp.sections():
        for key, value in cp.items(sec):
            _apply(data, sec, key, value, source)
    for dotted, value in overrides.items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r}: expected section.key=value")
        sec, key = dotted.split(".", 1)
        _apply(data, sec, key, value, "override")
    if preset:
        data["scenario"]["fig"] = preset
    return ScenarioConfig(data).validate()


def load(path: str, overrides: Optional[Mapping[str, str]] = None,
         fig: Optional[str] = None) -> ScenarioConfig:
    """Read and resolve a configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return loads(text, overrides, fig, source=path)


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    """``["a.b=1", ...]`` to a dict, rejecting malformed entries."""
    out: Dict[str, str] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected section.key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out
