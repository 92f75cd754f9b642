"""Run configuration: TOML document -> validated :class:`RunConfig`.

Parsing is strict: unknown keys, wrong types and out-of-domain values
raise :class:`ConfigError` naming the dotted key path and, when it can be
located, the line in the source document.
"""
from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODES = ("oscillator", "decay", "oracle")
CLOSURES = ("DIA", "LET", "VLET", "RGET")
EMITS = ("spectrum", "decorrelation", "conservation", "two_time_dump")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key, self.line = key, line
        where = ""
        if key:
            where = f"{key}: "
        if line:
            where = f"line {line}: {where}"
        super().__init__(where + message)


def _doc(text):
    return field(metadata={"doc": text})


def _opt(default, text):
    if isinstance(default, list):
        return field(default_factory=lambda: list(default), metadata={"doc": text})
    return field(default=default, metadata={"doc": text})


@dataclass
class GridConfig:
    k_min: float = _opt(0.1, "smallest wavenumber node")
    k_max: float = _opt(4.0, "largest wavenumber node")
    n_k: int = _opt(64, "radial nodes, log-spaced (>= 8)")
    n_mu: int = _opt(32, "Gauss-Legendre angular nodes (>= 4)")


@dataclass
class TimeConfig:
    dt: float = _opt(0.005, "time step")
    n_steps: int = _opt(128, "number of steps")


@dataclass
class PeakedSpectrum:
    amplitude: float = _opt(1.0, "A in A k^4 exp(-2 k^2 / k_p^2)")
    k_peak: float = _opt(1.0, "k_p")


@dataclass
class PowerExpSpectrum:
    c: float = _opt(0.1, "c in c k^a exp(-k / k_c)")
    exponent: float = _opt(2.0, "a")
    cutoff: float = _opt(1.0, "k_c")


SPECTRA = {"peaked": PeakedSpectrum, "power_exp": PowerExpSpectrum}


@dataclass
class OscillatorConfig:
    b_var: float = _opt(1.0, "variance of the random frequency b")
    q0_sq: float = _opt(1.0, "Q(0, 0)")
    n_samples: int = _opt(100_000, "Monte-Carlo samples (0 disables sampling, else >= 1000)")
    output_every: int = _opt(10, "write every n-th time row to oscillator.csv")


@dataclass
class SweepingConfig:
    v0_sq: float = _opt(0.0, "random sweeping velocity variance per component")


@dataclass
class OutputConfig:
    spectrum_every: int = _opt(16, "write spectrum_tNNNN.csv every n steps (and at the last step)")
    decorrelation_k: list = _opt([], "k indices for decorrelation_kNN.csv; empty picks n_k/4, n_k/2, 3n_k/4")


@dataclass
class RunConfig:
    mode: str = _doc("oscillator | decay | oracle (required)")
    closure: str = _opt("RGET", "DIA | LET | VLET | RGET (oscillator mode: DIA or RGET)")
    nu: float = _opt(0.3, "viscosity (decay) or damping rate (oscillator)")
    eps_floor: float = _opt(1e-8, "relative floor for regularized divisions")
    seed: int = _opt(0, "seed for sampling and oracle states")
    output_dir: str = _opt("runs/out", "directory for run artifacts")
    emit: list = _opt(["spectrum", "decorrelation", "conservation"],
                      "decay outputs: spectrum, decorrelation, conservation, two_time_dump")
    kernel_sign: float = _opt(-1.0, "multiplier on the transfer kernel: -1, 0 or 1")
    nonlinear: bool = _opt(True, "false drops every nonlinear term")
    track_response: bool = _opt(False, "RGET: also evolve the response function")
    diagonal_mode: str = _opt("equal_time", "equal_time | two_time route for Q(k; t, t)")
    grid: GridConfig = field(default_factory=GridConfig, metadata={"doc": "[grid] table"})
    time: TimeConfig = field(default_factory=TimeConfig, metadata={"doc": "[time] table"})
    initial_spectrum: PeakedSpectrum | PowerExpSpectrum = field(
        default_factory=PowerExpSpectrum,
        metadata={"doc": "[initial_spectrum] table with kind = peaked | power_exp"})
    oscillator: OscillatorConfig = field(default_factory=OscillatorConfig,
                                         metadata={"doc": "[oscillator] table"})
    sweeping: SweepingConfig = field(default_factory=SweepingConfig,
                                     metadata={"doc": "[sweeping] table"})
    output: OutputConfig = field(default_factory=OutputConfig, metadata={"doc": "[output] table"})

    @property
    def spectrum_kind(self) -> str:
        return "peaked" if isinstance(self.initial_spectrum, PeakedSpectrum) else "power_exp"

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["initial_spectrum"] = {"kind": self.spectrum_kind, **out["initial_spectrum"]}
        return out


TABLES = {"grid": GridConfig, "time": TimeConfig, "oscillator": OscillatorConfig,
          "sweeping": SweepingConfig, "output": OutputConfig}


def _line_of(text: str, path: str) -> int | None:
    """Best-effort line number of ``path`` (``table.key`` or ``key``) in ``text``."""
    parts = path.split(".")
    key = re.escape(parts[-1].split("[")[0])
    table = parts[0] if len(parts) > 1 else None
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        header = re.match(r"\s*\[\s*([A-Za-z0-9_]+)\s*\]", line)
        if header:
            current = header.group(1)
            continue
        if current == table and re.match(rf"\s*{key}\s*=", line):
            return i
    return None


class _Reader:
    def __init__(self, text: str):
        self.text = text

    def error(self, message, path):
        return ConfigError(message, path, _line_of(self.text, path))

    def value(self, raw, path, typ):
        if typ is bool:
            if not isinstance(raw, bool):
                raise self.error(f"expected true/false, got {raw!r}", path)
            return raw
        if typ is int:
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise self.error(f"expected an integer, got {raw!r}", path)
            return raw
        if typ is float:
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise self.error(f"expected a number, got {raw!r}", path)
            return float(raw)
        if typ is str:
            if not isinstance(raw, str):
                raise self.error(f"expected a string, got {raw!r}", path)
            return raw
        if typ is list:
            if not isinstance(raw, list):
                raise self.error(f"expected an array, got {raw!r}", path)
            return raw
        raise TypeError(typ)

    def table(self, cls, raw, prefix, skip=()):
        if not isinstance(raw, dict):
            raise self.error("expected a table", prefix)
        known = {f.name: f for f in fields(cls)}
        for key in raw:
            if key not in known and key not in skip:
                raise self.error("unknown key", f"{prefix}.{key}" if prefix else key)
        kwargs = {}
        hints = {"float": float, "int": int, "bool": bool, "str": str, "list": list}
        for name, f in known.items():
            if name in raw and f.type in hints:
                path = f"{prefix}.{name}" if prefix else name
                kwargs[name] = self.value(raw[name], path, hints[f.type])
        return kwargs


def parse_config(text: str, mode: str | None = None) -> RunConfig:
    """Parse and validate a TOML run configuration.

    ``mode``, when given, fills in a missing ``mode`` key and must agree
    with a present one.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"malformed document: {exc}", None, line) from None
    rd = _Reader(text)
    if mode is not None:
        if doc.setdefault("mode", mode) != mode:
            raise rd.error(f"document says {doc['mode']!r} but {mode!r} was requested", "mode")
    if "mode" not in doc:
        raise ConfigError("required key missing", "mode")
    nested = {"initial_spectrum", *TABLES}
    top = rd.table(RunConfig, doc, "")
    for name in nested:
        if name in doc and not isinstance(doc[name], dict):
            raise rd.error("expected a table", name)
    cfg = RunConfig(**top)
    for name, cls in TABLES.items():
        if name in doc:
            setattr(cfg, name, cls(**rd.table(cls, doc[name], name)))
    if "initial_spectrum" in doc:
        raw = doc["initial_spectrum"]
        kind = rd.value(raw.get("kind", "power_exp"), "initial_spectrum.kind", str)
        if kind not in SPECTRA:
            raise rd.error(f"must be one of {sorted(SPECTRA)}, got {kind!r}", "initial_spectrum.kind")
        cls = SPECTRA[kind]
        cfg.initial_spectrum = cls(**rd.table(cls, raw, "initial_spectrum", skip=("kind",)))
    validate(cfg, rd)
    return cfg


def load_config(path, mode: str | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), mode)


def validate(cfg: RunConfig, rd: _Reader | None = None) -> RunConfig:
    rd = rd or _Reader("")

    def need(ok, path, message):
        if not ok:
            raise rd.error(message, path)

    finite = lambda x: x == x and abs(x) != float("inf")
    need(cfg.mode in MODES, "mode", f"must be one of {list(MODES)}, got {cfg.mode!r}")
    need(cfg.closure in CLOSURES, "closure", f"must be one of {list(CLOSURES)}, got {cfg.closure!r}")
    if cfg.mode == "oscillator":
        need(cfg.closure in ("DIA", "RGET"), "closure", "oscillator mode supports DIA and RGET")
    need(finite(cfg.nu) and cfg.nu >= 0, "nu", f"must be >= 0, got {cfg.nu}")
    need(finite(cfg.eps_floor) and 0 < cfg.eps_floor < 1, "eps_floor", "must lie in (0, 1)")
    need(0 <= cfg.seed < 2 ** 64, "seed", "must be an unsigned 64-bit integer")
    need(bool(cfg.output_dir), "output_dir", "must not be empty")
    for item in cfg.emit:
        need(item in EMITS, "emit", f"unknown output {item!r}; choose from {list(EMITS)}")
    need(cfg.kernel_sign in (-1.0, 0.0, 1.0), "kernel_sign", "must be -1, 0 or 1")
    need(cfg.diagonal_mode in ("equal_time", "two_time"), "diagonal_mode",
         "must be equal_time or two_time")
    need(not cfg.track_response or cfg.closure == "RGET", "track_response", "only applies to RGET")

    g = cfg.grid
    need(finite(g.k_min) and g.k_min > 0, "grid.k_min", "must be > 0")
    need(finite(g.k_max) and g.k_max > g.k_min, "grid.k_max", "must exceed grid.k_min")
    need(g.n_k >= 8, "grid.n_k", "must be >= 8")
    need(g.n_mu >= 4, "grid.n_mu", "must be >= 4")
    t = cfg.time
    need(finite(t.dt) and t.dt > 0, "time.dt", "must be > 0")
    need(t.n_steps >= 1, "time.n_steps", "must be >= 1")

    s = cfg.initial_spectrum
    for f in fields(s):
        need(finite(getattr(s, f.name)), f"initial_spectrum.{f.name}", "must be finite")
    if isinstance(s, PeakedSpectrum):
        need(s.amplitude > 0, "initial_spectrum.amplitude", "must be > 0")
        need(s.k_peak > 0, "initial_spectrum.k_peak", "must be > 0")
    else:
        need(s.c > 0, "initial_spectrum.c", "must be > 0")
        need(s.cutoff > 0, "initial_spectrum.cutoff", "must be > 0")

    o = cfg.oscillator
    need(finite(o.b_var) and o.b_var >= 0, "oscillator.b_var", f"must be >= 0, got {o.b_var}")
    need(finite(o.q0_sq) and o.q0_sq > 0, "oscillator.q0_sq", "must be > 0")
    need(o.n_samples == 0 or o.n_samples >= 1000, "oscillator.n_samples", "must be 0 or >= 1000")
    need(o.output_every >= 1, "oscillator.output_every", "must be >= 1")
    need(finite(cfg.sweeping.v0_sq) and cfg.sweeping.v0_sq >= 0, "sweeping.v0_sq", "must be >= 0")
    out = cfg.output
    need(out.spectrum_every >= 1, "output.spectrum_every", "must be >= 1")
    for k in out.decorrelation_k:
        need(isinstance(k, int) and not isinstance(k, bool) and 0 <= k < g.n_k,
             "output.decorrelation_k", f"index {k!r} outside 0..{g.n_k - 1}")
    return cfg


def _toml_literal(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return "[" + ", ".join(_toml_literal(v) for v in value) + "]"
    return repr(value).replace("'", '"')


def reference() -> str:
    """Markdown table of every key with its default and meaning."""
    lines = ["| key | default | meaning |", "| --- | --- | --- |"]

    def walk(cls, prefix):
        for f in fields(cls):
            if f.default_factory is not dataclasses.MISSING and dataclasses.is_dataclass(
                    f.default_factory()):
                if f.name == "initial_spectrum":
                    lines.append('| initial_spectrum.kind | `"power_exp"` | peaked or power_exp |')
                    for kind, sub in SPECTRA.items():
                        walk(sub, f"initial_spectrum.({kind}).")
                else:
                    walk(type(f.default_factory()), f"{f.name}.")
                continue
            if f.default is not dataclasses.MISSING:
                default = f"`{_toml_literal(f.default)}`"
            elif f.default_factory is not dataclasses.MISSING:
                default = f"`{_toml_literal(f.default_factory())}`"
            else:
                default = "(required)"
            doc = f.metadata.get("doc", "").replace("|", "\\|")
            lines.append(f"| {prefix}{f.name} | {default} | {doc} |")

    walk(RunConfig, "")
    return "\n".join(lines) + "\n"
