"""Run configuration: flat INI-style text, canonically serialized.

The format is `key = value` under named sections so configs diff cleanly;
parsing and re-serialization round-trip bit-identically (canonical float
formatting is the shortest round-trip decimal, i.e. repr).
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field, fields

from .errors import ConfigurationError


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class RunConfig:
    # problem
    dimension: int = 3
    potential: str = "constant:0.0"
    perturbation: str = "none"
    h_eps: float = 1.0
    h_const: float = 0.0
    # discretization
    angular_truncation: int = 0      # 0 = analytic / auto
    angular_count: int = 36
    gamma_max: float = 2.0
    max_modes: int = 0               # 0 = no cap
    radial_nodes: int = 64
    dtau: float = 0.005
    tau_min: float = math.log(1e-3)
    # experiment
    initial: str = "modes:0=1.0"
    lambda_grid: tuple = (0.1, 0.2, 0.3, 0.4)
    scaling_lambdas: tuple = (0.125, 0.25, 0.5)
    recon_lambdas: tuple = (0.5, 0.25, 0.125)
    recon_tau: float = 0.25
    fit_decades: float = 1.0
    sweep_count: int = 1000
    sweep_dims: tuple = (3, 4, 5)
    sweep_t: float = 0.7
    seed: int = 12345
    # output
    directory: str = "out"

    _SECTIONS = {
        "problem": ("dimension", "potential", "perturbation", "h_eps", "h_const"),
        "discretization": ("angular_truncation", "angular_count", "gamma_max",
                           "max_modes", "radial_nodes", "dtau", "tau_min"),
        "experiment": ("initial", "lambda_grid", "scaling_lambdas",
                       "recon_lambdas", "recon_tau", "fit_decades",
                       "sweep_count", "sweep_dims", "sweep_t", "seed"),
        "output": ("directory",),
    }

    def validate(self) -> None:
        if self.dimension < 3:
            raise ConfigurationError("dimension must be >= 3")
        if not 0.0 < self.dtau <= 0.01:
            raise ConfigurationError("dtau must lie in (0, 0.01]")
        if self.tau_min >= 0.0 or self.tau_min < math.log(1e-6) - 1e-12:
            raise ConfigurationError("tau_min must lie in [log(1e-6), 0)")
        if self.gamma_max <= 0.0:
            raise ConfigurationError("gamma_max must be positive")
        if self.radial_nodes < 4 or self.radial_nodes > 1024:
            raise ConfigurationError("radial_nodes outside [4, 1024]")
        if not 0.0 < self.recon_tau < 1.0:
            raise ConfigurationError("recon_tau must lie in (0, 1)")

    def to_text(self) -> str:
        out = io.StringIO()
        for section, keys in self._SECTIONS.items():
            out.write(f"[{section}]\n")
            for key in keys:
                out.write(f"{key} = {_fmt(getattr(self, key))}\n")
            out.write("\n")
        return out.getvalue()

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigurationError(f"config parse failure: {exc}") from exc
        cfg = cls()
        typemap = {f.name: f.type for f in fields(cls)}
        known = {k: sec for sec, keys in cls._SECTIONS.items() for k in keys}
        for section in parser.sections():
            if section not in cls._SECTIONS:
                raise ConfigurationError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in cls._SECTIONS[section]:
                    raise ConfigurationError(
                        f"unknown key {key!r} in section [{section}]"
                    )
                cur = getattr(cfg, key)
                try:
                    if isinstance(cur, bool):
                        val = raw.strip().lower() in ("1", "true", "yes")
                    elif isinstance(cur, int):
                        val = int(raw)
                    elif isinstance(cur, float):
                        val = float(raw)
                    elif isinstance(cur, tuple):
                        elem = int if key == "sweep_dims" else float
                        val = tuple(elem(x) for x in raw.split(",") if x.strip())
                    else:
                        val = raw.strip()
                except ValueError as exc:
                    raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc
                setattr(cfg, key, val)
        _ = known, typemap
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)


def parse_potential(cfg: RunConfig):
    """AngularPotential from the config string."""
    from .angular import AngularPotential

    spec = cfg.potential.strip()
    if spec.startswith("constant:"):
        return AngularPotential.constant(float(spec.split(":", 1)[1]))
    if spec.startswith("harmonic_table:"):
        table = {}
        for item in spec.split(":", 1)[1].split(";"):
            if not item.strip():
                continue
            l, m, c = item.split(",")
            table[(int(l), int(m))] = float(c)
        return AngularPotential.harmonic_table(table)
    raise ConfigurationError(
        f"unsupported potential spec {spec!r} (constant:<v> or "
        "harmonic_table:<l,m,c;...>; zonal potentials are library-only)"
    )


def parse_perturbation(cfg: RunConfig):
    """PerturbationSpec from the config string."""
    from .evolve import PerturbationSpec

    spec = cfg.perturbation.strip()
    if spec == "none":
        return PerturbationSpec.none()
    kind, _, rest = spec.partition(":")
    parts = [p for p in rest.split(":") if p]
    if kind == "linear_constant":
        return PerturbationSpec.linear_constant(float(parts[0]), eps_h=cfg.h_eps)
    if kind == "linear_bounded":
        return PerturbationSpec.linear_bounded(float(parts[0]), eps_h=cfg.h_eps)
    if kind == "semilinear":
        return PerturbationSpec.semilinear(float(parts[0]), float(parts[1]),
                                           cfg.dimension)
    raise ConfigurationError(f"unsupported perturbation spec {spec!r}")


def parse_initial(cfg: RunConfig, basis):
    """Initial data from the config string.

    modes:<k>=<coeff>,... sets coefficients directly; family:pure:<k>,
    family:mixture:<k>=<c>,..., family:exp_linear:<k>:<eps> evaluate the
    closed forms at t = 1.
    """
    from .evolve import build_initial, closed_form_reference

    spec = cfg.initial.strip()
    if spec.startswith("modes:"):
        pairs = []
        for item in spec.split(":", 1)[1].split(","):
            k, _, v = item.partition("=")
            pairs.append((int(k), float(v)))
        return build_initial(basis, pairs)
    if spec.startswith("family:"):
        parts = spec.split(":")[1:]
        if parts[0] == "pure":
            return closed_form_reference(basis, ("pure", int(parts[1])), 1.0)
        if parts[0] == "mixture":
            comps = []
            for item in parts[1].split(","):
                k, _, v = item.partition("=")
                comps.append((int(k), float(v)))
            return closed_form_reference(basis, ("mixture", comps), 1.0)
        if parts[0] == "exp_linear":
            return closed_form_reference(
                basis, ("exp_linear", int(parts[1]), float(parts[2])), 1.0
            )
    raise ConfigurationError(f"unsupported initial spec {spec!r}")
