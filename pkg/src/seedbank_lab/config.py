"""Run configuration.

One JSON file describes one run: the geography, the migration kernel, the
seed-bank profile, the diffusion g, and a section per subcommand. Parsing
validates everything up front (unknown keys are errors, reported with their
dotted path), materialises every default, and can echo the result back as a
canonical dict whose parse is identical to the original.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math

import numpy as np

from . import forward, geometry, seedbank
from .errors import ConfigError

_MISSING = object()


def _ctx(path):
    return ".".join(str(p) for p in path) or "<config>"


def _pop(d, key, path, default=_MISSING):
    if key in d:
        return d.pop(key)
    if default is _MISSING:
        raise ConfigError(f"{_ctx(path)}: missing required key '{key}'")
    return default


def _done(d, path):
    if d:
        key = sorted(d)[0]
        raise ConfigError(f"{_ctx(path + (key,))}: unknown key")


def _dict(v, path):
    if not isinstance(v, dict):
        raise ConfigError(f"{_ctx(path)}: expected an object, got {type(v).__name__}")
    return dict(v)


def _num(v, path, *, lo=None, hi=None, lo_open=False, hi_open=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{_ctx(path)}: expected a number, got {v!r}")
    if integer:
        if not (isinstance(v, int) or float(v).is_integer()):
            raise ConfigError(f"{_ctx(path)}: expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(f"{_ctx(path)}: expected a finite number, got {v!r}")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(f"{_ctx(path)}: value {v} below the allowed range")
    if hi is not None and (v >= hi if hi_open else v > hi):
        raise ConfigError(f"{_ctx(path)}: value {v} above the allowed range")
    return v


def _str(v, path, choices=None):
    if not isinstance(v, str):
        raise ConfigError(f"{_ctx(path)}: expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigError(f"{_ctx(path)}: '{v}' is not one of {sorted(choices)}")
    return v


def _bool(v, path):
    if not isinstance(v, bool):
        raise ConfigError(f"{_ctx(path)}: expected true/false, got {v!r}")
    return v


def _numbers(v, path, *, lo=None, hi=None, integer=False, min_len=1):
    if not isinstance(v, (list, tuple)):
        raise ConfigError(f"{_ctx(path)}: expected a list, got {type(v).__name__}")
    if len(v) < min_len:
        raise ConfigError(f"{_ctx(path)}: needs at least {min_len} entries")
    return tuple(_num(x, path + (k,), lo=lo, hi=hi, integer=integer)
                 for k, x in enumerate(v))


# ---------------------------------------------------------------------------
# sections


@dataclasses.dataclass(frozen=True)
class GeographyCfg:
    family: str  # "torus" | "hierarchy"
    dim: int = 1  # torus only
    n: int = 1
    N: int = 2  # hierarchy branching


@dataclasses.dataclass(frozen=True)
class KernelComponentCfg:
    variant: str  # "nearest" | "heavy_tail" | "hierarchical_jump"
    rate: float = 1.0
    Q: float = 1.0
    q: float = 1.0
    c: float = 0.5


@dataclasses.dataclass(frozen=True)
class KernelCfg:
    components: tuple
    symmetrize: bool = False
    fold: bool = True
    eps_fold: float = 1e-9


@dataclasses.dataclass(frozen=True)
class SeedbankCfg:
    provenance: str  # "explicit" | "polynomial" | "hierarchical_bank"
    K: tuple = (1.0,)  # explicit: full lists; hierarchical_bank: scalar base in K[0]
    e: tuple = (1.0,)
    A: float = 1.0
    alpha: float = 0.5
    B: float = 1.0
    beta: float = 1.0
    M: int = 0
    N: int = 2


@dataclasses.dataclass(frozen=True)
class DiffusionCfg:
    kind: str  # "fisher_wright" | "ohta_kimura" | "table"
    d: float = 1.0
    values: tuple = ()
    lipschitz: float = 1.0


@dataclasses.dataclass(frozen=True)
class DisplacementCfg:
    component: KernelComponentCfg
    stay: float = 0.0


@dataclasses.dataclass(frozen=True)
class ForwardCfg:
    horizon: float
    observations: int = 50
    observe_times: tuple = ()  # overrides horizon/observations when nonempty
    snapshot: str = "none"  # "none" | "csv" | "binary"
    dt_budget: float = 2.0  # allowed dt-halving drift, in units of statistical error


@dataclasses.dataclass(frozen=True)
class DualCfg:
    lineages: int = 2
    d: float = 1.0
    horizon: float = 10.0
    replicas: int = 100
    log_events: bool = True
    hazard: bool = False
    hazard_horizon: float = 50.0
    hazard_replicas: int = 10000
    exact: bool = False


@dataclasses.dataclass(frozen=True)
class CriteriaCaseCfg:
    family: str  # "euclidean" | "heavy_tail" | "hierarchical" | "integral"
    label: str = ""
    d: int = 1
    gamma: float = 1.0
    q: float = 1.0
    N: int = 2
    c: float = 0.5
    K: float = 1.0
    e: float = 0.5
    mode: str = "finite"  # integral only: "finite" | "infinite"
    horizon: float = 1e6


@dataclasses.dataclass(frozen=True)
class FgCfg:
    thetas: tuple = (0.2, 0.35, 0.5, 0.65, 0.8)
    replicas: int = 4
    burn_mult: float = 10.0
    sample_count: int = 40
    bhat: str = "exact"  # "exact" | "mc" | "none"


@dataclasses.dataclass(frozen=True)
class TrappingCfg:
    horizon_beta: float = 3.0  # horizon in units of each level's beta
    eps: float = 1e-4
    replicas: int = 64


@dataclasses.dataclass(frozen=True)
class DiagnosticsCfg:
    probe_times: tuple
    replicas: int = 64


@dataclasses.dataclass(frozen=True)
class MRuleCfg:
    kind: str = "profile"  # "profile" | "constant" | "power"
    value: int = 0
    coeff: float = 1.0
    exponent: float = 1.0

    def depth(self, n, fallback):
        if self.kind == "profile":
            return fallback
        if self.kind == "constant":
            return self.value
        return max(0, math.ceil(self.coeff * float(n) ** self.exponent))


@dataclasses.dataclass(frozen=True)
class FssCfg:
    ladder: tuple
    s_grid: tuple
    replicas: int = 64
    m_rule: MRuleCfg = MRuleCfg()
    fg: FgCfg | None = None
    reference: bool = False
    trapping: TrappingCfg | None = None
    diagnostics: DiagnosticsCfg | None = None


@dataclasses.dataclass(frozen=True)
class RenewalCfg:
    gamma: float
    horizon: int = 10_000_000
    replicas: int = 100
    group_size: int = 4096


@dataclasses.dataclass(frozen=True)
class RunConfig:
    seed: int
    geography: GeographyCfg
    kernel: KernelCfg
    seedbank: SeedbankCfg
    g: DiffusionCfg
    model: str = "M2"
    displacement: DisplacementCfg | None = None
    theta0: float = 0.5
    replicas: int = 64
    dt: float | None = None
    init: str = "constant"  # "constant" | "bernoulli"
    threads: int = 1
    block_size: int = 64
    budget: float | None = None  # component updates; None = unchecked
    outputs: tuple = ("csv", "jsonl", "svg")
    forward: ForwardCfg | None = None
    dual: DualCfg | None = None
    criteria: tuple | None = None
    fss: FssCfg | None = None
    renewal: RenewalCfg | None = None


# ---------------------------------------------------------------------------
# parsing


def _require(present, keys, path):
    for key in keys:
        if key not in present:
            raise ConfigError(f"{_ctx(path)}: missing required key '{key}'")


def _parse_geography(v, path):
    d = _dict(v, path)
    present = set(d)
    family = _str(_pop(d, "family", path), path + ("family",),
                  choices={"torus", "hierarchy"})
    _require(present, ("n",), path)
    if family == "hierarchy":
        _require(present, ("N",), path)
    out = GeographyCfg(
        family,
        dim=_num(_pop(d, "dim", path, 1), path + ("dim",), lo=1, hi=8, integer=True),
        n=_num(_pop(d, "n", path), path + ("n",), lo=1, integer=True),
        N=_num(_pop(d, "N", path, 2), path + ("N",), lo=2, integer=True))
    _done(d, path)
    return out


def _parse_component(v, path):
    d = _dict(v, path)
    present = set(d)
    variant = _str(_pop(d, "variant", path), path + ("variant",),
                   choices={"nearest", "heavy_tail", "hierarchical_jump"})
    if variant == "heavy_tail":
        _require(present, ("q",), path)
    elif variant == "hierarchical_jump":
        _require(present, ("c",), path)
    out = KernelComponentCfg(
        variant,
        rate=_num(_pop(d, "rate", path, 1.0), path + ("rate",), lo=0.0, lo_open=True),
        Q=_num(_pop(d, "Q", path, 1.0), path + ("Q",), lo=0.0, lo_open=True),
        q=_num(_pop(d, "q", path, 1.0), path + ("q",), lo=0.0, hi=2.0,
               lo_open=True, hi_open=True),
        c=_num(_pop(d, "c", path, 0.5), path + ("c",), lo=0.0, lo_open=True))
    _done(d, path)
    return out


def _parse_kernel(v, path):
    if isinstance(v, list):
        d = {"components": v}
    else:
        d = _dict(v, path)
    comps = _pop(d, "components", path)
    if not isinstance(comps, list) or not comps:
        raise ConfigError(f"{_ctx(path + ('components',))}: expected a nonempty list")
    components = tuple(_parse_component(c, path + ("components", k))
                       for k, c in enumerate(comps))
    out = KernelCfg(components,
                    symmetrize=_bool(_pop(d, "symmetrize", path, False),
                                     path + ("symmetrize",)),
                    fold=_bool(_pop(d, "fold", path, True), path + ("fold",)),
                    eps_fold=_num(_pop(d, "eps_fold", path, 1e-9), path + ("eps_fold",),
                                  lo=0.0, lo_open=True))
    _done(d, path)
    return out


def _scalar_or_single(v, path, **kw):
    if isinstance(v, (list, tuple)):
        if len(v) != 1:
            raise ConfigError(f"{_ctx(path)}: expected one number, got {len(v)}")
        v = v[0]
    return _num(v, path, **kw)


def _parse_seedbank(v, path):
    d = _dict(v, path)
    present = set(d)
    provenance = _str(_pop(d, "provenance", path), path + ("provenance",),
                      choices={"explicit", "polynomial", "hierarchical_bank"})
    if provenance == "explicit":
        _require(present, ("K", "e"), path)
        K = _numbers(_pop(d, "K", path), path + ("K",), lo=0.0)
        e = _numbers(_pop(d, "e", path), path + ("e",), lo=0.0)
        if len(K) != len(e):
            raise ConfigError(f"{_ctx(path)}: K and e must have the same length")
        M = _num(_pop(d, "M", path, len(K) - 1), path + ("M",), lo=0, integer=True)
        if M != len(K) - 1:
            raise ConfigError(f"{_ctx(path + ('M',))}: must equal len(K) - 1")
        out = SeedbankCfg(provenance, K=K, e=e, M=M,
                          A=_num(_pop(d, "A", path, 1.0), path + ("A",)),
                          alpha=_num(_pop(d, "alpha", path, 0.5), path + ("alpha",)),
                          B=_num(_pop(d, "B", path, 1.0), path + ("B",)),
                          beta=_num(_pop(d, "beta", path, 1.0), path + ("beta",)),
                          N=_num(_pop(d, "N", path, 2), path + ("N",), lo=2, integer=True))
    elif provenance == "polynomial":
        _require(present, ("alpha", "beta", "M"), path)
        out = SeedbankCfg(
            provenance,
            K=_numbers(_pop(d, "K", path, [1.0]), path + ("K",)),
            e=_numbers(_pop(d, "e", path, [1.0]), path + ("e",)),
            A=_num(_pop(d, "A", path, 1.0), path + ("A",), lo=0.0, lo_open=True),
            alpha=_num(_pop(d, "alpha", path), path + ("alpha",)),
            B=_num(_pop(d, "B", path, 1.0), path + ("B",), lo=0.0, lo_open=True),
            beta=_num(_pop(d, "beta", path), path + ("beta",)),
            M=_num(_pop(d, "M", path), path + ("M",), lo=0, integer=True),
            N=_num(_pop(d, "N", path, 2), path + ("N",), lo=2, integer=True))
    else:
        _require(present, ("K", "e", "N", "M"), path)
        out = SeedbankCfg(
            provenance,
            K=(_scalar_or_single(_pop(d, "K", path), path + ("K",), lo=1.0),),
            e=(_scalar_or_single(_pop(d, "e", path), path + ("e",), lo=0.0,
                                 lo_open=True),),
            A=_num(_pop(d, "A", path, 1.0), path + ("A",)),
            alpha=_num(_pop(d, "alpha", path, 0.5), path + ("alpha",)),
            B=_num(_pop(d, "B", path, 1.0), path + ("B",)),
            beta=_num(_pop(d, "beta", path, 1.0), path + ("beta",)),
            N=_num(_pop(d, "N", path), path + ("N",), lo=2, integer=True),
            M=_num(_pop(d, "M", path), path + ("M",), lo=0, integer=True))
    _done(d, path)
    return out


def _parse_g(v, path):
    d = _dict(v, path)
    present = set(d)
    kind = _str(_pop(d, "kind", path), path + ("kind",),
                choices={"fisher_wright", "ohta_kimura", "table"})
    if kind == "table":
        _require(present, ("values", "lipschitz"), path)
    values = _pop(d, "values", path, ())
    out = DiffusionCfg(
        kind,
        d=_num(_pop(d, "d", path, 1.0), path + ("d",), lo=0.0, lo_open=True),
        values=_numbers(values, path + ("values",), lo=0.0, min_len=3) if values else (),
        lipschitz=_num(_pop(d, "lipschitz", path, 1.0), path + ("lipschitz",),
                       lo=0.0, lo_open=True))
    _done(d, path)
    return out


def _parse_forward(v, path):
    d = _dict(v, path)
    times = _pop(d, "observe_times", path, ())
    times = _numbers(times, path + ("observe_times",), lo=0.0) if times else ()
    if times and list(times) != sorted(times):
        raise ConfigError(f"{_ctx(path + ('observe_times',))}: must be nondecreasing")
    # horizon may be omitted when explicit observation times say where to stop
    default_horizon = times[-1] if times else _MISSING
    horizon = _num(_pop(d, "horizon", path, default_horizon), path + ("horizon",),
                   lo=0.0, lo_open=True)
    out = ForwardCfg(
        horizon=horizon,
        observations=_num(_pop(d, "observations", path, 50), path + ("observations",),
                          lo=1, integer=True),
        observe_times=times,
        snapshot=_str(_pop(d, "snapshot", path, "none"), path + ("snapshot",),
                      choices={"none", "csv", "binary"}),
        dt_budget=_num(_pop(d, "dt_budget", path, 2.0), path + ("dt_budget",),
                       lo=0.0, lo_open=True))
    _done(d, path)
    return out


def _parse_dual(v, path):
    d = _dict(v, path)
    out = DualCfg(
        lineages=_num(_pop(d, "lineages", path, 2), path + ("lineages",),
                      lo=1, hi=1000, integer=True),
        d=_num(_pop(d, "d", path, 1.0), path + ("d",), lo=0.0),
        horizon=_num(_pop(d, "horizon", path, 10.0), path + ("horizon",),
                     lo=0.0, lo_open=True),
        replicas=_num(_pop(d, "replicas", path, 100), path + ("replicas",),
                      lo=1, integer=True),
        log_events=_bool(_pop(d, "log_events", path, True), path + ("log_events",)),
        hazard=_bool(_pop(d, "hazard", path, False), path + ("hazard",)),
        hazard_horizon=_num(_pop(d, "hazard_horizon", path, 50.0),
                            path + ("hazard_horizon",), lo=0.0, lo_open=True),
        hazard_replicas=_num(_pop(d, "hazard_replicas", path, 10000),
                             path + ("hazard_replicas",), lo=1, integer=True),
        exact=_bool(_pop(d, "exact", path, False), path + ("exact",)))
    _done(d, path)
    return out


_CASE_REQUIRED = {
    "euclidean": ("d", "gamma"),
    "heavy_tail": ("q", "gamma"),
    "hierarchical": ("N", "c", "K", "e"),
    "integral": (),
}


def _parse_case(v, path):
    d = _dict(v, path)
    present = set(d)
    family = _str(_pop(d, "family", path), path + ("family",),
                  choices=set(_CASE_REQUIRED))
    _require(present, _CASE_REQUIRED[family], path)
    out = CriteriaCaseCfg(
        family,
        label=_str(_pop(d, "label", path, ""), path + ("label",)),
        d=_num(_pop(d, "d", path, 1), path + ("d",), lo=1, integer=True),
        gamma=_num(_pop(d, "gamma", path, 1.0), path + ("gamma",), lo=0.0, hi=1.0,
                   lo_open=True),
        q=_num(_pop(d, "q", path, 1.0), path + ("q",), lo=0.0, hi=2.0,
               lo_open=True, hi_open=True),
        N=_num(_pop(d, "N", path, 2), path + ("N",), lo=2, integer=True),
        c=_num(_pop(d, "c", path, 0.5), path + ("c",), lo=0.0, lo_open=True),
        K=_num(_pop(d, "K", path, 1.0), path + ("K",), lo=1.0),
        e=_num(_pop(d, "e", path, 0.5), path + ("e",), lo=0.0, lo_open=True),
        mode=_str(_pop(d, "mode", path, "finite"), path + ("mode",),
                  choices={"finite", "infinite"}),
        horizon=_num(_pop(d, "horizon", path, 1e6), path + ("horizon",),
                     lo=1.0, lo_open=True))
    _done(d, path)
    return out


def _parse_fss(v, path):
    d = _dict(v, path)
    ladder = _numbers(_pop(d, "ladder", path), path + ("ladder",), lo=1, integer=True)
    if list(ladder) != sorted(set(ladder)):
        raise ConfigError(f"{_ctx(path + ('ladder',))}: must be strictly increasing")
    s_grid = _numbers(_pop(d, "s_grid", path), path + ("s_grid",), lo=0.0)
    if list(s_grid) != sorted(s_grid):
        raise ConfigError(f"{_ctx(path + ('s_grid',))}: must be nondecreasing")
    m_rule = MRuleCfg()
    if d.get("m_rule") is not None:
        md = _dict(_pop(d, "m_rule", path), path + ("m_rule",))
        kind = _str(_pop(md, "kind", path + ("m_rule",)), path + ("m_rule", "kind"),
                    choices={"profile", "constant", "power"})
        m_rule = MRuleCfg(
            kind,
            value=_num(_pop(md, "value", path + ("m_rule",), 0),
                       path + ("m_rule", "value"), lo=0, integer=True),
            coeff=_num(_pop(md, "coeff", path + ("m_rule",), 1.0),
                       path + ("m_rule", "coeff"), lo=0.0, lo_open=True),
            exponent=_num(_pop(md, "exponent", path + ("m_rule",), 1.0),
                          path + ("m_rule", "exponent"), lo=0.0))
        _done(md, path + ("m_rule",))
    d.pop("m_rule", None)
    fg = None
    if d.get("fg") is not None:
        fd = _dict(_pop(d, "fg", path), path + ("fg",))
        fg = FgCfg(
            thetas=_numbers(_pop(fd, "thetas", path + ("fg",), [0.2, 0.35, 0.5, 0.65, 0.8]),
                            path + ("fg", "thetas"), lo=0.0, hi=1.0),
            replicas=_num(_pop(fd, "replicas", path + ("fg",), 4),
                          path + ("fg", "replicas"), lo=1, integer=True),
            burn_mult=_num(_pop(fd, "burn_mult", path + ("fg",), 10.0),
                           path + ("fg", "burn_mult"), lo=0.0, lo_open=True),
            sample_count=_num(_pop(fd, "sample_count", path + ("fg",), 40),
                              path + ("fg", "sample_count"), lo=2, integer=True),
            bhat=_str(_pop(fd, "bhat", path + ("fg",), "exact"), path + ("fg", "bhat"),
                      choices={"exact", "mc", "none"}))
        _done(fd, path + ("fg",))
    d.pop("fg", None)
    trapping = None
    if d.get("trapping") is not None:
        td = _dict(_pop(d, "trapping", path), path + ("trapping",))
        trapping = TrappingCfg(
            horizon_beta=_num(_pop(td, "horizon_beta", path + ("trapping",), 3.0),
                              path + ("trapping", "horizon_beta"), lo=0.0, lo_open=True),
            eps=_num(_pop(td, "eps", path + ("trapping",), 1e-4),
                     path + ("trapping", "eps"), lo=0.0, lo_open=True, hi=0.5),
            replicas=_num(_pop(td, "replicas", path + ("trapping",), 64),
                          path + ("trapping", "replicas"), lo=1, integer=True))
        _done(td, path + ("trapping",))
    d.pop("trapping", None)
    diagnostics = None
    if d.get("diagnostics") is not None:
        dd = _dict(_pop(d, "diagnostics", path), path + ("diagnostics",))
        diagnostics = DiagnosticsCfg(
            probe_times=_numbers(_pop(dd, "probe_times", path + ("diagnostics",)),
                                 path + ("diagnostics", "probe_times"), lo=0.0),
            replicas=_num(_pop(dd, "replicas", path + ("diagnostics",), 64),
                          path + ("diagnostics", "replicas"), lo=1, integer=True))
        _done(dd, path + ("diagnostics",))
    d.pop("diagnostics", None)
    out = FssCfg(ladder, s_grid,
                 replicas=_num(_pop(d, "replicas", path, 64), path + ("replicas",),
                               lo=1, integer=True),
                 m_rule=m_rule, fg=fg,
                 reference=_bool(_pop(d, "reference", path, False), path + ("reference",)),
                 trapping=trapping, diagnostics=diagnostics)
    _done(d, path)
    return out


def _parse_renewal(v, path):
    d = _dict(v, path)
    out = RenewalCfg(
        gamma=_num(_pop(d, "gamma", path), path + ("gamma",), lo=0.5, hi=1.0,
                   lo_open=True, hi_open=True),
        horizon=_num(_pop(d, "horizon", path, 10_000_000), path + ("horizon",),
                     lo=1000, integer=True),
        replicas=_num(_pop(d, "replicas", path, 100), path + ("replicas",),
                      lo=1, integer=True),
        group_size=_num(_pop(d, "group_size", path, 4096), path + ("group_size",),
                        lo=2, integer=True))
    _done(d, path)
    return out


def parse_dict(raw) -> RunConfig:
    d = _dict(raw, ())
    seed = _num(_pop(d, "seed", ()), ("seed",), lo=0, hi=2 ** 64 - 1, integer=True)
    geography = _parse_geography(_pop(d, "geography", ()), ("geography",))
    kernel = _parse_kernel(_pop(d, "kernel", ()), ("kernel",))
    bank = _parse_seedbank(_pop(d, "seedbank", ()), ("seedbank",))
    g = _parse_g(_pop(d, "g", ()), ("g",))
    model = _str(_pop(d, "model", (), "M2"), ("model",), choices={"M1", "M2", "M3"})
    displacement = None
    if d.get("displacement") is not None:
        dd = _dict(_pop(d, "displacement", ()), ("displacement",))
        comp = _parse_component(_pop(dd, "component", ("displacement",)),
                                ("displacement", "component"))
        displacement = DisplacementCfg(
            comp, stay=_num(_pop(dd, "stay", ("displacement",), 0.0),
                            ("displacement", "stay"), lo=0.0, hi=1.0, hi_open=True))
        _done(dd, ("displacement",))
    d.pop("displacement", None)
    if model == "M3" and displacement is None:
        raise ConfigError("displacement: required for model M3")
    if model == "M1" and bank.M != 0:
        raise ConfigError("seedbank.M: model M1 has a single colour (M = 0)")

    dt = _pop(d, "dt", (), None)
    budget = _pop(d, "budget", (), None)
    sections = {}
    for name, parser in (("forward", _parse_forward), ("dual", _parse_dual),
                         ("fss", _parse_fss), ("renewal", _parse_renewal)):
        raw_section = _pop(d, name, (), None)
        sections[name] = parser(raw_section, (name,)) if raw_section is not None else None
    raw_cases = _pop(d, "criteria", (), None)
    criteria = (tuple(_parse_case(c, ("criteria", k)) for k, c in enumerate(raw_cases))
                if raw_cases is not None else None)

    cfg = RunConfig(
        seed=seed, geography=geography, kernel=kernel, seedbank=bank, g=g,
        model=model, displacement=displacement,
        theta0=_num(_pop(d, "theta0", (), 0.5), ("theta0",), lo=0.0, hi=1.0),
        replicas=_num(_pop(d, "replicas", (), 64), ("replicas",), lo=1, integer=True),
        dt=None if dt is None else _num(dt, ("dt",), lo=0.0, lo_open=True),
        init=_str(_pop(d, "init", (), "constant"), ("init",),
                  choices={"constant", "bernoulli"}),
        threads=_num(_pop(d, "threads", (), 1), ("threads",), lo=1, hi=256, integer=True),
        block_size=_num(_pop(d, "block_size", (), 64), ("block_size",), lo=1,
                        integer=True),
        budget=None if budget is None else _num(budget, ("budget",), lo=0.0,
                                                lo_open=True),
        outputs=tuple(_str(x, ("outputs", k), choices={"csv", "jsonl", "svg"})
                      for k, x in enumerate(_pop(d, "outputs", (),
                                                 ["csv", "jsonl", "svg"]))),
        forward=sections["forward"], dual=sections["dual"], criteria=criteria,
        fss=sections["fss"], renewal=sections["renewal"],
    )
    _done(d, ())
    if len(set(cfg.outputs)) != len(cfg.outputs) or not cfg.outputs:
        raise ConfigError("outputs: must be a nonempty list without duplicates")
    return cfg


def parse_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON ({err})")
    return parse_dict(raw)


# ---------------------------------------------------------------------------
# echo


def _strip(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _strip(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, tuple):
        return [_strip(x) for x in obj]
    return obj


def echo(cfg: RunConfig) -> dict:
    """Canonical dict with every default materialised; parse(echo(c)) == c."""
    out = {
        "seed": cfg.seed,
        "geography": _strip(cfg.geography),
        "kernel": _strip(cfg.kernel),
        "seedbank": _strip(cfg.seedbank),
        "g": _strip(cfg.g),
        "model": cfg.model,
        "theta0": cfg.theta0,
        "replicas": cfg.replicas,
        "dt": cfg.dt,
        "init": cfg.init,
        "threads": cfg.threads,
        "block_size": cfg.block_size,
        "budget": cfg.budget,
        "outputs": list(cfg.outputs),
    }
    if cfg.displacement is not None:
        out["displacement"] = _strip(cfg.displacement)
    for name in ("forward", "dual", "fss", "renewal"):
        section = getattr(cfg, name)
        if section is not None:
            out[name] = _strip(section)
    if cfg.criteria is not None:
        out["criteria"] = [_strip(c) for c in cfg.criteria]
    return out


def config_sha256(cfg: RunConfig) -> str:
    blob = json.dumps(echo(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# builders


def build_geography(cfg: GeographyCfg, n=None) -> geometry.Geography:
    n = cfg.n if n is None else n
    if cfg.family == "torus":
        return geometry.make_torus(cfg.dim, n)
    return geometry.make_hierarchy(cfg.N, n)


def _component_spec(c: KernelComponentCfg):
    if c.variant == "nearest":
        return geometry.NearestNeighbour(c.rate)
    if c.variant == "heavy_tail":
        return geometry.HeavyTail(c.Q, c.q)
    return geometry.HierarchicalJump(c.c)


def build_kernel(cfg: KernelCfg, geography) -> geometry.MigrationKernel:
    specs = [_component_spec(c) for c in cfg.components]
    return geometry.build_kernel(geography, specs, symmetrize=cfg.symmetrize,
                                 fold=cfg.fold, eps_fold=cfg.eps_fold)


def build_profile(cfg: SeedbankCfg, M=None) -> seedbank.SeedBankProfile:
    """M overrides the configured colour cutoff (the fss M_n rule)."""
    if cfg.provenance == "explicit":
        if M is not None and M != len(cfg.K) - 1:
            raise ConfigError("fss.m_rule: explicit profiles cannot be re-truncated")
        return seedbank.explicit_profile(cfg.K, cfg.e)
    if cfg.provenance == "polynomial":
        return seedbank.polynomial_profile(cfg.A, cfg.alpha, cfg.B, cfg.beta,
                                           cfg.M if M is None else M)
    return seedbank.hierarchical_bank_profile(cfg.K[0], cfg.e[0], cfg.N,
                                              cfg.M if M is None else M)


def build_g(cfg: DiffusionCfg):
    if cfg.kind == "fisher_wright":
        return forward.FisherWright(cfg.d)
    if cfg.kind == "ohta_kimura":
        return forward.OhtaKimura(cfg.d)
    return forward.TabulatedDiffusion(cfg.values, cfg.lipschitz)


def build_displacement(cfg: DisplacementCfg, geography, colours: int):
    """Per-colour displacement rows: the component's jump row, renormalised
    to probabilities, with a point mass `stay` kept at the origin."""
    spec = _component_spec(cfg.component)
    kern = geometry.build_kernel(geography, [spec])
    row = kern.jump_row / kern.total_rate * (1.0 - cfg.stay)
    row[0] += cfg.stay
    return np.tile(row, (colours, 1))


def build_system(cfg: RunConfig, *, n=None, M=None) -> forward.System:
    geography = build_geography(cfg.geography, n)
    kernel = build_kernel(cfg.kernel, geography)
    profile = build_profile(cfg.seedbank, M)
    displacement = None
    if cfg.displacement is not None:
        displacement = build_displacement(cfg.displacement, geography, profile.M + 1)
    return forward.System(kernel, profile, build_g(cfg.g), model=cfg.model,
                          displacement=displacement)
