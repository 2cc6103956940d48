"""Experiment configuration as a flat ``key = value`` file with dotted keys.

Example::

    experiment = E1_exponent
    params.dim = 2
    params.alpha = 0.5
    params.p = 3
    params.resolution = 32
    sweep.s = 0.4, 0.2, 0.1, 0.05
    probes = 0 0.5; 0 1.0
    seed = 0

Lines starting with ``#`` are comments.  Lists are comma separated, points
in ``probes`` are separated by ``;`` with coordinates split by spaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import DomainError
from .geometry import ProblemParams

EXPERIMENTS = ("E1_exponent", "E2_blowup", "E3_alpha_vanishing", "E4_constants",
               "E5_kernel_identities", "E6_mollifier", "E7_cone_bound")

_PARAM_TYPES = {"dim": int, "alpha": float, "p": float, "s": float, "resolution": int,
                "grading_exponent": float, "angular_clustering": float}
_LISTS = ("s_list", "alpha_list", "n_list", "sigma_list")
_LIST_KEYS = {"sweep.s": "s_list", "sweep.alpha": "alpha_list", "sweep.n": "n_list",
              "sweep.sigma": "sigma_list"}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    params: ProblemParams
    s_list: tuple = ()
    alpha_list: tuple = ()
    n_list: tuple = ()
    sigma_list: tuple = ()
    probes: tuple = ()
    output_dir: str = "out"
    seed: int = 0
    options: dict = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        if self.experiment_id not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment_id!r}")
        for name in _LISTS:
            v = getattr(self, name)
            if len(v) > 1 and not (all(a < b for a, b in zip(v, v[1:]))
                                   or all(a > b for a, b in zip(v, v[1:]))):
                raise DomainError(f"{name} must be strictly sorted")
        N = self.params.dim
        for pnt in self.probes:
            if len(pnt) != N:
                raise DomainError(f"probe {pnt} does not have {N} coordinates")
            d2 = sum(x * x for x in pnt[:-1]) + (pnt[-1] - 1.0) ** 2
            if d2 >= 1.0:
                raise DomainError(f"probe {pnt} lies outside B_1(e_N)")


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def _list(text, typ):
    return tuple(typ(x) for x in text.replace(" ", "").split(",") if x)


def parse_config(text: str) -> ExperimentConfig:
    kv = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"line {ln}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k in kv:
            raise DomainError(f"line {ln}: duplicate key {k!r}")
        kv[k] = v
    if "experiment" not in kv:
        raise DomainError("missing key 'experiment'")
    pk = {}
    for name, typ in _PARAM_TYPES.items():
        key = f"params.{name}"
        if key in kv:
            pk[name] = typ(kv.pop(key))
    for req in ("dim", "alpha", "p"):
        if req not in pk:
            raise DomainError(f"missing key 'params.{req}'")
    kw = {"experiment_id": kv.pop("experiment"), "params": ProblemParams(**pk)}
    for key, name in _LIST_KEYS.items():
        if key in kv:
            kw[name] = _list(kv.pop(key), int if name == "n_list" else float)
    if "probes" in kv:
        kw["probes"] = tuple(tuple(float(c) for c in chunk.split())
                             for chunk in kv.pop("probes").split(";") if chunk.strip())
    if "output_dir" in kv:
        kw["output_dir"] = kv.pop("output_dir")
    if "seed" in kv:
        kw["seed"] = int(kv.pop("seed"))
    opts = {}
    for k in list(kv):
        if not k.startswith("options."):
            raise DomainError(f"unknown key {k!r}")
        opts[k[len("options."):]] = kv.pop(k)
    kw["options"] = opts
    return ExperimentConfig(**kw)


def emit_config(cfg: ExperimentConfig) -> str:
    lines = [f"experiment = {cfg.experiment_id}"]
    for f in fields(ProblemParams):
        lines.append(f"params.{f.name} = {_fmt(getattr(cfg.params, f.name))}")
    for key, name in _LIST_KEYS.items():
        v = getattr(cfg, name)
        if v:
            lines.append(f"{key} = " + ", ".join(_fmt(x) for x in v))
    if cfg.probes:
        lines.append("probes = " + "; ".join(" ".join(_fmt(c) for c in p) for p in cfg.probes))
    lines.append(f"output_dir = {cfg.output_dir}")
    lines.append(f"seed = {cfg.seed}")
    for k in sorted(cfg.options):
        lines.append(f"options.{k} = {cfg.options[k]}")
    return "\n".join(lines) + "\n"


def default_config(experiment_id: str, output_dir="out") -> ExperimentConfig:
    """The configuration the acceptance suite runs for each experiment."""
    from . import thresholds as TH
    base = ProblemParams(2, 0.5, 3.0, 0.0, TH.RESOLUTION)
    probe = ((0.0, TH.BLOWUP_PROBE_T),)
    table = {
        "E1_exponent": dict(params=base, s_list=TH.SWEEP_S, probes=probe),
        "E2_blowup": dict(params=replace(base, p=TH.BLOWUP_P), s_list=TH.SWEEP_S, probes=probe),
        "E3_alpha_vanishing": dict(
            params=ProblemParams(TH.VANISH_DIM, TH.VANISH_ALPHAS[0], TH.VANISH_P, 0.0,
                                 TH.VANISH_RESOLUTION, 2.0, TH.VANISH_CLUSTERING),
            alpha_list=TH.VANISH_ALPHAS),
        "E4_constants": dict(params=base, alpha_list=TH.LIMIT_ALPHAS),
        "E5_kernel_identities": dict(params=base, s_list=TH.POISSON_GREEN_S),
        "E6_mollifier": dict(params=replace(base, s=TH.MOLLIFIER_S), n_list=TH.MOLLIFIER_N),
        "E7_cone_bound": dict(params=base, s_list=TH.SWEEP_S, probes=probe),
    }
    if experiment_id not in table:
        raise DomainError(f"unknown experiment {experiment_id!r}")
    return ExperimentConfig(experiment_id, output_dir=str(output_dir), **table[experiment_id])


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def with_output(cfg: ExperimentConfig, output_dir) -> ExperimentConfig:
    return replace(cfg, output_dir=str(output_dir))
