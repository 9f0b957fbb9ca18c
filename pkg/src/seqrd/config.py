"""INI-style run configuration.

Sections: ``[source]``, ``[distortion]``, ``[system]``, ``[solver]``, ``[sim]``,
``[sweep]`` and ``[verify]``. Lists are comma separated; lists of tuples
separate tuples with ``;``. ``#`` starts a comment. Every parse error is a
:class:`~seqrd.errors.ConfigError` naming the offending ``section.key``.

Example::

    [source]
    kind = gauss_markov
    variances = 1, 1, 1
    correlations = 0.9, 0.9

    [distortion]
    D = 0.05            # a single value applies to every frame

    [system]
    kinds = CC, CNC1, JC
"""
from __future__ import annotations

import configparser
from pathlib import Path

from .discrete_rd import DiscreteOptions, uniform_grid
from .errors import ConfigError, InvalidSpecError
from .gauss_opt import OptProblem, SolverOptions
from .mc_sim import BACKENDS, SimConfig
from .model import SourceSpec, as_distortion, markov_constraints, parse_kind

SOURCE_KINDS = ("gauss_markov", "autoregressive", "binary_markov")


def read_config(path) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                    interpolation=None)
    cfg.optionxform = str
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        cfg.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return cfg


def parse_config_text(text: str) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                    interpolation=None)
    cfg.optionxform = str
    try:
        cfg.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    return cfg


def _get(cfg, section, key, default=None, required=False):
    if cfg.has_option(section, key):
        return cfg.get(section, key).strip()
    if required:
        raise ConfigError("missing required entry", key=f"{section}.{key}")
    return default


def _number(text, key, kind=float):
    try:
        return kind(text)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {text!r}", key=key) from None


def _numbers(text, key, kind=float) -> list:
    parts = [t.strip() for t in text.split(",") if t.strip()]
    if not parts:
        raise ConfigError("empty list", key=key)
    return [_number(t, key, kind) for t in parts]


def get_float(cfg, section, key, default=None, required=False):
    text = _get(cfg, section, key, required=required)
    return default if text is None else _number(text, f"{section}.{key}")


def get_int(cfg, section, key, default=None, required=False):
    text = _get(cfg, section, key, required=required)
    return default if text is None else _number(text, f"{section}.{key}", int)


def get_list(cfg, section, key, default=None, required=False, kind=float):
    text = _get(cfg, section, key, required=required)
    return default if text is None else _numbers(text, f"{section}.{key}", kind)


def parse_source(cfg) -> SourceSpec:
    kind = _get(cfg, "source", "kind", required=True)
    try:
        if kind == "gauss_markov":
            var = get_list(cfg, "source", "variances", required=True)
            rho = get_list(cfg, "source", "correlations", default=[])
            return SourceSpec.gauss_markov(var, rho)
        if kind == "autoregressive":
            coef = get_list(cfg, "source", "coefficients", required=True)
            innov = get_list(cfg, "source", "innovation_variances", default=[1.0])
            T = get_int(cfg, "source", "T", required=True)
            return SourceSpec.autoregressive(coef, innov if len(innov) > 1 else innov[0], T)
        if kind == "binary_markov":
            return SourceSpec.binary_markov(get_list(cfg, "source", "crossovers", required=True))
    except InvalidSpecError as exc:
        raise ConfigError(str(exc), key="source") from None
    raise ConfigError(f"unknown source kind {kind!r}; expected one of {SOURCE_KINDS}",
                      key="source.kind")


def _distortion(values, T, key):
    try:
        values = list(values) * T if len(values) == 1 else values
        return tuple(float(v) for v in as_distortion(values, T))
    except ValueError as exc:
        raise ConfigError(str(exc), key=key) from None


def parse_distortion(cfg, T: int) -> tuple:
    return _distortion(get_list(cfg, "distortion", "D", required=True), T, "distortion.D")


def parse_kinds(text: str, key: str = "system.kinds") -> list:
    kinds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            kinds.append(parse_kind(part))
        except ValueError as exc:
            raise ConfigError(str(exc), key=key) from None
    if not kinds:
        raise ConfigError("no architectures listed", key=key)
    return kinds


def parse_system(cfg, override: str | None = None) -> list:
    if override:
        return parse_kinds(override, key="--kinds")
    return parse_kinds(_get(cfg, "system", "kinds", default="JC"))


def parse_solver(cfg, seed: int | None = None) -> SolverOptions:
    opts = SolverOptions()
    method = _get(cfg, "solver", "method", default=opts.method)
    if method not in ("auto", "sdp", "penalty"):
        raise ConfigError(f"unknown method {method!r}", key="solver.method")
    opts.method = method
    for key in ("penalty_start", "penalty_growth", "chain_tol", "mse_tol"):
        setattr(opts, key, get_float(cfg, "solver", key, getattr(opts, key)))
    for key in ("penalty_rounds", "max_iter", "n_starts", "n_jobs"):
        setattr(opts, key, get_int(cfg, "solver", key, getattr(opts, key)))
    opts.seed = seed if seed is not None else get_int(cfg, "solver", "seed", opts.seed)
    return opts


def parse_discrete_options(cfg) -> DiscreteOptions:
    opts = DiscreteOptions()
    opts.tol = get_float(cfg, "solver", "duality_tol", opts.tol)
    method = _get(cfg, "solver", "discrete_method", default=opts.method)
    if method not in ("auto", "alternating", "conic", "projected_gradient"):
        raise ConfigError(f"unknown method {method!r}", key="solver.discrete_method")
    opts.method = method
    return opts


def parse_opt_problem(cfg, seed: int | None = None) -> OptProblem:
    """Gaussian problem from ``[source]``, ``[distortion]``, the first ``[system]`` kind and ``[solver]``."""
    from .model import build_covariance

    spec = parse_source(cfg)
    if not spec.is_gaussian:
        raise ConfigError("a Gaussian source is required", key="source.kind")
    D = parse_distortion(cfg, spec.T)
    kind = parse_system(cfg)[0]
    try:
        constraints = markov_constraints(kind, spec.T)
    except ValueError as exc:
        raise ConfigError(str(exc), key="system.kinds") from None
    return OptProblem(build_covariance(spec), D, constraints, parse_solver(cfg, seed))


def parse_sim(cfg, spec: SourceSpec, D, seed: int | None = None):
    """``(SimConfig or None, backend, delay)``; the config is None for the JC test channel."""
    backend = _get(cfg, "sim", "backend", default="ideal_test_channel")
    n = get_int(cfg, "sim", "n", 200_000)
    reps = get_int(cfg, "sim", "replications", 1)
    jobs = get_int(cfg, "sim", "n_jobs", 1)
    delay = get_int(cfg, "sim", "delay", 1)
    seed = seed if seed is not None else get_int(cfg, "sim", "seed", 0)
    if n < 1:
        raise ConfigError("blocklength must be positive", key="sim.n")
    if reps < 1:
        raise ConfigError("replications must be positive", key="sim.replications")
    if backend == "jc_test_channel":
        return None, backend, {"n": n, "seed": seed, "replications": reps, "delay": delay}
    if backend not in BACKENDS:
        raise ConfigError(f"unknown backend {backend!r}", key="sim.backend")
    if not spec.is_gaussian:
        raise ConfigError("simulation needs a Gaussian source", key="source.kind")
    return SimConfig(spec, D, n=n, seed=seed, backend=backend, replications=reps,
                     n_jobs=jobs), backend, {}


def parse_sweep(cfg, T: int) -> list:
    """Grid of distortion tuples.

    ``points = d1, d2, d3; ...`` lists tuples; ``direction`` with ``scales``
    gives ``t * direction``; ``lo``, ``hi`` and ``n`` give a uniform product
    grid. ``points`` may be empty.
    """
    if not cfg.has_section("sweep"):
        raise ConfigError("missing [sweep] section", key="sweep")
    if cfg.has_option("sweep", "points"):
        text = cfg.get("sweep", "points").strip()
        return [_distortion(_numbers(chunk, "sweep.points"), T, "sweep.points")
                for chunk in text.split(";") if chunk.strip()]
    if cfg.has_option("sweep", "scales"):
        direction = get_list(cfg, "sweep", "direction", default=[1.0] * T)
        if len(direction) != T:
            raise ConfigError(f"need {T} entries", key="sweep.direction")
        scales = get_list(cfg, "sweep", "scales", required=True)
        return [_distortion([t * d for d in direction], T, "sweep.scales") for t in scales]
    if cfg.has_option("sweep", "lo"):
        lo = get_float(cfg, "sweep", "lo", required=True)
        hi = get_float(cfg, "sweep", "hi", required=True)
        n = get_int(cfg, "sweep", "n", required=True)
        if n < 1 or hi < lo or lo < 0:
            raise ConfigError("need 0 <= lo <= hi and n >= 1", key="sweep.n")
        return uniform_grid(lo, hi, n, T)
    raise ConfigError("give points, scales or lo/hi/n", key="sweep")
