"""Pairing integrals against monomials and the orchestrated verification suite."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .analytic_expr import Breakpoint
from .beltrami import (
    BeltramiSpec,
    analyticity_defect,
    load_spec,
    mu_sampler,
    slice_fourier,
    validate_spec,
)
from .errors import BudgetExceeded, ConfigError, TBError
from .loewner import ChainEvaluator, decay_bound, log_b_many, omega
from .oracle import (
    BOUNDARY_TARGET,
    GRID_TARGET,
    PlaneGrid,
    annulus_nodes,
    calibrate,
    principal_solution,
    triviality_residual,
)
from .presets import PRESETS, SAMPLERS
from .qcmap import (
    QCMap,
    dilatation_fd_multi,
    dilatation_target,
    disk_triangulation,
    f_at,
    f_grid,
    orientation_check,
)

# ---------------------------------------------------------------------------
# coefficient sources


@dataclass(frozen=True)
class Source:
    """A coefficient either given by a family spec or only by a point sampler."""

    name: str
    sampler: Callable = field(repr=False)
    spec: BeltramiSpec | None = None
    breakpoints: tuple[Breakpoint, ...] = ()

    @classmethod
    def of(cls, obj) -> "Source":
        if isinstance(obj, Source):
            return obj
        if isinstance(obj, BeltramiSpec):
            return cls(obj.name or "spec", mu_sampler(obj), obj, tuple(obj.breakpoints()))
        if callable(obj):
            return cls(getattr(obj, "__name__", "sampler"), obj)
        raise TypeError("expected a BeltramiSpec, a Source or a callable sampler")


def resolve_source(arg: str, **sampler_args) -> Source:
    """``path.json``, ``preset:NAME`` or ``sampler:NAME``."""
    if arg.startswith("preset:"):
        key = arg.split(":", 1)[1]
        if key not in PRESETS:
            raise ConfigError(f"unknown preset {key!r}; choose from {sorted(PRESETS)}")
        return Source.of(PRESETS[key]())
    if arg.startswith("sampler:"):
        key = arg.split(":", 1)[1]
        if key not in SAMPLERS:
            raise ConfigError(f"unknown sampler {key!r}; choose from {sorted(SAMPLERS)}")
        return Source(key, SAMPLERS[key](**sampler_args))
    try:
        return Source.of(load_spec(arg))
    except FileNotFoundError as exc:
        raise ConfigError(f"spec file not found: {arg}") from exc
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse spec {arg}: {exc}") from exc


# ---------------------------------------------------------------------------
# infinitesimal defect


class Defect(NamedTuple):
    values: np.ndarray  # |pairing with z^n| for n = 0..n_max
    max: float


def _radial_panels(breakpoints, osc_levels: int = 40) -> list[tuple[float, float]]:
    cuts = {0.0, 1.0}
    for b in breakpoints:
        if b.t > 0:
            cuts.add(math.exp(-b.t))
    if any(b.t == 0 and b.oscillatory for b in breakpoints):
        # e^{-i log t} winds ever faster as t = -log r -> 0: dyadic panels in t
        for j in range(osc_levels):
            cuts.add(math.exp(-(2.0 ** -j)))
    c = sorted(cuts)
    return list(zip(c[:-1], c[1:]))


def infinitesimal_defect(source, n_max: int = 16, radial_nodes: int = 32, n_theta: int = 256) -> Defect:
    """|integral over the disk of mu(z) z^n dx dy| for n = 0..n_max.

    Exact FFT in the angle, Gauss-Legendre in the radius on panels split at
    every radius e^{-b} where the coefficient jumps.
    """
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    src = Source.of(source)
    nt = max(n_theta, 256)
    while nt < 4 * (n_max + 1):
        nt *= 2
    theta = 2 * np.pi * np.arange(nt) / nt
    x, w = np.polynomial.legendre.leggauss(radial_nodes)
    n = np.arange(n_max + 1)
    total = np.zeros(n_max + 1, dtype=complex)
    for a, b in _radial_panels(src.breakpoints):
        r = 0.5 * (b - a) * x + 0.5 * (a + b)
        wr = 0.5 * (b - a) * w
        z = r[:, None] * np.exp(1j * theta)[None, :]
        mu = np.asarray(src.sampler(z), dtype=complex)
        # integral_0^{2 pi} mu e^{i n theta} d theta = 2 pi ifft(mu)[n]
        ang = 2 * np.pi * np.fft.ifft(mu, axis=1)[:, : n_max + 1]
        total += np.sum(wr[:, None] * r[:, None] ** (n[None, :] + 1) * ang, axis=0)
    vals = np.abs(total)
    return Defect(vals, float(np.max(vals)))


# ---------------------------------------------------------------------------
# chain invariants


class CheckValue(NamedTuple):
    value: float
    threshold: float
    passed: bool
    detail: dict | None = None


def _upper(value, threshold) -> CheckValue:
    return CheckValue(float(value), float(threshold), bool(value <= threshold))


def chain_invariants(spec: BeltramiSpec, samples: int = 200, seed: int = 0,
                     rtol: float = 1e-10, atol: float = 1e-12) -> dict[str, CheckValue]:
    """Schwarz bound, decay law, monotone decay, refinement, composition and b'(0) checks."""
    rng = np.random.default_rng(seed)
    ev = ChainEvaluator.from_spec(spec, rtol=rtol, atol=atol)
    k = ev.family.k
    r = rng.uniform(0.0, 1.0, samples)
    r = np.where(r == 0, 1.0, r)
    z = r * np.exp(2j * np.pi * rng.uniform(0.0, 1.0, samples))
    t = rng.uniform(0.0, 10.0, samples)
    s_mid = t * rng.uniform(0.0, 1.0, samples)
    tb = np.sort(rng.uniform(0.0, 10.0, samples))
    out = {}

    w = omega(ev, z, t)
    out["schwarz"] = _upper(np.max(np.abs(w) - np.abs(z)), 1e-9)

    b = np.exp(log_b_many(ev.family, tb)[0])
    out["decay_law"] = _upper(np.max(np.abs(b) - decay_bound(k, tb)), 1e-9)
    steps = np.diff(np.abs(b))
    out["monotone_decay"] = CheckValue(float(np.max(steps)), 0.0, bool(np.all(steps < 0)))

    fine = omega(ev.with_tolerances(rtol / 2, atol / 2), z, t)
    out["refinement"] = _upper(np.max(np.abs(fine - w)), 20 * rtol)

    half = ev.flow(z, t, s_mid)
    nz = half.zeta != 0
    two = np.array(w, copy=True)
    two[nz] = omega(ev, half.zeta[nz], s_mid[nz])
    out["composition"] = _upper(np.max(np.abs(two - w)), 10 * rtol)

    h = 1e-5
    tq = rng.uniform(0.0, 10.0, samples)
    fd = (omega(ev, np.full(samples, h + 0j), tq) - omega(ev, np.full(samples, -h + 0j), tq)) / (2 * h)
    bq = np.exp(log_b_many(ev.family, tq)[0])
    out["b_fd_vs_quadrature"] = _upper(np.max(np.abs(fd - bq)), 1e-6)
    return out


# ---------------------------------------------------------------------------
# dilatation recovery


def dilatation_points(spec: BeltramiSpec, n: int, seed: int = 0, margin: float = 2e-3,
                      t_lo: float = 0.05, t_hi: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (t, theta) pairs with t at least ``margin`` away from every breakpoint."""
    rng = np.random.default_rng(seed)
    edges = np.array([b.t for b in spec.breakpoints() if b.t > 0])
    ts, ths = [], []
    while len(ts) < n:
        t = rng.uniform(t_lo, t_hi)
        th = rng.uniform(0.0, 2 * np.pi)
        if edges.size and np.min(np.abs(edges - t)) < margin:
            continue
        ts.append(t)
        ths.append(th)
    return np.array(ts), np.array(ths)


class DilatationStudy(NamedTuple):
    t: np.ndarray
    theta: np.ndarray
    err_h: np.ndarray
    err_half: np.ndarray

    @property
    def max_error(self) -> float:
        return float(np.max(self.err_h)) if self.err_h.size else 0.0

    def ratio_fraction(self, lo: float = 3.0, hi: float = 5.0, floor: float = 1e-9) -> float:
        """Share of points whose error drops by a factor in [lo, hi] when h halves.

        Points already below ``floor`` at the coarse step are resolved beyond
        what a difference quotient can show and count as passing.
        """
        if not self.err_h.size:
            return 1.0
        resolved = self.err_h < floor
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = self.err_h / self.err_half
        ok = resolved | ((ratio >= lo) & (ratio <= hi))
        return float(np.mean(ok))


def dilatation_study(spec: BeltramiSpec, points: int = 500, h: float = 1e-3, seed: int = 0,
                     rtol: float = 1e-10, atol: float = 1e-12) -> DilatationStudy:
    fmap = QCMap.from_spec(spec, rtol=rtol, atol=atol)
    t, th = dilatation_points(spec, points, seed, margin=2 * h)
    vals = dilatation_fd_multi(fmap, t, th, [h, h / 2])
    target = dilatation_target(spec, t, th)
    return DilatationStudy(t, th, np.abs(vals[0] - target), np.abs(vals[1] - target))


# ---------------------------------------------------------------------------
# configuration

CHECK_NAMES = ("budget", "membership", "loewner", "dilatation", "mesh", "infinitesimal", "oracle")
CHAIN_CHECKS = {"loewner", "dilatation", "mesh"}

DEFAULT_TOLERANCES = {
    "membership": 1e-9,
    "dilatation": 1e-4,
    "dilatation_ratio_fraction": 0.9,
    "infinitesimal": 1e-8,
    "grid_target": GRID_TARGET,
    "boundary_target": BOUNDARY_TARGET,
    "oracle_agreement": 5e-3,
    "calibration_safety": 2.0,
}

DEFAULT_GRID = {
    "oracle_n": 512,
    "oracle_L": 2.0,
    "mesh_rings": 32,
    "mesh_sectors": 64,
    "chain_samples": 200,
    "dilatation_points": 500,
    "dilatation_h": 1e-3,
    "membership_t": 16,
    "fourier_modes": 256,
    "n_max": 16,
    "radial_nodes": 32,
    "calibration_c": 0.3,
}

DEFAULT_INTEGRATOR = {"rtol": 1e-10, "atol": 1e-12}

_CONFIG_KEYS = {"spec", "preset", "sampler", "sampler_args", "seed", "checks", "tolerances",
                "grid", "integrator", "output_dir", "artifacts"}


@dataclass(frozen=True)
class RunConfig:
    source: Source = field(repr=False)
    source_ref: str
    seed: int = 0
    checks: dict = field(default_factory=lambda: {c: True for c in CHECK_NAMES})
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    integrator: dict = field(default_factory=lambda: dict(DEFAULT_INTEGRATOR))
    output_dir: Path | None = None
    artifacts: tuple[str, ...] = ()

    @property
    def sampler_mode(self) -> bool:
        return self.source.spec is None

    def selected(self, name: str) -> bool:
        return bool(self.checks.get(name, False))

    def echo(self) -> dict:
        return {
            "source": self.source_ref,
            "seed": self.seed,
            "checks": {k: bool(self.checks[k]) for k in CHECK_NAMES},
            "tolerances": dict(self.tolerances),
            "grid": dict(self.grid),
            "integrator": dict(self.integrator),
        }


def _merge(defaults: dict, given, what: str) -> dict:
    if given is None:
        return dict(defaults)
    if not isinstance(given, dict):
        raise ConfigError(f"{what} must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    out = dict(defaults)
    for k, v in given.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{what}.{k} must be a number")
        out[k] = type(defaults[k])(v)
    return out


def config_from_dict(d: dict, base_dir: Path | str = ".") -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(d) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = Path(base_dir)
    given = [k for k in ("spec", "preset", "sampler") if d.get(k) is not None]
    if len(given) != 1:
        raise ConfigError("give exactly one of 'spec', 'preset' or 'sampler'")
    kind = given[0]
    if kind == "spec":
        path = base / d["spec"]
        ref = str(d["spec"])
        source = resolve_source(str(path))
    else:
        ref = f"{kind}:{d[kind]}"
        args = d.get("sampler_args") or {}
        if kind == "preset" and args:
            raise ConfigError("sampler_args only apply to samplers")
        try:
            source = resolve_source(ref, **args)
        except TypeError as exc:
            raise ConfigError(f"bad sampler_args: {exc}") from exc
    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    checks = {c: True for c in CHECK_NAMES}
    sel = d.get("checks")
    if sel is not None:
        if not isinstance(sel, dict) or set(sel) - set(CHECK_NAMES):
            raise ConfigError(f"checks must map names from {list(CHECK_NAMES)} to booleans")
        for k, v in sel.items():
            if not isinstance(v, bool):
                raise ConfigError(f"checks.{k} must be a boolean")
            checks[k] = v
    tol = _merge(DEFAULT_TOLERANCES, d.get("tolerances"), "tolerances")
    grid = _merge(DEFAULT_GRID, d.get("grid"), "grid")
    integ = _merge(DEFAULT_INTEGRATOR, d.get("integrator"), "integrator")
    for what, block in (("tolerances", tol), ("grid", grid), ("integrator", integ)):
        for k, v in block.items():
            if not v > 0:
                raise ConfigError(f"{what}.{k} must be positive")
    n = grid["oracle_n"]
    if n & (n - 1):
        raise ConfigError("grid.oracle_n must be a power of two")
    if grid["oracle_L"] <= 1:
        raise ConfigError("grid.oracle_L must exceed 1")
    out = d.get("output_dir")
    arts = d.get("artifacts") or []
    if not isinstance(arts, list) or set(arts) - {"csv", "svg"}:
        raise ConfigError("artifacts must be a list drawn from 'csv' and 'svg'")
    return RunConfig(source, ref, seed, checks, tol, grid, integ,
                     (base / out) if out else None, tuple(sorted(set(arts))))


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        with open(p, encoding="utf-8") as fh:
            d = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(d, p.parent)


# ---------------------------------------------------------------------------
# report

PASS, FAIL, SKIP = "pass", "fail", "skipped"


@dataclass
class CheckRecord:
    name: str
    status: str
    value: float | None
    threshold: float | None
    runtime_s: float = 0.0
    detail: dict | None = None

    def to_json(self) -> dict:
        d = {"name": self.name, "status": self.status, "value": self.value,
             "threshold": self.threshold, "runtime_s": self.runtime_s}
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass
class VerificationReport:
    config: dict
    checks: list[CheckRecord] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_json(self, timing: bool = True) -> dict:
        checks = [c.to_json() for c in self.checks]
        if not timing:
            for c in checks:
                c.pop("runtime_s")
        return {"config": self.config, "checks": checks, "passed": self.passed}

    def dumps(self, timing: bool = True) -> str:
        return json.dumps(self.to_json(timing), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


TIMING_KEYS = ("runtime_s",)


def strip_timing(obj):
    """Drop timing fields from a parsed report, recursively."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def _record(report: VerificationReport, name: str, fn):
    """Run one check; a check raising a package error is recorded as failed."""
    t0 = time.perf_counter()
    try:
        res = fn()
    except TBError as exc:
        report.checks.append(CheckRecord(name, FAIL, None, None, time.perf_counter() - t0,
                                         {"error": f"{type(exc).__name__}: {exc}"}))
        return None
    dt = time.perf_counter() - t0
    items = res if isinstance(res, dict) else {"": res}
    share = dt / max(1, len(items))
    for sub, cv in items.items():
        full = f"{name}.{sub}" if sub else name
        report.checks.append(CheckRecord(full, PASS if cv.passed else FAIL, cv.value, cv.threshold, share, cv.detail))
    return res


def _skip(report: VerificationReport, name: str, why: str):
    report.checks.append(CheckRecord(name, SKIP, None, None, 0.0, {"reason": why}))


def run_suite(cfg: RunConfig) -> VerificationReport:
    """Budget, membership, chain invariants, dilatation, mesh, pairing, oracle, in that order."""
    report = VerificationReport(cfg.echo())
    src = cfg.source
    spec = src.spec
    tol, grid, integ = cfg.tolerances, cfg.grid, cfg.integrator
    chain_ok = spec is not None

    if cfg.selected("budget"):
        if spec is not None:
            def budget():
                try:
                    rep = validate_spec(spec)
                except BudgetExceeded as exc:
                    return CheckValue(exc.report.K, 1.0, False)
                return CheckValue(rep.K, 1.0, rep.accepted)

            res = _record(report, "budget", budget)
            chain_ok = res is not None and res.passed
        else:
            def budget_sampled():
                r = np.linspace(0.0, 1.0, 257)[1:]
                z = r[:, None] * np.exp(2j * np.pi * np.arange(256) / 256)[None, :]
                k = float(np.max(np.abs(src.sampler(z))))
                return CheckValue(k, 1.0, k < 1)

            _record(report, "budget", budget_sampled)

    if cfg.selected("membership"):
        def membership():
            rng = np.random.default_rng(cfg.seed)
            ts = np.sort(rng.uniform(0.0, 5.0, int(grid["membership_t"])))
            defects = [analyticity_defect(slice_fourier(src.sampler, float(t), int(grid["fourier_modes"]))) for t in ts]
            return _upper(max(defects), tol["membership"])

        _record(report, "membership", membership)

    for name in ("loewner", "dilatation", "mesh"):
        if not cfg.selected(name):
            continue
        if spec is None:
            _skip(report, name, "sampler mode has no chain")
            continue
        if not chain_ok:
            _skip(report, name, "budget check failed")
            continue
        if name == "loewner":
            _record(report, name, lambda: chain_invariants(
                spec, int(grid["chain_samples"]), cfg.seed, integ["rtol"], integ["atol"]))
        elif name == "dilatation":
            def dil():
                st = dilatation_study(spec, int(grid["dilatation_points"]), grid["dilatation_h"], cfg.seed,
                                      integ["rtol"], integ["atol"])
                return {
                    "error": _upper(st.max_error, tol["dilatation"]),
                    "halving_ratio": CheckValue(st.ratio_fraction(), tol["dilatation_ratio_fraction"],
                                                st.ratio_fraction() >= tol["dilatation_ratio_fraction"]),
                }

            _record(report, name, dil)
        else:
            def mesh():
                m = disk_triangulation(int(grid["mesh_rings"]), int(grid["mesh_sectors"]))
                fmap = QCMap.from_spec(spec, rtol=integ["rtol"], atol=integ["atol"])
                smp = f_grid(fmap, m)
                ori = orientation_check(m, smp)
                drift = float(np.max(np.abs(smp.fz[m.boundary] - m.vertices[m.boundary])))
                flagged = int(np.sum(smp.flag != 0))
                _write_mesh_artifacts(cfg, m, smp)
                return {
                    "orientation": CheckValue(float(ori.n_negative), 0.0, ori.all_positive and flagged == 0,
                                              {"n_triangles": ori.n_triangles, "min_area": ori.min_area,
                                               "failed_points": flagged}),
                    "boundary_fixed": CheckValue(drift, 0.0, drift == 0.0),
                }

            _record(report, name, mesh)

    if cfg.selected("infinitesimal"):
        def inf():
            d = infinitesimal_defect(src, int(grid["n_max"]), int(grid["radial_nodes"]))
            return CheckValue(d.max, tol["infinitesimal"], d.max <= tol["infinitesimal"],
                              {"argmax_n": int(np.argmax(d.values))})

        _record(report, "infinitesimal", inf)

    if cfg.selected("oracle"):
        N, L = int(grid["oracle_n"]), float(grid["oracle_L"])

        t0 = time.perf_counter()
        c = calibrate(N, L, grid["calibration_c"], tol["calibration_safety"])
        report.checks.append(CheckRecord(
            "oracle.calibration", PASS if c.threshold <= tol["grid_target"] else FAIL,
            c.threshold, tol["grid_target"], time.perf_counter() - t0,
            {"res_outer": c.res_outer, "res_boundary": c.res_boundary, "interior_error": c.interior_error},
        ))

        def solve():
            sol = principal_solution(PlaneGrid.from_sampler(src.sampler, N, L))
            res = triviality_residual(sol)
            out = {
                "res_outer": _upper(res.res_outer, c.threshold),
                "res_boundary": _upper(res.res_boundary, tol["boundary_target"]),
            }
            out["res_outer"] = out["res_outer"]._replace(detail={"iterations": sol.iterations,
                                                                 "residual_l2": sol.residual})
            if spec is not None and chain_ok:
                idx = annulus_nodes(sol.grid)
                z = sol.grid.z.ravel()[idx]
                fmap = QCMap.from_spec(spec, rtol=integ["rtol"], atol=integ["atol"])
                gap = float(np.max(np.abs(sol.F.ravel()[idx] - f_at(fmap, z))))
                out["chain_agreement"] = _upper(gap, tol["oracle_agreement"])
            return out

        _record(report, "oracle", solve)

    if cfg.output_dir is not None:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        (cfg.output_dir / "report.json").write_text(report.dumps(), encoding="utf-8")
    return report


def _write_mesh_artifacts(cfg: RunConfig, mesh, samples):
    if cfg.output_dir is None or not cfg.artifacts:
        return
    from .render import render_svg

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if "csv" in cfg.artifacts:
        (cfg.output_dir / "mesh_samples.csv").write_text(samples.to_csv(), encoding="utf-8")
    if "svg" in cfg.artifacts:
        src_svg, img_svg = render_svg(mesh, samples.fz)
        (cfg.output_dir / "mesh_source.svg").write_text(src_svg, encoding="utf-8")
        (cfg.output_dir / "mesh_image.svg").write_text(img_svg, encoding="utf-8")
