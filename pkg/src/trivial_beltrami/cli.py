"""Command line interface ``tb``."""
from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

import numpy as np

from .beltrami import analyticity_defect, slice_fourier, validate_spec
from .errors import BudgetExceeded, ConfigError, TBError
from .oracle import PlaneGrid, dumps_report, principal_solution, residual_report, triviality_residual
from .qcmap import PolarGrid, QCMap, disk_triangulation, f_grid, orientation_check
from .render import render_svg
from .verify import dilatation_study, infinitesimal_defect, load_config, resolve_source, run_suite


def _dumps(d) -> str:
    return json.dumps(d, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _need_spec(src, what: str):
    if src.spec is None:
        raise ConfigError(f"{what} needs a family spec, not a bare sampler")
    return src.spec


def _grid_arg(text: str):
    m = re.fullmatch(r"(polar|tri):(\d+)x(\d+)", text)
    if not m:
        raise argparse.ArgumentTypeError("expected polar:PxM or tri:RxS")
    return m.group(1), int(m.group(2)), int(m.group(3))


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def cmd_validate(a) -> int:
    spec = _need_spec(resolve_source(a.spec), "validate")
    try:
        rep = validate_spec(spec)
    except BudgetExceeded as exc:
        sys.stdout.write(_dumps(exc.report.to_json()))
        return 1
    sys.stdout.write(_dumps(rep.to_json()))
    return 0


def cmd_construct(a) -> int:
    spec = _need_spec(resolve_source(a.spec), "construct")
    kind, p, m = a.grid
    fmap = QCMap.from_spec(spec)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    if kind == "polar":
        g = PolarGrid.standard(p, m, fmap.t_max, [b.t for b in spec.breakpoints()])
        smp = f_grid(fmap, g)
        summary = {"grid": f"polar:{p}x{m}", "points": int(smp.z.size), "failed_points": int(np.sum(smp.flag != 0))}
        ok = summary["failed_points"] == 0
    else:
        mesh = disk_triangulation(p, m)
        smp = f_grid(fmap, mesh)
        ori = orientation_check(mesh, smp)
        summary = {"grid": f"tri:{p}x{m}", "points": int(smp.z.size), "failed_points": int(np.sum(smp.flag != 0)),
                   "orientation": ori.to_json()}
        ok = summary["failed_points"] == 0 and ori.all_positive
    (out / "samples.csv").write_text(smp.to_csv(), encoding="utf-8")
    (out / "summary.json").write_text(_dumps(summary), encoding="utf-8")
    sys.stdout.write(_dumps(summary))
    return 0 if ok else 1


def cmd_dilatation(a) -> int:
    spec = _need_spec(resolve_source(a.spec), "dilatation")
    st = dilatation_study(spec, a.points, a.h, a.seed)
    frac = st.ratio_fraction()
    d = {"points": a.points, "h": a.h, "seed": a.seed, "max_error": st.max_error,
         "max_error_half_h": float(np.max(st.err_half)) if st.err_half.size else 0.0,
         "ratio_fraction": frac, "passed": bool(st.max_error <= 1e-4 and frac >= 0.9)}
    sys.stdout.write(_dumps(d))
    return 0 if d["passed"] else 1


def cmd_fourier(a) -> int:
    src = resolve_source(a.spec)
    rows = []
    out = Path(a.out) if a.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for t in a.t:
        sl = slice_fourier(src.sampler, t, a.modes)
        rows.append({"t": t, "analyticity_defect": analyticity_defect(sl), "parseval_mass": sl.parseval_mass})
        if out:
            (out / f"slice_t{t:g}.csv").write_text(sl.to_csv(), encoding="utf-8")
    d = {"modes": a.modes, "slices": rows}
    sys.stdout.write(_dumps(d))
    return 0


def cmd_infinitesimal(a) -> int:
    d = infinitesimal_defect(resolve_source(a.spec), a.nmax, a.radial_nodes)
    sys.stdout.write(_dumps({"n_max": a.nmax, "values": [float(v) for v in d.values], "max": d.max}))
    return 0


def cmd_oracle(a) -> int:
    src = resolve_source(a.spec)
    sol = principal_solution(PlaneGrid.from_sampler(src.sampler, a.n, a.L))
    sys.stdout.write(dumps_report(residual_report(sol, triviality_residual(sol))))
    return 0


def cmd_suite(a) -> int:
    cfg = load_config(a.config)
    rep = run_suite(cfg)
    text = rep.dumps(timing=not a.no_timing)
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return rep.exit_code


def cmd_render(a) -> int:
    spec = _need_spec(resolve_source(a.spec), "render")
    mesh = disk_triangulation(a.rings, a.sectors)
    smp = f_grid(QCMap.from_spec(spec), mesh)
    src_svg, img_svg = render_svg(mesh, smp.fz)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mesh_source.svg").write_text(src_svg, encoding="utf-8")
    (out / "mesh_image.svg").write_text(img_svg, encoding="utf-8")
    ori = orientation_check(mesh, smp)
    sys.stdout.write(_dumps(ori.to_json()))
    return 0 if ori.all_positive else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tb", description="Trivial Beltrami coefficients from Loewner chains.")
    sub = p.add_subparsers(dest="command", required=True)
    spec_help = "spec JSON file, preset:NAME or sampler:NAME"

    s = sub.add_parser("validate", help="check declared bounds and the norm budget")
    s.add_argument("spec", help=spec_help)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("construct", help="sample the map on a grid")
    s.add_argument("spec", help=spec_help)
    s.add_argument("--grid", type=_grid_arg, default=("polar", 32, 64))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_construct)

    s = sub.add_parser("dilatation", help="finite-difference dilatation against the target")
    s.add_argument("spec", help=spec_help)
    s.add_argument("--points", type=int, default=500)
    s.add_argument("--h", type=float, default=1e-3)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_dilatation)

    s = sub.add_parser("fourier", help="Fourier modes of boundary slices")
    s.add_argument("spec", help=spec_help)
    s.add_argument("--t", type=_floats, required=True)
    s.add_argument("--modes", type=int, default=256)
    s.add_argument("--out")
    s.set_defaults(func=cmd_fourier)

    s = sub.add_parser("infinitesimal", help="pairings with z^n")
    s.add_argument("spec", help=spec_help)
    s.add_argument("--nmax", type=int, default=16)
    s.add_argument("--radial-nodes", type=int, default=32)
    s.set_defaults(func=cmd_infinitesimal)

    s = sub.add_parser("oracle", help="principal solution and triviality residuals")
    s.add_argument("spec", help=spec_help)
    s.add_argument("--n", type=int, default=512)
    s.add_argument("--L", type=float, default=2.0)
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("suite", help="run the configured verification suite")
    s.add_argument("config")
    s.add_argument("--out", help="also write the report here")
    s.add_argument("--no-timing", action="store_true", help="omit runtime fields")
    s.set_defaults(func=cmd_suite)

    s = sub.add_parser("render", help="SVG of the mesh and its image")
    s.add_argument("spec", help=spec_help)
    s.add_argument("--out", required=True)
    s.add_argument("--rings", type=int, default=32)
    s.add_argument("--sectors", type=int, default=64)
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"tb: configuration error: {exc}", file=sys.stderr)
        return 2
    except (TBError, ValueError) as exc:
        print(f"tb: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
