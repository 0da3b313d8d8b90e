"""Command-line driver.

Subcommands: ``run`` (transient simulation with VTK/CSV output),
``converge`` (manufactured-solution rate tables), ``stability`` (time-step
sweep on the junction preset), ``roughness`` (wall-roughness study). With
``--assert`` the verification subcommands exit nonzero when a fitted rate or
a qualitative claim misses its threshold.
"""

import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from . import mesh as meshmod
from . import mms, scheme, verify, vtkio

SPATIAL_L2_THRESHOLD = 1.8
SPATIAL_H1_THRESHOLD = 0.8
PRESSURE_L2_THRESHOLD = 0.8
TEMPORAL_L2_THRESHOLD = 0.8
STABILITY_TAUS = (1e-7, 1e-6, 1e-5)
STABILITY_HORIZON = 2e-5
ROUGHNESS_FRACTIONS = (0.1, 0.2, 0.3, 0.4)
ROUGHNESS_HORIZON = 2e-5
ROUGHNESS_SEPARATION = 0.01


def _log(*parts):
    print(*parts, file=sys.stderr)


def _load_config(args):
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = cfgmod.parse_config(fh.read())
    else:
        cfg = cfgmod.preset_config(args.preset)
    if getattr(args, "convection", None):
        cfg.convection = args.convection
    cfg.validate()
    return cfg


def _build_stepper(cfg, tau=None):
    mesh = meshmod.generate(cfg.geometry)
    return scheme.Stepper(
        mesh,
        cfg.physics,
        cfg.bcs,
        tau=cfg.tau if tau is None else tau,
        convection=cfg.convection,
        solver=cfg.solver,
        solver_tol=cfg.solver_tol,
        slip_potential=cfg.slip_potential,
    )


def _initial(stepper):
    if stepper.params.species_count == 3:
        return stepper.initial_state()
    return stepper.zero_state()


def _cmd_run(args):
    cfg = _load_config(args)
    stepper = _build_stepper(cfg)
    state = _initial(stepper)
    n_steps = args.steps if args.steps else max(1, round(cfg.T / cfg.tau))
    os.makedirs(args.out, exist_ok=True)
    _log(
        f"run: {cfg.preset or 'custom'} mesh={stepper.mesh.num_triangles} tris "
        f"tau={cfg.tau:g} steps={n_steps} convection={cfg.convection}"
    )

    labels = verify.energy_labels(cfg.physics.species_count)
    rows = []
    for k in range(1, n_steps + 1):
        state, rec = stepper.advance(state)
        rows.append([state.step, state.time] + list(rec.entries()))
        if not rec.all_finite():
            _log(f"step {k}: non-finite energy, aborting")
            return 1
        if k % cfg.output_interval == 0 or k == n_steps:
            path = os.path.join(args.out, f"state_{k:06d}.vtk")
            vtkio.write_state_vtk(path, stepper.mesh, state)
            _log(f"step {k}/{n_steps} t={state.time:.6g} wrote {path}")

    csv_path = os.path.join(args.out, "energies.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("step,time," + ",".join(f"{l}_norm" for l in labels) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")
    _log(f"wrote {csv_path}")
    return 0


def _converge_case(cfg):
    return mms.default_case(cfg.physics)


def _cmd_converge(args):
    cfg = _load_config(args)
    case = _converge_case(cfg)
    os.makedirs(args.out, exist_ok=True)
    failures = []

    if args.mode in ("spatial", "both"):
        _log(f"converge: spatial, {args.levels} levels from {args.base_n}x{args.base_n}")
        table = verify.run_mms_spatial(
            case, levels=args.levels, base_n=args.base_n, convection=cfg.convection
        )
        path = os.path.join(args.out, "rates_spatial.csv")
        table.write_csv(path)
        _log(f"wrote {path}")
        for f in table.fields:
            l2, h1 = table.slope(f), table.slope(f, "h1")
            _log(f"  {f}: L2 slope {l2:.2f} H1 slope {h1:.2f}")
            if f == "p":
                if l2 < PRESSURE_L2_THRESHOLD:
                    failures.append(f"pressure L2 slope {l2:.2f} < {PRESSURE_L2_THRESHOLD}")
            else:
                if l2 < SPATIAL_L2_THRESHOLD:
                    failures.append(f"{f} L2 slope {l2:.2f} < {SPATIAL_L2_THRESHOLD}")
                if h1 < SPATIAL_H1_THRESHOLD:
                    failures.append(f"{f} H1 slope {h1:.2f} < {SPATIAL_H1_THRESHOLD}")

    if args.mode in ("temporal", "both"):
        _log(f"converge: temporal on {args.temporal_n}x{args.temporal_n} mesh")
        table = verify.run_mms_temporal(case, n=args.temporal_n, convection=cfg.convection)
        path = os.path.join(args.out, "rates_temporal.csv")
        table.write_csv(path)
        _log(f"wrote {path}")
        watched = ["rho", "u"] + [f"c{i+1}" for i in range(cfg.physics.species_count)]
        for f in table.fields:
            l2 = table.slope(f)
            _log(f"  {f}: L2 slope {l2:.2f}")
            if f in watched and l2 < TEMPORAL_L2_THRESHOLD:
                failures.append(f"temporal {f} slope {l2:.2f} < {TEMPORAL_L2_THRESHOLD}")

    if args.assert_ and failures:
        for f in failures:
            _log("FAIL:", f)
        return 1
    return 0


def _cmd_stability(args):
    cfg = _load_config(args)

    def make(tau):
        return _build_stepper(cfg, tau=tau)

    _log(f"stability: taus={list(STABILITY_TAUS)} T={STABILITY_HORIZON:g}")
    results = verify.run_stability_sweep(make, STABILITY_TAUS, STABILITY_HORIZON)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "stability.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tau,field,max_energy,early_max,finite\n")
        for res in results:
            for label, mx, early in zip(res.labels, res.max_entries, res.early_max):
                fh.write(f"{res.tau:.17g},{label},{mx:.17g},{early:.17g},{res.all_finite}\n")
    _log(f"wrote {path}")

    ok = True
    for res in results:
        bounded, _ = res.bounded_by(10.0)
        _log(f"  tau={res.tau:g}: finite={res.all_finite} bounded={bounded}")
        ok = ok and bounded
    if args.assert_ and not ok:
        _log("FAIL: energies not finite/bounded across the tau sweep")
        return 1
    return 0


def _cmd_roughness(args):
    base = cfgmod.preset_config("rough-01h")
    if args.convection:
        base.convection = args.convection
    width = base.geometry.width

    def make(height):
        cfg = cfgmod.preset_config("rough-01h")
        cfg.geometry.roughness_height = height
        cfg.convection = base.convection
        return _build_stepper(cfg)

    heights = [f * width for f in ROUGHNESS_FRACTIONS]
    _log(f"roughness: heights={heights} T={ROUGHNESS_HORIZON:g}")
    pairs = verify.run_roughness_study(make, heights, ROUGHNESS_HORIZON, base.tau)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "roughness.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("height,max_u1\n")
        for h, u1 in pairs:
            fh.write(f"{h:.17g},{u1:.17g}\n")
    _log(f"wrote {path}")

    speeds = [u1 for _, u1 in pairs]
    increasing = all(b >= a * (1 + ROUGHNESS_SEPARATION) for a, b in zip(speeds, speeds[1:]))
    for h, u1 in pairs:
        _log(f"  h={h:g}: max|u1|={u1:.6g}")
    if args.assert_ and not increasing:
        _log("FAIL: max|u1| not strictly increasing with roughness height")
        return 1
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="eoflow",
        description="Electro-osmotic micro-channel flow solver and verification harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, preset_default):
        p.add_argument("--preset", default=preset_default, choices=sorted(cfgmod.PRESETS))
        p.add_argument("--config", default=None, help="path to a key=value config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--convection", choices=["skew", "plain"], default=None)
        p.add_argument("--assert", dest="assert_", action="store_true",
                       help="exit nonzero when a verification threshold is missed")

    p_run = sub.add_parser("run", help="march a transient simulation")
    common(p_run, "tjunction-nu1")
    p_run.add_argument("--steps", type=int, default=None, help="override the step count")

    p_conv = sub.add_parser("converge", help="manufactured-solution rate tables")
    common(p_conv, "mms-default")
    p_conv.add_argument("--levels", type=int, default=4)
    p_conv.add_argument("--base-n", type=int, default=8, dest="base_n")
    p_conv.add_argument("--temporal-n", type=int, default=64, dest="temporal_n")
    p_conv.add_argument("--mode", choices=["spatial", "temporal", "both"], default="both")

    p_stab = sub.add_parser("stability", help="time-step sweep on the junction preset")
    common(p_stab, "tjunction-nu1")

    p_rough = sub.add_parser("roughness", help="wall roughness study")
    common(p_rough, "rough-01h")

    return parser


_COMMANDS = {
    "run": _cmd_run,
    "converge": _cmd_converge,
    "stability": _cmd_stability,
    "roughness": _cmd_roughness,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # diagnostics, nonzero exit, no traceback spam
        _log(f"error: {exc}")
        return 1


def console_entry():
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
