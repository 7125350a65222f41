"""Command-line entry point.

Subcommands: simulate (open-loop rollout to CSV), trim (print the hover
trim command), hover (closed-loop flight + RMS report), maneuver-env (run a
scripted maneuver episode), sysid (GA fit of a force map), forcemap
(synthetic map generation), serve (wire-protocol environment server) and
plot (static figures from CSVs). Exit codes: 0 success, 1 runtime failure,
2 usage error. FWMAV_LOG sets the log level (debug/info/warning).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

log = logging.getLogger("fwmav")

RMS_SETTLE_TIME = 5.0  # s excluded from RMS reports (takeoff transient)


def _parse_triple(text):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated "
                                         "numbers, e.g. 0,0,0.4")
    return tuple(parts)


def _parse_input(text):
    """Open-loop input spec: 'sin:AMP[V]' or 'cmd:Vamp,Vd,V0,dsig'."""
    from .params import ControlInput
    kind, _, rest = text.partition(":")
    if kind == "sin":
        amp = float(rest.rstrip("Vv"))
        return ControlInput(V_amp=amp)
    if kind == "cmd":
        vals = [float(v) for v in rest.split(",")]
        if len(vals) != 4:
            raise argparse.ArgumentTypeError(
                "cmd input needs Vamp,Vd,V0,dsig")
        return ControlInput(*vals)
    raise argparse.ArgumentTypeError(
        f"unknown input spec {text!r}; use sin:AMP or cmd:Vamp,Vd,V0,dsig")


def _load_params(args):
    from .config import load_config, reference_vehicle
    if getattr(args, "config", None):
        return load_config(args.config)
    return reference_vehicle()


def build_parser():
    ap = argparse.ArgumentParser(
        prog="fwmav",
        description="Flapping-wing micro air vehicle simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required,
                       help="vehicle TOML config (default: reference vehicle)"
                       if not config_required else "vehicle TOML config")
        p.add_argument("--backend", choices=("python", "cython"),
                       default=None)

    p = sub.add_parser("simulate", help="open-loop rollout to CSV")
    common(p, config_required=True)
    p.add_argument("--input", required=True, type=_parse_input,
                   help="sin:AMP (V_amp sinusoid) or cmd:Vamp,Vd,V0,dsig")
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--clamped", action="store_true",
                   help="hold the body fixed (force-stand mode)")
    p.add_argument("--output", default="trajectory.csv")

    p = sub.add_parser("trim", help="find and print the hover trim command")
    common(p)

    p = sub.add_parser("hover", help="closed-loop flight + RMS report")
    common(p)
    p.add_argument("--setpoint", type=_parse_triple, default=(0.0, 0.0, 0.4))
    p.add_argument("--yaw", type=float, default=0.0, help="deg")
    p.add_argument("--duration", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trim-vamp", type=float, default=None,
                   help="hover trim V_amp (skips the trim search)")
    p.add_argument("--output", default="hover.csv")

    p = sub.add_parser("maneuver-env",
                       help="run one maneuver episode (zero residuals)")
    common(p)
    p.add_argument("--goal", type=_parse_triple, default=(0.0, 0.0, 0.4))
    p.add_argument("--goal-yaw", type=float, default=0.0, help="deg")
    p.add_argument("--horizon", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--randomize", action="store_true")
    p.add_argument("--trim-vamp", type=float, default=None)

    p = sub.add_parser("sysid", help="GA fit of a measured force map")
    common(p)
    p.add_argument("--target", required=True, help="force-map CSV")
    p.add_argument("--pop", type=int, default=200)
    p.add_argument("--gens", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--output", default="fitted.toml")
    p.add_argument("--trace", default=None, help="cost-trace CSV")

    p = sub.add_parser("forcemap", help="generate a synthetic force map")
    common(p)
    p.add_argument("--trim-vamp", type=float, default=8.0)
    p.add_argument("--output", default="forcemap.csv")

    p = sub.add_parser("serve", help="run the environment server")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7440)

    p = sub.add_parser("plot", help="plot a trajectory or force-map CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=("trajectory", "forcemap"),
                   default="trajectory")
    p.add_argument("--output", default=None, help="image path (default: "
                   "input name with .png)")
    return ap


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    from .dynamics import DEFAULT_DT, hover_state, simulate
    params = _load_params(args)
    dt = args.dt if args.dt is not None else DEFAULT_DT
    log_ = simulate(hover_state(params), args.input, args.duration, params,
                    dt=dt, backend=args.backend, clamped=args.clamped)
    log_.save(args.output)
    print(f"wrote {len(log_)} rows to {args.output}")
    return 0


def cmd_trim(args):
    from .control import find_trim
    params = _load_params(args)
    cmd = find_trim(params, backend=args.backend)
    print(f"V_amp={cmd.V_amp:.6f} V_d={cmd.V_d:.6f} V_0={cmd.V_0:.6f} "
          f"delta_sigma={cmd.delta_sigma:.6f}")
    return 0


def _trim_input(args, params):
    from .control import find_trim
    from .params import ControlInput
    if getattr(args, "trim_vamp", None) is not None:
        return ControlInput(V_amp=args.trim_vamp)
    log.info("searching hover trim (pass --trim-vamp to skip)")
    return find_trim(params, backend=args.backend)


def cmd_hover(args):
    from .control import Setpoint, fly_closed_loop, rms_report
    params = _load_params(args)
    trim = _trim_input(args, params)
    sp = Setpoint(position=args.setpoint, yaw=math.radians(args.yaw))
    log_ = fly_closed_loop(params, sp, args.duration, trim=trim,
                           backend=args.backend, seed=args.seed)
    log_.save(args.output)
    rms = rms_report(log_, sp, settle_time=RMS_SETTLE_TIME)
    print(f"wrote {len(log_)} rows to {args.output}")
    print(f"RMS over t >= {RMS_SETTLE_TIME:g} s:")
    for k in ("x", "y", "z"):
        print(f"  {k:5s} {rms[k] * 1e3:8.1f} mm")
    for k in ("roll", "pitch", "yaw"):
        print(f"  {k:5s} {math.degrees(rms[k]):8.2f} deg")
    return 0


def cmd_maneuver_env(args):
    from .env import EpisodeSpec, FwmavEnv
    params = _load_params(args)
    trim = _trim_input(args, params)
    spec = EpisodeSpec(task="maneuver", p_f=args.goal,
                       psi_f=math.radians(args.goal_yaw),
                       horizon=args.horizon, seed=args.seed,
                       randomize=args.randomize)
    env = FwmavEnv(spec, params=params, trim=trim, backend=args.backend)
    env.reset()
    total, steps = 0.0, 0
    action = np.zeros(spec.action_dim)
    done, info = False, {}
    while not done:
        _, r, done, info = env.step(action)
        total += r
        steps += 1
    outcome = ("success" if info.get("success")
               else "failure" if info.get("failure") else "timeout")
    print(f"{outcome} after {steps} steps ({info['t']:.3f} s), "
          f"return {total:.3f}")
    return 0


def cmd_sysid(args):
    from .config import save_config
    from .sysid import (ForceMap, SysIdSpec, apply_candidate, ga_fit,
                        map_relative_error)
    params = _load_params(args)
    target = ForceMap.load(args.target)
    spec = SysIdSpec.default(params)
    res = ga_fit(spec, target, pop=args.pop, gens=args.gens, seed=args.seed,
                 backend=args.backend, n_jobs=args.jobs,
                 callback=lambda g, x, c: log.info(
                     "gen %d best cost %.6g", g, c))
    err = map_relative_error(res.best, target, spec, backend=args.backend)
    fitted = apply_candidate(params, res.best)
    save_config(fitted, args.output)
    if args.trace:
        with open(args.trace, "w") as f:
            f.write("generation,best_cost\n")
            for i, c in enumerate(res.cost_trace):
                f.write(f"{i},{c!r}\n")
    print(f"final cost {res.best_cost:.6g}, force-map relative error "
          f"{err * 100:.2f}%")
    print(f"wrote fitted config to {args.output}")
    return 0


def cmd_forcemap(args):
    from .params import ControlInput
    from .sysid import generate_force_map, reference_input_grid
    params = _load_params(args)
    grid = reference_input_grid(trim=ControlInput(V_amp=args.trim_vamp))
    fmap = generate_force_map(grid, params, backend=args.backend)
    fmap.save(args.output)
    print(f"wrote {len(fmap)} operating points to {args.output}")
    return 0


def cmd_serve(args):
    from .env import serve
    params = _load_params(args)
    server = serve((args.host, args.port), params=params)
    host, port = server.address[:2]
    print(f"serving on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_plot(args):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    out = args.output or os.path.splitext(args.input)[0] + ".png"
    header, data = _read_csv(args.input)
    if args.kind == "trajectory":
        fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
        t = data[:, header.index("t")]
        for name in ("x", "y", "z"):
            axes[0].plot(t, data[:, header.index(name)], label=name)
        axes[0].set_ylabel("position (m)")
        axes[0].legend()
        for name in ("roll", "pitch", "yaw"):
            axes[1].plot(t, np.degrees(data[:, header.index(name)]),
                         label=name)
        axes[1].set_ylabel("attitude (deg)")
        axes[1].set_xlabel("t (s)")
        axes[1].legend()
    else:
        fig, axes = plt.subplots(2, 3, figsize=(12, 6))
        v = data[:, header.index("V_amp")]
        for ax, name in zip(axes.flat, ("Fx", "Fy", "Fz", "Mx", "My", "Mz")):
            ax.plot(v, data[:, header.index(name)], ".")
            ax.set_xlabel("V_amp (V)")
            ax.set_ylabel(name)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")
    return 0


def _read_csv(path):
    with open(path) as f:
        header = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


COMMANDS = {
    "simulate": cmd_simulate,
    "trim": cmd_trim,
    "hover": cmd_hover,
    "maneuver-env": cmd_maneuver_env,
    "sysid": cmd_sysid,
    "forcemap": cmd_forcemap,
    "serve": cmd_serve,
    "plot": cmd_plot,
}


def main(argv=None):
    logging.basicConfig(
        level=getattr(logging, os.environ.get("FWMAV_LOG", "warning").upper(),
                      logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        return 1
    except Exception as e:  # diagnostics to stderr, exit 1
        if os.environ.get("FWMAV_LOG", "").lower() == "debug":
            raise
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
