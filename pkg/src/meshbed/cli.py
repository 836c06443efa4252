"""Command-line entry point.

Subcommands:
  run              simulate a scenario, writing the CSV and event logs
  reproduce-table  regenerate the measured-delay table for a scenario
  calibrate        print the fitted delay model parameters
  serve            run with the gateway HTTP service attached
"""

import argparse
import sys

from .scenario import (
    ScenarioError,
    Testbed,
    parse_scenario,
    render_delay_table,
    reproduce_table,
)


def _add_common(parser):
    parser.add_argument("--scenario", default="reference",
                        help="scenario file path or bundled name (reference, failover)")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshbed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario to completion")
    _add_common(run_p)
    run_p.add_argument("--duration", type=float, default=None, help="seconds of simulated time")
    run_p.add_argument("--speed", choices=("fast", "realtime"), default=None)
    run_p.add_argument("--jitter", choices=("on", "off"), default=None)
    run_p.add_argument("--log-path", default="meshbed_log.csv", help="CSV output path")
    run_p.add_argument("--events-path", default=None,
                       help="event log path (default: <log-path>.events)")

    table_p = sub.add_parser("reproduce-table", help="measured vs paper delay table")
    _add_common(table_p)
    table_p.add_argument("--trials", type=int, default=1)
    table_p.add_argument("--jitter", choices=("on", "off"), default=None)

    cal_p = sub.add_parser("calibrate", help="print fitted delay parameters")
    _add_common(cal_p)

    serve_p = sub.add_parser("serve", help="run with the operator HTTP service")
    _add_common(serve_p)
    serve_p.add_argument("--bind", default="127.0.0.1:8760")
    serve_p.add_argument("--duration", type=float, default=None)
    serve_p.add_argument("--speed", choices=("fast", "realtime"), default="realtime")
    serve_p.add_argument("--jitter", choices=("on", "off"), default=None)
    serve_p.add_argument("--log-path", default="meshbed_log.csv")
    return parser


def _load(args):
    config = parse_scenario(args.scenario)
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "jitter", None) is not None:
        config.jitter = args.jitter == "on"
    if getattr(args, "duration", None) is not None:
        if args.duration <= 0:
            raise ScenarioError([f"duration must be > 0, got {args.duration}"])
        config.duration_s = args.duration
    if getattr(args, "speed", None) is not None:
        config.speed = args.speed
    return config


def cmd_run(args) -> int:
    config = _load(args)
    bed = Testbed(config, log_path=args.log_path)
    bed.run(realtime=config.speed == "realtime")
    events_path = args.events_path or f"{args.log_path}.events"
    with open(events_path, "w", encoding="ascii") as handle:
        handle.write(bed.event_log_text())
    bed.close()
    counters = bed.network.counters
    print(f"simulated {config.duration_s:g} s of scenario {config.name!r} (seed {config.seed})")
    print(f"frames: sent={counters.sent} delivered={counters.delivered} "
          f"failed={counters.failed} dropped={counters.dropped}")
    print(f"csv rows: {len(bed.gateway.csv.lines) - 1} -> {args.log_path}")
    print(f"event log: {len(bed.network.log)} lines -> {events_path}")
    if counters.delivered == 0:
        print("error: no frames were delivered; the scenario looks misconfigured", file=sys.stderr)
        return 1
    return 0


def cmd_reproduce_table(args) -> int:
    config = _load(args)
    jitter = None if args.jitter is None else args.jitter == "on"
    rows = reproduce_table(config, trials=args.trials, jitter=jitter)
    print(render_delay_table(rows))
    return 0


def cmd_calibrate(args) -> int:
    config = _load(args)
    params = config.delay_params
    print(f"t_base = {params.t_base_ms:.6f} ms")
    print(f"t_hop  = {params.t_hop_ms:.6f} ms per hop")
    print(f"k      = {params.k_ms_per_m:.6f} ms per meter")
    if config.calibration_rows:
        for hops, meters, delay in config.calibration_rows:
            model = params.t_base_ms + hops * params.t_hop_ms + meters * params.k_ms_per_m
            print(f"  row ({hops} hops, {meters:g} m): measured {delay:g} ms, model {model:.3f} ms")
    return 0


def cmd_serve(args) -> int:
    from .http_service import GatewayService

    config = _load(args)
    bed = Testbed(config, log_path=args.log_path)
    service = GatewayService(bed.gateway, args.bind)
    service.start()
    print(f"gateway serving on http://{service.address}  (Ctrl+C to stop)")
    try:
        bed.run(realtime=config.speed == "realtime", service=service)
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
        bed.close()
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        handler = {
            "run": cmd_run,
            "reproduce-table": cmd_reproduce_table,
            "calibrate": cmd_calibrate,
            "serve": cmd_serve,
        }[args.command]
        return handler(args)
    except ScenarioError as exc:
        for error in exc.errors:
            print(f"scenario error: {error}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
