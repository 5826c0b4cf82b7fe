"""Command-line front end.

Batch commands (run, calibrate, metrics) go through the HTTP service
in-process, so the CLI exercises exactly the interface a remote client
sees. serve and replay start the real server.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


def _client(app):
    from fastapi.testclient import TestClient
    return TestClient(app, raise_server_exceptions=True)


def _api_app():
    from .service import create_app
    return create_app()


def _fail_on_error(resp) -> dict:
    body = resp.json()
    if resp.status_code != 200:
        detail = body.get("detail", body) if isinstance(body, dict) else body
        sys.exit(f"error: {detail}")
    return body


def cmd_run(args) -> None:
    from .scenario import load_scenario

    scenario = load_scenario(args.scenario)
    payload = {
        "scenario": scenario.to_dict(),
        "base_dir": str(Path(args.scenario).resolve().parent),
        "include_cloud": args.cloud_out is not None,
    }
    with _client(_api_app()) as client:
        body = _fail_on_error(client.post("/run", json=payload))
    with open(args.out, "w", newline="") as f:
        f.write(body["csv"])
    print(f"wrote {body['records']} records to {args.out} "
          f"(final stage {body['final_stage']}, "
          f"force {body['final_force_n']:.3f} N)")
    if args.cloud_out is not None:
        if body["cloud_ply"] is None:
            print("no fused cloud was available; skipped cloud export")
        else:
            with open(args.cloud_out, "w") as f:
                f.write(body["cloud_ply"])
            print(f"wrote fused cloud to {args.cloud_out}")


def cmd_serve(args) -> None:
    import uvicorn

    from .scenario import load_scenario
    from .service import create_app

    scenario = load_scenario(args.scenario)
    app = create_app(scenario=scenario, frontend_dir=args.frontend)
    print(f"serving scenario {scenario.name!r} on port {args.port} "
          f"(teleop at ws://{args.host}:{args.port}/ws/teleop)")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def cmd_calibrate(args) -> None:
    pairs_text = Path(args.pairs).read_text()
    with _client(_api_app()) as client:
        body = _fail_on_error(client.post("/calibrate",
                                          json={"pairs_text": pairs_text}))
    t = body["translation_m"]
    q = body["quaternion_wxyz"]
    print(f"pairs: {body['pairs']}")
    print(f"translation [m]:  {t[0]: .9f} {t[1]: .9f} {t[2]: .9f}")
    print(f"quaternion wxyz:  {q[0]: .9f} {q[1]: .9f} {q[2]: .9f} {q[3]: .9f}")
    print(f"rotation residual [rad]: {body['rotation_residual_rad']:.3e}")
    print(f"translation residual [m]: {body['translation_residual_m']:.3e}")


def cmd_metrics(args) -> None:
    log_csv = Path(args.log).read_text()
    payload = {"log_csv": log_csv,
               "response_threshold_deg": args.response_threshold}
    with _client(_api_app()) as client:
        body = _fail_on_error(client.post("/metrics", json=payload))
    print(f"records: {body['records']}")
    if body["mean_err_deg"] is None:
        print("normal error: no estimates in log")
    else:
        print(f"mean normal error [deg]: {body['mean_err_deg']:.4f}")
        print(f"max normal error [deg]:  {body['max_err_deg']:.4f}")
    times = body["response_times_s"]
    if times:
        joined = ", ".join(f"{v:.3f}" for v in times)
        print(f"response times [s] (threshold {args.response_threshold} deg): "
              f"{joined}")
    else:
        print("response times: no above-threshold excursions")
    if body["force_mean_abs_err_n"] is None:
        print("force tracking: no scanning-stage samples")
    else:
        print(f"force mean error [N]: {body['force_mean_err_n']: .4f}")
        print(f"force mean |error| [N]: {body['force_mean_abs_err_n']:.4f}")
        print(f"force within 0.5 N: {body['force_within_half_n_fraction']:.1%}")


def cmd_replay(args) -> None:
    import uvicorn

    from .runtime import load_logs
    from .service import create_app

    records = load_logs(args.log)
    if not records:
        sys.exit("error: log holds no records")
    app = create_app(replay=records, frontend_dir=args.frontend)
    print(f"replaying {len(records)} records on port {args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asee-sim",
        description="Closed-loop ultrasound end-effector simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario to completion and log it")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--cloud-out", help="optional PLY path for the last fused cloud")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="run a scenario live with teleop over WebSocket")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--frontend", help="directory of static UI files to serve at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("calibrate", help="solve hand-eye AX=XB from motion pairs")
    p.add_argument("--pairs", required=True, help="pose-pair text file")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("metrics", help="summarize a run log CSV")
    p.add_argument("--log", required=True, help="log CSV from `run`")
    p.add_argument("--response-threshold", type=float, default=5.0,
                   help="error threshold in degrees for response timing")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("replay", help="stream a recorded log over the live protocol")
    p.add_argument("--log", required=True, help="log CSV from `run`")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--frontend", help="directory of static UI files to serve at /")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> None:
    logging.basicConfig(level=logging.WARNING)
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
