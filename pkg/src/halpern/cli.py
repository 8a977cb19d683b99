"""Command-line front end: experiment runs, rate certificates, reports.

Three subcommands mirror the service endpoints:

* ``iterate`` — run Halpern orbits and resolvent paths for the
  configured instances; write one trace CSV and one path CSV per
  instance into the output directory.
* ``rates``   — print a single rate certificate, ``Exact <n>`` or
  ``BudgetExceeded lower=<n> steps=<n>``.
* ``verify``  — run the verification suite and write the JSON report;
  the exit status says whether every check passed.

By default everything runs in-process (no server, no sockets).  With
``--server URL`` each subcommand becomes a thin HTTP client against a
running ``halpern serve`` instance and produces the same outputs and
exit codes.

Exit codes: 0 success; 2 configuration or flag problem; 3 numerical
failure; 4 sigma requested with an unavailable continuity modulus;
5 verification suite had failing checks.

The environment variable HALPERN_BUDGET (``steps[,bits]``) replaces the
built-in evaluation budget wherever no explicit budget was given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from halpern.config import ConfigError, parse_budget, parse_config
from halpern.service.app import (
    ServiceError,
    handle_iterate,
    handle_rates,
    handle_verify,
)
from halpern.service.schemas import (
    BudgetSpec,
    IterateRequest,
    IterateResponse,
    RateResponse,
    RatesRequest,
    ScheduleSpec,
    VerifyRequest,
    VerifyResponse,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_MODULUS = 4
EXIT_VERIFY = 5

_EXIT_BY_CODE = {
    "config": EXIT_CONFIG,
    "numerical": EXIT_NUMERICAL,
    "modulus-required": EXIT_MODULUS,
}


class _Client:
    """Runs requests in-process, or against a remote server if given."""

    def __init__(self, server: Optional[str]):
        self.server = server.rstrip("/") if server else None

    def rates(self, req: RatesRequest) -> RateResponse:
        if self.server is None:
            return handle_rates(req)
        return RateResponse(**self._post("/rates", req))

    def iterate(self, req: IterateRequest) -> IterateResponse:
        if self.server is None:
            return handle_iterate(req)
        return IterateResponse(**self._post("/iterate", req))

    def verify(self, req: VerifyRequest) -> VerifyResponse:
        if self.server is None:
            return handle_verify(req)
        return VerifyResponse(**self._post("/verify", req))

    def _post(self, route: str, req) -> dict:
        import httpx

        resp = httpx.post(
            self.server + route,
            json=req.model_dump(mode="json"),
            timeout=600.0,
        )
        if resp.status_code >= 400:
            detail = resp.json().get("detail")
            if isinstance(detail, dict) and "code" in detail:
                raise ServiceError(detail["code"], detail["error"])
            # FastAPI request-validation errors carry a list detail.
            raise ServiceError("config", json.dumps(detail))
        return resp.json()


def _read_config(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ServiceError("config", f"cannot read config file {path!r}: {exc}")


def _out_dir(args, config_text: str) -> Path:
    if args.out is not None:
        return Path(args.out)
    return parse_config(config_text).out_dir


def _budget_spec(flag: Optional[str]) -> Optional[BudgetSpec]:
    text = flag if flag is not None else os.environ.get("HALPERN_BUDGET")
    if not text:
        return None
    budget = parse_budget(text)
    return BudgetSpec(max_steps=budget.max_steps, max_bits=budget.max_bits)


def cmd_rates(args, client: _Client) -> int:
    schedule = None
    if args.schedule is not None:
        schedule = ScheduleSpec(kind=args.schedule, a=args.a, gamma=args.gamma)
    elif args.a is not None or args.gamma is not None:
        raise ServiceError("config", "--a/--gamma make sense only with --schedule")
    req = RatesRequest(
        which=args.which,
        eps=args.eps,
        M=args.M,
        schedule=schedule,
        g=args.g,
        budget=_budget_spec(args.budget),
        omega=args.omega,
    )
    print(client.rates(req).text)
    return EXIT_OK


def cmd_iterate(args, client: _Client) -> int:
    text = _read_config(args.config)
    out_dir = _out_dir(args, text)
    resp = client.iterate(IterateRequest(config=text))
    out_dir.mkdir(parents=True, exist_ok=True)
    for artifact in resp.artifacts:
        trace_file = out_dir / f"{artifact.name}-trace.csv"
        trace_file.write_text(artifact.trace_csv)
        print(f"wrote {trace_file}")
        path_file = out_dir / f"{artifact.name}-path.csv"
        path_file.write_text(artifact.path_csv)
        print(f"wrote {path_file}")
    return EXIT_OK


def cmd_verify(args, client: _Client) -> int:
    text = _read_config(args.config)
    out_dir = _out_dir(args, text)
    resp = client.verify(VerifyRequest(config=text))
    out_dir.mkdir(parents=True, exist_ok=True)
    report_file = out_dir / args.report
    payload = [row.model_dump() for row in resp.report]
    report_file.write_text(json.dumps(payload, indent=2) + "\n")
    failed = [row for row in resp.report if row.outcome not in ("pass", "verified")]
    print(f"{len(resp.report)} checks, {len(failed)} failed -> {report_file}")
    for row in failed:
        print(
            f"FAIL {row.check} [{row.instance}] outcome={row.outcome}",
            file=sys.stderr,
        )
    return EXIT_OK if resp.ok else EXIT_VERIFY


def cmd_serve(args, _client: _Client) -> int:
    import uvicorn

    from halpern.service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="halpern",
        description="Halpern iteration experiments and rate certificates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_server_flag(p):
        p.add_argument(
            "--server",
            metavar="URL",
            default=None,
            help="send the request to a running service instead of in-process",
        )

    p = sub.add_parser("iterate", help="run orbits/paths, write CSV traces")
    p.add_argument("config", help="experiment configuration file")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    add_server_flag(p)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("rates", help="print one rate certificate")
    p.add_argument(
        "--which",
        required=True,
        choices=["psi", "psi-closed", "phi", "K", "sigma"],
        help="which certificate to compute",
    )
    p.add_argument("--eps", required=True, help="target accuracy, rational p/q")
    p.add_argument("--M", required=True, help="norm bound, rational p/q")
    p.add_argument(
        "--schedule",
        choices=["natural-shifted", "classic", "power-law"],
        default=None,
        help="schedule for psi/phi/sigma",
    )
    p.add_argument("--a", default=None, help="power-law scale parameter")
    p.add_argument("--gamma", default=None, help="power-law exponent in (0, 1]")
    p.add_argument("--g", default=None, help="counterfunction, e.g. 'affine 1 1'")
    p.add_argument("--budget", default=None, help="evaluation budget steps[,bits]")
    p.add_argument(
        "--omega",
        choices=["identity", "empirical"],
        default="identity",
        help="continuity modulus used by sigma",
    )
    add_server_flag(p)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("verify", help="run the verification suite")
    p.add_argument("config", help="experiment configuration file")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--report", default="report.json", help="report file name")
    add_server_flag(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    client = _Client(getattr(args, "server", None))
    try:
        return args.func(args, client)
    except ServiceError as exc:
        print(f"error ({exc.code}): {exc.message}", file=sys.stderr)
        return _EXIT_BY_CODE[exc.code]
    except ConfigError as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # transport failures, interrupted serve, ...
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
