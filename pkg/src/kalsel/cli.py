"""Command-line client for the selection toolkit.

Every computing subcommand talks to the HTTP service: with ``--url`` it
calls a running server, without it the same requests are dispatched to an
in-process application instance, so no server is needed for local work.
File handling stays client-side — system files, sampling-law CSVs, index
lists, and sidecar metadata are read and written here, the service only
ever sees JSON.

Subcommands
-----------
``gen``          draw a random detectable instance and write a system file
``dump``         parse a system file and re-emit it (round-trip/normalize)
``optimize``     accuracy grid search for the sampling law
``bounds``       covariance sandwich for a fixed sample count
``sample``       draw a selection (optionally under repetition caps)
``alpha``        cap-satisfaction bound and its probability floors
``greedy``       greedy baseline selection
``compare``      policy-comparison study
``hetero``       partitioned-pool study
``constrained``  repetition-cap study
``serve``        run the HTTP service

Outputs are CSV files with a header row plus a per-command sidecar
metadata file (config hash, seed, library versions).  Selections are
exported as one-line 1-based space-separated index lists.
"""

from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path

import httpx
import numpy as np

from kalsel import fileio
from kalsel.errors import KalselError
from kalsel.system import LtiSystem, SensorPool

DEFAULT_TIMEOUT = 600.0


class _InProcessTransport(httpx.BaseTransport):
    """Sync transport driving the service application on a private loop."""

    def __init__(self):
        from kalsel.service.app import create_app

        self._asgi = httpx.ASGITransport(app=create_app())
        self._loop = asyncio.new_event_loop()

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        return self._loop.run_until_complete(self._dispatch(request))

    async def _dispatch(self, request: httpx.Request) -> httpx.Response:
        response = await self._asgi.handle_async_request(request)
        content = await response.aread()
        await response.aclose()
        return httpx.Response(response.status_code, headers=response.headers, content=content)

    def close(self) -> None:
        self._loop.run_until_complete(self._asgi.aclose())
        self._loop.close()


def service_client(url: str | None = None) -> httpx.Client:
    """HTTP client against ``url``, or an in-process service when ``url`` is None."""
    if url:
        return httpx.Client(base_url=url.rstrip("/"), timeout=DEFAULT_TIMEOUT)
    return httpx.Client(
        base_url="http://kalsel.internal", transport=_InProcessTransport(), timeout=None
    )


class ServiceError(RuntimeError):
    """Non-2xx service reply, with the structured detail flattened to text."""


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code == 200:
        return response.json()
    try:
        body = response.json()
    except ValueError:
        body = {}
    if "message" in body:
        message = body["message"]
    elif "detail" in body:
        message = str(body["detail"])
    else:
        message = response.text or f"HTTP {response.status_code}"
    raise ServiceError(f"{path}: {message}")


# ---------------------------------------------------------------------------
# client-side payload/file helpers


def _system_payload(system: LtiSystem) -> dict:
    return {"dynamics": system.A.tolist(), "process_noise": system.Q.tolist()}


def _pool_payload(pool: SensorPool) -> dict:
    return {"rows": pool.rows.tolist(), "variances": pool.variances.tolist()}


def _instance_payload(path: str) -> tuple[dict, LtiSystem, SensorPool]:
    system, pool = fileio.read_system(path)
    return {"system": _system_payload(system), "pool": _pool_payload(pool)}, system, pool


def _parse_caps(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise SystemExit(f"error: caps must be a comma-separated integer list, got {text!r}")


def _resolve_distribution(args) -> list[float]:
    if getattr(args, "distribution", None):
        return [float(v) for v in fileio.read_distribution(args.distribution)]
    if getattr(args, "uniform", None):
        n = int(args.uniform)
        return [1.0 / n] * n
    raise SystemExit("error: give --distribution FILE or --uniform N_C")


def _cap_fields(args, payload: dict) -> str:
    """Attach cap flags to a request payload; returns a short description."""
    if args.cap is not None and args.caps is not None:
        raise SystemExit("error: --cap and --caps are mutually exclusive")
    if args.cap is not None:
        payload["uniform_factor"] = int(args.cap)
        return f"uniform cap {args.cap}"
    if args.caps is not None:
        payload["caps"] = _parse_caps(args.caps)
        return "per-candidate caps"
    return ""


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _sidecar(out: Path, command: str, settings: dict, seed: int) -> None:
    config_text = fileio.format_config({k: str(v) for k, v in settings.items()})
    fileio.write_sidecar(
        out / f"{command}_metadata.txt", config_text, seed, extra={"command": command}
    )


def _emit(path: Path) -> None:
    print(f"wrote {path}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args, client: httpx.Client) -> int:
    payload = {
        "m": args.m,
        "n_c": args.candidates,
        "seed": args.seed,
        "stream": args.stream,
        "sigma2": args.sigma2,
        "q_scale": args.q_scale,
        "spectral_radius": args.spectral_radius,
    }
    data = _post(client, "/instances/generate", payload)
    system = LtiSystem(
        A=np.asarray(data["system"]["dynamics"]), Q=np.asarray(data["system"]["process_noise"])
    )
    pool = SensorPool.from_arrays(
        np.asarray(data["pool"]["rows"]), data["pool"]["variances"]
    )
    out = _out_dir(args)
    target = out / args.name
    _write_text(target, fileio.format_system(system, pool))
    _sidecar(out, "gen", payload, args.seed)
    print(f"generated instance: m={args.m}, {args.candidates} candidates")
    _emit(target)
    return 0


def cmd_dump(args, client: httpx.Client) -> int:
    system, pool = fileio.read_system(args.system)
    text = fileio.format_system(system, pool)
    if args.out:
        _write_text(Path(args.out), text)
        _emit(Path(args.out))
    else:
        sys.stdout.write(text)
    return 0


def cmd_optimize(args, client: httpx.Client) -> int:
    payload, _, _ = _instance_payload(args.system)
    payload.update(
        sample_size=args.sample_size,
        delta=args.delta,
        n_p=args.grid_points,
        mode=args.mode,
        warmup=args.warmup,
        workers=args.workers,
    )
    data = _post(client, "/optimize/grid-search", payload)
    out = _out_dir(args)
    _write_text(out / "grid.csv", data["grid_csv"])
    _write_text(out / "distribution.csv", data["distribution_csv"])
    _sidecar(
        out,
        "optimize",
        {
            "system_file": args.system,
            "sample_size": args.sample_size,
            "delta": args.delta,
            "grid_points": args.grid_points,
            "mode": args.mode,
            "warmup": args.warmup,
        },
        seed=0,
    )
    best = data["points"][data["chosen"]]
    lam = best["lambda_bar_upper"]
    lam_text = "inf" if lam is None else f"{lam:.6g}"
    print(
        f"chosen accuracy {best['epsilon']:.6g} (rho {best['rho']:.6g}), "
        f"certified worst-case {lam_text} [{best['status']}]"
    )
    _emit(out / "grid.csv")
    _emit(out / "distribution.csv")
    return 0


def cmd_bounds(args, client: httpx.Client) -> int:
    payload, _, _ = _instance_payload(args.system)
    dist = None
    if args.distribution:
        dist = [float(v) for v in fileio.read_distribution(args.distribution)]
    params = _post(
        client,
        "/parameters/for-sample-size",
        {
            "pool": payload["pool"],
            "sample_size": args.sample_size,
            "delta": args.delta,
            "distribution": dist,
            "epsilon": args.epsilon,
        },
    )
    if args.scope == "steady-state":
        data = _post(
            client,
            "/bounds/steady-state",
            {"system": payload["system"], "pool": payload["pool"], "parameters": params},
        )
    else:
        data = _post(
            client,
            "/bounds/time",
            {
                "pool": payload["pool"],
                "parameters": params,
                "system": payload["system"],
                "warmup": args.warmup,
            },
        )
    m = len(data["lower"])
    header = ["bound", "row"] + [f"col_{j}" for j in range(1, m + 1)]
    rows = []
    for name in ("lower", "upper"):
        for i, matrix_row in enumerate(data[name], start=1):
            rows.append([name, i] + list(matrix_row))
    out = _out_dir(args)
    fileio.write_csv(out / "bounds.csv", header, rows)
    _sidecar(
        out,
        "bounds",
        {
            "system_file": args.system,
            "sample_size": args.sample_size,
            "delta": args.delta,
            "scope": args.scope,
            "epsilon": params["epsilon"],
        },
        seed=0,
    )
    print(
        f"accuracy {params['epsilon']:.6g}, floor {data['probability_floor']:.6g}, "
        f"worst-case {data['worst_case']:.6g} ({data['scope']})"
    )
    _emit(out / "bounds.csv")
    return 0


def cmd_sample(args, client: httpx.Client) -> int:
    payload = {
        "distribution": _resolve_distribution(args),
        "sample_size": args.sample_size,
        "seed": args.seed,
        "stream": args.stream,
    }
    cap_note = _cap_fields(args, payload)
    if cap_note:
        if args.max_attempts is not None:
            payload["max_attempts"] = args.max_attempts
        data = _post(client, "/sample/constrained", payload)
    else:
        data = _post(client, "/sample/homogeneous", payload)
    out = _out_dir(args)
    line = " ".join(str(i) for i in data["indices"]) + "\n"
    _write_text(out / "selection.txt", line)
    _sidecar(
        out,
        "sample",
        {
            "sample_size": args.sample_size,
            "seed": args.seed,
            "stream": args.stream,
            "kind": data["kind"],
        },
        seed=args.seed,
    )
    note = f", attempts {data['attempts']}" if data.get("attempts") else ""
    print(f"drew {len(data['indices'])} indices ({data['kind']}{note})")
    _emit(out / "selection.txt")
    return 0


def cmd_alpha(args, client: httpx.Client) -> int:
    payload = {
        "sample_size": args.sample_size,
        "distribution": _resolve_distribution(args),
        "delta": args.delta,
    }
    if not _cap_fields(args, payload):
        raise SystemExit("error: give --cap K or --caps LIST")
    data = _post(client, "/alpha", payload)
    bound = data["expected_draws_bound"]
    out = _out_dir(args)
    fileio.write_csv(
        out / "alpha.csv",
        ["alpha", "intersection_floor", "conditional_floor", "expected_draws_bound"],
        [[
            data["alpha"],
            data["intersection_floor"],
            data["conditional_floor"],
            float("inf") if bound is None else bound,
        ]],
    )
    _sidecar(
        out,
        "alpha",
        {"sample_size": args.sample_size, "delta": args.delta},
        seed=0,
    )
    bound_text = "inf" if bound is None else f"{bound:.6g}"
    print(
        f"acceptance bound {data['alpha']:.6g}; floors: joint {data['intersection_floor']:.6g}, "
        f"conditional {data['conditional_floor']:.6g}; expected draws <= {bound_text}"
    )
    _emit(out / "alpha.csv")
    return 0


def cmd_greedy(args, client: httpx.Client) -> int:
    payload, _, _ = _instance_payload(args.system)
    payload.update(
        sample_size=args.sample_size,
        gamma=args.gamma,
        seed=args.seed,
        stream=args.stream,
        workers=args.workers,
    )
    data = _post(client, "/greedy", payload)
    out = _out_dir(args)
    _write_text(out / "greedy_rounds.csv", data["rounds_csv"])
    line = " ".join(str(i) for i in data["selection"]["indices"]) + "\n"
    _write_text(out / "greedy_selection.txt", line)
    _sidecar(
        out,
        "greedy",
        {
            "system_file": args.system,
            "sample_size": args.sample_size,
            "gamma": args.gamma,
            "seed": "" if args.seed is None else args.seed,
        },
        seed=args.seed or 0,
    )
    print(f"greedy selection scored {data['lambda_bar']:.6g}")
    _emit(out / "greedy_rounds.csv")
    _emit(out / "greedy_selection.txt")
    return 0


def _cmd_study(args, client: httpx.Client, name: str, endpoint: str) -> int:
    mapping = fileio.read_config(args.config) if args.config else {}
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    if args.workers is not None:
        mapping["workers"] = str(args.workers)
    data = _post(client, endpoint, {"config": mapping})
    out = _out_dir(args)
    _write_text(out / f"{name}_trials.csv", data["trial_csv"])
    _write_text(out / f"{name}_summary.csv", data["summary_csv"])
    _write_text(out / f"{name}_config.txt", data["config_text"])
    resolved = fileio.parse_config(data["config_text"])
    fileio.write_sidecar(
        out / f"{name}_metadata.txt",
        data["config_text"],
        int(resolved["seed"]),
        extra={"command": name, "kind": data["kind"]},
    )
    n_trials = max(0, len(data["trial_csv"].strip().split("\n")) - 1)
    n_cells = max(0, len(data["summary_csv"].strip().split("\n")) - 1)
    print(f"{data['kind']}: {n_cells} cells, {n_trials} trial rows")
    for stem in ("trials", "summary", "config"):
        suffix = "csv" if stem != "config" else "txt"
        _emit(out / f"{name}_{stem}.{suffix}")
    return 0


def cmd_compare(args, client: httpx.Client) -> int:
    return _cmd_study(args, client, "compare", "/studies/compare")


def cmd_hetero(args, client: httpx.Client) -> int:
    return _cmd_study(args, client, "hetero", "/studies/hetero")


def cmd_constrained(args, client: httpx.Client) -> int:
    return _cmd_study(args, client, "constrained", "/studies/constrained")


def cmd_serve(args, client: httpx.Client) -> int:  # pragma: no cover - blocking server
    import uvicorn

    from kalsel.service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_out_dir(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out-dir", default=".", help="directory for output files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kalsel",
        description="Randomized sensor selection: design, certify, sample, and study.",
    )
    parser.add_argument(
        "--url",
        default=None,
        help="service base URL; omitted = run the service in-process",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random detectable instance")
    p.add_argument("--m", type=int, required=True, help="state dimension")
    p.add_argument("--candidates", type=int, required=True, help="pool size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--sigma2", type=float, default=0.5, help="sensor noise variance")
    p.add_argument("--q-scale", type=float, default=0.5, help="process-noise scale")
    p.add_argument("--spectral-radius", type=float, default=None)
    p.add_argument("--name", default="system.txt", help="output file name")
    _add_out_dir(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("dump", help="parse a system file and re-emit it")
    p.add_argument("system", help="system file to read")
    p.add_argument("--out", default=None, help="write here instead of stdout")
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("optimize", help="accuracy grid search for the sampling law")
    p.add_argument("--system", required=True)
    p.add_argument("--sample-size", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.05, help="failure budget")
    p.add_argument("--grid-points", type=int, default=5)
    p.add_argument("--mode", choices=["steady-state", "time-dependent"], default="steady-state")
    p.add_argument("--warmup", type=int, default=0, help="open-loop steps for the prior (time mode)")
    p.add_argument("--workers", type=int, default=1)
    _add_out_dir(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("bounds", help="covariance sandwich at a fixed sample count")
    p.add_argument("--system", required=True)
    p.add_argument("--sample-size", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--epsilon", type=float, default=None, help="override the accuracy choice")
    p.add_argument("--distribution", default=None, help="sampling-law CSV (index,probability)")
    p.add_argument("--scope", choices=["steady-state", "time"], default="steady-state")
    p.add_argument("--warmup", type=int, default=0)
    _add_out_dir(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sample", help="draw a selection from a sampling law")
    p.add_argument("--distribution", default=None, help="sampling-law CSV (index,probability)")
    p.add_argument("--uniform", type=int, default=None, help="uniform law over N_C candidates")
    p.add_argument("--sample-size", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--cap", type=int, default=None, help="uniform repetition cap per candidate")
    p.add_argument("--caps", default=None, help="comma-separated per-candidate caps")
    p.add_argument("--max-attempts", type=int, default=None)
    _add_out_dir(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("alpha", help="cap-satisfaction bound and probability floors")
    p.add_argument("--sample-size", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--distribution", default=None)
    p.add_argument("--uniform", type=int, default=None)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--caps", default=None)
    _add_out_dir(p)
    p.set_defaults(func=cmd_alpha)

    p = sub.add_parser("greedy", help="greedy baseline selection")
    p.add_argument("--system", required=True)
    p.add_argument("--sample-size", type=int, required=True)
    p.add_argument("--gamma", type=float, default=1.0, help="fraction of the pool scored per round")
    p.add_argument("--seed", type=int, default=None, help="required when gamma < 1")
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    _add_out_dir(p)
    p.set_defaults(func=cmd_greedy)

    for name, func, blurb in (
        ("compare", cmd_compare, "policy-comparison study"),
        ("hetero", cmd_hetero, "partitioned-pool study"),
        ("constrained", cmd_constrained, "repetition-cap study"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", default=None, help="key=value study config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=None, help="override config workers")
        _add_out_dir(p)
        p.set_defaults(func=func)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return args.func(args, None)
    client = service_client(args.url)
    try:
        return args.func(args, client)
    except ServiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KalselError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    finally:
        client.close()


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
