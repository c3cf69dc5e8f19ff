"""Command-line client for simulation, fitting, selection, and benchmarking.

The commands talk to the HTTP service: by default an in-process instance,
or a remote one via --server.  Artifacts land in the chosen output
directory through atomic writes.  Exit codes: 0 success, 1 validation
error (including bad flags), 2 numerical or transport failure.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import httpx

from .dataio import atomic_write_text, read_json

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class CliError(Exception):
    """Command failure carrying the exit code and a one-line reason."""

    def __init__(self, code: int, kind: str, detail: str):
        self.code = code
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind}: {detail}")


def _one_line(text: str) -> str:
    return " ; ".join(part.strip() for part in str(text).splitlines() if part.strip())


class ServiceClient:
    """POSTs to the service, in-process unless a server URL is given."""

    def __init__(self, server: str | None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            import warnings

            with warnings.catch_warnings():
                # The in-process test client may warn about its transport.
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient

                from .service import create_app

                self._client = TestClient(
                    create_app(), raise_server_exceptions=False
                )

    def post(self, path: str, payload: dict) -> dict:
        try:
            response = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise CliError(EXIT_NUMERICAL, "connection", _one_line(str(exc)))
        return self._handle(response)

    @staticmethod
    def _handle(response) -> dict:
        if response.status_code == 200:
            return response.json()
        try:
            body = response.json()
        except json.JSONDecodeError:
            body = {}
        detail = body.get("detail", response.text)
        if isinstance(detail, list):
            parts = []
            for item in detail[:3]:
                loc = ".".join(str(p) for p in item.get("loc", ()))
                parts.append(f"{loc}: {item.get('msg', 'invalid')}")
            detail = "; ".join(parts)
        kind = body.get("kind", "validation")
        if response.status_code in (400, 422):
            raise CliError(EXIT_VALIDATION, kind, _one_line(str(detail)))
        raise CliError(
            EXIT_NUMERICAL,
            kind if kind != "validation" else "numerical",
            _one_line(str(detail)),
        )


@dataclass
class RunConfig:
    """Everything one command invocation needs, flags already parsed."""

    command: str
    server: str | None = None
    data: str | None = None
    model: str | None = None
    fit: str | None = None
    out: str | None = None
    scenario: str | None = None
    n: int | None = None
    t: int | None = None
    reps: int | None = None
    seed: int | None = None
    k1: tuple[int, ...] = ()
    k2: tuple[int, ...] | None = None
    jobs: int = 1
    compute_se: bool = False
    max_iterations: int = 500
    rel_tol: float = 1e-8
    n_starts: int = 20
    burn_in_iterations: int = 10
    written: list[str] = field(default_factory=list)

    def control_payload(self) -> dict:
        return {
            "seed": self.seed,
            "max_iterations": self.max_iterations,
            "rel_tol": self.rel_tol,
            "n_starts": self.n_starts,
            "burn_in_iterations": self.burn_in_iterations,
        }


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_VALIDATION, "validation", f"cannot read {what}: {exc}")


def _read_json_doc(path: str, what: str):
    try:
        return read_json(path)
    except OSError as exc:
        raise CliError(EXIT_VALIDATION, "validation", f"cannot read {what}: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError(
            EXIT_VALIDATION, "validation", f"{what} is not valid JSON: {exc}"
        )


def _write(config: RunConfig, name: str, text: str) -> None:
    path = Path(config.out) / name
    try:
        atomic_write_text(path, text)
    except OSError as exc:
        raise CliError(EXIT_VALIDATION, "validation", f"cannot write {path}: {exc}")
    config.written.append(str(path))


def run(config: RunConfig) -> int:
    """Execute one parsed command, writing its artifacts; returns exit code."""
    client = ServiceClient(config.server)
    if config.command == "simulate":
        body = client.post(
            "/simulate",
            {
                "scenario": config.scenario,
                "n": config.n,
                "T": config.t,
                "seed": config.seed,
            },
        )
        _write(config, "data.csv", body["data_csv"])
        _write(config, "truth.csv", body["truth_csv"])
    elif config.command == "fit":
        body = client.post(
            "/fit",
            {
                "data_csv": _read_text(config.data, "data"),
                "model": _read_json_doc(config.model, "model"),
                "control": config.control_payload(),
                "compute_se": config.compute_se,
            },
        )
        _write(config, "fit.json", json.dumps(body["fit"], indent=2) + "\n")
        _write(config, "posteriors.csv", body["posteriors_csv"])
        fit = body["fit"]
        click.echo(
            f"loglik={fit['loglik']} aic={fit['aic']} bic={fit['bic']} "
            f"converged={fit['converged']}"
        )
    elif config.command == "select":
        body = client.post(
            "/select",
            {
                "data_csv": _read_text(config.data, "data"),
                "model": _read_json_doc(config.model, "model"),
                "k1": list(config.k1),
                "k2": list(config.k2) if config.k2 is not None else None,
                "control": config.control_payload(),
                "jobs": config.jobs,
            },
        )
        _write(config, "selection.json", json.dumps(body["table"], indent=2) + "\n")
        _write(config, "selection.csv", body["csv"])
        _write(config, "selection.txt", body["text"])
        click.echo(body["text"], nl=False)
    elif config.command == "classify":
        body = client.post(
            "/classify", {"fit": _read_json_doc(config.fit, "fit")}
        )
        _write(config, "assignments.csv", body["assignments_csv"])
    elif config.command == "benchmark":
        body = client.post(
            "/benchmark",
            {
                "scenario": config.scenario,
                "n": config.n,
                "T": config.t,
                "reps": config.reps,
                "control": config.control_payload(),
                "jobs": config.jobs,
            },
        )
        _write(config, "benchmark.json", json.dumps(body["report"], indent=2) + "\n")
        _write(config, "benchmark.csv", body["csv"])
        _write(config, "benchmark.txt", body["text"])
        click.echo(body["text"], nl=False)
    else:
        raise CliError(
            EXIT_VALIDATION, "validation", f"unknown command {config.command!r}"
        )
    for path in config.written:
        click.echo(f"wrote {path}")
    return EXIT_OK


def _parse_range(_ctx, _param, value):
    if value is None:
        return None
    try:
        if ".." in value:
            low, high = value.split("..", 1)
            lo, hi = int(low), int(high)
            if hi < lo:
                raise ValueError
            return tuple(range(lo, hi + 1))
        return (int(value),)
    except ValueError:
        raise click.BadParameter(f"expected N or A..B, got {value!r}")


_control_options = [
    click.option("--seed", type=int, required=True, help="RNG seed (mandatory)."),
    click.option(
        "--max-iterations",
        type=int,
        default=500,
        show_default=True,
        help="Iteration cap for the estimator.",
    ),
    click.option(
        "--rel-tol",
        type=float,
        default=1e-8,
        show_default=True,
        help="Relative log-likelihood change declaring convergence.",
    ),
    click.option(
        "--n-starts",
        type=int,
        default=20,
        show_default=True,
        help="Random initializations for multi-start.",
    ),
    click.option(
        "--burn-in",
        "burn_in_iterations",
        type=int,
        default=10,
        show_default=True,
        help="Iterations each start runs before the best is continued.",
    ),
]


def _with(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn

    return wrap


_jobs_option = click.option(
    "--jobs",
    type=int,
    default=1,
    show_default=True,
    envvar="BIMIX_JOBS",
    help="Worker processes (BIMIX_JOBS as fallback).",
)

_out_option = click.option(
    "--out",
    type=click.Path(file_okay=False),
    required=True,
    help="Output directory for artifacts.",
)


@click.group(name="bimix")
@click.version_option()
@click.option(
    "--server",
    default=None,
    help="Base URL of a running service; default runs in-process.",
)
@click.pass_context
def cli(ctx, server):
    """Mixture panel regression: simulate, fit, select, classify, benchmark."""
    ctx.obj = {"server": server}


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True, help="Bind address.")
@click.option("--port", default=8000, show_default=True, type=int, help="Bind port.")
def serve(host, port):
    """Run the HTTP service that backs every other command."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port, log_level="warning")


@cli.command()
@click.option("--scenario", required=True, help="Scenario id: 1, 2, or solow.")
@click.option("--n", type=int, required=True, help="Number of units.")
@click.option("--t", "t_periods", type=int, required=True, help="Periods per unit.")
@click.option("--seed", type=int, required=True, help="RNG seed (mandatory).")
@_out_option
@click.pass_context
def simulate(ctx, scenario, n, t_periods, seed, out):
    """Draw a synthetic panel plus its true labels."""
    return run(
        RunConfig(
            command="simulate",
            server=ctx.obj["server"],
            scenario=scenario,
            n=n,
            t=t_periods,
            seed=seed,
            out=out,
        )
    )


@cli.command()
@click.option(
    "--data",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="Panel CSV (unit,time,y1[,y2],covariates...).",
)
@click.option(
    "--model",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="Model specification JSON.",
)
@_with(_control_options)
@click.option(
    "--se/--no-se",
    "compute_se",
    default=False,
    show_default=True,
    help="Also compute observed-information standard errors.",
)
@_out_option
@click.pass_context
def fit(ctx, data, model, seed, max_iterations, rel_tol, n_starts,
        burn_in_iterations, compute_se, out):
    """Estimate a model on a panel with multi-start."""
    return run(
        RunConfig(
            command="fit",
            server=ctx.obj["server"],
            data=data,
            model=model,
            seed=seed,
            max_iterations=max_iterations,
            rel_tol=rel_tol,
            n_starts=n_starts,
            burn_in_iterations=burn_in_iterations,
            compute_se=compute_se,
            out=out,
        )
    )


@cli.command()
@click.option(
    "--data",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="Panel CSV.",
)
@click.option(
    "--model",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="Model specification JSON (component counts are overridden).",
)
@click.option(
    "--k1", required=True, callback=_parse_range,
    help="First-profile component counts, N or A..B.",
)
@click.option(
    "--k2", default=None, callback=_parse_range,
    help="Second-profile component counts, N or A..B (bivariate only).",
)
@_with(_control_options)
@_jobs_option
@_out_option
@click.pass_context
def select(ctx, data, model, k1, k2, seed, max_iterations, rel_tol, n_starts,
           burn_in_iterations, jobs, out):
    """Fit a grid of component counts and tabulate AIC/BIC."""
    return run(
        RunConfig(
            command="select",
            server=ctx.obj["server"],
            data=data,
            model=model,
            k1=k1,
            k2=k2,
            seed=seed,
            max_iterations=max_iterations,
            rel_tol=rel_tol,
            n_starts=n_starts,
            burn_in_iterations=burn_in_iterations,
            jobs=jobs,
            out=out,
        )
    )


@cli.command()
@click.option(
    "--fit",
    "fit_path",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="FitResult JSON produced by the fit command.",
)
@_out_option
@click.pass_context
def classify(ctx, fit_path, out):
    """Write most-probable components and posteriors from a stored fit."""
    return run(
        RunConfig(
            command="classify", server=ctx.obj["server"], fit=fit_path, out=out
        )
    )


@cli.command()
@click.option("--scenario", required=True, help="Scenario id: 1, 2, or solow.")
@click.option("--n", type=int, required=True, help="Units per replication.")
@click.option("--t", "t_periods", type=int, required=True, help="Periods per unit.")
@click.option("--reps", type=int, required=True, help="Number of replications.")
@_with(_control_options)
@_jobs_option
@_out_option
@click.pass_context
def benchmark(ctx, scenario, n, t_periods, reps, seed, max_iterations, rel_tol,
              n_starts, burn_in_iterations, jobs, out):
    """Simulate-and-refit Monte Carlo: bias, spread, Rand index."""
    return run(
        RunConfig(
            command="benchmark",
            server=ctx.obj["server"],
            scenario=scenario,
            n=n,
            t=t_periods,
            reps=reps,
            seed=seed,
            max_iterations=max_iterations,
            rel_tol=rel_tol,
            n_starts=n_starts,
            burn_in_iterations=burn_in_iterations,
            jobs=jobs,
            out=out,
        )
    )


def main(argv=None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        result = cli.main(args=argv, prog_name="bimix", standalone_mode=False)
        return int(result) if isinstance(result, int) else EXIT_OK
    except CliError as exc:
        click.echo(f"error: {exc.kind}: {exc.detail}", err=True)
        return exc.code
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: validation: {_one_line(exc.format_message())}", err=True)
        return EXIT_VALIDATION
    except click.ClickException as exc:
        click.echo(f"error: validation: {_one_line(exc.format_message())}", err=True)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
