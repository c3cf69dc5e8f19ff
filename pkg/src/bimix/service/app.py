"""HTTP service exposing simulation, fitting, selection, and benchmarking.

Validation problems (bad specs, malformed payloads, precondition breaches)
map to 400 with kind "validation"; estimation breakdowns (degenerate
components, non-finite likelihoods, exhausted starts) map to 500 with kind
"numerical".  Request-shape errors raised by the framework stay 422.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..analysis import benchmark_scenario, grid_select
from ..dataio import (
    dataset_from_csv_text,
    dataset_to_csv_text,
    jsonable,
    posteriors_to_csv_text,
    truth_to_csv_text,
)
from ..em import multi_start_fit
from ..model import BimixError, FitResult, InvalidModelError
from ..simulate import get_scenario, simulate_dataset
from .schemas import (
    BenchmarkRequest,
    BenchmarkResponse,
    ClassifyRequest,
    ClassifyResponse,
    FitRequest,
    FitResponse,
    HealthResponse,
    SelectRequest,
    SelectResponse,
    SimulateRequest,
    SimulateResponse,
)


def _selection_table_doc(table) -> dict:
    return {
        "n": table.n,
        "best_aic": list(table.best_aic) if table.best_aic else None,
        "best_bic": list(table.best_bic) if table.best_bic else None,
        "rows": [
            {
                "k1": r.k1,
                "k2": r.k2,
                "loglik": r.loglik,
                "d": r.d,
                "aic": r.aic,
                "bic": r.bic,
                "converged": r.converged,
                "error": r.error,
            }
            for r in table.rows
        ],
    }


def create_app() -> FastAPI:
    app = FastAPI(title="bimix", version=__version__)

    @app.exception_handler(BimixError)
    async def _numerical_handler(request: Request, exc: BimixError):
        return JSONResponse(
            status_code=500, content={"kind": "numerical", "detail": str(exc)}
        )

    @app.exception_handler(InvalidModelError)
    async def _validation_handler(request: Request, exc: InvalidModelError):
        return JSONResponse(
            status_code=400, content={"kind": "validation", "detail": str(exc)}
        )

    @app.exception_handler(ValueError)
    async def _value_handler(request: Request, exc: ValueError):
        return JSONResponse(
            status_code=400, content={"kind": "validation", "detail": str(exc)}
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest) -> SimulateResponse:
        st = get_scenario(req.scenario)
        data, labels = simulate_dataset(st, n=req.n, T=req.T, seed=req.seed)
        return SimulateResponse(
            scenario=st.name,
            n=req.n,
            T=req.T,
            seed=req.seed,
            data_csv=dataset_to_csv_text(data),
            truth_csv=truth_to_csv_text(data.unit_ids, labels),
        )

    @app.post("/fit", response_model=FitResponse)
    def fit(req: FitRequest) -> FitResponse:
        data = dataset_from_csv_text(req.data_csv, source="data_csv")
        spec = req.model.to_core()
        result = multi_start_fit(
            spec, data, req.control.to_control(), compute_se=req.compute_se
        )
        return FitResponse(
            fit=jsonable(result.to_dict()),
            posteriors_csv=posteriors_to_csv_text(result),
        )

    @app.post("/select", response_model=SelectResponse)
    def select(req: SelectRequest) -> SelectResponse:
        data = dataset_from_csv_text(req.data_csv, source="data_csv")
        spec = req.model.to_core()
        table = grid_select(
            spec, data, req.k1, req.k2, req.control.to_control(), jobs=req.jobs
        )
        return SelectResponse(
            table=jsonable(_selection_table_doc(table)),
            csv=table.to_csv_text(),
            text=table.to_text(),
        )

    @app.post("/classify", response_model=ClassifyResponse)
    def classify(req: ClassifyRequest) -> ClassifyResponse:
        try:
            result = FitResult.from_dict(req.fit)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidModelError(f"malformed fit document ({exc})") from None
        return ClassifyResponse(assignments_csv=posteriors_to_csv_text(result))

    @app.post("/benchmark", response_model=BenchmarkResponse)
    def benchmark(req: BenchmarkRequest) -> BenchmarkResponse:
        st = get_scenario(req.scenario)
        report = benchmark_scenario(
            st,
            n=req.n,
            T=req.T,
            R=req.reps,
            control=req.control.to_control(),
            jobs=req.jobs,
        )
        return BenchmarkResponse(
            report=jsonable(report.to_dict()),
            csv=report.to_csv_text(),
            text=report.to_text(),
        )

    return app
