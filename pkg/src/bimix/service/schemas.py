"""Request and response bodies for the HTTP service.

Tabular payloads travel as CSV text in the formats the file tools use, so a
client can write them to disk verbatim; structured results are plain JSON
documents produced by the core serializers.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from ..em import EmControl
from ..model import ModelSpec, ProfileSpec

_STRICT = ConfigDict(extra="forbid", protected_namespaces=())


class ControlOptions(BaseModel):
    """Estimator settings; the seed is mandatory to keep runs reproducible."""

    model_config = _STRICT

    seed: int = Field(ge=0)
    max_iterations: int = Field(default=500, ge=1)
    rel_tol: float = Field(default=1e-8, gt=0)
    n_starts: int = Field(default=20, ge=1)
    burn_in_iterations: int = Field(default=10, ge=1)

    def to_control(self) -> EmControl:
        return EmControl(
            max_iterations=self.max_iterations,
            rel_tol=self.rel_tol,
            n_starts=self.n_starts,
            burn_in_iterations=self.burn_in_iterations,
            seed=self.seed,
        )


class ProfileSpecModel(BaseModel):
    """Mirror of one profile's specification fields."""

    model_config = _STRICT

    family: str
    mean_fixed: list[str] = []
    mean_random: list[str]
    scale_covariates: list[str] = []
    K: int
    mean_link: str = "identity"
    scale_link: str = "log"
    shape_link: str = "log"

    def to_core(self) -> ProfileSpec:
        return ProfileSpec.from_dict(self.model_dump())

    @classmethod
    def from_core(cls, spec: ProfileSpec) -> "ProfileSpecModel":
        return cls(**spec.to_dict())


class ModelSpecModel(BaseModel):
    """Mirror of a full model specification."""

    model_config = _STRICT

    profiles: list[ProfileSpecModel]

    def to_core(self) -> ModelSpec:
        return ModelSpec(tuple(p.to_core() for p in self.profiles))

    @classmethod
    def from_core(cls, spec: ModelSpec) -> "ModelSpecModel":
        return cls(
            profiles=[ProfileSpecModel.from_core(p) for p in spec.profiles]
        )


class SimulateRequest(BaseModel):
    model_config = _STRICT

    scenario: str
    n: int = Field(ge=1)
    T: int = Field(ge=1)
    seed: int = Field(ge=0)


class SimulateResponse(BaseModel):
    scenario: str
    n: int
    T: int
    seed: int
    data_csv: str
    truth_csv: str


class FitRequest(BaseModel):
    model_config = _STRICT

    data_csv: str
    model: ModelSpecModel
    control: ControlOptions
    compute_se: bool = False


class FitResponse(BaseModel):
    fit: dict
    posteriors_csv: str


class SelectRequest(BaseModel):
    model_config = _STRICT

    data_csv: str
    model: ModelSpecModel
    k1: list[int]
    k2: list[int] | None = None
    control: ControlOptions
    jobs: int = Field(default=1, ge=1)


class SelectResponse(BaseModel):
    table: dict
    csv: str
    text: str


class ClassifyRequest(BaseModel):
    model_config = _STRICT

    fit: dict


class ClassifyResponse(BaseModel):
    assignments_csv: str


class BenchmarkRequest(BaseModel):
    model_config = _STRICT

    scenario: str
    n: int = Field(ge=1)
    T: int = Field(ge=1)
    reps: int = Field(ge=2)
    control: ControlOptions
    jobs: int = Field(default=1, ge=1)


class BenchmarkResponse(BaseModel):
    report: dict
    csv: str
    text: str


class HealthResponse(BaseModel):
    status: str
    version: str
