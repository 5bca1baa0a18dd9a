"""Schemas for the CLI configuration documents (unknown keys are rejected)."""

from __future__ import annotations

from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PerturbCfg(_Strict):
    center: Optional[List[float]] = None
    center_ref: Optional[int] = Field(None, ge=0)
    radius: float = Field(gt=0)
    norm: Literal["linf", "l2"] = "linf"
    distribution: Literal["uniform", "trunc_gaussian"] = "uniform"
    sigma: Optional[float] = Field(None, gt=0)
    domain_box: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.center is not None and self.center_ref is not None:
            raise ValueError("give either center or center_ref, not both")
        if self.distribution == "trunc_gaussian" and self.sigma is None:
            raise ValueError("trunc_gaussian needs sigma")
        return self


class PerturbTemplate(_Strict):
    radius: float = Field(gt=0)
    norm: Literal["linf", "l2"] = "linf"
    distribution: Literal["uniform", "trunc_gaussian"] = "uniform"
    sigma: Optional[float] = Field(None, gt=0)


class McCfg(_Strict):
    kind: Literal["mc"] = "mc"
    n: int = Field(10_000, ge=1)
    bound: Literal["hoeffding", "clopper_pearson", "chernoff_rel"] = "clopper_pearson"


class SeqCfg(_Strict):
    kind: Literal["seq"]
    threshold: float = Field(gt=0, lt=1)
    max_samples: int = Field(100_000, ge=1)
    batch: int = Field(100, ge=1)


class AmlsCfg(_Strict):
    kind: Literal["amls"]
    n_particles: int = Field(1000, ge=10)
    level_fraction: float = Field(0.1, gt=0, lt=1)
    mh_steps: int = Field(20, ge=1)
    proposal_scale: float = Field(0.2, gt=0)
    max_levels: int = Field(50, ge=1)


class LastParticleCfg(_Strict):
    kind: Literal["last_particle"]
    n_particles: int = Field(100, ge=2)
    mh_steps: int = Field(20, ge=1)
    max_iters: int = Field(100_000, ge=1)
    proposal_scale: float = Field(0.2, gt=0)


EstimatorCfg = Union[McCfg, SeqCfg, AmlsCfg, LastParticleCfg]


class EvalPrConfig(_Strict):
    model: str
    data: Optional[str] = None
    perturb: PerturbCfg
    estimator: EstimatorCfg = Field(default_factory=McCfg, discriminator="kind")
    confidence: float = Field(0.95, gt=0, lt=1)
    seed: int = 0
    out: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.perturb.center is None and self.data is None:
            raise ValueError("need perturb.center or a data file")
        if self.perturb.center_ref is not None and self.data is None:
            raise ValueError("center_ref needs a data file")
        return self


class RiskItem(_Strict):
    measure: Literal["var", "cvar", "evar", "ess_sup"]
    level: float = Field(gt=0, le=1)


class EvalRiskConfig(_Strict):
    model: str
    data: Optional[str] = None
    perturb: PerturbCfg
    n: int = Field(10_000, ge=1)
    measures: List[RiskItem] = Field(default_factory=lambda: [
        RiskItem(measure="var", level=0.05), RiskItem(measure="cvar", level=0.05),
        RiskItem(measure="evar", level=0.05), RiskItem(measure="ess_sup", level=0.05)])
    seed: int = 0
    out: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.perturb.center is None and self.perturb.center_ref is None:
            raise ValueError("eval-risk needs perturb.center or perturb.center_ref")
        if self.perturb.center_ref is not None and self.data is None:
            raise ValueError("center_ref needs a data file")
        return self


class TsrConfig(_Strict):
    model: str
    partition: str
    perturb: PerturbTemplate
    n: int = Field(10_000, ge=1)
    confidence: float = Field(0.95, gt=0, lt=1)
    bound: Literal["hoeffding", "clopper_pearson", "chernoff_rel"] = "clopper_pearson"
    seed: int = 0
    out: Optional[str] = None


class LipschitzCfg(_Strict):
    model: str
    partition: str
    gamma: float = Field(gt=0)
    k: float = Field(gt=0)
    eps_target: float = Field(0.05, gt=0, lt=1)
    pair_budget: int = Field(10_000, ge=1)
    input_norm: Literal["l2", "linf"] = "l2"
    confidence: float = Field(0.95, gt=0, lt=1)
    seed: int = 0
    out: Optional[str] = None


class OracleCfg(_Strict):
    model: str
    perturb: PerturbCfg
    method: Literal["grid", "linear_analytic"] = "grid"
    points_per_dim: int = Field(201, ge=11)
    grid_size: int = Field(2 ** 15, ge=16)
    out: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.perturb.center is None:
            raise ValueError("oracle needs perturb.center")
        if self.points_per_dim % 2 == 0:
            raise ValueError("points_per_dim must be odd")
        return self


class TrainSection(_Strict):
    mode: Literal["standard", "rand_aug", "at_ar", "at_pr"] = "standard"
    gamma: float = Field(0.1, gt=0)
    epochs: int = Field(50, ge=1)
    lr: float = Field(0.1, ge=0)
    batch_size: int = Field(32, ge=1)
    lambda_mix: float = Field(0.5, ge=0, le=1)
    pgd_steps: int = Field(10, ge=1)
    pgd_step_size: Optional[float] = Field(None, gt=0)
    restarts: int = Field(5, ge=1)
    bisect_iters: int = Field(8, ge=1)
    check_n: int = Field(100, ge=1)
    refine_iters: int = Field(6, ge=0)
    check_confidence: float = Field(0.95, gt=0, lt=1)
    norm: Literal["linf", "l2"] = "linf"
    seed: int = 0


class TrainRunConfig(_Strict):
    data: str
    model: Optional[str] = None
    hidden: List[int] = Field(default_factory=lambda: [32, 32])
    init_seed: int = 0
    train: TrainSection = Field(default_factory=TrainSection)
    probe: Optional[str] = None
    probe_points: int = Field(200, ge=1)
    probe_n: int = Field(1000, ge=1)
    model_out: str = "model.json"
    log_out: Optional[str] = None
    out: Optional[str] = None


class BenchConfig(_Strict):
    decades: List[float] = Field(default_factory=lambda: [0.25, 1e-2, 1e-3, 1e-4])
    mc_budgets: List[int] = Field(default_factory=lambda: [1_000, 10_000, 100_000])
    reps: int = Field(30, ge=2)
    amls_particles: int = Field(1000, ge=10)
    amls_level_fraction: float = Field(0.1, gt=0, lt=1)
    lp_particles: int = Field(100, ge=2)
    mh_steps: int = Field(20, ge=1)
    lp_reps: int = Field(10, ge=1)
    seed: int = 0
    out: Optional[str] = None
