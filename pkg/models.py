#!/usr/bin/env python3
"""
Configuration and report schemas for condensation-lab.
Everything read from config.json or written to report.json goes through here.
"""

from pydantic import BaseModel, Field, field_validator, model_validator
from typing import List, Optional, Dict, Any, Tuple
import math


# Constants for validation
ALLOWED_LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR']
ALLOWED_METHODS = ['auto', 'exact-bridge', 'rejection', 'approx']
ALLOWED_TABLE_MODES = ['dyadic', 'full']
ALLOWED_COMPARISONS = ['abs', 'rel', 'max', 'min']
EXPERIMENT_IDS = ['E1', 'E2', 'E3', 'E-cor', 'E4', 'E5', 'E-luka', 'E-gh']
# Limit results a check can be filed under
ALLOWED_THEOREMS = [
    'condensation', 'second-degree', 'degree-fluctuations', 'u-location', 'u-generation',
    'local-limit', 'outside-subtree', 'subtree-fluctuations', 'progeny-norming', 'max-subtree',
    'height-growth', 'height-tail', 'profile-marginals', 'path-shape', 'subtree-independence',
    'tall-subtrees',
]


class LoggingConfig(BaseModel):
    """Logging section"""
    level: str = Field(default="INFO", description="Log level")
    file: str = Field(default="logs/condensation_lab.log", description="Rotating log file")
    max_file_size_mb: int = Field(default=10, ge=1, description="Rotate after this size")
    backup_count: int = Field(default=5, ge=0, description="Rotated files kept")
    format: str = Field(
        default='%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s',
        description="File log format",
    )

    @field_validator('level')
    @classmethod
    def validate_level(cls, v):
        """Validate log level"""
        if v.upper() not in ALLOWED_LOG_LEVELS:
            raise ValueError(f'Log level must be one of: {ALLOWED_LOG_LEVELS}')
        return v.upper()


class SlowlyVarying(BaseModel):
    a: float = Field(default=0.0, gt=-1.0, description="L(x) = c (1 + a / ln(e + x))")


class DistributionSpec(BaseModel):
    """Offspring law mu_k = c L(k) / k^(1+theta)"""
    theta: float = Field(..., gt=1.0, description="Tail index")
    mean: float = Field(..., gt=0.0, lt=1.0, description="Mean offspring number m")
    kmax: int = Field(default=10**6, ge=2, description="Dense table size")
    slowly_varying: Optional[SlowlyVarying] = Field(None, description="Slowly varying correction")

    def as_dict(self) -> Dict[str, Any]:
        return self.model_dump(exclude_none=True)


class SamplingConfig(BaseModel):
    """Sampler and bridge table settings"""
    eps_trunc: float = Field(default=1e-12, gt=0.0, lt=1e-3, description="Truncation budget")
    use_fft: bool = Field(default=False, description="FFT convolution for table levels")
    table_mode: str = Field(default="dyadic", description="dyadic or full bridge tables")
    rejection_max_n: int = Field(default=64, ge=1, description="auto uses rejection up to this n")
    rejection_max_tries: int = Field(default=10**7, ge=1, description="Proposals before giving up")
    leaf_size: int = Field(default=16, ge=1, description="Block size handled by rejection in bridges")
    memory_budget_mb: float = Field(default=512.0, gt=0.0, description="Bridge table budget")
    table_cache: Optional[str] = Field(None, description="Directory for cached bridge tables")
    approx_max_retries: int = Field(default=1000, ge=1, description="Retries of the condensation sampler")

    @field_validator('table_mode')
    @classmethod
    def validate_table_mode(cls, v):
        if v not in ALLOWED_TABLE_MODES:
            raise ValueError(f'Table mode must be one of: {ALLOWED_TABLE_MODES}')
        return v


class RunConfig(BaseModel):
    seed: int = Field(default=20240601, ge=0, description="Master seed")
    threads: int = Field(default=1, ge=1, description="Worker processes")
    out: str = Field(default="results", description="Output directory")


class CaseSpec(BaseModel):
    """One (distribution, n, count) Monte Carlo case"""
    dist: str = Field(..., description="Name of a configured distribution")
    n: int = Field(..., ge=1, description="Tree size")
    count: int = Field(..., ge=1, description="Number of trees")


class CondensationConfig(BaseModel):
    """Largest degree, second largest degree and degree fluctuations"""
    enabled: bool = True
    cases: List[CaseSpec] = Field(default_factory=lambda: [
        CaseSpec(dist="heavy_2_5", n=5000, count=1000),
        CaseSpec(dist="heavy_2_5", n=10000, count=1000),
        CaseSpec(dist="heavy_3", n=10000, count=1000),
        CaseSpec(dist="heavy_1_5", n=5000, count=1000),
    ])
    band: Tuple[float, float] = (0.8, 1.2)
    band_fraction: float = Field(default=0.95, gt=0.0, le=1.0)
    median_tol: float = 0.1
    variance_tol: float = 0.15
    ks_tol: float = 0.08
    stable_samples: int = Field(default=4000, ge=100)
    stable_ks_tol: float = 0.1
    calibration_id: str = "cal-e1-v1"


class LocationConfig(BaseModel):
    """Location and generation of the condensation vertex"""
    enabled: bool = True
    case: CaseSpec = Field(default_factory=lambda: CaseSpec(dist="heavy_2_5", n=3000, count=10000))
    max_index: int = Field(default=20, ge=1)
    significance: float = Field(default=1e-3, gt=0.0, lt=1.0)
    cl_samples: int = Field(default=2000, ge=0, description="Unconditioned walks for the last-zero diagnostic")
    cl_depth: int = Field(default=1000, ge=1, description="Walks stop once below -cl_depth")
    cl_ks_tol: float = 0.08
    root_degree_max: int = Field(default=10, ge=1)
    calibration_id: str = "cal-e2-v1"


class SubtreeFluctuationConfig(BaseModel):
    """Partial sums of the subtree sizes under the condensation vertex"""
    enabled: bool = True
    cases: List[CaseSpec] = Field(default_factory=lambda: [
        CaseSpec(dist="heavy_3", n=10000, count=1000),
        CaseSpec(dist="heavy_1_5", n=5000, count=1000),
    ])
    times: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75])
    stable_samples: int = Field(default=4000, ge=100)
    ks_tol: float = 0.1
    variance_tol: float = 0.2
    ratio_n_grid: List[int] = Field(default_factory=lambda: [100, 1000, 10000, 100000])
    progeny_dist: str = "heavy_3"
    progeny_samples: int = Field(default=10**6, ge=1000)
    progeny_tol: float = 0.05
    calibration_id: str = "cal-e3-v1"


class MaxSubtreeConfig(BaseModel):
    """Largest subtree hanging from the condensation vertex"""
    enabled: bool = True
    cases: List[CaseSpec] = Field(default_factory=lambda: [
        CaseSpec(dist="heavy_2_5", n=1000, count=1000),
        CaseSpec(dist="heavy_2_5", n=8000, count=1000),
        CaseSpec(dist="heavy_1_5", n=5000, count=1000),
    ])
    ks_tol: float = 0.08
    quantile: float = 0.95
    calibration_id: str = "cal-ecor-v1"


class HeightConfig(BaseModel):
    """Logarithmic growth of the height"""
    enabled: bool = True
    dist: str = "heavy_2_5"
    n_grid: List[int] = Field(default_factory=lambda: [1000, 3000, 10000])
    count: int = Field(default=300, ge=2)
    slope_tol: float = 0.2
    moment_tol: float = 0.25
    plateau_window: Tuple[int, int] = (10, 25)
    plateau_tol: float = 0.1
    mc_trees: int = Field(default=10**7, ge=0, description="Unconditioned trees for the tail cross-check")
    mc_window: Tuple[int, int] = (10, 14)
    mc_z: float = 4.0
    calibration_id: str = "cal-e4-v1"


class MarginalsConfig(BaseModel):
    """Height profile at fixed fractions of the tree"""
    enabled: bool = True
    case: CaseSpec = Field(default_factory=lambda: CaseSpec(dist="heavy_2_5", n=3000, count=10000))
    times: List[float] = Field(default_factory=lambda: [0.3, 0.7])
    significance: float = Field(default=1e-3, gt=0.0, lt=1.0)
    correlation_tol: float = 0.05
    calibration_id: str = "cal-e5-v1"


class LukaIndepConfig(BaseModel):
    """Shape of the Lukasiewicz path and independence of the first subtrees"""
    enabled: bool = True
    dist: str = "heavy_2_5"
    n_grid: List[int] = Field(default_factory=lambda: [1000, 2000, 4000])
    count: int = Field(default=500, ge=2)
    quantile: float = 0.95
    time: float = 0.5
    path_tol: float = 0.1
    oracle_n: List[int] = Field(default_factory=lambda: [6, 8, 10, 12])
    calibration_id: str = "cal-eluka-v1"


class GromovHausdorffConfig(BaseModel):
    """Count of tall subtrees under the condensation vertex"""
    enabled: bool = True
    dist: str = "heavy_2_5"
    eta_scale: float = Field(default=0.7, gt=0.0, lt=1.0, description="eta = eta_scale / ln(1/m)")
    height_levels: List[int] = Field(default_factory=lambda: [7, 9])
    count: int = Field(default=200, ge=2)
    slope_tol: float = 0.25
    calibration_id: str = "cal-egh-v1"

    @field_validator('height_levels')
    @classmethod
    def validate_levels(cls, v):
        if len(v) < 2 or sorted(v) != v:
            raise ValueError('height_levels needs at least two increasing values')
        return v


class ExperimentsConfig(BaseModel):
    e1: CondensationConfig = Field(default_factory=CondensationConfig)
    e2: LocationConfig = Field(default_factory=LocationConfig)
    e3: SubtreeFluctuationConfig = Field(default_factory=SubtreeFluctuationConfig)
    e_cor: MaxSubtreeConfig = Field(default_factory=MaxSubtreeConfig)
    e4: HeightConfig = Field(default_factory=HeightConfig)
    e5: MarginalsConfig = Field(default_factory=MarginalsConfig)
    e_luka: LukaIndepConfig = Field(default_factory=LukaIndepConfig)
    e_gh: GromovHausdorffConfig = Field(default_factory=GromovHausdorffConfig)


def default_distributions() -> Dict[str, DistributionSpec]:
    return {
        "heavy_2_5": DistributionSpec(theta=2.5, mean=0.5),
        "heavy_1_5": DistributionSpec(theta=1.5, mean=0.5),
        "heavy_3": DistributionSpec(theta=3.0, mean=0.5),
    }


class LabConfig(BaseModel):
    """Top-level config.json"""
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    distributions: Dict[str, DistributionSpec] = Field(default_factory=default_distributions)
    run: RunConfig = Field(default_factory=RunConfig)
    experiments: ExperimentsConfig = Field(default_factory=ExperimentsConfig)

    @model_validator(mode='after')
    def check_distribution_names(self):
        """Every case must name a configured distribution"""
        known = set(self.distributions)
        ex = self.experiments
        names = [c.dist for c in ex.e1.cases + ex.e3.cases + ex.e_cor.cases]
        names += [ex.e2.case.dist, ex.e5.case.dist, ex.e3.progeny_dist,
                  ex.e4.dist, ex.e_luka.dist, ex.e_gh.dist]
        missing = sorted(set(names) - known)
        if missing:
            raise ValueError(f'Unknown distributions referenced: {missing}')
        return self


# -- reports -------------------------------------------------------------------

class CheckRecord(BaseModel):
    """One verified claim: estimate against target within tolerance"""
    check_id: str = Field(..., description="Unique id within the experiment")
    theorem: str = Field(..., description="Limit result the check belongs to")
    claim: str = Field(..., description="Limit statement being checked")
    anchor: str = Field(..., description="Formula the target comes from")
    estimate: float = Field(..., description="Monte Carlo or numeric estimate")
    target: float = Field(..., description="Theoretical target")
    tolerance: float = Field(..., ge=0.0, description="Allowed deviation")
    comparison: str = Field(default="abs", description="abs | rel | max | min")
    verdict: bool = Field(default=False, description="Pass / fail")
    calibration_id: str = Field(default="", description="Run the tolerance was calibrated on")
    data_file: Optional[str] = Field(None, description="CSV with the underlying samples")
    details: Dict[str, Any] = Field(default_factory=dict, description="Extra numbers (p-values, counts)")

    @field_validator('comparison')
    @classmethod
    def validate_comparison(cls, v):
        if v not in ALLOWED_COMPARISONS:
            raise ValueError(f'Comparison must be one of: {ALLOWED_COMPARISONS}')
        return v

    @field_validator('theorem')
    @classmethod
    def validate_theorem(cls, v):
        if v not in ALLOWED_THEOREMS:
            raise ValueError(f'Theorem must be one of: {ALLOWED_THEOREMS}')
        return v

    @model_validator(mode='after')
    def derive_verdict(self):
        """Verdict follows from (estimate, target, tolerance, comparison) alone"""
        self.verdict = evaluate_verdict(self.estimate, self.target, self.tolerance, self.comparison)
        return self


def evaluate_verdict(estimate: float, target: float, tolerance: float, comparison: str) -> bool:
    if math.isnan(estimate):
        return False
    if comparison == 'abs':
        return abs(estimate - target) <= tolerance
    if comparison == 'rel':
        return abs(estimate - target) <= tolerance * abs(target)
    if comparison == 'max':
        return estimate <= target + tolerance
    return estimate >= target - tolerance


class ExperimentReport(BaseModel):
    """Structured record of one experiment run"""
    experiment_id: str = Field(..., description="E1, E2, ...")
    title: str = Field(..., description="What the experiment verifies")
    distributions: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    n_values: List[int] = Field(default_factory=list)
    sample_counts: List[int] = Field(default_factory=list)
    seed: int = Field(..., description="Master seed")
    approximate: bool = Field(default=False, description="True if an approximate sampler was used")
    checks: List[CheckRecord] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.verdict for c in self.checks)

    @field_validator('experiment_id')
    @classmethod
    def validate_experiment_id(cls, v):
        if v not in EXPERIMENT_IDS:
            raise ValueError(f'Experiment id must be one of: {EXPERIMENT_IDS}')
        return v


# Validation utility functions
def validate_config(data: dict) -> LabConfig:
    """Validate and convert a config.json payload"""
    return LabConfig(**data)


def validate_distribution(data: dict) -> DistributionSpec:
    """Validate and convert a distribution entry"""
    return DistributionSpec(**data)
