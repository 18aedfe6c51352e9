"""
Configuration management for ElastoMatch.
"""
import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

SOLVERS = ('bnb', 'exhaustive')


class Config:
    """Application configuration class."""

    # Storage Configuration
    BASE_DIR = Path(__file__).parent
    STORAGE_PATH = Path(os.getenv('STORAGE_PATH', BASE_DIR / 'storage'))
    CACHE_DIR = Path(os.getenv('ELASTOMATCH_CACHE_DIR', STORAGE_PATH / 'cache'))

    # Runtime
    THREADS = int(os.getenv('ELASTOMATCH_THREADS', os.cpu_count() or 1))
    LOG_LEVEL = os.getenv('ELASTOMATCH_LOG_LEVEL', 'WARNING').upper()

    # Spectral features
    NUM_EIGENFUNCTIONS = 25
    DESCRIPTOR_WIDTH = 100
    DENSE_EIGEN_MAX_N = 300
    EIGS_MAXITER = 10000

    # Segmentation and cost
    NUM_REGIONS = 6
    TAU = 1e3

    # Solid tessellation
    MAX_AREA_FACTOR = 1e-3  # Max triangle area as a fraction of the curve area
    MIN_ANGLE = 20.0  # Degrees

    # Matching
    SOLVER = 'bnb'
    SEED = 0
    EXACT_DIAMETER_MAX_N = 2000


@dataclass(frozen=True)
class RunConfig:
    """Settings of one command invocation."""

    k: int = Config.NUM_EIGENFUNCTIONS
    d: int = Config.DESCRIPTOR_WIDTH
    r: int = Config.NUM_REGIONS
    tau: float = Config.TAU
    max_area_factor: float = Config.MAX_AREA_FACTOR
    min_angle: float = Config.MIN_ANGLE
    solver: str = Config.SOLVER
    seed: int = Config.SEED
    threads: int = Config.THREADS
    cache_dir: str = str(Config.CACHE_DIR)
    use_cache: bool = True

    # Fields that change computed features and therefore cache keys
    FEATURE_FIELDS = ('k', 'd', 'r', 'max_area_factor', 'min_angle', 'seed')

    @classmethod
    def from_defaults(cls, **overrides) -> 'RunConfig':
        """Build from Config defaults; None overrides are ignored."""
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"Unknown settings: {', '.join(sorted(unknown))}")
        return replace(cls(), **{k: v for k, v in overrides.items() if v is not None})

    def validate(self) -> 'RunConfig':
        """Raise ValueError on non-positive numerics or an unknown solver."""
        for name in ('k', 'd', 'r', 'tau', 'max_area_factor', 'min_angle', 'threads'):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")
        if self.solver not in SOLVERS:
            raise ValueError(f"Unknown solver {self.solver!r}; expected one of {', '.join(SOLVERS)}")
        return self

    def fingerprint(self) -> str:
        """Stable JSON of the feature-relevant settings."""
        values = asdict(self)
        return json.dumps({name: values[name] for name in self.FEATURE_FIELDS}, sort_keys=True)

    def processor_settings(self) -> dict:
        return {
            'k': self.k, 'd': self.d, 'r': self.r, 'tau': self.tau,
            'max_area_factor': self.max_area_factor, 'min_angle': self.min_angle,
            'seed': self.seed, 'dense_max_n': Config.DENSE_EIGEN_MAX_N,
            'eigs_maxiter': Config.EIGS_MAXITER,
            'exact_diameter_max_n': Config.EXACT_DIAMETER_MAX_N,
        }
