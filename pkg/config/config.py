"""
Configuration Management for the LOVE Gaussian-process library
"""

import os
from dataclasses import dataclass
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

@dataclass
class SolverConfig:
    """Iterative solver configuration"""
    cg_tol: float = 1e-5
    cg_max_iter: int = 1000
    reorth_threshold: float = 1e-10
    breakdown_tol: float = 1e-10

@dataclass
class LoveConfig:
    """Precomputation configuration"""
    k: int = 50
    sample_k: int = 50
    clamp_tol: float = 1e-8
    negative_variance_tol: float = 1e-6
    sample_jitter: float = 1e-6
    grid_size: int = 1000

@dataclass
class OracleConfig:
    """Dense reference implementation configuration"""
    dense_limit: int = 4096
    jitter: float = 1e-8
    max_jitter_tries: int = 3
    noise_floor: float = 1e-4
    fd_step: float = 1e-4

@dataclass
class HarnessConfig:
    """Benchmark harness configuration"""
    timing_repeats: int = 20
    output_dir: str = "results"

@dataclass
class LoggingConfig:
    """Logging Configuration"""
    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file: str = "logs/love.log"

@dataclass
class SystemConfig:
    """System Configuration"""
    solver: SolverConfig
    love: LoveConfig
    oracle: OracleConfig
    harness: HarnessConfig
    logging: LoggingConfig

    # Performance
    omp_num_threads: str = "4"
    mkl_num_threads: str = "4"

def load_config() -> SystemConfig:
    """Load system configuration from environment variables"""

    solver = SolverConfig(
        cg_tol=float(os.getenv("CG_TOL", "1e-5")),
        cg_max_iter=int(os.getenv("CG_MAX_ITER", "1000")),
        reorth_threshold=float(os.getenv("LANCZOS_REORTH_THRESHOLD", "1e-10")),
        breakdown_tol=float(os.getenv("LANCZOS_BREAKDOWN_TOL", "1e-10"))
    )

    love = LoveConfig(
        k=int(os.getenv("LOVE_K", "50")),
        sample_k=int(os.getenv("LOVE_SAMPLE_K", "50")),
        clamp_tol=float(os.getenv("LOVE_CLAMP_TOL", "1e-8")),
        negative_variance_tol=float(os.getenv("LOVE_NEGATIVE_VARIANCE_TOL", "1e-6")),
        sample_jitter=float(os.getenv("LOVE_SAMPLE_JITTER", "1e-6")),
        grid_size=int(os.getenv("GRID_SIZE", "1000"))
    )

    oracle = OracleConfig(
        dense_limit=int(os.getenv("DENSE_LIMIT", "4096")),
        jitter=float(os.getenv("CHOLESKY_JITTER", "1e-8")),
        max_jitter_tries=int(os.getenv("CHOLESKY_MAX_TRIES", "3")),
        noise_floor=float(os.getenv("NOISE_FLOOR", "1e-4")),
        fd_step=float(os.getenv("FD_STEP", "1e-4"))
    )

    harness = HarnessConfig(
        timing_repeats=int(os.getenv("TIMING_REPEATS", "20")),
        output_dir=os.getenv("OUTPUT_DIR", "results")
    )

    logging = LoggingConfig(
        level=os.getenv("LOG_LEVEL", "INFO"),
        format=os.getenv("LOG_FORMAT", "%(asctime)s - %(name)s - %(levelname)s - %(message)s"),
        file=os.getenv("LOG_FILE", "logs/love.log")
    )

    return SystemConfig(
        solver=solver,
        love=love,
        oracle=oracle,
        harness=harness,
        logging=logging,
        omp_num_threads=os.getenv("OMP_NUM_THREADS", "4"),
        mkl_num_threads=os.getenv("MKL_NUM_THREADS", "4")
    )

# Global configuration instance
config = load_config()
