# niom/config.py
import os
import logging
from typing import Optional

import numpy as np
from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger(__name__)

NIOM_THREADS = os.getenv("NIOM_THREADS")
NIOM_SEED = int(os.getenv("NIOM_SEED", "0"))
NIOM_LOG_LEVEL = os.getenv("NIOM_LOG_LEVEL", "INFO")
NIOM_PROJECTION_WEIGHTS = os.getenv("NIOM_PROJECTION_WEIGHTS")

# Seed of the default projection matrices when no NIOW file is configured
PROJECTION_SEED = 1234

_projection_cache: dict = {}


def get_worker_count() -> int:
    """
    Returns the worker cap for the pair pool.
    NIOM_THREADS is read at call time so tests and CLI flags can override it.
    """
    raw = os.getenv("NIOM_THREADS", NIOM_THREADS)
    if raw is None or raw == "":
        return max(1, os.cpu_count() or 1)
    try:
        workers = int(raw)
    except ValueError:
        raise ValueError(f"NIOM_THREADS must be an integer, got {raw!r}")
    if workers < 1:
        raise ValueError(f"NIOM_THREADS must be >= 1, got {workers}")
    return workers


def get_projection_weights(dim: int, path: Optional[str] = None):
    """
    Returns the process-wide ProjectionWeights for descriptor dimension `dim`.
    Loads the NIOW file from `path` or NIOM_PROJECTION_WEIGHTS when set,
    otherwise builds the seeded Gaussian default. Cached per (dim, path).
    """
    from .matching import ProjectionWeights

    path = path or os.getenv("NIOM_PROJECTION_WEIGHTS", NIOM_PROJECTION_WEIGHTS)
    key = (dim, path)
    if key not in _projection_cache:
        if path:
            weights = ProjectionWeights.load(path)
            if weights.dim != dim:
                raise ValueError(f"Projection weights in {path} have d={weights.dim}, expected {dim}")
            logger.info(f"Loaded projection weights d={dim} from {path}")
        else:
            weights = ProjectionWeights.random(dim, seed=PROJECTION_SEED)
        _projection_cache[key] = weights
    return _projection_cache[key]


def derive_seed(*parts) -> int:
    """
    Stable 63-bit seed from arbitrary parts (ints/strings).
    Independent of PYTHONHASHSEED, so pool scheduling cannot change results.
    """
    entropy = []
    for part in parts:
        if isinstance(part, (int, np.integer)):
            entropy.append(int(part) & 0xFFFFFFFFFFFFFFFF)
        else:
            entropy.extend(str(part).encode("utf-8"))
            entropy.append(0x1F)
    seq = np.random.SeedSequence(entropy)
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
