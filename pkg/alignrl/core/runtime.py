"""
Torch runtime setup shared by training and inference.
"""
from typing import Optional

import torch

from alignrl.core.config import settings
from alignrl.core.logging import get_logger

logger = get_logger(__name__)

_configured = False


def configure_torch(threads: Optional[int] = None, deterministic: Optional[bool] = None) -> None:
    """Apply thread count and determinism settings once per process."""
    global _configured
    threads = threads or settings.TORCH_THREADS
    deterministic = settings.DETERMINISTIC if deterministic is None else deterministic
    if _configured:
        return
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(deterministic, warn_only=True)
    _configured = True
    logger.debug("Torch configured", threads=threads, deterministic=deterministic)


def seed_torch(seed: int) -> torch.Generator:
    """Seed torch's global RNG (dropout, init) and return a matching generator."""
    torch.manual_seed(seed)
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator
