"""
Token mask generation for masked trajectory reconstruction.
"""
from typing import Optional

import numpy as np

from alignrl.core.exceptions import UsageError
from alignrl.schemas.model import ACTION_SLOT, SLOTS_PER_STEP
from alignrl.schemas.train import MaskMode, MaskSchedule


def _mask_count(ratio: float, n_real: int, rng: np.random.Generator) -> int:
    # stochastic rounding keeps the expected masked fraction equal to ratio
    scaled = ratio * n_real
    count = int(np.floor(scaled))
    if rng.random() < scaled - count:
        count += 1
    return int(np.clip(count, 1, n_real))


def make_mask(
    context_len: int,
    ratio: float,
    mode: MaskMode,
    rng: np.random.Generator,
    pad: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Boolean mask over the ``3 * context_len`` token slots.

    Only non-pad slots are ever masked. ``random`` masks a uniformly chosen
    subset; ``autoregressive`` masks a contiguous suffix, which always
    includes the final action slot. The masked count is ``ratio * n_real``
    rounded stochastically, clipped to [1, n_real].

    Raises:
        UsageError: If K < 1, ratio is outside (0, 1] or the window is all pad
    """
    if context_len < 1:
        raise UsageError(f"context length must be >= 1, got {context_len}")
    if not 0.0 < ratio <= 1.0:
        raise UsageError(f"mask ratio must lie in (0, 1], got {ratio}")
    n_tokens = SLOTS_PER_STEP * context_len
    token_pad = np.zeros(n_tokens, dtype=bool)
    if pad is not None:
        token_pad = np.repeat(np.asarray(pad, dtype=bool), SLOTS_PER_STEP)
    real = np.flatnonzero(~token_pad)
    if real.size == 0:
        raise UsageError("cannot mask a window with no real slots")

    mask = np.zeros(n_tokens, dtype=bool)
    count = _mask_count(ratio, real.size, rng)
    mode = MaskMode(mode)
    if mode == MaskMode.RANDOM:
        mask[rng.choice(real, size=count, replace=False)] = True
    elif mode == MaskMode.AUTOREGRESSIVE:
        mask[real[-count:]] = True
    else:
        raise UsageError(f"make_mask needs a concrete mode, got {mode.value}")
    return mask


def draw_batch_mode(schedule: MaskSchedule, rng: np.random.Generator) -> MaskMode:
    if schedule.mode != MaskMode.MIXED:
        return schedule.mode
    return MaskMode.AUTOREGRESSIVE if rng.random() < schedule.p_autoregressive else MaskMode.RANDOM


def make_batch_masks(schedule: MaskSchedule, pads: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    (B, 3K) masks for a batch: one mode and one ratio per batch.

    ``pads`` is the (B, K) pad-flag array of the batch windows.
    """
    pads = np.asarray(pads, dtype=bool)
    mode = draw_batch_mode(schedule, rng)
    ratio = float(schedule.ratios[int(rng.integers(len(schedule.ratios)))])
    context_len = pads.shape[1]
    return np.stack([make_mask(context_len, ratio, mode, rng, pad=row) for row in pads])


def inference_mask(context_len: int) -> np.ndarray:
    """Only the final action slot masked: the slot inference fills in."""
    mask = np.zeros(SLOTS_PER_STEP * context_len, dtype=bool)
    mask[SLOTS_PER_STEP * (context_len - 1) + ACTION_SLOT] = True
    return mask
