"""Choice of the two camera clones removed when the window is full."""

from __future__ import annotations

import numpy as np

from ..geometry import rotation_angle


def _small_motion(a, b, rotation_threshold, translation_threshold) -> bool:
    angle = rotation_angle(a.rotation @ b.rotation.T)
    distance = np.linalg.norm(a.p_GC - b.p_GC)
    return angle < rotation_threshold and distance < translation_threshold


def select_marginalize(cams, rotation_threshold: float = 0.26, translation_threshold: float = 0.4) -> list:
    """Ids of two clones to drop; the latest clone is never chosen.

    Each pass looks at the second-latest remaining clone: if it barely moved
    relative to its predecessor it is redundant and goes, otherwise the oldest
    remaining clone goes.
    """
    if len(cams) < 3:
        raise ValueError(f"need at least 3 camera states, have {len(cams)}")
    remaining = list(cams)
    chosen = []
    for _ in range(2):
        candidate = remaining[-2]
        if len(remaining) >= 3 and _small_motion(candidate, remaining[-3],
                                                 rotation_threshold, translation_threshold):
            pick = candidate
        else:
            pick = remaining[0]
        chosen.append(pick.id)
        remaining.remove(pick)
    return sorted(chosen)
