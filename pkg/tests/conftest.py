import numpy as np
import pytest


def moving_square(T=30, H=64, W=64, size=10, bg=0.5, fg=0.1, channels=1):
    """Dark square drifting right 1 px/frame and down 1 px every 3 frames."""
    video = np.full((T, H, W, channels), bg)
    boxes = []
    for t in range(T):
        x, y = 5 + t, 20 + t // 3
        video[t, y:y + size, x:x + size] = fg
        boxes.append((y, x))
    return video, boxes


def covered(boxes, frames, shape, size=10):
    mask = np.zeros(shape, dtype=bool)
    for i in frames:
        y, x = boxes[i]
        mask[y:y + size, x:x + size] = True
    return mask


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
