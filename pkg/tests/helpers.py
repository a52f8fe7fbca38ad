"""Shared independent oracles for the test suite."""

import numpy as np


def dense_block_average_matrix(factor, hr_h, hr_w):
    """Explicit dense block-average matrix built pixel by pixel."""
    lr_h, lr_w = hr_h // factor, hr_w // factor
    mat = np.zeros((lr_h * lr_w, hr_h * hr_w))
    for bi in range(lr_h):
        for bj in range(lr_w):
            row = bi * lr_w + bj
            for di in range(factor):
                for dj in range(factor):
                    col = (bi * factor + di) * hr_w + (bj * factor + dj)
                    mat[row, col] = 1.0 / factor**2
    return mat
