import numpy as np
import pytest

from cadalign.geometry import random_rotation


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tetrahedron():
    return np.array([[0.3, 0.0, -0.1], [-0.2, 0.25, 0.1], [0.05, -0.3, 0.2], [-0.1, 0.1, -0.4]])


def random_rotations(rng, n):
    """Vectorized uniform rotations (n, 3, 3) from random unit quaternions."""
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=1,
    )


def brute_force_energies(Rs, qs, pc, c):
    """sum_k c_k ||R qs_k - pc_k||^2 evaluated directly for every R in the batch."""
    mapped = np.einsum("rij,kj->rki", Rs, qs)
    return np.einsum("k,rk->r", c, np.sum((mapped - pc[None]) ** 2, axis=2))


__all__ = ["tetrahedron", "random_rotations", "brute_force_energies", "random_rotation"]
