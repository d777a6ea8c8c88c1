"""Symmetric Gauss rules on triangles (Strang-Fix / Dunavant)."""

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """
    Barycentric points and weights.

    Weights sum to one, so ``area(T) * sum(w * f(x_q))`` integrates over T.
    """

    points: np.ndarray   # (nq, 3) barycentric coordinates
    weights: np.ndarray  # (nq,)
    degree: int

    def physical_points(self, corners):
        """Map to physical triangles; ``corners`` is (nt, 3, 2)."""
        return np.einsum("qi,tid->tqd", self.points, corners)


def _orbits(table):
    pts, wts = [], []
    for w, bary in table:
        for p in sorted(set(itertools.permutations(bary))):
            pts.append(p)
            wts.append(w)
    return np.array(pts), np.array(wts)


_TABLES = {
    1: [(1.0, (1 / 3, 1 / 3, 1 / 3))],
    2: [(1 / 3, (2 / 3, 1 / 6, 1 / 6))],
    4: [(0.223381589678011, (0.445948490915965, 0.445948490915965,
                             0.108103018168070)),
        (0.109951743655322, (0.091576213509771, 0.091576213509771,
                             0.816847572980459))],
    6: [(0.116786275726379, (0.249286745170910, 0.249286745170910,
                             0.501426509658179)),
        (0.050844906370207, (0.063089014491502, 0.063089014491502,
                             0.873821971016996)),
        (0.082851075618374, (0.053145049844817, 0.310352451033784,
                             0.636502499121399))],
    8: [(0.144315607677787, (1 / 3, 1 / 3, 1 / 3)),
        (0.095091634267285, (0.459292588292723, 0.459292588292723,
                             0.081414823414554)),
        (0.103217370534718, (0.170569307751760, 0.170569307751760,
                             0.658861384496480)),
        (0.032458497623198, (0.050547228317031, 0.050547228317031,
                             0.898905543365938)),
        (0.027230314174435, (0.008394777409958, 0.263112829634638,
                             0.728492392955404))],
}

SUPPORTED_DEGREES = tuple(sorted(_TABLES))


def triangle_quadrature(degree=6):
    """Symmetric positive-weight rule exact for polynomials of ``degree``."""
    if degree not in _TABLES:
        raise ValueError("unsupported quadrature degree {}; choose one of {}"
                         .format(degree, SUPPORTED_DEGREES))
    pts, wts = _orbits(_TABLES[degree])
    return QuadratureRule(pts, wts, degree)
