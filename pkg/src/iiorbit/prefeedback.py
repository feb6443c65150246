"""Collocated partial feedback linearization and the Spong normal form."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mechmodel import MechanicalSystem


def u_pl(sys: MechanicalSystem, x, u):
    """Joint torque that makes the actuated acceleration equal to ``u``.

    Works on a single state (shape (4,)) or column-stacked states (4, N).
    """
    x1, x2, x3, x4 = x[0], x[1], x[2], x[3]
    muu, mau, maa = sys.m_uu(x1), sys.m_au(x1), sys.m_aa(x1)
    R = maa - mau**2 / muu
    unact = sys.c_bar_u(x1) * x4**2 + sys.c_a(x1) * x3**2 + sys.grad_u_V(x1, x2)
    return (
        R * u
        + sys.c_r(x1) * x3**2
        + sys.c_p(x1) * x4 * x3
        + sys.c_s(x1) * x4**2
        + sys.grad_a_V(x1, x2)
        - mau / muu * unact
    )


@dataclass(frozen=True)
class SpongForm:
    """Control-affine model ``x' = f(x) + g(x) u`` after pre-feedback."""

    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    R: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x, u):
        return self.f(x) + self.g(x) * u


def spong_form(sys: MechanicalSystem) -> SpongForm:
    def f(x):
        x1, x2, x3, x4 = x[0], x[1], x[2], x[3]
        acc = -(sys.c_bar_u(x1) * x4**2 + sys.c_a(x1) * x3**2 + sys.grad_u_V(x1, x2)) / sys.m_uu(x1)
        return np.array([x3, x4, acc, np.zeros_like(acc)])

    def g(x):
        x1 = x[0]
        ratio = np.broadcast_to(sys.m_au(x1) / sys.m_uu(x1), np.shape(x1))
        zero = np.zeros_like(ratio)
        return np.array([zero, zero, -ratio, zero + 1.0])

    def R(x1):
        return sys.m_aa(x1) - sys.m_au(x1) ** 2 / sys.m_uu(x1)

    return SpongForm(f=f, g=g, R=R)
