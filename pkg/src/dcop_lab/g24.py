"""Definitions of the 22 dynamic G24-family test problems.

Every problem lives on ``[0, 3] x [0, 4]`` and is built from the same pieces::

    f(x, t)  = -(X1 + X2)                        linear objectives
    f(x, t)  = -3 exp(-sqrt(X1**2 + X2**2))      moving-peak objectives (G24_8*)
    X_i      = p_i(t) * (x_i + q_i(t))
    Y_i      = r_i(t) * (x_i + s_i(t))

and a subset of the constraints ``g1 .. g7`` (all of the form ``g(x, t) <= 0``)
evaluated on the transformed variables ``Y``. ``k`` is the objective severity
and ``S`` the constraint severity; ``t`` is the integer period index.

Provenance and reconstruction notes are kept next to each instance. The first
18 instances follow the G24 dynamic set of Nguyen & Yao (2012); the four
``v``/``w`` instances follow the idea of Bu et al. (2016) of adding a parameter
that controls the number and size of disconnected feasible regions. Values
that could not be taken verbatim are marked ``reconstructed``.

All expressions accept Python floats as well as numpy arrays so the same code
serves single evaluations and the vectorised grid oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

LOWER = (0.0, 0.0)
UPPER = (3.0, 4.0)

# Centre and radius of the circular path of the G24_8 peak.
PEAK_C1 = 1.470561702
PEAK_C2 = 3.442094786232
PEAK_RADIUS = 0.858958496

# Band constraint parameters for the Bu-style variants (reconstructed).
# v: more regions of moderate size; w: fewer, narrower regions.
BAND_V = (3, 0.0)  # (number of bands across x1, cosine threshold)
BAND_W = (2, 0.5)

_ZERO_SNAP = 1e-12


def _snap(value: float) -> float:
    # sin() of exact multiples of pi leaves ~1e-16 residue; keep plateaus exact.
    if abs(value) < _ZERO_SNAP:
        return 0.0
    if abs(abs(value) - 1.0) < _ZERO_SNAP:
        return math.copysign(1.0, value)
    return value


# ---------------------------------------------------------------------------
# objective parameter schedules: (t, k) -> (p1, p2, q1, q2)
# ---------------------------------------------------------------------------

def obj_fixed(t: int, k: float):
    return 1.0, 1.0, 0.0, 0.0


def obj_sine(t: int, k: float):
    return _snap(math.sin(k * math.pi * t + math.pi / 2)), 1.0, 0.0, 0.0


def obj_alternating(t: int, k: float):
    """p1 and p2 take turns to move; the other one holds its previous value."""
    def p1_even(tt):
        return _snap(math.sin(k * math.pi * tt / 2 + math.pi / 2))

    def p2_odd(tt):
        return _snap(math.sin(k * math.pi * (tt - 1) / 2 + math.pi / 2))

    if t % 2 == 0:
        return p1_even(t), p2_odd(t - 1), 0.0, 0.0
    return p1_even(t - 1), p2_odd(t), 0.0, 0.0


def obj_switch(t: int, k: float):
    # p1 = sin(pi t + pi/2) flips sign every period regardless of k.
    return _snap(math.sin(math.pi * t + math.pi / 2)), 1.0, 0.0, 0.0


def obj_peak(t: int, k: float):
    q1 = -(PEAK_C1 + PEAK_RADIUS * math.cos(k * math.pi * t))
    q2 = -(PEAK_C2 + PEAK_RADIUS * math.sin(k * math.pi * t))
    return 1.0, 1.0, q1, q2


# ---------------------------------------------------------------------------
# constraint parameter schedules: (t, S) -> (r1, r2, s1, s2)
# ---------------------------------------------------------------------------

def con_fixed(t: int, S: float):
    return 1.0, 1.0, 0.0, 0.0


def con_shift_down(t: int, S: float):
    """Region moves down (shrinks) by (x2max - x2min)/S per period."""
    return 1.0, 1.0, 0.0, t * (UPPER[1] - LOWER[1]) / S


def con_relax_from_2(t: int, S: float):
    """g3 starts at s2 = 2 and relaxes by (x2max - x2min)/S per period (reconstructed)."""
    return 1.0, 1.0, 0.0, 2.0 - t * (UPPER[1] - LOWER[1]) / S


def con_frozen_at_2(t: int, S: float):
    return 1.0, 1.0, 0.0, 2.0


# ---------------------------------------------------------------------------
# constraint bodies on the transformed variables
# ---------------------------------------------------------------------------

def _piecewise(mask, inside=-1.0, outside=1.0):
    if isinstance(mask, (bool, np.bool_)):
        return inside if mask else outside
    return np.where(mask, inside, outside)


def g1(y1, y2):
    return -2 * y1**4 + 8 * y1**3 - 8 * y1**2 + y2 - 2


def g2(y1, y2):
    return -4 * y1**4 + 32 * y1**3 - 88 * y1**2 + 96 * y1 + y2 - 36


def g3(y1, y2):
    return 2 * y1 + 3 * y2 - 9


def g4(y1, y2):
    return _piecewise(((0 <= y1) & (y1 <= 1)) | ((2 <= y1) & (y1 <= 3)))


def g5(y1, y2):
    return _piecewise(((0 <= y1) & (y1 <= 0.5)) | ((2 <= y1) & (y1 <= 2.5)))


def g6(y1, y2):
    return _piecewise(
        ((0 <= y1) & (y1 <= 1) & (2 <= y2) & (y2 <= 3)) | ((2 <= y1) & (y1 <= 3))
    )


def _band(n_bands: int, threshold: float):
    width = UPPER[0] - LOWER[0]

    def g(y1, y2):
        phase = 2 * math.pi * n_bands * (y1 - LOWER[0]) / width
        cos = np.cos(phase) if isinstance(y1, np.ndarray) else math.cos(phase)
        return threshold - cos

    g.__name__ = f"band_{n_bands}_{threshold}"
    return g


g7v = _band(*BAND_V)
g7w = _band(*BAND_W)


ConstraintTerm = tuple[Callable, Callable[[int, float], tuple]]


@dataclass(frozen=True)
class G24Definition:
    name: str
    objective_kind: str  # "linear" or "peak"
    objective_schedule: Callable[[int, float], tuple]
    constraints: tuple[ConstraintTerm, ...]
    fixed_objective: bool
    fixed_constraints: bool
    note: str = ""


def _def(name, kind, sched, constraints, note=""):
    return G24Definition(
        name=name,
        objective_kind=kind,
        objective_schedule=sched,
        constraints=tuple(constraints),
        fixed_objective=sched is obj_fixed,
        fixed_constraints=all(s in (con_fixed, con_frozen_at_2) for _, s in constraints),
        note=note,
    )


_STATIC = ((g1, con_fixed), (g2, con_fixed))
_SHRINK = ((g1, con_shift_down), (g2, con_shift_down))
_G3_FAMILY = ((g1, con_fixed), (g2, con_fixed), (g3, con_relax_from_2))
_G3_FROZEN = ((g1, con_fixed), (g2, con_fixed), (g3, con_frozen_at_2))

DEFINITIONS: dict[str, G24Definition] = {
    d.name: d
    for d in (
        # Nguyen & Yao 2012, G24 dynamic set
        _def("G24_u", "linear", obj_sine, (), "dynamic f, unconstrained"),
        _def("G24_1", "linear", obj_sine, _STATIC, "dynamic f, fixed g1 g2"),
        _def("G24_f", "linear", obj_fixed, _STATIC, "static G24"),
        _def("G24_uf", "linear", obj_fixed, (), "static f, unconstrained"),
        _def("G24_2", "linear", obj_alternating, _STATIC, "p1/p2 alternate; plateau periods"),
        _def("G24_2u", "linear", obj_alternating, (), "as G24_2, unconstrained"),
        _def("G24_3", "linear", obj_fixed, _G3_FAMILY,
             "fixed f, g3 relaxes (reconstructed direction)"),
        _def("G24_3b", "linear", obj_sine, _G3_FAMILY, "dynamic f, constraints of G24_3"),
        _def("G24_3f", "linear", obj_fixed, _G3_FROZEN, "G24_3 frozen at t=0"),
        _def("G24_4", "linear", obj_sine, _SHRINK, "dynamic f, shrinking g1 g2"),
        _def("G24_5", "linear", obj_alternating, _SHRINK, "alternating f, shrinking g1 g2"),
        _def("G24_6a", "linear", obj_switch, ((g3, con_fixed), (g6, con_fixed)),
             "optimum switches sides; 2 regions, hard path"),
        _def("G24_6b", "linear", obj_switch, ((g3, con_fixed),), "1 region"),
        _def("G24_6c", "linear", obj_switch, ((g3, con_fixed), (g4, con_fixed)),
             "2 regions, easy path"),
        _def("G24_6d", "linear", obj_switch, ((g5, con_fixed), (g6, con_fixed)),
             "2 regions, hard path"),
        _def("G24_7", "linear", obj_fixed, _SHRINK, "fixed f, shrinking g1 g2"),
        _def("G24_8a", "peak", obj_peak, (), "peak moves on a circle, unconstrained"),
        _def("G24_8b", "peak", obj_peak, _STATIC, "moving peak, fixed g1 g2"),
        # Bu et al. 2016 style variants: extra band constraint (reconstructed values)
        _def("G24v_3", "linear", obj_fixed, _G3_FAMILY + ((g7v, con_fixed),),
             f"G24_3 + band constraint n={BAND_V[0]}, threshold={BAND_V[1]}"),
        _def("G24v_3b", "linear", obj_sine, _G3_FAMILY + ((g7v, con_fixed),),
             "G24_3b + band constraint (v)"),
        _def("G24w_3", "linear", obj_fixed, _G3_FAMILY + ((g7w, con_fixed),),
             f"G24_3 + band constraint n={BAND_W[0]}, threshold={BAND_W[1]}"),
        _def("G24w_3b", "linear", obj_sine, _G3_FAMILY + ((g7w, con_fixed),),
             "G24_3b + band constraint (w)"),
    )
}

INSTANCE_IDS: tuple[str, ...] = tuple(DEFINITIONS)


@lru_cache(maxsize=4096)
def objective_params(name: str, t: int, k: float) -> tuple:
    return DEFINITIONS[name].objective_schedule(t, k)


@lru_cache(maxsize=4096)
def constraint_params(name: str, t: int, S: float) -> tuple:
    return tuple(sched(t, S) for _, sched in DEFINITIONS[name].constraints)


def objective(name: str, x1, x2, t: int, k: float):
    p1, p2, q1, q2 = objective_params(name, t, k)
    X1 = p1 * (x1 + q1)
    X2 = p2 * (x2 + q2)
    if DEFINITIONS[name].objective_kind == "peak":
        if isinstance(X1, np.ndarray) or isinstance(X2, np.ndarray):
            return -3.0 * np.exp(-np.sqrt(X1 * X1 + X2 * X2))
        return -3.0 * math.exp(-math.sqrt(X1 * X1 + X2 * X2))
    return -(X1 + X2)


def constraint_values(name: str, x1, x2, t: int, S: float) -> list:
    out = []
    for (body, _), (r1, r2, s1, s2) in zip(
        DEFINITIONS[name].constraints, constraint_params(name, t, S)
    ):
        out.append(body(r1 * (x1 + s1), r2 * (x2 + s2)))
    return out
