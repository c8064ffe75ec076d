"""Discrete differential operators on periodic grids.

All derivatives use 4th-order centered stencils with periodic wrap:

    d2f/dx ~ (-f[j-2] + 16 f[j-1] - 30 f[j] + 16 f[j+1] - f[j+2]) / (12 h^2)
    df/dx  ~ ( f[j-2] -  8 f[j-1] +           8 f[j+1] - f[j+2]) / (12 h)

The Laplacian follows the geometer's sign convention (positive spectrum,
constants in the kernel: laplacian of sin(x0) on axis frequency 1 is
+sin(x0)).  The volume-1 normalization makes integrals plain means.

The underscore functions operate on raw ndarrays and are what the solver
modules use in their inner loops; the public functions wrap them with
ScalarField validation.
"""

from __future__ import annotations

import numpy as np

from .errors import GridError
from .grid import GridSpec, OneForm, ScalarField

DEFAULT_GAUDUCHON_TOL = 1e-8


def _shift(a: np.ndarray, offset: int, axis: int) -> np.ndarray:
    # value at index j of the result is a[j - offset] with periodic wrap
    return np.roll(a, offset, axis=axis)


def _second_derivative(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    # difference-of-differences form cancels constants exactly
    near = _shift(a, 1, axis) + _shift(a, -1, axis) - 2.0 * a
    far = _shift(a, 2, axis) + _shift(a, -2, axis) - 2.0 * a
    return (16.0 * near - far) / (12.0 * h * h)


def _first_derivative(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    near = _shift(a, -1, axis) - _shift(a, 1, axis)
    far = _shift(a, -2, axis) - _shift(a, 2, axis)
    return (8.0 * near - far) / (12.0 * h)


def _laplacian(a: np.ndarray, spacings) -> np.ndarray:
    out = np.zeros_like(a)
    for ax, h in enumerate(spacings):
        out -= _second_derivative(a, ax, h)
    return out


def _gradient(a: np.ndarray, spacings) -> list[np.ndarray]:
    return [_first_derivative(a, ax, h) for ax, h in enumerate(spacings)]


def _lee_pairing(alpha_values, a: np.ndarray, spacings) -> np.ndarray:
    out = np.zeros_like(a)
    for ax, h in enumerate(spacings):
        out += alpha_values[ax] * _first_derivative(a, ax, h)
    return out


def _check_same_spec(spec: GridSpec, *others) -> None:
    for o in others:
        if o.spec != spec:
            raise GridError("operands live on mismatched grids")


def laplacian(f: ScalarField) -> ScalarField:
    """Hodge Laplacian on functions, positive spectrum convention."""
    return ScalarField(f.spec, _laplacian(f.values, f.spec.spacings))


def lee_pairing(alpha: OneForm, f: ScalarField) -> ScalarField:
    """Pointwise pairing of a one-form with the differential of f."""
    _check_same_spec(f.spec, alpha)
    vals = _lee_pairing([c.values for c in alpha.components], f.values, f.spec.spacings)
    return ScalarField(f.spec, vals)


def chern_laplacian(alpha: OneForm, f: ScalarField) -> ScalarField:
    """laplacian(f) + lee_pairing(alpha, f)."""
    _check_same_spec(f.spec, alpha)
    vals = _laplacian(f.values, f.spec.spacings) + _lee_pairing(
        [c.values for c in alpha.components], f.values, f.spec.spacings
    )
    return ScalarField(f.spec, vals)


def divergence(alpha: OneForm) -> ScalarField:
    """Sum of axis derivatives of the components."""
    spec = alpha.spec
    out = np.zeros(spec.dims)
    for ax, h in enumerate(spec.spacings):
        out += _first_derivative(alpha.components[ax].values, ax, h)
    return ScalarField(spec, out)


def gauduchon_defect(alpha: OneForm) -> float:
    """Sup-norm of the divergence; zero for co-closed one-forms."""
    return float(np.max(np.abs(divergence(alpha).values)))


def mean(f: ScalarField) -> float:
    """Normalized integral: on a periodic grid the trapezoid rule is the mean."""
    return float(np.mean(f.values))


def grad_squared(f: ScalarField) -> ScalarField:
    """Pointwise squared gradient magnitude."""
    out = np.zeros(f.spec.dims)
    for g in _gradient(f.values, f.spec.spacings):
        out += g * g
    return ScalarField(f.spec, out)


def sup_norm(f: ScalarField) -> float:
    return float(np.max(np.abs(f.values)))


def lp_norm(f: ScalarField, p: float) -> float:
    """Discrete L^p norm under the normalized (volume 1) measure."""
    if p <= 0:
        raise ValueError("p must be positive")
    return float(np.mean(np.abs(f.values) ** p) ** (1.0 / p))
