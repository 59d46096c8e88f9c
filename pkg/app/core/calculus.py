"""
Field handles and finite-difference calculus shared by the services.

Bivector partials are stored as D[a, b, c] = d_c pi^{ab}; Jacobians as
DX[a, c] = d_c X^a. Handles fall back to central differences when no
analytic derivative is attached.
"""
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from app.core.errors import DimensionMismatchError

Array = np.ndarray
EPS_CUBE_ROOT = np.finfo(float).eps ** (1.0 / 3.0)


def fd_step(xc: float) -> float:
    return EPS_CUBE_ROOT * max(1.0, abs(xc))


def _central(fun: Callable[[Array], Array], x: Array) -> Array:
    """Stack central differences of `fun` along every coordinate (last axis)"""
    x = np.asarray(x, dtype=float)
    columns = []
    for c in range(len(x)):
        h = fd_step(x[c])
        xp = x.copy()
        xm = x.copy()
        xp[c] += h
        xm[c] -= h
        columns.append((np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * h))
    return np.stack(columns, axis=-1)


def fd_gradient(f: Callable[[Array], float], x: Array) -> Array:
    return _central(lambda y: np.asarray(f(y), dtype=float), x)


def fd_jacobian(F: Callable[[Array], Array], x: Array) -> Array:
    return _central(F, x)


def fd_bivector_partials(P: Callable[[Array], Array], x: Array) -> Array:
    return _central(P, x)


@dataclass(frozen=True)
class ScalarField:
    """Scalar function with optional analytic gradient"""
    dim: int
    eval: Callable[[Array], float]
    gradient: Optional[Callable[[Array], Array]] = None
    label: str = "f"

    def __call__(self, x: Array) -> float:
        return float(self.eval(x))

    def grad_at(self, x: Array) -> Array:
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        return fd_gradient(self.eval, x)


@dataclass(frozen=True)
class VectorFieldHandle:
    """Vector field with optional analytic Jacobian"""
    dim: int
    eval: Callable[[Array], Array]
    jacobian: Optional[Callable[[Array], Array]] = None
    label: str = "X"

    def __call__(self, x: Array) -> Array:
        return np.asarray(self.eval(x), dtype=float)

    @property
    def analytic(self) -> bool:
        return self.jacobian is not None

    def jacobian_at(self, x: Array) -> Array:
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float)
        return fd_jacobian(self.eval, x)

    def without_jacobian(self) -> "VectorFieldHandle":
        return replace(self, jacobian=None, label=f"{self.label}[fd]")

    def __add__(self, other: "VectorFieldHandle") -> "VectorFieldHandle":
        return combine_fields([self, other], [1.0, 1.0])

    def __sub__(self, other: "VectorFieldHandle") -> "VectorFieldHandle":
        return combine_fields([self, other], [1.0, -1.0])

    def __rmul__(self, scalar: float) -> "VectorFieldHandle":
        return combine_fields([self], [float(scalar)])


def combine_fields(fields: Sequence[VectorFieldHandle], coeffs: Sequence[float]) -> VectorFieldHandle:
    """Constant-coefficient linear combination; analytic if every term is"""
    dims = {f.dim for f in fields}
    if len(dims) != 1:
        raise DimensionMismatchError(f"cannot combine fields of dimensions {sorted(dims)}")
    fields = list(fields)
    coeffs = [float(c) for c in coeffs]

    def ev(x):
        return sum(c * f(x) for c, f in zip(coeffs, fields))

    jac = None
    if all(f.analytic for f in fields):
        def jac(x):
            return sum(c * f.jacobian_at(x) for c, f in zip(coeffs, fields))

    label = " + ".join(f"{c:g}*{f.label}" for c, f in zip(coeffs, fields))
    return VectorFieldHandle(dim=dims.pop(), eval=ev, jacobian=jac, label=label)


@dataclass(frozen=True)
class BivectorField:
    """Antisymmetric matrix field; entry (a, b) is {x_a, x_b}"""
    dim: int
    eval: Callable[[Array], Array]
    partials: Optional[Callable[[Array], Array]] = None
    label: str = "pi"

    def __call__(self, x: Array) -> Array:
        return np.asarray(self.eval(x), dtype=float)

    @property
    def analytic(self) -> bool:
        return self.partials is not None

    def partials_at(self, x: Array) -> Array:
        if self.partials is not None:
            return np.asarray(self.partials(x), dtype=float)
        return fd_bivector_partials(self.eval, x)

    def without_partials(self) -> "BivectorField":
        return replace(self, partials=None, label=f"{self.label}[fd]")

    def scaled(self, factor: float) -> "BivectorField":
        partials = None
        if self.partials is not None:
            partials = lambda x: factor * self.partials_at(x)
        return BivectorField(
            dim=self.dim,
            eval=lambda x: factor * self(x),
            partials=partials,
            label=f"{factor:g}*{self.label}",
        )

    def __add__(self, other: "BivectorField") -> "BivectorField":
        if self.dim != other.dim:
            raise DimensionMismatchError(f"bivector dimensions differ: {self.dim} vs {other.dim}")
        partials = None
        if self.analytic and other.analytic:
            partials = lambda x: self.partials_at(x) + other.partials_at(x)
        return BivectorField(
            dim=self.dim,
            eval=lambda x: self(x) + other(x),
            partials=partials,
            label=f"{self.label}+{other.label}",
        )


def constant_bivector(matrix: Array, label: str) -> BivectorField:
    matrix = np.array(matrix, dtype=float)
    dim = matrix.shape[0]
    return BivectorField(
        dim=dim,
        eval=lambda x: matrix.copy(),
        partials=lambda x: np.zeros((dim, dim, dim)),
        label=label,
    )


@dataclass(frozen=True)
class ScalarFitResult:
    coefficient: float
    relative_residual: float
    spread: float
    exact_zero: bool


def fit_scalar(targets: List[Array], references: List[Array]) -> ScalarFitResult:
    """
    Least-squares c with targets ~ c * references over all entries and points.

    `spread` is the larger of the entrywise misfit (relative to
    max(1, |c|) times the reference size) and the variation of the
    per-point fitted scalars.
    """
    t = [np.atleast_1d(np.asarray(a, dtype=float)).ravel() for a in targets]
    r = [np.atleast_1d(np.asarray(b, dtype=float)).ravel() for b in references]
    num = sum(float(np.dot(a, b)) for a, b in zip(t, r))
    den = sum(float(np.dot(b, b)) for b in r)
    t_scale = max(float(np.max(np.abs(a))) for a in t)
    if den == 0.0:
        return ScalarFitResult(0.0, t_scale, t_scale, exact_zero=True)
    c = num / den
    r_scale = max(float(np.max(np.abs(b))) for b in r)
    scale = r_scale * max(1.0, abs(c))
    misfit = max(float(np.max(np.abs(a - c * b))) for a, b in zip(t, r)) / scale
    per_point = [float(np.dot(a, b) / np.dot(b, b)) for a, b in zip(t, r) if np.dot(b, b) > 0.0]
    variation = (max(per_point) - min(per_point)) / max(1.0, abs(c)) if per_point else 0.0
    exact_zero = t_scale == 0.0
    return ScalarFitResult(c, misfit, max(misfit, variation), exact_zero)


def relative_inf(diff: Array, reference: Array) -> float:
    """||diff||_inf / max(1, ||reference||_inf)"""
    diff = np.asarray(diff, dtype=float)
    reference = np.asarray(reference, dtype=float)
    return float(np.max(np.abs(diff), initial=0.0) / max(1.0, np.max(np.abs(reference), initial=0.0)))


def inf_norm(a: Array) -> float:
    return float(np.max(np.abs(np.asarray(a, dtype=float)), initial=0.0))
