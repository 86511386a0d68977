"""Test functions that may jump across the membrane ``{u_1 = 0}``.

A :class:`PiecewiseTestFunction` is given by two symbolic one-variable
expressions: ``plus`` is used for ``u_1 > 0`` and ``minus`` for ``u_1 <= 0``.
Both must be smooth (no ``Abs``, ``sign``, ``Piecewise`` and similar
primitives); one-sided derivatives at the interface are exact.  An optional
factor ``perp(u_2, ..., u_d)`` turns the profile into a function on ``R^d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import sympy

from .errors import DomainError

__all__ = ["U", "PiecewiseTestFunction", "as_expr"]

#: Symbol used for the first macroscopic coordinate.
U = sympy.Symbol("u", real=True)

_NONSMOOTH = (sympy.Abs, sympy.sign, sympy.Heaviside, sympy.Piecewise, sympy.Min, sympy.Max,
              sympy.floor, sympy.ceiling, sympy.DiracDelta)


def as_expr(e) -> sympy.Expr:
    """Coerce strings and numbers to a sympy expression in ``u``."""
    if isinstance(e, str):
        e = sympy.sympify(e, locals={"u": U})
    e = sympy.sympify(e)
    free = e.free_symbols - {U}
    if free:
        raise DomainError(f"unexpected symbols {sorted(map(str, free))}; use 'u'")
    return e


@dataclass(frozen=True)
class PiecewiseTestFunction:
    """Function equal to ``plus(u_1)`` on ``u_1 > 0`` and ``minus(u_1)`` on ``u_1 <= 0``.

    Parameters
    ----------
    plus, minus : sympy expression or str
        Expressions in the symbol ``u``.
    perp : callable, optional
        Factor depending on the remaining coordinates, ``perp(v)`` with ``v`` of
        shape ``(..., d - 1)``.
    name : str
    """

    plus: object
    minus: object
    perp: Callable | None = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "plus", as_expr(self.plus))
        object.__setattr__(self, "minus", as_expr(self.minus))
        for part in (self.plus, self.minus):
            if part.has(*_NONSMOOTH):
                raise DomainError(f"part {part} is not smooth")

    @classmethod
    def smooth(cls, expr, **kw) -> "PiecewiseTestFunction":
        """A function without a jump at the interface."""
        return cls(expr, expr, **kw)

    def derivative_expr(self, side: int, order: int) -> sympy.Expr:
        part = self.plus if side > 0 else self.minus
        return sympy.diff(part, U, order) if order else part

    @cached_property
    def _lambdas(self):
        out = {}
        for side in (1, -1):
            for k in range(3):
                out[side, k] = sympy.lambdify(U, self.derivative_expr(side, k), "numpy")
        return out

    def side_eval(self, u1, side: int, order: int = 0) -> np.ndarray:
        """Evaluate the ``side`` part (or its derivative) at ``u1`` regardless of the sign of ``u1``."""
        u1 = np.asarray(u1, dtype=float)
        if order <= 2:
            f = self._lambdas[side, order]
        else:
            f = sympy.lambdify(U, self.derivative_expr(side, order), "numpy")
        return np.broadcast_to(np.asarray(f(u1), dtype=float), u1.shape).copy()

    def profile(self, u1, order: int = 0) -> np.ndarray:
        """One-dimensional profile with the ``u_1 <= 0`` convention for the minus part."""
        u1 = np.asarray(u1, dtype=float)
        return np.where(u1 > 0, self.side_eval(u1, 1, order), self.side_eval(u1, -1, order))

    def trace(self, side: int, order: int = 0) -> float:
        """One-sided value (or derivative) at ``u_1 = 0``."""
        return float(sympy.N(self.derivative_expr(side, order).subs(U, 0)))

    def __call__(self, u) -> np.ndarray:
        """Evaluate on points ``u`` of shape ``(..., d)``."""
        u = np.asarray(u, dtype=float)
        if u.ndim == 0:
            u = u[None]
        vals = self.profile(u[..., 0])
        if self.perp is not None and u.shape[-1] > 1:
            vals = vals * np.asarray(self.perp(u[..., 1:]), dtype=float)
        return vals

    def is_continuous(self, order: int = 1, tol: float = 1e-12) -> bool:
        return all(abs(self.trace(1, k) - self.trace(-1, k)) <= tol for k in range(order + 1))

    def scaled(self, c: float) -> "PiecewiseTestFunction":
        return PiecewiseTestFunction(self.plus * c, self.minus * c, self.perp, self.name)

    def squared(self) -> "PiecewiseTestFunction":
        perp = self.perp
        return PiecewiseTestFunction(self.plus ** 2, self.minus ** 2,
                                     (lambda v: np.asarray(perp(v)) ** 2) if perp else None, self.name)
