"""Score families for index models fit by estimating equations.

Each family supplies the scalar kernel psi_c(r, eta) of the score
``psi(r, x; beta) = psi_c(r, beta_0 + x beta) w(x) (1, x)'`` and its
derivative in eta. Families are frozen dataclasses with no mutable state;
``resolve_family`` maps the CLI string to an instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, runtime_checkable

import numpy as np
from scipy.special import expit

from picse_match.errors import InvalidArgumentError


@runtime_checkable
class Penalty(Protocol):
    """Gradient alpha(beta) of a penalty term and its Jacobian."""

    def gradient(self, theta: np.ndarray) -> np.ndarray: ...

    def jacobian(self, theta: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class ZeroPenalty:
    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return np.zeros_like(theta, dtype=float)

    def jacobian(self, theta: np.ndarray) -> np.ndarray:
        k = theta.shape[0]
        return np.zeros((k, k))


def unit_weight(x: np.ndarray) -> np.ndarray:
    return np.ones(x.shape[0])


@dataclass(frozen=True)
class ScoreFamily:
    kind: str = "base"
    lipschitz: float = 1.0
    weight: Callable[[np.ndarray], np.ndarray] = field(default=unit_weight)
    penalty: Penalty = field(default_factory=ZeroPenalty)

    def psi_c(self, r: np.ndarray, eta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dpsi_c(self, eta: np.ndarray) -> np.ndarray:
        """Derivative in eta of the expected kernel."""
        raise NotImplementedError

    def dispersion(self, r: np.ndarray, eta: np.ndarray, n_params: int) -> float:
        return 1.0

    @property
    def one_step(self) -> bool:
        return False


@dataclass(frozen=True)
class LogisticFamily(ScoreFamily):
    kind: str = "logistic"
    # Bound on |d psi_c / d eta| = expit'(eta) <= 1/4.
    lipschitz: float = 0.25

    def psi_c(self, r: np.ndarray, eta: np.ndarray) -> np.ndarray:
        return r - expit(eta)

    def dpsi_c(self, eta: np.ndarray) -> np.ndarray:
        mu = expit(eta)
        return -mu * (1.0 - mu)


@dataclass(frozen=True)
class LinearFamily(ScoreFamily):
    kind: str = "linear"
    lipschitz: float = 1.0

    def psi_c(self, r: np.ndarray, eta: np.ndarray) -> np.ndarray:
        return r - eta

    def dpsi_c(self, eta: np.ndarray) -> np.ndarray:
        return -np.ones_like(eta, dtype=float)

    def dispersion(self, r: np.ndarray, eta: np.ndarray, n_params: int) -> float:
        resid = r - eta
        dof = max(resid.shape[0] - n_params, 1)
        return float(resid @ resid / dof)

    @property
    def one_step(self) -> bool:
        return isinstance(self.penalty, ZeroPenalty)


_FAMILIES: dict[str, type[ScoreFamily]] = {
    "logistic": LogisticFamily,
    "linear": LinearFamily,
}


def resolve_family(
    family: str | ScoreFamily,
    *,
    weight: Callable[[np.ndarray], np.ndarray] | None = None,
    penalty: Penalty | None = None,
) -> ScoreFamily:
    if isinstance(family, ScoreFamily):
        return family
    try:
        cls = _FAMILIES[family]
    except KeyError as exc:
        raise InvalidArgumentError(f"unknown family {family!r}; choose from {sorted(_FAMILIES)}") from exc
    kwargs: dict = {}
    if weight is not None:
        kwargs["weight"] = weight
    if penalty is not None:
        kwargs["penalty"] = penalty
    return cls(**kwargs)
