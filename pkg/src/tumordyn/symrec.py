"""Sparse recovery of closed-form dynamics from a trained model.

The learned derivative is sampled along the solved trajectory, mapped back
to physical units with the affine chain rule, and regressed onto four
growth-law basis functions

    phi1(V) = V            phi2(V) = V * ln(K / V)
    phi3(V) = V * (1 - V/K)   phi4(V) = V^2

with an L1 penalty solved by FISTA over internally rescaled columns. Note
phi3 = phi1 - phi4 / K exactly, so the design matrix has rank 3 and the
penalty (not least squares alone) is what selects among aliased supports.
Basis indices are 1-based throughout, matching the phi numbering.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataio import NormalizationMap
from .models import DynamicsModel, rhs, solve
from .odeint import eval_at

__all__ = [
    "BasisSet",
    "SparseFit",
    "SparseRegressionError",
    "sample_physical_derivatives",
    "build_design_matrix",
    "sparse_regress",
    "format_expression",
    "recover",
    "write_fit_csv",
]


@dataclass(frozen=True)
class BasisSet:
    """The four candidate growth terms, tied to one carrying capacity K."""

    K: float

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError(f"carrying capacity must be positive, got {self.K}")

    @property
    def size(self) -> int:
        return 4

    @property
    def members(self):
        """The basis callables in order: V, V ln(K/V), V(1 - V/K), V^2."""
        K = self.K
        return (
            lambda V: V,
            lambda V: V * np.log(K / V),
            lambda V: V * (1.0 - V / K),
            lambda V: V * V,
        )

    def evaluate(self, V: np.ndarray) -> np.ndarray:
        """Rows of the design matrix; requires V > 0 for the log term."""
        V = np.asarray(V, dtype=float)
        if np.any(V <= 0):
            raise ValueError(f"basis evaluation requires V > 0, got min {V.min()}")
        return np.column_stack([V, V * np.log(self.K / V), V * (1.0 - V / self.K), V * V])

    def term_strings(self) -> list[str]:
        K = self.K
        k_str = str(int(K)) if float(K).is_integer() else repr(float(K))
        return ["V", f"V*log({k_str}/V)", f"V*(1 - V/{k_str})", "V^2"]


@dataclass(frozen=True)
class SparseFit:
    """L1-regularized coefficients; inactive entries are exactly zero.

    active_set holds 1-based basis indices (phi1..phi4) whose coefficient
    survived thresholding.
    """

    beta: np.ndarray
    active_set: tuple[int, ...]
    residual_norm: float
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "active_set", tuple(int(i) for i in self.active_set))


class SparseRegressionError(RuntimeError):
    """FISTA failed to converge; carries the residual-norm history."""

    def __init__(self, message: str, residual_history=()):
        self.residual_history = tuple(residual_history)
        super().__init__(message)


def sample_physical_derivatives(
    model: DynamicsModel,
    norm_map: NormalizationMap,
    n: int,
    v0: float,
    *,
    solver_steps: int = 100,
) -> list[tuple[float, float]]:
    """(V mm^3, dV/dt mm^3/day) pairs along the model's solved trajectory.

    The model is solved over the normalized span from v0; at n uniform tau
    points the state and its model derivative are denormalized with
    dV/dt = (v_scale / t_scale) * dv/dtau and V = v_min + v * v_scale.
    """
    if n < 10:
        raise ValueError(f"need at least 10 samples for a stable regression, got {n}")
    trajectory = solve(model, v0, (0.0, 1.0), solver_steps)
    scale = norm_map.v_scale / norm_map.t_scale
    samples = []
    for tau in np.linspace(0.0, 1.0, int(n)):
        v = eval_at(trajectory, float(tau))
        dv = rhs(model, v, float(tau))
        samples.append((float(norm_map.denormalize_v(v)), scale * float(dv)))
    return samples


def build_design_matrix(samples, basis: BasisSet) -> tuple[np.ndarray, np.ndarray]:
    """Stack basis rows Phi[i, j] = phi_j(V_i) and targets y[i] = (dV/dt)_i."""
    V = np.array([s[0] for s in samples], dtype=float)
    y = np.array([s[1] for s in samples], dtype=float)
    return basis.evaluate(V), y


def default_lambda(Phi: np.ndarray, y: np.ndarray) -> float:
    """1e-3 * ||Phi_scaled^T y||_inf / n with unit-norm columns."""
    norms = np.linalg.norm(Phi, axis=0)
    norms[norms == 0] = 1.0
    return 1e-3 * float(np.max(np.abs((Phi / norms).T @ y))) / Phi.shape[0]


def sparse_regress(
    Phi: np.ndarray,
    y: np.ndarray,
    lam: float | None = None,
    *,
    tol: float = 1e-10,
    max_iter: int = 50000,
    threshold_rel: float = 1e-3,
) -> SparseFit:
    """Minimize ||Phi b - y||^2 + lam * ||b||_1 by FISTA.

    Columns are rescaled to unit norm and the targets to unit magnitude
    internally (so the iterate-change tolerance is scale-free), then the
    solution is mapped back; coefficients below threshold_rel of the
    largest are zeroed exactly. Momentum uses gradient-based adaptive
    restart, which keeps convergence linear on the near-aliased supports
    this basis produces. lam of None picks `default_lambda`. With lam = 0
    the iteration reduces to accelerated gradient descent started at zero,
    which lands on the least-squares solution of minimum norm in the
    rescaled coordinates (the design matrix is always rank-deficient, see
    the module docstring).
    """
    Phi = np.asarray(Phi, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = Phi.shape
    if n < p:
        raise ValueError(f"need at least {p} samples, got {n}")
    if not np.all(np.isfinite(Phi)) or not np.all(np.isfinite(y)):
        raise ValueError("design matrix and targets must be finite")
    if lam is None:
        lam = default_lambda(Phi, y)
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")

    norms = np.linalg.norm(Phi, axis=0)
    norms[norms == 0] = 1.0
    X = Phi / norms
    y_scale = float(np.max(np.abs(y))) or 1.0
    ys = y / y_scale
    lam_s = lam / y_scale
    gram = X.T @ X
    Xty = X.T @ ys
    L = 2.0 * float(np.linalg.eigvalsh(gram)[-1])  # Lipschitz constant of the gradient

    b = np.zeros(p)
    z = b.copy()
    t_momentum = 1.0
    residual_history = []
    converged = False
    for _ in range(max_iter):
        g = 2.0 * (gram @ z - Xty)
        b_new = z - g / L
        if lam_s > 0:
            shift = lam_s / L
            b_new = np.sign(b_new) * np.maximum(np.abs(b_new) - shift, 0.0)
        if np.dot(z - b_new, b_new - b) > 0:
            # adaptive restart: momentum points uphill, drop it
            t_momentum = 1.0
            z = b_new.copy()
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_momentum * t_momentum))
            z = b_new + ((t_momentum - 1.0) / t_new) * (b_new - b)
            t_momentum = t_new
        residual_history.append(float(np.linalg.norm(X @ b_new - ys)))
        if np.max(np.abs(b_new - b)) <= tol:
            b = b_new
            converged = True
            break
        b = b_new
    if not converged:
        raise SparseRegressionError(
            f"FISTA did not converge within {max_iter} iterations",
            residual_history=residual_history,
        )

    beta = b * y_scale / norms
    peak = np.max(np.abs(beta))
    if peak > 0:
        beta[np.abs(beta) < threshold_rel * peak] = 0.0
    active = tuple(int(i) + 1 for i in np.nonzero(beta)[0])
    residual = float(np.linalg.norm(Phi @ beta - y))
    return SparseFit(beta=beta, active_set=active, residual_norm=residual, lam=float(lam))


def _significant(x: float, digits: int) -> str:
    """Positional rendering of |x| at `digits` significant figures,
    keeping trailing zeros (2 -> '2.00' at 3 figures)."""
    if x == 0:
        return "0." + "0" * (digits - 1) if digits > 1 else "0"
    import math

    magnitude = math.floor(math.log10(abs(x)))
    decimals = digits - 1 - magnitude
    rounded = round(abs(x), decimals)
    if rounded != 0:  # rounding can bump the magnitude (9.99 -> 10.0)
        magnitude = math.floor(math.log10(rounded))
        decimals = digits - 1 - magnitude
    return f"{rounded:.{max(decimals, 0)}f}"


def format_expression(fit: SparseFit, basis: BasisSet, sig_figs: int = 3) -> str:
    """Render the active terms as `dV/dt ≈ ...` in basis order."""
    if sig_figs < 1:
        raise ValueError(f"sig_figs must be >= 1, got {sig_figs}")
    terms = basis.term_strings()
    parts = []
    for i in fit.active_set:
        c = fit.beta[i - 1]
        c_str = _significant(c, sig_figs)
        if not parts:
            parts.append(("-" if c < 0 else "") + f"{c_str}*{terms[i - 1]}")
        else:
            parts.append(("- " if c < 0 else "+ ") + f"{c_str}*{terms[i - 1]}")
    if not parts:
        return "dV/dt ≈ 0"
    return "dV/dt ≈ " + " ".join(parts)


def recover(
    model: DynamicsModel,
    norm_map: NormalizationMap,
    basis: BasisSet,
    v0: float,
    *,
    n_samples: int = 101,
    lam: float | None = None,
    sig_figs: int = 3,
    solver_steps: int = 100,
) -> tuple[SparseFit, str]:
    """Sample, regress, and format in one step; returns (fit, expression)."""
    samples = sample_physical_derivatives(model, norm_map, n_samples, v0, solver_steps=solver_steps)
    Phi, y = build_design_matrix(samples, basis)
    fit = sparse_regress(Phi, y, lam)
    return fit, format_expression(fit, basis, sig_figs)


def write_fit_csv(fit: SparseFit, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["basis_index", "coefficient"])
        for i, c in enumerate(fit.beta, start=1):
            writer.writerow([i, repr(float(c))])
