"""Mean-square stability certificates via coupled Lyapunov equations.

A gain pair ``(Theta_1, Theta_2)`` stabilises the two coupled
subsystems exactly when positive-definite matrices ``Sigma_k(i)``
exist making the coupled Lyapunov expression

    L_k(i) = Lambda[Sigma_k](i)
             + (A_k + B_k Theta_k)' Sigma_k + Sigma_k (A_k + B_k Theta_k)
             + (C_k + D_k Theta_k)' Sigma_1 (C_k + D_k Theta_k)

negative definite at every regime (all blocks evaluated at regime
``i``; the coupling operator mixes regimes).  Instead of a semidefinite
program, this module solves the linear equality ``L_k = -c I`` by dense
vectorisation and checks positive definiteness of the solution: the
``k=1`` equation is self-contained (its quadratic term involves
``Sigma_1`` itself, still linearly); the ``k=2`` equation then uses the
solved ``Sigma_1`` as data.

The certificate's decay rate is ``delta_star = c / max eig(Sigma)``,
the largest rate for which ``L_k <= -delta_star Sigma_k`` follows from
``L_k = -c I``.  It is deliberately conservative; empirical decay rates
routinely exceed it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .markov import lambda_op_stack
from .model import DecomposedModel

PD_THRESHOLD = 1e-10
RESIDUAL_TOL = 1e-8


def _t(a):
    return np.swapaxes(a, -1, -2)


@dataclass(frozen=True)
class LyapunovCertificate:
    """Positive-definite solution of the coupled Lyapunov equalities.

    ``sigma1``/``sigma2`` have shape ``(m0, n, n)``; ``delta_star`` is
    the certified mean-square decay rate and ``rhs_scale`` the constant
    ``c`` in the equality ``L_k = -c I`` the solution satisfies.
    """

    sigma1: np.ndarray
    sigma2: np.ndarray
    delta_star: float
    rhs_scale: float = 1.0

    def sigma(self, k: int) -> np.ndarray:
        return self.sigma1 if k == 0 else self.sigma2


@dataclass(frozen=True)
class Infeasible:
    """No certificate: the gain pair is not a dissipative strategy."""

    reason: str


def _closed_loop(model: DecomposedModel, theta1, theta2):
    theta1 = np.asarray(theta1, dtype=float)
    theta2 = np.asarray(theta2, dtype=float)
    a1 = model.A1 + model.B1 @ theta1
    a2 = model.A2 + model.B2 @ theta2
    c1 = model.C1 + model.D1 @ theta1
    c2 = model.C2 + model.D2 @ theta2
    return a1, a2, c1, c2


def _solve_block_linear(rates, abar, quad, rhs):
    """Solve ``Lambda[X](i) + abar_i' X_i + X_i abar_i + quad_i(X) = rhs_i``.

    ``quad`` maps regime index to an ``(n^2, n^2)`` matrix acting on
    ``vec(X_i)`` (column-major), or is None.  Returns ``(m0, n, n)``
    or None when the dense system is singular.
    """
    m0, n, _ = abar.shape
    nn = n * n
    eye = np.eye(nn)
    M = np.zeros((m0 * nn, m0 * nn))
    for i in range(m0):
        diag = np.kron(np.eye(n), abar[i].T) + np.kron(abar[i].T, np.eye(n))
        if quad is not None:
            diag = diag + quad[i]
        for j in range(m0):
            block = rates[i, j] * eye
            if i == j:
                block = block + diag
            M[i * nn:(i + 1) * nn, j * nn:(j + 1) * nn] = block
    b = np.concatenate([rhs[i].flatten(order="F") for i in range(m0)])
    try:
        s = np.linalg.solve(M, b)
    except np.linalg.LinAlgError:
        return None
    X = np.stack([s[i * nn:(i + 1) * nn].reshape(n, n, order="F") for i in range(m0)])
    return (X + _t(X)) / 2.0


def solve_coupled_lyapunov(
    model: DecomposedModel, theta1, theta2, rhs_scale: float = 1.0
):
    """Solve the coupled Lyapunov equalities with right-hand side ``-c I``.

    Returns a :class:`LyapunovCertificate` when both solutions are
    positive definite, otherwise an :class:`Infeasible` describing why
    (including a singular linear system, which signals non-uniqueness).
    Scaling ``rhs_scale`` by ``c > 0`` scales the solutions by ``c`` and
    leaves ``delta_star`` unchanged.
    """
    if rhs_scale <= 0.0:
        raise ValueError("rhs_scale must be positive")
    n, m0 = model.n, model.m0
    rates = model.generator.rates
    a1, a2, c1, c2 = _closed_loop(model, theta1, theta2)
    rhs = np.broadcast_to(-rhs_scale * np.eye(n), (m0, n, n))

    quad1 = [np.kron(c1[i].T, c1[i].T) for i in range(m0)]
    sigma1 = _solve_block_linear(rates, a1, quad1, rhs)
    if sigma1 is None:
        return Infeasible(reason="singular linear system for sigma1")
    eig1 = np.linalg.eigvalsh(sigma1)[:, 0]
    if np.any(eig1 < PD_THRESHOLD):
        i = int(np.argmin(eig1))
        return Infeasible(
            reason=f"sigma1 not positive definite (min eigenvalue {eig1[i]:.3e} "
            f"at regime {i})"
        )

    rhs2 = rhs - _t(c2) @ sigma1 @ c2
    sigma2 = _solve_block_linear(rates, a2, None, rhs2)
    if sigma2 is None:
        return Infeasible(reason="singular linear system for sigma2")
    eig2 = np.linalg.eigvalsh(sigma2)[:, 0]
    if np.any(eig2 < PD_THRESHOLD):
        i = int(np.argmin(eig2))
        return Infeasible(
            reason=f"sigma2 not positive definite (min eigenvalue {eig2[i]:.3e} "
            f"at regime {i})"
        )

    lam_max = max(
        float(np.linalg.eigvalsh(sigma1)[:, -1].max()),
        float(np.linalg.eigvalsh(sigma2)[:, -1].max()),
    )
    return LyapunovCertificate(
        sigma1=sigma1, sigma2=sigma2,
        delta_star=rhs_scale / lam_max, rhs_scale=rhs_scale,
    )


def decay_rate(cert: LyapunovCertificate) -> float:
    """Certified decay rate ``c / max_{k,i} eig_max(Sigma_k(i))``."""
    lam_max = max(
        float(np.linalg.eigvalsh(cert.sigma1)[:, -1].max()),
        float(np.linalg.eigvalsh(cert.sigma2)[:, -1].max()),
    )
    return cert.rhs_scale / lam_max


def dissipation_residual(
    model: DecomposedModel, theta1, theta2, cert: LyapunovCertificate
) -> np.ndarray:
    """Largest eigenvalue of ``L_k(i) + delta_star Sigma_k(i)`` per (k, i).

    Nonpositive entries (within tolerance) confirm the certificate.
    """
    a1, a2, c1, c2 = _closed_loop(model, theta1, theta2)
    out = np.empty((2, model.m0))
    for k, (abar, cbar, sk) in enumerate(
        ((a1, c1, cert.sigma1), (a2, c2, cert.sigma2))
    ):
        L = (
            lambda_op_stack(model.generator, sk)
            + _t(abar) @ sk
            + sk @ abar
            + _t(cbar) @ cert.sigma1 @ cbar
            + cert.delta_star * sk
        )
        L = (L + _t(L)) / 2.0
        out[k] = np.linalg.eigvalsh(L)[:, -1]
    return out


def check_stabilizer(model: DecomposedModel, theta1, theta2):
    """Whether the gain pair is a stabiliser; returns (bool, certificate or None)."""
    result = solve_coupled_lyapunov(model, theta1, theta2)
    if isinstance(result, LyapunovCertificate):
        return True, result
    return False, None
