"""
Rotation steps exp(U_i dt) of the reduced real system with their exact derivatives.

With A_i = i U_i = Q diag(w) Q^H, the step is Q diag(e^{-i w dt}) Q^H and its derivative along a real
antisymmetric dU is dt Q (Phi o Q^H dU Q) Q^H, where Phi_ab is the divided difference of e^{-i w dt} over
(w_a, w_b) divided by -i dt.
"""
from typing import Sequence

import numpy as np

from ..utils import Edge


def assemble_antisymmetric(U: np.ndarray, edges: Sequence[Edge], n: int) -> np.ndarray:
    mats = np.zeros((U.shape[0], n, n))
    for e, (j, k) in enumerate(edges):
        mats[:, j, k] = U[:, e]
        mats[:, k, j] = -U[:, e]
    return mats


class StepCache:
    """Eigendecompositions, steps and divided differences of a real control, shared by both sweeps."""

    def __init__(self, U: np.ndarray, edges: Sequence[Edge], n: int, dt: float):
        self.edges = list(edges)
        self.n = n
        self.dt = dt
        w, q = np.linalg.eigh(1j * assemble_antisymmetric(U, self.edges, n))
        self.q = q
        phases = np.exp(-1j * w * dt)
        self.steps = ((q * phases[:, None, :]) @ np.conj(np.swapaxes(q, -1, -2))).real
        gap = w[:, :, None] - w[:, None, :]
        mean = w[:, :, None] + w[:, None, :]
        self.phi = np.exp(-0.5j * mean * dt) * np.sinc(gap * dt / (2 * np.pi))

    @property
    def N(self) -> int:
        return self.steps.shape[0]

    def forward(self, rho0: np.ndarray) -> np.ndarray:
        states = np.empty((self.N + 1, self.n))
        states[0] = rho0
        for i in range(self.N):
            states[i + 1] = self.steps[i] @ states[i]
        return states

    def backward(self, terminal: np.ndarray) -> np.ndarray:
        """Costates lam_i = R_i^T lam_{i+1} from lam_N = terminal."""
        lam = np.empty((self.N + 1, self.n))
        lam[-1] = terminal
        for i in range(self.N - 1, -1, -1):
            lam[i] = self.steps[i].T @ lam[i + 1]
        return lam

    def pullback(self, lam_next: np.ndarray, states: np.ndarray) -> np.ndarray:
        """
        d/dU_{i,e} of lam_{i+1} . R_i rho_i for every step and edge, shape (N, edges).

        `lam_next` holds lam_1..lam_N and `states` rho_0..rho_{N-1}.
        """
        q = self.q
        a = np.einsum("ica,ic->ia", q, lam_next)
        b = np.einsum("idb,id->ib", np.conj(q), states)
        kernel = a[:, :, None] * self.phi * b[:, None, :]
        G = np.conj(q) @ kernel @ np.swapaxes(q, -1, -2)
        out = np.empty((self.N, len(self.edges)))
        for e, (j, k) in enumerate(self.edges):
            out[:, e] = self.dt * np.real(G[:, j, k] - G[:, k, j])
        return out

    def switching(self, covectors: np.ndarray, states: np.ndarray) -> np.ndarray:
        """
        Step averages of <P, E_e rho> for covectors P at the nodes, where E_e is the generator of edge e.
        """
        return self.pullback(covectors[1:], states[:-1]) / self.dt
