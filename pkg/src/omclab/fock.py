"""Exact truncated-Fock-space model of the write/read pulse pair.

Brute-force reference implementation: the pair-creation (blue) and
state-swap (red) interactions are instantaneous unitaries obtained by matrix
exponentiation of their truncated generators, detection is threshold
(non-number-resolving) after beamsplitter loss, and dark counts are
independent electronic events OR-ed with the optical click.  Everything the
fast Monte Carlo engine produces is validated against this module.

Index convention: the joint Hilbert space is optical (x) mechanical with both
modes truncated to dimension ``d``; basis state (m photons, j phonons) lives
at flat index ``m * d + j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse


class TruncationError(ValueError):
    """The requested state or interaction does not fit in the truncated space."""


class HeraldingError(ValueError):
    """Conditioning on a zero-probability detection outcome."""


TRACE_TOL = 1e-10
_THERMAL_TAIL_TOL = 1e-8


def suggested_dim(n_th: float, tail_tol: float = _THERMAL_TAIL_TOL, minimum: int = 8) -> int:
    """Smallest per-mode dimension keeping the thermal tail below tail_tol."""
    if n_th < 0:
        raise ValueError("thermal occupation must be non-negative")
    if n_th == 0:
        return minimum
    lam = n_th / (n_th + 1)
    return max(minimum, math.ceil(math.log(tail_tol) / math.log(lam)))


def thermal_weights(n_th: float, d: int) -> np.ndarray:
    """Truncated, renormalized geometric distribution with mean ~ n_th."""
    if n_th == 0:
        out = np.zeros(d)
        out[0] = 1.0
        return out
    lam = n_th / (n_th + 1)
    weights = (1 - lam) * lam ** np.arange(d)
    return weights / weights.sum()


@dataclass(frozen=True)
class TwoModeState:
    """Density operator on the truncated optical (x) mechanical space."""

    rho: np.ndarray
    d: int

    def __post_init__(self):
        dim = self.d * self.d
        if self.rho.shape != (dim, dim):
            raise ValueError(f"state: expected {dim}x{dim} density matrix")
        if abs(np.trace(self.rho).real - 1.0) > TRACE_TOL or abs(np.trace(self.rho).imag) > TRACE_TOL:
            raise ValueError("state: trace must equal 1 within 1e-10")
        if not np.allclose(self.rho, self.rho.conj().T, atol=1e-10):
            raise ValueError("state: density matrix must be Hermitian")

    def validate(self) -> None:
        """Full (slower) check including positive semidefiniteness."""
        eigs = np.linalg.eigvalsh(self.rho)
        if eigs.min() < -TRACE_TOL:
            raise ValueError(f"state: negative eigenvalue {eigs.min():.3e}")

    def _rho4(self) -> np.ndarray:
        return self.rho.reshape(self.d, self.d, self.d, self.d)

    def optical_reduced(self) -> np.ndarray:
        return np.einsum("mjkj->mk", self._rho4())

    def mechanical_reduced(self) -> np.ndarray:
        return np.einsum("mjmk->jk", self._rho4())

    def mechanical_occupation(self) -> float:
        return float(np.real(np.diag(self.mechanical_reduced()) @ np.arange(self.d)))

    def optical_occupation(self) -> float:
        return float(np.real(np.diag(self.optical_reduced()) @ np.arange(self.d)))

    def joint_number_probability(self, m: int, j: int) -> float:
        """P(m photons and j phonons)."""
        idx = m * self.d + j
        return float(self.rho[idx, idx].real)


def thermal_state(n_th: float, d: int) -> TwoModeState:
    """Optical vacuum (x) mechanical thermal state at occupation n_th.

    Raises ``TruncationError`` (with the dimension that would suffice) when
    the geometric tail beyond ``d`` exceeds 1e-8.
    """
    if d < 2:
        raise ValueError("thermal_state: d >= 2 required")
    if n_th < 0:
        raise ValueError("thermal_state: n_th must be non-negative")
    if n_th > 0:
        lam = n_th / (n_th + 1)
        tail = lam**d
        if tail > _THERMAL_TAIL_TOL:
            raise TruncationError(
                f"thermal tail {tail:.2e} beyond d={d} exceeds {_THERMAL_TAIL_TOL}; "
                f"use d >= {suggested_dim(n_th)}"
            )
    rho = np.zeros((d * d, d * d), dtype=complex)
    weights = thermal_weights(n_th, d)
    for j, w in enumerate(weights):
        rho[j, j] = w  # optical vacuum block: index m=0 -> flat index j
    return TwoModeState(rho=rho, d=d)


# --- sector-blocked unitaries -------------------------------------------------
#
# Both generators conserve a number quantity (photon-phonon difference for
# pair creation, total quanta for the beamsplitter), so the truncated
# generator is block diagonal and each block can be exponentiated on its own.
# The truncated generators stay antisymmetric, hence the assembled matrices
# are exactly unitary and trace preservation holds to machine precision.


def _tms_block(r: float, delta: int, size: int) -> np.ndarray:
    """expm of the pair-creation generator on sector j - m = delta (delta>=0)."""
    m = np.arange(size - 1)
    g = r * np.sqrt((m + 1) * (m + delta + 1))
    gen = np.diag(g, -1) - np.diag(g, 1)
    return scipy.linalg.expm(gen)


def _bs_block(theta: float, s: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """expm of the swap generator on sector m + j = s; returns (block, m indices)."""
    m_lo, m_hi = max(0, s - (d - 1)), min(s, d - 1)
    ms = np.arange(m_lo, m_hi + 1)
    g = theta * np.sqrt((ms[:-1] + 1) * (s - ms[:-1]))
    gen = np.diag(g, -1) - np.diag(g, 1)
    return scipy.linalg.expm(gen), ms


@lru_cache(maxsize=16)
def _tms_unitary(d: int, r: float) -> scipy.sparse.csr_matrix:
    rows, cols, vals = [], [], []
    for delta in range(-(d - 1), d):
        a = abs(delta)
        size = d - a
        block = _tms_block(r, a, size)
        if delta >= 0:
            idx = np.array([m * d + (m + delta) for m in range(size)])
        else:
            idx = np.array([(j + a) * d + j for j in range(size)])
        rr, cc = np.meshgrid(idx, idx, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(block.ravel())
    mat = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(d * d, d * d),
    )
    return mat.tocsr()


@lru_cache(maxsize=16)
def _bs_unitary(d: int, theta: float) -> scipy.sparse.csr_matrix:
    rows, cols, vals = [], [], []
    for s in range(2 * d - 1):
        block, ms = _bs_block(theta, s, d)
        idx = ms * d + (s - ms)
        rr, cc = np.meshgrid(idx, idx, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(block.ravel())
    mat = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(d * d, d * d),
    )
    return mat.tocsr()


def apply_two_mode_squeeze(state: TwoModeState, r: float) -> TwoModeState:
    """Pair-creation interaction exp(r (a+b+ - ab)); sinh^2(r) ~ p_s per vacuum.

    Guards against truncation overflow: sinh^2(r) * (n_mech + 1) must stay
    well below the per-mode dimension.
    """
    load = math.sinh(r) ** 2 * (state.mechanical_occupation() + 1)
    if load > state.d / 4:
        raise TruncationError(
            f"pair creation load {load:.2f} too close to truncation d={state.d}"
        )
    u = _tms_unitary(state.d, float(r))
    rho = u @ state.rho @ u.conj().T.tocsr()
    return TwoModeState(rho=np.asarray(rho), d=state.d)


def apply_beamsplitter(state: TwoModeState, theta: float) -> TwoModeState:
    """State-swap interaction exp(theta (a+b - ab+)); swap probability sin^2(theta)."""
    u = _bs_unitary(state.d, float(theta))
    rho = u @ state.rho @ u.conj().T.tocsr()
    return TwoModeState(rho=np.asarray(rho), d=state.d)


def click_probability(state: TwoModeState, eta: float) -> float:
    """Threshold click probability on the optical mode after loss eta.

    Loss is a beamsplitter of transmissivity eta in front of the detector;
    a click is any outcome with >= 1 detected photon.
    """
    if not (0.0 <= eta <= 1.0):
        raise ValueError("click: eta must lie in [0, 1]")
    diag = np.real(np.diag(state.rho)).reshape(state.d, state.d)
    no_click = (1 - eta) ** np.arange(state.d)
    return float(1.0 - no_click @ diag.sum(axis=1))


def heralded_state(state: TwoModeState, eta: float) -> np.ndarray:
    """Mechanical reduced state conditioned on a detected optical click.

    Returns the normalized d x d mechanical density matrix; raises
    ``HeraldingError`` when the click probability vanishes.
    """
    p_click = click_probability(state, eta)
    if p_click <= 0.0:
        raise HeraldingError("cannot herald on a zero-probability click")
    rho4 = state._rho4()
    no_click_w = (1 - eta) ** np.arange(state.d)
    unconditional = np.einsum("mjmk->jk", rho4)
    no_click = np.einsum("m,mjmk->jk", no_click_w, rho4)
    return (unconditional - no_click) / p_click


# --- fast exact evaluation of the two-pulse protocol --------------------------
#
# The initial state is a diagonal thermal mixture, so the protocol can be
# evaluated by evolving each Fock component |0, k> separately; the
# pair-creation unitary confines |0, k> to the sector j - m = k, which keeps
# every matrix exponential small even for large thermal occupations.


def _tms_column(r: float, k: int, d: int) -> np.ndarray:
    """Amplitudes over m = 0..d-k-1 of exp(r(a+b+ - ab)) |0 photons, k phonons>."""
    block = _tms_block(r, k, d - k)
    return block[:, 0]


def _read_click_vectors(p_read: float, eta: float, d: int) -> tuple[np.ndarray, np.ndarray]:
    """(P(no read click | j phonons), P(read click | j phonons)).

    Swap pulse followed by threshold detection at efficiency eta, evaluated by
    brute-force sector evolution; both vectors are sums of positive terms so
    neither suffers cancellation when probabilities are tiny.
    """
    theta = math.asin(math.sqrt(p_read))
    no_click = np.ones(d)
    click = np.zeros(d)
    for j in range(1, d):
        block, ms = _bs_block(theta, j, d)
        amps2 = np.abs(block[:, 0]) ** 2  # initial state is (m=0, j phonons)
        survive = (1 - eta) ** ms
        no_click[j] = float(survive @ amps2)
        click[j] = float((1 - survive) @ amps2)
    return no_click, click


@dataclass(frozen=True)
class ClickTable:
    """Joint signal-click probabilities of the write/read pulse pair."""

    p00: float  # no write click, no read click
    p01: float  # read click only
    p10: float  # write click only
    p11: float  # both

    def __post_init__(self):
        probs = (self.p00, self.p01, self.p10, self.p11)
        if any(p < -1e-12 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError("click table: probabilities must be a distribution")

    @property
    def p_write(self) -> float:
        return self.p10 + self.p11

    @property
    def p_read(self) -> float:
        return self.p01 + self.p11

    @property
    def p_read_given_write(self) -> float:
        if self.p_write == 0:
            raise HeraldingError("no write clicks to condition on")
        return self.p11 / self.p_write


def two_pulse_click_table(n_th: float, p_write: float, p_read: float, eta: float,
                          d: int | None = None) -> ClickTable:
    """Exact joint click statistics for pair-creation then state-swap pulses.

    The mechanical mode starts thermal at ``n_th``; the write and read
    interactions have pair/swap probabilities ``p_write``/``p_read``; both
    optical outputs hit a threshold detector of efficiency ``eta``.  Dark
    counts are not included here (they are independent and OR-ed on top by
    the callers).
    """
    if not (0.0 <= p_write < 1.0 and 0.0 <= p_read <= 1.0):
        raise ValueError("click table: probabilities out of range")
    if not (0.0 <= eta <= 1.0):
        raise ValueError("click table: eta must lie in [0, 1]")
    if d is None:
        d = suggested_dim(n_th) + 8
    if d > 400:
        raise TruncationError(f"required dimension d={d} is impractically large")

    weights = thermal_weights(n_th, d)
    r = math.asinh(math.sqrt(p_write))
    survive_w = (1 - eta) ** np.arange(d)

    q_no_w = np.zeros(d)   # joint: mech phonon number and no write click
    q_w = np.zeros(d)      # joint: mech phonon number and a write click
    for k in range(d):
        if weights[k] == 0.0:
            continue
        amps2 = np.abs(_tms_column(r, k, d)) ** 2
        js = np.arange(k, d)
        q_no_w[js] += weights[k] * survive_w[: d - k] * amps2
        q_w[js] += weights[k] * (1 - survive_w[: d - k]) * amps2

    # given the phonon number the read click is independent of the write
    # outcome, so the joint table factorizes over the mech distribution;
    # every entry is a sum of positive terms (no cancellation)
    r_no, r_yes = _read_click_vectors(p_read, eta, d)
    return ClickTable(p00=float(q_no_w @ r_no), p01=float(q_no_w @ r_yes),
                      p10=float(q_w @ r_no), p11=float(q_w @ r_yes))


def single_pulse_click_probability(side: str, n_th: float, p_s: float, eta: float,
                                   d: int | None = None) -> float:
    """Exact threshold click probability of one pulse on a thermal mode."""
    if d is None:
        d = suggested_dim(n_th) + 8
    if side == "blue":
        table = two_pulse_click_table(n_th, p_s, 0.0, eta, d=d)
        return table.p_write
    if side == "red":
        weights = thermal_weights(n_th, d)
        _, r_yes = _read_click_vectors(p_s, eta, d)
        return float(weights @ r_yes)
    raise ValueError(f"unknown side {side!r}")


def oracle_g2(n_th: float, p_write: float, p_read: float, eta_det: float,
              dark_per_window: float | tuple[float, float] = 0.0,
              d: int | None = None) -> float:
    """Exact same-sequence photon-photon correlation of the two-pulse protocol.

    g2 = P(write and read click) / (P(write click) * P(read click)), with
    dark counts entering each detection window as independent Bernoulli
    events (``dark_per_window`` may be one probability for both windows or a
    (write, read) pair).
    """
    if isinstance(dark_per_window, tuple):
        q_w, q_r = dark_per_window
    else:
        q_w = q_r = float(dark_per_window)
    if not (0.0 <= q_w < 1.0 and 0.0 <= q_r < 1.0):
        raise ValueError("g2: dark probabilities must lie in [0, 1)")

    table = two_pulse_click_table(n_th, p_write, p_read, eta_det, d=d)
    p_w = 1.0 - (1.0 - table.p_write) * (1.0 - q_w)
    p_r = 1.0 - (1.0 - table.p_read) * (1.0 - q_r)
    if p_w == 0.0 or p_r == 0.0:
        raise HeraldingError("g2 undefined: a marginal click probability is zero")
    p_wr = (table.p11
            + table.p10 * q_r
            + table.p01 * q_w
            + table.p00 * q_w * q_r)
    return p_wr / (p_w * p_r)
