"""Matched-filter ODDM demodulation, the delay-Doppler channel matrix and symbol detectors."""

from __future__ import annotations

import csv
import functools
import itertools
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .channel import EsddChannel
from .constellation import Constellation
from .core import GridParams, InvalidParameterError, SampledSignal
from .pulses import Ddop
from .waveforms import signed_index

__all__ = [
    "demodulate",
    "DdChannelMatrix",
    "build_H",
    "MpConfig",
    "DetectionResult",
    "detect",
    "ML_BIT_BUDGET",
]

log = logging.getLogger(__name__)

ML_BIT_BUDGET = 20
_VAR_FLOOR = 1e-12
_CHUNK_ELEMS = 4_000_000


def demodulate(y: SampledSignal, pulse: Ddop, grid: GridParams | None = None, cp: float | None = None) -> np.ndarray:
    """Matched-filter ODDM demodulation into the ``M x N`` delay-Doppler grid.

    ``Y[m, n] = <y, u(t - m T0/M) exp(j 2 pi n (t - m T0/M) / (N T0))>`` with
    the ``D = 0`` pulse ``u`` and signed ``n`` stored at column ``n mod N``.

    ``y`` is located by its absolute time stamps, so any CP in front of the
    frame is skipped implicitly; ``cp`` is only validated. ``y`` must cover
    ``[-Ta/2, (M-1) T0/M + (N-1) T0 + Ta/2]``.
    """
    grid = grid or pulse.grid
    if grid != pulse.grid:
        raise InvalidParameterError("pulse grid does not match the requested grid")
    if cp is not None and cp < 0:
        raise InvalidParameterError("cp must be non-negative")
    if abs(y.rate - pulse.rate) > 1e-9 * pulse.rate:
        raise InvalidParameterError("received signal rate does not match the pulse rate")
    M, N = grid.M, grid.N
    k, Mk = pulse.rrc.oversample, pulse.samples_per_T0
    Qk = pulse.rrc.Q * k
    sub = pulse.subpulse.samples.real
    s = np.arange(sub.size) - Qk
    # index of every (q, s) tap of row m = 0, relative to y's first sample
    base = np.arange(N)[:, None] * Mk + s[None, :] - y.start_index
    if base.min() < 0 or (M - 1) * k + base.max() >= len(y):
        raise InvalidParameterError(
            "received signal does not cover the frame span "
            f"[{-Qk / y.rate!r}, {((M - 1) * k + (N - 1) * Mk + Qk) / y.rate!r}] s"
        )
    ns = signed_index(N)
    W = np.exp(-2j * np.pi * np.outer(np.arange(N), ns) / N)  # (q, n)
    Phi = np.exp(-2j * np.pi * np.outer(s, ns) / (N * Mk)) * sub[:, None]  # (s, n)
    Y = np.empty((M, N), dtype=complex)
    step = max(1, _CHUNK_ELEMS // base.size)
    for m0 in range(0, M, step):
        rows = np.arange(m0, min(M, m0 + step))
        G = y.samples[rows[:, None, None] * k + base[None]]
        Y[m0 : m0 + step] = np.einsum("mqs,qn,sn->mn", G, W, Phi, optimize=True)
    return Y / y.rate


@dataclass(frozen=True, eq=False)
class DdChannelMatrix:
    """Sparse ``MN x MN`` delay-Doppler channel matrix.

    Vectorisation is row-major over ``(m, n)``: entry ``m N + n``. Block row
    ``m`` has one ``N x N`` block per delay bin ``l`` at block column
    ``[m - l]_M``::

        H_l^m = sum_k h_{l,k} exp(j 2 pi k (m - l) / (MN)) C^k  (x D when m < l)

    where ``C`` is the cyclic down-shift and ``D = diag(exp(-j 2 pi n / N))``
    acts on the transmitted column index.
    """

    grid: GridParams
    l: np.ndarray
    k: np.ndarray
    gain: np.ndarray

    @property
    def delays(self) -> np.ndarray:
        return np.unique(self.l)

    def is_wrap(self, m: int, l: int) -> bool:
        """Whether block ``(m, l)`` carries the phase matrix ``D``."""
        return m < l

    def block(self, m: int, l: int) -> np.ndarray:
        """Dense ``N x N`` block ``H_l^m`` (zero if no path has delay bin ``l``)."""
        M, N = self.grid.M, self.grid.N
        B = np.zeros((N, N), dtype=complex)
        n = np.arange(N)
        for kk, h in zip(self.k[self.l == l], self.gain[self.l == l]):
            ph = np.exp(2j * np.pi * kk * (m - l) / (M * N))
            col = (n - kk) % N
            v = h * ph * (np.exp(-2j * np.pi * col / N) if m < l else 1.0)
            B[n, col] += v
        return B

    def _entries(self):
        M, N = self.grid.M, self.grid.N
        m = np.arange(M)[:, None, None]
        n = np.arange(N)[None, :, None]
        l, k, h = self.l[None, None, :], self.k[None, None, :], self.gain[None, None, :]
        col_n = (n - k) % N
        col_m = (m - l) % M
        v = h * np.exp(2j * np.pi * k * (m - l) / (M * N))
        v = np.where(m < l, v * np.exp(-2j * np.pi * col_n / N), v)
        rows = np.broadcast_to(m * N + n, v.shape)
        cols = col_m * N + col_n
        return rows.ravel(), cols.ravel(), v.ravel()

    def matvec(self, x) -> np.ndarray:
        """``H vec(X)`` for an ``M x N`` matrix or length-``MN`` vector; same shape out."""
        X = np.asarray(x, dtype=complex)
        shape = X.shape
        M, N = self.grid.M, self.grid.N
        X = X.reshape(M, N)
        Y = np.zeros((M, N), dtype=complex)
        m = np.arange(M)[:, None]
        n = np.arange(N)[None, :]
        for l, k, h in zip(self.l, self.k, self.gain):
            cn = (n - k) % N
            v = h * np.exp(2j * np.pi * k * (m - l) / (M * N)) * X[(m - l) % M, cn]
            wrap = (m < l)[:, 0]
            v[wrap] *= np.exp(-2j * np.pi * cn / N)
            Y += v
        return Y.reshape(shape)

    def to_sparse(self) -> sp.csr_matrix:
        r, c, v = self._entries()
        n = self.grid.size
        return sp.csr_matrix((v, (r, c)), shape=(n, n))

    def to_dense(self) -> np.ndarray:
        if self.grid.size > 4096:
            raise InvalidParameterError(f"dense export limited to MN <= 4096, got {self.grid.size}")
        return self.to_sparse().toarray()

    def to_csv(self, path) -> None:
        """Dense export as columns ``row, col, re, im``."""
        H = self.to_dense()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "re", "im"])
            for (r, c), v in np.ndenumerate(H):
                w.writerow([r, c, repr(float(v.real)), repr(float(v.imag))])


def build_H(chan: EsddChannel) -> DdChannelMatrix:
    """Channel matrix for an on-grid channel (``L <= M``, ``K <= N/2``)."""
    if chan.L > chan.grid.M:
        raise InvalidParameterError(f"L = {chan.L} exceeds M = {chan.grid.M}")
    return DdChannelMatrix(chan.grid, chan.l, chan.k, chan.gain)


# ---------------------------------------------------------------- detection


@dataclass(frozen=True)
class MpConfig:
    """Message-passing settings: iteration cap, damping weight on new messages, stop tolerance."""

    iters: int = 30
    damping: float = 0.6
    tol: float = 1e-4

    def __post_init__(self):
        if self.iters < 1:
            raise InvalidParameterError("sim.mp.iters must be >= 1")
        if not 0 < self.damping <= 1:
            raise InvalidParameterError("sim.mp.damping must lie in (0, 1]")
        if self.tol < 0:
            raise InvalidParameterError("sim.mp.tol must be >= 0")


@dataclass(frozen=True, eq=False)
class DetectionResult:
    """Hard decisions (``M x N`` constellation points) plus MP bookkeeping."""

    symbols: np.ndarray
    iterations: int = 0
    converged: bool = True


@functools.lru_cache(maxsize=8)
def _candidates(q: int, t: int) -> np.ndarray:
    out = np.array(list(itertools.product(range(q), repeat=t)), dtype=np.intp).reshape(-1, t)
    out.setflags(write=False)
    return out


def _ml(y, H: np.ndarray, c: Constellation, shape) -> np.ndarray:
    n = H.shape[1]
    best, best_d = None, np.inf
    pts = c.points
    # enumerate the first n - t symbols in chunks, last t vectorised
    t = min(n, 8)
    tail = _candidates(pts.size, t)
    Ht = H[:, n - t :] @ pts[tail].T  # (rows, |C|^t)
    heads = itertools.product(range(pts.size), repeat=n - t)
    for head in heads:
        head = np.asarray(head, dtype=int)
        r = y - H[:, : n - t] @ pts[head] if head.size else y.copy()
        d = np.sum(np.abs(r[:, None] - Ht) ** 2, axis=0)
        i = int(np.argmin(d))
        if d[i] < best_d:
            best_d = d[i]
            best = np.concatenate([head, tail[i]])
    return pts[best].reshape(shape)


def _mmse(y, H: sp.csr_matrix, noise_var: float) -> np.ndarray:
    Hh = H.conj().T.tocsr()
    A = (Hh @ H + max(noise_var, _VAR_FLOOR) * sp.identity(H.shape[1], format="csr")).tocsc()
    return spla.spsolve(A, Hh @ y)


def _mp(y, H: sp.csr_matrix, c: Constellation, noise_var: float, cfg: MpConfig):
    coo = H.tocoo()
    keep = coo.data != 0
    rows, cols, hv = coo.row[keep], coo.col[keep], coo.data[keep]
    n = H.shape[1]
    pts = c.points
    Q = pts.size
    E = rows.size
    p = np.full((E, Q), 1.0 / Q)
    N0 = max(noise_var, 0.0)
    converged = False
    it = 0
    total = np.zeros((n, Q))
    for it in range(1, cfg.iters + 1):
        mean = p @ pts
        var = np.maximum(p @ np.abs(pts) ** 2 - np.abs(mean) ** 2, 0.0)
        hm = hv * mean
        hvv = np.abs(hv) ** 2 * var
        S = np.bincount(rows, hm.real, y.size) + 1j * np.bincount(rows, hm.imag, y.size)
        V = np.bincount(rows, hvv, y.size)
        mu = S[rows] - hm
        sig = np.maximum(V[rows] - hvv + N0, _VAR_FLOOR)
        ll = -np.abs((y[rows] - mu)[:, None] - hv[:, None] * pts[None, :]) ** 2 / sig[:, None]
        total = np.zeros((n, Q))
        for q in range(Q):
            total[:, q] = np.bincount(cols, ll[:, q], n)
        ext = total[cols] - ll
        ext -= ext.max(axis=1, keepdims=True)
        pn = np.exp(ext)
        pn /= pn.sum(axis=1, keepdims=True)
        pn = cfg.damping * pn + (1 - cfg.damping) * p
        delta = np.max(np.abs(pn - p))
        p = pn
        if delta < cfg.tol:
            converged = True
            break
    return pts[np.argmax(total, axis=1)], it, converged


def detect(
    Y,
    H: DdChannelMatrix,
    constellation: Constellation,
    noise_var: float,
    strategy: str = "MP",
    mp_cfg: MpConfig | None = None,
) -> DetectionResult:
    """Detect the transmitted frame from ``Y = H x + w``.

    Parameters
    ----------
    strategy : {"ML", "MMSE", "MP"}
        ``ML`` searches every candidate frame and is refused above
        ``ML_BIT_BUDGET`` bits per frame. ``MMSE`` solves the regularised
        normal equations (noise variance floored at 1e-12) and slices. ``MP``
        runs Gaussian-approximation message passing on the factor graph of
        ``H``'s nonzeros with a flooding schedule.
    """
    M, N = H.grid.M, H.grid.N
    y = np.asarray(Y, dtype=complex).reshape(-1)
    if y.size != M * N:
        raise InvalidParameterError(f"Y has {y.size} entries, grid needs {M * N}")
    if noise_var < 0:
        raise InvalidParameterError("noise_var must be >= 0")
    strategy = strategy.upper()
    if strategy == "ML":
        bits = M * N * constellation.bits_per_symbol
        if bits > ML_BIT_BUDGET:
            raise InvalidParameterError(
                f"ML search over {bits} bits exceeds the budget of {ML_BIT_BUDGET} bits"
            )
        return DetectionResult(_ml(y, H.to_dense(), constellation, (M, N)))
    if strategy == "MMSE":
        x = _mmse(y, H.to_sparse(), noise_var)
        if not np.all(np.isfinite(x)):
            return DetectionResult(np.full((M, N), np.nan + 0j), 0, False)
        return DetectionResult(constellation.slice(x).reshape(M, N))
    if strategy == "MP":
        x, it, ok = _mp(y, H.to_sparse(), constellation, noise_var, mp_cfg or MpConfig())
        if not ok:
            log.debug("message passing stopped after %d iterations without converging", it)
        return DetectionResult(x.reshape(M, N), it, ok)
    raise InvalidParameterError(f"sim.detector must be ML, MMSE or MP, got {strategy!r}")
