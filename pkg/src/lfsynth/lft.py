"""Linear fractional operators and the structured controller block.

The controller is stored as one static matrix ``k`` with the block layout

    [[a_k,  b_w,  b_u ],
     [c_z,  d_zw, d_zu],
     [c_y,  d_yw, d_yu]]

(rows n_k + n_delta + n_u, columns n_k + n_delta + n_y) together with a
per-entry mask that marks every entry as free, frozen or structurally zero.
Closing the first row/column block through an integrator bank gives the
controller dynamics; closing the second through ``rho * I`` instantiates the
parameter dependence.  ``n_delta = 0`` collapses everything to a classical
non-parametric controller.
"""

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, DomainError, IllPosedLFTError, ParseError
from .matops import as_matrix
from .statespace import PartitionedSystem, StateSpace

MASK_ZERO = 0
MASK_FREE = 1
MASK_FROZEN = 2

# Condition bound on algebraic-loop matrices past which an LFT is ill posed.
LFT_COND_LIMIT = 1e12


@dataclass(frozen=True)
class DeltaSpec:
    """Repeated-scalar parameter block ``value * I_{n_delta}``."""

    n_delta: int
    value: float

    def __post_init__(self):
        if self.n_delta < 0:
            raise DimensionError("n_delta must be nonnegative")
        if not np.isfinite(self.value):
            raise DomainError("delta value must be finite")

    def matrix(self):
        return self.value * np.eye(self.n_delta)


@dataclass(frozen=True)
class ControllerBlock:
    """Static decision matrix of a parametric controller plus its sparsity mask."""

    n_k: int
    n_delta: int
    n_u: int
    n_y: int
    k: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        if min(self.n_k, self.n_delta, self.n_u, self.n_y) < 0:
            raise DimensionError("block dimensions must be nonnegative")
        shape = (self.n_k + self.n_delta + self.n_u, self.n_k + self.n_delta + self.n_y)
        k = as_matrix(self.k, "k")
        if k.size == 0:
            k = k.reshape(shape)
        if k.shape != shape:
            raise DimensionError(f"k has shape {k.shape}, expected {shape}")
        mask = np.asarray(self.mask, dtype=np.int8)
        if mask.size == 0:
            mask = mask.reshape(shape)
        if mask.shape != shape:
            raise DimensionError(f"mask has shape {mask.shape}, expected {shape}")
        if not np.isin(mask, (MASK_ZERO, MASK_FREE, MASK_FROZEN)).all():
            raise DomainError("mask entries must be 0 (zero), 1 (free) or 2 (frozen)")
        if np.any(k[mask == MASK_ZERO] != 0.0):
            raise DomainError("entries flagged zero in the mask must be exactly 0")
        k = np.array(k)
        k.flags.writeable = False
        mask = np.array(mask)
        mask.flags.writeable = False
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "mask", mask)

    # Block boundaries inside k: rows split at n_k and n_k + n_delta, columns too.
    @property
    def _r1(self):
        return self.n_k

    @property
    def _r2(self):
        return self.n_k + self.n_delta

    @property
    def a_k(self):
        return self.k[: self._r1, : self._r1]

    @property
    def b_w(self):
        return self.k[: self._r1, self._r1 : self._r2]

    @property
    def b_u(self):
        return self.k[: self._r1, self._r2 :]

    @property
    def c_z(self):
        return self.k[self._r1 : self._r2, : self._r1]

    @property
    def d_zw(self):
        return self.k[self._r1 : self._r2, self._r1 : self._r2]

    @property
    def d_zu(self):
        return self.k[self._r1 : self._r2, self._r2 :]

    @property
    def c_y(self):
        return self.k[self._r2 :, : self._r1]

    @property
    def d_yw(self):
        return self.k[self._r2 :, self._r1 : self._r2]

    @property
    def d_yu(self):
        return self.k[self._r2 :, self._r2 :]

    def with_k(self, k):
        """Same structure with a new value matrix (mask invariants re-checked)."""
        return replace(self, k=k)

    def free_values(self):
        """Vector of the entries flagged free, in row-major order."""
        return self.k[self.mask == MASK_FREE].copy()

    def with_free_values(self, theta):
        """Same block with the free entries replaced by ``theta``."""
        theta = np.asarray(theta, dtype=float).ravel()
        idx = self.mask == MASK_FREE
        if theta.size != int(idx.sum()):
            raise DimensionError(
                f"expected {int(idx.sum())} free values, got {theta.size}"
            )
        k = np.array(self.k)
        k[idx] = theta
        return self.with_k(k)


def count_free_params(kb):
    """Number of mask entries flagged free."""
    return int(np.count_nonzero(kb.mask == MASK_FREE))


def zero_block(n_k, n_delta, n_u, n_y, mask=None):
    """All-zero controller block; default mask leaves every entry free."""
    shape = (n_k + n_delta + n_u, n_k + n_delta + n_y)
    if mask is None:
        mask = np.full(shape, MASK_FREE, dtype=np.int8)
    return ControllerBlock(n_k, n_delta, n_u, n_y, np.zeros(shape), mask)


def _check_loop(m, what):
    cond = np.linalg.cond(m) if m.size else 1.0
    if not np.isfinite(cond) or cond > LFT_COND_LIMIT:
        raise IllPosedLFTError(
            f"ill-posed {what}: algebraic loop condition estimate {cond:.3e}"
        )


def upper_lft_matrix(m, delta):
    """Close the leading block of ``m`` with ``delta``.

    With ``m`` split as [[m11, m12], [m21, m22]] where ``m11`` matches
    ``delta.T`` in shape, returns ``m22 + m21 delta (I - m11 delta)^-1 m12``.
    """
    m = np.asarray(m)
    delta = np.asarray(delta)
    if delta.size == 0:
        q1 = p1 = 0
    else:
        q1, p1 = delta.shape
    if p1 > m.shape[0] or q1 > m.shape[1]:
        raise DimensionError(
            f"delta of shape {delta.shape} does not fit a matrix of shape {m.shape}"
        )
    m11 = m[:p1, :q1]
    m12 = m[:p1, q1:]
    m21 = m[p1:, :q1]
    m22 = m[p1:, q1:]
    if p1 == 0:
        return m22.copy()
    loop = np.eye(p1) - m11 @ delta
    _check_loop(loop, "upper LFT")
    return m22 + m21 @ (delta @ np.linalg.solve(loop, m12))


def lower_lft_matrix(m, k, n_u, n_y):
    """Close the trailing ``n_u`` inputs / ``n_y`` outputs of ``m`` with ``k``.

    Returns ``m11 + m12 k (I - m22 k)^-1 m21`` where ``m22`` is the trailing
    (n_y, n_u) block.  Used as the frequency-wise oracle for the state-space
    closure.
    """
    m = np.asarray(m)
    k = np.asarray(k)
    r = m.shape[0] - n_y
    c = m.shape[1] - n_u
    m11 = m[:r, :c]
    m12 = m[:r, c:]
    m21 = m[r:, :c]
    m22 = m[r:, c:]
    if n_u == 0 or n_y == 0:
        return m11.copy()
    loop = np.eye(n_y) - m22 @ k
    _check_loop(loop, "lower LFT")
    return m11 + m12 @ (k @ np.linalg.solve(loop, m21))


def closed_loop_matrices(plant, k):
    """State-space matrices of the lower LFT of a partitioned plant with ``k``.

    ``plant`` is a PartitionedSystem with inputs [w; u] and outputs [z; y];
    ``k`` is the controller realization mapping y to u.  Returns the
    (a, b, c, d) of the closed transfer w -> z with n_plant + n_k states.
    """
    s = plant.sys
    if len(plant.input_partition) != 2 or len(plant.output_partition) != 2:
        raise DimensionError("plant must have 2x2 channel partitions [w;u] -> [z;y]")
    n_w, n_u = plant.input_partition
    n_z, n_y = plant.output_partition
    if k.n_inputs != n_y or k.n_outputs != n_u:
        raise DimensionError(
            f"controller maps {k.n_inputs} -> {k.n_outputs}, plant expects {n_y} -> {n_u}"
        )
    a, b, c, d = s.a, s.b, s.c, s.d
    b1, b2 = b[:, :n_w], b[:, n_w:]
    c1, c2 = c[:n_z, :], c[n_z:, :]
    d11, d12 = d[:n_z, :n_w], d[:n_z, n_w:]
    d21, d22 = d[n_z:, :n_w], d[n_z:, n_w:]
    ak, bk, ck, dk = k.a, k.b, k.c, k.d

    # u = s_inv (dk c2 x + ck xk + dk d21 w) with s_inv = (I - dk d22)^-1
    loop = np.eye(n_u) - dk @ d22
    _check_loop(loop, "feedback interconnection")
    s_dk_c2 = np.linalg.solve(loop, dk @ c2)
    s_ck = np.linalg.solve(loop, ck)
    s_dk_d21 = np.linalg.solve(loop, dk @ d21)

    n, nk = s.n, k.n
    acl = np.zeros((n + nk, n + nk))
    acl[:n, :n] = a + b2 @ s_dk_c2
    acl[:n, n:] = b2 @ s_ck
    acl[n:, :n] = bk @ (c2 + d22 @ s_dk_c2)
    acl[n:, n:] = ak + bk @ (d22 @ s_ck)
    bcl = np.vstack([b1 + b2 @ s_dk_d21, bk @ (d21 + d22 @ s_dk_d21)])
    ccl = np.hstack([c1 + d12 @ s_dk_c2, d12 @ s_ck])
    dcl = d11 + d12 @ s_dk_d21
    return acl, bcl, ccl, dcl


def lower_lft_ss(plant, k):
    """Closed-loop StateSpace w -> z of a partitioned plant with controller ``k``."""
    return StateSpace(*closed_loop_matrices(plant, k))


def close_integrator(kb):
    """Dynamic controller system obtained by driving ``a_k`` through integrators.

    Returns a PartitionedSystem with inputs [w_delta; y], outputs [z_delta; u]
    and realization (a_k, [b_w b_u], [c_z; c_y], [[d_zw d_zu], [d_yw d_yu]]).
    """
    a = kb.a_k
    b = np.hstack([kb.b_w, kb.b_u])
    c = np.vstack([kb.c_z, kb.c_y])
    d = np.block([[kb.d_zw, kb.d_zu], [kb.d_yw, kb.d_yu]])
    sys = StateSpace(a, b, c, d)
    return PartitionedSystem(sys, (kb.n_delta, kb.n_y), (kb.n_delta, kb.n_u))


def eval_controller_matrices(kb, rho, grid_index=None):
    """Realization (a, b, c, d) of the controller instantiated at ``rho``.

    Closes the parameter channel of the block with ``rho * I``:

        a = a_k + b_w delta m c_z      b = b_u + b_w delta m d_zu
        c = c_y + d_yw delta m c_z     d = d_yu + d_yw delta m d_zu

    with ``delta = rho I`` and ``m = (I - d_zw delta)^-1``.
    """
    nd = kb.n_delta
    if nd == 0:
        return kb.a_k.copy(), kb.b_u.copy(), kb.c_y.copy(), kb.d_yu.copy()
    loop = np.eye(nd) - rho * kb.d_zw
    cond = np.linalg.cond(loop)
    if not np.isfinite(cond) or cond > LFT_COND_LIMIT:
        raise IllPosedLFTError(
            f"parametric controller ill posed at rho = {rho} "
            f"(condition estimate {cond:.3e})",
            grid_index=grid_index,
        )
    m_cz = rho * np.linalg.solve(loop, kb.c_z)
    m_dzu = rho * np.linalg.solve(loop, kb.d_zu)
    a = kb.a_k + kb.b_w @ m_cz
    b = kb.b_u + kb.b_w @ m_dzu
    c = kb.c_y + kb.d_yw @ m_cz
    d = kb.d_yu + kb.d_yw @ m_dzu
    return a, b, c, d


def eval_controller(kb, delta):
    """StateSpace of the controller at a parameter value.

    ``delta`` may be a DeltaSpec (its repetition count must match the block)
    or a bare float.
    """
    if isinstance(delta, DeltaSpec):
        if delta.n_delta != kb.n_delta:
            raise DimensionError(
                f"delta repetition {delta.n_delta} does not match block {kb.n_delta}"
            )
        rho = delta.value
    else:
        rho = float(delta)
    return StateSpace(*eval_controller_matrices(kb, rho))


# ---------------------------------------------------------------------------
# Controller file format: header "n_k n_delta n_u n_y", the k-matrix rows,
# then the mask rows (0 = zero, 1 = free, 2 = frozen).

def save_controller(kb, path):
    rows, cols = kb.k.shape
    lines = ["# controller block: k matrix then mask (0=zero,1=free,2=frozen)"]
    lines.append(f"{kb.n_k} {kb.n_delta} {kb.n_u} {kb.n_y}")
    for i in range(rows):
        lines.append(" ".join(f"{v:.17g}" for v in kb.k[i]))
    for i in range(rows):
        lines.append(" ".join(str(int(v)) for v in kb.mask[i]))
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _data_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield lineno, stripped


def load_controller(path):
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError(f"{path}: empty controller file") from None
    parts = header.split()
    if len(parts) != 4:
        raise ParseError(
            f"{path}:{lineno}: header must be 'n_k n_delta n_u n_y', got {header!r}"
        )
    try:
        n_k, n_delta, n_u, n_y = (int(p) for p in parts)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: non-integer header entry") from None
    rows = n_k + n_delta + n_u
    cols = n_k + n_delta + n_y

    def read_block(name, parse, dtype):
        out = np.zeros((rows, cols), dtype=dtype)
        for i in range(rows):
            try:
                lineno, line = next(lines)
            except StopIteration:
                raise ParseError(
                    f"{path}: truncated file: missing row {i + 1} of the {name}"
                ) from None
            vals = line.split()
            if len(vals) != cols:
                raise ParseError(
                    f"{path}:{lineno}: expected {cols} {name} entries, got {len(vals)}"
                )
            try:
                out[i] = [parse(v) for v in vals]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric {name} entry") from None
        return out

    k = read_block("k matrix", float, float)
    mask = read_block("mask", int, np.int8)
    extra = next(lines, None)
    if extra is not None:
        raise ParseError(f"{path}:{extra[0]}: unexpected trailing data")
    try:
        return ControllerBlock(n_k, n_delta, n_u, n_y, k, mask)
    except (DimensionError, DomainError) as exc:
        raise ParseError(f"{path}: inconsistent controller data: {exc}") from exc
