"""Transfer tensors: discrete-time memory kernels built from dynamical maps.

A map family over a short window determines a set of transfer tensors via the
recursion

    T(1, end k)  =  map(k-1 -> k)
    T(l, end k)  =  map(k-l -> k) - sum_{l' < l} T(l', end k) map(k-l -> k-l')

after which the state at any step decomposes over its own history,

    rho_k  =  sum_{l=1..k} T(l, end k) rho_{k-l}  +  residual_k,

exactly. The residual carries the influence of initial system-environment
correlations and decays with k; tensors with length beyond a memory cutoff
``m`` become negligible when the kernel decays. For a generator and reference
state that are periodic with period ``c`` steps, tensors depend on their
start step only through its phase mod ``c`` (after transients), so a finite
set propagates the system to arbitrary times with a cost independent of the
horizon and an error that does not grow with it.

Tensors are stored keyed by ``(start step, length)``. Lookups fall back from
the literal start step to its phase, so the same propagation loop serves both
the periodic-reuse regime and densely built sets (used when the grid spacing
is incommensurate with the driving period).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import hermitize, operator_norm
from .models import LindbladModel, TimeGrid
from .tomography import (
    DynamicalMapFamily,
    FixedState,
    ReferencePolicy,
    StateDecomposition,
    reconstruct_family,
)


@dataclass(frozen=True)
class MemoryConfig:
    """Memory cutoff and periodic-reuse parameters on a fixed grid.

    ``m`` memory steps (cutoff time ``m*dt``), driving period ``c`` steps
    (``c*dt`` should equal the generator period for phase reuse to be exact),
    and ``transient_steps`` start steps that are stored literally before the
    periodic identification applies.
    """

    dt: float
    m: int
    c: int
    transient_steps: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.m < 1 or self.c < 1 or self.transient_steps < 0:
            raise ValueError(
                f"need m >= 1, c >= 1, transient_steps >= 0, got "
                f"m={self.m}, c={self.c}, transient_steps={self.transient_steps}"
            )


@dataclass
class TransferTensorSet:
    """Transfer tensors keyed by ``(start step, length)`` plus residuals."""

    config: MemoryConfig
    tensors: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)

    def phase_of(self, j: int) -> int:
        """Start step identified by periodicity (literal inside transients)."""
        base = self.config.transient_steps
        if 0 <= j < base + self.config.c:
            return j
        return (j - base) % self.config.c + base

    def tensor(self, start: int, length: int) -> np.ndarray:
        """Tensor for the given start step, falling back to its phase."""
        key = (start, length)
        if key in self.tensors:
            return self.tensors[key]
        wrapped = (self.phase_of(start), length)
        if wrapped in self.tensors:
            return self.tensors[wrapped]
        raise KeyError(
            f"no transfer tensor for start={start} (phase {wrapped[0]}), "
            f"length={length}"
        )

    def stored_starts(self) -> list[int]:
        return sorted({p for p, _ in self.tensors})

    def max_length(self, start: int) -> int:
        return max((l for p, l in self.tensors if p == start), default=0)


def build_tensors(
    family: DynamicalMapFamily,
    config: MemoryConfig,
    max_length: int | None = None,
    starts=None,
    exact_states: list[np.ndarray] | None = None,
    dense_window: int | None = None,
) -> TransferTensorSet:
    """Build transfer tensors from a dynamical map family.

    Parameters
    ----------
    family : DynamicalMapFamily
        Must contain every map inside the windows ``[p, p + max_length]`` for
        the requested start steps ``p``.
    config : MemoryConfig
        Grid/cutoff/period bookkeeping carried by the result.
    max_length : int, optional
        Longest tensor to store (default ``config.m``; the error bound needs
        ``2*m - 1``).
    starts : iterable of int, optional
        Start steps to store (default ``range(c + transient_steps)``).
    exact_states : list of ndarray, optional
        Exact system states at steps ``0..k``; stores the correlation
        residuals for steps ``1..min(m, k)``.
    dense_window : int, optional
        Store every tensor with ``start + length <= dense_window`` instead of
        the ``starts x lengths`` grid; for propagation without periodic reuse
        (incommensurate grids) and for full-memory exact reconstruction.
    """
    if max_length is None:
        max_length = config.m
    if dense_window is not None:
        requested = {
            (p, l)
            for l in range(1, max_length + 1)
            for p in range(dense_window - l + 1)
        }
    else:
        if starts is None:
            starts = range(config.c + config.transient_steps)
        requested = {(p, l) for p in starts for l in range(1, max_length + 1)}
    tensor_set = TransferTensorSet(config=config)

    # group by end step: the recursion at end k needs every shorter length
    # at the same end
    length_at_end: dict[int, int] = {}
    for p, l in requested:
        length_at_end[p + l] = max(length_at_end.get(p + l, 0), l)
    for k in sorted(length_at_end):
        at_end: list[np.ndarray] = []
        for l in range(1, min(k, length_at_end[k]) + 1):
            try:
                t_l = np.array(family.map(k - l, k))
                for lp in range(1, l):
                    t_l -= at_end[lp - 1] @ family.map(k - l, k - lp)
            except KeyError as exc:
                raise KeyError(
                    f"map family does not cover tensor (start={k - l}, "
                    f"length={l}): {exc}"
                ) from exc
            at_end.append(t_l)
            if (k - l, l) in requested:
                tensor_set.tensors[(k - l, l)] = t_l

    if exact_states is not None:
        k_max = min(config.m, len(exact_states) - 1)
        for k in range(1, k_max + 1):
            tensor_set.residuals[k] = inhomogeneous_residual(exact_states, tensor_set, k)
    return tensor_set


def inhomogeneous_residual(
    exact_states: list[np.ndarray], tensors: TransferTensorSet, k: int
) -> np.ndarray:
    """Correlation residual ``rho_k - sum_l T(l, end k) rho_{k-l}``.

    Traceless whenever the maps behind the tensors are trace preserving.
    """
    if k < 1:
        raise ValueError(f"residual is undefined for k={k}")
    if k >= len(exact_states):
        raise ValueError(
            f"residual at k={k} needs exact states up to step {k}, "
            f"got {len(exact_states)}"
        )
    acc = np.array(exact_states[k], dtype=complex)
    for l in range(1, k + 1):
        t = tensors.tensor(k - l, l)
        rho = exact_states[k - l]
        acc -= (t @ rho.reshape(-1, order="F")).reshape(rho.shape, order="F")
    return acc


def propagate(
    tensors: TransferTensorSet,
    seed_states: list[np.ndarray],
    total_steps: int,
    include_residuals: bool = False,
) -> list[np.ndarray]:
    """Propagate to ``total_steps`` using the memory-truncated decomposition.

    ``seed_states`` are exact states at steps ``0..len(seed)-1``. For each
    later step ``rho_k = sum_{l=1}^{min(k, m)} T(l) rho_{k-l}`` plus, when
    ``include_residuals``, the tracked residual for ``k <= m`` (untracked
    residuals count as zero, which is exact for uncorrelated starts whose
    reference state matches the initial environment). Without residuals the
    seed must span the full memory window. Outputs are re-Hermitized each
    step but never re-positivized: positivity loss diagnoses a too-severe
    memory cutoff.
    """
    m = tensors.config.m
    n_seed = len(seed_states)
    if n_seed < 1:
        raise ValueError("need at least the initial state as seed")
    if not include_residuals and n_seed < min(m, total_steps + 1):
        raise ValueError(
            f"seed of {n_seed} states does not cover the memory window of {m} "
            f"steps; provide more seed states or include residuals"
        )
    trajectory = [np.array(s, dtype=complex) for s in seed_states[: total_steps + 1]]
    d = trajectory[0].shape[0]
    for k in range(n_seed, total_steps + 1):
        acc = np.zeros(d * d, dtype=complex)
        for l in range(1, min(k, m) + 1):
            acc += tensors.tensor(k - l, l) @ trajectory[k - l].reshape(-1, order="F")
        out = acc.reshape((d, d), order="F")
        if include_residuals and k <= m and k in tensors.residuals:
            out = out + tensors.residuals[k]
        trajectory.append(hermitize(out))
    return trajectory


def propagate_correlation_free(
    model: LindbladModel,
    decomposition: StateDecomposition,
    grid: TimeGrid,
    policy: ReferencePolicy | None,
    config: MemoryConfig,
    total_steps: int,
    substeps: int = 64,
    max_length: int | None = None,
) -> list[np.ndarray]:
    """Tensor-propagate a correlated initial state without residual terms.

    Each decomposition branch starts uncorrelated, so with the branch's own
    environment state as reference (``policy=None``, the default) its
    residuals vanish identically and plain tensor propagation applies; the
    branches are then recombined with the decomposition coefficients. An
    explicit ``policy`` is used verbatim for every branch instead (not
    residual-free in general).

    ``grid`` must cover the tensor-construction window (period + memory);
    propagation continues to ``total_steps`` regardless of the grid length.
    """
    combined = None
    for coeff, sys_op, tau in decomposition.terms:
        if coeff == 0:
            continue
        branch_policy = FixedState(tau) if policy is None else policy
        rho_branch0 = np.kron(sys_op, tau)
        family = reconstruct_family(
            model,
            grid,
            branch_policy,
            substeps=substeps,
            rho_se0=None if policy is None else rho_branch0,
            band=max_length or config.m,
        )
        tensors = build_tensors(family, config, max_length=max_length)
        branch = propagate(tensors, [sys_op], total_steps, include_residuals=True)
        if combined is None:
            combined = [coeff * rho for rho in branch]
        else:
            combined = [acc + coeff * rho for acc, rho in zip(combined, branch)]
    if combined is None:
        raise ValueError("decomposition has no nonzero terms")
    return [hermitize(rho) for rho in combined]


def error_bound(tensors: TransferTensorSet, config: MemoryConfig, k: int) -> float:
    """Memory-cutoff error bound at step ``k``.

    Sums the operator norms of the tensors in the second memory window,
    ``sum_{l=1}^{m} ||T(start = phase(k - 2m) + l, length = 2m - l)||``,
    which bounds the distance between the propagated and exact states up to
    contributions from later memory windows. Needs tensors out to length
    ``2m - 1``.
    """
    m = config.m
    if k < 2 * m:
        raise ValueError(f"bound needs k >= 2m = {2 * m}, got {k}")
    base = tensors.phase_of(k - 2 * m)
    total = 0.0
    for l in range(1, m + 1):
        try:
            total += operator_norm(tensors.tensor(base + l, 2 * m - l))
        except KeyError as exc:
            raise KeyError(
                f"error bound needs tensors to length {2 * m - 1}: {exc}"
            ) from exc
    return total


def memory_cutoff_heuristic(tensors: TransferTensorSet, config: MemoryConfig) -> float:
    """Largest norm of the longest kept tensors across stored phases.

    Empirically a much tighter indicator of the propagation error than the
    conservative second-window bound.
    """
    norms = [
        operator_norm(t)
        for (p, l), t in tensors.tensors.items()
        if l == config.m
    ]
    if not norms:
        raise KeyError(f"no stored tensors of length m={config.m}")
    return max(norms)


def tensor_norm_profile(tensors: TransferTensorSet) -> dict:
    """Operator norm of every stored tensor, keyed by ``(length, start)``."""
    return {
        (l, p): operator_norm(t) for (p, l), t in sorted(tensors.tensors.items())
    }
