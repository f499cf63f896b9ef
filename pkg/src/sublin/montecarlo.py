"""Path simulation under explicit nature policies.

Nature picks one admissible mean per step as a function of the past (a
policy); the noise is then drawn from the step law.  Every path owns a
Philox stream keyed by the seed with the path index in the counter, so
results do not depend on how paths are chunked or scheduled.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError
from .models import SequenceModel

POLICY_KINDS = ("upper", "lower", "constant", "target", "periodic", "randomized")
NOISE_STREAM, POLICY_STREAM = 0, 1
BLOCK = 1024


@dataclass(frozen=True)
class Policy:
    """An admissible rule for choosing step means.

    ``param`` is the level for "constant" and the target b for "target";
    ``schedule`` holds fractions in [0, 1] of the step interval, cycled, for
    "periodic".  "randomized" draws the fraction uniformly from its own stream.
    """

    kind: str
    param: float = 0.0
    schedule: tuple = ()

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise InputError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.kind == "periodic":
            if not self.schedule or any(not 0.0 <= f <= 1.0 for f in self.schedule):
                raise InputError("periodic schedule needs fractions in [0, 1]")
            object.__setattr__(self, "schedule", tuple(float(f) for f in self.schedule))

    @property
    def label(self) -> str:
        if self.kind in ("constant", "target"):
            return f"{self.kind}({self.param:g})"
        if self.kind == "periodic":
            return "periodic(" + ",".join(f"{f:g}" for f in self.schedule) + ")"
        return self.kind

    def choose(self, i: int, lo: float, hi: float, sums: np.ndarray, u: np.ndarray | None) -> np.ndarray:
        """Means for step i (from 1) given partial sums S_{i-1} of each path."""
        k = self.kind
        if k == "upper":
            mu = np.full(sums.shape, hi)
        elif k == "lower":
            mu = np.full(sums.shape, lo)
        elif k == "constant":
            mu = np.full(sums.shape, min(max(self.param, lo), hi))
        elif k == "target":
            # the empty running mean at step 1 counts as 0
            below = sums < self.param * (i - 1) if i > 1 else np.full(sums.shape, 0.0 < self.param)
            mu = np.where(below, hi, lo)
        elif k == "periodic":
            frac = self.schedule[(i - 1) % len(self.schedule)]
            mu = np.full(sums.shape, lo + frac * (hi - lo))
        else:
            mu = lo + u * (hi - lo)
        return mu

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("constant", "target"):
            d["param"] = self.param
        if self.kind == "periodic":
            d["schedule"] = list(self.schedule)
        return d

    @classmethod
    def from_dict(cls, d) -> "Policy":
        if isinstance(d, str):
            return cls(d)
        unknown = set(d) - {"kind", "param", "schedule"}
        if unknown:
            raise InputError(f"unknown policy keys {sorted(unknown)}")
        return cls(d["kind"], float(d.get("param", 0.0)), tuple(d.get("schedule", ())))


def bundled_policies(b: float = 0.0) -> list[Policy]:
    return [
        Policy("upper"), Policy("lower"), Policy("constant", b), Policy("target", b),
        Policy("periodic", schedule=(1.0, 0.0, 0.0, 1.0)), Policy("randomized"),
    ]


def _stream(seed: int, stream: int, path: int) -> np.random.Generator:
    bits = np.random.Philox(
        key=np.array([seed % 2**64, stream], dtype=np.uint64),
        counter=np.array([0, 0, path, 0], dtype=np.uint64),
    )
    return np.random.Generator(bits)


def power_subsequence(n: int, base: int = 2) -> list[int]:
    out, k = [], 1
    while base**k <= n:
        out.append(base**k)
        k += 1
    return out


def self_power_subsequence(n: int) -> list[int]:
    out, k = [], 1
    while k**k <= n:
        out.append(k**k)
        k += 1
    return out


def default_checkpoints(n: int, per_decade: int = 24) -> list[int]:
    pts = set(power_subsequence(n)) | set(self_power_subsequence(n)) | {1, n}
    top = math.log10(n) if n > 1 else 0.0
    for e in np.linspace(0.0, top, max(2, int(per_decade * top) + 1)):
        pts.add(int(round(10**e)))
    return sorted(p for p in pts if 1 <= p <= n)


@dataclass
class PathBatch:
    seed: int
    paths: int
    n: int
    policy: Policy
    checkpoints: np.ndarray          # (C,)
    running_means: np.ndarray        # (paths, C): S_k / k at each checkpoint
    tail_starts: tuple
    tail_max: np.ndarray             # (T, paths): max of S_k / k over k >= tail start
    tail_min: np.ndarray             # (T, paths)
    targets: tuple
    closest: np.ndarray              # (T, B, paths): min |S_k / k - b| over k >= tail start
    final_means: np.ndarray          # (paths,)
    mean_range: tuple = field(default=(math.inf, math.inf))  # smallest mu - mu_lo and mu_hi - mu seen

    def tail_index(self, tail_start: int) -> int:
        try:
            return self.tail_starts.index(tail_start)
        except ValueError:
            raise InputError(f"tail start {tail_start} was not tracked; have {self.tail_starts}") from None

    def target_index(self, b: float) -> int:
        for j, t in enumerate(self.targets):
            if t == b:
                return j
        raise InputError(f"target {b} was not tracked; have {self.targets}")

    def means_at(self, k: int) -> np.ndarray:
        hits = np.flatnonzero(self.checkpoints == k)
        if hits.size == 0:
            raise InputError(f"step {k} is not a recorded checkpoint")
        return self.running_means[:, hits[0]]

    def summary_rows(self, tail_start: int | None = None, b: float | None = None) -> list[dict]:
        t = self.tail_index(tail_start if tail_start is not None else self.tail_starts[0])
        rows = []
        for p in range(self.paths):
            row = {"path_id": p, "tail_max": float(self.tail_max[t, p]), "tail_min": float(self.tail_min[t, p])}
            if self.targets:
                j = self.target_index(b) if b is not None else 0
                row["closest_approach"] = float(self.closest[t, j, p])
            rows.append(row)
        return rows


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SUBLIN_THREADS", "1")))
    except ValueError:
        return 1


def _simulate_chunk(model_steps, policy, n, seed, path_ids, cps, tails, targets):
    P = len(path_ids)
    noise_gens = [_stream(seed, NOISE_STREAM, int(p)) for p in path_ids]
    policy_gens = [_stream(seed, POLICY_STREAM, int(p)) for p in path_ids] if policy.kind == "randomized" else None
    sums = np.zeros(P)
    cp_pos = {k: j for j, k in enumerate(cps)}
    running = np.empty((P, len(cps)))
    tmax = np.full((len(tails), P), -np.inf)
    tmin = np.full((len(tails), P), np.inf)
    close = np.full((len(tails), len(targets), P), np.inf)
    tails_arr = np.asarray(tails)
    targ = np.asarray(targets, dtype=float)
    lo_slack, hi_slack = math.inf, math.inf
    for start in range(0, n, BLOCK):
        width = min(BLOCK, n - start)
        U = np.stack([g.random(width) for g in noise_gens])
        R = np.stack([g.random(width) for g in policy_gens]) if policy_gens else None
        for off in range(width):
            i = start + off + 1
            step = model_steps[i - 1]
            lo, hi = step.mean_lo, step.mean_hi
            mu = policy.choose(i, lo, hi, sums, None if R is None else R[:, off])
            if not np.all(np.isfinite(mu)):
                raise InputError(f"policy {policy.label} produced a non-finite mean at step {i}")
            lo_slack = min(lo_slack, float(np.min(mu - lo)))
            hi_slack = min(hi_slack, float(np.min(hi - mu)))
            cum = np.cumsum(step.noise.probs)[:-1]
            z = step.noise.support[np.searchsorted(cum, U[:, off], side="right")]
            sums = sums + (mu + z)
            m = sums / i
            active = tails_arr <= i
            if active.any():
                tmax[active] = np.maximum(tmax[active], m)
                tmin[active] = np.minimum(tmin[active], m)
                if targ.size:
                    gap = np.abs(m[None, :] - targ[:, None])
                    close[active] = np.minimum(close[active], gap)
            j = cp_pos.get(i)
            if j is not None:
                running[:, j] = m
    return running, tmax, tmin, close, sums / n, (lo_slack, hi_slack)


def simulate(
    model: SequenceModel,
    policy: Policy,
    n: int,
    paths: int,
    seed: int,
    checkpoints: Sequence[int] | None = None,
    tail_starts: Sequence[int] | None = None,
    targets: Sequence[float] = (),
    chunk: int = 256,
) -> PathBatch:
    """Simulate ``paths`` trajectories of n steps; deterministic given the seed.

    Running means S_k / k are kept at ``checkpoints``; tail maxima, minima and
    closest approaches to each of ``targets`` are tracked from each tail start.
    """
    if n < 1 or paths < 1:
        raise InputError("n and paths must be >= 1")
    cps = sorted(set(checkpoints if checkpoints is not None else default_checkpoints(n)))
    if cps and (cps[0] < 1 or cps[-1] > n):
        raise InputError("checkpoints must lie in [1, n]")
    tails = tuple(sorted(set(tail_starts if tail_starts is not None else [max(1, n // 2)])))
    if any(t < 1 or t > n for t in tails):
        raise InputError("tail starts must lie in [1, n]")
    if policy.kind == "target" and policy.param not in targets:
        targets = tuple(targets) + (policy.param,)
    targets = tuple(float(b) for b in targets)
    steps = model.steps_upto(n)
    ids = np.arange(paths)
    pieces = [ids[k:k + chunk] for k in range(0, paths, chunk)]
    work = lambda part: _simulate_chunk(steps, policy, n, seed, part, cps, tails, targets)  # noqa: E731
    threads = min(_threads(), len(pieces))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, pieces))
    else:
        results = [work(part) for part in pieces]
    slack = (min(r[5][0] for r in results), min(r[5][1] for r in results))
    if slack[0] < -1e-12 or slack[1] < -1e-12:
        raise AssertionError(f"policy {policy.label} left the admissible mean interval")
    return PathBatch(
        seed=seed, paths=paths, n=n, policy=policy,
        checkpoints=np.array(cps, dtype=int),
        running_means=np.concatenate([r[0] for r in results], axis=0),
        tail_starts=tails,
        tail_max=np.concatenate([r[1] for r in results], axis=1),
        tail_min=np.concatenate([r[2] for r in results], axis=1),
        targets=targets,
        closest=np.concatenate([r[3] for r in results], axis=2),
        final_means=np.concatenate([r[4] for r in results]),
        mean_range=slack,
    )


@dataclass
class SllnReport:
    paths: int
    eps: float
    tail_start: int
    within_band: int        # S_k/k in [mu_lo - eps, mu_hi + eps] for all tail k
    reaches_upper: int      # tail max >= mu_hi - eps
    reaches_lower: int      # tail min <= mu_lo + eps
    near_target: int | None  # tail closest approach to b <= eps
    b: float | None

    def fraction(self, count: int | None) -> float | None:
        return None if count is None else count / self.paths

    def to_dict(self) -> dict:
        return {
            "paths": self.paths, "eps": self.eps, "tail_start": self.tail_start, "b": self.b,
            "within_band": self.within_band, "reaches_upper": self.reaches_upper,
            "reaches_lower": self.reaches_lower, "near_target": self.near_target,
        }


def slln_statistics(batch: PathBatch, model: SequenceModel, eps: float, tail_start: int,
                    b: float | None = None) -> SllnReport:
    """Counts of paths whose tail behaviour witnesses the strong-law statements."""
    if tail_start >= batch.n:
        raise InputError("tail_start must be below the horizon")
    t = batch.tail_index(tail_start)
    hi, lo = batch.tail_max[t], batch.tail_min[t]
    within = int(np.sum((lo >= model.mu_lo - eps) & (hi <= model.mu_hi + eps)))
    near = None
    if b is not None:
        near = int(np.sum(batch.closest[t, batch.target_index(b)] <= eps))
    return SllnReport(
        paths=batch.paths, eps=eps, tail_start=tail_start,
        within_band=within,
        reaches_upper=int(np.sum(hi >= model.mu_hi - eps)),
        reaches_lower=int(np.sum(lo <= model.mu_lo + eps)),
        near_target=near, b=b,
    )


@dataclass
class SubsequenceReport:
    subsequence: list
    min_gap: np.ndarray         # per path: min_k |S_{n_k}/n_k - b|
    fraction_within: float
    new_share: list             # (n_k - n_{k-1}) / n_k
    old_share: list             # n_{k-1} / n_k


def subsequence_check(batch: PathBatch, subsequence, b: float, eps: float) -> SubsequenceReport:
    """Distance to b along a subsequence n_k, plus the ratio diagnostics.

    ``subsequence`` is "pow2", "kk" (k^k) or an explicit increasing list.
    """
    if subsequence == "pow2":
        seq = power_subsequence(batch.n)
    elif subsequence == "kk":
        seq = self_power_subsequence(batch.n)
    else:
        seq = [int(k) for k in subsequence]
    if not seq:
        raise InputError("empty subsequence")
    if any(b2 <= a2 for a2, b2 in zip(seq, seq[1:])):
        raise InputError("subsequence must be increasing")
    if seq[-1] > batch.n:
        raise InputError(f"subsequence reaches {seq[-1]} beyond the horizon {batch.n}")
    gaps = np.stack([np.abs(batch.means_at(k) - b) for k in seq], axis=1)
    min_gap = gaps.min(axis=1)
    new_share = [(seq[k] - seq[k - 1]) / seq[k] for k in range(1, len(seq))]
    old_share = [seq[k - 1] / seq[k] for k in range(1, len(seq))]
    return SubsequenceReport(seq, min_gap, float(np.mean(min_gap <= eps)), new_share, old_share)


def truncation_level(i: int, C: float) -> float:
    """C i / log(1 + i)."""
    return C * i / math.log1p(i)


def truncation_tail_capacities(model: SequenceModel, n: int, C: float) -> dict:
    """Exact V(|X_i - mu_hi_i| > C i / log(1+i)) per step and its Chebyshev bound.

    The event count is piecewise constant in the chosen mean with jumps where
    mu + z_j - mu_hi_i = +-c; since the inequality is strict, the sup is
    attained inside one of the open pieces, so probing interval endpoints and
    piece midpoints is exact.
    """
    caps, cheb = [], []
    for i, s in enumerate(model.steps_upto(n), 1):
        c = truncation_level(i, C)
        z, p = s.noise.support, s.noise.probs
        cuts = np.concatenate([s.mean_hi + c - z, s.mean_hi - c - z])
        cuts = np.unique(np.clip(cuts, s.mean_lo, s.mean_hi))
        pts = np.concatenate([[s.mean_lo, s.mean_hi], cuts, 0.5 * (cuts[1:] + cuts[:-1])])
        hits = np.abs(pts[:, None] + z[None, :] - s.mean_hi) > c
        caps.append(float(np.max(hits.astype(float) @ p)))
        second = max(float(p @ (m + z - s.mean_hi) ** 2) for m in (s.mean_lo, s.mean_hi))
        cheb.append(second / c**2)
    caps, cheb = np.array(caps), np.array(cheb)
    return {"capacity": caps, "chebyshev": cheb,
            "partial_sum_capacity": np.cumsum(caps), "partial_sum_chebyshev": np.cumsum(cheb)}
