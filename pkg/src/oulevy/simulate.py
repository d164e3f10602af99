"""Exact-in-law Monte Carlo sampling of X(t) and of paths.

Sampling follows the explicit solution: deterministic part, a Gaussian
integral with the exact covariance, compound-Poisson jumps above a cutoff
with marks drawn from the normalized restriction of the jump measure, and
the compensation drift for marks in (eps_cut, 1].  Jumps below the cutoff
are either dropped (their compensated integral has mean zero, so the mean
stays exact and the dropped variance is reported) or folded into the
Gaussian part with the time-propagated small-jump covariance.

Randomness comes from counter-based Philox streams keyed by
(seed, stream id, chunk index) with a fixed chunk size, so batches are
bit-identical for a given seed/stream regardless of scheduling, and parallel
workers need no shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import measures as ms
from .errors import DimensionError, DomainError
from .linalg import Propagator, expm, expm_integral, psd_sqrt
from .model import OUModel, gaussian_covariance, propagated_jump_covariance

CHUNK = 1 << 14

DROP_COMPENSATE = "drop_compensate"
GAUSSIAN_APPROX = "gaussian_approx"


@dataclass(frozen=True)
class SimConfig:
    """Simulation configuration; ``cutoff=None`` selects the mass-based default."""

    seed: int = 0
    n_samples: int = 1
    cutoff: float | None = None
    small_jump_policy: str = DROP_COMPENSATE
    stream: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise DomainError("n_samples must be >= 1")
        if self.cutoff is not None and not 0.0 < self.cutoff <= 1.0:
            raise DomainError("cutoff must lie in (0, 1]")
        if self.small_jump_policy not in (DROP_COMPENSATE, GAUSSIAN_APPROX):
            raise DomainError(f"unknown small-jump policy {self.small_jump_policy!r}")


@dataclass
class SampleBatch:
    t: float
    m: int
    samples: np.ndarray  # (n, m)
    config: SimConfig
    jump_intensity: float
    eps_cut: float
    dropped_variance: float

    def __post_init__(self):
        if self.samples.shape != (self.config.n_samples, self.m):
            raise DimensionError("sample array shape disagrees with the config")


@dataclass
class SamplePaths:
    times: np.ndarray
    m: int
    paths: np.ndarray  # (n, len(times), m)
    config: SimConfig
    jump_intensity: float
    eps_cut: float


def _chunk_rng(seed: int, stream: int, chunk_idx: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    bg = np.random.Philox(key=key)
    bg.advance(chunk_idx << 64)
    return np.random.Generator(bg)


def default_cutoff(measure: ms.LevyMeasureSpec, t: float,
                   max_jumps: float = 1e4) -> float:
    """Smallest radius keeping the expected jump count per sample below max_jumps."""
    if measure.is_zero:
        return 1.0
    target = max_jumps / t
    tiny = 1e-300
    if ms.mass_above(measure, tiny) <= target:
        return tiny  # every representable atom fits the budget
    hi = 1.0
    while ms.mass_above(measure, hi) > target and hi < 1e12:
        hi *= 4.0
    llo, lhi = math.log(tiny), math.log(hi)
    for _ in range(300):
        mid = 0.5 * (llo + lhi)
        if ms.mass_above(measure, math.exp(mid)) > target:
            llo = mid
        else:
            lhi = mid
    return min(math.exp(lhi), 1.0)


class _MarkSampler:
    """Draws jump marks from the normalized restriction of Pi above eps_cut."""

    def __init__(self, measure: ms.LevyMeasureSpec, eps_cut: float):
        self.d = measure.dimension
        pts, w, fam_idx = measure.materialize_atoms()
        if pts.size:
            keep = np.linalg.norm(pts, axis=1) > eps_cut
            pts, w, fam_idx = pts[keep], w[keep], fam_idx[keep]
        self.atom_points = pts
        self.atom_weights = w
        self.atom_comp = fam_idx  # component id = family index
        n_fam = len(measure.families)
        self.density_comps = []
        masses = [w.sum() if w.size else 0.0]
        for i, c in enumerate(measure.densities):
            mass = c.mass_above(eps_cut)
            self.density_comps.append((n_fam + i, c, mass, max(eps_cut, c.profile.support_lo)))
            masses.append(mass)
        self.intensity = float(sum(masses))
        probs = []
        if w.size:
            probs.append(w)
        for _, _, mass, _ in self.density_comps:
            probs.append([mass])
        self._cum = np.cumsum(np.concatenate(probs)) if probs else np.zeros(0)
        self._n_atoms = w.size

    def draw(self, rng: np.random.Generator, k: int):
        """k marks: returns (points (k, d), component ids (k,))."""
        if k == 0:
            return np.zeros((0, self.d)), np.zeros(0, dtype=int)
        u = rng.random(k) * self.intensity
        sel = np.searchsorted(self._cum, u, side="right")
        sel = np.minimum(sel, self._cum.size - 1)
        pts = np.zeros((k, self.d))
        comp = np.zeros(k, dtype=int)
        atom_mask = sel < self._n_atoms
        if atom_mask.any():
            idx = sel[atom_mask]
            pts[atom_mask] = self.atom_points[idx]
            comp[atom_mask] = self.atom_comp[idx]
        for j, (comp_id, c, mass, lo) in enumerate(self.density_comps):
            mask = sel == self._n_atoms + j
            nk = int(mask.sum())
            if not nk:
                continue
            radii = np.asarray(c.profile.quantile_above(lo, rng.random(nk)), dtype=float)
            if c.uniform:
                if self.d == 1:
                    dirs = np.where(rng.random(nk) < 0.5, -1.0, 1.0)[:, None]
                else:
                    dirs = rng.normal(size=(nk, self.d))
                    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            else:
                V, dw = c.directions
                pick = rng.choice(V.shape[0], size=nk, p=dw)
                dirs = V[pick]
            pts[mask] = radii[:, None] * dirs
            comp[mask] = comp_id
        return pts, comp


def _prepare(model: OUModel, t: float, config: SimConfig):
    if t <= 0:
        raise DomainError("simulation needs t > 0")
    eps_cut = config.cutoff if config.cutoff is not None else default_cutoff(
        model.measure, t)
    sampler = _MarkSampler(model.measure, eps_cut)
    comp_mean = np.zeros(model.d)
    if eps_cut < 1.0 and not model.measure.is_zero:
        comp_mean = ms.compensator_mean(model.measure, eps_cut, 1.0)
        if not np.all(np.isfinite(comp_mean)):
            raise DomainError("compensator mean diverges at this cutoff; "
                              "raise eps_cut")
    C_small = ms.second_matrix_below(model.measure, eps_cut) if not model.measure.is_zero \
        else np.zeros((model.d, model.d))
    dropped_var = float(np.trace(C_small))
    return eps_cut, sampler, comp_mean, C_small, dropped_var


def _flow_apply(prop: Propagator, dt: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """e^{dt_i A} @ vecs_i for per-jump time gaps; vectorized over jumps."""
    if prop.m == 1:
        return np.exp(dt * prop.A[0, 0])[:, None] * vecs
    mats = prop.matrices(dt)
    return np.einsum("nij,nj->ni", mats, vecs)


def sample_endpoint(model: OUModel, t: float, config: SimConfig,
                    _component_split=None):
    """Exact-in-law endpoint samples of X(t).

    With ``_component_split`` (a sequence of measure-component index sets)
    the same jump stream is also accumulated per subset, coupling the split
    processes to the total one; the deterministic, Gaussian and small-jump
    parts are attributed to the first subset.
    """
    eps_cut, sampler, comp_mean, C_small, dropped_var = _prepare(model, t, config)
    n = config.n_samples
    m = model.m
    prop = Propagator(model.A)
    det = model.deterministic_part(t)
    comp_drift = expm_integral(model.A, t) @ (model.D @ comp_mean)
    L_gauss = None
    if model.has_gaussian_part:
        L_gauss = psd_sqrt(gaussian_covariance(model, t))
    L_small = None
    if config.small_jump_policy == GAUSSIAN_APPROX and dropped_var > 0.0:
        L_small = psd_sqrt(propagated_jump_covariance(model, t, C_small))
    lam = sampler.intensity * t

    split = None
    if _component_split is not None:
        split = [set(int(i) for i in part) for part in _component_split]
        # per-part compensation drift: the compensator splits additively
        part_drifts = []
        for part in split:
            cm = np.zeros(model.d)
            if eps_cut < 1.0:
                for cid in part:
                    cm += _component_mean(model.measure, cid, eps_cut, 1.0)
            part_drifts.append(expm_integral(model.A, t) @ (model.D @ cm))
        outs = [np.zeros((n, m)) for _ in split]
        if config.small_jump_policy != DROP_COMPENSATE:
            raise DomainError("component splitting supports drop_compensate only")

    samples = np.zeros((n, m))
    for c0 in range(0, n, CHUNK):
        nc = min(CHUNK, n - c0)
        rng = _chunk_rng(config.seed, config.stream, c0 // CHUNK)
        K = rng.poisson(lam, size=nc) if lam > 0 else np.zeros(nc, dtype=int)
        tot = int(K.sum())
        acc = np.zeros((nc, m))
        if tot:
            s = rng.random(tot) * t
            marks, comps = sampler.draw(rng, tot)
            Du = marks @ model.D.T
            contrib = _flow_apply(prop, t - s, Du)
            idx = np.repeat(np.arange(nc), K)
            np.add.at(acc, idx, contrib)
            if split is not None:
                for p, part in enumerate(split):
                    mask = np.isin(comps, list(part))
                    accp = np.zeros((nc, m))
                    np.add.at(accp, idx[mask], contrib[mask])
                    outs[p][c0:c0 + nc] = accp
        gauss = np.zeros((nc, m))
        if L_gauss is not None:
            gauss = rng.standard_normal(size=(nc, m)) @ L_gauss.T
        if L_small is not None:
            gauss = gauss + rng.standard_normal(size=(nc, m)) @ L_small.T
        samples[c0:c0 + nc] = det[None, :] + gauss + acc - comp_drift[None, :]
        if split is not None:
            for p in range(len(split)):
                outs[p][c0:c0 + nc] -= part_drifts[p][None, :]
                if p == 0:
                    outs[p][c0:c0 + nc] += det[None, :] + gauss

    batch = SampleBatch(t, m, samples, config, sampler.intensity, eps_cut, dropped_var)
    if split is None:
        return batch
    parts = [SampleBatch(t, m, o, config, sampler.intensity, eps_cut, dropped_var)
             for o in outs]
    return batch, parts


def _component_mean(measure: ms.LevyMeasureSpec, comp_id: int, lo: float, hi: float):
    n_fam = len(measure.families)
    if comp_id < n_fam:
        sub = ms.LevyMeasureSpec(measure.dimension,
                                 families=(measure.families[comp_id],),
                                 truncation_depth=measure.truncation_depth)
    else:
        sub = ms.LevyMeasureSpec(measure.dimension,
                                 densities=(measure.densities[comp_id - n_fam],),
                                 truncation_depth=measure.truncation_depth)
    return ms.compensator_mean(sub, lo, hi)


def sample_endpoint_split(model: OUModel, t: float, config: SimConfig, partition):
    """Coupled sampling for a partition of measure-component indices.

    Returns (total_batch, part_batches); superposing the parts reproduces the
    total sample by construction, up to floating-point summation order.
    """
    all_ids = set(range(len(model.measure.families) + len(model.measure.densities)))
    listed = [set(int(i) for i in p) for p in partition]
    flat = set().union(*listed) if listed else set()
    if flat != all_ids or sum(len(p) for p in listed) != len(all_ids):
        raise DomainError("partition must cover every measure component exactly once")
    return sample_endpoint(model, t, config, _component_split=listed)


def sample_path(model: OUModel, times, config: SimConfig) -> SamplePaths:
    """Trajectories on a strictly increasing grid starting at 0.

    Exact-in-law at every node: the Gaussian part advances by independent
    increments with the exact interval covariance, jump times are placed
    uniformly, and compensation enters through its deterministic node drift.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise DomainError("need a strictly increasing time grid with t_0 >= 0")
    t_end = float(times[-1])
    if t_end <= 0:
        raise DomainError("the grid must reach past 0")
    eps_cut, sampler, comp_mean, C_small, dropped_var = _prepare(model, t_end, config)
    n = config.n_samples
    m = model.m
    prop = Propagator(model.A)
    lam = sampler.intensity * t_end
    gauss_on = model.has_gaussian_part
    small_on = config.small_jump_policy == GAUSSIAN_APPROX and dropped_var > 0.0

    node_det = np.stack([model.deterministic_part(tj) for tj in times])
    node_comp = np.stack([expm_integral(model.A, tj) @ (model.D @ comp_mean)
                          for tj in times])
    dts = np.diff(np.concatenate([[0.0], times]))
    step_mats = [expm(dt * model.A) for dt in dts]
    chol_g = [psd_sqrt(gaussian_covariance(model, dt)) if gauss_on else None
              for dt in dts]
    chol_s = [psd_sqrt(propagated_jump_covariance(model, dt, C_small))
              if small_on else None for dt in dts]

    paths = np.zeros((n, times.size, m))
    for c0 in range(0, n, CHUNK):
        nc = min(CHUNK, n - c0)
        rng = _chunk_rng(config.seed, config.stream, c0 // CHUNK)
        K = rng.poisson(lam, size=nc) if lam > 0 else np.zeros(nc, dtype=int)
        tot = int(K.sum())
        s = rng.random(tot) * t_end
        marks, _ = sampler.draw(rng, tot)
        Du = marks @ model.D.T
        idx = np.repeat(np.arange(nc), K)
        gauss_steps = None
        if gauss_on or small_on:
            gauss_steps = np.zeros((nc, times.size, m))
            for j in range(times.size):
                g = np.zeros((nc, m))
                if gauss_on:
                    g = rng.standard_normal(size=(nc, m)) @ chol_g[j].T
                if small_on:
                    g = g + rng.standard_normal(size=(nc, m)) @ chol_s[j].T
                gauss_steps[:, j, :] = g
        gpart = np.zeros((nc, m))
        for j, tj in enumerate(times):
            if gauss_steps is not None:
                gpart = gpart @ step_mats[j].T + gauss_steps[:, j, :]
            node = np.zeros((nc, m))
            live = s <= tj
            if live.any():
                contrib = _flow_apply(prop, tj - s[live], Du[live])
                np.add.at(node, idx[live], contrib)
            paths[c0:c0 + nc, j, :] = (node_det[j][None, :] + gpart + node
                                       - node_comp[j][None, :])
    return SamplePaths(times, m, paths, config, sampler.intensity, eps_cut)


# ---------------------------------------------------------------------------
# Validation bridge to the density module
# ---------------------------------------------------------------------------

def compare_to_density(batch: SampleBatch, grid, n_bins: int = 256,
                       ks_level: float | None = None, l1_threshold: float = 0.05):
    """Distances between a sample batch and a density grid.

    One-dimensional batches get the KS statistic against the grid CDF
    (pass threshold defaults to the 1% critical value 1.63/sqrt(n)), plus an
    L1 distance and per-bin z-scores on ``n_bins`` equal bins over the grid
    range.  Two-dimensional grids get the binned L1/z-scores only.
    """
    if batch.samples.size == 0:
        raise DomainError("empty sample batch")
    if grid.dimension != batch.m:
        raise DimensionError("batch and grid dimensions disagree")
    n = batch.samples.shape[0]
    if grid.dimension == 1:
        x = grid.axis(0)
        dx = x[1] - x[0]
        vals = grid.clipped()
        cdf = np.concatenate([[0.0], np.cumsum(vals) * dx])
        cdf_x = np.concatenate([x, [grid.x_max[0]]])
        cdf /= cdf[-1]
        xs = np.sort(batch.samples[:, 0])
        F = np.interp(xs, cdf_x, cdf, left=0.0, right=1.0)
        emp_hi = np.arange(1, n + 1) / n
        emp_lo = np.arange(0, n) / n
        ks = float(np.max(np.maximum(np.abs(F - emp_hi), np.abs(F - emp_lo))))
        edges = np.linspace(grid.x_min[0], grid.x_max[0], n_bins + 1)
        counts, _ = np.histogram(batch.samples[:, 0], bins=edges)
        stride = max(vals.size // n_bins, 1)
        pbin = vals.reshape(n_bins, stride).sum(axis=1) * dx if vals.size % n_bins == 0 \
            else np.diff(np.interp(edges, cdf_x, cdf))
        pbin = np.clip(pbin, 0.0, None)
        frac = counts / n
        l1 = float(np.abs(frac - pbin).sum())
        sd = np.sqrt(np.maximum(pbin * (1.0 - pbin) / n, 1e-300))
        z = (frac - pbin) / sd
        ks_crit = ks_level if ks_level is not None else 1.63 / math.sqrt(n)
        return {"ks": ks, "ks_critical": ks_crit, "ks_pass": ks <= ks_crit,
                "l1": l1, "l1_pass": l1 <= l1_threshold,
                "max_abs_z": float(np.max(np.abs(z))), "z_scores": z}
    # 2-d: L1 and z-scores on a coarse bin grid aligned with the density grid
    nb = 16
    vals = grid.clipped()
    cell = grid.cell_volume()
    s1 = grid.npoints[0] // nb
    s2 = grid.npoints[1] // nb
    pbin = vals[:s1 * nb, :s2 * nb].reshape(nb, s1, nb, s2).sum(axis=(1, 3)) * cell
    e1 = np.linspace(grid.x_min[0], grid.x_min[0] + s1 * nb * (grid.x_max[0] - grid.x_min[0]) / grid.npoints[0], nb + 1)
    e2 = np.linspace(grid.x_min[1], grid.x_min[1] + s2 * nb * (grid.x_max[1] - grid.x_min[1]) / grid.npoints[1], nb + 1)
    counts, _, _ = np.histogram2d(batch.samples[:, 0], batch.samples[:, 1],
                                  bins=(e1, e2))
    frac = counts / n
    l1 = float(np.abs(frac - pbin).sum())
    sd = np.sqrt(np.maximum(pbin * (1.0 - pbin) / n, 1e-300))
    z = (frac - pbin) / sd
    return {"ks": None, "ks_critical": None, "ks_pass": None,
            "l1": l1, "l1_pass": l1 <= l1_threshold,
            "max_abs_z": float(np.max(np.abs(z))), "z_scores": z}
