"""Homopolar event clustering and run/chase pairing.

A moving circle's contour produces two same-polarity event clusters: the
leading arc ("running", pushed ahead of the motion) and the trailing arc
("chasing", following it). Clusters are labeled from a 2x2 sign-statistics
matrix of normal-flow cross products and matched into pairs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import label_components
from .events import SensorGeometry
from .flow import FlowEvents


class ClusterLabel(enum.Enum):
    RUN = "run"
    CHASE = "chase"
    UNKNOWN = "unknown"


class FlowDegenerateError(ValueError):
    """Cluster has no usable mean flow direction."""


@dataclass(frozen=True)
class ClusterParams:
    min_size: int = 5
    theta_thd: float = 0.5


@dataclass(frozen=True)
class EventCluster:
    id: int
    polarity: int
    members: FlowEvents
    mean_pos: np.ndarray
    mean_flow_dir: np.ndarray | None
    indicator: np.ndarray | None
    label: ClusterLabel

    def __len__(self) -> int:
        return len(self.members)

    @property
    def flow_degenerate(self) -> bool:
        return self.mean_flow_dir is None


@dataclass(frozen=True)
class ClusterPair:
    chasing: EventCluster
    running: EventCluster
    distance: float


def _normalize_frob(m: np.ndarray) -> np.ndarray:
    return m / np.linalg.norm(m)


# Ideal indicator forms; built with the same normalization the pipeline
# applies so perfectly clean clusters reproduce them bit for bit.
IDEAL_RUN = _normalize_frob(np.array([[0.5, 0.0], [0.0, 0.5]]))
IDEAL_CHASE = _normalize_frob(np.array([[0.0, 0.5], [0.5, 0.0]]))
IDEAL_UNKNOWN = _normalize_frob(np.array([[0.25, 0.25], [0.25, 0.25]]))


def compute_indicator(members: FlowEvents):
    """Mean position, mean flow direction, and normalized indicator matrix.

    Each event lands in one cell of a 2x2 matrix according to the signs of
    d_j = cross(n_j, n_mean) and s_j = cross(x_j - x_mean, n_mean); the cell
    averages are then Frobenius-normalized.

    Raises FlowDegenerateError when member flows cancel out or no event has
    a strict sign pair.
    """
    if len(members) == 0:
        raise ValueError("empty cluster")
    pos = members.positions
    flows = members.flows
    mean_pos = pos.mean(axis=0)
    total = flows.sum(axis=0)
    norm = math.hypot(total[0], total[1])
    if norm < 1e-12:
        raise FlowDegenerateError("member flows cancel out")
    nbar = total / norm

    d = flows[:, 0] * nbar[1] - flows[:, 1] * nbar[0]
    rel = pos - mean_pos
    s = rel[:, 0] * nbar[1] - rel[:, 1] * nbar[0]
    d_pos, d_neg = d > 0, -d > 0
    s_pos, s_neg = s > 0, -s > 0
    l_avg = np.array([
        [np.mean(d_pos & s_pos), np.mean(d_pos & s_neg)],
        [np.mean(d_neg & s_pos), np.mean(d_neg & s_neg)],
    ])
    f = np.linalg.norm(l_avg)
    if f == 0.0:
        raise FlowDegenerateError("all cross products vanish")
    return mean_pos, nbar, l_avg / f


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """1 - ||A - B||_F / ||B||_F; identical matrices score exactly 1."""
    nb = np.linalg.norm(b)
    if nb == 0.0:
        raise ValueError("reference matrix must be nonzero")
    return 1.0 - np.linalg.norm(np.asarray(a) - np.asarray(b)) / nb


def classify(indicator: np.ndarray) -> ClusterLabel:
    """Label by best Frobenius similarity to the ideal forms; ties are UNKNOWN."""
    sims = (
        (similarity(indicator, IDEAL_RUN), ClusterLabel.RUN),
        (similarity(indicator, IDEAL_CHASE), ClusterLabel.CHASE),
        (similarity(indicator, IDEAL_UNKNOWN), ClusterLabel.UNKNOWN),
    )
    best = max(s for s, _ in sims)
    winners = [label for s, label in sims if s == best]
    if len(winners) > 1:
        return ClusterLabel.UNKNOWN
    return winners[0]


def cluster_homopolar(flow_events: FlowEvents, geometry: SensorGeometry,
                      params: ClusterParams = ClusterParams()) -> list[EventCluster]:
    """8-connected same-polarity clusters, ids in raster discovery order.

    Components smaller than ``params.min_size`` are dropped. Flow-degenerate
    clusters are kept (label UNKNOWN, no mean flow) so the caller can see
    them, but they can never be matched.
    """
    height, width = geometry.height, geometry.width
    found = []  # (first_raster_index, member_event_indices)
    for pol in (1, -1):
        sel = np.flatnonzero(flow_events.p == pol)
        if len(sel) == 0:
            continue
        xs, ys = flow_events.x[sel], flow_events.y[sel]
        occ = np.zeros((height, width), dtype=np.uint8)
        occ[ys, xs] = 1
        labels, n = label_components(occ)
        if n == 0:
            continue
        lab = labels[ys, xs]
        raster = ys.astype(np.int64) * width + xs
        for comp in range(1, n + 1):
            idx = sel[lab == comp]
            r = raster[lab == comp]
            found.append((int(r.min()), idx))
    found.sort(key=lambda item: item[0])

    clusters = []
    for first_raster, idx in found:
        if len(idx) < params.min_size:
            continue
        order = np.argsort(flow_events.y[idx].astype(np.int64) * width
                           + flow_events.x[idx], kind="stable")
        members = flow_events.take(idx[order])
        polarity = int(members.p[0])
        try:
            mean_pos, nbar, indicator = compute_indicator(members)
            label = classify(indicator)
        except FlowDegenerateError:
            mean_pos = members.positions.mean(axis=0)
            nbar, indicator, label = None, None, ClusterLabel.UNKNOWN
        clusters.append(EventCluster(
            id=len(clusters), polarity=polarity, members=members,
            mean_pos=mean_pos, mean_flow_dir=nbar, indicator=indicator,
            label=label))
    return clusters


def cluster_distance(chasing: EventCluster, running: EventCluster,
                     theta_thd: float = 0.5) -> float:
    """Center distance, or inf when the pair cannot be a chase/run match.

    Infinite when polarities agree, either flow is degenerate, the mean
    flows disagree, or the chase-to-run direction misaligns with them.
    """
    if chasing.polarity == running.polarity:
        return math.inf
    if chasing.mean_flow_dir is None or running.mean_flow_dir is None:
        return math.inf
    delta = running.mean_pos - chasing.mean_pos
    dist = math.hypot(delta[0], delta[1])
    if dist < 1e-9:
        return math.inf
    ni, nj = chasing.mean_flow_dir, running.mean_flow_dir
    if float(ni @ nj) < theta_thd:
        return math.inf
    u = delta / dist
    if min(float(u @ ni), float(u @ nj)) < theta_thd:
        return math.inf
    return dist


def _distance_matrix(clusters: list[EventCluster], theta_thd: float) -> np.ndarray:
    """cluster_distance evaluated for every (chase i, run j) index pair."""
    n = len(clusters)
    pos = np.array([c.mean_pos for c in clusters]).reshape(n, 2)
    pol = np.array([c.polarity for c in clusters])
    ok_dir = np.array([c.mean_flow_dir is not None for c in clusters])
    dirs = np.stack([c.mean_flow_dir if c.mean_flow_dir is not None
                     else np.zeros(2) for c in clusters])
    dx = pos[None, :, 0] - pos[:, None, 0]
    dy = pos[None, :, 1] - pos[:, None, 1]
    dist = np.hypot(dx, dy)
    bad = pol[:, None] == pol[None, :]
    bad |= ~(ok_dir[:, None] & ok_dir[None, :])
    bad |= dist < 1e-9
    bad |= dirs @ dirs.T < theta_thd
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = dx / dist
        uy = dy / dist
    un_i = ux * dirs[:, None, 0] + uy * dirs[:, None, 1]
    un_j = ux * dirs[None, :, 0] + uy * dirs[None, :, 1]
    with np.errstate(invalid="ignore"):
        bad |= np.minimum(un_i, un_j) < theta_thd
    d = np.where(bad, np.inf, dist)
    np.fill_diagonal(d, np.inf)
    return d


def match_clusters(clusters: list[EventCluster],
                   theta_thd: float = 0.5) -> list[ClusterPair]:
    """Three-stage injective chase/run matching.

    Stage 1 pairs chase clusters with run clusters, stage 2 pairs leftover
    labeled clusters with unknowns, stage 3 pairs unknowns together. Each
    stage keeps, per candidate, only its nearest partner, then resolves
    conflicts by smallest distance.

    A proposal also dies when either member has a closer alternative in
    any role its label allows (a chase may chase runs or unknowns, a run
    may be chased by chases or unknowns, unknowns do both). This keeps a
    chase whose true partner fell to UNKNOWN from stealing the run of a
    neighboring circle in stage 1, without being fooled by the one
    proximity that is geometrically unavoidable: when motion points at the
    next circle over, that circle's trailing cluster passes very close to
    this circle's leading cluster, in a role their labels rule out.
    """
    n = len(clusters)
    if n == 0:
        return []
    dmat = _distance_matrix(clusters, theta_thd)

    labels = np.array([c.label for c in clusters], dtype=object)
    chase_mask = labels == ClusterLabel.CHASE
    run_mask = labels == ClusterLabel.RUN
    unk_mask = labels == ClusterLabel.UNKNOWN

    role_ok = (chase_mask | unk_mask)[:, None] & (run_mask | unk_mask)[None, :]
    compat = np.where(role_ok, dmat, np.inf)
    sym = np.minimum(compat, compat.T)
    matched = np.zeros(n, dtype=bool)
    pairs: list[ClusterPair] = []

    def nearest_compatible(i):
        row = np.where(matched, np.inf, sym[i])
        row[i] = np.inf
        return row.min()

    def accept(proposals):
        proposals.sort(key=lambda z: (z[0], clusters[z[1]].id, clusters[z[2]].id))
        for d, i, j in proposals:
            if matched[i] or matched[j]:
                continue
            if d > nearest_compatible(i) or d > nearest_compatible(j):
                continue
            matched[i] = matched[j] = True
            pairs.append(ClusterPair(chasing=clusters[i], running=clusters[j],
                                     distance=float(d)))

    def best_partner(i, cand_mask, i_is_chase):
        d = (dmat[i] if i_is_chase else dmat[:, i]).copy()
        d[~cand_mask] = np.inf
        d[matched] = np.inf
        j = int(np.argmin(d))
        if not np.isfinite(d[j]):
            return None
        return (float(d[j]), i, j) if i_is_chase else (float(d[j]), j, i)

    props = [b for i in np.flatnonzero(chase_mask)
             if (b := best_partner(i, run_mask, True))]
    accept(props)

    props = []
    for i in np.flatnonzero(chase_mask | run_mask):
        if matched[i]:
            continue
        b = best_partner(i, unk_mask, bool(chase_mask[i]))
        if b:
            props.append(b)
    accept(props)

    props = []
    for i in np.flatnonzero(unk_mask):
        if matched[i]:
            continue
        b = best_partner(i, unk_mask, True)
        if b:
            props.append(b)
    accept(props)

    pairs.sort(key=lambda pr: pr.chasing.id)
    return pairs
