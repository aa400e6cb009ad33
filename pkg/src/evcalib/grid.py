"""Asymmetric circle-grid geometry and lattice recognition in center sets.

The board is a staggered lattice: row i, col j sits at
((2j + i%2) * spacing/2, i * spacing/2, 0). In half-spacing units the
centers occupy the integer pairs (a, b) with a == b (mod 2), so nearest
neighbors are the four diagonal steps and recognition can work on that
sublattice: hypothesize a local map from one center plus its three
nearest neighbors, grow the assignment by nearest-lattice rounding under
a transfer gate, refit a homography on the inliers, then canonicalize
the labeling over the dihedral relabelings of the lattice.

The minimal sample is fit affinely, not projectively: a center plus
three of its four diagonal neighbors always contains an opposite pair,
which is collinear with the center, so a 4-point DLT is degenerate by
construction. An affine least-squares fit is well posed there and is
exact enough over a single cell to seed the inlier growth.

Growth runs in two stages. A homography fixpoint first; under strong
lens distortion a single homography can leave far-from-center circles
several pixels off, so a frontier pass then extends the assignment one
lattice step at a time, predicting each new cell linearly from two
collinear assigned predecessors. One-step extrapolation tracks smooth
distortion to well under a pixel, so the same transfer gate applies;
the frontier stage changes how candidate positions are predicted, never
the gate or the completeness rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .calib import apply_homography, homography_dlt


@dataclass(frozen=True)
class BoardSpec:
    rows: int
    cols: int
    spacing: float
    circle_radius: float = 0.0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError("board needs rows >= 2 and cols >= 2")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        radius = self.circle_radius if self.circle_radius else self.spacing / 5.0
        if not 0 < radius < self.spacing / 2.0:
            raise ValueError("circle radius must lie in (0, spacing/2)")
        object.__setattr__(self, "circle_radius", radius)

    @property
    def n_points(self) -> int:
        return self.rows * self.cols


_BOARD_KEYS = {"rows": int, "cols": int, "spacing_m": float, "circle_radius_m": float}


def parse_board_spec(text: str) -> BoardSpec:
    """Key-value board file: rows, cols, spacing_m, optional circle_radius_m."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"board spec line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _BOARD_KEYS:
            raise ValueError(f"board spec line {lineno}: unknown key {key!r}")
        try:
            values[key] = _BOARD_KEYS[key](val.strip())
        except ValueError as exc:
            raise ValueError(f"board spec line {lineno}: bad value for {key}") from exc
    for req in ("rows", "cols", "spacing_m"):
        if req not in values:
            raise ValueError(f"board spec missing required key {req!r}")
    return BoardSpec(rows=values["rows"], cols=values["cols"],
                     spacing=values["spacing_m"],
                     circle_radius=values.get("circle_radius_m", 0.0))


def load_board_spec(path) -> BoardSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_board_spec(fh.read())


def board_cells(spec: BoardSpec) -> np.ndarray:
    """Integer lattice coords (a, b) in half-spacing units, row-major."""
    i = np.arange(spec.rows)
    j = np.arange(spec.cols)
    a = 2 * j[None, :] + (i[:, None] % 2)
    b = np.broadcast_to(i[:, None], (spec.rows, spec.cols))
    return np.stack([a, b], axis=2).reshape(-1, 2)


def board_points(spec: BoardSpec) -> np.ndarray:
    """Metric board points (rows*cols, 3), z = 0, row-major."""
    cells = board_cells(spec).astype(np.float64) * (spec.spacing / 2.0)
    return np.concatenate([cells, np.zeros((len(cells), 1))], axis=1)


@dataclass(frozen=True)
class GridMatch:
    """Complete recognized grid: centers ordered to match board_points."""

    image_points: np.ndarray
    center_indices: np.ndarray
    homography: np.ndarray
    rms: float


# proper and mirror relabelings of the (a, b) lattice
_DIHEDRAL = tuple(
    np.array(m, dtype=np.int64)
    for m in (
        ((1, 0), (0, 1)), ((-1, 0), (0, -1)),
        ((0, 1), (1, 0)), ((0, -1), (-1, 0)),
        ((-1, 0), (0, 1)), ((1, 0), (0, -1)),
        ((0, 1), (-1, 0)), ((0, -1), (1, 0)),
    )
)


def _round_to_sublattice(pts) -> np.ndarray:
    """Nearest (a, b) with a == b (mod 2), via the diagonal integer basis."""
    m = np.round((pts[:, 0] + pts[:, 1]) / 2.0).astype(np.int64)
    n = np.round((pts[:, 1] - pts[:, 0]) / 2.0).astype(np.int64)
    return np.stack([m - n, m + n], axis=1)


def _affine_hypothesis(src, dst):
    """Least-squares affine map src -> dst as a 3x3 homography, or None."""
    design = np.concatenate([src, np.ones((len(src), 1))], axis=1)
    coef, _, rank, _ = np.linalg.lstsq(design, dst, rcond=None)
    if rank < 3:
        return None
    h = np.eye(3)
    h[:2, :] = coef.T
    if abs(np.linalg.det(h[:2, :2])) < 1e-9:
        return None
    return h


def _assign_cells(h, centers, gate_px):
    """Greedy nearest-cell assignment under a reprojection gate.

    Returns {cell (a, b): center index} keeping the closest center per cell.
    """
    try:
        back = apply_homography(np.linalg.inv(h), centers)
    except np.linalg.LinAlgError:
        return {}
    finite = np.all(np.isfinite(back), axis=1)
    back = np.where(finite[:, None], back, 0.0)
    cells = _round_to_sublattice(back)
    proj = apply_homography(h, cells.astype(np.float64))
    dist = np.sqrt(((proj - centers) ** 2).sum(axis=1))
    dist = np.where(finite & np.isfinite(dist), dist, np.inf)
    order = np.argsort(dist, kind="stable")
    assigned = {}
    for idx in order:
        if dist[idx] > gate_px:
            break
        key = (int(cells[idx, 0]), int(cells[idx, 1]))
        if key not in assigned:
            assigned[key] = int(idx)
    return assigned


def _refit(assigned, centers):
    src = np.array(list(assigned.keys()), dtype=np.float64)
    dst = centers[list(assigned.values())]
    return homography_dlt(src, dst)


# sublattice steps: the four diagonals plus the straight two-steps
_GROW_DIRS = ((1, 1), (1, -1), (-1, 1), (-1, -1),
              (2, 0), (-2, 0), (0, 2), (0, -2))


def _grow_frontier(assigned, centers, gate_px, max_passes=64):
    """Extend the assignment one lattice step at a time.

    Each unassigned cell adjacent to the inlier set is predicted by linear
    extrapolation from two collinear assigned cells (averaged over every
    direction that offers a predecessor pair) and greedily matched to the
    nearest unused center within the gate. Repeats until a pass adds
    nothing.
    """
    assigned = dict(assigned)
    used = set(assigned.values())
    for _ in range(max_passes):
        preds = {}
        for (a, b), k1 in assigned.items():
            p1 = centers[k1]
            for da, db in _GROW_DIRS:
                target = (a + da, b + db)
                if target in assigned:
                    continue
                k0 = assigned.get((a - da, b - db))
                if k0 is None:
                    continue
                preds.setdefault(target, []).append(2.0 * p1 - centers[k0])
        if not preds:
            break
        cand = []
        for target, guesses in preds.items():
            pos = np.mean(guesses, axis=0)
            d = np.hypot(centers[:, 0] - pos[0], centers[:, 1] - pos[1])
            if used:
                d[list(used)] = np.inf
            j = int(np.argmin(d))
            if d[j] <= gate_px:
                cand.append((float(d[j]), target, j))
        added = 0
        for _, target, j in sorted(cand):
            if target in assigned or j in used:
                continue
            assigned[target] = j
            used.add(j)
            added += 1
        if not added:
            break
    return assigned


def _complete_candidates(assigned, spec: BoardSpec):
    """All (ordered center indices) forming a full board, over relabelings.

    Tries every dihedral relabeling and every translation placing the board
    inside the assigned cell set; extra assigned cells are ignored.
    """
    cells = np.array(list(assigned.keys()), dtype=np.int64)
    idxs = list(assigned.values())
    base = board_cells(spec)
    out = []
    for op in _DIHEDRAL:
        mapped = cells @ op.T
        lut = {(int(a), int(b)): idxs[k] for k, (a, b) in enumerate(mapped)}
        a_lo, b_lo = mapped.min(axis=0)
        a_hi, b_hi = mapped.max(axis=0)
        span_a, span_b = base.max(axis=0)
        for tb in range(int(b_lo), int(b_hi) - int(span_b) + 1):
            for ta in range(int(a_lo), int(a_hi) - int(span_a) + 1):
                if (ta - tb) % 2:
                    continue
                picked = []
                for a, b in base:
                    k = lut.get((int(a) + ta, int(b) + tb))
                    if k is None:
                        break
                    picked.append(k)
                else:
                    out.append(np.array(picked, dtype=np.int64))
    return out


def find_grid(centers, spec: BoardSpec, *, gate_px: float = 3.0,
              iterations: int = 64, seed: int = 0) -> GridMatch | None:
    """Locate the complete board lattice inside a set of ellipse centers.

    Returns None unless every board point is matched. The returned ordering
    is canonical: among the complete labelings, only those whose board-to-
    image homography has a positive upper-left 2x2 determinant survive, and
    the lowest transfer RMS wins (coordinate-lexicographic tie-break, so a
    symmetric point set still yields a deterministic order).
    """
    centers_in = np.asarray(centers, dtype=np.float64)
    n = len(centers_in)
    if n < spec.n_points or n < 4:
        return None
    # input-permutation invariance
    sort_idx = np.lexsort((centers_in[:, 1], centers_in[:, 0]))
    pts = centers_in[sort_idx]

    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    nearest3 = np.argsort(d2, axis=1, kind="stable")[:, :3]

    dirs = ((1, 1), (-1, 1), (1, -1), (-1, -1))
    rng = np.random.default_rng(seed)
    best = None
    # every center is a potential seed; sweep them in shuffled order so the
    # budget is spent on distinct seeds rather than resampled ones
    for c0 in rng.permutation(n)[:min(n, iterations)]:
        c0 = int(c0)
        nbrs = nearest3[c0]
        dst4 = np.concatenate([pts[c0:c0 + 1], pts[nbrs]], axis=0)
        for d2_, d3_ in permutations(dirs[1:], 2):
            src4 = np.array([(0.0, 0.0), dirs[0], d2_, d3_])
            h = _affine_hypothesis(src4, dst4)
            if h is None:
                continue
            if np.max(np.abs(apply_homography(h, src4) - dst4)) > gate_px:
                continue  # sample inconsistent with any local affinity
            assigned = _assign_cells(h, pts, gate_px)
            if len(assigned) < min(6, spec.n_points):
                continue
            for _ in range(8):
                try:
                    h = _refit(assigned, pts)
                except (ValueError, np.linalg.LinAlgError):
                    assigned = {}
                    break
                new = _assign_cells(h, pts, gate_px)
                if new == assigned or len(new) < 4:
                    assigned = new if len(new) >= 4 else assigned
                    break
                assigned = new
            if 0 < len(assigned) < spec.n_points:
                # distortion residue a single homography cannot absorb
                assigned = _grow_frontier(assigned, pts, gate_px)
            if len(assigned) < spec.n_points:
                continue
            for picked in _complete_candidates(assigned, spec):
                img = pts[picked]
                try:
                    h_fin = homography_dlt(board_points(spec)[:, :2], img)
                except (ValueError, np.linalg.LinAlgError):
                    continue
                if np.linalg.det(h_fin[:2, :2]) <= 0:
                    continue
                res = apply_homography(h_fin, board_points(spec)[:, :2]) - img
                rms = float(np.sqrt((res ** 2).sum(axis=1).mean()))
                key = (rms, tuple(map(tuple, img)))
                if best is None or key < best[0]:
                    best = (key, picked, h_fin)
        if best is not None:
            break
    if best is None:
        return None
    _, picked, h_fin = best
    return GridMatch(
        image_points=pts[picked].copy(),
        center_indices=sort_idx[picked],
        homography=h_fin,
        rms=best[0][0],
    )
