"""Map-image pre-matching: corner features, binary descriptors, consensus
fitting, and the confidence algebra that nominates loop-closure candidates.

Corners come from a segment test on a box-blurred copy of the binary map
image (binary images have no gradients otherwise), refined to sub-cell
positions on the corner-response surface. Each keypoint gets an
intensity-centroid orientation and a rotation-steered 256-bit descriptor
sampled on a fixed ring pattern over the signed distance field of the free
region. Point-pair tests, the classic choice on textured imagery, are
uninformative on near-binary silhouettes (almost every pair lands on the
same side of the one dominant edge), while ring samples of the distance
field encode the local silhouette shape and stay stable under the sub-cell
boundary jitter between scans.

Matching is mutual nearest-descriptor with a ratio test; the planar
transform between two images is fit by random-sample consensus, 2D-rigid by
default since both grids share one metric resolution (a projective mode
exists for parity).

Confidence scores: zeta = inlier ratio, epsilon = mean squared inlier
residual (cells^2), Lambda = 1/(1+epsilon), Psi = zeta * Lambda. A pair is
accepted when the inlier count clears ``min_inliers`` and Psi clears
``psi_threshold``.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt, uniform_filter

from .occupancy import GRID_SIZE, MapImage


class InsufficientMatches(RuntimeError):
    pass


class NoConsensus(RuntimeError):
    pass


@dataclass(frozen=True)
class PrematchParams:
    max_features: int = 500
    fast_threshold: float = 0.08        # contrast on the blurred [0,1] image
    fast_arc: int = 9                   # contiguous circle pixels required
    patch_radius: int = 15              # detection margin / orientation patch
    ring_radii: tuple = (4, 7, 11, 15, 20, 26, 32, 38)  # descriptor rings, cells
    ring_angles: int = 16               # samples per ring
    ring_thresholds: tuple = (-2.0, 2.0)  # signed-distance quantization, cells
    sdf_clip: float = 40.0              # distance-field saturation, cells
    ratio: float = 0.8                  # Lowe ratio test
    model: str = "rigid"                # "rigid" (2-pt) or "homography" (4-pt)
    inlier_threshold: float = 3.0       # cells
    ransac_iterations: int = 1000
    ransac_confidence: float = 0.99
    min_inliers: int = 20
    psi_threshold: float = 0.7
    refine: bool = True                 # align matched positions on the distance fields
    guided: bool = True                 # second matching round gated by the fit
    guided_gate: float = 4.0            # spatial gate for the second round, cells
    residual_scale: float = 3.0         # cells per residual unit entering epsilon
                                        # (= inlier_threshold: residuals are scored
                                        # relative to the inlier gate)
    seed: int = 0


@dataclass(frozen=True)
class Feature2D:
    x: float                            # cell coordinates
    y: float
    orientation: float                  # radians
    descriptor: np.ndarray              # (32,) uint8 = 256 bits

    def __post_init__(self):
        d = np.asarray(self.descriptor, dtype=np.uint8).reshape(32)
        d.setflags(write=False)
        object.__setattr__(self, "descriptor", d)


@dataclass(frozen=True)
class MatchReport:
    transform_2d: np.ndarray            # 3x3 homogeneous planar transform
    n_corr: int
    n_in: int
    zeta: float
    epsilon: float
    lam: float
    psi: float
    accepted: bool
    reason: str | None = None

    def __post_init__(self):
        m = np.asarray(self.transform_2d, dtype=np.float64).reshape(3, 3)
        m.setflags(write=False)
        object.__setattr__(self, "transform_2d", m)


def pair_seed(id_a, id_b) -> int:
    """Stable RANSAC seed for an (id, id) pair; independent of hash randomization."""
    return zlib.crc32(repr((id_a, id_b)).encode())


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------

_CIRCLE16 = np.array([
    (0, 3), (1, 3), (2, 2), (3, 1), (3, 0), (3, -1), (2, -2), (1, -3),
    (0, -3), (-1, -3), (-2, -2), (-3, -1), (-3, 0), (-3, 1), (-2, 2), (-1, 3),
])


def _blur(image: MapImage) -> np.ndarray:
    return uniform_filter(image.bits.astype(np.float64), size=3, mode="nearest")


_FIELD_CACHE: dict[tuple[int, float], np.ndarray] = {}
_FIELD_CACHE_MAX = 512


def signed_distance_field(image: MapImage, clip: float = 40.0) -> np.ndarray:
    """Signed distance to the free-region boundary: positive inside free
    space, negative in occupied/unknown cells, saturated at ``clip``.

    Results are cached per image object (images are immutable)."""
    key = (id(image.bits), clip)
    cached = _FIELD_CACHE.get(key)
    if cached is not None:
        return cached
    free = image.bits == 0
    if not free.any() or free.all():
        field = np.where(free, clip, -clip).astype(np.float64)
    else:
        field = np.clip(distance_transform_edt(free) - distance_transform_edt(~free),
                        -clip, clip)
    if len(_FIELD_CACHE) >= _FIELD_CACHE_MAX:
        _FIELD_CACHE.pop(next(iter(_FIELD_CACHE)))
    field.setflags(write=False)
    _FIELD_CACHE[key] = field
    return field


def _subpixel(score: np.ndarray, x: int, y: int) -> tuple[float, float]:
    """Parabolic refinement of a non-max-suppressed response peak."""
    def refine(lo, c, hi):
        denom = lo - 2.0 * c + hi
        if denom >= -1e-12:
            return 0.0
        return float(np.clip(0.5 * (lo - hi) / denom, -0.5, 0.5))

    dx = refine(score[x - 1, y], score[x, y], score[x + 1, y]) if 0 < x < score.shape[0] - 1 else 0.0
    dy = refine(score[x, y - 1], score[x, y], score[x, y + 1]) if 0 < y < score.shape[1] - 1 else 0.0
    return x + dx, y + dy


def detect_features(image: MapImage, params: PrematchParams | None = None) -> list[Feature2D]:
    """Corner keypoints with orientations and steered ring descriptors.

    At most ``max_features`` keypoints are returned, strongest first, with
    sub-cell positions from parabolic refinement of the corner response.
    """
    params = params or PrematchParams()
    img = _blur(image)
    margin = params.patch_radius + 4
    t = params.fast_threshold
    size = GRID_SIZE - 2 * margin

    # segment test on the 16-pixel circle, vectorized over the interior
    interior = img[margin:margin + size, margin:margin + size]
    ring = np.stack([img[margin + dx:margin + dx + size, margin + dy:margin + dy + size]
                     for dx, dy in _CIRCLE16], axis=0)
    brighter = ring > interior[None] + t
    darker = ring < interior[None] - t
    arc = params.fast_arc

    def has_arc(mask: np.ndarray) -> np.ndarray:
        doubled = np.concatenate([mask, mask[:arc - 1]], axis=0)
        hit = np.zeros(interior.shape, dtype=bool)
        for s in range(16):
            hit |= doubled[s:s + arc].all(axis=0)
        return hit

    corners = has_arc(brighter) | has_arc(darker)
    score = np.abs(ring - interior[None]).sum(axis=0)
    score = np.where(corners, score, 0.0)

    # 3x3 non-max suppression
    padded = np.pad(score, 1, mode="constant")
    neigh = np.stack([padded[1 + dx:1 + dx + score.shape[0], 1 + dy:1 + dy + score.shape[1]]
                      for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)])
    keep = corners & (score > 0) & (score >= neigh.max(axis=0))
    xs, ys = np.nonzero(keep)
    if xs.size == 0:
        return []
    order = np.lexsort((ys, xs, -score[xs, ys]))[:params.max_features]
    xs, ys = xs[order], ys[order]

    field = signed_distance_field(image, params.sdf_clip)

    # orientation: intensity centroid of the distance field around the corner
    r = params.patch_radius
    off = np.arange(-r, r + 1)
    ox, oy = np.meshgrid(off, off, indexing="ij")
    disc = (ox * ox + oy * oy) <= r * r
    feats: list[Feature2D] = []
    for x, y in zip(xs, ys):
        fx, fy = _subpixel(score, x, y)
        cx, cy = x + margin, y + margin
        patch = field[cx - r:cx + r + 1, cy - r:cy + r + 1]
        m10 = float(np.sum(ox[disc] * patch[disc]))
        m01 = float(np.sum(oy[disc] * patch[disc]))
        theta = math.atan2(m01, m10)
        feats.append(Feature2D(fx + margin, fy + margin, theta,
                               _describe(field, cx, cy, theta, params)))
    return feats


def _describe(field: np.ndarray, cx: int, cy: int, theta: float,
              params: PrematchParams) -> np.ndarray:
    """256-bit ring code: distance-field samples on steered rings, quantized
    against fixed thresholds (rings x angles x thresholds = 256)."""
    angles = theta + np.arange(params.ring_angles) * (2.0 * np.pi / params.ring_angles)
    cos_a, sin_a = np.cos(angles), np.sin(angles)
    bits = np.zeros(len(params.ring_radii) * len(params.ring_thresholds) * params.ring_angles,
                    dtype=np.uint8)
    k = 0
    for rho in params.ring_radii:
        sx = np.clip(np.rint(cx + rho * cos_a).astype(int), 0, GRID_SIZE - 1)
        sy = np.clip(np.rint(cy + rho * sin_a).astype(int), 0, GRID_SIZE - 1)
        vals = field[sx, sy]
        for t0 in params.ring_thresholds:
            bits[k:k + params.ring_angles] = vals > t0
            k += params.ring_angles
    return np.packbits(bits)


# ---------------------------------------------------------------------------
# matching
# ---------------------------------------------------------------------------

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


def _hamming_matrix(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    """(Na, Nb) Hamming distances between packed descriptor arrays."""
    x = np.bitwise_xor(da[:, None, :], db[None, :, :])
    return _POPCOUNT[x].sum(axis=2)


def match_features(a: list[Feature2D], b: list[Feature2D],
                   ratio: float = 0.8) -> list[tuple[int, int]]:
    """Mutual nearest-descriptor matches passing the ratio test."""
    if not a or not b:
        return []
    da = np.stack([f.descriptor for f in a])
    db = np.stack([f.descriptor for f in b])
    return _match_gated(da, db, np.ones((len(a), len(b)), dtype=bool), ratio)


def _match_gated(da: np.ndarray, db: np.ndarray, allowed: np.ndarray,
                 ratio: float) -> list[tuple[int, int]]:
    """Nearest-descriptor + ratio + mutual-best, restricted to ``allowed`` pairs."""
    return _match_gated_dist(_hamming_matrix(da, db), allowed, ratio)


def _match_gated_dist(hamming: np.ndarray, allowed: np.ndarray,
                      ratio: float) -> list[tuple[int, int]]:
    dist = hamming.astype(np.float64)
    dist[~allowed] = np.inf
    usable_a = np.isfinite(dist).any(axis=1)
    if not usable_a.any():
        return []
    best_b = np.argmin(dist, axis=1)
    best_d = dist[np.arange(dist.shape[0]), best_b]
    part = np.sort(dist, axis=1)
    second = part[:, 1] if dist.shape[1] >= 2 else np.full(dist.shape[0], np.inf)
    best_a_of_b = np.argmin(dist, axis=0)

    out = []
    for ia in range(dist.shape[0]):
        if not usable_a[ia]:
            continue
        ib = int(best_b[ia])
        sec = second[ia]
        if np.isfinite(sec) and best_d[ia] >= ratio * max(float(sec), 1e-9):
            continue
        if int(best_a_of_b[ib]) != ia:
            continue
        out.append((ia, ib))
    return out


# ---------------------------------------------------------------------------
# consensus transform fitting
# ---------------------------------------------------------------------------

def _rigid_refit(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    ca, cb = pa.mean(axis=0), pb.mean(axis=0)
    H = (pa - ca).T @ (pb - cb)
    U, _, Vt = np.linalg.svd(H)
    S = np.diag([1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ S @ U.T
    M = np.eye(3)
    M[:2, :2] = R
    M[:2, 2] = cb - R @ ca
    return M


def _homography_dlt(pa: np.ndarray, pb: np.ndarray) -> np.ndarray | None:
    n = pa.shape[0]
    A = np.zeros((2 * n, 9))
    x, y = pa[:, 0], pa[:, 1]
    u, v = pb[:, 0], pb[:, 1]
    A[0::2] = np.c_[x, y, np.ones(n), np.zeros((n, 3)), -u * x, -u * y, -u]
    A[1::2] = np.c_[np.zeros((n, 3)), x, y, np.ones(n), -v * x, -v * y, -v]
    if np.linalg.matrix_rank(A) < 8:
        return None
    _, _, Vt = np.linalg.svd(A)
    H = Vt[-1].reshape(3, 3)
    if abs(H[2, 2]) < 1e-12:
        return None
    return H / H[2, 2]


def apply_transform_2d(M: np.ndarray, pts: np.ndarray) -> np.ndarray:
    ph = np.c_[pts, np.ones(len(pts))]
    q = ph @ M.T
    w = q[:, 2:3]
    w = np.where(np.abs(w) < 1e-12, 1e-12, w)
    return q[:, :2] / w


def _distinct_pairs(rng: np.random.Generator, n: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    i = rng.integers(0, n, size=count)
    j = rng.integers(0, n - 1, size=count)
    j = j + (j >= i)
    return i, j


def _rigid_hypotheses(rng, pa, pb, count):
    """(count, 2, 2) rotations and (count, 2) translations from 2-point samples."""
    i, j = _distinct_pairs(rng, pa.shape[0], count)
    va = pa[j] - pa[i]
    vb = pb[j] - pb[i]
    ok = (np.linalg.norm(va, axis=1) > 1e-9) & (np.linalg.norm(vb, axis=1) > 1e-9)
    ang = np.arctan2(vb[:, 1], vb[:, 0]) - np.arctan2(va[:, 1], va[:, 0])
    c, s = np.cos(ang), np.sin(ang)
    R = np.empty((count, 2, 2))
    R[:, 0, 0], R[:, 0, 1] = c, -s
    R[:, 1, 0], R[:, 1, 1] = s, c
    mid_a = 0.5 * (pa[i] + pa[j])
    mid_b = 0.5 * (pb[i] + pb[j])
    t = mid_b - np.einsum("bij,bj->bi", R, mid_a)
    return R, t, ok


def fit_transform(matches: list[tuple[int, int]], a: list[Feature2D], b: list[Feature2D],
                  params: PrematchParams | None = None,
                  seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Consensus-maximal planar transform mapping a-coordinates to b-coordinates.

    Hypotheses are scored in vectorized batches with an adaptive early exit
    at ``ransac_confidence``. Returns (3x3 transform refit on inliers,
    boolean inlier mask). Raises InsufficientMatches below the minimal
    sample and NoConsensus when the best support stays under it.
    """
    params = params or PrematchParams()
    sample_size = 2 if params.model == "rigid" else 4
    if len(matches) < sample_size:
        raise InsufficientMatches(f"{len(matches)} matches < {sample_size}")
    pa = np.array([[a[ia].x, a[ia].y] for ia, _ in matches], dtype=np.float64)
    pb = np.array([[b[ib].x, b[ib].y] for _, ib in matches], dtype=np.float64)
    rng = np.random.default_rng(params.seed if seed is None else seed)
    n = len(matches)

    best_count = 0
    best_mask = None
    needed = params.ransac_iterations
    done = 0
    while done < min(needed, params.ransac_iterations):
        batch = min(128, params.ransac_iterations - done)
        done += batch
        if params.model == "rigid":
            R, t, ok = _rigid_hypotheses(rng, pa, pb, batch)
            moved = np.einsum("bij,nj->bni", R, pa) + t[:, None, :]
            res = np.linalg.norm(moved - pb[None], axis=2)
            masks = (res < params.inlier_threshold) & ok[:, None]
        else:
            masks = np.zeros((batch, n), dtype=bool)
            for k in range(batch):
                idx = rng.choice(n, size=4, replace=False)
                M = _homography_dlt(pa[idx], pb[idx])
                if M is None:
                    continue
                res = np.linalg.norm(apply_transform_2d(M, pa) - pb, axis=1)
                masks[k] = res < params.inlier_threshold
        counts = masks.sum(axis=1)
        k_best = int(np.argmax(counts))
        if counts[k_best] > best_count:
            best_count = int(counts[k_best])
            best_mask = masks[k_best]
        if best_count >= sample_size:
            w = best_count / n
            denom = math.log(max(1.0 - w ** sample_size, 1e-12))
            if denom < 0:
                needed = min(params.ransac_iterations,
                             int(math.ceil(math.log(1.0 - params.ransac_confidence) / denom)))
    if best_mask is None or best_count < sample_size:
        raise NoConsensus(f"best support {best_count} < {sample_size}")

    refit = (_rigid_refit(pa[best_mask], pb[best_mask]) if params.model == "rigid"
             else (_homography_dlt(pa[best_mask], pb[best_mask])))
    if refit is None:
        raise NoConsensus("inlier refit degenerate")
    res = np.linalg.norm(apply_transform_2d(refit, pa) - pb, axis=1)
    return refit, res < params.inlier_threshold


# ---------------------------------------------------------------------------
# confidence algebra and the full pre-match
# ---------------------------------------------------------------------------

def _bilinear(field: np.ndarray, pts: np.ndarray) -> np.ndarray:
    x = np.clip(pts[:, 0], 0.0, GRID_SIZE - 1.001)
    y = np.clip(pts[:, 1], 0.0, GRID_SIZE - 1.001)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    fx = x - x0
    fy = y - y0
    return ((1 - fx) * (1 - fy) * field[x0, y0] + fx * (1 - fy) * field[x0 + 1, y0]
            + (1 - fx) * fy * field[x0, y0 + 1] + fx * fy * field[x0 + 1, y0 + 1])


_REFINE_GRID = np.array([(u, v) for u in (-4, -2, 0, 2, 4) for v in (-4, -2, 0, 2, 4)], dtype=np.float64)


def refine_matches(matches: list[tuple[int, int]], a: list[Feature2D], b: list[Feature2D],
                   field_a: np.ndarray, field_b: np.ndarray, transform_2d: np.ndarray,
                   max_shift: float = 3.0) -> list[Feature2D]:
    """Realign each matched b-feature by registering the two distance fields
    locally under the fitted transform.

    Corner responses localize to about a cell; the fields localize better.
    Each b position is replaced by the damped Gauss-Newton alignment of the
    a-feature's field patch inside b's field, so the residuals fed to the
    confidence scores measure how well the maps agree rather than how well
    two blunt corner peaks coincide. Returns a copy of ``b`` with refined
    positions for the matched features.
    """
    if not matches:
        return list(b)
    R = transform_2d[:2, :2]
    m = len(matches)
    pa = np.array([[a[ia].x, a[ia].y] for ia, _ in matches])
    q = np.array([[b[ib].x, b[ib].y] for _, ib in matches], dtype=np.float64)
    grid_a = pa[:, None, :] + _REFINE_GRID[None, :, :]            # (m, 25, 2)
    target = _bilinear(field_a, grid_a.reshape(-1, 2)).reshape(m, -1)
    grid_off = _REFINE_GRID @ R.T

    for _ in range(2):
        grid_b = (q[:, None, :] + grid_off[None, :, :]).reshape(-1, 2)
        vals = _bilinear(field_b, grid_b).reshape(m, -1)
        gx = (_bilinear(field_b, grid_b + (0.5, 0.0))
              - _bilinear(field_b, grid_b - (0.5, 0.0))).reshape(m, -1)
        gy = (_bilinear(field_b, grid_b + (0.0, 0.5))
              - _bilinear(field_b, grid_b - (0.0, 0.5))).reshape(m, -1)
        r = vals - target                                          # (m, 25)
        # damping resists sliding along locally straight boundaries
        JtJ = np.empty((m, 2, 2))
        JtJ[:, 0, 0] = (gx * gx).sum(axis=1) + 2.0
        JtJ[:, 0, 1] = JtJ[:, 1, 0] = (gx * gy).sum(axis=1)
        JtJ[:, 1, 1] = (gy * gy).sum(axis=1) + 2.0
        rhs = -np.stack([(gx * r).sum(axis=1), (gy * r).sum(axis=1)], axis=1)
        delta = np.linalg.solve(JtJ, rhs[..., None])[..., 0]
        norms = np.linalg.norm(delta, axis=1, keepdims=True)
        delta = np.where(norms > max_shift, delta * (max_shift / np.maximum(norms, 1e-12)),
                         delta)
        q = q + delta

    out = list(b)
    moved = np.linalg.norm(q - np.array([[b[ib].x, b[ib].y] for _, ib in matches]), axis=1)
    for k, (_, ib) in enumerate(matches):
        if moved[k] <= max_shift + 1e-9:
            out[ib] = Feature2D(float(q[k, 0]), float(q[k, 1]),
                                b[ib].orientation, b[ib].descriptor)
    return out


def confidences(transform_2d: np.ndarray, matches: list[tuple[int, int]],
                a: list[Feature2D], b: list[Feature2D],
                params: PrematchParams | None = None,
                reason: str | None = None) -> MatchReport:
    """zeta, epsilon, Lambda, Psi for a fitted transform over its match set.

    epsilon is the mean squared residual over the inliers (computing it over
    known outliers would collapse Lambda for every true match), measured in
    units of ``residual_scale`` cells; the unit is a calibration choice and
    the acceptance threshold on Psi is calibrated against it.
    """
    params = params or PrematchParams()
    n_corr = len(matches)
    if n_corr == 0:
        return MatchReport(np.asarray(transform_2d, dtype=np.float64), 0, 0,
                           0.0, math.inf, 0.0, 0.0, False, reason or "no correspondences")
    pa = np.array([[a[ia].x, a[ia].y] for ia, _ in matches])
    pb = np.array([[b[ib].x, b[ib].y] for _, ib in matches])
    res = np.linalg.norm(apply_transform_2d(transform_2d, pa) - pb, axis=1)
    inlier = res < params.inlier_threshold
    n_in = int(inlier.sum())
    zeta = n_in / n_corr
    scaled = res[inlier] / params.residual_scale
    epsilon = float(np.mean(scaled ** 2)) if n_in else math.inf
    lam = 1.0 / (1.0 + epsilon) if math.isfinite(epsilon) else 0.0
    psi = zeta * lam
    accepted = (n_in > params.min_inliers) and (psi >= params.psi_threshold)
    if not accepted and reason is None:
        reason = ("too few inliers" if n_in <= params.min_inliers
                  else "similarity confidence below threshold")
    return MatchReport(transform_2d, n_corr, n_in, zeta, epsilon, lam, psi,
                       accepted, None if accepted else reason)


def _guided_matches(fa: list[Feature2D], fb: list[Feature2D], transform_2d: np.ndarray,
                    gate: float, ratio: float,
                    dist: np.ndarray | None = None) -> list[tuple[int, int]]:
    """Second matching round: same ratio + mutual-best rules, but candidate
    partners are restricted to a spatial gate around the fitted transform."""
    pa = np.array([[f.x, f.y] for f in fa])
    pb = np.array([[f.x, f.y] for f in fb])
    pred = apply_transform_2d(transform_2d, pa)
    allowed = (np.linalg.norm(pred[:, None, :] - pb[None, :, :], axis=2) < gate)
    if not allowed.any():
        return []
    if dist is None:
        da = np.stack([f.descriptor for f in fa])
        db = np.stack([f.descriptor for f in fb])
        dist = _hamming_matrix(da, db)
    return _match_gated_dist(dist, allowed, ratio)


def prematch(image_a: MapImage, image_b: MapImage,
             params: PrematchParams | None = None,
             features_a: list[Feature2D] | None = None,
             features_b: list[Feature2D] | None = None,
             seed: int | None = None) -> MatchReport:
    """detect -> match -> fit -> (guided re-match, refine) -> confidences.

    Never raises: failures come back as a rejected MatchReport with a
    reason. The optional guided round re-applies the same matching rules
    within a spatial gate of the fitted transform, which recovers the
    correspondences the ratio test discards in self-similar scenes; the
    optional refinement realigns matched positions on the distance fields
    so residuals measure map agreement rather than corner-peak jitter.
    """
    params = params or PrematchParams()
    fa = detect_features(image_a, params) if features_a is None else features_a
    fb = detect_features(image_b, params) if features_b is None else features_b
    dist = None
    if fa and fb:
        dist = _hamming_matrix(np.stack([f.descriptor for f in fa]),
                               np.stack([f.descriptor for f in fb]))
        matches = _match_gated_dist(dist, np.ones(dist.shape, dtype=bool), params.ratio)
    else:
        matches = []
    try:
        transform, _ = fit_transform(matches, fa, fb, params, seed=seed)
    except (InsufficientMatches, NoConsensus) as err:
        return MatchReport(np.eye(3), len(matches), 0, 0.0, math.inf, 0.0, 0.0,
                           False, type(err).__name__)
    if params.model == "rigid" and (params.guided or params.refine):
        if params.guided:
            guided = _guided_matches(fa, fb, transform, params.guided_gate, params.ratio,
                                     dist=dist)
            if len(guided) >= 2:
                matches = guided
        if params.refine:
            field_a = signed_distance_field(image_a, params.sdf_clip)
            field_b = signed_distance_field(image_b, params.sdf_clip)
            fb = refine_matches(matches, fa, fb, field_a, field_b, transform)
        pa = np.array([[fa[ia].x, fa[ia].y] for ia, _ in matches])
        pb = np.array([[fb[ib].x, fb[ib].y] for _, ib in matches])
        res = np.linalg.norm(apply_transform_2d(transform, pa) - pb, axis=1)
        inl = res < params.inlier_threshold
        if inl.sum() >= 2:
            transform = _rigid_refit(pa[inl], pb[inl])
    return confidences(transform, matches, fa, fb, params)


def transform_yaw(transform_2d: np.ndarray) -> float:
    """Planar rotation angle of the transform's linear part, radians."""
    return math.atan2(transform_2d[1, 0], transform_2d[0, 0])
