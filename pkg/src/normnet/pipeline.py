"""Training-data generation, staged training, and learned denoising.

The learned scheme alternates two loops. Data generation: categorize faces
by local normal contrast, sample a balanced set, voxelize each sampled face,
and filter with ground-truth guidance to obtain one target normal per
configured filtering width. Denoising: per iteration, voxelize every face,
run the stage's network, take the head for the requested width, and update
vertex positions from the predicted normals.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .gnf import GnfParams, gt_guided_filter_normals, update_vertices
from .mesh import MeshScales, TriangleMesh, build_ring_patch, compute_scales
from .metrics import mean_angular_error
from .net import (
    Adam,
    DEFAULT_MU_G,
    Network,
    NetworkSpec,
    NetworkWeights,
    apply_weights,
    default_network_spec,
    lr_schedule,
    weights_from_network,
)
from .voxelize import (
    VoxelParams,
    VoxelStats,
    compute_normalization,
    load_grid,
    save_grid,
    voxelize_face,
)

logger = logging.getLogger(__name__)

TUPLE_MAGIC = b"NNTG"

# between training stages the corpus is advanced by one network filtering
# pass with this width and this many vertex-update sweeps
STAGE_ADVANCE_MU_G = 0.4
STAGE_ADVANCE_N_V = 20

NETWORK_COUNT = 6

# face categories by the maximum pairwise normal angle (degrees) in the
# 2-ring patch; boundaries belong to the lower category
CATEGORY_THRESHOLDS_DEG = (80.0, 50.0, 20.0)

DEFAULT_INFERENCE_BATCH = 16


class FaceRegion(Enum):
    """Local-surface character of one face, by normal contrast."""

    SHARP_EDGE = "sharp_edge"
    SMALL_EDGE = "small_edge"
    CURVED = "curved"
    SMOOTH = "smooth"


@dataclass(frozen=True)
class FaceCategory:
    """Region label plus the patch angle that produced it."""

    region: FaceRegion
    max_angle_deg: float


@dataclass
class TrainingTuple:
    """One sample: a voxel grid and one pose-frame target normal per width.

    ``targets`` is (n_heads, 3) float32 with unit rows, expressed in the
    grid's normalized frame. ``provenance`` is (mesh index, face index,
    stage) when known.
    """

    grid: "VolumetricGrid"
    targets: np.ndarray
    provenance: tuple[int, int, int] | None = None


@dataclass(frozen=True)
class StagePlan:
    """Schedule mapping denoising iterations to trained networks.

    Iterations 1..3 each get their own network, 4..5 share the fourth,
    6..10 the fifth, and everything beyond the sixth. Also carries the
    filtering parameters used to advance the corpus between stages.
    """

    n_f: int
    advance_mu_g: float = STAGE_ADVANCE_MU_G
    advance_n_v: int = STAGE_ADVANCE_N_V

    def __post_init__(self):
        if self.n_f < 0:
            raise ValueError(f"n_f must be >= 0, got {self.n_f}")
        if self.advance_n_v < 0:
            raise ValueError("advance_n_v must be >= 0")

    @property
    def network_count(self) -> int:
        """How many distinct networks the plan trains."""
        return 0 if self.n_f == 0 else select_cnn(self.n_f, self.n_f)

    def network_for(self, iteration: int) -> int:
        return select_cnn(iteration, self.n_f)


def select_cnn(iteration: int, n_f: int) -> int:
    """Network index (1..6) driving the given 1-based denoising iteration."""
    if not 1 <= iteration <= n_f:
        raise ValueError(f"iteration must be in [1, {n_f}], got {iteration}")
    if iteration <= 3:
        return iteration
    if iteration <= 5:
        return 4
    if iteration <= 10:
        return 5
    return 6


def classify_angle(max_angle_deg: float) -> FaceRegion:
    sharp, small, curved = CATEGORY_THRESHOLDS_DEG
    if max_angle_deg > sharp:
        return FaceRegion.SHARP_EDGE
    if max_angle_deg > small:
        return FaceRegion.SMALL_EDGE
    if max_angle_deg > curved:
        return FaceRegion.CURVED
    return FaceRegion.SMOOTH


def categorize_face(mesh: TriangleMesh, face: int, ring: int = 2) -> FaceCategory:
    """Category of one face from its r-ring patch's maximum normal spread."""
    patch = build_ring_patch(mesh, face, ring)
    members = patch.members[~mesh.degenerate_mask[patch.members]]
    angle = 0.0
    if members.size >= 2:
        normals = mesh.face_normals[members]
        gram = np.clip(normals @ normals.T, -1.0, 1.0)
        angle = float(np.degrees(np.arccos(gram.min())))
    return FaceCategory(region=classify_angle(angle), max_angle_deg=angle)


def categorize_faces(mesh: TriangleMesh, ring: int = 2) -> list[FaceCategory | None]:
    """Categories for all faces; degenerate faces map to None."""
    out: list[FaceCategory | None] = []
    degenerate = mesh.degenerate_mask
    for f in range(mesh.n_faces):
        out.append(None if degenerate[f] else categorize_face(mesh, f, ring))
    return out


def make_target_field(
    mesh: TriangleMesh,
    truth_normals: np.ndarray,
    mu_g_list=DEFAULT_MU_G,
    params: GnfParams | None = None,
    scales: MeshScales | None = None,
) -> np.ndarray:
    """World-frame target normals for every face: (len(mu_g_list), F, 3).

    Each slice is one pass of truth-guided filtering at that width.
    """
    if not mu_g_list:
        raise ValueError("mu_g_list must be non-empty")
    if scales is None:
        scales = compute_scales(mesh)
    fields = []
    for mu in mu_g_list:
        p = (
            GnfParams(
                mu_g=mu,
                mu_d_factor=params.mu_d_factor,
                neighborhood_ring=params.neighborhood_ring,
                epsilon=params.epsilon,
            )
            if params is not None
            else GnfParams(mu_g=mu)
        )
        fields.append(gt_guided_filter_normals(mesh, truth_normals, p, scales=scales))
    return np.stack(fields)


def make_targets(
    mesh: TriangleMesh,
    truth_normals: np.ndarray,
    face: int,
    mu_g_list=DEFAULT_MU_G,
    params: GnfParams | None = None,
) -> np.ndarray:
    """World-frame target normals of one face, one row per width: (N, 3).

    Computes the full field; batch callers should use make_target_field
    once and index it.
    """
    if not 0 <= face < mesh.n_faces:
        raise ValueError(f"face index {face} out of range")
    return make_target_field(mesh, truth_normals, mu_g_list, params)[:, face, :]


def _truth_normals_of(truth) -> np.ndarray:
    if isinstance(truth, TriangleMesh):
        return truth.face_normals
    return np.asarray(truth, dtype=np.float64)


def build_training_set(
    meshes,
    quota: int,
    seed: int,
    *,
    mu_g_list=DEFAULT_MU_G,
    voxel_params: VoxelParams | None = None,
    gnf_params: GnfParams | None = None,
    stage: int = 1,
    stats: VoxelStats | None = None,
) -> list[TrainingTuple]:
    """Balanced training tuples from (noisy mesh, truth) pairs.

    ``truth`` in each pair is a mesh with identical topology or a per-face
    normal array. Faces pool across meshes per category; each category
    contributes min(quota, supply) faces, sampled uniformly without
    replacement under the seed. Targets are truth-guided filtered normals
    rotated into each grid's normalized frame.
    """
    if quota < 1:
        raise ValueError(f"quota must be >= 1, got {quota}")
    if voxel_params is None:
        voxel_params = VoxelParams()
    rng = np.random.default_rng(seed)

    prepared = []
    pools: dict[FaceRegion, list[tuple[int, int]]] = {r: [] for r in FaceRegion}
    for m, (noisy, truth) in enumerate(meshes):
        truth_normals = _truth_normals_of(truth)
        if truth_normals.shape != (noisy.n_faces, 3):
            raise ValueError(
                f"mesh {m}: truth normals shape {truth_normals.shape} does not "
                f"match {noisy.n_faces} faces"
            )
        scales = compute_scales(noisy)
        targets = make_target_field(
            noisy, truth_normals, mu_g_list, gnf_params, scales=scales
        )
        prepared.append((noisy, scales, targets))
        for f, category in enumerate(categorize_faces(noisy)):
            if category is not None:
                pools[category.region].append((m, f))

    selected: list[tuple[int, int]] = []
    for region in FaceRegion:
        pool = pools[region]
        if not pool:
            logger.warning("no faces in category %s; skipping it", region.value)
            continue
        if len(pool) <= quota:
            if len(pool) < quota:
                logger.warning(
                    "category %s has %d faces, short of quota %d; taking all",
                    region.value, len(pool), quota,
                )
            picks = list(range(len(pool)))
        else:
            picks = sorted(rng.choice(len(pool), size=quota, replace=False))
        selected.extend(pool[i] for i in picks)

    tuples = []
    for m, f in selected:
        noisy, scales, targets = prepared[m]
        grid = voxelize_face(noisy, f, voxel_params, scales=scales, stats=stats)
        rotation = compute_normalization(noisy, f, voxel_params).rotation
        pose_targets = targets[:, f, :] @ rotation.T
        tuples.append(
            TrainingTuple(
                grid=grid,
                targets=pose_targets.astype(np.float32),
                provenance=(m, f, stage),
            )
        )
    return tuples


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainingResult:
    weights: NetworkWeights
    losses: list[float] = field(default_factory=list)
    steps: int = 0


def _stack_tuples(tuples, spec: NetworkSpec):
    edge = spec.input_edge
    x = np.empty((len(tuples), edge, edge, edge, spec.input_channels), np.float32)
    y = np.empty((len(tuples), spec.output_width), np.float32)
    for i, t in enumerate(tuples):
        if t.grid.labels.shape != x.shape[1:]:
            raise ValueError(
                f"tuple {i}: grid shape {t.grid.labels.shape} does not match "
                f"network input {x.shape[1:]}"
            )
        if t.targets.shape != (spec.n_heads, 3):
            raise ValueError(
                f"tuple {i}: {t.targets.shape[0]} targets for "
                f"{spec.n_heads} network heads"
            )
        x[i] = t.grid.labels
        y[i] = t.targets.reshape(-1)
    return x, y


def train_network(
    tuples,
    spec: NetworkSpec | None = None,
    *,
    epochs: int = 10,
    batch_size: int = 80,
    seed: int = 0,
    max_steps: int | None = None,
    target_loss: float | None = None,
    initial: NetworkWeights | None = None,
    log_every: int = 50,
) -> TrainingResult:
    """Adam training over the tuples; returns final weights and loss trace.

    Stops after ``epochs`` shuffled passes, or earlier at ``max_steps``
    or when the batch loss drops below ``target_loss``.
    """
    if not tuples:
        raise ValueError("no training tuples")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if spec is None:
        spec = default_network_spec(n_heads=tuples[0].targets.shape[0])
    x, y = _stack_tuples(tuples, spec)

    net = Network(spec, seed=seed)
    if initial is not None:
        apply_weights(net, initial)
    opt = Adam(net.parameters())
    rng = np.random.default_rng(seed)
    result = TrainingResult(weights=weights_from_network(net))

    stop = False
    for _ in range(epochs):
        order = rng.permutation(len(tuples))
        for lo in range(0, len(order), batch_size):
            batch = order[lo : lo + batch_size]
            loss, grads = net.forward_backward(x[batch], y[batch], training=True)
            result.losses.append(loss)
            if result.steps % log_every == 0:
                logger.info("step %d loss %.6f", result.steps, loss)
            if target_loss is not None and loss < target_loss:
                stop = True
                break
            opt.step(grads, lr_schedule(opt.step_count))
            result.steps += 1
            if max_steps is not None and result.steps >= max_steps:
                stop = True
                break
        if stop:
            break
    result.weights = weights_from_network(net, step=opt.step_count)
    return result


# ---------------------------------------------------------------------------
# learned denoising


@dataclass(frozen=True)
class LearnedDenoiseParams:
    """Iteration counts and the filtering width whose head drives updates."""

    n_f: int
    n_v: int
    mu_g: float

    def __post_init__(self):
        if self.n_f < 0 or self.n_v < 0:
            raise ValueError("n_f and n_v must be >= 0")


@dataclass
class DenoiseStats:
    zero_output_fallbacks: int = 0
    degenerate_faces: int = 0
    e_a_trace: list[float] = field(default_factory=list)


def _head_index(spec: NetworkSpec, mu_g: float) -> int:
    for i, mu in enumerate(spec.mu_g_list):
        if mu == mu_g:
            return i
    raise ValueError(
        f"mu_g {mu_g} is not one of the trained widths {tuple(spec.mu_g_list)}"
    )


def network_filter_pass(
    mesh: TriangleMesh,
    net: Network,
    head: int,
    n_v: int,
    voxel_params: VoxelParams,
    stats: DenoiseStats | None = None,
    batch_size: int = DEFAULT_INFERENCE_BATCH,
) -> TriangleMesh:
    """One learned filtering iteration: predict normals, update vertices.

    Degenerate faces and zero network outputs keep their current normals.
    """
    scales = compute_scales(mesh)
    degenerate = mesh.degenerate_mask
    active = np.flatnonzero(~degenerate)
    if stats is not None:
        stats.degenerate_faces += int(degenerate.sum())

    normals = mesh.face_normals.copy()
    spec = net.spec
    edge = spec.input_edge
    batch = np.empty((batch_size, edge, edge, edge, spec.input_channels), np.float32)
    rotations = np.empty((batch_size, 3, 3))
    for lo in range(0, active.size, batch_size):
        faces = active[lo : lo + batch_size]
        for i, f in enumerate(faces):
            grid = voxelize_face(mesh, int(f), voxel_params, scales=scales)
            batch[i] = grid.labels
            rotations[i] = compute_normalization(mesh, int(f), voxel_params).rotation
        outputs = net.forward(batch[: faces.size], training=False)
        picked = outputs[:, 3 * head : 3 * head + 3].astype(np.float64)
        # back to world frame, then to unit length
        world = np.einsum("nij,ni->nj", rotations[: faces.size], picked)
        norms = np.linalg.norm(world, axis=1)
        ok = norms > 0.0
        if not ok.all():
            fallbacks = int((~ok).sum())
            logger.warning(
                "%d zero network outputs; keeping current normals", fallbacks
            )
            if stats is not None:
                stats.zero_output_fallbacks += fallbacks
        normals[faces[ok]] = world[ok] / norms[ok, None]
    if n_v < 1:
        # without vertex sweeps the predictions never reach the mesh
        return mesh
    return update_vertices(mesh, normals, n_v)


def _as_weight_map(weight_set, required: set[int]) -> dict[int, NetworkWeights]:
    if isinstance(weight_set, NetworkWeights):
        return {i: weight_set for i in required}
    weight_map = dict(weight_set)
    missing = required - set(weight_map)
    if missing:
        raise ValueError(
            f"weights missing for required network index {sorted(missing)[0]}"
        )
    return weight_map


def denoise_learned(
    mesh: TriangleMesh,
    weight_set,
    params: LearnedDenoiseParams,
    *,
    spec: NetworkSpec | None = None,
    voxel_params: VoxelParams | None = None,
    truth: TriangleMesh | None = None,
    stats: DenoiseStats | None = None,
    batch_size: int = DEFAULT_INFERENCE_BATCH,
) -> TriangleMesh:
    """Iterative learned denoising with the staged network schedule.

    ``weight_set`` maps network index (1..6) to weights; a single
    NetworkWeights is shared across all stages. With ``truth`` given, the
    per-iteration angular error lands in ``stats.e_a_trace``.
    """
    if spec is None:
        spec = default_network_spec()
    if voxel_params is None:
        voxel_params = VoxelParams()
    head = _head_index(spec, params.mu_g)
    if params.n_f == 0:
        return mesh
    required = {select_cnn(it, params.n_f) for it in range(1, params.n_f + 1)}
    weight_map = _as_weight_map(weight_set, required)

    net = Network(spec, seed=0)
    current = mesh
    loaded = None
    for it in range(1, params.n_f + 1):
        index = select_cnn(it, params.n_f)
        if index != loaded:
            apply_weights(net, weight_map[index])
            loaded = index
        current = network_filter_pass(
            current, net, head, params.n_v, voxel_params, stats, batch_size
        )
        if truth is not None:
            e_a = mean_angular_error(current, truth)
            logger.info("iteration %d: E_a %.4f deg", it, e_a)
            if stats is not None:
                stats.e_a_trace.append(e_a)
    return current


def advance_training_meshes(
    meshes,
    weights: NetworkWeights,
    *,
    spec: NetworkSpec | None = None,
    voxel_params: VoxelParams | None = None,
    mu_g: float = STAGE_ADVANCE_MU_G,
    n_v: int = STAGE_ADVANCE_N_V,
    batch_size: int = DEFAULT_INFERENCE_BATCH,
) -> list[TriangleMesh]:
    """One network filtering pass over the whole corpus, between stages."""
    if spec is None:
        spec = default_network_spec()
    if voxel_params is None:
        voxel_params = VoxelParams()
    head = _head_index(spec, mu_g)
    net = Network(spec, seed=0)
    apply_weights(net, weights)
    return [
        network_filter_pass(mesh, net, head, n_v, voxel_params,
                            batch_size=batch_size)
        for mesh in meshes
    ]


def run_iterative_training(
    corpus,
    plan: StagePlan,
    quota: int,
    seed: int,
    *,
    spec: NetworkSpec | None = None,
    voxel_params: VoxelParams | None = None,
    gnf_params: GnfParams | None = None,
    train_options: dict | None = None,
) -> dict[int, NetworkWeights]:
    """Alternate data generation and training, one stage per network.

    ``corpus`` is a list of (noisy mesh, truth) pairs. Stage i trains
    network i on tuples from the current meshes, then advances the meshes
    with it. Returns the trained weights keyed by network index.
    """
    if spec is None:
        spec = default_network_spec()
    if voxel_params is None:
        voxel_params = VoxelParams()
    options = dict(train_options or {})
    meshes = [noisy for noisy, _ in corpus]
    truths = [truth for _, truth in corpus]
    trained: dict[int, NetworkWeights] = {}
    stages = plan.network_count
    for stage in range(1, stages + 1):
        tuples = build_training_set(
            list(zip(meshes, truths)),
            quota,
            seed + stage,
            mu_g_list=spec.mu_g_list,
            voxel_params=voxel_params,
            gnf_params=gnf_params,
            stage=stage,
        )
        logger.info("stage %d: %d tuples", stage, len(tuples))
        result = train_network(tuples, spec, seed=seed + stage, **options)
        trained[stage] = result.weights
        logger.info(
            "stage %d: trained %d steps, final loss %.6f",
            stage, result.steps, result.losses[-1] if result.losses else float("nan"),
        )
        if stage < stages:
            meshes = advance_training_meshes(
                meshes, result.weights, spec=spec, voxel_params=voxel_params,
                mu_g=plan.advance_mu_g, n_v=plan.advance_n_v,
            )
    return trained


# ---------------------------------------------------------------------------
# training-set files


def save_training_set(tuples, directory) -> None:
    """Write grids to tuples/NNNNNNNN.nnvx plus a targets.bin index."""
    directory = Path(directory)
    grid_dir = directory / "tuples"
    grid_dir.mkdir(parents=True, exist_ok=True)
    records = [TUPLE_MAGIC, struct.pack("<I", len(tuples))]
    for i, t in enumerate(tuples):
        save_grid(t.grid, grid_dir / f"{i:08d}.nnvx")
        targets = np.ascontiguousarray(t.targets, dtype="<f4")
        records.append(struct.pack("<I", i))
        records.append(targets.tobytes())
    (directory / "targets.bin").write_bytes(b"".join(records))


def load_training_set(directory) -> list[TrainingTuple]:
    """Read a directory written by save_training_set."""
    directory = Path(directory)
    blob = (directory / "targets.bin").read_bytes()
    if len(blob) < 8:
        raise ValueError(f"{directory}: truncated targets.bin")
    if blob[:4] != TUPLE_MAGIC:
        raise ValueError(f"{directory}: bad targets.bin magic {blob[:4]!r}")
    (count,) = struct.unpack_from("<I", blob, 4)
    body = len(blob) - 8
    if count == 0:
        if body:
            raise ValueError(f"{directory}: trailing bytes in empty targets.bin")
        return []
    if body % count:
        raise ValueError(f"{directory}: targets.bin size does not divide evenly")
    record = body // count
    if record < 16 or (record - 4) % 12:
        raise ValueError(f"{directory}: bad targets.bin record size {record}")
    n_heads = (record - 4) // 12
    tuples = []
    offset = 8
    for _ in range(count):
        (grid_id,) = struct.unpack_from("<I", blob, offset)
        targets = np.frombuffer(
            blob, dtype="<f4", count=3 * n_heads, offset=offset + 4
        ).reshape(n_heads, 3).copy()
        offset += record
        grid = load_grid(directory / "tuples" / f"{grid_id:08d}.nnvx")
        tuples.append(TrainingTuple(grid=grid, targets=targets))
    return tuples
