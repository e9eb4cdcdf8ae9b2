"""Labeled multi-object filtering core.

Represents the posterior as a weighted set of hypotheses, each carrying a
label set, an association-history id, and one Gaussian (plus mode weights
when the standing/fallen extension is enabled) per label. One filter step
predicts survivors and births, proposes multi-camera association vectors
with a Gibbs chain driven by occlusion-adjusted detection probabilities,
re-weights every unique proposal with detection probabilities recomputed on
its own live set, and merges, normalizes, and truncates the result.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ._kernels import gibbs_sweeps, shadow_pair_matrix
from .gaussian import (
    Gaussian,
    UpdateFailedError,
    kalman_predict,
    log_sum_exp,
    moment_match,
    prediction_from_boxes,
    ukf_posterior,
    ukf_update,
    unscented_boxes,
)
from .geometry import BoundingBox, CameraModel
from .models import (
    POS_IDX,
    SHAPE_IDX,
    BirthEntry,
    BirthModel,
    ClutterModel,
    DetectionModel,
    MeasurementModel,
    ModeModel,
    MotionModel,
    SurvivalModel,
    birth_model_at,
    clutter_log_intensity,
    jms_transition_moments,
    survival_prob,
    transition_moments,
)

NEG_INF = -np.inf


class Label(NamedTuple):
    birth_time: int
    index: int


@dataclass(frozen=True)
class TrackDensity:
    """Single-object density: one Gaussian, plus mode weights when enabled."""

    gaussian: Gaussian
    mode_weights: np.ndarray | None = None


@dataclass(frozen=True)
class GlmbComponent:
    labels: tuple[Label, ...]
    history_id: str
    log_weight: float
    densities: dict[Label, TrackDensity]
    # (label, camera index, detection index) triples claimed by this
    # hypothesis; consumed by measurement-driven birth and diagnostics, not
    # part of the density itself.
    assigned: tuple[tuple[Label, int, int], ...] = ()

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("component labels must be distinct")
        if set(self.densities.keys()) != set(self.labels):
            raise ValueError("density keys must equal the label set")


@dataclass(frozen=True)
class GlmbDensity:
    components: tuple[GlmbComponent, ...]
    time: int


@dataclass(frozen=True)
class TruncationBudget:
    """Hypothesis truncation: component cap and global association-sample cap.

    ``exhaustive=True`` replaces Gibbs sampling with full enumeration of the
    feasible association vectors (small instances only; guarded by
    ``enumeration_cap``).
    """

    max_components: int = 1000
    max_samples: int = 5000
    exhaustive: bool = False
    enumeration_cap: int = 200_000


@dataclass(frozen=True)
class FilterModels:
    """Everything one filter step needs, with per-camera model lists."""

    motion: MotionModel
    survival: SurvivalModel
    detection: Sequence[DetectionModel]
    meas: Sequence[MeasurementModel]
    clutter: Sequence[ClutterModel]
    cameras: Sequence[CameraModel]
    birth: BirthModel
    mode: ModeModel | None = None

    def __post_init__(self):
        n = len(self.cameras)
        if not (len(self.detection) == len(self.meas) == len(self.clutter) == n):
            raise ValueError("per-camera model lists must have equal lengths")


def empty_density(time: int) -> GlmbDensity:
    """The all-empty prior: one component, no labels, unit weight."""
    comp = GlmbComponent(labels=(), history_id="", log_weight=0.0, densities={})
    return GlmbDensity(components=(comp,), time=time)


def _log(x: float) -> float:
    return math.log(x) if x > 0.0 else NEG_INF


def _log1m(x: float) -> float:
    return math.log1p(-x) if x < 1.0 else NEG_INF


# ---------------------------------------------------------------------------
# Association factors and sampling


@dataclass(frozen=True)
class AssociationFactors:
    """Per-row (label) association tables in log domain.

    ``log_eta[n, c, 0]`` is the misdetection factor of row ``n`` on camera
    ``c``; ``log_eta[n, c, j]`` for j >= 1 the detection factors. Columns
    past a camera's detection count are -inf. ``log_exist``/``log_dead``
    are the camera-independent live/dead factors (survival or birth
    probability and its complement).
    """

    log_eta: np.ndarray
    log_exist: np.ndarray
    log_dead: np.ndarray
    m_per_cam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "log_eta", np.asarray(self.log_eta, dtype=float))
        object.__setattr__(self, "log_exist", np.asarray(self.log_exist, dtype=float))
        object.__setattr__(self, "log_dead", np.asarray(self.log_dead, dtype=float))
        object.__setattr__(self, "m_per_cam", np.asarray(self.m_per_cam, dtype=np.int64))


def _gibbs_arrays(log_eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split log tables into (exp-shifted weights, row max shifts) for the kernel."""
    if log_eta.size == 0:
        return np.zeros_like(log_eta), np.zeros(log_eta.shape[:2])
    rowmax = np.max(log_eta, axis=2)
    shift = np.where(np.isfinite(rowmax), rowmax, 0.0)
    with np.errstate(invalid="ignore"):
        eta_exp = np.exp(log_eta - shift[:, :, None])
    eta_exp[~np.isfinite(eta_exp)] = 0.0
    return eta_exp, shift


def sample_associations(
    factors: AssociationFactors,
    constraints: Sequence[int],
    n_samples: int,
    rng_seed,
) -> np.ndarray:
    """Draw association vectors with a per-row Gibbs chain.

    The chain starts at the all-live, all-misdetected vector (always
    feasible) and emits its state after every full sweep, so the returned
    array has shape (n_samples, rows, cameras) with -1 marking dead rows.
    Per camera, positive entries are distinct across rows in every sample.
    Deterministic given ``rng_seed``.
    """
    m_per_cam = np.asarray(constraints, dtype=np.int64)
    if not np.array_equal(m_per_cam, factors.m_per_cam):
        raise ValueError("constraints disagree with the factor tables")
    n_rows, n_cams = factors.log_eta.shape[:2]
    if n_samples < 1:
        raise ValueError("need at least one sample")
    eta_exp, rowmax = _gibbs_arrays(factors.log_eta)
    rng = np.random.default_rng(rng_seed)
    uniforms = rng.random((n_samples, n_rows, 1 + n_cams))
    return gibbs_sweeps(
        eta_exp, rowmax, factors.log_exist, factors.log_dead, m_per_cam, uniforms
    )


def _enumerate_associations(factors: AssociationFactors, cap: int) -> np.ndarray:
    """All feasible association vectors with nonzero mass (small instances)."""
    n_rows, n_cams = factors.log_eta.shape[:2]
    m_per_cam = factors.m_per_cam
    out: list[np.ndarray] = []
    current = np.full((n_rows, n_cams), -1, dtype=np.int32)
    used: list[set[int]] = [set() for _ in range(n_cams)]

    def per_row_options(n: int):
        opts = []
        if factors.log_dead[n] > NEG_INF:
            opts.append(None)  # dead
        if factors.log_exist[n] > NEG_INF:
            cam_choices: list[list[int]] = []
            for c in range(n_cams):
                feasible = [0]
                for j in range(1, int(m_per_cam[c]) + 1):
                    if factors.log_eta[n, c, j] > NEG_INF and j not in used[c]:
                        feasible.append(j)
                cam_choices.append(feasible)
            opts.append(cam_choices)
        return opts

    def rec(n: int):
        if n == n_rows:
            out.append(current.copy())
            if len(out) > cap:
                raise RuntimeError(
                    f"association enumeration exceeded the cap of {cap} vectors"
                )
            return
        for opt in per_row_options(n):
            if opt is None:
                current[n, :] = -1
                rec(n + 1)
            else:

                def assign_cam(c: int):
                    if c == n_cams:
                        rec(n + 1)
                        return
                    for j in opt[c]:
                        current[n, c] = j
                        if j > 0:
                            used[c].add(j)
                        assign_cam(c + 1)
                        if j > 0:
                            used[c].discard(j)

                assign_cam(0)

    rec(0)
    if not out:
        return np.empty((0, n_rows, n_cams), dtype=np.int32)
    return np.stack(out)


# ---------------------------------------------------------------------------
# Single-object factors


def psi_factor(
    state_density: Gaussian,
    label: Label,
    pd: float,
    j: int,
    frame_c: Sequence[BoundingBox],
    clutter: ClutterModel,
    meas: MeasurementModel,
    camera: CameraModel,
) -> tuple[float, Gaussian]:
    """Per-object per-camera association factor and conditioned density.

    j = 0 is misdetection: factor (1 - pd), density unchanged. j >= 1
    associates detection ``frame_c[j-1]``: factor pd * marginal / clutter
    intensity, density conditioned by the unscented update. A degenerate
    update yields -inf (the hypothesis is impossible), with the prior
    density returned unchanged.
    """
    if not 0.0 <= pd <= 1.0:
        raise ValueError("detection probability outside [0, 1]")
    if j == 0:
        return _log1m(pd), state_density
    if pd <= 0.0:
        return NEG_INF, state_density
    z = frame_c[j - 1]
    try:
        posterior, marginal = ukf_update(state_density, z, meas, camera)
    except UpdateFailedError:
        return NEG_INF, state_density
    return _log(pd) + marginal - clutter_log_intensity(clutter, z), posterior


def occlusion_pds(
    component: GlmbComponent,
    candidate_labels: Sequence[Label],
    birth: BirthModel,
    motion: MotionModel,
    det: Sequence[DetectionModel],
    cameras: Sequence[CameraModel],
) -> dict[tuple[Label, int], float]:
    """Occlusion-adjusted detection probabilities on the predicted point set.

    Predicted means (one-step motion prediction for the component's labels,
    the birth means for birth labels) form the scene; each candidate label's
    probability on each camera is ``base_pd`` scaled down by ``beta`` when
    any other predicted ellipsoid shadows its center.
    """
    f, drift, _ = transition_moments(motion)
    labels: list[Label] = []
    means: list[np.ndarray] = []
    for lab in component.labels:
        labels.append(lab)
        means.append(f @ component.densities[lab].gaussian.mean + drift)
    for entry in birth.entries:
        labels.append(Label(*entry.label))
        means.append(entry.mean)
    wanted = set(candidate_labels)
    if not wanted.issubset(labels):
        raise ValueError("candidate labels outside the predicted label set")
    out: dict[tuple[Label, int], float] = {}
    if not labels:
        return out
    states = np.stack(means)
    centers = states[:, POS_IDX]
    halfs = np.exp(states[:, SHAPE_IDX])
    for c, camera in enumerate(cameras):
        mat = shadow_pair_matrix(centers, halfs, camera.position)
        occluded = mat.any(axis=1)
        for i, lab in enumerate(labels):
            if lab not in wanted:
                continue
            scale = det[c].beta if occluded[i] else 1.0
            out[(lab, c)] = det[c].base_pd * scale
    return out


# ---------------------------------------------------------------------------
# One filter step


@dataclass
class _Tables:
    """Everything a component's update needs, in row (label) order."""

    labels: list[Label]
    n_surv: int
    predicted: list[TrackDensity]
    log_exist: np.ndarray
    log_dead: np.ndarray
    act_cams: list[int]  # original camera indices, ascending
    m_per_cam: np.ndarray
    z_vecs: list[np.ndarray]  # per active camera (m, 4)
    boxes: list[Sequence[BoundingBox]]
    detect_ll: list[np.ndarray]  # per active camera (rows, m)
    aspect: list[np.ndarray] | None  # per active camera (2, m) mode factors
    base_pd: np.ndarray  # per active camera
    beta: np.ndarray
    shadow: list[np.ndarray]  # per active camera (rows, rows) uint8
    pd_hat: np.ndarray  # (rows, active cameras)
    log_eta: np.ndarray
    ut_cache: dict  # (row, active cam position) -> unscented boxes or None


def _predict_track(td: TrackDensity, models: FilterModels) -> TrackDensity:
    if models.mode is None:
        f, drift, q = transition_moments(models.motion)
        return TrackDensity(kalman_predict(td.gaussian, f, drift, q), None)
    mm = models.mode
    w = td.mode_weights
    if w is None:
        raise ValueError("mode weights required when the mode model is enabled")
    w_pred = w @ mm.transition
    qbar = np.zeros((9, 9))
    dbar = np.zeros(9)
    f = None
    for m in range(2):
        for mp in range(2):
            f, d, q = jms_transition_moments(models.motion, mm, m, mp)
            coeff = w[m] * mm.transition[m, mp]
            qbar += coeff * q
            dbar += coeff * d
    g = kalman_predict(td.gaussian, f, dbar, qbar)
    return TrackDensity(g, w_pred)


def _mode_meas(models: FilterModels, cam: int, mode: int) -> MeasurementModel:
    return MeasurementModel(
        pos_noise_var=models.meas[cam].pos_noise_var,
        extent_noise_var=models.mode.per_mode_extent_var[mode],
    )


def _build_tables(
    component: GlmbComponent,
    frame,
    models: FilterModels,
    births: BirthModel,
    occlusion_aware: bool,
    time_plus: int,
) -> _Tables:
    act_cams = [c for c in range(len(models.cameras)) if frame.active[c]]
    labels: list[Label] = list(component.labels)
    n_surv = len(labels)
    predicted: list[TrackDensity] = []
    log_exist = []
    log_dead = []
    for lab in labels:
        td = component.densities[lab]
        ps = survival_prob(models.survival, td.gaussian.mean, lab.birth_time, time_plus)
        log_exist.append(_log(ps))
        log_dead.append(_log1m(ps))
        predicted.append(_predict_track(td, models))
    for entry in births.entries:
        labels.append(Label(*entry.label))
        log_exist.append(_log(entry.prob))
        log_dead.append(_log1m(entry.prob))
        mw = entry.mode_weights
        if models.mode is not None and mw is None:
            mw = models.mode.birth_mode_weights
        predicted.append(TrackDensity(Gaussian(entry.mean, entry.cov), mw))

    n_rows = len(labels)
    n_act = len(act_cams)
    log_exist = np.asarray(log_exist, dtype=float)
    log_dead = np.asarray(log_dead, dtype=float)

    states = (
        np.stack([td.gaussian.mean for td in predicted])
        if n_rows
        else np.zeros((0, 9))
    )
    centers = states[:, POS_IDX]
    halfs = np.exp(states[:, SHAPE_IDX])

    m_per_cam = np.array(
        [len(frame.boxes[c]) for c in act_cams], dtype=np.int64
    )
    m_max = int(m_per_cam.max()) if n_act else 0

    base_pd = np.array([models.detection[c].base_pd for c in act_cams])
    beta = np.array([models.detection[c].beta for c in act_cams])

    shadow: list[np.ndarray] = []
    pd_hat = np.zeros((n_rows, n_act))
    for ca, c in enumerate(act_cams):
        mat = shadow_pair_matrix(centers, halfs, models.cameras[c].position)
        shadow.append(mat)
        if occlusion_aware and n_rows:
            occ = mat.any(axis=1)
            pd_hat[:, ca] = base_pd[ca] * np.where(occ, beta[ca], 1.0)
        else:
            pd_hat[:, ca] = base_pd[ca]

    z_vecs: list[np.ndarray] = []
    boxes: list[Sequence[BoundingBox]] = []
    detect_ll: list[np.ndarray] = []
    aspect: list[np.ndarray] | None = [] if models.mode is not None else None
    ut_cache: dict = {}
    log_eta = np.full((n_rows, n_act, m_max + 1), NEG_INF)

    for ca, c in enumerate(act_cams):
        cam_boxes = frame.boxes[c]
        m = len(cam_boxes)
        zv = (
            np.stack([b.as_vector() for b in cam_boxes])
            if m
            else np.zeros((0, 4))
        )
        z_vecs.append(zv)
        boxes.append(cam_boxes)
        lc = np.array([clutter_log_intensity(models.clutter[c], b) for b in cam_boxes])
        if np.any(lc == NEG_INF):
            raise ValueError(
                f"camera {c} detection outside the clutter support at time {time_plus}"
            )
        if models.mode is not None and m:
            ratio = np.exp(zv[:, 3] - zv[:, 2])
            a0 = models.mode.rho * (ratio - 1.0)
            aspect.append(np.stack([a0, -a0]))
        elif models.mode is not None:
            aspect.append(np.zeros((2, 0)))

        ll = np.full((n_rows, m), NEG_INF)
        for n, td in enumerate(predicted):
            try:
                ut = unscented_boxes(td.gaussian, models.cameras[c])
            except UpdateFailedError:
                ut = None
            ut_cache[(n, ca)] = ut
            if ut is None or m == 0:
                continue
            pts, wm, wc, raw = ut
            if models.mode is None:
                meas = models.meas[c]
                pred = prediction_from_boxes(
                    td.gaussian, pts, wm, wc, raw, meas.offset, meas.cov
                )
                ll[n] = pred.loglik_many(zv) - lc
            else:
                per_mode = np.full((2, m), NEG_INF)
                for md in range(2):
                    meas = _mode_meas(models, c, md)
                    pred = prediction_from_boxes(
                        td.gaussian, pts, wm, wc, raw, meas.offset, meas.cov
                    )
                    per_mode[md] = (
                        pred.loglik_many(zv)
                        + aspect[ca][md]
                        + _log(float(td.mode_weights[md]))
                    )
                with np.errstate(invalid="ignore"):
                    ll[n] = np.logaddexp(per_mode[0], per_mode[1])
                ll[n][np.isnan(ll[n])] = NEG_INF
        detect_ll.append(ll)

        with np.errstate(divide="ignore"):
            log_eta[:, ca, 0] = np.log1p(-pd_hat[:, ca])
            if m:
                log_eta[:, ca, 1 : m + 1] = (
                    np.log(pd_hat[:, ca])[:, None] + ll
                )

    return _Tables(
        labels=labels,
        n_surv=n_surv,
        predicted=predicted,
        log_exist=log_exist,
        log_dead=log_dead,
        act_cams=act_cams,
        m_per_cam=m_per_cam,
        z_vecs=z_vecs,
        boxes=boxes,
        detect_ll=detect_ll,
        aspect=aspect,
        base_pd=base_pd,
        beta=beta,
        shadow=shadow,
        pd_hat=pd_hat,
        log_eta=log_eta,
        ut_cache=ut_cache,
    )


def _chain_posterior(
    n: int,
    assign: tuple[tuple[int, int], ...],
    tables: _Tables,
    models: FilterModels,
    cache: dict,
):
    """Sequential per-camera conditioning of row ``n`` on its detections.

    ``assign`` holds (active-camera position, detection index >= 1) pairs in
    ascending camera order. Chain states are memoized on shared prefixes.
    A degenerate update mid-chain keeps the current state for that camera
    (its weight contribution was already fixed by the tables).
    """
    td = tables.predicted[n]
    jms = models.mode is not None
    if jms:
        state = ([td.gaussian, td.gaussian], np.log(td.mode_weights))
    else:
        state = td.gaussian
    prefix: tuple[tuple[int, int], ...] = ()
    for step, (ca, j) in enumerate(assign):
        prefix = prefix + ((ca, j),)
        key = (n, prefix)
        if key in cache:
            state = cache[key]
            continue
        c = tables.act_cams[ca]
        camera = models.cameras[c]
        z = tables.z_vecs[ca][j - 1]
        if not jms:
            meas = models.meas[c]
            try:
                if step == 0:
                    ut = tables.ut_cache[(n, ca)]
                    if ut is None:
                        raise UpdateFailedError("predicted projection degenerate")
                else:
                    ut = unscented_boxes(state, camera)
                pts, wm, wc, raw = ut
                pred = prediction_from_boxes(
                    state, pts, wm, wc, raw, meas.offset, meas.cov
                )
                state = ukf_posterior(state, pred, z)
            except UpdateFailedError:
                pass
        else:
            gs, logw = state
            new_gs = list(gs)
            new_logw = logw.copy()
            for md in range(2):
                meas = _mode_meas(models, c, md)
                try:
                    if step == 0:
                        ut = tables.ut_cache[(n, ca)]
                        if ut is None:
                            raise UpdateFailedError("predicted projection degenerate")
                    else:
                        ut = unscented_boxes(gs[md], camera)
                    pts, wm, wc, raw = ut
                    pred = prediction_from_boxes(
                        gs[md], pts, wm, wc, raw, meas.offset, meas.cov
                    )
                    new_gs[md] = ukf_posterior(gs[md], pred, z)
                    new_logw[md] += pred.loglik(z) + tables.aspect[ca][md][j - 1]
                except UpdateFailedError:
                    new_logw[md] = NEG_INF
            state = (new_gs, new_logw)
        cache[key] = state

    if not jms:
        return TrackDensity(state, None)
    gs, logw = state
    if np.all(logw == NEG_INF):
        return TrackDensity(td.gaussian, td.mode_weights)
    w = np.exp(logw - log_sum_exp(logw))
    return TrackDensity(moment_match(logw, gs), w)


def _component_candidates(
    component: GlmbComponent,
    tables: _Tables,
    samples: np.ndarray,
    models: FilterModels,
    occlusion_aware: bool,
    time_plus: int,
):
    """Exact-weight hypotheses from unique association samples of one component."""
    n_rows, n_act = tables.log_eta.shape[:2]
    if samples.size:
        flat = np.ascontiguousarray(samples.reshape(samples.shape[0], -1))
        # First-seen hash dedup, then sort only the survivors: same rows in
        # the same lexicographic order as sorting all samples, without the
        # O(S log S) row sort on the full chain output.
        row_bytes = flat.tobytes()
        stride = flat.shape[1] * flat.itemsize
        firsts: dict[bytes, int] = {}
        for i in range(flat.shape[0]):
            firsts.setdefault(row_bytes[i * stride : (i + 1) * stride], i)
        unique = np.unique(flat[sorted(firsts.values())], axis=0)
        unique = unique.reshape(-1, n_rows, n_act)
    else:
        unique = np.full((1, n_rows, n_act), -1, dtype=np.int32)
    if n_rows == 0:
        unique = unique[:1]

    chain_cache: dict = {}
    out = []
    for gamma in unique:
        live = np.where(gamma[:, 0] >= 0)[0] if n_rows else np.arange(0)
        dead = np.setdiff1d(np.arange(n_rows), live, assume_unique=True)
        logw = component.log_weight + float(tables.log_dead[dead].sum())
        if live.size:
            logw += float(tables.log_exist[live].sum())
        if not np.isfinite(logw):
            continue
        assigned: list[tuple[Label, int, int]] = []
        ok = True
        for ca in range(n_act):
            if live.size == 0:
                break
            if occlusion_aware and live.size > 1:
                sub = tables.shadow[ca][np.ix_(live, live)]
                occ = sub.any(axis=1)
            else:
                occ = np.zeros(live.size, dtype=bool)
            pd = tables.base_pd[ca] * np.where(occ, tables.beta[ca], 1.0)
            js = gamma[live, ca]
            det = js > 0
            with np.errstate(divide="ignore"):
                logw += float(np.log1p(-pd[~det]).sum())
                if det.any():
                    lls = tables.detect_ll[ca][live[det], js[det] - 1]
                    if np.any(lls == NEG_INF):
                        ok = False
                        break
                    logw += float((np.log(pd[det]) + lls).sum())
                    assigned.extend(
                        (tables.labels[i], tables.act_cams[ca], int(j))
                        for i, j in zip(live[det], js[det])
                    )
        if not ok or not np.isfinite(logw):
            continue

        live_labels = tuple(tables.labels[i] for i in live)
        densities: dict[Label, TrackDensity] = {}
        h = hashlib.sha1()
        h.update(component.history_id.encode())
        h.update(str(time_plus).encode())
        for i in live:
            lab = tables.labels[i]
            assign = tuple(
                (ca, int(gamma[i, ca])) for ca in range(n_act) if gamma[i, ca] > 0
            )
            h.update(f"|{lab.birth_time},{lab.index}:".encode())
            h.update(
                ",".join(f"{tables.act_cams[ca]}={j}" for ca, j in assign).encode()
            )
            densities[lab] = _chain_posterior(
                int(i), assign, tables, models, chain_cache
            )
        out.append(
            (live_labels, h.hexdigest(), logw, densities, tuple(assigned))
        )
    return out


def _glmb_step(
    prior: GlmbDensity,
    frame,
    models: FilterModels,
    budget: TruncationBudget,
    rng_seed: int,
    occlusion_aware: bool,
) -> GlmbDensity:
    if not prior.components:
        raise ValueError("prior density has no components")
    time_plus = frame.time
    act_cams = [c for c in range(len(models.cameras)) if frame.active[c]]

    if not act_cams:
        # No observations anywhere: predict in place, reweight by survival,
        # and skip births and death branching entirely.
        comps = []
        for comp in prior.components:
            dens = {}
            logw = comp.log_weight
            for lab in comp.labels:
                td = comp.densities[lab]
                ps = survival_prob(
                    models.survival, td.gaussian.mean, lab.birth_time, time_plus
                )
                logw += _log(ps)
                dens[lab] = _predict_track(td, models)
            comps.append(
                GlmbComponent(
                    labels=comp.labels,
                    history_id=comp.history_id,
                    log_weight=logw,
                    densities=dens,
                )
            )
        return _finalize(comps, budget, time_plus)

    births = birth_model_at(models.birth, time_plus)
    weights = np.array([c.log_weight for c in prior.components])
    probs = np.exp(weights - log_sum_exp(weights))
    probs = probs / probs.sum()
    if budget.exhaustive:
        alloc = np.ones(len(prior.components), dtype=np.int64)
    else:
        alloc_rng = np.random.default_rng(
            np.random.SeedSequence([int(rng_seed), int(time_plus)])
        )
        alloc = alloc_rng.multinomial(budget.max_samples, probs)

    merged: dict[tuple, list] = {}
    for ci, comp in enumerate(prior.components):
        if alloc[ci] == 0:
            continue
        tables = _build_tables(
            comp, frame, models, births, occlusion_aware, time_plus
        )
        n_rows = len(tables.labels)
        factors = AssociationFactors(
            tables.log_eta, tables.log_exist, tables.log_dead, tables.m_per_cam
        )
        if n_rows == 0:
            samples = np.empty((0, 0, len(act_cams)), dtype=np.int32)
        elif budget.exhaustive:
            samples = _enumerate_associations(factors, budget.enumeration_cap)
        else:
            seed = np.random.SeedSequence([int(rng_seed), int(time_plus), ci])
            samples = sample_associations(
                factors, tables.m_per_cam, int(alloc[ci]), seed
            )
        for labels, hid, logw, dens, assigned in _component_candidates(
            comp, tables, samples, models, occlusion_aware, time_plus
        ):
            key = (labels, hid)
            if key in merged:
                merged[key][0] = np.logaddexp(merged[key][0], logw)
            else:
                merged[key] = [logw, dens, assigned]

    comps = [
        GlmbComponent(
            labels=labels,
            history_id=hid,
            log_weight=entry[0],
            densities=entry[1],
            assigned=entry[2],
        )
        for (labels, hid), entry in merged.items()
    ]
    return _finalize(comps, budget, time_plus)


def _finalize(
    comps: list[GlmbComponent], budget: TruncationBudget, time_plus: int
) -> GlmbDensity:
    comps = [c for c in comps if np.isfinite(c.log_weight)]
    if not comps:
        return empty_density(time_plus)
    comps.sort(key=lambda c: (-c.log_weight, c.labels, c.history_id))
    comps = comps[: budget.max_components]
    total = log_sum_exp([c.log_weight for c in comps])
    comps = [
        GlmbComponent(
            labels=c.labels,
            history_id=c.history_id,
            log_weight=c.log_weight - total,
            densities=c.densities,
            assigned=c.assigned,
        )
        for c in comps
    ]
    return GlmbDensity(components=tuple(comps), time=time_plus)


def mv_glmb_oc_step(
    prior: GlmbDensity,
    frame,
    models: FilterModels,
    budget: TruncationBudget,
    rng_seed: int,
) -> GlmbDensity:
    """One occlusion-aware multi-camera filter step.

    Detection probabilities are occlusion-adjusted: the Gibbs proposal uses
    probabilities computed on the full predicted label set, and every unique
    association's weight is recomputed with probabilities on its own live
    set.
    """
    return _glmb_step(prior, frame, models, budget, rng_seed, occlusion_aware=True)


def ms_glmb_step(
    prior: GlmbDensity,
    frame,
    models: FilterModels,
    budget: TruncationBudget,
    rng_seed: int,
) -> GlmbDensity:
    """One multi-camera filter step with constant detection probability
    (the occlusion-model ablation baseline)."""
    return _glmb_step(prior, frame, models, budget, rng_seed, occlusion_aware=False)


# ---------------------------------------------------------------------------
# Estimation and diagnostics


def cardinality_distribution(density: GlmbDensity) -> np.ndarray:
    n_max = max((len(c.labels) for c in density.components), default=0)
    dist = np.zeros(n_max + 1)
    for c in density.components:
        dist[len(c.labels)] += math.exp(c.log_weight)
    return dist


def estimate(density: GlmbDensity) -> list[tuple[Label, np.ndarray, int | None]]:
    """Report the best hypothesis at the most probable cardinality.

    Picks the maximum-a-posteriori cardinality, then the heaviest component
    of that cardinality (stable order: descending weight, then label-set
    order), and reads out each label's mean and, when mode weights are
    present, its most probable mode.
    """
    dist = cardinality_distribution(density)
    n_star = int(np.argmax(dist))
    pool = [c for c in density.components if len(c.labels) == n_star]
    pool.sort(key=lambda c: (-c.log_weight, c.labels, c.history_id))
    best = pool[0]
    out = []
    for lab in sorted(best.labels):
        td = best.densities[lab]
        mode = None
        if td.mode_weights is not None:
            mode = int(np.argmax(td.mode_weights))
        out.append((lab, td.gaussian.mean.copy(), mode))
    return out


def validate_density(density: GlmbDensity, tol: float = 1e-9) -> None:
    """Raise AssertionError when a structural filter invariant is violated."""
    total = sum(math.exp(c.log_weight) for c in density.components)
    assert abs(total - 1.0) <= tol, f"weights sum to {total}"
    seen = set()
    for c in density.components:
        key = (c.labels, c.history_id)
        assert key not in seen, "duplicate (labels, history) component"
        seen.add(key)
        assert len(set(c.labels)) == len(c.labels), "repeated label in component"
        assert set(c.densities) == set(c.labels), "density keys != labels"
    card = cardinality_distribution(density)
    assert abs(card.sum() - 1.0) <= tol, "cardinality distribution not normalized"


def association_probabilities(density: GlmbDensity) -> dict[tuple[int, int], float]:
    """Posterior probability that each (camera, detection) pair is claimed."""
    probs: dict[tuple[int, int], float] = {}
    for c in density.components:
        w = math.exp(c.log_weight)
        for _label, cam, j in c.assigned:
            probs[(cam, j)] = probs.get((cam, j), 0.0) + w
    return probs


def adaptive_birth_entries(
    frame,
    density: GlmbDensity,
    cameras: Sequence[CameraModel],
    template_mean: np.ndarray,
    cov: np.ndarray,
    prob: float,
    next_time: int,
    threshold: float = 0.9,
    radius: float = 0.5,
    cap: int = 10,
    mode_weights: np.ndarray | None = None,
) -> BirthModel:
    """Measurement-driven births from poorly-associated detections.

    Each detection whose posterior association probability is below
    ``threshold`` casts its bottom-center ray to the ground plane; ground
    points within ``radius`` merge into one cluster, and each cluster (up to
    ``cap``) becomes a birth entry at the template mean with its ground
    position substituted.
    """
    template_mean = np.asarray(template_mean, dtype=float)
    assoc = association_probabilities(density)
    points: list[np.ndarray] = []
    for c, camera in enumerate(cameras):
        if not frame.active[c]:
            continue
        for j, box in enumerate(frame.boxes[c], start=1):
            if assoc.get((c, j), 0.0) >= threshold:
                continue
            u = box.center[0]
            v = box.center[1] + math.exp(box.log_extent[1]) / 2.0
            m = camera.proj[:, :3]
            try:
                direction = np.linalg.solve(m, np.array([u, v, 1.0]))
            except np.linalg.LinAlgError:
                continue
            if abs(direction[2]) < 1e-12:
                continue
            lam = -camera.position[2] / direction[2]
            if lam <= 0:
                continue
            ground = camera.position + lam * direction
            points.append(ground[:2])
    clusters: list[list[np.ndarray]] = []
    for p in points:
        placed = False
        for cl in clusters:
            if np.linalg.norm(np.mean(cl, axis=0) - p) <= radius:
                cl.append(p)
                placed = True
                break
        if not placed:
            clusters.append([p])
    entries = []
    for i, cl in enumerate(clusters[:cap]):
        center = np.mean(cl, axis=0)
        mean = template_mean.copy()
        mean[0], mean[2] = center[0], center[1]
        entries.append(
            BirthEntry(
                label=(next_time, i),
                prob=prob,
                mean=mean,
                cov=np.asarray(cov, dtype=float),
                mode_weights=mode_weights,
            )
        )
    return BirthModel(entries=entries, adaptive=True)
