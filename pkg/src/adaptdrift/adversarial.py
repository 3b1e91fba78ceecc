"""Attacker-induced drift: PGD instance poisoning spread by bagging, and
interpolated poisoned concepts, plus a sweep measuring the damage."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .data import Dataset, WindowedStream, windowize
from .detector import DetectorState
from .embedding import EmbeddingModel, encode, encode_vjp
from .errors import ConfigError, TooFewClasses, UnknownClass
from .system import DriftSystem

INSTANCE_GRID = (0.05, 0.10, 0.15, 0.20, 0.25)
CONCEPT_GRID = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class PgdConfig:
    """``epsilon``/``alpha``/``clip`` are in normalized-feature units.

    ``target=None`` is the untargeted attack. ``clip`` is a ``(lo, hi)`` pair of
    scalars or per-feature arrays, or ``None`` for unbounded features.
    """

    epsilon: float = 0.5
    alpha: float = 0.1
    steps: int = 10
    target: int | None = None
    clip: tuple | None = None

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ConfigError("epsilon must be >= 0")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")


@dataclass(frozen=True)
class PoisonPlan:
    L_inst: tuple[float, ...] = INSTANCE_GRID
    L_conc: tuple[int, ...] = CONCEPT_GRID
    concept_size: int = 250
    bags: int = 5
    seed: int = 0

    def __post_init__(self):
        if any(not 0.0 <= v <= 1.0 for v in self.L_inst):
            raise ConfigError("L_inst values must be in [0, 1]")
        if any(v < 0 for v in self.L_conc):
            raise ConfigError("L_conc values must be >= 0")
        if self.concept_size < 1 or self.bags < 1:
            raise ConfigError("concept_size and bags must be >= 1")


def _prototype_arrays(detector: DetectorState, ids: np.ndarray):
    for c in np.unique(ids):
        if int(c) not in detector.prototypes:
            raise UnknownClass(f"class {int(c)} has no prototype")
    means = np.stack([detector.prototypes[int(c)].mean for c in ids])
    sig = np.stack([detector.prototypes[int(c)].sigma2 for c in ids])
    return means, sig


def _distance_and_grad(H, means, sig, detector: DetectorState):
    """D to the given prototypes and its gradient w.r.t. H.

    The local variance is the prototype's own variance, so the divergence
    reduces to sum(delta^2 / sigma2).
    """
    diff = H - means
    dE = np.sqrt(np.sum(diff * diff, axis=1))
    g = detector.lambda1 * np.divide(diff, dE[:, None], out=np.zeros_like(diff), where=dE[:, None] > 0)
    D = detector.lambda1 * dE
    if detector.use_group:
        D = D + np.sum(diff * diff / sig, axis=1)
        g = g + 2.0 * diff / sig
    return D, g


def attack_objective(model: EmbeddingModel, detector: DetectorState, X: np.ndarray, y: np.ndarray,
                     target: int | None = None, with_grad: bool = False):
    """J = D(f(x), proto_y) - D(f(x), proto_target); the second term only when targeted."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    H = encode(model, X)
    m, s = _prototype_arrays(detector, y)
    J, gh = _distance_and_grad(H, m, s, detector)
    if target is not None:
        tm, ts = _prototype_arrays(detector, np.full(len(y), target))
        Jt, gt = _distance_and_grad(H, tm, ts, detector)
        J, gh = J - Jt, gh - gt
    if not with_grad:
        return J
    return J, encode_vjp(model, X, gh)


def _bounds(x0: np.ndarray, cfg: PgdConfig):
    lo = x0 - cfg.epsilon
    hi = x0 + cfg.epsilon
    if cfg.clip is not None:
        lo = np.maximum(lo, cfg.clip[0])
        hi = np.minimum(hi, cfg.clip[1])
    return lo, hi


def _project(x, x0, lo, hi, eps):
    x = np.clip(x, lo, hi)
    # x0 +/- eps can round one ulp outside the ball; pull such entries back in
    over = np.abs(x - x0) > eps
    while np.any(over):
        x[over] = np.nextafter(x[over], x0[over])
        over = np.abs(x - x0) > eps
    return x


def pgd_attack(model: EmbeddingModel, detector: DetectorState, x: np.ndarray, y_true,
               config: PgdConfig = PgdConfig(), return_trace: bool = False):
    """Signed-gradient ascent on J, projected onto the epsilon ball and clip box.

    Accepts one sample or a batch. With ``return_trace`` also returns the
    per-iteration J values, shape (steps + 1, n).
    """
    x0 = np.asarray(x, dtype=np.float64)
    single = x0.ndim == 1
    X0 = np.atleast_2d(x0)
    y = np.broadcast_to(np.asarray(y_true, dtype=np.int64), (len(X0),))
    if config.target is not None and config.target not in detector.prototypes:
        raise UnknownClass(f"target class {config.target} has no prototype")
    lo, hi = _bounds(X0, config)
    X = X0.copy()
    trace = []
    for _ in range(config.steps):
        J, g = attack_objective(model, detector, X, y, config.target, with_grad=True)
        trace.append(J)
        X = _project(X + config.alpha * np.sign(g), X0, lo, hi, config.epsilon)
    out = X[0] if single else X
    if return_trace:
        trace.append(attack_objective(model, detector, X, y, config.target))
        return out, np.stack(trace)
    return out


def _flip_targets(system: DriftSystem, Xn: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Nearest other class under D for each (perturbed) sample."""
    sc_ids, means, sig, _ = system.detector.stacked()
    H = encode(system.model, Xn)
    out = np.empty(len(y), dtype=np.int64)
    for i, h in enumerate(H):
        D, _ = _distance_and_grad(np.repeat(h[None, :], len(sc_ids), 0), means, sig, system.detector)
        D[sc_ids == y[i]] = np.inf
        out[i] = sc_ids[int(np.argmin(D))]
    return out


def bagged_instance_injection(stream: WindowedStream, system: DriftSystem, L_inst: float,
                              pgd: PgdConfig = PgdConfig(), bags: int = 5, seed: int = 0,
                              flip_labels: bool = False) -> tuple[WindowedStream, list[tuple[int, int]]]:
    """PGD-perturb about ``L_inst`` of every window, chosen through bootstrap bags.

    Each window of n samples gets ``bags`` bootstrap subsamples of size n.
    The window's budget ``round(L_inst * n)`` is split as evenly as possible
    over the bags, and each bag fills its share with not-yet-chosen members in
    bag order, so corruption is spread over the bags and totals exactly the
    budget. Labels stay ``y_true`` unless ``flip_labels``,
    which relabels each corrupted sample to its nearest other class.

    Returns the poisoned stream and the manifest of changed (window, index)
    pairs, sorted. Samples that the attack leaves bit-identical are not listed.
    """
    if not 0.0 <= L_inst <= 1.0:
        raise ConfigError("L_inst must be in [0, 1]")
    if bags < 1:
        raise ConfigError("bags must be >= 1")
    rng = np.random.default_rng(seed)
    windows, manifest = [], []
    for t, win in enumerate(stream):
        n = len(win)
        budget = int(round(L_inst * n))
        quotas = [budget // bags + (b < budget % bags) for b in range(bags)]
        chosen: list[int] = []
        taken = np.zeros(n, dtype=bool)
        for quota in quotas:
            got = 0
            # redraw bootstrap bags until the share is filled (duplicates are common)
            while got < quota:
                for i in rng.integers(0, n, size=n):
                    if got >= quota:
                        break
                    if not taken[i]:
                        taken[i] = True
                        chosen.append(int(i))
                        got += 1
        if not chosen:
            windows.append(win)
            continue
        idx = np.sort(np.asarray(chosen))
        Xn = system.normalizer.transform(win.X[idx])
        Xa = pgd_attack(system.model, system.detector, Xn, win.y[idx], pgd)
        X = win.X.copy()
        y = win.y.copy()
        changed = np.any(Xa != Xn, axis=1)
        X[idx[changed]] = system.normalizer.inverse(Xa[changed])
        if flip_labels:
            y[idx] = _flip_targets(system, Xa, win.y[idx])
            changed = changed | (y[idx] != win.y[idx])
        windows.append(replace(win, X=X, y=y, window=win.window.copy()))
        manifest.extend((t, int(i)) for i in idx[changed])
    return WindowedStream(windows, stream.schema, stream.provenance + f" + bagged PGD(L_inst={L_inst})",
                          stream.concept), manifest


def concept_injection(train: Dataset, L_conc: int, concept_size: int = 250,
                      pairs: Sequence[tuple[int, int]] | None = None, seed: int = 0,
                      fixed_lambda: float | None = None, noise_std: float = 0.01) -> Dataset:
    """``L_conc`` artificial concepts of ``concept_size`` samples each.

    A sample is ``(1 - lam) * x_a + lam * x_b + eta`` with ``x_a`` from the
    source class, ``x_b`` from the target class, ``lam ~ Beta(2, 2)`` and
    ``eta ~ N(0, noise_std^2)``, labeled as the target. ``pairs`` gives one
    (source, target) per concept; by default they are drawn at random.
    ``fixed_lambda`` and ``noise_std`` exist for testing.
    """
    classes = train.classes
    if len(classes) < 2:
        raise TooFewClasses("concept injection needs at least two classes")
    if L_conc < 0 or concept_size < 1:
        raise ConfigError("L_conc must be >= 0 and concept_size >= 1")
    rng = np.random.default_rng(seed)
    if pairs is None:
        pairs = [tuple(int(c) for c in rng.choice(classes, size=2, replace=False)) for _ in range(L_conc)]
    elif len(pairs) != L_conc:
        raise ConfigError("need one (source, target) pair per concept")
    Xs, ys = [], []
    for src, tgt in pairs:
        a_pool = np.flatnonzero(train.y == src)
        b_pool = np.flatnonzero(train.y == tgt)
        if len(a_pool) == 0 or len(b_pool) == 0:
            raise UnknownClass(f"pair ({src}, {tgt}) names a class absent from the training set")
        xa = train.X[rng.choice(a_pool, size=concept_size)]
        xb = train.X[rng.choice(b_pool, size=concept_size)]
        lam = np.full(concept_size, fixed_lambda) if fixed_lambda is not None else rng.beta(2.0, 2.0, concept_size)
        eta = rng.normal(0.0, noise_std, size=xa.shape) if noise_std > 0 else 0.0
        Xs.append((1.0 - lam)[:, None] * xa + lam[:, None] * xb + eta)
        ys.append(np.full(concept_size, tgt, dtype=np.int64))
    if not Xs:
        return replace(train, X=np.empty((0, train.dim)), y=np.empty(0, dtype=np.int64),
                       window=np.empty(0, dtype=np.int64))
    X = np.vstack(Xs)
    return replace(train, X=X, y=np.concatenate(ys), window=np.zeros(len(X), dtype=np.int64))


@dataclass(frozen=True)
class RobustnessRow:
    attack_kind: str
    L_inst: float
    L_conc: int
    seed: int
    clean_f1: float
    poisoned_f1: float
    f1_drop: float
    clean_acc: float
    poisoned_acc: float
    acc_drop: float


ROBUSTNESS_COLUMNS = tuple(RobustnessRow.__dataclass_fields__)


def robustness_sweep(builder: Callable[[Dataset], DriftSystem], train: Dataset,
                     evaluate: Callable[[DriftSystem], tuple[float, float]], plan: PoisonPlan,
                     pgd: PgdConfig = PgdConfig(), window_size: int = 100, seed: int = 0,
                     flip_labels: bool = False) -> list[RobustnessRow]:
    """Poison the training data at each grid point, rebuild, and measure drops.

    ``builder`` trains a system from a training set; ``evaluate`` returns
    (detection F1, classification accuracy) for a system. Instance poisoning
    attacks the clean system (white-box) on the training set cut into
    windows of ``window_size``.
    """
    clean = builder(train)
    f0, a0 = evaluate(clean)
    rows = [RobustnessRow("clean", 0.0, 0, seed, f0, f0, 0.0, a0, a0, 0.0)]
    stream = windowize(train, window_size, "given")
    for L in plan.L_inst:
        poisoned, _ = bagged_instance_injection(stream, clean, L, pgd, plan.bags, plan.seed, flip_labels)
        f, a = evaluate(builder(poisoned.flatten()))
        rows.append(RobustnessRow("instance", float(L), 0, seed, f0, f, f0 - f, a0, a, a0 - a))
    for c in plan.L_conc:
        poison = concept_injection(train, int(c), plan.concept_size, seed=plan.seed)
        f, a = evaluate(builder(Dataset.concat([train, poison])))
        rows.append(RobustnessRow("concept", 0.0, int(c), seed, f0, f, f0 - f, a0, a, a0 - a))
    return rows
