"""Adversary games and the end-to-end protection benchmark."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats

from . import fmcw
from .extraction import HeartBandFilter, HeartRateEstimate, estimate
from .obfuscation import (FrequencyMultiset, FrequencySpace, ObfuscationKey, collision_bound, enc_model)
from .signal_model import (DecoyConfig, DisplacementSignal, VitalSignSource, superimpose,
                           synthesize_decoys, synthesize_heartbeat)

PIPELINES = ("fmcw", "displacement")
CSV_FIELDS = ("trial_id", "mode", "method", "bpm", "confidence", "ground_truth_bpm", "abs_error")
# a spectral guess within this many BPM of the truth counts as correct
CORRECT_TOLERANCE_BPM = 3.0


class EvalError(RuntimeError):
    pass


def _random_guess(p: int) -> float:
    return 1.0 / (p + 1)


# ---------------------------------------------------------------- adversaries

def posterior(c: FrequencyMultiset, space: FrequencySpace) -> np.ndarray:
    """P(M = c[j] | c) for each position j of the sorted multiset.

    P(M = s_j | c) is proportional to f(s_j) * P(key multiset = c minus s_j),
    where the key's multiset probability carries the multinomial count
    p! / prod(mult!) times prod f.
    """
    values = c.values
    w = space.weights()
    logf = np.array([math.log(w[space.index(v)]) for v in values])
    p = len(values) - 1
    scores = np.empty(len(values))
    for j in range(len(values)):
        rest = Counter(values[:j] + values[j + 1:])
        log_count = math.lgamma(p + 1) - sum(math.lgamma(k + 1) for k in rest.values())
        scores[j] = log_count + logf.sum()
    post = np.exp(scores - scores.max())
    return post / post.sum()


def bayesian_adversary(c: FrequencyMultiset, space: FrequencySpace, rng: np.random.Generator) -> int:
    """Index into ``c.values`` of a maximum-posterior guess; ties broken by ``rng``."""
    post = posterior(c, space)
    best = np.flatnonzero(post >= post.max() * (1 - 1e-12))
    return int(best[rng.integers(len(best))])


@dataclass(frozen=True)
class SpectralGuess:
    bpm: float
    correct: bool
    estimate: HeartRateEstimate


def spectral_adversary(sig: DisplacementSignal, m_truth: float,
                       tolerance: float = CORRECT_TOLERANCE_BPM, **kwargs) -> SpectralGuess:
    """Keyless extraction; an invalid estimate counts as a miss."""
    est = estimate(sig, "unauthorized", **kwargs)
    correct = bool(est.valid and abs(est.bpm - m_truth) <= tolerance)
    return SpectralGuess(est.bpm, correct, est)


# ------------------------------------------------------------ abstract game

@dataclass(frozen=True)
class AbstractGameResult:
    p: int
    N: int
    trials: int
    successes: int
    collisions: int
    good_only: bool

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    @property
    def advantage(self) -> float:
        return self.success_rate - _random_guess(self.p)

    @property
    def collision_rate(self) -> float:
        return self.collisions / self.trials

    @property
    def analytic_bound(self) -> float:
        return collision_bound(self.p, self.N)

    @property
    def success_sigma(self) -> float:
        g = _random_guess(self.p)
        return math.sqrt(g * (1 - g) / self.trials)

    @property
    def collision_sigma(self) -> float:
        b = min(self.analytic_bound, 1.0)
        return math.sqrt(b * (1 - b) / self.trials)


Adversary = Callable[[FrequencyMultiset, FrequencySpace, np.random.Generator], int]


def run_abstract_game(p: int, space: FrequencySpace, trials: int, seed: int = 0,
                      adversary: Adversary = bayesian_adversary, good_only: bool = False,
                      exhaustive: bool = False, batch: int = 200_000) -> AbstractGameResult:
    """Multiset-level game: draw m and k i.i.d., show {m} + k, score the guess.

    Non-colliding ciphertexts carry no positional information, so a guess on
    them is drawn in bulk as a uniform index; every colliding ciphertext goes
    through ``adversary``. ``exhaustive`` sends every ciphertext through
    ``adversary`` instead. With ``good_only`` colliding draws are discarded
    and replaced.
    """
    if p < 1 or trials < 1:
        raise EvalError("need p >= 1 and trials >= 1")
    rng = np.random.default_rng(seed)
    successes = collisions = done = 0
    while done < trials:
        n = min(batch, trials - done)
        idx = space.sample_indices(rng, (n, p + 1))  # column 0 is the message
        srt = np.sort(idx, axis=1)
        coll = np.any(srt[:, 1:] == srt[:, :-1], axis=1)
        good = ~coll
        if good_only:
            idx, good, coll = idx[good], good[good], coll[good]
            n = len(idx)
        ask = np.ones(len(idx), bool) if exhaustive else coll
        # for distinct values, a uniform pick hits the message w.p. 1/(p+1)
        successes += int(np.sum(rng.integers(0, p + 1, size=int((~ask).sum())) == 0))
        for row in idx[ask]:
            m = float(space.value(row[0]))
            c = FrequencyMultiset(tuple(float(v) for v in space.value(row)))
            successes += int(c.values[adversary(c, space, rng)] == m)
        collisions += int(coll.sum())
        done += n
    return AbstractGameResult(p, space.N, trials, successes, collisions, good_only)


# ------------------------------------------------------------ signal game

@dataclass(frozen=True)
class TrialConfig:
    p: int = 3
    space: FrequencySpace = field(default_factory=lambda: FrequencySpace(60.0, 110.0, 0.1))
    profile: str | fmcw.SensorProfile = "mmwave"
    snr_db: float = 20.0
    amplitude_scale: float = 1.0
    base_distance: float = 0.30
    duration: float = 30.0
    trials: int = 50
    seed: int = 0
    source: VitalSignSource = field(default_factory=VitalSignSource)
    decoy: DecoyConfig = field(default_factory=lambda: DecoyConfig(model="mimic"))
    # every pair among the p+1 rates at least this far apart (symmetric
    # conditioning, so message and decoys stay exchangeable)
    min_separation: float = 8.0
    pipeline: str = "fmcw"
    sample_rate: float = 2000.0
    displacement_noise_mm: float = 0.02
    half_bandwidth: float = 2.0
    method: str = "fft_peak"
    workers: int = 1
    # use this key in every trial instead of drawing a fresh one
    fixed_key: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise EvalError("trials must be >= 1")
        if self.duration < 10.0:
            raise EvalError("duration must be >= 10 s")
        if self.p < 0:
            raise EvalError("p must be >= 0")
        if self.pipeline not in PIPELINES:
            raise EvalError(f"pipeline must be one of {PIPELINES}")
        fmcw.get_profile(self.profile)
        if self.fixed_key is not None:
            key = tuple(self.space.snap(f) for f in self.fixed_key)
            if len(key) != self.p:
                raise EvalError("fixed_key length must equal p")
            object.__setattr__(self, "fixed_key", key)


@dataclass(frozen=True)
class TrialRow:
    trial_id: int
    m: float
    key: tuple[float, ...]
    unauthorized: HeartRateEstimate
    authorized: HeartRateEstimate
    spectral_correct: bool
    bayesian_correct: bool
    collision: bool
    redraws: int

    def error(self, mode: str, band: HeartBandFilter = HeartBandFilter()) -> float:
        est = self.authorized if mode == "authorized" else self.unauthorized
        if est.valid:
            return abs(est.bpm - self.m)
        # no estimate: charge the worst in-band error
        lo, hi = band.bpm_range
        return max(abs(self.m - lo), abs(self.m - hi))


@dataclass
class PrivacyReport:
    p: int
    N: int
    trials: int
    empirical_success: float
    advantage: float
    bayesian_success: float
    bayesian_advantage: float
    random_guess: float
    analytic_bound: float
    collision_rate: float
    near_collision_rate: float
    mae_unauthorized: float
    mae_authorized: float
    protection_ratio: float
    paired_p_value: float
    rows: list[TrialRow] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "rows"}
        return d


def draw_rates(cfg: TrialConfig, rng: np.random.Generator) -> tuple[float, tuple[float, ...], bool, int]:
    """Message and key on the grid, redrawn until all pairs are ``min_separation`` apart.

    With ``cfg.fixed_key`` only the message is drawn. Returns (m, key, grid
    collision in the first draw, number of redraws).
    """
    space = cfg.space
    first_collision = None
    redraws = 0
    fixed = None
    if cfg.fixed_key is not None:
        fixed = np.array([space.index(f) for f in cfg.fixed_key], dtype=np.int64)
    for _ in range(100_000):
        if fixed is None:
            idx = space.sample_indices(rng, cfg.p + 1)
        else:
            idx = np.concatenate((space.sample_indices(rng, 1), fixed))
        if first_collision is None:
            first_collision = len(set(idx.tolist())) < len(idx)
        vals = np.sort(space.value(idx))
        gaps = np.diff(vals)
        if fixed is not None:
            gaps = np.abs(vals - float(space.value(idx[0])))
            gaps = gaps[gaps > 0] if np.count_nonzero(gaps == 0) == 1 else np.zeros(1)
        if cfg.p == 0 or np.all(gaps >= cfg.min_separation - 1e-9):
            m = float(space.value(idx[0]))
            return m, tuple(float(v) for v in space.value(idx[1:])), bool(first_collision), redraws
        redraws += 1
    raise EvalError("min_separation too large for the frequency space")


def observe_composite(cfg: TrialConfig, m: float, key: tuple[float, ...],
                      rng: np.random.Generator) -> DisplacementSignal:
    """Synthesize heart + decoys and return what the sensor recovers."""
    src = replace(cfg.source, heart_rate=m)
    true = synthesize_heartbeat(src, cfg.duration, cfg.sample_rate, rng)
    decoys = synthesize_decoys(key, cfg.duration, cfg.sample_rate, cfg.decoy, rng, template=src)
    comp = superimpose(true, decoys)
    if cfg.pipeline == "displacement":
        noise = cfg.displacement_noise_mm * rng.standard_normal(len(comp))
        return DisplacementSignal(comp.samples + noise, comp.sample_rate, "composite")
    scene = fmcw.Scene(cfg.base_distance, comp, cfg.amplitude_scale, cfg.snr_db)
    recovered, _ = fmcw.sense(fmcw.get_profile(cfg.profile), scene, rng)
    return recovered


def trial_rng(seed: int, trial_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial_id]))


def run_trial(cfg: TrialConfig, trial_id: int) -> TrialRow:
    rng = trial_rng(cfg.seed, trial_id)
    try:
        m, key, collision, redraws = draw_rates(cfg, rng)
        sig = observe_composite(cfg, m, key, rng)
        kw = dict(method=cfg.method, half_bandwidth=cfg.half_bandwidth)
        guess = spectral_adversary(sig, m, **kw)
        auth = estimate(sig, "authorized", key=key, **kw)
        if key:
            k = ObfuscationKey(key, cfg.space)
            c = enc_model(k, m)
            bayes_ok = c.values[bayesian_adversary(c, cfg.space, rng)] == m
        else:
            bayes_ok = True
    except Exception as exc:  # noqa: BLE001 - re-raised with trial context
        raise EvalError(f"trial {trial_id} (seed {cfg.seed}) failed: {exc}") from exc
    return TrialRow(trial_id, m, key, guess.estimate, auth, guess.correct, bool(bayes_ok),
                    collision, redraws)


def _run_chunk(args) -> list[TrialRow]:
    cfg, ids = args
    return [run_trial(cfg, i) for i in ids]


def aggregate(cfg: TrialConfig, rows: list[TrialRow]) -> PrivacyReport:
    rows = sorted(rows, key=lambda r: r.trial_id)
    n = len(rows)
    err_u = np.array([r.error("unauthorized") for r in rows])
    err_a = np.array([r.error("authorized") for r in rows])
    mae_u, mae_a = float(err_u.mean()), float(err_a.mean())
    ratio = mae_u / mae_a if mae_a > 0 else float("inf")
    diff = err_u - err_a
    if n > 1 and np.any(diff != diff[0]):
        pval = float(stats.ttest_rel(err_u, err_a, alternative="greater").pvalue)
    else:
        pval = float("nan")
    guess = _random_guess(cfg.p)
    succ = float(np.mean([r.spectral_correct for r in rows]))
    bsucc = float(np.mean([r.bayesian_correct for r in rows]))
    draws = sum(r.redraws + 1 for r in rows)
    return PrivacyReport(
        p=cfg.p, N=cfg.space.N, trials=n,
        empirical_success=succ, advantage=succ - guess,
        bayesian_success=bsucc, bayesian_advantage=bsucc - guess,
        random_guess=guess,
        analytic_bound=collision_bound(cfg.p, cfg.space.N) if cfg.p > 0 else 0.0,
        collision_rate=float(np.mean([r.collision for r in rows])),
        near_collision_rate=sum(r.redraws for r in rows) / draws,
        mae_unauthorized=mae_u, mae_authorized=mae_a, protection_ratio=ratio,
        paired_p_value=pval, rows=rows)


def run_game(cfg: TrialConfig) -> PrivacyReport:
    """Run ``cfg.trials`` independent trials and aggregate them.

    Each trial derives its generator from (seed, trial_id), so the report is
    identical for any worker count.
    """
    ids = list(range(cfg.trials))
    if cfg.workers > 1:
        chunks = [(cfg, ids[i::cfg.workers]) for i in range(cfg.workers)]
        with ProcessPoolExecutor(cfg.workers) as pool:
            rows = [r for part in pool.map(_run_chunk, chunks) for r in part]
    else:
        rows = _run_chunk((cfg, ids))
    return aggregate(cfg, rows)


# ------------------------------------------------------------------ output

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def estimate_rows(report: PrivacyReport) -> list[dict]:
    out = []
    for r in report.rows:
        for mode in ("unauthorized", "authorized"):
            est = r.unauthorized if mode == "unauthorized" else r.authorized
            out.append({"trial_id": r.trial_id, "mode": mode, "method": est.method,
                        "bpm": est.bpm, "confidence": est.confidence,
                        "ground_truth_bpm": r.m, "abs_error": r.error(mode)})
    return out


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for row in rows:
        w.writerow([_fmt(row[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def report(rep: PrivacyReport, path, config: dict | None = None) -> dict[str, Path]:
    """Write ``summary.json`` and ``trials.csv`` into directory ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise EvalError(f"cannot write to {out}: {exc}") from exc
    summary = {k: _json_safe(v) for k, v in rep.summary().items()}
    summary["keys"] = [list(r.key) for r in rep.rows]
    if config is not None:
        summary["config"] = config
    files = {"summary": out / "summary.json", "trials": out / "trials.csv"}
    files["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    files["trials"].write_text(rows_to_csv(estimate_rows(rep)))
    return files


def trial_config_dict(cfg: TrialConfig) -> dict:
    d = asdict(cfg)
    d["space"] = cfg.space.to_dict()
    if isinstance(cfg.profile, fmcw.SensorProfile):
        d["profile"] = cfg.profile.to_dict()
    return d


# --------------------------------------------------------- invariant suite

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _binomial_sigma(prob: float, n: int) -> float:
    return math.sqrt(max(prob * (1 - prob), 0.0) / n)


def invariant_suite(seed: int = 0, trials: int = 100_000, rep: PrivacyReport | None = None,
                    rows_csv: str | None = None) -> list[CheckResult]:
    """Statistical and bookkeeping checks behind ``eval --check``.

    Covers the correctness of decryption, the advantage and collision bounds
    over a grid of (p, N), the zero-advantage good case, and, when a report is
    given, its internal consistency.
    """
    from .obfuscation import dec, gen

    out: list[CheckResult] = []
    rng = np.random.default_rng(seed)
    space = FrequencySpace()
    failures = 0
    for _ in range(1000):
        p = int(rng.integers(1, 6))
        key = gen(p, space, rng)
        m = float(space.value(space.sample_indices(rng, 1)[0]))
        failures += dec(key, enc_model(key, m)) != m
    out.append(CheckResult("dec(enc(m)) == m", failures == 0, f"{failures} failures in 1000"))

    for p in (1, 2, 3, 5):
        for bits in (8, 12, 16):
            sp = FrequencySpace.with_points(45.0, 180.0, 2**bits)
            g = run_abstract_game(p, sp, trials, seed=seed + 7 * p + bits)
            bound = g.analytic_bound
            adv_lim = bound + 3 * g.success_sigma
            col_lim = bound + 3 * g.collision_sigma
            out.append(CheckResult(f"advantage p={p} N=2^{bits}", g.advantage <= adv_lim,
                                   f"{g.advantage:.3g} <= {adv_lim:.3g}"))
            out.append(CheckResult(f"collision rate p={p} N=2^{bits}", g.collision_rate <= col_lim,
                                   f"{g.collision_rate:.3g} <= {col_lim:.3g}"))
    good = run_abstract_game(3, FrequencySpace.with_points(45.0, 180.0, 2**8), trials,
                             seed=seed + 1, good_only=True)
    dev = abs(good.success_rate - 0.25)
    out.append(CheckResult("good-case success = 1/(p+1)", dev <= 3 * good.success_sigma,
                           f"|{good.success_rate:.4f} - 0.25| <= {3 * good.success_sigma:.4f}"))

    if rep is not None:
        lo, hi = -rep.random_guess, 1 - rep.random_guess
        out.append(CheckResult("advantage in range", lo - 1e-12 <= rep.advantage <= hi + 1e-12,
                               f"{rep.advantage:.4f} in [{lo:.4f}, {hi:.4f}]"))
        if rep.mae_authorized > 0:
            ok = math.isclose(rep.protection_ratio, rep.mae_unauthorized / rep.mae_authorized)
            out.append(CheckResult("protection ratio = MAE_u / MAE_a", ok, f"{rep.protection_ratio:.4f}"))
        if rows_csv is not None:
            rows = list(csv.DictReader(io.StringIO(rows_csv)))
            mae = {mode: np.mean([float(r["abs_error"]) for r in rows if r["mode"] == mode])
                   for mode in ("unauthorized", "authorized")}
            ok = math.isclose(mae["unauthorized"], rep.mae_unauthorized) and \
                math.isclose(mae["authorized"], rep.mae_authorized)
            out.append(CheckResult("CSV MAEs match summary", ok,
                                   f"{mae['unauthorized']:.4f}/{mae['authorized']:.4f}"))
    return out
