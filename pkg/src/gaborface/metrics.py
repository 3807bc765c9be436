"""Identification and verification performance measures.

Identification quality comes from per-probe ranks of the correct
subject: the cumulative match characteristic (CMC) gives, for every
rank k, the percentage of probes whose correct subject appears within
the best k gallery entries, plotted against 100*k/G.  First-1 is the
CMC at k=1; Cum(p) is the smallest gallery percentage that must be
retrieved to reach a cumulative rate of p; CMCA is the area above the
CMC curve (0 is perfect, 10^4 the theoretical worst).

Verification quality comes from genuine/impostor distance sets swept
over a threshold t: FAR(t) is the percentage of impostor distances at
or below t, FRR(t) the percentage of genuine distances above t.  ROCA
is the trapezoidal area under the FRR-vs-FAR trade-off curve, EER the
rate at the FAR = FRR crossing.  Both FAR and FRR are rank statistics
of the score sets, and the EER crossing is interpolated along the
(FAR, FRR) polyline, so every verification measure is exactly invariant
under strictly increasing transforms of the scores.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidInputError, UnattainableTargetError

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _check_ranks(rankings, gallery_size):
    ranks = np.asarray(rankings, dtype=np.int64)
    if ranks.size == 0:
        raise InvalidInputError("no rankings supplied")
    if gallery_size < 1:
        raise InvalidInputError("gallery size must be >= 1")
    if ranks.min() < 1 or ranks.max() > gallery_size:
        raise InvalidInputError("ranks must lie in [1, gallery size]")
    return ranks


def cmc_curve(rankings, gallery_size: int):
    """Cumulative match characteristic.

    Returns (x, rate): x[k-1] = 100*k/G and rate[k-1] the percentage of
    probes with rank <= k, for k = 1..G.
    """
    ranks = _check_ranks(rankings, gallery_size)
    counts = np.bincount(ranks, minlength=gallery_size + 1)[1:]
    rate = 100.0 * np.cumsum(counts) / ranks.size
    x = 100.0 * np.arange(1, gallery_size + 1) / gallery_size
    return x, rate


def first_one(rankings, gallery_size: int) -> float:
    """Percentage of probes recognized at rank 1."""
    ranks = _check_ranks(rankings, gallery_size)
    return 100.0 * np.count_nonzero(ranks == 1) / ranks.size


def cum_at(rankings, gallery_size: int, target: float) -> float:
    """Smallest gallery percentage reaching a cumulative rate >= target."""
    x, rate = cmc_curve(rankings, gallery_size)
    hit = np.nonzero(rate >= target)[0]
    if hit.size == 0:
        raise UnattainableTargetError(
            f"target rate {target} exceeds maximum attainable {rate[-1]}")
    return float(x[hit[0]])


def cmca(x, rate) -> float:
    """Trapezoidal area above the CMC curve over the full percent axis.

    The curve is extended to the left edge with rate(0) := rate at the
    first rank, so the leading strip [0, 100/G] is a rectangle.
    """
    x = np.asarray(x, dtype=np.float64)
    rate = np.asarray(rate, dtype=np.float64)
    if x.size == 0 or x.shape != rate.shape:
        raise InvalidInputError("empty or mismatched CMC curve")
    xs = np.concatenate(([0.0], x))
    rs = np.concatenate(([rate[0]], rate))
    return float(_trapezoid(100.0 - rs, xs))


@dataclass(frozen=True)
class RocCurve:
    """FAR/FRR trade-off sampled at every distinct score.

    The leading entry is a virtual operating point below the smallest
    score: threshold -inf, FAR 0, FRR 100.
    """

    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray


def roc_and_eer(genuine, impostor):
    """Sweep thresholds over the score support.

    Returns (RocCurve, roca, eer); distances, so smaller genuine scores
    are better and acceptance is score <= threshold.
    """
    gen = np.sort(np.asarray(genuine, dtype=np.float64))
    imp = np.sort(np.asarray(impostor, dtype=np.float64))
    if gen.size == 0 or imp.size == 0:
        raise InvalidInputError("need non-empty genuine and impostor sets")
    thr = np.unique(np.concatenate((gen, imp)))
    far = 100.0 * np.searchsorted(imp, thr, side="right") / imp.size
    frr = 100.0 * (1.0 - np.searchsorted(gen, thr, side="right") / gen.size)

    thresholds = np.concatenate(([-np.inf], thr))
    far = np.concatenate(([0.0], far))
    frr = np.concatenate(([100.0], frr))
    curve = RocCurve(thresholds=thresholds, far=far, frr=frr)

    roca = float(_trapezoid(frr, far))

    # first operating point where FAR has caught up with FRR
    j = int(np.nonzero(far >= frr)[0][0])
    if far[j] == frr[j]:
        eer = float(far[j])
    else:
        df = far[j] - far[j - 1]
        dr = frr[j] - frr[j - 1]
        t = (frr[j - 1] - far[j - 1]) / (df - dr)
        eer = float(far[j - 1] + t * df)
    return curve, roca, eer


@dataclass(frozen=True)
class TrialSet:
    """Raw material of one evaluation: ranks plus verification scores."""

    rankings: tuple
    gallery_size: int
    genuine_scores: tuple = ()
    impostor_scores: tuple = ()


@dataclass(frozen=True)
class EvalReport:
    """The five measures plus the full curves behind them."""

    first1: float
    cum: dict
    cmca: float
    roca: float
    eer: float
    cmc_x: np.ndarray = field(repr=False, default=None)
    cmc_rate: np.ndarray = field(repr=False, default=None)
    roc: RocCurve = field(repr=False, default=None)

    def measures(self) -> dict:
        out = {"first1": self.first1}
        for target in sorted(self.cum):
            out[f"cum@{target:g}"] = self.cum[target]
        out.update(cmca=self.cmca, roca=self.roca, eer=self.eer)
        return out


def evaluate(trials: TrialSet, targets=(97.0, 98.0, 99.0, 100.0)) -> EvalReport:
    """Assemble the full report from one trial set."""
    x, rate = cmc_curve(trials.rankings, trials.gallery_size)
    cum = {}
    for target in targets:
        try:
            cum[float(target)] = cum_at(trials.rankings, trials.gallery_size,
                                        float(target))
        except UnattainableTargetError:
            cum[float(target)] = float("nan")
    area = cmca(x, rate)
    if trials.genuine_scores and trials.impostor_scores:
        curve, roca, eer = roc_and_eer(trials.genuine_scores,
                                       trials.impostor_scores)
    else:
        curve, roca, eer = None, float("nan"), float("nan")
    return EvalReport(first1=first_one(trials.rankings, trials.gallery_size),
                      cum=cum, cmca=area, roca=roca, eer=eer,
                      cmc_x=x, cmc_rate=rate, roc=curve)


# ---------------------------------------------------------------------------
# report.csv: section,x,y,z rows: scalar measures, then curve points

def write_report_csv(path, report: EvalReport, provenance_hex: str = "") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# provenance={provenance_hex}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["section", "x", "y", "z"])
        for name, value in report.measures().items():
            writer.writerow(["measure", name, repr(float(value)), ""])
        if report.cmc_x is not None:
            for x, rate in zip(report.cmc_x, report.cmc_rate):
                writer.writerow(["cmc", repr(float(x)), repr(float(rate)), ""])
        if report.roc is not None:
            for t, far, frr in zip(report.roc.thresholds, report.roc.far,
                                   report.roc.frr):
                writer.writerow(["roc", repr(float(t)), repr(float(far)),
                                 repr(float(frr))])


def read_report_csv(path):
    """Return (measures dict, cmc points, roc points, provenance_hex)."""
    measures, cmc_pts, roc_pts = {}, [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# provenance="):
            raise FormatError(f"{path}: missing provenance line")
        provenance_hex = first.split("=", 1)[1]
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["section", "x", "y", "z"]:
            raise FormatError(f"{path}: unexpected header {header}")
        for section, x, y, z in reader:
            if section == "measure":
                measures[x] = float(y)
            elif section == "cmc":
                cmc_pts.append((float(x), float(y)))
            elif section == "roc":
                roc_pts.append((float(x), float(y), float(z)))
            else:
                raise FormatError(f"{path}: unknown section {section!r}")
    return measures, cmc_pts, roc_pts, provenance_hex
