"""Participation-ratio loss budgets.

Each channel contributes ``1/Q = p/q`` (participation over material quality)
or, for a seam, ``1/Q = y_seam/g_seam``. The internal quality factor is the
reciprocal of the summed contributions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import yaml

__all__ = [
    "Bound",
    "LossChannel",
    "QValue",
    "LossBudget",
    "BudgetFormatError",
    "channel_q_limit",
    "total_q",
    "dominant_channel",
    "seam_relevance_q",
    "compute_budget",
    "round_sig",
    "load_budget",
    "parse_budget",
    "bundled_fixture",
    "FIXTURES",
]


class Bound(str, Enum):
    EXACT = "exact"
    LOWER = "lower"


class BudgetFormatError(ValueError):
    """Budget document could not be parsed; ``where`` names the offending field."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass(frozen=True)
class LossChannel:
    """A single loss channel.

    Participation channels set ``p`` and ``q``; seam channels set ``y_seam``
    and ``g_seam`` (both in 1/(Ω·m)). ``bound`` marks ``q``/``g_seam`` as a
    lower bound rather than an expected value.
    """

    name: str
    kind: str = "participation"
    p: float | None = None
    q: float | None = None
    y_seam: float | None = None
    g_seam: float | None = None
    bound: Bound = Bound.EXACT

    def __post_init__(self):
        object.__setattr__(self, "bound", Bound(self.bound))
        if self.kind == "participation":
            if self.p is None or self.q is None:
                raise ValueError(f"channel {self.name!r}: participation channel needs p and q")
            if not 0 < self.p <= 1:
                raise ValueError(f"channel {self.name!r}: p must be in (0, 1], got {self.p}")
            if not self.q > 0:
                raise ValueError(f"channel {self.name!r}: q must be > 0, got {self.q}")
        elif self.kind == "seam":
            if self.y_seam is None or self.g_seam is None:
                raise ValueError(f"channel {self.name!r}: seam channel needs y_seam and g_seam")
            if not (self.y_seam > 0 and self.g_seam > 0):
                raise ValueError(f"channel {self.name!r}: y_seam and g_seam must be > 0")
        else:
            raise ValueError(f"channel {self.name!r}: unknown kind {self.kind!r}")

    @property
    def loss(self) -> float:
        """Contribution to ``1/Q``."""
        if self.kind == "seam":
            return self.y_seam / self.g_seam
        return self.p / self.q


@dataclass(frozen=True)
class QValue:
    value: float
    bound: Bound = Bound.EXACT

    def rounded(self, sig: int = 1) -> float:
        return round_sig(self.value, sig)

    def __str__(self):
        prefix = ">" if self.bound is Bound.LOWER else ""
        return f"{prefix}{self.value:.3g}"


def round_sig(x: float, sig: int = 1) -> float:
    """Round to ``sig`` significant figures, halves away from zero.

    Works on the shortest decimal repr of ``x`` so that e.g. ``170/2e-7``
    (stored as 850000000.0000001) and exact halves both round up as printed
    tables do.
    """
    if x == 0 or not math.isfinite(x):
        return x
    d = Decimal(repr(float(x)))
    exp = d.adjusted() - sig + 1
    return float(d.scaleb(-exp).quantize(Decimal(1), rounding=ROUND_HALF_UP).scaleb(exp))


def channel_q_limit(ch: LossChannel) -> QValue:
    """``q/p`` (or ``g/y`` for a seam), carrying the channel's bound flag."""
    if ch.kind == "seam":
        return QValue(ch.g_seam / ch.y_seam, ch.bound)
    return QValue(ch.q / ch.p, ch.bound)


def total_q(channels: Sequence[LossChannel]) -> QValue:
    if not channels:
        raise ValueError("budget has no channels")
    loss = math.fsum(ch.loss for ch in channels)
    bound = Bound.LOWER if any(ch.bound is Bound.LOWER for ch in channels) else Bound.EXACT
    return QValue(1.0 / loss, bound)


def seam_relevance_q(y_seam: float, g_seam: float) -> float:
    """Q below which a seam of admittance ``y_seam`` and quality ``g_seam`` is negligible."""
    if not (y_seam > 0 and g_seam > 0):
        raise ValueError("y_seam and g_seam must be > 0")
    return g_seam / y_seam


@dataclass(frozen=True)
class LossBudget:
    """Per-channel limits and totals for a list of channels.

    ``total`` is the pessimistic total (lower-bound channels contribute at
    their bound). ``optimistic_total`` drops lower-bound channels entirely
    and is ``None`` if every channel is bounded. ``total_from_displayed``
    recombines the per-channel limits after rounding them to ``display_sig``
    figures, which is how a table of one-figure limits sums.
    """

    name: str
    channels: tuple
    per_channel: tuple
    total: QValue
    optimistic_total: QValue | None
    total_from_displayed: QValue
    display_sig: int = 1

    def shares(self, displayed: bool = False) -> dict:
        """Fraction of total loss per channel.

        With ``displayed`` the fractions are taken from the rounded
        per-channel limits, matching a table that only shows those.
        """
        if displayed:
            losses = [1.0 / q.rounded(self.display_sig) for q in self.per_channel]
        else:
            losses = [ch.loss for ch in self.channels]
        total = math.fsum(losses)
        return {ch.name: x / total for ch, x in zip(self.channels, losses)}

    def as_dict(self) -> dict:
        rows = []
        for ch, q in zip(self.channels, self.per_channel):
            rows.append(
                {
                    "name": ch.name,
                    "kind": ch.kind,
                    "Q_limit": q.value,
                    "Q_limit_rounded": q.rounded(self.display_sig),
                    "bound": q.bound.value,
                    "loss_share": self.shares()[ch.name],
                    "loss_share_from_displayed_limits": self.shares(True)[ch.name],
                }
            )
        opt = self.optimistic_total
        return {
            "name": self.name,
            "channels": rows,
            "total_Q": self.total.value,
            "total_Q_rounded": self.total.rounded(self.display_sig),
            "total_bound": self.total.bound.value,
            "optimistic_total_Q": None if opt is None else opt.value,
            "total_Q_from_displayed_limits": self.total_from_displayed.value,
            "total_Q_from_displayed_limits_rounded": self.total_from_displayed.rounded(self.display_sig),
            "display_sig": self.display_sig,
        }


def compute_budget(channels: Iterable[LossChannel], name: str = "budget", display_sig: int = 1) -> LossBudget:
    channels = tuple(channels)
    if not channels:
        raise ValueError("budget has no channels")
    names = [ch.name for ch in channels]
    if len(set(names)) != len(names):
        raise ValueError("channel names must be unique")
    per = tuple(channel_q_limit(ch) for ch in channels)
    exact = [ch for ch in channels if ch.bound is Bound.EXACT]
    displayed = 1.0 / math.fsum(1.0 / q.rounded(display_sig) for q in per)
    return LossBudget(
        name=name,
        channels=channels,
        per_channel=per,
        total=total_q(channels),
        optimistic_total=total_q(exact) if exact else None,
        total_from_displayed=QValue(displayed, total_q(channels).bound),
        display_sig=display_sig,
    )


def dominant_channel(budget: LossBudget, displayed: bool = False) -> list[tuple[str, float]]:
    """Channel(s) with the largest loss term and their share of total loss.

    Ties are all returned, in channel order. ``displayed`` is passed to
    :meth:`LossBudget.shares`.
    """
    shares = budget.shares(displayed)
    top = max(shares.values())
    return [(n, s) for n, s in shares.items() if math.isclose(s, top, rel_tol=1e-12)]


# ---------------------------------------------------------------------------
# Budget documents
# ---------------------------------------------------------------------------

_DATA = Path(__file__).with_name("data")
FIXTURES = ("table1_6061", "table1_5N", "table_s3_storage", "table_s4_seam_package")


def bundled_fixture(name: str) -> Path:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    return _DATA / f"{name}.yaml"


def _number(value, where):
    if isinstance(value, bool):
        raise BudgetFormatError("expected a number", where)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise BudgetFormatError(f"expected a number, got {value!r}", where) from None
    raise BudgetFormatError(f"expected a number, got {type(value).__name__}", where)


def parse_budget(doc, source: str = "<budget>") -> LossBudget:
    """Build a budget from a parsed document ``{name, display_sig, channels: [...]}``."""
    if not isinstance(doc, dict):
        raise BudgetFormatError("top level must be a mapping", source)
    raw = doc.get("channels")
    if not isinstance(raw, list) or not raw:
        raise BudgetFormatError("'channels' must be a non-empty list", f"{source}:channels")
    channels = []
    for i, entry in enumerate(raw):
        where = f"{source}:channels[{i}]"
        if not isinstance(entry, dict):
            raise BudgetFormatError("channel must be a mapping", where)
        unknown = set(entry) - {"name", "kind", "p", "q", "y_seam", "g_seam", "bound"}
        if unknown:
            raise BudgetFormatError(f"unknown field(s) {sorted(unknown)}", where)
        kind = entry.get("kind", "participation")
        kw = {"name": str(entry.get("name", f"channel {i}")), "kind": kind}
        for key in ("p", "q", "y_seam", "g_seam"):
            if key in entry:
                kw[key] = _number(entry[key], f"{where}.{key}")
        try:
            kw["bound"] = Bound(entry.get("bound", "exact"))
            channels.append(LossChannel(**kw))
        except ValueError as exc:
            raise BudgetFormatError(str(exc), where) from None
    sig = doc.get("display_sig", 1)
    if not isinstance(sig, int) or sig < 1:
        raise BudgetFormatError("display_sig must be a positive integer", f"{source}:display_sig")
    try:
        return compute_budget(channels, name=str(doc.get("name", Path(source).stem)), display_sig=sig)
    except ValueError as exc:
        raise BudgetFormatError(str(exc), source) from None


def load_budget(path_or_fixture) -> LossBudget:
    """Load a YAML budget file, or a bundled fixture by name."""
    path = Path(path_or_fixture)
    if not path.exists() and str(path_or_fixture) in FIXTURES:
        path = bundled_fixture(str(path_or_fixture))
    try:
        text = path.read_text()
    except OSError as exc:
        raise BudgetFormatError(f"cannot read ({exc.strerror})", str(path)) from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else str(path)
        raise BudgetFormatError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", where) from None
    return parse_budget(doc, str(path))
