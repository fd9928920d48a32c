"""Behavioral log row types and their CSV serialization.

All timestamps are integer day indices (days since an arbitrary epoch);
there is no timezone or calendar handling anywhere in the package.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

ARM_LABELS = ("personalized", "random", "control")
INTERACTIONS = ("opened", "closed", "ignored")

_REL_TOL = 1e-9


class LogValidationError(ValueError):
    """Raised when an ingested log row violates its invariants."""


@dataclass(frozen=True)
class PurchaseEvent:
    user_id: str
    item_id: str
    day: int
    quantity: int
    unit_price: float
    revenue: float

    def __post_init__(self):
        if self.day < 0:
            raise LogValidationError(f"negative day {self.day} for user {self.user_id}")
        if self.quantity < 1:
            raise LogValidationError(f"quantity {self.quantity} < 1 for user {self.user_id}")
        if self.unit_price < 0:
            raise LogValidationError(f"negative unit_price for user {self.user_id}")
        expected = self.quantity * self.unit_price
        if abs(self.revenue - expected) > _REL_TOL * max(1.0, abs(expected)):
            raise LogValidationError(
                f"revenue {self.revenue} != quantity*unit_price {expected} for user {self.user_id}"
            )


@dataclass(frozen=True)
class NudgeEvent:
    user_id: str
    day: int
    pair: Optional[tuple[str, str]]  # (item_i, item_j); item_j is the infrequent item
    arm_label: str
    interaction: str

    def __post_init__(self):
        if self.arm_label not in ARM_LABELS:
            raise LogValidationError(f"unknown arm label {self.arm_label!r}")
        if self.interaction not in INTERACTIONS:
            raise LogValidationError(f"unknown interaction {self.interaction!r}")
        if self.arm_label == "control" and self.pair is not None:
            raise LogValidationError("control nudge must not carry an item pair")
        if self.day < 0:
            raise LogValidationError(f"negative day {self.day}")

    @property
    def infrequent_item(self) -> Optional[str]:
        """The pair member the user was not buying; stored second by convention."""
        return None if self.pair is None else self.pair[1]


@dataclass(frozen=True)
class LoginEvent:
    user_id: str
    day: int
    session_seconds: float

    def __post_init__(self):
        if self.day < 0:
            raise LogValidationError(f"negative day {self.day}")
        if self.session_seconds < 0:
            raise LogValidationError("negative session_seconds")


@dataclass(frozen=True)
class RewardObservation:
    user_id: str
    decision_day: int
    reward: float


# ---------------------------------------------------------------------------
# CSV interchange.  UTF-8, comma separated, '.' decimal point.

PURCHASE_HEADER = ["user_id", "item_id", "day", "quantity", "unit_price"]
NUDGE_HEADER = ["user_id", "day", "item_i", "item_j", "arm_label", "interaction"]
LOGIN_HEADER = ["user_id", "day", "session_seconds"]
STOCK_HEADER = ["item_id", "in_stock"]


def _open_reader(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return path.open(newline="", encoding="utf-8")


def read_purchase_log(path) -> list[PurchaseEvent]:
    events = []
    with _open_reader(path) as fh:
        for row in csv.DictReader(fh):
            qty = int(row["quantity"])
            price = float(row["unit_price"])
            events.append(
                PurchaseEvent(
                    user_id=row["user_id"],
                    item_id=row["item_id"],
                    day=int(row["day"]),
                    quantity=qty,
                    unit_price=price,
                    revenue=qty * price,
                )
            )
    return events


def write_purchase_log(path, events: Iterable[PurchaseEvent]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PURCHASE_HEADER)
        for e in events:
            writer.writerow([e.user_id, e.item_id, e.day, e.quantity, repr(e.unit_price)])


def read_nudge_log(path) -> list[NudgeEvent]:
    events = []
    with _open_reader(path) as fh:
        for row in csv.DictReader(fh):
            item_i = row["item_i"].strip()
            item_j = row["item_j"].strip()
            pair = (item_i, item_j) if item_i and item_j else None
            events.append(
                NudgeEvent(
                    user_id=row["user_id"],
                    day=int(row["day"]),
                    pair=pair,
                    arm_label=row["arm_label"],
                    interaction=row["interaction"],
                )
            )
    return events


def write_nudge_log(path, events: Iterable[NudgeEvent]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(NUDGE_HEADER)
        for e in events:
            item_i, item_j = e.pair if e.pair is not None else ("", "")
            writer.writerow([e.user_id, e.day, item_i, item_j, e.arm_label, e.interaction])


def read_login_log(path) -> list[LoginEvent]:
    events = []
    with _open_reader(path) as fh:
        for row in csv.DictReader(fh):
            events.append(
                LoginEvent(
                    user_id=row["user_id"],
                    day=int(row["day"]),
                    session_seconds=float(row["session_seconds"]),
                )
            )
    return events


def write_login_log(path, events: Iterable[LoginEvent]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOGIN_HEADER)
        for e in events:
            writer.writerow([e.user_id, e.day, repr(e.session_seconds)])


def read_stock_file(path) -> dict[str, bool]:
    stock = {}
    with _open_reader(path) as fh:
        for row in csv.DictReader(fh):
            stock[row["item_id"]] = bool(int(row["in_stock"]))
    return stock


def write_stock_file(path, stock: dict[str, bool]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(STOCK_HEADER)
        for item, in_stock in stock.items():
            writer.writerow([item, int(in_stock)])


def total_revenue(events: Sequence[PurchaseEvent]) -> float:
    return sum(e.revenue for e in events)
