"""Shared builders for the unit tests."""

from __future__ import annotations

from nudgelab.events import LoginEvent, NudgeEvent, PurchaseEvent


def buy(user: str, item: str, day: int, price: float = 10.0, qty: int = 1) -> PurchaseEvent:
    return PurchaseEvent(user_id=user, item_id=item, day=day, quantity=qty,
                         unit_price=price, revenue=qty * price)


def login(user: str, day: int, seconds: float = 60.0) -> LoginEvent:
    return LoginEvent(user_id=user, day=day, session_seconds=seconds)


def nudge(user: str, day: int, pair=None, arm: str = "personalized",
          interaction: str = "ignored") -> NudgeEvent:
    return NudgeEvent(user_id=user, day=day, pair=pair, arm_label=arm, interaction=interaction)


def daily_logins(users, start: int, end: int, seconds: float = 60.0):
    return [login(u, d, seconds) for u in users for d in range(start, end)]
