from __future__ import annotations

import socket

import pytest

from mapless_nav.world import world_from_ascii

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        name, ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k}. {name}: {detail}")


@pytest.fixture
def acceptance(capsys):
    """Record one pass/fail line per criterion; printed in the terminal summary."""

    def record(k: int, name: str, ok: bool, detail: str = "") -> bool:
        _ACCEPTANCE[k] = (name, bool(ok), detail)
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {k}. {name}: {detail}")
        return ok

    return record


class NetworkBlocked(RuntimeError):
    pass


@pytest.fixture
def no_network(monkeypatch):
    """Fail loudly on any outbound socket connection."""
    attempts = []

    def guard(self, address, *args, **kwargs):
        attempts.append(address)
        raise NetworkBlocked(f"network access attempted: {address}")

    monkeypatch.setattr(socket.socket, "connect", guard)
    monkeypatch.setattr(socket.socket, "connect_ex", guard)
    monkeypatch.setattr(socket, "create_connection", lambda *a, **k: guard(None, a))
    return attempts


@pytest.fixture
def corridor():
    """A 1-wide east-west corridor of 8 free cells at row 1."""
    return world_from_ascii(["##########", "#........#", "##########"], target="sofa", objects=[("sofa", (8, 1))], start=(1, 1))


@pytest.fixture
def open_room():
    rows = ["#" * 13] + ["#" + "." * 11 + "#" for _ in range(11)] + ["#" * 13]
    return rows
