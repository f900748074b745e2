from __future__ import annotations

import pytest

from aerocoach.guidance_pipeline import OracleBackend


class FakeClock:
    """Deterministic stand-in for time.perf_counter."""

    def __init__(self):
        self.t = 0.0

    def __call__(self) -> float:
        return self.t

    def advance(self, dt: float) -> None:
        self.t += dt


class DelayedBackend:
    """Wraps a backend and charges fake time per call."""

    def __init__(self, inner, clock: FakeClock, delay_s: float):
        self.inner = inner
        self.clock = clock
        self.delay_s = delay_s
        self.backend_id = f"delayed:{inner.backend_id}"

    def complete(self, request):
        self.clock.advance(self.delay_s)
        return self.inner.complete(request)


@pytest.fixture
def fake_clock():
    return FakeClock()


@pytest.fixture
def oracle():
    return OracleBackend()
