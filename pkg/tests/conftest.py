from __future__ import annotations
from pathlib import Path

import numpy as np
import pytest

from src.conformal235.frame import build_adapted_frame, change_basis
from src.conformal235.models import flat_model, load_model, monge_model

ROOT = Path(__file__).resolve().parents[1]
CORPUS = ROOT / "corpus"

MONGE_Q3_POINT = (0.0, 0.0, 0.0, 1.0, 0.0)

# Built once so that the frame caches are shared between test modules.
FLAT = flat_model()
MONGE_Q2 = monge_model("q^2", "monge_q2")
MONGE_Q3 = monge_model("q^3", "monge_q3", [MONGE_Q3_POINT])
MONGE_Q3_GL2 = load_model(CORPUS / "monge_q3_gl2.json")
FLAT_GL2 = load_model(CORPUS / "flat_gl2.json")


def random_points(rng: np.random.Generator, n: int, q_away_from_zero: bool = False) -> list[tuple]:
    """Base points in [-1, 1]^5; with q_away_from_zero the 4th coordinate has |q| in [0.5, 1.5]."""
    pts = rng.uniform(-1.0, 1.0, size=(n, 5))
    if q_away_from_zero:
        pts[:, 3] = rng.choice([-1.0, 1.0], size=n) * rng.uniform(0.5, 1.5, size=n)
    return [tuple(p) for p in pts]


def random_fiber(rng: np.random.Generator, n: int, floor: float = 0.3) -> list[tuple[float, float]]:
    """(u4, u5) on the unit circle with both entries bounded away from 0."""
    out = []
    while len(out) < n:
        theta = rng.uniform(0.0, 2.0 * np.pi)
        u4, u5 = np.cos(theta), np.sin(theta)
        if min(abs(u4), abs(u5)) >= floor:
            out.append((float(u4), float(u5)))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240)


@pytest.fixture(scope="session")
def flat():
    return build_adapted_frame(FLAT.distribution)


@pytest.fixture(scope="session")
def monge_q2():
    return build_adapted_frame(MONGE_Q2.distribution)


@pytest.fixture(scope="session")
def monge_q3():
    return build_adapted_frame(MONGE_Q3.distribution)


@pytest.fixture(scope="session")
def monge_q3_gl2():
    return build_adapted_frame(MONGE_Q3_GL2.distribution)


@pytest.fixture(scope="session")
def flat_gl2():
    return build_adapted_frame(FLAT_GL2.distribution)


@pytest.fixture(scope="session")
def monge_q3_varying():
    """Monge q³ in a position-dependent basis of D."""
    from src.conformal235.exprcore import parse_expression
    a = parse_expression("1 + x1^2/4")
    b = parse_expression("x3/2")
    D = change_basis(MONGE_Q3.distribution, 1, 0, b, a, "monge_q3_varying")
    return build_adapted_frame(D)
