from __future__ import annotations
import logging
from pathlib import Path

from rich.logging import RichHandler

# --------- Paths
CORPUS_DIR     = Path("corpus")

# --------- Tolerances
RANK_TOL            = 1e-9     # rank cut, relative to the largest singular value
RECONSTRUCTION_TOL  = 1e-9     # Σ c X − [X_i, X_j], relative
COND_MAX            = 1e12     # decomposition systems worse than this are degenerate
CANONICITY_TOL      = 1e-8     # |B3| and ad4 residual, relative to max ‖w_i‖
FIT_RANK_TOL        = 1e-9     # quadric fit: singular values below this count as null
FIT_GAP_MIN         = 1e6      # s13 / s14 of the 15-column design matrix
SIGNATURE_TOL       = 1e-9     # eigenvalues below this · spectral radius are zero
CONE_TOL            = 1e-5     # geometric vs closed-form cone
QUARTIC_ROUTE_TOL   = 1e-6     # w1-derivative route vs W2 route, relative
QUARTIC_ZERO_TOL    = 1e-7     # scaled; below this a quartic counts as vanishing
W1_VANISH_TOL       = 1e-7     # scaled first invariant of the reduced curve
HELDOUT_TOL         = 1e-6     # quartic fit residual on held-out directions
NORMALIZATION_TOL   = 1e-12    # osculating-quadric input normalization
REDUCTION_TOL       = 1e-12    # reduced-curve velocity, relative to max(1, ‖ε′(t0)‖)
CARTAN_FRAME_TOL    = 1e-9     # b1 − b and Π + (4/3)α3, relative to 1 + max(|b|, |α3|)

# --------- Sampling
N_FIBER        = 32
N_CONE         = 12
MIN_N_FIBER    = 8
MIN_N_CONE     = 6
DEFAULT_SEED   = 0

# --------- Jet budget
MAX_AD_ORDER        = 7        # symbolic ad-powers of the characteristic field
JET_ORDER           = 7        # jet order of the fiber curve used by both quartic routes
RK4_STEPS_PER_UNIT  = 1000

# --------- Logging
LOG_FORMAT = "%(message)s"

_configured = False


def configure_logging(verbose: bool = False) -> None:
    """Install one RichHandler on the package logger (stderr)."""
    global _configured
    root = logging.getLogger("conformal235")
    root.setLevel(logging.INFO if verbose else logging.WARNING)
    if not _configured:
        handler = RichHandler(show_path=False, rich_tracebacks=False, markup=True)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
        root.propagate = False
        _configured = True


def get_logger(name: str) -> logging.Logger:
    short = name.rsplit(".", 1)[-1]
    return logging.getLogger(f"conformal235.{short}")


def parse_floats(text: str, n: int | None = None) -> tuple[float, ...]:
    """'0,0,0,1,0' -> (0.0, 0.0, 0.0, 1.0, 0.0); raises ValueError on a bad count."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    values = tuple(float(p) for p in parts)
    if n is not None and len(values) != n:
        raise ValueError(f"expected {n} comma-separated numbers, got {len(values)}")
    return values


def scaled(value: float, scale: float) -> float:
    """|value| relative to (1 + scale)."""
    return abs(value) / (1.0 + abs(scale))
