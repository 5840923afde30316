import os
from dotenv import load_dotenv

load_dotenv()


def _float(name: str, default: float) -> float:
    raw = os.getenv(name)
    return float(raw) if raw not in (None, "") else default


def _int(name: str, default: int) -> int:
    raw = os.getenv(name)
    return int(raw) if raw not in (None, "") else default


class Settings:
    # quadrature
    QUADRATURE_BUDGET: float = _float("LAB_QUADRATURE_BUDGET", 1e-7)
    PANEL_ORDER: int = _int("LAB_PANEL_ORDER", 16)
    PANEL_RATIO: float = _float("LAB_PANEL_RATIO", 2.0)
    PUSHFORWARD_ORDER: int = _int("LAB_PUSHFORWARD_ORDER", 32)
    S_SCALE: float = _float("LAB_S_SCALE", 10.0)
    POISSON_TAIL: float = _float("LAB_POISSON_TAIL", 1e-12)

    # generator tuples
    COMMUTE_TOLERANCE: float = _float("LAB_COMMUTE_TOLERANCE", 1e-10)
    MAX_BOUND: float = _float("LAB_MAX_BOUND", 1e3)
    SPECTRUM_SEED: int = _int("LAB_SPECTRUM_SEED", 0)

    # harness
    OUTPUT_DIR: str = os.getenv("LAB_OUTPUT_DIR", "out")
    LOG_LEVEL: str = os.getenv("LAB_LOG_LEVEL", "INFO")


settings = Settings()
