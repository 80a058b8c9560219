import pytest

from app.services.ensemble import EnsembleService
from core import database
from core.config import settings


@pytest.fixture
def db(tmp_path, monkeypatch):
    """Fresh SQLite database and output directory per test."""
    database.configure_engine(f"sqlite:///{tmp_path / 'lab.db'}")
    monkeypatch.setattr(settings, "output_dir", str(tmp_path / "runs"))
    yield database


@pytest.fixture
def square_grid():
    """Sample func(x, y) on [-w, w]^2 with n nodes per side."""
    def sample(func, half_width: float, n: int):
        spacing = 2.0 * half_width / (n - 1)
        return EnsembleService.planar_grid(lambda p: func(p[:, 0], p[:, 1]),
                                           (-half_width, half_width, -half_width, half_width), spacing)
    return sample
