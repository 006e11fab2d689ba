from __future__ import annotations

import pytest

from app.config import settings


@pytest.fixture
def runs_dir(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "runs_dir", tmp_path / "runs")
    return tmp_path / "runs"
