"""Test :mod:`dissynth.config`."""

from dissynth.config import Settings


class TestSettings:
    def test_defaults(self):
        settings = Settings()
        assert settings.solver == "clarabel"
        assert settings.undecided_band == 1e-9
        assert settings.margin_cap == 1.0

    def test_environment(self, monkeypatch):
        monkeypatch.setenv("DISSYNTH_SOLVER", "scs")
        monkeypatch.setenv("DISSYNTH_SAMPLES", "500")
        monkeypatch.setenv("DISSYNTH_PSD_TOL", "1e-6")
        settings = Settings()
        assert settings.solver == "scs"
        assert settings.samples == 500
        assert settings.psd_tol == 1e-6
