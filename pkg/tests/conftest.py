import numpy as np
import pytest

from joinlab import config, pipeline, repcore
from joinlab.repcore import Factor, FactorKind, RepresentationSpec

# acceptance verdict lines, echoed in the terminal summary
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: s.split("criterion", 1)[1]):
            terminalreporter.write_line(line)


def schottky(lam: float, beta_deg: float, lam_b: float | None = None):
    """A = diag(lam), B = diag(lam_b) conjugated by the rotation through beta/2."""
    a = repcore.diag(lam)
    b = repcore.conjugate(repcore.rotation(np.radians(beta_deg) / 2), repcore.diag(lam_b or lam))
    return a, b


def real_factor(*gens) -> Factor:
    return Factor(FactorKind.REAL2, tuple(gens))


@pytest.fixture(scope="session")
def small_bend() -> RepresentationSpec:
    """Bending pair built directly, for fast enumeration at short word lengths."""
    a, b1 = schottky(10.0, 90.0)
    _, b2 = schottky(10.0, 24.0)
    return RepresentationSpec(2, (real_factor(a, b1), real_factor(a, b2)), "small_bend")


@pytest.fixture(scope="session")
def configs():
    return {name: config.parse_config(name) for name in config.BUNDLED}


@pytest.fixture(scope="session")
def runs(configs, tmp_path_factory):
    """One lazily evaluated pipeline run per bundled pair at L = 12, shared by all tests."""
    root = tmp_path_factory.mktemp("runs")
    return {name: pipeline.Run(cfg, root / name, threads=8, enumerate_missing=True)
            for name, cfg in configs.items()}


@pytest.fixture(scope="session")
def reference(configs):
    """Oracle values committed with each bundled config."""
    return {name: cfg.notes["reference"] for name, cfg in configs.items()}
