import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def load_fixture(name: str):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def synth():
    from spatialcrime.dataset import SynthConfig, generate_synthetic

    return generate_synthetic(SynthConfig(seed=1, n=600, n_background_pois=300))


@pytest.fixture(scope="session")
def taxonomy():
    from spatialcrime.geocoding import load_taxonomy

    return load_taxonomy()


@pytest.fixture(scope="session")
def rules():
    from spatialcrime.dataset import load_label_rules

    return load_label_rules()


@pytest.fixture(scope="session")
def geocoder(synth, taxonomy):
    from spatialcrime.geocoding import OfflineGeocoder

    return OfflineGeocoder.from_rows(synth.pois, taxonomy)


@pytest.fixture(scope="session")
def small_experiment_config():
    from spatialcrime.evaluation import ExperimentConfig
    from spatialcrime.models import RfParams, SvmParams

    return ExperimentConfig(k=5, seed=3, rf=RfParams(n_trees=10), svm=SvmParams(epochs=20))


@pytest.fixture(scope="session")
def small_report(synth, geocoder, taxonomy, rules, small_experiment_config):
    from spatialcrime.dataset import CrimeCategory
    from spatialcrime.evaluation import run_experiment

    return run_experiment(synth.records_a, synth.records_b, CrimeCategory.ASSAULT, small_experiment_config,
                          geocoder, taxonomy, rules)


# --- acceptance gate bookkeeping ----------------------------------------------

ACCEPTANCE: dict = {}


def record_criterion(number: int, title: str, passed: bool, detail: str = "") -> None:
    """Print and remember one PASS/FAIL line; the terminal summary repeats them."""
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
