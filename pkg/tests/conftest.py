import numpy as np
import pytest
import torch

from mrfp.harness import BackboneSpec, SegBackbone


@pytest.fixture
def small_spec():
    return BackboneSpec(widths=(4, 6, 8, 8), decoder_width=6, num_classes=3)


@pytest.fixture
def make_backbone(small_spec):
    def _make(seed=0, spec=None, dtype=torch.float32):
        return SegBackbone(spec or small_spec, seed=seed).to(dtype)
    return _make


@pytest.fixture
def rng():
    return np.random.default_rng(0)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record a one-line pass/fail verdict for an acceptance criterion."""
    def _record(number, ok, detail):
        _CRITERIA[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
