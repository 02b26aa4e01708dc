import copy
import json

import pytest

TINY = {
    "protocol": {"te1": 0.0014, "delta_te": 0.0022, "n": 6, "field_strength": 1.5},
    "protocol_variants": [{"te1": 0.0012, "delta_te": 0.002, "n": 6}],
    "phantom": {"grid": [64, 64]},
    "latent": {"k": 4},
    "diffusion": {"T": 40, "optimizer": {"lr": 0.001, "batch_size": 8, "epochs": 4},
                  "arch": {"hidden": 16, "n_layers": 2, "time_dim": 8}},
    "dataset": {"real": 10, "synthetic": 3, "test": 3, "snr": 100, "fit_synthetic": 2},
    "evaluation": {"n_pairs": 4, "slices_per_subject": 1, "mmd_samples": 4},
    "seeds": {"phantom": 1, "test": 2, "noise": 3, "latent": 4, "diffusion": 5, "sample": 6, "evaluation": 7},
}


@pytest.fixture
def tiny_doc():
    return copy.deepcopy(TINY)


@pytest.fixture
def write_config(tmp_path):
    def write(doc, name="cfg.json"):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return str(p)
    return write


def pytest_terminal_summary(terminalreporter):
    from _helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
