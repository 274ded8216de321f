import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def write_csv_pair(tmp_path, values, meta_rows, header=None, name="d"):
    """Write a values CSV and meta CSV; returns the two paths."""
    values = np.asarray(values, dtype=float)
    header = header or [f"v{i + 1}" for i in range(values.shape[1])]
    vp, mp = tmp_path / f"{name}_values.csv", tmp_path / f"{name}_meta.csv"
    vp.write_text(",".join(header) + "\n" + "".join(",".join(repr(float(v)) for v in row) + "\n" for row in values))
    mp.write_text("sample_id,individual_id,time_index,disease\n"
                  + "".join(",".join(str(c) for c in r) + "\n" for r in meta_rows))
    return vp, mp


def meta_for_lengths(lengths, disease):
    rows, k = [], 0
    for j, (T, b) in enumerate(zip(lengths, disease)):
        for t in range(T):
            k += 1
            rows.append((f"s{k}", f"ind{j + 1}", t + 1, b))
    return rows


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
