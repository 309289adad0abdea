import json
import shutil

import numpy as np
import pytest


def write_run(dirpath, name="run", num_agents=3, dim=2, num_samples=40,
              edges=None, extra_meta=None, seed=0):
    """Write a synthetic CSV + sidecar pair following the file contract."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, num_samples)
    pos = np.cumsum(rng.normal(scale=0.05, size=(num_samples, num_agents, dim)),
                    axis=0) + rng.normal(size=(1, num_agents, dim))
    psi = np.exp(-3.0 * t) * 5.0

    cols = ["t"]
    for i in range(1, num_agents + 1):
        cols += [f"p_{i}_{k}" for k in range(1, dim + 1)]
    cols.append("psi")
    cols += [f"psi_{i}" for i in range(1, num_agents + 1)]

    csv_path = dirpath / f"{name}.csv"
    with open(csv_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for s in range(num_samples):
            row = [repr(float(t[s]))] + [repr(float(v))
                                         for v in pos[s].reshape(-1)]
            row.append(repr(float(psi[s])))
            row += [repr(float(psi[s]) / num_agents)] * num_agents
            fh.write(",".join(row) + "\n")

    meta = {"num_agents": num_agents, "dim": dim, "t0": 0.0,
            "dt": float(t[1] - t[0]) if num_samples > 1 else 1.0,
            "num_samples": num_samples}
    if edges is None:
        edges = [[i, i + 1] for i in range(1, num_agents)]
    meta["graph_edges"] = edges
    if extra_meta:
        meta.update(extra_meta)
    meta_path = dirpath / f"{name}.json"
    meta_path.write_text(json.dumps(meta, indent=2))
    return csv_path, meta_path


@pytest.fixture()
def synth_run(tmp_path):
    return write_run(tmp_path)


@pytest.fixture(scope="session")
def simulator():
    """Path to the simulator CLI, if installed; used only via subprocess."""
    exe = shutil.which("formseek")
    if exe is None:
        pytest.skip("formseek CLI not on PATH")
    return exe
