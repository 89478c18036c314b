"""Smoke test for the orthoedit Python module.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/orthoedit-*.whl
"""

import math
import os
import tempfile

import orthoedit


def norm(x):
    return math.sqrt(sum(v * v for v in x))


def main():
    cfg = orthoedit.EditConfig("llava7b")
    assert (cfg.r, cfg.q, cfg.kappa, cfg.lambda0, cfg.lambda_max) == (8, 5, 0.6, 0.26, 3.6)
    assert cfg.anchor_layer == 26

    v = [[1.0, 0.0, 0.0, 0.0], [0.9, 0.1, 0.0, 0.0]]
    h = [0.2, 0.0, 1.0, 0.5]
    w = orthoedit.relevance_weights(v, h)
    assert abs(sum(w) - 1.0) < 1e-12

    u = orthoedit.visual_basis(v, w, 1)
    p = orthoedit.anti_prior_basis([[0.0, 0.0, 1.0, 0.0]], u, 1)
    assert (u.rank, p.rank) == (1, 1)

    hu, hp, hr = orthoedit.decompose(h, u, p)
    total = sum(norm(x) ** 2 for x in (hu, hp, hr))
    assert abs(total - norm(h) ** 2) < 1e-12

    out = orthoedit.edit_token(h, u, p, orthoedit.EditConfig())
    assert out["gated"]
    assert out["vcr_after"] > out["vcr_before"]
    assert out["pcr_after"] < out["pcr_before"]
    assert out["delta_u_norm"] < 1e-12

    x = orthoedit.qp_oracle(h, u, p, out["lambda_n"], out["lambda_p"])
    assert max(abs(a - b) for a, b in zip(x, out["edited"])) < 1e-12

    spec = "\n".join([
        "d = 32", "n_v = 24", "n_tokens = 8", "r_true = 4", "q_true = 3",
        "visual_energy = 0.2", "prior_energy = 0.6", "residual_energy = 0.2",
        "noise_sigma = 0.001", "seed = 1", "n_prompt = 4",
    ])
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.hedt")
        size = orthoedit.gen_planted_trace(spec, path)
        assert os.path.getsize(path) == size
        records = orthoedit.replay(path)
        assert len(records) == 8
        assert all(r["delta_u_norm"] < 1e-8 for r in records)

    for name, passed, worst in orthoedit.verify_suite("all", 20, 7):
        assert passed, (name, worst)

    try:
        orthoedit.EditConfig.from_toml("kapa = 0.5")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
