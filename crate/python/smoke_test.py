"""Smoke test for the stepmix_rs extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`.
"""

import json
import math
import tempfile
from pathlib import Path

import stepmix_rs as sm


def main() -> None:
    mdp = sm.TabularMdp.random(5, 5, 3, 7)
    assert (mdp.states, mdp.actions, mdp.horizon) == (5, 5, 3)

    v_star, pi_star = mdp.solve_optimal()
    baseline = mdp.boltzmann(10.0)
    v_b = mdp.value(baseline)
    assert 0.0 <= v_b <= v_star <= 3.0
    assert math.isclose(mdp.value(pi_star), v_star, abs_tol=1e-12)

    mix = pi_star.step_mix(baseline, 0.25)
    assert 0.0 <= mdp.value(mix) <= v_star + 1e-12
    for layer in mdp.occupancy(mix):
        assert math.isclose(sum(sum(row) for row in layer), 1.0, abs_tol=1e-12)

    gamma = 0.9 * v_b
    records = sm.run_algorithm("stepmix", mdp, baseline, gamma, 300, bonus_scale=1e-4, seed=1)
    assert len(records) == 300
    assert not any(r["violation"] for r in records)
    assert records[-1]["cum_regret"] >= 0.0

    pi_hat = sm.vi_lcb(mdp, mdp.boltzmann(5.0), 5000, c=0.05, seed=2)
    print(f"V*={v_star:.4f} V^b={v_b:.4f} V^pi_hat={mdp.value(pi_hat):.4f}")
    assert sm.required_offline_samples(5, 5, 3, 2.5, 2.0) == 20_794_266

    result = sm.run_experiment(
        "eta = 10.0\ngamma_frac = 0.1\ntrials = 2\nepisodes = 100\nbonus_scale = 1e-4\n"
    )
    assert len(result) == 2 * 100 * 3
    summary = json.loads(result.summary_json())
    assert summary["schema_version"] == 1
    assert summary["algorithms"]["stepmix"]["total_violations"] == 0

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "env.txt"
        mdp.save(str(path))
        assert sm.TabularMdp.load(str(path)).transitions() == mdp.transitions()
        result.write_csv(str(Path(tmp) / "records.csv"))
        header = (Path(tmp) / "records.csv").read_text().splitlines()[0]
        assert header == "trial,episode,algorithm,kind,rho,h_k,value,mixture_value,violation,cum_regret"

    try:
        sm.run_experiment("gamma = 1.0\nepisodez = 3\n")
    except ValueError as e:
        assert "episodez" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
