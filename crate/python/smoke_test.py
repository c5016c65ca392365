"""Smoke test for the `msnn` extension module.

Build first:  pip install --no-build-isolation -e crates/python
Run:          python3 python/smoke_test.py
"""

import math
import os
import tempfile

import msnn


def main():
    assert msnn.param_count("msnn-base") == 135
    assert msnn.param_count("msnn-steer") == 155
    assert msnn.param_count("gnn") == 161

    m = msnn.metrics([0.0, 0.0], [1.0, 2.0])
    assert abs(m["rmse"] - math.degrees(math.sqrt(2.5))) < 1e-9

    # zero gains reduce A2RL to the kinematic term a_y L / v_x^2
    delta, state = msnn.a2rl_step(5.0, 1.0, 30.0, 0.0, 0.05, 0.0, 0.05, 0.0)
    assert abs(delta - 5.0 * 3.0 / 900.0) < 1e-15
    assert len(state) == 2

    with tempfile.TemporaryDirectory() as tmp:
        csv = os.path.join(tmp, "telemetry.csv")
        laps = msnn.simulate(seed=4, path=csv)
        again = msnn.simulate(seed=4)
        assert laps["delta"] == again["delta"]
        assert set(laps["lap"]) == {1, 2}

        model = msnn.train("msnn-steer", csv, split="small", epochs=30, seed=0)
        assert model.param_count == 155 and model.q == 9
        path = os.path.join(tmp, "model.json")
        model.save(path)
        loaded = msnn.Model.load(path)
        ev = loaded.evaluate(csv)
        assert abs(ev["rmse"] - model.valid_rmse) < 1e-9, (ev, model.valid_rmse)

        q = model.q
        i = 200
        window = lambda k: laps[k][i : i + q + 1]
        pred = loaded.predict([window("a_y")], [window("a_x")], [window("v_x")])
        assert len(pred) == 1 and math.isfinite(pred[0])

        try:
            msnn.train("nope", csv)
        except ValueError:
            pass
        else:
            raise AssertionError("unknown model kind accepted")

    print(f"ok: {loaded!r}, validation RMSE {ev['rmse']:.4f} deg")


if __name__ == "__main__":
    main()
