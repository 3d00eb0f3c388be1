"""Supervised versus unsupervised control of the double integrator.

The nominal feedback ignores the box constraints; the supervisor adjusts
each proposed action just enough to keep the whole future admissible.

Run:  python demos/02_supervised_control.py
"""

import numpy as np

from actiongov.simlab import ScenarioConfig, simulate

START = (12.0, 6.0)

plain = simulate(ScenarioConfig(seed=0, steps=500, initial_state=START, governor="none"))
governed = simulate(ScenarioConfig(seed=0, steps=500, initial_state=START, governor="moas"))

print(f"start state {START}")
print(f"unsupervised: {plain.violation_count} violation flags "
      f"(first at t={next(s.t for s in plain.steps if s.violated)})")
print(f"supervised:   {governed.violation_count} violation flags over {len(governed)} steps")

adjusted = sum(s.branch == "adjusted" and abs(s.u[0] - s.u1[0]) > 1e-12 for s in governed.steps)
print(f"supervisor modified {adjusted} of {len(governed)} proposed actions")
tail = np.linalg.norm(governed.states[-50:], axis=1).max()
print(f"supervised tail neighborhood (max |x| over the last 50 steps): {tail:.2f}")

plain.write_csv("demo_unsupervised.csv")
governed.write_csv("demo_supervised.csv")
print("wrote demo_unsupervised.csv and demo_supervised.csv")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 5))
    ax.plot(plain.states[:, 0], plain.states[:, 1], "b-", lw=1, label="no supervision")
    ax.plot(governed.states[:, 0], governed.states[:, 1], "r-", lw=1, label="supervised")
    ax.add_patch(plt.Rectangle((-20, -4), 40, 14, fill=False, ls="--", color="k",
                               label="state bounds"))
    ax.plot(*START, "ko")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.legend()
    fig.savefig("demo_supervised_control.png", dpi=120)
    print("wrote demo_supervised_control.png")
except ImportError:
    pass
