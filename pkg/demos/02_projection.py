"""The safety layer on one snapshot.

A proposal that pushes every inverter to full absorption at peak load
would sink the voltages further. The projection finds the closest action
whose linear-model voltages stay inside the band and reports which bus
limits ended up binding.
"""

import numpy as np

from saver.feeder import ieee13
from saver.linearization import predict_voltage
from saver.powerflow import Injections, solve_distflow
from saver.rl.env import merge_q
from saver.safety import SafetyLayer

f = ieee13().with_q_limits(-1.0, 1.0)
p, q = f.load_pu()
p_now, q_bg = -1.3 * p, -1.3 * q

layer = SafetyLayer(f, margin=0.005)
proposal = np.full(len(f.controllable), -0.8)
res = layer.project(proposal, p_now, q_bg)

print(f"status {res.status.value}, {res.iterations} dual iterations, {res.solve_time * 1e6:.0f} us")
print(f"binding limits: {res.active_buses}")
print()
print(" bus   proposed   safe")
for c, a, b in zip(f.controllable, proposal, res.q_safe):
    print(f"{f.buses[c + 1].name:>4}  {a:9.3f}  {b:6.3f}")

for label, act in (("proposal", proposal), ("projected", res.q_safe)):
    inj = Injections(p_now, merge_q(f, act, q_bg))
    v_lin = predict_voltage(layer.model, inj)
    v_true = solve_distflow(f, inj).v[1:]
    print(f"{label:>9}: linear min |v| {np.sqrt(v_lin.min()):.4f}, "
          f"power-flow min |v| {np.sqrt(v_true.min()):.4f}")

# The projected action meets the bounds exactly under the linear model, yet
# the full power flow still dips a little below 0.95 pu: at 1.3x load the
# dropped loss terms are worth more than the 0.005 margin used here. The
# stress experiment therefore uses a margin of 0.012. The solve time printed
# above also includes one-off setup; warm-started calls in a rollout take
# around a tenth of a millisecond.
