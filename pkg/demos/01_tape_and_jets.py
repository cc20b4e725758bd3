#!/usr/bin/env python3
"""A tour of the differentiation core.

Builds a tiny expression on the tape, runs one reverse sweep, and then pushes
Taylor jets through the same primitives to read off higher derivatives.
Everything is checked against closed forms as we go.
"""

import numpy as np

from cpl.autodiff import Tape, jet_eval, jet_to_derivatives
from cpl.jets import jet_exp, jet_sin, jet_tanh

print("=== reverse mode on a scalar tape ===")
tape = Tape()
x = tape.leaf(2.0)
y = tape.leaf(0.3)
f = x * y.tanh() + (x * y).sin()
adj = tape.backward(f)
print(f"f(x, y) = x tanh(y) + sin(x y) at (2, 0.3)")
print(f"  value      : {float(f.value):+.6f}")
print(f"  df/dx tape : {float(adj[x.idx]):+.6f}")
print(f"  df/dx exact: {np.tanh(0.3) + 0.3 * np.cos(0.6):+.6f}")
print(f"  df/dy tape : {float(adj[y.idx]):+.6f}")
print(f"  df/dy exact: {2 / np.cosh(0.3) ** 2 + 2 * np.cos(0.6):+.6f}")
print(f"  tape nodes : {len(tape)} (slots {tape.num_slots})")

print()
print("=== Taylor jets: derivatives up to order 3 in one pass ===")
for name, jfn, exact in [
    ("sin", jet_sin, [0.0, 1.0, 0.0, -1.0]),
    ("exp", jet_exp, [1.0, 1.0, 1.0, 1.0]),
]:
    jet = jet_eval(lambda v: jfn(v[0]), [0.0], 0, 3)
    ders = [float(np.asarray(d)) for d in jet_to_derivatives(jet)]
    print(f"{name} at 0: derivatives {['%+.3f' % d for d in ders]}  (exact {exact})")

jet = jet_eval(lambda v: jet_tanh(v[0]), [0.7], 0, 3)
ders = [float(np.asarray(d)) for d in jet_to_derivatives(jet)]
z = np.tanh(0.7)
exact = [z, 1 - z**2, -2 * z * (1 - z**2), -2 * (1 - z**2) * (1 - 3 * z**2)]
print("tanh at 0.7:")
for k, (a, b) in enumerate(zip(ders, exact)):
    print(f"  order {k}: jet {a:+.8f}   closed form {b:+.8f}")
