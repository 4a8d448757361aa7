"""Build a tiny mixed-binary model by hand, solve it and round-trip it through MPS."""

from mtlplan.milp import GE, LE, MilpModel, branch_and_bound, export_mps, read_mps

m = MilpModel("knapsack")
weights, values = [3, 4, 5, 6], [4, 5, 7, 8]
z = [m.add_var(f"take{i}", binary=True) for i in range(4)]
m.add_constr({zi: w for zi, w in zip(z, weights)}, LE, 10, "capacity")
m.add_constr({z[0]: 1, z[1]: 1}, GE, 1, "one_small")
m.set_objective({zi: -v for zi, v in zip(z, values)})

sol = branch_and_bound(m)
print(sol.status, "value", -sol.objective, "take", [int(round(sol.x[zi])) for zi in z])

text = export_mps(m)
print(text)
assert export_mps(read_mps(text)) == text
