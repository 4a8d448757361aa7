"""Plan on a small grid and compare with the exhaustive reference planner."""

from mtlplan.planner import brute_force_min_horizon, brute_force_plan, find_min_horizon, grid_scenario, plan

# 5 x 3 cells, a wall at column 2 with a gap in the top row
s = grid_scenario(
    5, 3, start=(0, 0),
    regions={"A": [(4, 0, 4, 0)], "B": [(0, 2, 0, 2)]},
    obstacles=[(2, 0, 2, 1)],
)
spec = "F A & F B & G !O"

n = find_min_horizon(s, 12, spec)
print("shortest horizon:", n, "(reference:", brute_force_min_horizon(s, 12, spec), ")")

res = plan(s, n, spec)
print("status:", res.status, " moves:", round(res.objective, 6), " reference:", brute_force_plan(s, n, spec).cost)
for t, (p, lab) in enumerate(zip(res.positions, res.labels)):
    print(f"  t={t:2d}  cell=({round(p[0]) + 0},{round(p[1]) + 0})  labels={sorted(lab)}")
