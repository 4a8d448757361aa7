"""Plan the first bundled quadrotor mission and write both figures.

The default time limit comes from the scenario (several minutes); pass a
number of seconds on the command line to stop earlier with the best plan
found so far.
"""

import sys
from pathlib import Path

from mtlplan.environment import bundled_scenario
from mtlplan.plots import plan_svg, timespace_svg
from mtlplan.planner import plan

limit = float(sys.argv[1]) if len(sys.argv) > 1 else None
s = bundled_scenario("workspace1")
res = plan(s, 30, "phi1", time_limit=limit)
print(res.status, "objective", res.objective, "bound", res.bound)
if res.feasible:
    v = res.verification
    print("spec satisfied:", v.satisfied, " dwell:", v.dwell, " min clearance:", round(min(v.clearance), 3))
    out = Path("workspace1-out")
    out.mkdir(exist_ok=True)
    (out / "plan.svg").write_text(plan_svg(s, res.positions))
    (out / "timespace.svg").write_text(timespace_svg(s, res.positions))
    print("figures written to", out)
