"""Parse MTL text, inspect its normal form and check it on a hand-made trace."""

from mtlplan import mtl

spec = "F[0,5] G[0,1] A & (!B U A)"
f = mtl.parse(spec)
print("parsed:      ", mtl.to_text(f))

# intervals are seconds; at dt = 0.5 every second is two samples
# unbounded windows are cut to what fits in a 13-sample trace (N = 12)
steps = mtl.truncate(mtl.to_steps(f, 0.5), 12)
print("in samples:  ", mtl.to_text(steps))
print("looks ahead: ", mtl.horizon_of(steps), "samples")
print("negated NNF: ", mtl.to_text(mtl.to_nnf(mtl.Not(steps))))

labels = [set(), set(), {"A"}, {"A"}, {"A"}, {"B"}] + [set()] * 7
trace = mtl.Trace(labels, {"A", "B"})
print("satisfied:   ", mtl.evaluate(steps, trace))

bad = mtl.Trace([set(), {"B"}] + [{"A"}] * 11, {"A", "B"})
step, sub = mtl.first_violation(steps, bad)
print(f"visiting B first fails at step {step}: {mtl.to_text(sub)}")
