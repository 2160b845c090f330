"""Parsing programs and inferring their trace types.

Run with ``python3 demos/01_parse_and_typecheck.py``.
"""
# %%
from smoothppl import parse_program, parse_term, pretty
from smoothppl.checker import TypeCheckError, check_program, infer_basic
from smoothppl.types import Base, R, show_trace, show_type

# %% [markdown]
# A conditional draws from *both* branches: evaluation is eager, so the
# trace type lists every sample in the order the evaluator meets it.

# %%
m = parse_term("(if x (sample normal) (add (sample exponential) (sample exponential)))", free=("x",))
trace, ty = infer_basic({"x": Base(R)}, m)
print(pretty(m))
print("trace:", show_trace(trace), " type:", show_type(ty))

# %% [markdown]
# A lambda draws nothing when it is built; its samples move into the
# arrow.  Applying it twice concatenates function, argument and body traces.

# %%
lam = parse_term("(lam x (if x (sample normal) (add (sample exponential) (sample exponential))))")
print(show_type(infer_basic({}, lam)[1]))
twice = parse_term("(app (lam f (app f (app f (sample normal))))"
                   " (lam x (if x (sample normal) (add (sample exponential) (sample exponential)))))")
print(show_trace(infer_basic({}, twice)[0]))

# %% [markdown]
# The annotated systems refine the basic one.  ``sgd`` tracks whether a
# value may carry a logarithmic singularity; ``unif`` tracks which samples
# a guard depends on and whether its zero set is null.

# %%
vi = parse_program("(program (params (theta preal))"
                   " (body (add (log (mul (inv theta) (exp (sample normal)))) (sample normal))))")
for system in ("basic", "poly", "sgd", "unif"):
    try:
        tr, ty = check_program(vi, system)
        print(f"{system:5s}", show_trace(tr), show_type(ty))
    except TypeCheckError as e:
        print(f"{system:5s} rejected: {e}")

# %%
bad_guard = parse_program("(program (params)"
                          " (body (if (app (lam x (add x (neg x))) (transform normal (lam y y))) 0 1)))")
try:
    check_program(bad_guard, "unif")
except TypeCheckError as e:
    print("unif rejects x - x as a guard:", e)
