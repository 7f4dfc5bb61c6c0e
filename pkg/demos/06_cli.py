"""The command-line interface, driven from Python (same as ``fractal-forms ...``)."""
# %%
import io
import json

from fractal_forms.cli import run

out = io.StringIO()
run(["geometry", "--level", "2"], stdout=out)
doc = json.loads(out.getvalue())
print("edges:", doc["n_edges"], "schema:", doc["schema"])

# %% A bad configuration line is reported with its position and exit status 2
with open("demo.cfg", "w") as fh:
    fh.write("[run]\nlevel = 2\n[form]\nalpha = lots\n")
err = io.StringIO()
print("exit status:", run(["form", "--config", "demo.cfg"], stdout=io.StringIO(), stderr=err))
print(err.getvalue().strip())

# %% Studies print CSV to stdout, or write CSV/JSON/SVG into --out
out = io.StringIO()
run(["study", "energy", "--levels", "1..2", "--fn", "coord-x,const"], stdout=out)
print(out.getvalue())
