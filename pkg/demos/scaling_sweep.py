"""Per-iteration cost against sample count and shared dimension."""

from sftl.bench import BenchPlan, diagnostics, median_by_value, run_plan

for engine in ("sh", "mal"):
    rows = run_plan(BenchPlan("samples", [10, 20, 50, 100, 500], engine=engine, repetitions=3))
    xs, ms = median_by_value(rows, "total_ms")
    _, nbytes = median_by_value(rows, "bytes_sent")
    print(engine)
    for x, t, b in zip(xs, ms, nbytes):
        print(f"  N={x:4d}  {t:8.1f} ms  {b / 1e6:7.2f} MB sent by S")
    fit = diagnostics(rows)
    print("  linear R2: time", round(fit["total_ms"]["r2_linear"], 4),
          "bytes", round(fit["bytes_sent"]["r2_linear"], 4))
    # the metered bytes are exactly what the cost model predicts
    print("  bytes match model:", all(r.bytes_sent == r.model_bytes for r in rows))

rows = run_plan(BenchPlan("d", [5, 10, 15, 20, 32], engine="mal", samples=100))
xs, nbytes = median_by_value(rows, "bytes_sent")
print("mal, N=100, varying d")
for x, b in zip(xs, nbytes):
    print(f"  d={x:3d}  {b / 1e6:6.2f} MB")
print("  quadratic term in bytes:", round(diagnostics(rows)["bytes_sent"]["quadratic_coef"], 1))
