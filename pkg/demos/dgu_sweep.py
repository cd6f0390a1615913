"""DC microgrid: steady error against the number of consensus rounds."""

from geoduio.scenario import load_scenario, sweep_scenario

TABULATED = {10: 0.2685, 12: 0.0493, 14: 0.0091, 16: 0.0017}


def main():
    rows = sweep_scenario(load_scenario("dgu"), [10, 12, 14, 16])
    print(f"{'d':>3} {'error':>10} {'bound':>10} {'tabulated':>10}")
    for d, _, err, bound in rows:
        print(f"{d:>3} {err:>10.4g} {bound:>10.4g} {TABULATED[d]:>10.4g}")
    errs = [r[2] for r in rows]
    print("ratios:", ", ".join(f"{a / b:.2f}" for a, b in zip(errs, errs[1:])))


if __name__ == "__main__":
    main()
