#!/usr/bin/env python3
"""Run the bundled scenarios and drop their reports under results/."""

import os
import sys

from vpki.sim import Scenario, run

HERE = os.path.dirname(os.path.abspath(__file__))


def main(names):
    for name in names:
        path = os.path.join(HERE, "scenarios", f"{name}.json")
        out = os.path.join("results", name)
        with open(path) as f:
            scenario = Scenario.from_json(f.read())
        print(f"== {name} -> {out}")
        report = run(scenario, out_dir=out)
        for op, s in sorted(report.summaries.items()):
            print(f"   {op}: n={s.count} mean={s.mean_ms:.2f}ms p99={s.p99_ms:.2f}ms")
        for stage in report.extra.get("ddos_stages", []):
            print(f"   attackers={stage['attackers']}: legit={stage['legit_served_per_sec']:.1f}/s")
        if report.violations:
            print("   VIOLATIONS:", *report.violations, sep="\n   ")
            return 1
        print("   invariants clean")
    return 0


if __name__ == "__main__":
    names = sys.argv[1:] or ["baseline", "ddos_ramp"]
    sys.exit(main(names))
