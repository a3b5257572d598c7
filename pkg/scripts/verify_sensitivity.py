"""Show that each designed assumption violation flips exactly its own check.

    python scripts/verify_sensitivity.py
"""
from adareg.diagnostics import verify_assumptions
from adareg.scenarios import designed_violations


def statuses(models, cfg, mode):
    return {c.name: (c.status, c.measured) for c in verify_assumptions(models, cfg, mode).checks}


def main():
    sc, cases = designed_violations()
    base = statuses(sc.models, sc.diagnostics, sc.mode)
    print("baseline hopf-circle:")
    for name, (status, measured) in base.items():
        print(f"  {name:<22} {status:<5} {measured!r}")
    for check, (models, cfg) in cases.items():
        got = statuses(models, cfg, sc.mode)
        flipped = [k for k in base if base[k][0] != got[k][0]]
        print(f"violation of {check}: flipped {flipped}, measured {got[check][1]!r}")


if __name__ == "__main__":
    main()
