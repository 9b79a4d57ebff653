"""Persistence-image hyperparameter sweeps on the circle / dilated-circle dataset.

    python3 scripts/pi_parameter_sweeps.py --out results/sweeps

Runs three sweeps through the CLI, each writing its own sweep.csv:
  resolution x variance   P in 15..30, gamma^2 in [1e-5, 1e-4] (8 log-spaced)
  variance only           gamma^2 in [1e-5, 1e-2] (8 log-spaced) at P = 20
  beta mean               k_mean in 0.1..0.7 with s2 = 0.005
The field is the FDM gradient of the binary label.
"""

import argparse
from pathlib import Path

from phpullback.cli import main as cli

SWEEPS = {
    "resolution_variance": ["--resolution", "15:30:4", "--variance", "1e-5:1e-4:8:log"],
    "variance": ["--variance", "1e-5:1e-2:8:log"],
    "beta_mean": ["--weighting", "beta", "--k-mean", "0.1:0.7:7", "--s2", "0.005"],
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/sweeps")
    ap.add_argument("--jitter", default="0.03")
    ap.add_argument("--threads", default="1")
    ap.add_argument("--only", help="comma-separated subset of " + ",".join(SWEEPS))
    args = ap.parse_args()
    out = Path(args.out)
    data = out / "circles"
    if cli(["gen", "--family", "circles", "--jitter", args.jitter, "--out", str(data)]):
        raise SystemExit("dataset generation failed")
    names = args.only.split(",") if args.only else list(SWEEPS)
    for name in names:
        rc = cli(["sweep", str(data), "--out", str(out / name), "--threads", args.threads, *SWEEPS[name]])
        if rc:
            raise SystemExit(f"sweep {name} failed")


if __name__ == "__main__":
    main()
