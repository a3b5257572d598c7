"""Trajectory CSV, verdict JSON and SVG plots."""
import csv
import json
import math
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from .dynamics import theta_hat as _theta_hat
from .integrate import build_trajectory

VERDICT_SCHEMA_VERSION = 1


class MalformedCSV(ValueError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


def tool_version():
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def csv_header(n, m, d):
    cols = ["t"]
    for stem, k in (("x", n), ("theta", d), ("theta_hat", d), ("xi", n), ("nu", d)):
        cols += [f"{stem}_{i + 1}" for i in range(k)]
    cols += ["eps0", "eps1", "eps2"]
    cols += [f"u_{i + 1}" for i in range(m)]
    return cols + ["psi", "varphi_psi"]


def trajectory_table(traj):
    der = traj.derived
    return np.column_stack([
        traj.times, traj.column("x"), traj.column("theta"), der["theta_hat"], traj.column("xi"),
        traj.column("nu"), traj.states[:, -3:], der["u"], der["psi"], der["varphi_psi"],
    ])


def write_csv(path, traj):
    # %-formatting is locale independent; 17 significant digits round-trip doubles
    header = ",".join(csv_header(traj.n, traj.m, traj.d))
    np.savetxt(path, trajectory_table(traj), fmt="%.17g", delimiter=",", newline="\n",
               header=header, comments="")


def read_csv(path, models, mode):
    """Rebuild a Trajectory from a CSV written by ``write_csv``.

    theta_hat is taken from the file, so derived signals match the run that
    wrote it; theta_hat_I is reconstructed from it for the state layout.
    """
    p = models.plant
    expected = csv_header(p.n, p.m, p.d)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedCSV("file is empty", 1) from None
        if header != expected:
            raise MalformedCSV(f"header does not match the scenario; expected {','.join(expected)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise MalformedCSV(f"expected {len(expected)} fields, found {len(row)}", lineno)
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise MalformedCSV(str(exc), lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise MalformedCSV("non-finite value", lineno)
            rows.append(vals)
    if not rows:
        raise MalformedCSV("no data rows", 2)
    table = np.array(rows)
    times = table[:, 0]
    if np.any(np.diff(times) <= 0):
        bad = int(np.argmax(np.diff(times) <= 0)) + 3
        raise MalformedCSV("times are not strictly increasing", bad)
    n, d = p.n, p.d
    c = 1
    x = table[:, c:c + n]; c += n
    theta = table[:, c:c + d]; c += d
    th_hat = table[:, c:c + d]; c += d
    xi = table[:, c:c + n]; c += n
    nu = table[:, c:c + d]; c += d
    eps = table[:, c:c + 3]
    zero = np.zeros(d)
    thI = np.array([th_hat[k] - _theta_hat(p, models.drift, models.target, mode, x[k], xi[k], zero)
                    for k in range(len(times))]).reshape(len(times), d)
    states = np.column_stack([x, theta, thI, xi, nu, eps])
    return build_trajectory(models, mode, times, states, theta_hat=th_hat)


def verdict_document(scenario, mode, verdict, assumptions=None, exit_code=None):
    doc = {
        "schema_version": VERDICT_SCHEMA_VERSION,
        "tool_version": tool_version(),
        "scenario": scenario,
        "mode": mode.variant.value,
        "ok": bool(verdict.ok and (assumptions is None or assumptions.ok)),
        "exit_code": exit_code,
        "failure": verdict.failure,
        "checks": [c.to_dict() for c in verdict.checks],
    }
    if assumptions is not None:
        doc["assumptions"] = [c.to_dict() for c in assumptions.checks]
    return doc


def write_json(path, doc):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=False))
        fh.write("\n")


def write_plots(path, traj, models):
    """One self-contained SVG with phase portrait, psi, |theta - theta_hat| and V traces."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .diagnostics import v_theta_trace, v_xi_trace

    matplotlib.rcParams["svg.hashsalt"] = "adareg"
    matplotlib.rcParams["svg.fonttype"] = "path"
    t = traj.times
    x = traj.column("x")
    fig, ax = plt.subplots(2, 2, figsize=(10, 7))
    if traj.n >= 2:
        ax[0, 0].plot(x[:, 0], x[:, 1], lw=0.8)
        ax[0, 0].set_xlabel("x_1")
        ax[0, 0].set_ylabel("x_2")
        ax[0, 0].set_aspect("equal", adjustable="datalim")
    else:
        ax[0, 0].plot(t, x[:, 0], lw=0.8)
        ax[0, 0].set_xlabel("t")
        ax[0, 0].set_ylabel("x")
    ax[0, 0].set_title("state")
    ax[0, 1].plot(t, traj.derived["psi"], lw=0.8)
    ax[0, 1].set_title("psi(x)")
    err = np.linalg.norm(traj.column("theta") - traj.derived["theta_hat"], axis=1)
    ax[1, 0].semilogy(t, np.maximum(err, 1e-300), lw=0.8)
    ax[1, 0].set_title("|theta - theta_hat|")
    ax[1, 1].plot(*v_theta_trace(traj, models), lw=0.8, label="V_theta")
    ax[1, 1].plot(*v_xi_trace(traj, models), lw=0.8, label="V_xi")
    ax[1, 1].legend()
    ax[1, 1].set_title("Lyapunov traces")
    for a in ax.flat[1:]:
        a.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
