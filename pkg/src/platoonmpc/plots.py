"""Matplotlib figure rendering for the CLI report path (headless, file output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_run_figure(log, h_des, h_min, path) -> None:
    """Velocities and inter-vehicle distances over time, one trace per vehicle."""
    fig, (ax_v, ax_h) = plt.subplots(2, 1, figsize=(7.0, 5.6), sharex=True)
    for i in range(log.n_vehicles):
        label = "leader" if i == 0 else f"follower {i}"
        ax_v.plot(log.t, log.v[:, i], label=label, lw=1.4)
    ax_v.set_ylabel("velocity (m/s)")
    ax_v.legend(loc="lower right", fontsize=8)
    ax_v.grid(alpha=0.3)
    for i in range(1, log.n_vehicles):
        ax_h.plot(log.t, log.h[:, i], label=f"follower {i}", lw=1.4)
    ax_h.axhline(h_des, color="gray", ls="--", lw=1.0, label="desired")
    ax_h.axhline(h_min, color="crimson", ls=":", lw=1.0, label="minimum")
    ax_h.set_xlabel("time (s)")
    ax_h.set_ylabel("distance to predecessor (m)")
    ax_h.legend(loc="upper right", fontsize=8)
    ax_h.grid(alpha=0.3)
    fig.suptitle(f"platoon launch, trust horizon F = {log.trust_horizon}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(results, path) -> None:
    """Throughput against the trust horizon."""
    fs = [f for f, _ in results]
    vph = [r.vehicles_per_hour for _, r in results]
    fig, ax = plt.subplots(figsize=(5.6, 3.4))
    ax.plot(fs, vph, marker="o", lw=1.6)
    ax.set_xlabel("trust horizon F (steps)")
    ax.set_ylabel("throughput (veh/h)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_safeset_figure(sset, path) -> None:
    """Safe region in the (distance, velocity) plane with its boundary polyline."""
    v = sset.breakpoints[:, 0]
    h = sset.breakpoints[:, 1]
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    h_far = max(h.max() * 1.1, h.max() + 5.0)
    ax.fill_betweenx(v, h, h_far, color="teal", alpha=0.45)
    ax.plot(h, v, color="black", lw=1.6)
    ax.set_xlabel("distance to predecessor (m)")
    ax.set_ylabel("velocity (m/s)")
    ax.set_xlim(0.0, h_far)
    ax.set_ylim(0.0, sset.spec.v_max * 1.03)
    ax.set_title(f"safe set for predecessor speed {sset.v0:g} m/s")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
