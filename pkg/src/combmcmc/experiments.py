"""Experiment drivers shared by the command line and the acceptance suite.

Each driver takes a flat config dict, is deterministic given ``config["seed"]``,
and returns plain Python data ready for CSV / JSON emission.
"""

from __future__ import annotations

import copy

import numpy as np

from .gibbs import marginal_batch, sample_exact_batch
from .kernel import GeometricTruncatedSchedule, run_batch
from .learn import (
    AdamConfig,
    Dataset,
    InitSpec,
    LinearModel,
    distance_sq,
    ScheduleParams,
    fit_conditional,
    fit_unconditional,
    generate_unconditional,
    is_interior,
)
from .proposals import LazyUniformProposal, MixtureProposal, UniformNeighborProposal
from .spaces import HammingBall, HammingShell, Hypercube, Space, Swap, TopK

MAX_REDRAWS = 10_000

BASE_GRADCONV = {
    "space": "hypercube", "d": 10, "kappa": None, "system": "ball", "radii": [1],
    "t": 1.0, "gamma": 0.995, "K": 3000, "K0": 0, "C": 1, "M": 100, "seed": 0,
}

BASE_UNCOND = {
    "space": "hypercube", "d": 10, "kappa": None, "system": "ball", "radii": [1], "lazy": False,
    "t": 1.0, "K": 1000, "C": 1, "M": 5, "seeds": list(range(20)), "N": None, "n_max": 1000,
    "init": "persistent", "optimizer": "adam", "lr": 5e-3, "theta0_scale": 1.0,
    "theta_hat0": "normal", "K_floor": 1, "seed": 0,
}

BASE_COND = {
    "space": "hypercube", "d": 6, "kappa": None, "system": "ball", "radii": [1], "lazy": False,
    "p": 4, "N": 500, "t": 1.0, "K": 100, "n_max": 300, "batch_size": 32, "lr": 5e-2,
    "init": "ground_truth", "seed": 0,
}


def make_space(cfg) -> Space:
    if cfg["space"] == "hypercube":
        return Hypercube(cfg["d"])
    if cfg["space"] == "topk":
        return TopK(cfg["d"], cfg["kappa"])
    raise ValueError(f"unknown space {cfg['space']!r}")


def make_proposal(cfg, space: Space):
    """``system`` is ``ball``, ``shell`` or ``swap``; several ``radii`` give a uniform mixture."""
    kinds = {"ball": HammingBall, "shell": HammingShell, "swap": Swap}
    if cfg["system"] not in kinds:
        raise ValueError(f"unknown neighborhood system {cfg['system']!r}")
    factory = LazyUniformProposal if cfg.get("lazy") else UniformNeighborProposal
    members = [factory(kinds[cfg["system"]](r), space) for r in cfg["radii"]]
    return members[0] if len(members) == 1 else MixtureProposal(members)


def merged(base: dict, overrides: dict) -> dict:
    cfg = copy.deepcopy(base)
    unknown = set(overrides) - set(base)
    if unknown:
        raise ValueError(f"unknown config fields {sorted(unknown)}")
    cfg.update(overrides)
    return cfg


# ---------------------------------------------------------------------------
# gradient convergence
# ---------------------------------------------------------------------------


def gradient_convergence(cfg: dict) -> dict:
    """Squared error of the running chain average to the exact marginal, averaged over instances.

    With ``K0 > 0`` the chain cools geometrically to ``t`` over the burn-in,
    whose iterates are discarded.
    """
    space = make_space(cfg)
    proposal = make_proposal(cfg, space)
    rng = np.random.default_rng(cfg["seed"])
    M, C, t = cfg["M"], cfg["C"], cfg["t"]
    theta = rng.normal(size=(M, space.d))
    reference = marginal_batch(space, theta, t)
    schedule = GeometricTruncatedSchedule.with_burn_in(cfg["K0"], cfg["gamma"], t) if cfg["K0"] > 0 else None
    Y0 = space.random(rng, size=M * C)
    out = run_batch(
        np.repeat(theta, C, axis=0), proposal, cfg["K"], Y0, rng,
        schedule=schedule, t=t, K0=cfg["K0"], chains_per_instance=C, reference=reference,
    )
    T = np.arange(cfg["K0"] + 1, cfg["K"] + 1)
    return {"T": T, "mse": out.mse_curve}


# ---------------------------------------------------------------------------
# unconditional learning
# ---------------------------------------------------------------------------


def _datasets_for_seed(cfg, space, seed):
    rng = np.random.default_rng([cfg["seed"], seed])
    theta0 = cfg["theta0_scale"] * rng.normal(size=(cfg["M"], space.d))
    if cfg["theta_hat0"] == "normal":
        theta_hat0 = rng.normal(size=(cfg["M"], space.d))
    elif cfg["theta_hat0"] == "zero":
        theta_hat0 = np.zeros((cfg["M"], space.d))
    else:
        raise ValueError(f"unknown theta_hat0 {cfg['theta_hat0']!r}")
    datasets = []
    redraws = 0
    for row in theta0:
        if cfg["N"] is None:
            datasets.append(Dataset.population(space, row, cfg["t"]))
            continue
        for _ in range(MAX_REDRAWS):
            ds = generate_unconditional(space, row, cfg["t"], cfg["N"], rng)
            if is_interior(space, ds.mean()):
                break
            redraws += 1
        else:
            raise RuntimeError("could not draw a dataset with an interior mean")
        datasets.append(ds)
    return theta0, theta_hat0, datasets, redraws


def unconditional(cfg: dict) -> dict:
    """Fit ``M`` instances for each seed in ``cfg["seeds"]`` in one batch.

    Returns per-step records averaged over all instances, the seed-level final
    distances, and the number of dataset redraws needed for interiority.
    """
    space = make_space(cfg)
    proposal = make_proposal(cfg, space)
    parts = [_datasets_for_seed(cfg, space, s) for s in cfg["seeds"]]
    theta0 = np.vstack([p[0] for p in parts])
    theta_hat0 = np.vstack([p[1] for p in parts])
    datasets = [ds for p in parts for ds in p[2]]
    if cfg["optimizer"] == "adam":
        optimizer = AdamConfig(lr=cfg["lr"])
    elif cfg["optimizer"] == "schedule":
        optimizer = ScheduleParams.for_space(space, t=cfg["t"], K_floor=cfg["K_floor"])
    else:
        raise ValueError(f"unknown optimizer {cfg['optimizer']!r}")
    rng = np.random.default_rng([cfg["seed"], 7919])
    res = fit_unconditional(
        space, datasets, proposal, theta_hat0, rng, K=cfg["K"], optimizer=optimizer,
        n_max=cfg["n_max"], init=InitSpec(cfg["init"]), chains=cfg["C"], t=cfg["t"],
        theta0=theta0, keep_trajectory=False,
    )
    final = distance_sq(space, res.theta, theta0).reshape(len(cfg["seeds"]), cfg["M"]).mean(axis=1)
    initial = distance_sq(space, theta_hat0, theta0).reshape(len(cfg["seeds"]), cfg["M"]).mean(axis=1)
    return {
        "records": res.records,
        "final_by_seed": final,
        "initial_by_seed": initial,
        "redraws": int(sum(p[3] for p in parts)),
    }


# ---------------------------------------------------------------------------
# conditional learning
# ---------------------------------------------------------------------------


def conditional(cfg: dict) -> dict:
    space = make_space(cfg)
    proposal = make_proposal(cfg, space)
    rng = np.random.default_rng(cfg["seed"])
    d, p, N = space.d, cfg["p"], cfg["N"]
    W_true = rng.normal(size=(d, p)) / np.sqrt(p)
    X = rng.normal(size=(N, p))
    Y = sample_exact_batch(space, X @ W_true.T, cfg["t"], rng)
    ds = Dataset(space, Y, features=X)
    W0 = rng.normal(size=(d, p)) / np.sqrt(p)
    res = fit_conditional(
        space, ds, LinearModel(W0), proposal, rng, K=cfg["K"], optimizer=AdamConfig(lr=cfg["lr"]),
        n_max=cfg["n_max"], batch_size=cfg["batch_size"], init=InitSpec(cfg["init"]), t=cfg["t"],
        W_true=W_true, keep_trajectory=False,
    )
    return {"records": res.records}


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

GRADCONV_PRESETS = {
    "default": {"default": {}},
    "burnin": {f"K0={k0}": {"K0": k0} for k0 in (0, 100, 500)},
    "chains": {"C=1,K=3000": {"C": 1, "K": 3000}, "C=10,K=300": {"C": 10, "K": 300}},
    "temp-small": {f"t={t}": {"t": t} for t in (0.5, 1.0, 2.0)},
    "temp-large": {f"t={t}": {"t": t, "d": 1000, "radii": [10], "M": 10} for t in (1.0, 3.0, 10.0)},
}

UNCOND_PRESETS = {
    "k-ablation": {f"K={k}": {"K": k} for k in (10, 100, 1000)},
    "chains-ablation": {f"C={c}": {"C": c, "K": 1000 // c} for c in (1, 10)},
    "init-ablation": {kind: {"init": kind, "K": 10, "M": 50} for kind in ("random", "persistent", "data")},
    "init-ablation-k1000": {kind: {"init": kind, "K": 1000} for kind in ("random", "persistent", "data")},
    "n-ablation": {f"N={n}": {"N": n} for n in (10, 100, 1000, 10000)},
    "mixture-1236": {"shell{6}": {"system": "shell", "radii": [6]}, "shell{1,2,3,6}": {"system": "shell", "radii": [1, 2, 3, 6]}},
    "mixture-15": {"shell{5}": {"system": "shell", "radii": [5]}, "shell{1,5}": {"system": "shell", "radii": [1, 5]}},
    "topk": {"default": {"space": "topk", "kappa": 3, "system": "swap", "radii": [1]}},
    "schedule": {
        "schedule": {
            "optimizer": "schedule", "lazy": True, "theta0_scale": 0.1, "theta_hat0": "zero",
            "K_floor": 1000, "M": 1,
        }
    },
}

COND_PRESETS = {"cond-default": {"default": {}}}
