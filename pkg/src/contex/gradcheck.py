"""Central finite differences and the randomized gradient suite.

The finite-difference oracle perturbs raw embedding rows and recomputes the
loss value from scratch (rows need not stay unit norm; the kernels are
plain functions of Z Z^T / tau), so it exercises every dependency path the
analytic total gradient claims to cover.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import losses
from .contrast import ContrastMasks, SimilarityMatrix, build_masks

FD_STEP = 1e-5


def central_diff(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite-difference gradient of a scalar function, entry by entry."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        hi = f(x)
        flat[k] = orig - step
        lo = f(x)
        flat[k] = orig
        gflat[k] = (hi - lo) / (2.0 * step)
    return g


def max_rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> float:
    """Largest |a-b| / max(|a|, |b|, floor) over all entries.

    The floor keeps near-zero entries from amplifying finite-difference
    noise into spurious relative errors; entries below it are still held to
    an absolute tolerance of tol * floor.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def random_batch(
    rng: np.random.Generator,
    n_orig: int,
    dim: int,
    n_classes: int,
    tau: float,
) -> tuple[SimilarityMatrix, ContrastMasks, np.ndarray, np.ndarray]:
    """Seeded random unit-norm batch with adjacent view pairing."""
    n = 2 * n_orig
    z = rng.normal(size=(n, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    labels = np.repeat(rng.integers(0, n_classes, size=n_orig), 2)
    pairs = np.arange(n)
    pairs[0::2] += 1
    pairs[1::2] -= 1
    masks = build_masks(labels, pairs)
    sim = SimilarityMatrix(s=z @ z.T / tau, tau=tau, z=z)
    return sim, masks, labels, pairs


def sim_from_rows(z: np.ndarray, tau: float) -> SimilarityMatrix:
    """Similarity matrix from raw rows, skipping unit-norm validation.

    Finite-difference probes need this: a perturbed row is no longer unit
    norm but the loss is still a well-defined function of it.
    """
    return SimilarityMatrix(s=z @ z.T / tau, tau=float(tau), z=z)


KERNELS: dict[str, Callable[[SimilarityMatrix, ContrastMasks], losses.LossOutput]] = {
    "ntxent": losses.ntxent,
    "supcon": losses.supcon,
    "contex_a": losses.contex_a,
    "contex_b_literal": lambda s, m: losses.contex_b(s, m, "literal"),
    "contex_b_infonce": lambda s, m: losses.contex_b(s, m, "infonce"),
    "contex": lambda s, m: losses.contex(s, m, 0.7),
}


@dataclass
class GradientReport:
    trials: int = 0
    worst: float = 0.0
    worst_kernel: str = ""
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def gradient_suite(
    trials: int = 200,
    seed: int = 0,
    tol: float = 1e-5,
    step: float = FD_STEP,
    sizes: tuple[int, ...] = (2, 4, 8, 16),
    dims: tuple[int, ...] = (4, 8, 16),
) -> GradientReport:
    """Check every loss kernel's analytic gradient against central differences.

    Each trial draws a random batch (2N in 2*sizes, D in dims), evaluates all
    kernels, and compares d(value)/dZ to the finite-difference gradient of
    the value recomputed from perturbed raw rows. Cross entropy is checked
    on random logits in the same trial.
    """
    rng = np.random.default_rng(seed)
    report = GradientReport()
    for trial in range(trials):
        n_orig = int(rng.choice(sizes))
        dim = int(rng.choice(dims))
        tau = float(rng.uniform(0.2, 1.0))
        n_classes = int(rng.integers(2, max(3, n_orig)))
        sim, masks, _, _ = random_batch(rng, n_orig, dim, n_classes, tau)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # single-class draws are a legit case here
            for name, kernel in KERNELS.items():
                out = kernel(sim, masks)

                def value_at(z: np.ndarray) -> float:
                    return kernel(sim_from_rows(z, tau), masks).value

                fd = central_diff(value_at, sim.z.copy(), step)
                err = max_rel_error(out.grad, fd)
                report.trials += 1
                if err > report.worst:
                    report.worst, report.worst_kernel = err, name
                if err > tol:
                    report.failures.append(
                        f"trial {trial} kernel {name}: max rel err {err:.3e} > {tol:.1e}"
                    )
        logits = rng.normal(size=(2 * n_orig, n_classes + 1))
        ce_labels = rng.integers(0, n_classes + 1, size=2 * n_orig)
        ce = losses.cross_entropy(logits, ce_labels)
        fd = central_diff(
            lambda lg: losses.cross_entropy(lg, ce_labels).value, logits.copy(), step
        )
        err = max_rel_error(ce.grad, fd)
        report.trials += 1
        if err > report.worst:
            report.worst, report.worst_kernel = err, "cross_entropy"
        if err > tol:
            report.failures.append(
                f"trial {trial} kernel cross_entropy: max rel err {err:.3e} > {tol:.1e}"
            )
    return report
