"""Model-poisoning attacks on uplinked logit reports.

These replace designated clients' logit rows with crafted values so the
server-side selection can be evaluated under attack. Attacks never touch server
state; they only rewrite ``ClientReport`` contents.
"""
from __future__ import annotations
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.stats import norm

from fedgems.models.experiment import AttackSpec
from fedgems.models.metrics import AttackEvent
from fedgems.models.protocol import ClientReport


def perturbation(class_count: int, magnitude: float, direction: Union[str, int] = "ones", seed: int = 0) -> np.ndarray:
    """theta' = magnitude * unit direction."""
    if direction == "ones":
        unit = np.ones(class_count)
    elif direction == "random":
        unit = np.random.default_rng(seed).normal(size=class_count)
    elif isinstance(direction, int) and 0 <= direction < class_count:
        unit = np.zeros(class_count)
        unit[direction] = 1.0
    else:
        raise ValueError(f"unknown attack direction {direction!r}")
    return magnitude * unit / np.linalg.norm(unit)


def paf(benign: np.ndarray, epsilon: float, theta_prime: np.ndarray, n: Optional[int] = None) -> np.ndarray:
    """sum(benign) / ((1 - epsilon) * n) + theta'; clients are axis 0.

    ``n`` is the whole population, benign rows plus attackers; it defaults to
    the benign row count.
    """
    benign = np.asarray(benign, dtype=np.float64)
    n = benign.shape[0] if n is None else n
    denom = (1.0 - epsilon) * n
    if n < 1 or not denom > 0:
        raise ValueError(f"degenerate paf denominator (1 - {epsilon}) * {n}")
    return benign.sum(axis=0) / denom + theta_prime


def lie_threshold(n: int, epsilon: float) -> Tuple[int, float]:
    """Majority size s and z_max = Phi^-1((n - s) / n)."""
    if n < 2:
        raise ValueError("lie needs at least 2 benign rows")
    malicious = epsilon * n
    count = int(round(malicious))
    if count < 1 or abs(malicious - count) > 1e-9:
        raise ValueError(f"epsilon * n must be a whole count >= 1, got {malicious}")
    s = math.floor(n / 2 + 1) - count
    q = (n - s) / n
    if not 0.0 < q < 1.0:
        raise ValueError(f"lie quantile {q} outside (0, 1)")
    return s, float(norm.ppf(q))


def lie(benign: np.ndarray, n: int, epsilon: float) -> np.ndarray:
    benign = np.asarray(benign, dtype=np.float64)
    _, z_max = lie_threshold(n, epsilon)
    return benign.mean(axis=0) + z_max * benign.std(axis=0)


def ofom(benign: np.ndarray, theta_prime: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    benign = np.asarray(benign, dtype=np.float64)
    n = benign.shape[0]
    if n < 1:
        raise ValueError("ofom needs at least one benign row")
    far = benign.mean(axis=0) + theta_prime
    mean = (benign.sum(axis=0) + far) / (n + 1)
    return far, mean


def victims_for_round(kind: str, round_no: int, client_count: int, seed: int) -> Tuple[int, ...]:
    if kind == "none":
        return ()
    first = (round_no + seed) % client_count
    if kind == "ofom":
        if client_count < 3:
            raise ValueError("ofom needs at least 3 clients")
        return (first, (first + 1) % client_count)
    return (first,)


def apply_attack(
    reports: Sequence[ClientReport],
    spec: AttackSpec,
    round_no: int,
    seed: int,
    client_count: Optional[int] = None,
) -> Tuple[List[ClientReport], Optional[AttackEvent]]:
    """Replace the round's victims' rows; every other report is returned as is."""
    reports = sorted(reports, key=lambda r: r.client_id)
    if not spec.active or not reports or reports[0].indices.size == 0:
        return list(reports), None
    k = client_count if client_count is not None else len(reports)
    victims = victims_for_round(spec.kind, round_no, k, seed)
    by_id = {r.client_id: r for r in reports}
    # attackers craft from the honest rows of everyone else
    honest = [r.logits for r in reports if r.client_id not in victims]
    if not honest:
        raise ValueError(f"{spec.kind} left no benign reports among clients {sorted(by_id)}")
    benign = np.stack(honest)  # (K - victims, rows, C)
    n = k
    c = benign.shape[-1]
    theta_prime = perturbation(c, spec.magnitude, spec.direction, seed)

    if spec.kind == "paf":
        crafted = [paf(benign, spec.epsilon_fraction, theta_prime, n)]
    elif spec.kind == "lie":
        crafted = [lie(benign, n, spec.epsilon_fraction)]
    elif spec.kind == "ofom":
        crafted = list(ofom(benign, theta_prime))
    else:
        raise ValueError(f"unknown attack kind {spec.kind!r}")

    for victim, rows in zip(victims, crafted):
        if victim in by_id:
            by_id[victim] = by_id[victim].replaced(rows)
    logger.debug(f"round {round_no}: {spec.kind} poisoned clients {victims} on {benign.shape[1]} rows")
    return [by_id[r.client_id] for r in reports], AttackEvent(round_no, spec.kind, victims)
