import logging
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from ..common.errors import AugmentedStateError
from ..common.settings import get_settings
from ..lattice import augment_running_max, path_expectation, process_from_rows
from .problem import Problem, driver_at_obstacle_sup, obstacle_sup_along

logger = logging.getLogger(__name__)

STATUS_PASS = "pass"
STATUS_FAIL = "fail"
STATUS_NOT_DECLARED = "not-declared"
STATUS_TRIVIAL = "trivial"

ASSUMPTION_NAMES = ("H1", "H2", "H3a", "H3b", "H3c", "H3d", "H4a", "H4b", "H5", "growth", "lipschitz_y")

class AssumptionStatus(BaseModel):
    name: str
    status: str
    checked: int = 0
    magnitude: Optional[float] = None
    method: Optional[str] = None
    witness: Optional[Dict[str, float]] = None
    note: str = ""

class AssumptionReport(BaseModel):
    """Per-assumption status with probe evidence"""
    problem: str
    probes: int
    seed: int
    entries: Dict[str, AssumptionStatus] = Field(default_factory=dict)

    def status(self, name: str) -> str:
        return self.entries[name].status

    def passed(self, name: str) -> bool:
        return self.entries[name].status in (STATUS_PASS, STATUS_TRIVIAL)

    def failures(self) -> List[AssumptionStatus]:
        return [e for e in self.entries.values() if e.status == STATUS_FAIL]

def _witness(mask: np.ndarray, **arrays) -> Optional[Dict[str, float]]:
    bad = np.nonzero(mask)[0]
    if not bad.size:
        return None
    k = int(bad[0])
    return {key: float(np.broadcast_to(val, mask.shape)[k]) for key, val in arrays.items()}

def _probe_result(name: str, lhs: np.ndarray, rhs: np.ndarray, tol: float, note: str = "", **arrays) -> AssumptionStatus:
    """lhs <= rhs + tol, scaled by the magnitude of the compared terms"""
    scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    with np.errstate(invalid="ignore"):
        violated = ~(lhs <= rhs + tol * scale)
    witness = _witness(violated, **arrays)
    if witness is not None:
        logger.warning(f"{name} probe failed at {witness}")
    return AssumptionStatus(
        name=name,
        status=STATUS_FAIL if witness is not None else STATUS_PASS,
        checked=int(lhs.size),
        magnitude=float(np.nanmax(lhs - rhs)) if lhs.size else None,
        method="probe",
        witness=witness,
        note=note,
    )

def _expected_sup_power(problem: Problem, p: float):
    """E (L_T^{+,*})^p by augmentation when feasible, else over paths"""
    lattice = problem.lattice
    if not problem.obstacle.is_finite:
        return 0.0, "exact-slice"
    lp = process_from_rows(lattice, np.maximum(problem.L.values, 0.0))
    try:
        aug = augment_running_max(lattice, lp)
        return aug.expect_max(lambda v: v ** p), "augmented"
    except AugmentedStateError as e:
        logger.warning(f"Falling back to path expectation for L^+* moments: {e}")
    est = path_expectation(lattice, lambda b: obstacle_sup_along(problem, b.nodes)[:, -1] ** p)
    return est.value, est.method

def validate_assumptions(problem: Problem, probes: Optional[int] = None, seed: Optional[int] = None) -> AssumptionReport:
    """
    Check the declared driver constants and integrability conditions.

    H1, H2, H5 and the growth variants are probed on random points of
    [0, T] x [-R, R]^2. H3 and H4 terms are computed on the lattice; they are
    always finite here, so their magnitudes are recorded.

    Args:
        problem: The problem
        probes: Number of random probe points, defaults to the probe_count setting
        seed: Probe seed, defaults to the default_seed setting

    Returns:
        AssumptionReport; failures are entries, never exceptions
    """
    settings = get_settings()
    probes = probes or settings.probe_count
    seed = settings.default_seed if seed is None else seed
    tol = settings.probe_tol
    R = settings.probe_radius
    gen = problem.gen
    p = problem.p
    T = problem.T
    h = problem.lattice.h

    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, T, probes)
    y = rng.uniform(-R, R, probes)
    y2 = rng.uniform(-R, R, probes)
    z = rng.uniform(-R, R, probes)
    z2 = rng.uniform(-R, R, probes)
    zero = np.zeros(probes)

    report = AssumptionReport(problem=problem.name, probes=probes, seed=seed)
    entries = report.entries

    fz = gen.evaluate(t, y, z)
    fz2 = gen.evaluate(t, y, z2)
    entries["H1"] = _probe_result("H1", np.abs(fz - fz2), gen.lam * np.abs(z - z2), tol, t=t, y=y, z=z, z2=z2)
    if not gen.depends_on_z and entries["H1"].status == STATUS_PASS:
        free = _probe_result("H1", np.abs(fz - fz2), zero, tol, note="declared free of z", t=t, y=y, z=z, z2=z2)
        if free.status == STATUS_FAIL:
            entries["H1"] = free

    fy2 = gen.evaluate(t, y2, z)
    entries["H2"] = _probe_result("H2", (y - y2) * (fz - fy2), gen.mu * (y - y2) ** 2, tol, t=t, y=y, y2=y2, z=z)

    xi_T = problem.xi_T
    probs = problem.lattice.node_probs(problem.N)
    entries["H3a"] = AssumptionStatus(name="H3a", status=STATUS_PASS, checked=xi_T.size,
                                      magnitude=float(np.dot(probs, np.abs(xi_T) ** p)), method="exact-slice")

    # Continuity in y on a finite-difference probe
    dy = 1e-8 * np.maximum(1.0, np.abs(y))
    jump = np.abs(gen.evaluate(t, y + dy, z) - fz)
    entries["H3b"] = _probe_result("H3b", jump, 1e-4 * np.maximum(1.0, np.abs(fz)), tol, t=t, y=y, z=z)

    times = problem.lattice.grid.times[:-1]
    f00 = np.abs(gen.evaluate(times, np.zeros_like(times), np.zeros_like(times)))
    entries["H3c"] = AssumptionStatus(name="H3c", status=STATUS_PASS, checked=times.size,
                                      magnitude=float((f00.sum() * h) ** p), method="exact-slice")

    ygrid = np.linspace(-R, R, 201)
    sup_dev = np.max(np.abs(gen.evaluate(times[:, None], ygrid[None, :], 0.0 * ygrid[None, :])
                            - gen.evaluate(times, np.zeros_like(times), np.zeros_like(times))[:, None]), axis=1)
    h3d = float(sup_dev.sum() * h)
    logger.debug(f"H3d integral for r={R}: {h3d}")
    entries["H3d"] = AssumptionStatus(name="H3d", status=STATUS_TRIVIAL, checked=ygrid.size * times.size,
                                      magnitude=h3d, method="grid",
                                      note="automatic for node-function drivers on a finite lattice")

    h4a, method = _expected_sup_power(problem, p)
    entries["H4a"] = AssumptionStatus(name="H4a", status=STATUS_PASS, magnitude=float(h4a), method=method)

    est = path_expectation(problem.lattice, lambda b: driver_at_obstacle_sup(problem, b.nodes).sum(axis=1) ** p)
    entries["H4b"] = AssumptionStatus(name="H4b", status=STATUS_PASS, magnitude=est.value, method=est.method,
                                      note="" if est.stderr is None else f"stderr={est.stderr:.3g}")

    if gen.h5 is None:
        entries["H5"] = AssumptionStatus(name="H5", status=STATUS_NOT_DECLARED)
    else:
        f0 = gen.evaluate(t, y, zero)
        entries["H5"] = _probe_result("H5", np.abs(fz - f0), gen.h5.bound(t, y, z), tol, t=t, y=y, z=z)

    if gen.growth is None:
        entries["growth"] = AssumptionStatus(name="growth", status=STATUS_NOT_DECLARED)
    else:
        fy0 = np.abs(gen.evaluate(t, y, zero))
        f00p = np.abs(gen.evaluate(t, zero, zero))
        entries["growth"] = _probe_result("growth", fy0, f00p + gen.growth(np.abs(y)), tol, t=t, y=y)

    if gen.lipschitz_y is None:
        entries["lipschitz_y"] = AssumptionStatus(name="lipschitz_y", status=STATUS_NOT_DECLARED)
    else:
        entries["lipschitz_y"] = _probe_result("lipschitz_y", np.abs(fz - fy2), gen.lipschitz_y * np.abs(y - y2),
                                               tol, t=t, y=y, y2=y2, z=z)

    failed = [e.name for e in report.failures()]
    logger.info(f"Assumption check for {problem.name}: {len(failed)} failures {failed}")
    return report
