"""Central finite-difference verification of analytic gradients.

The checker promotes every parameter to float64, evaluates the closure's
loss at +/- h per coordinate, and compares against the gradients produced
by `backward()`.  Relative error uses max(1, |analytic|) in the
denominator so tiny gradients are judged absolutely.  Report-only: no
exception is raised on failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Parameter, no_grad


@dataclass
class CoordFailure:
    param: str
    coord: tuple
    analytic: float
    numeric: float
    error: float


@dataclass
class ParamReport:
    param: str
    coords_checked: int
    max_error: float


@dataclass
class GradCheckReport:
    tol: float
    params: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def max_error(self) -> float:
        return max((p.max_error for p in self.params), default=0.0)

    def format(self) -> str:
        lines = []
        for p in self.params:
            status = "ok" if all(f.param != p.param for f in self.failures) else "FAIL"
            lines.append(
                f"{status:4s} {p.param}: max rel err {p.max_error:.3e} "
                f"over {p.coords_checked} coords"
            )
        return "\n".join(lines)


def _select_coords(shape, limit, rng):
    size = int(np.prod(shape)) if shape else 1
    if limit is None or size <= limit:
        idx = np.arange(size)
    else:
        idx = rng.choice(size, size=limit, replace=False)
        idx.sort()
    return [np.unravel_index(int(i), shape) if shape else () for i in idx]


def grad_check(
    forward,
    params: list[Parameter],
    h: float = 1e-4,
    tol: float = 1e-3,
    max_coords: int | None = 32,
    seed: int = 0,
) -> GradCheckReport:
    """Compare backward() gradients of `forward()` against central differences.

    `forward` must be a deterministic closure over `params` returning a
    scalar Tensor.  Parameter data is promoted to float64 for the whole
    check and restored afterwards.  At most `max_coords` coordinates per
    parameter are probed (seeded choice) to keep large kernels cheap.
    """
    rng = np.random.default_rng(seed)
    saved = [p.data for p in params]
    for p in params:
        p.data = p.data.astype(np.float64)
        p.zero_grad()
    try:
        loss = forward()
        loss.backward()
        analytic = [p.grad.astype(np.float64).copy() for p in params]

        report = GradCheckReport(tol=tol)
        for p, ga in zip(params, analytic):
            coords = _select_coords(p.data.shape, max_coords, rng)
            worst = 0.0
            for coord in coords:
                orig = p.data[coord]
                with no_grad():
                    p.data[coord] = orig + h
                    f_plus = forward().item()
                    p.data[coord] = orig - h
                    f_minus = forward().item()
                p.data[coord] = orig
                fd = (f_plus - f_minus) / (2.0 * h)
                a = float(ga[coord])
                err = abs(a - fd) / max(1.0, abs(a))
                worst = max(worst, err)
                if err > tol:
                    report.failures.append(
                        CoordFailure(p.name or "<param>", coord, a, fd, err)
                    )
            report.params.append(
                ParamReport(p.name or "<param>", len(coords), worst)
            )
        return report
    finally:
        for p, orig in zip(params, saved):
            p.data = orig
            p.zero_grad()
