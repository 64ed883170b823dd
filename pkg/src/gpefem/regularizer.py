"""Globally Lipschitz truncation of the cubic nonlinearity.

The map z -> |z|^2 z is replaced by gamma(|z|^2) z where gamma follows the
identity up to a cutoff amplitude M, saturates at 2 M^2 beyond sqrt(2) M,
and blends the two regimes with a C^2 quintic.  On the disk |z| <= M the
truncation agrees with the plain cubic exactly, which is what makes the
regularized time stepper reproduce the plain one on well-resolved runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RegularizerError(ValueError):
    pass


@dataclass(frozen=True)
class TruncatedCubic:
    """Truncated cubic with cutoff amplitude M (theta = M^2)."""

    cutoff: float

    def __post_init__(self):
        if not self.cutoff > 0:
            raise RegularizerError(f"cutoff M = {self.cutoff} must be positive")

    @property
    def theta(self) -> float:
        return self.cutoff**2

    # quintic blend g(t) = 3 t^5/theta^4 - 7 t^4/theta^3 + 4 t^3/theta^2 + t
    # applied on [theta, 2 theta] via t = s - theta
    def _g(self, t):
        th = self.theta
        return 3 * t**5 / th**4 - 7 * t**4 / th**3 + 4 * t**3 / th**2 + t

    def _g1(self, t):
        th = self.theta
        return 15 * t**4 / th**4 - 28 * t**3 / th**3 + 12 * t**2 / th**2 + 1.0

    def _g2(self, t):
        th = self.theta
        return 60 * t**3 / th**4 - 84 * t**2 / th**3 + 24 * t / th**2

    def gamma(self, s):
        s = np.asarray(s, dtype=float)
        th = self.theta
        t = np.clip(s - th, 0.0, th)
        return np.where(s <= th, s, np.where(s >= 2 * th, 2 * th, self._g(t) + th))

    def gamma_prime(self, s):
        s = np.asarray(s, dtype=float)
        th = self.theta
        t = np.clip(s - th, 0.0, th)
        return np.where(s <= th, 1.0, np.where(s >= 2 * th, 0.0, self._g1(t)))

    def gamma_second(self, s):
        s = np.asarray(s, dtype=float)
        th = self.theta
        t = np.clip(s - th, 0.0, th)
        return np.where(s <= th, 0.0, np.where(s >= 2 * th, 0.0, self._g2(t)))

    def profile(self, s):
        """(gamma, gamma') pair used by the assembly routines."""
        return self.gamma(s), self.gamma_prime(s)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        s = z.real**2 + z.imag**2
        th = self.theta
        # keep the identity branch bitwise equal to |z|^2 z
        return np.where(s <= th, s * z, self.gamma(s) * z)


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    ok: bool
    worst: float
    witness: complex | None = None


@dataclass(frozen=True)
class PropertyReport:
    cutoff: float
    n_samples: int
    checks: tuple[PropertyCheck, ...]

    @property
    def all_ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def summary(self) -> str:
        lines = [f"truncated cubic, M = {self.cutoff}, {self.n_samples} samples:"]
        for c in self.checks:
            status = "ok" if c.ok else "FAILED"
            line = f"  {c.name:<28s} {status}  (worst {c.worst:.3e}"
            if c.witness is not None and not c.ok:
                line += f", witness z = {c.witness}"
            lines.append(line + ")")
        return "\n".join(lines)


def verify_truncated_cubic(
    M: float, n_samples: int, seed: int = 0, rel_slack: float = 1e-12
) -> PropertyReport:
    """Sampled verification of the truncation properties.

    Checks, over seeded random pairs (z, w) with |z|, |w| <= 4M:
    exact agreement with the plain cubic on |z| <= M, nonnegativity of
    Re(f(z) conj(z)), the growth bound |f(z)| <= 2 M^2 |z|, the sampled
    Lipschitz bound 10 M^2, C^2 continuity of gamma at both junctions and
    monotonicity of gamma on a fine grid.
    """
    if n_samples < 1:
        raise RegularizerError("need at least one sample")
    f = TruncatedCubic(M)
    th = f.theta
    rng = np.random.default_rng(seed)

    def sample(n):
        r = 4.0 * M * np.sqrt(rng.random(n))
        phi = 2.0 * np.pi * rng.random(n)
        return r * np.exp(1j * phi)

    z = sample(n_samples)
    w = sample(n_samples)
    fz = f(z)
    checks = []

    inner = np.abs(z) <= M
    exact = fz[inner] == (z.real**2 + z.imag**2)[inner] * z[inner]
    bad = np.nonzero(~exact)[0]
    checks.append(
        PropertyCheck(
            "identity on |z| <= M",
            ok=len(bad) == 0,
            worst=0.0 if len(bad) == 0 else float(
                np.abs(fz[inner][bad[0]] - (np.abs(z[inner][bad[0]]) ** 2) * z[inner][bad[0]])
            ),
            witness=None if len(bad) == 0 else complex(z[inner][bad[0]]),
        )
    )

    pairing = (fz * z.conj()).real
    worst = float(pairing.min())
    checks.append(
        PropertyCheck(
            "Re(f(z) conj(z)) >= 0",
            ok=worst >= -rel_slack * th * (4 * M) ** 2,
            worst=worst,
            witness=complex(z[np.argmin(pairing)]),
        )
    )

    growth = np.abs(fz) - 2.0 * th * np.abs(z)
    worst = float(growth.max())
    checks.append(
        PropertyCheck(
            "|f(z)| <= 2 M^2 |z|",
            ok=worst <= rel_slack * th * 4 * M,
            worst=worst,
            witness=complex(z[np.argmax(growth)]),
        )
    )

    dz = np.abs(z - w)
    ok_pairs = dz > 0
    quotient = np.abs(fz[ok_pairs] - f(w)[ok_pairs]) / dz[ok_pairs]
    worst = float(quotient.max()) if len(quotient) else 0.0
    checks.append(
        PropertyCheck(
            "Lipschitz quotient <= 10 M^2",
            ok=worst <= 10.0 * th * (1.0 + rel_slack),
            worst=worst,
            witness=complex(z[ok_pairs][np.argmax(quotient)]) if len(quotient) else None,
        )
    )

    # C^2 junctions: the quintic blend must match value, slope and curvature
    # of the neighbouring pieces at s = theta and s = 2 theta
    junction = max(
        abs(f._g(0.0)),            # gamma continuous at theta
        abs(f._g1(0.0) - 1.0),     # slope 1 from the identity branch
        abs(f._g2(0.0)),
        abs(f._g(th) - th),        # gamma(2 theta) = 2 theta
        abs(f._g1(th)),            # flat saturation branch
        abs(f._g2(th)),
    )
    checks.append(
        PropertyCheck("C^2 junctions of gamma", ok=junction <= 1e-9 * max(1.0, th),
                      worst=junction)
    )

    grid = np.linspace(0.0, 3.0 * th, 4001)
    dgam = np.diff(f.gamma(grid))
    worst = float(dgam.min())
    checks.append(
        PropertyCheck("gamma nondecreasing", ok=worst >= -1e-14 * max(1.0, th),
                      worst=worst)
    )

    return PropertyReport(cutoff=M, n_samples=n_samples, checks=tuple(checks))


def estimate_cutoff(fields, safety: float = 2.0) -> float:
    """Practical surrogate for the truncation cutoff from stored fields.

    Takes the maximum over the trajectory of (nodal sup norm + elementwise
    gradient sup norm), times a safety factor.  This is a measured stand-in
    for the analytic cutoff, which depends on unobservable solution norms.
    """
    from .assembly import field_gradients

    fields = list(fields)
    if not fields:
        raise RegularizerError("empty trajectory")
    worst = 0.0
    for u in fields:
        sup_val = float(np.abs(u.node_values()).max())
        grads = field_gradients(u)
        sup_grad = float(np.sqrt((np.abs(grads) ** 2).sum(axis=1)).max())
        worst = max(worst, sup_val + sup_grad)
    M = safety * worst
    if M <= 0:
        raise RegularizerError("trajectory is identically zero; cutoff must be positive")
    return M
