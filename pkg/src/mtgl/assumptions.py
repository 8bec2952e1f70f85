"""Design-matrix diagnostics: Gram normalisation, coherence, and
restricted-eigenvalue probes.

The per-task Grams are Psi_t = X_t^T X_t / n.  The restricted eigenvalue
with sparsity s is the minimum of sqrt(D^T X^T X D / n) / ||D_J||_F over
supports |J| <= s and directions D obeying the cone condition
||D_{J^c}||_{2,1} <= 3 * ||D_J||_{2,1}.  Computing it exactly is
infeasible, so this module brackets it instead:

* a certified LOWER bound sqrt(1 - 1/alpha), valid whenever all Grams
  have unit diagonal and pairwise coherence at most 1/(7*alpha*s);
* a sampled UPPER estimate, the smallest quotient seen over random
  cone-feasible probes plus local refinement.

Neither bracket ever substitutes for the other in theoretical bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import GroupCoefficients, SparsityPattern, UNIT_DIAGONAL_TOL

# Power iteration stops once successive eigenvalue estimates agree to
# this relative tolerance.
_POWER_REL_TOL = 1e-9
_POWER_MAX_ITER = 100_000


@dataclass(frozen=True)
class AssumptionReport:
    """Summary statistics of the per-task Grams.

    unit_diagonal_max_deviation : max_{t,j} |Psi_t[j,j] - 1|.
    max_coherence               : max_{t, j != k} |Psi_t[j,k]|.
    phi_max                     : largest Gram eigenvalue across tasks.
    c_prime                     : (1/nT) * sum_{t,i} max_j (x_ti)_j^2.
    kappa_lower                 : certified RE lower bound, if computed.
    kappa_upper_estimate        : sampled RE upper estimate, if computed.
    """

    unit_diagonal_max_deviation: float
    max_coherence: float
    phi_max: float
    c_prime: float
    kappa_lower: float | None = None
    kappa_upper_estimate: float | None = None

    def admissible(self, s, alpha):
        return coherence_admissible(self, s, alpha)

    def with_re_bounds(self, kappa_lower=None, kappa_upper_estimate=None):
        return replace(
            self,
            kappa_lower=self.kappa_lower if kappa_lower is None else kappa_lower,
            kappa_upper_estimate=(
                self.kappa_upper_estimate
                if kappa_upper_estimate is None
                else kappa_upper_estimate
            ),
        )


@dataclass(frozen=True)
class REProbe:
    """One cone-feasible direction: ||D_{J^c}||_{2,1} <= 3*||D_J||_{2,1},
    D_J nonzero, and ratio = sqrt(D^T X^T X D / n) / ||D_J||_F."""

    direction: GroupCoefficients
    support: SparsityPattern
    ratio: float


def power_iteration(sym, rel_tol=_POWER_REL_TOL, max_iter=_POWER_MAX_ITER):
    """Largest eigenvalue of a symmetric PSD matrix.

    Deterministic: starts from the normalised all-ones vector and stops
    once successive Rayleigh quotients agree to ``rel_tol`` relatively.
    """
    sym = np.asarray(sym, dtype=float)
    m = sym.shape[0]
    v = np.full(m, 1.0 / np.sqrt(m))
    w = sym @ v
    mu = float(v @ w)
    for _ in range(max_iter):
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        w = sym @ v
        mu_new = float(v @ w)
        if abs(mu_new - mu) <= rel_tol * max(abs(mu_new), np.finfo(float).tiny):
            return mu_new
        mu = mu_new
    return mu


def task_grams(data):
    """Stack of Psi_t = X_t^T X_t / n, shape (T, M, M)."""
    return np.einsum("tni,tnj->tij", data.designs, data.designs) / data.n


def largest_gram_eigenvalue(data):
    """phi_max = max_t lambda_max(Psi_t), by per-task power iteration."""
    return float(max(power_iteration(psi) for psi in task_grams(data)))


def gram_diagnostics(data):
    """Compute the AssumptionReport statistics for a dataset."""
    if not np.any(data.designs):
        raise ValueError("design is all zeros; Gram diagnostics are undefined")
    grams = task_grams(data)
    diags = np.einsum("tjj->tj", grams)
    unit_dev = float(np.max(np.abs(diags - 1.0)))
    if data.M >= 2:
        off = np.abs(grams.copy())
        for t in range(data.T):
            np.fill_diagonal(off[t], 0.0)
        coherence = float(np.max(off))
    else:
        coherence = 0.0
    phi_max = float(max(power_iteration(psi) for psi in grams))
    c_prime = float(np.mean(np.max(data.designs**2, axis=2)))
    return AssumptionReport(
        unit_diagonal_max_deviation=unit_dev,
        max_coherence=coherence,
        phi_max=phi_max,
        c_prime=c_prime,
    )


def coherence_admissible(report, s, alpha):
    """True iff diagonals are unit and coherence is at most 1/(7*alpha*s)."""
    if s < 1:
        raise ValueError(f"sparsity s must be >= 1, got {s}")
    if not alpha > 1:
        raise ValueError(f"coherence slack alpha must exceed 1, got {alpha}")
    if report.unit_diagonal_max_deviation > UNIT_DIAGONAL_TOL:
        return False
    return report.max_coherence <= 1.0 / (7.0 * alpha * s)


def re_lower_bound_from_coherence(alpha):
    """Certified RE lower bound kappa = sqrt(1 - 1/alpha) under
    admissible coherence (any sparsity the admissibility was checked at)."""
    if not alpha > 1:
        raise ValueError(f"coherence slack alpha must exceed 1, got {alpha}")
    return float(np.sqrt(1.0 - 1.0 / alpha))


def _quotient(data, values, support_idx):
    img = np.einsum("tnm,mt->tn", data.designs, values)
    num = float(np.sqrt(np.sum(img * img) / data.n))
    den = float(np.linalg.norm(values[support_idx]))
    return num / den


def minimize_re_quotient(data, s, samples, seed):
    """Search cone-feasible probes for a small RE quotient.

    For each support size m = 1..s, ``samples`` probes are drawn from a
    stream seeded by (seed, m, probe index): a random support J, Gaussian
    D_J, and Gaussian off-support rows rescaled so the cone constraint
    holds with a uniform [0, 3] equality factor.  Each probe is refined
    two ways, both staying inside the cone: an exact line search over a
    multiplicative factor on the off-support block, and a least-squares
    resolve of the off-support block scaled back into the cone.  Returns
    the best probe found; the minimum over sizes makes the estimate
    nonincreasing in s for a fixed seed.
    """
    M, T = data.M, data.T
    if not 1 <= s <= M:
        raise ValueError(f"sparsity s must be in 1..M={M}, got {s}")
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    X = data.designs
    n = data.n

    best_ratio = np.inf
    best_values = None
    best_support = None

    for m in range(1, s + 1):
        for k in range(samples):
            rng = np.random.default_rng(np.random.SeedSequence([seed, m, k]))
            support = np.sort(rng.choice(M, size=m, replace=False))
            others = np.setdiff1d(np.arange(M), support)
            d_sup = rng.standard_normal((m, T))
            l21_sup = float(np.sum(np.linalg.norm(d_sup, axis=1)))
            if l21_sup == 0.0:
                continue
            u = np.einsum("tnj,jt->tn", X[:, :, support], d_sup)
            a = float(np.sum(u * u))
            den = float(np.linalg.norm(d_sup))

            candidates = [(np.sqrt(max(a, 0.0) / n) / den, 0.0, None)]
            if others.size:
                g = rng.standard_normal((others.size, T))
                factor = rng.uniform(0.0, 3.0)
                l21_off = float(np.sum(np.linalg.norm(g, axis=1)))
                if l21_off > 0.0:
                    g = g * (factor * l21_sup / l21_off)
                v = np.einsum("tnj,jt->tn", X[:, :, others], g)
                b = float(np.sum(u * v))
                dq = float(np.sum(v * v))
                if dq > 0.0:
                    c_max = np.inf if factor == 0.0 else 3.0 / factor
                    c_star = float(np.clip(-b / dq, -c_max, c_max))
                    q_val = a + 2.0 * b * c_star + dq * c_star * c_star
                    candidates.append((np.sqrt(max(q_val, 0.0) / n) / den, c_star, None))

                # Least-squares polish: best off-support completion for
                # this D_J, pulled back into the cone if it overshoots.
                w = np.empty((others.size, T))
                for t in range(data.T):
                    sol, *_ = np.linalg.lstsq(X[t][:, others], -u[t], rcond=None)
                    w[:, t] = sol
                l21_w = float(np.sum(np.linalg.norm(w, axis=1)))
                if l21_w > 0.0:
                    rho = min(1.0, 3.0 * l21_sup / l21_w)
                    vw = np.einsum("tnj,jt->tn", X[:, :, others], w)
                    diff = u + rho * vw
                    q_val = float(np.sum(diff * diff))
                    candidates.append(
                        (np.sqrt(max(q_val, 0.0) / n) / den, rho, w)
                    )

            for ratio, scale, w_override in candidates:
                if ratio < best_ratio:
                    best_ratio = ratio
                    values = np.zeros((M, T))
                    values[support] = d_sup
                    if others.size:
                        if w_override is not None:
                            values[others] = scale * w_override
                        elif scale != 0.0:
                            values[others] = scale * g
                    best_values = values
                    best_support = support

    probe = REProbe(
        direction=GroupCoefficients(best_values),
        support=SparsityPattern(tuple(int(j) for j in best_support)),
        ratio=float(_quotient(data, best_values, best_support)),
    )
    return probe


def re_upper_estimate(data, s, samples, seed):
    """Smallest RE quotient observed over sampled cone-feasible probes.

    An UPPER estimate of the true restricted eigenvalue: the search can
    only miss bad directions, never invent them.
    """
    return minimize_re_quotient(data, s, samples, seed).ratio
