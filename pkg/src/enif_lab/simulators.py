"""Ground-truth models: analytical Gaussian oracles, samplers, dynamics.

Every sampler is a pure function of (parameters, seed) using PCG64 through
``numpy.random.default_rng``; substreams, where needed, are spawned from the
parent ``SeedSequence`` so member draws never overlap. Oracles carry the exact
mean/covariance (and, for Markov models, the sparse precision) so estimated
distributions can be scored against the truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (DegenerateElement, DimensionMismatch, GridTooLargeForOracle,
                     NonFinite, NonStationary, TooFewStates, UnstableStep)
from .meshes import Mesh1D, TriMesh
from .sparse_core import CholeskyFactor, SparseSpd, cholesky

ORACLE_DENSE_LIMIT = 4096


@dataclass(frozen=True)
class Ensemble:
    """n state realisations of dimension p, one per row."""

    data: np.ndarray

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if not np.isfinite(data).all():
            raise NonFinite("ensemble contains non-finite entries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def mean(self) -> np.ndarray:
        return self.data.mean(axis=0)

    def anomalies(self) -> np.ndarray:
        return self.data - self.data.mean(axis=0)

    def sample_cov(self) -> np.ndarray:
        """Maximum-likelihood (1/n) sample covariance of the members."""
        a = self.anomalies()
        return a.T @ a / self.n


@dataclass(frozen=True)
class GaussianOracle:
    """Exact Gaussian reference: mean, dense covariance, optional sparse
    precision (present when the model is Markov)."""

    mean: np.ndarray
    cov: np.ndarray
    prec: SparseSpd | None = None

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch("covariance shape does not match mean")
        if not np.allclose(cov, cov.T, atol=1e-10 * (1 + np.abs(cov).max())):
            raise ValueError("covariance must be symmetric")
        if self.prec is not None and self.prec.dim != mean.size:
            raise DimensionMismatch("precision dimension does not match mean")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def p(self) -> int:
        return self.mean.size


def stationary_markov_oracle(variance: float, lag_corr: float, p: int,
                             mean: float = 0.0) -> GaussianOracle:
    """Stationary first-order Markov Gaussian: cov[i,j] = v * r^|i-j| with the
    matching tridiagonal precision."""
    if not (abs(lag_corr) < 1.0):
        raise NonStationary(f"|lag correlation| must be < 1, got {lag_corr}")
    if variance <= 0:
        raise ValueError("variance must be positive")
    idx = np.arange(p)
    cov = variance * lag_corr ** np.abs(idx[:, None] - idx[None, :])
    scale = 1.0 / (variance * (1.0 - lag_corr ** 2))
    diag = np.full(p, (1.0 + lag_corr ** 2) * scale)
    if p >= 1:
        diag[0] = scale
        diag[-1] = scale
    rows = np.concatenate([idx, idx[1:]])
    cols = np.concatenate([idx, idx[1:] - 1])
    vals = np.concatenate([diag, np.full(max(p - 1, 0), -lag_corr * scale)])
    prec = SparseSpd(p, rows, cols, vals)
    return GaussianOracle(np.full(p, mean), cov, prec)


# ---------------------------------------------------------------------------
# Auto-regressive chain
# ---------------------------------------------------------------------------

def ar1_oracle(p: int, phi: float) -> GaussianOracle:
    """Unit-innovation stationary AR-1: cov[i,j] = phi^|i-j| / (1 - phi^2)."""
    if not abs(phi) < 1.0:
        raise NonStationary(f"|phi| must be < 1, got {phi}")
    return stationary_markov_oracle(1.0 / (1.0 - phi ** 2), phi, p)


def ar1_sample(oracle: GaussianOracle, n: int, seed) -> Ensemble:
    """Draw members through the defining recursion u_t = phi u_{t-1} + e_t."""
    rng = np.random.default_rng(seed)
    p = oracle.p
    var0 = oracle.cov[0, 0]
    phi = oracle.cov[0, 1] / var0 if p > 1 else 0.0
    innov_sd = float(np.sqrt(var0 * (1.0 - phi ** 2)))
    data = np.empty((n, p))
    data[:, 0] = rng.standard_normal(n) * np.sqrt(var0)
    for t in range(1, p):
        data[:, t] = phi * data[:, t - 1] + innov_sd * rng.standard_normal(n)
    return Ensemble(data + oracle.mean)


# ---------------------------------------------------------------------------
# Matern-1 exact conditioning (one noisy point observation)
# ---------------------------------------------------------------------------

def matern1_grid_oracle(kappa: float, grid: np.ndarray) -> GaussianOracle:
    """Exact stationary Matern-1 (exponential-covariance) process restricted
    to a uniform grid; Markov, so the tridiagonal precision is included."""
    grid = np.asarray(grid, dtype=float)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    dx = np.diff(grid)
    if grid.size > 1 and not np.allclose(dx, dx[0], rtol=1e-9):
        raise ValueError("grid must be uniform for the Markov oracle")
    r = float(np.exp(-dx[0] / kappa)) if grid.size > 1 else 0.0
    return stationary_markov_oracle(kappa / 2.0, r, grid.size)


def matern1_conditional_gain(kappa: float, sigma_eps: float, grid: np.ndarray,
                             obs_position: float) -> np.ndarray:
    """Per-position gain for conditioning on one noisy point observation:
    kappa * exp(-|p - x| / kappa) / (kappa + 2 sigma_eps^2)."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    grid = np.asarray(grid, dtype=float)
    return (kappa * np.exp(-np.abs(obs_position - grid) / kappa)
            / (kappa + 2.0 * sigma_eps ** 2))


def exact_point_update(ens: Ensemble, gains: np.ndarray, obs_index: int,
                       d: float, noise_draws: np.ndarray) -> Ensemble:
    """Member-wise exact conditioning given precomputed gains: each member is
    shifted by -gain * (own noisy observation - actual observation)."""
    d_i = ens.data[:, obs_index] + np.asarray(noise_draws, dtype=float)
    return Ensemble(ens.data - np.outer(d_i - d, gains))


def gain_from_cov(cov: np.ndarray, obs_index: int, noise_var: float) -> np.ndarray:
    """Conditioning gain for one noisy point observation from a covariance."""
    return cov[:, obs_index] / (cov[obs_index, obs_index] + noise_var)


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck via Euler-Maruyama
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OuEulerResult:
    ensemble: Ensemble
    euler_oracle: GaussianOracle   # distribution the members are drawn from
    exact_oracle: GaussianOracle   # stationary process restricted to the grid


def ou_euler_sample(kappa: float, dt: float, steps: int, n: int, seed) -> OuEulerResult:
    """Stationary mean-reverting chain integrated by the explicit first-order
    scheme: lag-one coefficient 1 - dt/kappa, innovation variance dt.

    The members follow the scheme's own Gaussian law exactly (stationary
    start), while the exact oracle is the continuous process on the same grid
    with covariance (kappa/2) exp(-|h|/kappa).
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if not (0 < dt < 2.0 * kappa):
        raise UnstableStep(
            f"need 0 < dt < 2*kappa for |1 - dt/kappa| < 1, got dt={dt}")
    phi = 1.0 - dt / kappa
    euler = stationary_markov_oracle(dt / (1.0 - phi ** 2), phi, steps)
    exact = stationary_markov_oracle(kappa / 2.0, float(np.exp(-dt / kappa)), steps)

    rng = np.random.default_rng(seed)
    data = np.empty((n, steps))
    data[:, 0] = rng.standard_normal(n) * np.sqrt(euler.cov[0, 0])
    sd = np.sqrt(dt)
    for t in range(1, steps):
        data[:, t] = phi * data[:, t - 1] + sd * rng.standard_normal(n)
    return OuEulerResult(Ensemble(data), euler, exact)


# ---------------------------------------------------------------------------
# Lorenz-96
# ---------------------------------------------------------------------------

def _l96_rhs(x: np.ndarray, forcing: float) -> np.ndarray:
    return ((np.roll(x, -1, axis=-1) - np.roll(x, 2, axis=-1))
            * np.roll(x, 1, axis=-1) - x + forcing)


def lorenz96_integrate(init: Ensemble, forcing: float, dt: float, t_end: float,
                       scheme: str = "rk4") -> Ensemble:
    """Integrate every member independently with cyclic indexing; raises on
    blow-up instead of returning junk."""
    if init.p < 4:
        raise TooFewStates("the cyclic dynamics need at least 4 states")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if scheme not in ("euler", "rk4"):
        raise ValueError(f"unknown scheme {scheme!r}")
    x = init.data.copy()
    n_steps = int(round(t_end / dt))
    for step in range(n_steps):
        if scheme == "euler":
            x = x + dt * _l96_rhs(x, forcing)
        else:
            k1 = _l96_rhs(x, forcing)
            k2 = _l96_rhs(x + 0.5 * dt * k1, forcing)
            k3 = _l96_rhs(x + 0.5 * dt * k2, forcing)
            k4 = _l96_rhs(x + dt * k3, forcing)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % 25 == 0 or step == n_steps - 1:
            if not np.isfinite(x).all() or np.abs(x).max() > 1e8:
                raise NonFinite(f"trajectory blew up at step {step + 1}")
    return Ensemble(x)


def lorenz96_ensemble(m: int, n: int, forcing: float = 8.0, dt: float = 0.01,
                      t_end: float = 4.0, scheme: str = "rk4", seed=0,
                      init_scale: float = 0.01) -> Ensemble:
    """Independent small random initial states integrated to t_end; the final
    states form one i.i.d. ensemble."""
    rng = np.random.default_rng(seed)
    init = Ensemble(init_scale * rng.standard_normal((n, m)))
    return lorenz96_integrate(init, forcing, dt, t_end, scheme)


# ---------------------------------------------------------------------------
# 2D anisotropic exponential random field
# ---------------------------------------------------------------------------

def grf2d_kernel(rows: int, cols: int, range_x: float, range_y: float,
                 angle_deg: float, nugget: float = 1e-10) -> np.ndarray:
    """Dense covariance of the anisotropic exponential field on the unit
    square, cells row-major: exp(-|| diag(1/range) R(-angle) h ||) plus the
    tiny stabilising nugget on the diagonal."""
    if range_x <= 0 or range_y <= 0:
        raise ValueError("correlation ranges must be positive")
    p = rows * cols
    if p > ORACLE_DENSE_LIMIT:
        raise GridTooLargeForOracle(
            f"{rows}x{cols} has {p} cells > {ORACLE_DENSE_LIMIT}; exact dense "
            "evaluation refused")
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    xs = (cc / (cols - 1) if cols > 1 else cc * 0.0).ravel()
    ys = (rr / (rows - 1) if rows > 1 else rr * 0.0).ravel()
    dx = xs[:, None] - xs[None, :]
    dy = ys[:, None] - ys[None, :]
    th = np.deg2rad(angle_deg)
    hx = np.cos(th) * dx + np.sin(th) * dy
    hy = -np.sin(th) * dx + np.cos(th) * dy
    dist = np.sqrt((hx / range_x) ** 2 + (hy / range_y) ** 2)
    return np.exp(-dist) + nugget * np.eye(p)


def grf2d_anisotropic_exponential(rows: int, cols: int, range_x: float,
                                  range_y: float, angle_deg: float, n: int,
                                  seed, nugget: float = 1e-10
                                  ) -> tuple[Ensemble, GaussianOracle]:
    """Mean-zero field on the unit square with anisotropic exponential
    correlation; not Markov in 2D.

    Sampling goes through a dense factorisation of the oracle covariance, so
    grids are capped at ORACLE_DENSE_LIMIT cells; the nugget that stabilises
    the factorisation is part of the oracle.
    """
    cov = grf2d_kernel(rows, cols, range_x, range_y, angle_deg, nugget)
    chol = np.linalg.cholesky(cov)
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((n, cov.shape[0])) @ chol.T
    return Ensemble(data), GaussianOracle(np.zeros(cov.shape[0]), cov)


def sample_gaussian_from_precision(prec: SparseSpd, n: int, seed,
                                   mean: np.ndarray | None = None,
                                   factor: CholeskyFactor | None = None) -> Ensemble:
    """Draw from N(mean, prec^{-1}) through the sparse factor."""
    if factor is None:
        factor = cholesky(prec)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((prec.dim, n))
    x = factor.perm.unapply(factor.solve_upper(z)).T
    if mean is not None:
        x = x + np.asarray(mean, dtype=float)
    return Ensemble(x)


# ---------------------------------------------------------------------------
# Finite-element assembly (piecewise-linear triangles / 1D intervals)
# ---------------------------------------------------------------------------

def assemble_mass_stiffness(mesh, alpha: float = 1.0
                            ) -> tuple[sp.csr_matrix, np.ndarray, sp.csr_matrix]:
    """Consistent mass M, lumped (row-sum diagonal) mass, and stiffness.

    The stiffness is the positive-semidefinite gradient form alpha times
    integral of grad(phi_i) . grad(phi_j); its rows sum to zero because
    constants are in the nullspace of the gradient.
    """
    if isinstance(mesh, Mesh1D):
        return _assemble_1d(mesh, alpha)
    if isinstance(mesh, TriMesh):
        return _assemble_2d(mesh, alpha)
    raise TypeError(f"unsupported mesh type {type(mesh)!r}")


def _assemble_1d(mesh: Mesh1D, alpha: float):
    p = mesh.n_vertices
    h = np.diff(mesh.nodes)
    i0 = np.arange(p - 1)
    rows, cols, mv, kv = [], [], [], []
    local_m = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    local_k = np.array([[1.0, -1.0], [-1.0, 1.0]])
    for a in range(2):
        for b in range(2):
            rows.append(i0 + a)
            cols.append(i0 + b)
            mv.append(h * local_m[a, b])
            kv.append(alpha * local_k[a, b] / h)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    mass = sp.coo_matrix((np.concatenate(mv), (rows, cols)), shape=(p, p)).tocsr()
    stiff = sp.coo_matrix((np.concatenate(kv), (rows, cols)), shape=(p, p)).tocsr()
    return mass, np.asarray(mass.sum(axis=1)).ravel(), stiff


def _assemble_2d(mesh: TriMesh, alpha: float):
    p = mesh.n_vertices
    areas = mesh.areas()
    if np.any(areas <= 0):
        raise DegenerateElement("non-positive element area")
    tris = mesh.triangles
    verts = mesh.vertices
    local_m = (np.ones((3, 3)) + np.eye(3)) / 12.0
    # cyclic vertex differences give the (unnormalised) basis gradients
    xj = verts[tris[:, [1, 2, 0]]]
    xk = verts[tris[:, [2, 0, 1]]]
    beta = xj[:, :, 1] - xk[:, :, 1]    # (t, 3)
    gamma = xk[:, :, 0] - xj[:, :, 0]
    rows, cols, mv, kv = [], [], [], []
    for a in range(3):
        for b in range(3):
            rows.append(tris[:, a])
            cols.append(tris[:, b])
            mv.append(areas * local_m[a, b])
            kv.append(alpha * (beta[:, a] * beta[:, b] + gamma[:, a] * gamma[:, b])
                      / (4.0 * areas))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    mass = sp.coo_matrix((np.concatenate(mv), (rows, cols)), shape=(p, p)).tocsr()
    stiff = sp.coo_matrix((np.concatenate(kv), (rows, cols)), shape=(p, p)).tocsr()
    return mass, np.asarray(mass.sum(axis=1)).ravel(), stiff


@dataclass(frozen=True)
class FemHeatSystem:
    """Assembled operators of the stochastic heat dynamics on a mesh.

    The one-step propagator is B = I - dt * Mlump^{-1} K: the diffusion
    operator enters the time stepping with the dissipative sign, while the
    stored stiffness K is the positive gradient form used in the goldens.
    """

    mass: SparseSpd
    mass_lumped: SparseSpd
    stiffness: SparseSpd
    propagator: sp.csr_matrix
    innovation_prec: SparseSpd
    alpha: float
    sigma: float
    dt: float

    @property
    def p(self) -> int:
        return self.mass.dim


def fem_heat_assemble(mesh: TriMesh, alpha: float, sigma: float, dt: float) -> FemHeatSystem:
    """Mass/lumped-mass/stiffness assembly plus the time-stepping pieces:
    propagator B and the innovation precision (sigma*dt)^{-2} Mlump."""
    if sigma <= 0 or dt <= 0:
        raise ValueError("sigma and dt must be positive")
    mass, lumped, stiff = assemble_mass_stiffness(mesh, alpha)
    b = (sp.identity(mesh.n_vertices, format="csr")
         - dt * sp.diags(1.0 / lumped) @ stiff).tocsr()
    return FemHeatSystem(
        mass=SparseSpd.from_scipy_symmetric(mass),
        mass_lumped=SparseSpd.diagonal(lumped),
        stiffness=SparseSpd.from_scipy_symmetric(stiff),
        propagator=b,
        innovation_prec=SparseSpd.diagonal(lumped / (sigma * dt) ** 2),
        alpha=alpha, sigma=sigma, dt=dt)


def heat_smoothing_precision(system: FemHeatSystem, n_times: int) -> SparseSpd:
    """Joint precision of the stacked trajectory (u_1 .. u_T).

    Block-tridiagonal in time: off-diagonal blocks -B^T Mlump, interior
    diagonal blocks B^T Mlump B + Mlump, last block Mlump, everything over
    (sigma dt)^2. The first diagonal block carries the same proper-prior form
    as the interior ones so the joint matrix is SPD even though the heat
    operator leaves the spatially constant mode undamped.
    """
    if n_times < 1:
        raise ValueError("need at least one time block")
    p = system.p
    ml = sp.diags(system.mass_lumped.diag())
    b = system.propagator
    cross = -(b.T @ ml)                      # (t, t+1) block
    diag_interior = (b.T @ ml @ b + ml)
    blocks = []
    for t in range(n_times):
        row = [None] * n_times
        if t < n_times - 1:
            row[t] = diag_interior
            row[t + 1] = cross
        else:
            row[t] = ml
        if t > 0:
            row[t - 1] = cross.T
        blocks.append(row)
    joint = sp.bmat(blocks, format="csr") / (system.sigma * system.dt) ** 2
    return SparseSpd.from_scipy_symmetric(joint)


def matern1_fem_precision(kappa: float, mesh) -> SparseSpd:
    """Graph-sparse precision (kappa^2 Mlump + K)^T Mlump^{-1} (kappa^2 Mlump + K)
    of the second-order SPDE field on the mesh; SPD with a two-hop mesh
    adjacency pattern."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    _, lumped, stiff = assemble_mass_stiffness(mesh, alpha=1.0)
    k_op = (kappa ** 2) * sp.diags(lumped) + stiff
    lam = k_op.T @ sp.diags(1.0 / lumped) @ k_op
    return SparseSpd.from_scipy_symmetric(lam)
