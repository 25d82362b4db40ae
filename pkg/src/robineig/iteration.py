"""Inverse power iterations for three principal-eigenvalue problems.

Each scheme repeatedly solves a source problem whose right-hand side is
the previous iterate scaled by its own Rayleigh quotient; no per-step
normalization is applied, since the proven norm bounds keep the iterates
in range:

* Robin: solve (K + B_h) u_{k+1} = R(u_k) M u_k with
  R(u) = (u'Ku + u'B_h u) / u'Mu.
* Mixed: solve the Dirichlet-eliminated system
  K~ u_{k+1} = R(u_k) P(M u_k) with R(u) = u'Ku / u'Mu, where P zeroes
  the constrained entries.
* Insulation: rebuild B from the current mass-m profile h_k, solve
  (K + B_{h_k}) u_{k+1} = R_m(u_k) M u_k, then set
  h_{k+1} = m |u_{k+1}| / boundary_l1(u_{k+1}).  Here
  R_m(u) = (u'Ku + boundary_l1(u)^2 / m) / u'Mu, and the shared boundary
  quadrature makes R_m(u_k) equal to the Robin quotient R(u_k, h_k)
  exactly.

The run driver stops on the relative decrement of the Rayleigh quotient,
which is nonincreasing along all three schemes.  Per-step diagnostics
(quotients, norms, fixed-point residuals, profile masses) are collected in
an IterationTrace; check_monotonicity and uniform_bound_check turn the
proven inequalities into executable assertions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    BoundaryProfile,
    DirichletConstraint,
    SymSparseMatrix,
    apply_constraint,
    assemble_boundary_mass,
    assemble_mass,
    assemble_stiffness,
    boundary_l1,
    constrain_vector,
    profile_from_vector,
)
from .linalg import PrefactoredSPD, SolverConfig, solve_spd
from .mesh import Mesh, Tag

#: relative slack for the monotonicity checks; covers solver tolerance
#: amplified through the quotients
MONOTONICITY_SLACK = 1e-9

#: prefactorize fixed operators in the run driver up to this dimension
PREFACTOR_MAX_DIM = 5000


class ProblemKind(enum.Enum):
    ROBIN = "robin"
    MIXED = "mixed"
    INSULATION = "insulation"


@dataclass(frozen=True)
class ProblemSpec:
    """One of the three eigenproblems on a tagged mesh."""

    kind: ProblemKind
    mesh: Mesh
    profile: BoundaryProfile | None = None
    mass: float | None = None

    @classmethod
    def robin(cls, mesh: Mesh, profile: BoundaryProfile) -> "ProblemSpec":
        if mesh.tags_present() != {Tag.ROBIN_ALL}:
            raise ValueError(
                "Robin problem needs a mesh whose whole boundary is tagged RobinAll"
            )
        return cls(ProblemKind.ROBIN, mesh, profile=profile)

    @classmethod
    def mixed(cls, mesh: Mesh) -> "ProblemSpec":
        tags = mesh.tags_present()
        if not (Tag.DIRICHLET_INNER in tags and Tag.NEUMANN_OUTER in tags):
            raise ValueError(
                "mixed problem needs both DirichletInner and NeumannOuter boundary tags"
            )
        return cls(ProblemKind.MIXED, mesh)

    @classmethod
    def insulation(cls, mesh: Mesh, mass: float) -> "ProblemSpec":
        if mass <= 0.0:
            raise ValueError(f"insulation mass must be positive, got {mass}")
        if mesh.tags_present() != {Tag.ROBIN_ALL}:
            raise ValueError(
                "insulation problem needs a mesh whose whole boundary is tagged RobinAll"
            )
        return cls(ProblemKind.INSULATION, mesh, mass=mass)


@dataclass(frozen=True)
class IterationConfig:
    """Stopping rule and initial vector for the run driver.

    ``initial``: "constant" (all ones), "affine" (one plus normalized
    distance from the Dirichlet-component barycenter, giving values in
    [1, 2]), or an explicit strictly positive nodal vector.
    """

    rtol: float = 1e-10
    max_steps: int = 500
    initial: object = "constant"

    def __post_init__(self):
        if not (0.0 < self.rtol < 1.0):
            raise ValueError(f"rtol must be in (0, 1), got {self.rtol}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if isinstance(self.initial, str):
            if self.initial not in ("constant", "affine"):
                raise ValueError(f"unknown initial vector choice {self.initial!r}")
        else:
            object.__setattr__(
                self, "initial", np.asarray(self.initial, dtype=np.float64)
            )


@dataclass
class IterationTrace:
    """Per-step diagnostics of one run.

    ``rayleigh`` holds the active functional (R, the gradient quotient, or
    R_m); ``energy_norm`` is sqrt(u'(K+B)u) for Robin/Insulation and the
    gradient seminorm sqrt(u'Ku) for Mixed.  Insulation runs additionally
    record the profile mass and the Robin quotient R(u_k, h_k).
    """

    kind: ProblemKind
    rayleigh: list = field(default_factory=list)
    l2_norm: list = field(default_factory=list)
    energy_norm: list = field(default_factory=list)
    step_residual: list = field(default_factory=list)
    profile_mass: list | None = None
    robin_quotient: list | None = None
    lam: float = float("nan")
    converged: bool = False
    steps: int = 0

    def __len__(self) -> int:
        return len(self.rayleigh)


@dataclass(frozen=True)
class InsulationState:
    """Iterate and its mass-m profile for the insulation scheme."""

    u: np.ndarray
    profile: BoundaryProfile


@dataclass(frozen=True)
class MonotonicityViolation:
    relation: str
    step: int
    magnitude: float


class _Operators:
    """Assembled matrices and functionals for one ProblemSpec."""

    def __init__(self, spec: ProblemSpec, solver: SolverConfig | None = None):
        self.spec = spec
        self.solver = solver or SolverConfig()
        mesh = spec.mesh
        self.K = assemble_stiffness(mesh)
        self.M = assemble_mass(mesh)
        self.constraint = None
        self.B = None
        if spec.kind is ProblemKind.ROBIN:
            self.B = assemble_boundary_mass(mesh, spec.profile)
            self.A = self.K + self.B
        elif spec.kind is ProblemKind.MIXED:
            self.constraint = DirichletConstraint.from_mesh(mesh)
            self.A = apply_constraint(self.K, self.constraint)
        else:
            self.A = None  # rebuilt from the profile each step

    def rayleigh(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=np.float64)
        uMu = self.M.quad(u)
        if uMu == 0.0:
            raise ValueError("Rayleigh quotient of the zero vector")
        if self.spec.kind is ProblemKind.ROBIN:
            return (self.K.quad(u) + self.B.quad(u)) / uMu
        if self.spec.kind is ProblemKind.MIXED:
            return self.K.quad(u) / uMu
        bl1 = boundary_l1(self.spec.mesh, u)
        return (self.K.quad(u) + bl1 * bl1 / self.spec.mass) / uMu

    def insulation_operator(self, profile: BoundaryProfile) -> SymSparseMatrix:
        return self.K + assemble_boundary_mass(self.spec.mesh, profile)

    def fixed_point_residual(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=np.float64)
        if not np.any(u):
            raise ValueError("fixed-point residual of the zero vector")
        R = self.rayleigh(u)
        Mu = self.M @ u
        if self.spec.kind is ProblemKind.ROBIN:
            resid = self.A @ u - R * Mu
        elif self.spec.kind is ProblemKind.MIXED:
            resid = self.A @ u - R * constrain_vector(Mu, self.constraint)
        else:
            h = profile_from_vector(self.spec.mesh, u, self.spec.mass)
            resid = self.insulation_operator(h) @ u - R * Mu
        return float(np.linalg.norm(resid) / np.linalg.norm(Mu))


def rayleigh(spec: ProblemSpec, u: np.ndarray) -> float:
    """Rayleigh quotient of the active functional at u.

    Robin: (u'Ku + u'B_h u)/u'Mu; Mixed: u'Ku/u'Mu (u should satisfy the
    constraint); Insulation: (u'Ku + boundary_l1(u)^2/m)/u'Mu.
    """
    return _Operators(spec).rayleigh(u)


def fixed_point_residual(spec: ProblemSpec, u: np.ndarray) -> float:
    """Eigen-equation residual ||A(u) u - R(u) M u|| / ||M u||.

    A(u) is K + B_h for Robin, the constrained stiffness for Mixed (with
    the constrained entries of M u zeroed to match the step equation), and
    K + B_{h(u)} with h(u) = m|u|/boundary_l1(u) for Insulation.  The
    value is invariant under positive scaling of u.
    """
    return _Operators(spec).fixed_point_residual(u)


def robin_step(u_k: np.ndarray, K: SymSparseMatrix, M: SymSparseMatrix,
               B_h: SymSparseMatrix, config: SolverConfig | None = None,
               _solver: PrefactoredSPD | None = None) -> np.ndarray:
    """One Robin inverse-iteration step: (K+B_h) u = R(u_k) M u_k."""
    u_k = np.asarray(u_k, dtype=np.float64)
    uMu = M.quad(u_k)
    if uMu == 0.0:
        raise ValueError("step from the zero vector")
    R = (K.quad(u_k) + B_h.quad(u_k)) / uMu
    rhs = R * (M @ u_k)
    if _solver is not None:
        return _solver.solve(rhs)
    return solve_spd(K + B_h, rhs, config)


def mixed_step(u_k: np.ndarray, K_constrained: SymSparseMatrix,
               M: SymSparseMatrix, constraint: DirichletConstraint,
               config: SolverConfig | None = None,
               _solver: PrefactoredSPD | None = None) -> np.ndarray:
    """One mixed inverse-iteration step on the constrained system.

    Solves K~ u = R(u_k) P(M u_k); the output satisfies the constraint
    exactly.  Rejects R(u_k) = 0, for which the iteration would collapse.
    """
    u_k = np.asarray(u_k, dtype=np.float64)
    uMu = M.quad(u_k)
    if uMu == 0.0:
        raise ValueError("step from the zero vector")
    uKu = K_constrained.quad(constrain_vector(u_k, constraint))
    R = uKu / uMu
    if R <= 0.0:
        raise ValueError(
            f"gradient Rayleigh quotient must be positive, got {R:g}: "
            "the mixed iteration is not defined for (near-)constant data"
        )
    rhs = R * constrain_vector(M @ u_k, constraint)
    if _solver is not None:
        out = _solver.solve(rhs)
    else:
        out = solve_spd(K_constrained, rhs, config)
    return constrain_vector(out, constraint)


def insulation_step(state: InsulationState, K: SymSparseMatrix,
                    M: SymSparseMatrix, mesh: Mesh, m: float,
                    config: SolverConfig | None = None) -> InsulationState:
    """One insulation step: Robin solve with h_k, then profile update.

    Solves (K + B_{h_k}) u = R_m(u_k) M u_k and renormalizes the profile
    to h_{k+1} = m |u| / boundary_l1(u), whose trapezoidal mass is m by
    construction.
    """
    u_k = np.asarray(state.u, dtype=np.float64)
    uMu = M.quad(u_k)
    if uMu == 0.0:
        raise ValueError("step from the zero vector")
    bl1 = boundary_l1(mesh, u_k)
    R_m = (K.quad(u_k) + bl1 * bl1 / m) / uMu
    B = assemble_boundary_mass(mesh, state.profile)
    u_next = solve_spd(K + B, R_m * (M @ u_k), config)
    return InsulationState(u_next, profile_from_vector(mesh, u_next, m))


def _default_initial(spec: ProblemSpec, kind) -> np.ndarray:
    mesh = spec.mesh
    if isinstance(kind, np.ndarray):
        if kind.shape != (mesh.num_vertices,):
            raise ValueError(
                f"initial vector has shape {kind.shape}, expected "
                f"({mesh.num_vertices},)"
            )
        return kind.copy()
    if kind == "constant":
        return np.ones(mesh.num_vertices)
    # "affine": one plus normalized distance from the barycenter of the
    # Dirichlet component (whole boundary when there is none)
    if spec.kind is ProblemKind.MIXED:
        anchor = mesh.vertices[mesh.boundary_vertices(Tag.DIRICHLET_INNER)].mean(axis=0)
    else:
        anchor = mesh.vertices[mesh.boundary_vertices()].mean(axis=0)
    d = np.hypot(*(mesh.vertices - anchor).T)
    span = d.max() - d.min()
    if span == 0.0:
        return np.ones(mesh.num_vertices)
    return 1.0 + (d - d.min()) / span


def run(spec: ProblemSpec, config: IterationConfig | None = None,
        solver: SolverConfig | None = None):
    """Run the inverse iteration until the Rayleigh decrement is small.

    Stops when |R_k - R_{k+1}| <= rtol * R_{k+1} or after max_steps.
    Returns (lam, u, trace) with lam the final Rayleigh quotient and u the
    final (unnormalized) iterate.  For the mixed problem the initial
    vector is projected onto the constraint before step 0 is recorded, so
    every recorded quantity lives in the constrained space.
    """
    config = config or IterationConfig()
    ops = _Operators(spec, solver)
    mesh = spec.mesh

    u = _default_initial(spec, config.initial)
    if np.any(u <= 0.0):
        raise ValueError("initial vector must be strictly positive at all nodes")

    trace = IterationTrace(kind=spec.kind)
    state = None
    prefactored = None

    if spec.kind is ProblemKind.MIXED:
        u = constrain_vector(u, ops.constraint)
        if ops.rayleigh(u) <= 0.0:
            raise ValueError("initial vector must have positive gradient quotient")
    if spec.kind is ProblemKind.INSULATION:
        state = InsulationState(u, profile_from_vector(mesh, u, spec.mass))
        trace.profile_mass = []
        trace.robin_quotient = []
    elif ops.A.dim <= PREFACTOR_MAX_DIM:
        prefactored = PrefactoredSPD(ops.A, ops.solver,
                                     direct_max_dim=PREFACTOR_MAX_DIM)

    def record(u_now, state_now):
        R = ops.rayleigh(u_now)
        trace.rayleigh.append(R)
        trace.l2_norm.append(float(np.sqrt(ops.M.quad(u_now))))
        if spec.kind is ProblemKind.MIXED:
            energy2 = ops.K.quad(u_now)
        elif spec.kind is ProblemKind.ROBIN:
            energy2 = ops.K.quad(u_now) + ops.B.quad(u_now)
        else:
            B_now = assemble_boundary_mass(mesh, state_now.profile)
            energy2 = ops.K.quad(u_now) + B_now.quad(u_now)
            trace.profile_mass.append(state_now.profile.mass(mesh))
            trace.robin_quotient.append(energy2 / ops.M.quad(u_now))
        trace.energy_norm.append(float(np.sqrt(max(energy2, 0.0))))
        trace.step_residual.append(ops.fixed_point_residual(u_now))
        return R

    R_prev = record(u, state)
    for _ in range(config.max_steps):
        if spec.kind is ProblemKind.ROBIN:
            u = robin_step(u, ops.K, ops.M, ops.B, ops.solver, _solver=prefactored)
        elif spec.kind is ProblemKind.MIXED:
            u = mixed_step(u, ops.A, ops.M, ops.constraint, ops.solver,
                           _solver=prefactored)
        else:
            state = insulation_step(state, ops.K, ops.M, mesh, spec.mass, ops.solver)
            u = state.u
        R = record(u, state)
        trace.steps += 1
        if abs(R_prev - R) <= config.rtol * abs(R):
            trace.converged = True
            break
        R_prev = R

    trace.lam = trace.rayleigh[-1]
    return trace.lam, u, trace


_RELATION_R = "R nonincreasing"
_RELATION_L2 = "L2 norm nondecreasing"
_RELATION_PRODUCT = "product R*L2 nonincreasing"
_RELATION_ENERGY = "energy norm nondecreasing"


def check_monotonicity(trace: IterationTrace, slack: float = MONOTONICITY_SLACK):
    """Check the proven step-to-step inequalities on a trace.

    Robin and mixed runs must satisfy, for every consecutive pair: the
    product R*||u|| and R nonincreasing, the L2 and energy norms
    nondecreasing.  Insulation runs are checked for exactly three
    relations (product, L2 norm, R_m); no energy-norm relation is proven
    for the varying-profile scheme.  Returns a list of violations, empty
    when every applicable inequality holds within relative ``slack``.
    """
    if len(trace) < 2:
        raise ValueError("need a trace with at least 2 recorded steps")
    checks = [
        (_RELATION_PRODUCT,
         [r * n for r, n in zip(trace.rayleigh, trace.l2_norm)], -1),
        (_RELATION_L2, trace.l2_norm, +1),
        (_RELATION_R, trace.rayleigh, -1),
    ]
    if trace.kind is not ProblemKind.INSULATION:
        checks.append((_RELATION_ENERGY, trace.energy_norm, +1))

    violations = []
    for relation, series, direction in checks:
        for k in range(len(series) - 1):
            prev, nxt = series[k], series[k + 1]
            if direction < 0:  # nonincreasing
                bad = nxt > prev * (1.0 + slack)
                magnitude = (nxt - prev) / abs(prev) if prev else np.inf
            else:  # nondecreasing
                bad = nxt < prev * (1.0 - slack)
                magnitude = (prev - nxt) / abs(prev) if prev else np.inf
            if bad:
                violations.append(MonotonicityViolation(relation, k, magnitude))
    return violations


def uniform_bound_check(trace: IterationTrace, lam_lower: float,
                        slack: float = MONOTONICITY_SLACK) -> bool:
    """Check the uniform norm bounds implied by a positive lower eigenvalue.

    With R_0 the initial quotient and ||u_0|| the initial L2 norm, every
    later step must satisfy ||u_k|| <= (R_0/lam_lower) ||u_0|| and
    energy_k^2 <= (R_0^3/lam_lower^2) ||u_0||^2, within relative slack.
    A single-step trace passes trivially.
    """
    if lam_lower <= 0.0:
        raise ValueError(f"lam_lower must be positive, got {lam_lower}")
    if len(trace) == 0:
        raise ValueError("empty trace")
    R0 = trace.rayleigh[0]
    n0 = trace.l2_norm[0]
    l2_cap = (R0 / lam_lower) * n0 * (1.0 + slack)
    energy2_cap = (R0**3 / lam_lower**2) * n0 * n0 * (1.0 + slack)
    for k in range(1, len(trace)):
        if trace.l2_norm[k] > l2_cap:
            return False
        if trace.energy_norm[k] ** 2 > energy2_cap:
            return False
    return True
