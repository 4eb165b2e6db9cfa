"""Scenario configuration, presets, run loop, and output files.

Config format: flat ``key = value`` lines under ``[section]`` headers.  All
physics constants are explicit so a run is reproducible from its config
echo.  Unknown sections or keys are rejected.

Output contract per run directory:

* ``profiles_<t>.csv`` with header ``x,rho,u1,u2,T`` plus ``,E_field`` for
  plasma runs, one row per cell, at every requested snapshot time;
* ``diagnostics.csv`` with header
  ``t,mass_me,mom1_me,energy_me,mass_mf,mom1_mf,energy_mf`` plus
  ``,etotal_me_amp,etotal_mf_amp,etotal_mf_poiss`` for plasma runs;
* ``run.meta`` echoing the fully resolved configuration.
"""

from __future__ import annotations

import io
import json
import os
import warnings
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from .collision import (
    BGKOperator,
    BoltzmannSpectral,
    LandauSpectral,
    PenaltyParams,
)
from .errors import ConfigError
from .grid import (
    SpatialGrid,
    VelocityGrid,
    gaussian_tail_mass,
    maxwellian,
    moments,
    primitives,
)
from .micromacro import (
    KnudsenField,
    MicroMacroSetup,
    initial_state,
    interface_context,
    mm_step,
    apply_bc,
)
from .reference import (
    KineticState,
    companion_moment_step,
    euler_step,
    penalized_bgk_step,
    penalized_fp_step,
    rk4_step,
)
from .vlasov import (
    PlasmaState,
    initial_plasma_state,
    kinetic_energy_of,
    solve_poisson,
    total_energy,
    va_step,
    vab_step,
)

EQUATIONS = ("boltzmann", "landau", "bgk", "vlasov-ampere", "vab")
SOLVERS = ("MM", "FJ", "JY", "DS", "EULER")
IC_KINDS = ("trig-moments", "sod", "plasma-cos")
TAIL_WARN = 1e-6


@dataclass
class Scenario:
    """Fully resolved run description; every field has a concrete value."""

    name: str = "custom"
    equation: str = "boltzmann"
    solver: str = "MM"
    # spatial grid
    nx: int = 100
    x_a: float = 0.0
    x_b: float = 1.0
    bc: str = "periodic"
    # velocity grid
    lv: float = 8.4
    nv: int = 32
    dim: int = 2
    # time stepping
    dt_div: float = 20.0
    dt: float = 0.0          # 0 means dx / dt_div
    t_end: float = 0.2
    snapshots: tuple = ()
    diag_every: int = 1
    # Knudsen number
    eps: float = 1.0
    eps_profile: str = "constant"   # constant | test1b-tanh
    # initial condition
    ic_kind: str = "trig-moments"
    ic_shape: str = "double-peak"   # double-peak | maxwellian
    rho_base: float = 2.0
    rho_amp: float = 1.0
    rho_wave: float = 2.0           # multiples of pi
    rho_div: float = 3.0
    T_base: float = 3.0
    T_amp: float = 1.0
    T_wave: float = 2.0
    T_div: float = 4.0
    u0x: float = 0.2
    u0y: float = 0.0
    sod_rho_l: float = 1.0
    sod_T_l: float = 1.0
    sod_rho_r: float = 0.125
    sod_T_r: float = 0.25
    sod_split: float = 0.5
    plasma_amp: float = 1.0
    plasma_wave: float = 2.0
    background: float = 1.0
    # collision kernel
    b_const: float = 1.0 / (2.0 * np.pi)
    n_theta: int = 16
    gamma: float = 0.0
    tau: float = 1.0
    # scheme options
    order: int = 2
    beta_choice: int = 1
    beta0: float = 1.0
    cg_tol: float = 1e-10
    field_solver: str = "ampere"

    def resolved_dt(self) -> float:
        if self.dt > 0.0:
            return self.dt
        return (self.x_b - self.x_a) / self.nx / self.dt_div

    def is_plasma(self) -> bool:
        return self.equation in ("vlasov-ampere", "vab")

    def validate(self):
        if self.equation not in EQUATIONS:
            raise ConfigError(f"unknown equation {self.equation!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.ic_kind not in IC_KINDS:
            raise ConfigError(f"unknown ic kind {self.ic_kind!r}")
        if self.bc not in ("periodic", "free-flow"):
            raise ConfigError(f"unknown bc {self.bc!r}")
        if self.order not in (1, 2):
            raise ConfigError(f"order must be 1 or 2, got {self.order}")
        if self.beta_choice not in (1, 2):
            raise ConfigError(f"beta choice must be 1 or 2, got {self.beta_choice}")
        if self.t_end <= 0.0:
            raise ConfigError("t_end must be positive")
        if not self.is_plasma():
            if self.solver == "JY" and self.equation != "landau":
                raise ConfigError("solver JY applies to the landau equation only")
            if self.solver == "FJ" and self.equation == "landau":
                raise ConfigError("solver FJ does not apply to the landau equation")
            if self.equation == "landau" and self.solver in ("MM", "JY", "DS", "EULER"):
                pass
            if self.dim != 2 and self.equation in ("boltzmann", "landau"):
                raise ConfigError("collisional equations require dim = 2")
        if self.eps_profile not in ("constant", "test1b-tanh"):
            raise ConfigError(f"unknown eps profile {self.eps_profile!r}")
        if self.field_solver not in ("ampere", "poisson"):
            raise ConfigError(f"unknown field solver {self.field_solver!r}")
        return self


def _preset(name, **kw) -> Scenario:
    sc = Scenario(name=name, **kw)
    return sc.validate()


def build_presets() -> dict:
    """Built-in scenarios mirroring the published test cases."""
    presets = {
        # smooth periodic Boltzmann test, double-peak start
        "test1a": _preset(
            "test1a", equation="boltzmann", solver="MM", nx=100,
            x_a=0.0, x_b=1.0, bc="periodic", lv=8.4, nv=32,
            eps=1.0, t_end=0.2, snapshots=(0.2,),
            ic_kind="trig-moments", ic_shape="double-peak",
            rho_base=2.0, rho_amp=1.0, rho_wave=2.0, rho_div=3.0,
            T_base=3.0, T_amp=1.0, T_wave=2.0, T_div=4.0,
            u0x=0.2, u0y=0.0,
        ),
        # mixed-regime variant with a space-dependent Knudsen number
        "test1b": _preset(
            "test1b", equation="boltzmann", solver="MM", nx=100,
            x_a=0.0, x_b=1.0, bc="periodic", lv=6.0, nv=32,
            eps=1.0, eps_profile="test1b-tanh", t_end=0.2, snapshots=(0.2,),
            ic_kind="trig-moments", ic_shape="double-peak",
            rho_base=2.0, rho_amp=1.0, rho_wave=2.0, rho_div=3.0,
            T_base=3.0, T_amp=1.0, T_wave=2.0, T_div=4.0,
            u0x=0.2, u0y=0.0,
        ),
        # Sod shock tube for the Boltzmann equation
        "test1c": _preset(
            "test1c", equation="boltzmann", solver="MM", nx=100,
            x_a=0.0, x_b=1.0, bc="free-flow", lv=8.4, nv=32,
            eps=1e-4, t_end=0.2, snapshots=(0.2,),
            ic_kind="sod", ic_shape="maxwellian",
            sod_rho_l=1.0, sod_T_l=1.0, sod_rho_r=0.125, sod_T_r=0.25,
            sod_split=0.5,
        ),
        # smooth periodic Landau test
        "test2a": _preset(
            "test2a", equation="landau", solver="MM", nx=100,
            x_a=-1.0, x_b=1.0, bc="periodic", lv=6.0, nv=32,
            eps=1.0, t_end=0.25, snapshots=(0.25,),
            ic_kind="trig-moments", ic_shape="double-peak",
            rho_base=2.0, rho_amp=1.0, rho_wave=1.0, rho_div=3.0,
            T_base=3.0, T_amp=1.0, T_wave=1.0, T_div=4.0,
            u0x=0.2, u0y=0.0,
        ),
        # Sod shock tube for the Landau equation
        "test2b": _preset(
            "test2b", equation="landau", solver="MM", nx=100,
            x_a=-0.5, x_b=0.5, bc="free-flow", lv=6.0, nv=32,
            eps=1e-3, t_end=0.2, snapshots=(0.2,),
            ic_kind="sod", ic_shape="maxwellian",
            sod_rho_l=1.0, sod_T_l=1.0, sod_rho_r=0.125, sod_T_r=0.25,
            sod_split=0.0,
        ),
        # collisionless Vlasov-Ampere benchmark
        "test3": _preset(
            "test3", equation="vlasov-ampere", solver="MM", nx=200,
            x_a=0.0, x_b=np.pi, bc="periodic", lv=2.0 * np.pi, nv=64, dim=1,
            eps=1.0, t_end=0.5, snapshots=(0.5,),
            ic_kind="plasma-cos", plasma_amp=1.0, plasma_wave=2.0,
            background=1.0,
        ),
        # collisional variant embedded in two velocity dimensions
        "test3vab": _preset(
            "test3vab", equation="vab", solver="MM", nx=100,
            x_a=0.0, x_b=np.pi, bc="periodic", lv=2.0 * np.pi, nv=64, dim=2,
            eps=0.05, t_end=0.1, snapshots=(0.1,),
            ic_kind="plasma-cos", plasma_amp=1.0, plasma_wave=2.0,
            background=1.0,
        ),
    }
    return presets


PRESETS = build_presets()

_FIELD_TYPES = {f.name: f.type for f in dataclass_fields(Scenario)}


def parse_config(text: str) -> Scenario:
    """Parse flat key = value text with [section] headers into a Scenario.

    Sections are organizational only; keys map directly onto Scenario fields.
    A config may start from a preset with ``preset = NAME``.  Unknown keys
    raise ConfigError with the line number.
    """
    values = {}
    base = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        val = val.strip()
        if key == "preset":
            if val not in PRESETS:
                raise ConfigError(f"line {lineno}: unknown preset {val!r}")
            base = val
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = (lineno, val)

    sc = PRESETS[base] if base else Scenario()
    sc = Scenario(**{f.name: getattr(sc, f.name) for f in dataclass_fields(Scenario)})
    for key, (lineno, val) in values.items():
        current = getattr(sc, key)
        try:
            if isinstance(current, bool):
                parsed = val.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                parsed = int(val)
            elif isinstance(current, float):
                parsed = float(val)
            elif isinstance(current, tuple):
                parsed = tuple(float(x) for x in val.split(",") if x.strip())
            else:
                parsed = val
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
        setattr(sc, key, parsed)
    return sc.validate()


def load_scenario(source: str) -> Scenario:
    """Resolve a preset name or read and parse a config file.

    Presets are returned as fresh copies so callers may tweak them freely.
    """
    if source in PRESETS:
        from dataclasses import replace

        return replace(PRESETS[source])
    if os.path.exists(source):
        with open(source, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    raise ConfigError(f"{source!r} is neither a preset nor a config file")


def scenario_to_text(sc: Scenario) -> str:
    out = ["[scenario]"]
    for f in dataclass_fields(Scenario):
        v = getattr(sc, f.name)
        if isinstance(v, tuple):
            v = ",".join(f"{x:.17g}" for x in v)
        elif isinstance(v, float):
            v = f"{v:.17g}"
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------------
# initial conditions

def _trig_profiles(sc: Scenario, x):
    rho = (sc.rho_base + sc.rho_amp * np.sin(sc.rho_wave * np.pi * x)) / sc.rho_div
    T = (sc.T_base + sc.T_amp * np.cos(sc.T_wave * np.pi * x)) / sc.T_div
    return rho, T


def make_f0(sc: Scenario):
    """Pointwise initial distribution f0(x, vgrid) for kinetic scenarios."""
    if sc.ic_kind == "trig-moments":
        def f0(x, grid):
            rho, T = _trig_profiles(sc, x)
            u = np.array([sc.u0x, sc.u0y][: grid.dim])
            if sc.ic_shape == "double-peak":
                sl = (None,) * 0
                d2p = (grid.vx - u[0]) ** 2
                d2m = (grid.vx + u[0]) ** 2
                if grid.dim == 2:
                    d2p = d2p + (grid.vy - u[1]) ** 2
                    d2m = d2m + (grid.vy + u[1]) ** 2
                norm = rho / (2.0 * (2.0 * np.pi * T) ** (grid.dim / 2.0))
                return norm * (np.exp(-d2p / (2 * T)) + np.exp(-d2m / (2 * T)))
            return maxwellian(rho, u, T, grid)
        return f0
    if sc.ic_kind == "sod":
        def f0(x, grid):
            left = x <= sc.sod_split
            rho = sc.sod_rho_l if left else sc.sod_rho_r
            T = sc.sod_T_l if left else sc.sod_T_r
            u = np.zeros(grid.dim)
            return maxwellian(rho, u, T, grid)
        return f0
    raise ConfigError(f"no kinetic initial condition for kind {sc.ic_kind!r}")


def make_plasma_f0(sc: Scenario, sgrid: SpatialGrid, vgrid: VelocityGrid):
    dens = 1.0 + sc.plasma_amp * np.cos(sc.plasma_wave * sgrid.centers)
    if vgrid.dim == 1:
        gauss = np.exp(-vgrid.nodes**2 / 2.0) / np.sqrt(2.0 * np.pi)
        return dens[:, None] * gauss[None, :]
    gauss = np.exp(-vgrid.speed2 / 2.0) / (2.0 * np.pi)
    return dens[:, None, None] * gauss[None, :, :]


def eps_function(sc: Scenario):
    if sc.eps_profile == "constant":
        return lambda x: sc.eps
    if sc.eps_profile == "test1b-tanh":
        def eps(x):
            if x <= 0.65:
                return 1e-2 + 0.5 * (np.tanh(25.0 - 20.0 * x) + np.tanh(-5.0 + 20.0 * x))
            return 1e-2
        return eps
    raise ConfigError(f"unknown eps profile {sc.eps_profile!r}")


def make_kernel(sc: Scenario, vgrid: VelocityGrid):
    if sc.equation in ("boltzmann", "vlasov-ampere", "vab"):
        return BoltzmannSpectral(vgrid, b_const=sc.b_const, n_theta=sc.n_theta)
    if sc.equation == "landau":
        return LandauSpectral(vgrid, gamma=sc.gamma)
    if sc.equation == "bgk":
        return BGKOperator(vgrid, tau=sc.tau)
    raise ConfigError(f"no kernel for equation {sc.equation!r}")


# ----------------------------------------------------------------------
# run loop

@dataclass
class RunResult:
    scenario: Scenario
    out_dir: str | None
    diag: dict
    profiles: dict
    final: object = None


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_csv(path, header, columns):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    rows = len(columns[0])
    for i in range(rows):
        buf.write(",".join(_fmt(c[i]) for c in columns) + "\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def _profile_fields(U, dim):
    rho, u, T = primitives(U, dim)
    u1 = u[:, 0]
    u2 = u[:, 1] if dim == 2 else np.zeros_like(u1)
    return rho, u1, u2, T


def _snapshot_steps(sc: Scenario, dt: float, n_steps: int):
    times = sc.snapshots if sc.snapshots else (sc.t_end,)
    out = {}
    for t in times:
        k = int(round(t / dt))
        if k <= n_steps and abs(k * dt - t) <= 0.5 * dt:
            out[k] = t
    return out


def _check_ic_tails(sc: Scenario, sgrid, vgrid):
    if sc.ic_kind == "plasma-cos":
        return
    probe = np.linspace(sc.x_a, sc.x_b, 7)
    worst = 0.0
    for x in probe:
        if sc.ic_kind == "sod":
            left = x <= sc.sod_split
            rho = sc.sod_rho_l if left else sc.sod_rho_r
            T = sc.sod_T_l if left else sc.sod_T_r
            u = np.zeros(vgrid.dim)
        else:
            rho, T = _trig_profiles(sc, x)
            u = np.array([sc.u0x, sc.u0y][: vgrid.dim])
        tail = float(gaussian_tail_mass(rho, np.abs(u), T, vgrid) / rho)
        worst = max(worst, tail)
    if worst > TAIL_WARN:
        warnings.warn(
            f"initial Maxwellian tail mass {worst:.2e} outside the velocity box",
            RuntimeWarning, stacklevel=2,
        )


def run(sc: Scenario, out_dir: str | None = None) -> RunResult:
    """Execute a scenario, returning diagnostics and snapshots.

    When ``out_dir`` is given, profile snapshots, the diagnostics series, and
    the resolved-config echo are written there; partial outputs are flushed
    if a step fails.
    """
    sc.validate()
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "run.meta"), "w", encoding="utf-8") as fh:
            fh.write(scenario_to_text(sc))
    if sc.is_plasma():
        return _run_plasma(sc, out_dir)
    return _run_kinetic(sc, out_dir)


def _diag_writer(out_dir, plasma):
    header = ["t", "mass_me", "mom1_me", "energy_me",
              "mass_mf", "mom1_mf", "energy_mf"]
    if plasma:
        header += ["etotal_me_amp", "etotal_mf_amp", "etotal_mf_poiss"]
    rows = {h: [] for h in header}
    return header, rows


def _flush_outputs(out_dir, header, rows, profiles, plasma):
    if not out_dir:
        return
    _write_csv(
        os.path.join(out_dir, "diagnostics.csv"), header,
        [np.asarray(rows[h]) for h in header],
    )
    pheader = ["x", "rho", "u1", "u2", "T"] + (["E_field"] if plasma else [])
    for t, data in profiles.items():
        _write_csv(
            os.path.join(out_dir, f"profiles_{t:g}.csv"), pheader,
            [data[h] for h in pheader],
        )


def _run_kinetic(sc: Scenario, out_dir) -> RunResult:
    vgrid = VelocityGrid(sc.lv, sc.nv, sc.dim)
    sgrid = SpatialGrid(sc.nx, sc.x_a, sc.x_b, sc.bc)
    _check_ic_tails(sc, sgrid, vgrid)
    kernel = make_kernel(sc, vgrid)
    epsf = KnudsenField.from_function(eps_function(sc), sgrid)
    f0 = make_f0(sc)
    dt = sc.resolved_dt()
    n_steps = int(round(sc.t_end / dt))
    snap_at = _snapshot_steps(sc, dt, n_steps)
    dx = sgrid.dx

    penalty = PenaltyParams(choice=sc.beta_choice, beta0=sc.beta0)
    setup = MicroMacroSetup(
        sgrid, vgrid, kernel, equation=sc.equation, penalty=penalty,
        order_micro=sc.order, order_macro=sc.order, cg_tol=sc.cg_tol,
    )

    header, rows = _diag_writer(out_dir, plasma=False)
    profiles = {}

    solver = sc.solver
    if solver == "MM":
        state = initial_state(f0, sgrid, vgrid, epsf)
    elif solver == "EULER":
        U = np.stack([moments(f0(x, vgrid), vgrid) for x in sgrid.centers])
        state = U
    else:
        fgrid = np.stack([f0(x, vgrid) for x in sgrid.centers])
        state = KineticState(fgrid, 0.0, epsf)
        U_me = moments(fgrid, vgrid)

    def mm_diag(st):
        tot_me = st.U.sum(axis=0) * dx
        U_ext, _ = apply_bc(st.U, st.g, sc.bc)
        ctx = interface_context(U_ext, vgrid, dx)
        f_int = ctx.M_half + st.eps.interfaces[:, None, None] * st.g
        tot_mf = moments(f_int[:-1], vgrid).sum(axis=0) * dx
        return tot_me, tot_mf

    def record(t, tot_me, tot_mf):
        rows["t"].append(t)
        rows["mass_me"].append(tot_me[0])
        rows["mom1_me"].append(tot_me[1])
        rows["energy_me"].append(tot_me[-1])
        rows["mass_mf"].append(tot_mf[0])
        rows["mom1_mf"].append(tot_mf[1])
        rows["energy_mf"].append(tot_mf[-1])

    def snapshot(t, U):
        rho, u1, u2, T = _profile_fields(U, vgrid.dim)
        profiles[t] = {"x": sgrid.centers.copy(), "rho": rho, "u1": u1,
                       "u2": u2, "T": T}

    try:
        # time zero diagnostics
        if solver == "MM":
            record(0.0, *mm_diag(state))
        elif solver == "EULER":
            tot = state.sum(axis=0) * dx
            record(0.0, tot, tot)
        else:
            tot_mf = moments(state.f, vgrid).sum(axis=0) * dx
            record(0.0, U_me.sum(axis=0) * dx, tot_mf)
        for k in range(1, n_steps + 1):
            if solver == "MM":
                state = mm_step(state, setup, dt)
                if k % sc.diag_every == 0 or k == n_steps:
                    record(state.t, *mm_diag(state))
                U_now = state.U
            elif solver == "EULER":
                state = euler_step(state, vgrid, sgrid, dt, order=sc.order)
                tot = state.sum(axis=0) * dx
                record(k * dt, tot, tot)
                U_now = state
            else:
                f_prev = state.f
                if solver == "DS":
                    state = rk4_step(state, kernel, vgrid, sgrid, dt, sc.order)
                elif solver == "FJ":
                    state = penalized_bgk_step(
                        state, kernel, vgrid, sgrid, dt, sc.order, sc.beta_choice
                    )
                elif solver == "JY":
                    state = penalized_fp_step(
                        state, kernel, vgrid, sgrid, dt, sc.order, sc.beta0,
                        cg_tol=sc.cg_tol,
                    )
                U_me = companion_moment_step(U_me, f_prev, vgrid, sgrid, dt)
                if k % sc.diag_every == 0 or k == n_steps:
                    tot_mf = moments(state.f, vgrid).sum(axis=0) * dx
                    record(state.t, U_me.sum(axis=0) * dx, tot_mf)
                U_now = moments(state.f, vgrid)
            if k in snap_at:
                snapshot(snap_at[k], U_now)
    finally:
        _flush_outputs(out_dir, header, rows, profiles, plasma=False)
    return RunResult(sc, out_dir, rows, profiles, state)


def _run_plasma(sc: Scenario, out_dir) -> RunResult:
    vgrid = VelocityGrid(sc.lv, sc.nv, sc.dim)
    sgrid = SpatialGrid(sc.nx, sc.x_a, sc.x_b, sc.bc)
    dt = sc.resolved_dt()
    n_steps = int(round(sc.t_end / dt))
    snap_at = _snapshot_steps(sc, dt, n_steps)
    dx = sgrid.dx
    c_bg = np.full(sc.nx, sc.background)
    f0 = make_plasma_f0(sc, sgrid, vgrid)
    state = initial_plasma_state(f0, c_bg, vgrid, sgrid)
    kernel = make_kernel(sc, vgrid) if sc.equation == "vab" else None

    header, rows = _diag_writer(out_dir, plasma=True)
    profiles = {}

    def record(st: PlasmaState):
        mom_f = moments(st.f, vgrid)
        tot_me = st.mom.sum(axis=0) * dx
        tot_mf = mom_f.sum(axis=0) * dx
        # the diagnostic field solve projects out the (truncation-level)
        # mean-charge mismatch of the kinetic density
        _, E_poiss = solve_poisson(mom_f[:, 0], c_bg, sgrid, project_mean=True)
        values = {
            "t": st.t,
            "mass_me": tot_me[0],
            "mom1_me": tot_me[1],
            "energy_me": tot_me[-1],
            "mass_mf": tot_mf[0],
            "mom1_mf": tot_mf[1],
            "energy_mf": tot_mf[-1],
            "etotal_me_amp": total_energy(st.mom[:, -1], st.E, sgrid),
            "etotal_mf_amp": total_energy(mom_f[:, -1], st.E, sgrid),
            "etotal_mf_poiss": total_energy(mom_f[:, -1], E_poiss, sgrid),
        }
        for key, val in values.items():
            rows[key].append(val)

    def snapshot(t, st: PlasmaState):
        U = moments(st.f, vgrid)
        rho, u1, u2, T = _profile_fields(U, vgrid.dim)
        profiles[t] = {"x": sgrid.centers.copy(), "rho": rho, "u1": u1,
                       "u2": u2, "T": T, "E_field": st.E.copy()}

    try:
        record(state)
        for k in range(1, n_steps + 1):
            if sc.equation == "vab":
                state = vab_step(state, sc.eps, kernel, vgrid, sgrid, dt, sc.order)
            else:
                state = va_step(
                    state, vgrid, sgrid, dt, sc.order,
                    field_solver=sc.field_solver, c_background=c_bg,
                )
            if k % sc.diag_every == 0 or k == n_steps:
                record(state)
            if k in snap_at:
                snapshot(snap_at[k], state)
    finally:
        _flush_outputs(out_dir, header, rows, profiles, plasma=True)
    return RunResult(sc, out_dir, rows, profiles, state)


# ----------------------------------------------------------------------
# comparison

def _read_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {h: data[:, i] for i, h in enumerate(header)}


def compare(dir_a: str, dir_b: str) -> dict:
    """Field-by-field norms of the differences between two run directories.

    Both runs must share grids and snapshot times.  Returns a mapping
    snapshot -> field -> {l1, l2, sup} of relative differences.
    """
    snaps_a = sorted(
        f for f in os.listdir(dir_a) if f.startswith("profiles_")
    )
    snaps_b = sorted(
        f for f in os.listdir(dir_b) if f.startswith("profiles_")
    )
    if snaps_a != snaps_b or not snaps_a:
        raise ConfigError(
            f"snapshot sets differ or are empty: {snaps_a} vs {snaps_b}"
        )
    report = {}
    for name in snaps_a:
        a = _read_csv(os.path.join(dir_a, name))
        b = _read_csv(os.path.join(dir_b, name))
        if set(a) != set(b) or len(a["x"]) != len(b["x"]):
            raise ConfigError(f"{name}: mismatched columns or grid size")
        if not np.allclose(a["x"], b["x"], rtol=0, atol=1e-12):
            raise ConfigError(f"{name}: mismatched grids")
        entry = {}
        for col in a:
            if col == "x":
                continue
            da = a[col] - b[col]
            ref = a[col]
            scale1 = max(np.sum(np.abs(ref)), 1e-300)
            scale2 = max(np.sqrt(np.sum(ref**2)), 1e-300)
            scales = max(np.max(np.abs(ref)), 1e-300)
            entry[col] = {
                "l1": float(np.sum(np.abs(da)) / scale1),
                "l2": float(np.sqrt(np.sum(da**2)) / scale2),
                "sup": float(np.max(np.abs(da)) / scales),
            }
        report[name[len("profiles_"):-len(".csv")]] = entry
    return report


def format_report(report: dict) -> str:
    lines = []
    for snap in sorted(report):
        lines.append(f"snapshot t={snap}")
        for fieldname, norms in report[snap].items():
            lines.append(
                f"  {fieldname:8s} l1={norms['l1']:.4e} "
                f"l2={norms['l2']:.4e} sup={norms['sup']:.4e}"
            )
    return "\n".join(lines)


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
