//! Method-of-lines integration of the De Donder–Weyl equations in 1+1
//! dimensions (and `n = 1` mechanics), plus a leapfrog Euler–Lagrange oracle.
//!
//! Unknowns are `φ^i` and `π^0_i` on a periodic grid. `π^1_i` is recovered at
//! every stage from the constraint `∂𝓗/∂p^1_i = D_x φ^i` with centered
//! differences, and
//!
//! ```text
//! ∂_t φ^i   = ∂𝓗/∂p^0_i
//! ∂_t π^0_i = −∂𝓗/∂q^i − D_x π^1_i
//! ```
//!
//! is advanced with classical RK4.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::dedonder_weyl::SolutionPatch;
use crate::error::{Error, Result};
use crate::theory::{DwHamiltonian, ScalarTheory, Signature};

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_TOL: f64 = 1e-12;

/// Periodic space-time grid. `nx = 1` selects mechanics mode.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub dx: f64,
    pub dt: f64,
    pub t_final: f64,
    /// `dt ≤ cfl · dx` is enforced when set.
    pub cfl: Option<f64>,
    /// Record every k-th step.
    pub sample_every: usize,
    /// Any `|value|` above this counts as divergence.
    pub blowup_limit: f64,
}

impl GridSpec {
    pub fn new(nx: usize, dx: f64, dt: f64, t_final: f64) -> Self {
        Self {
            nx,
            dx,
            dt,
            t_final,
            cfl: Some(1.0),
            sample_every: 1,
            blowup_limit: 1e12,
        }
    }

    /// `nx` nodes on a periodic interval of the given length, `dt = ratio · dx`.
    pub fn periodic(nx: usize, length: f64, ratio: f64, t_final: f64) -> Self {
        let dx = length / nx as f64;
        Self::new(nx, dx, ratio * dx, t_final)
    }

    pub fn mechanics(dt: f64, t_final: f64) -> Self {
        Self {
            cfl: None,
            ..Self::new(1, 1.0, dt, t_final)
        }
    }

    pub fn with_cfl(mut self, cfl: Option<f64>) -> Self {
        self.cfl = cfl;
        self
    }

    pub fn with_sample_every(mut self, k: usize) -> Self {
        self.sample_every = k;
        self
    }

    pub fn is_mechanics(&self) -> bool {
        self.nx == 1
    }

    pub fn length(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }

    /// Wavenumber of the `mode`-th periodic Fourier mode.
    pub fn wavenumber(&self, mode: i32) -> f64 {
        2.0 * std::f64::consts::PI * mode as f64 / self.length()
    }

    /// Quadrature weight of one node.
    pub fn cell(&self) -> f64 {
        if self.is_mechanics() {
            1.0
        } else {
            self.dx
        }
    }

    /// Check the grid against a theory with `n` base dimensions.
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGrid(msg));
        match n {
            1 if self.nx != 1 => return bad(format!("mechanics (n = 1) needs nx = 1, got {}", self.nx)),
            2 if self.nx < 8 => return bad(format!("nx must be at least 8, got {}", self.nx)),
            1 | 2 => {}
            _ => return bad(format!("only n = 1 and n = 2 are supported, got n = {n}")),
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return bad(format!("dx must be positive, got {}", self.dx));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad(format!("final time must be non-negative, got {}", self.t_final));
        }
        if self.sample_every == 0 {
            return bad("sample_every must be at least 1".into());
        }
        if !(self.blowup_limit > 0.0) {
            return bad("blow-up limit must be positive".into());
        }
        if let (Some(cfl), false) = (self.cfl, self.is_mechanics()) {
            if !(cfl > 0.0 && cfl <= 1.0) {
                return bad(format!("cfl must lie in (0, 1], got {cfl}"));
            }
            if self.dt > cfl * self.dx * (1.0 + 1e-12) {
                return bad(format!("dt = {} violates dt <= {cfl} * dx = {}", self.dt, cfl * self.dx));
            }
        }
        Ok(())
    }

    /// Number of steps to reach `t_final` and the uniform step that lands on it
    /// exactly (never larger than `dt`).
    pub fn schedule(&self) -> (usize, f64) {
        if self.t_final == 0.0 {
            return (0, self.dt);
        }
        let steps = (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize;
        (steps, self.t_final / steps as f64)
    }
}

/// Grid unknowns at one time. Entries are node-major: `phi[j * N + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub phi: Vec<f64>,
    pub pi0: Vec<f64>,
}

impl FieldState {
    pub fn zeros(grid: &GridSpec, fields: usize) -> Self {
        Self {
            t: 0.0,
            phi: vec![0.0; grid.nx * fields],
            pi0: vec![0.0; grid.nx * fields],
        }
    }

    /// Sample initial data `x ↦ (φ, π^0)` for a single field.
    pub fn from_fn<F: Fn(f64) -> (f64, f64)>(grid: &GridSpec, t: f64, f: F) -> Self {
        let (phi, pi0) = (0..grid.nx).map(|j| f(grid.node(j))).unzip();
        Self { t, phi, pi0 }
    }

    pub fn is_finite(&self) -> bool {
        self.phi.iter().chain(&self.pi0).all(|v| v.is_finite())
    }

    fn check(&self, grid: &GridSpec, fields: usize) -> Result<()> {
        let len = grid.nx * fields;
        if self.phi.len() != len || self.pi0.len() != len {
            return Err(Error::Shape(format!(
                "state has {}/{} entries, grid needs {len}",
                self.phi.len(),
                self.pi0.len()
            )));
        }
        if !self.is_finite() {
            return Err(Error::Divergence { t: self.t });
        }
        Ok(())
    }
}

/// `φ = A cos(kx − ωt)`, `ω² = k² + m²`, for the `(+,−)` free scalar.
pub fn plane_wave(grid: &GridSpec, amplitude: f64, k: f64, mass: f64, t: f64) -> FieldState {
    let w = (k * k + mass * mass).sqrt();
    FieldState::from_fn(grid, t, |x| {
        let phase = k * x - w * t;
        (amplitude * phase.cos(), amplitude * w * phase.sin())
    })
}

/// `φ = A cos(kx) cos(ωt)`, `ω² = k² + m²`.
pub fn standing_wave(grid: &GridSpec, amplitude: f64, k: f64, mass: f64, t: f64) -> FieldState {
    let w = (k * k + mass * mass).sqrt();
    FieldState::from_fn(grid, t, |x| {
        (
            amplitude * (k * x).cos() * (w * t).cos(),
            -amplitude * w * (k * x).cos() * (w * t).sin(),
        )
    })
}

fn centered(f: &[f64], j: usize, i: usize, nx: usize, nf: usize, dx: f64) -> f64 {
    let up = (j + 1) % nx;
    let down = (j + nx - 1) % nx;
    (f[up * nf + i] - f[down * nf + i]) / (2.0 * dx)
}

fn base_point(grid: &GridSpec, t: f64, j: usize) -> Vec<f64> {
    if grid.is_mechanics() {
        vec![t]
    } else {
        vec![t, grid.node(j)]
    }
}

fn check_chart<H: DwHamiltonian + ?Sized>(ham: &H, grid: &GridSpec) -> Result<usize> {
    grid.validate(ham.chart().n())?;
    Ok(ham.chart().fields())
}

/// Solve `∂𝓗/∂p^1 = D_x φ` for `π^1` at every node. Empty in mechanics mode.
pub fn reconstruct_pi1<H: DwHamiltonian + ?Sized>(
    ham: &H,
    grid: &GridSpec,
    t: f64,
    phi: &[f64],
    pi0: &[f64],
) -> Result<Vec<f64>> {
    let nf = ham.chart().fields();
    if grid.is_mechanics() {
        return Ok(Vec::new());
    }
    let nx = grid.nx;
    let mut pi1 = vec![0.0; nx * nf];
    for j in 0..nx {
        let x = base_point(grid, t, j);
        let q = &phi[j * nf..(j + 1) * nf];
        let target: Vec<f64> = (0..nf).map(|i| centered(phi, j, i, nx, nf, grid.dx)).collect();
        let mut pmom = vec![0.0; 2 * nf];
        pmom[..nf].copy_from_slice(&pi0[j * nf..(j + 1) * nf]);
        let solved = solve_constraint(ham, &x, q, &mut pmom, &target)?;
        pi1[j * nf..(j + 1) * nf].copy_from_slice(solved);
    }
    Ok(pi1)
}

fn solve_constraint<'a, H: DwHamiltonian + ?Sized>(
    ham: &H,
    x: &[f64],
    q: &[f64],
    pmom: &'a mut [f64],
    target: &[f64],
) -> Result<&'a [f64]> {
    let nf = q.len();
    let scale = 1.0 + target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let residual = |pmom: &[f64]| -> Result<Vec<f64>> {
        let g = ham.grad_pmom(x, q, pmom)?;
        Ok((0..nf).map(|i| g[nf + i] - target[i]).collect())
    };
    let mut r = residual(pmom)?;
    let mut norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..NEWTON_MAX_ITER {
        if norm <= NEWTON_TOL * scale {
            return Ok(&pmom[nf..]);
        }
        let mut jac = DMatrix::zeros(nf, nf);
        for k in 0..nf {
            let h = 1e-6 * pmom[nf + k].abs().max(1.0);
            let saved = pmom[nf + k];
            pmom[nf + k] = saved + h;
            let up = ham.grad_pmom(x, q, pmom)?;
            pmom[nf + k] = saved - h;
            let down = ham.grad_pmom(x, q, pmom)?;
            pmom[nf + k] = saved;
            for i in 0..nf {
                jac[(i, k)] = (up[nf + i] - down[nf + i]) / (2.0 * h);
            }
        }
        let delta = jac
            .lu()
            .solve(&DVector::from_column_slice(&r))
            .ok_or(Error::Singular { iterations: 0, residual: norm })?;
        for k in 0..nf {
            pmom[nf + k] -= delta[k];
        }
        r = residual(pmom)?;
        norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    if norm <= NEWTON_TOL * scale {
        Ok(&pmom[nf..])
    } else {
        Err(Error::Singular {
            iterations: NEWTON_MAX_ITER,
            residual: norm,
        })
    }
}

fn rhs<H: DwHamiltonian + ?Sized>(
    ham: &H,
    grid: &GridSpec,
    t: f64,
    phi: &[f64],
    pi0: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nf = ham.chart().fields();
    let nx = grid.nx;
    let pi1 = reconstruct_pi1(ham, grid, t, phi, pi0)?;
    let mut dphi = vec![0.0; nx * nf];
    let mut dpi0 = vec![0.0; nx * nf];
    for j in 0..nx {
        let x = base_point(grid, t, j);
        let q = &phi[j * nf..(j + 1) * nf];
        let mut pmom = pi0[j * nf..(j + 1) * nf].to_vec();
        if !grid.is_mechanics() {
            pmom.extend_from_slice(&pi1[j * nf..(j + 1) * nf]);
        }
        let hp = ham.grad_pmom(&x, q, &pmom)?;
        let hq = ham.grad_q(&x, q, &pmom)?;
        for i in 0..nf {
            dphi[j * nf + i] = hp[i];
            dpi0[j * nf + i] = -hq[i];
            if !grid.is_mechanics() {
                dpi0[j * nf + i] -= centered(&pi1, j, i, nx, nf, grid.dx);
            }
        }
    }
    Ok((dphi, dpi0))
}

fn rk4<H: DwHamiltonian + ?Sized>(ham: &H, s: &FieldState, grid: &GridSpec, dt: f64) -> Result<FieldState> {
    let shifted = |base: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(a, b)| a + c * b).collect()
    };
    let (k1p, k1m) = rhs(ham, grid, s.t, &s.phi, &s.pi0)?;
    let (k2p, k2m) = rhs(
        ham,
        grid,
        s.t + 0.5 * dt,
        &shifted(&s.phi, &k1p, 0.5 * dt),
        &shifted(&s.pi0, &k1m, 0.5 * dt),
    )?;
    let (k3p, k3m) = rhs(
        ham,
        grid,
        s.t + 0.5 * dt,
        &shifted(&s.phi, &k2p, 0.5 * dt),
        &shifted(&s.pi0, &k2m, 0.5 * dt),
    )?;
    let (k4p, k4m) = rhs(ham, grid, s.t + dt, &shifted(&s.phi, &k3p, dt), &shifted(&s.pi0, &k3m, dt))?;
    let combine = |y: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..y.len())
            .map(|k| y[k] + dt / 6.0 * (a[k] + 2.0 * b[k] + 2.0 * c[k] + d[k]))
            .collect()
    };
    let next = FieldState {
        t: s.t + dt,
        phi: combine(&s.phi, &k1p, &k2p, &k3p, &k4p),
        pi0: combine(&s.pi0, &k1m, &k2m, &k3m, &k4m),
    };
    if !next.is_finite() || next.phi.iter().chain(&next.pi0).any(|v| v.abs() > grid.blowup_limit) {
        return Err(Error::Divergence { t: next.t });
    }
    Ok(next)
}

/// One RK4 step of size `grid.dt`.
pub fn step<H: DwHamiltonian + ?Sized>(ham: &H, s: &FieldState, grid: &GridSpec) -> Result<FieldState> {
    let nf = check_chart(ham, grid)?;
    s.check(grid, nf)?;
    rk4(ham, s, grid, grid.dt)
}

/// A recorded solution on the grid.
#[derive(Debug, Clone)]
pub struct Sample {
    pub state: FieldState,
    /// Empty in mechanics mode.
    pub pi1: Vec<f64>,
    /// `𝓗 − π^1 ∂_xφ`, i.e. `½(π^0)² + ½(∂_xφ)² + V` for the scalar theories.
    pub energy_density: Vec<f64>,
    /// Sum of the energy density over the grid times `dx`.
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Grid with `dt` replaced by the step actually used.
    pub grid: GridSpec,
    pub fields: usize,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories hold the initial sample")
    }

    pub fn energies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.energy).collect()
    }

    /// `max_k |E_k − E_0| / |E_0|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.samples[0].energy;
        let worst = self.samples.iter().map(|s| (s.energy - e0).abs()).fold(0.0, f64::max);
        if e0 == 0.0 {
            worst
        } else {
            worst / e0.abs()
        }
    }

    /// `max |φ_a − φ_b|` over shared sample times.
    pub fn max_phi_difference(&self, other: &Trajectory) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .flat_map(|(a, b)| a.state.phi.iter().zip(&b.state.phi).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max)
    }

    /// 3×3 `(t, x)` neighbourhood of an interior sample and node, for
    /// [`crate::dedonder_weyl::lift_solution_tangent`]. Requires `n = 2`.
    pub fn patch(&self, sample: usize, node: usize) -> Result<SolutionPatch> {
        if self.grid.is_mechanics() {
            return Err(Error::Shape("mechanics trajectories have no spatial patch".into()));
        }
        if sample == 0 || sample + 1 >= self.samples.len() {
            return Err(Error::BoundaryNode(vec![sample, node]));
        }
        let (nx, nf) = (self.grid.nx, self.fields);
        let dt = self.samples[sample + 1].state.t - self.samples[sample].state.t;
        let mut phi = Vec::with_capacity(9 * nf);
        let mut pmom = Vec::with_capacity(18 * nf);
        for s in &self.samples[sample - 1..=sample + 1] {
            for dj in [nx - 1, 0, 1] {
                let j = (node + dj) % nx;
                phi.extend_from_slice(&s.state.phi[j * nf..(j + 1) * nf]);
                pmom.extend_from_slice(&s.state.pi0[j * nf..(j + 1) * nf]);
                pmom.extend_from_slice(&s.pi1[j * nf..(j + 1) * nf]);
            }
        }
        Ok(SolutionPatch {
            origin: vec![self.samples[sample - 1].state.t, self.grid.node(node) - self.grid.dx],
            spacing: vec![dt, self.grid.dx],
            shape: vec![3, 3],
            fields: nf,
            phi,
            pmom,
        })
    }

    /// CSV with columns `t,x,phi,pi0,pi1,energy_density` (plus `field` when
    /// `N > 1`), one row per sample and node, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let nf = self.fields;
        if nf == 1 {
            writeln!(out, "t,x,phi,pi0,pi1,energy_density")?;
        } else {
            writeln!(out, "t,x,field,phi,pi0,pi1,energy_density")?;
        }
        for s in &self.samples {
            for j in 0..self.grid.nx {
                let x = if self.grid.is_mechanics() { 0.0 } else { self.grid.node(j) };
                for i in 0..nf {
                    let k = j * nf + i;
                    let pi1 = s.pi1.get(k).copied().unwrap_or(0.0);
                    write!(out, "{:.16e},{:.16e},", s.state.t, x)?;
                    if nf > 1 {
                        write!(out, "{i},")?;
                    }
                    writeln!(
                        out,
                        "{:.16e},{:.16e},{:.16e},{:.16e}",
                        s.state.phi[k], s.state.pi0[k], pi1, s.energy_density[j]
                    )?;
                }
            }
        }
        Ok(())
    }
}

fn sample_of<H: DwHamiltonian + ?Sized>(ham: &H, grid: &GridSpec, state: FieldState) -> Result<Sample> {
    let nf = ham.chart().fields();
    let pi1 = reconstruct_pi1(ham, grid, state.t, &state.phi, &state.pi0)?;
    let mut density = Vec::with_capacity(grid.nx);
    for j in 0..grid.nx {
        let x = base_point(grid, state.t, j);
        let q = &state.phi[j * nf..(j + 1) * nf];
        let mut pmom = state.pi0[j * nf..(j + 1) * nf].to_vec();
        let mut e = 0.0;
        if !grid.is_mechanics() {
            pmom.extend_from_slice(&pi1[j * nf..(j + 1) * nf]);
            for i in 0..nf {
                e -= pi1[j * nf + i] * centered(&state.phi, j, i, grid.nx, nf, grid.dx);
            }
        }
        density.push(ham.value(&x, q, &pmom)? + e);
    }
    let energy = grid.cell() * density.iter().sum::<f64>();
    Ok(Sample {
        state,
        pi1,
        energy_density: density,
        energy,
    })
}

/// Integrate to `grid.t_final`, recording every `sample_every`-th step and the
/// final state. Step failures carry the time at which they occurred.
pub fn evolve<H: DwHamiltonian + ?Sized>(ham: &H, s0: &FieldState, grid: &GridSpec) -> Result<Trajectory> {
    let nf = check_chart(ham, grid)?;
    s0.check(grid, nf)?;
    let (steps, dt) = grid.schedule();
    let used = GridSpec { dt, ..grid.clone() };
    let mut samples = vec![sample_of(ham, &used, s0.clone())?];
    let mut state = s0.clone();
    for k in 1..=steps {
        let t = state.t;
        state = rk4(ham, &state, &used, dt).map_err(|e| match e {
            e @ Error::Divergence { .. } => e,
            e => Error::AtTime { t, source: Box::new(e) },
        })?;
        state.t = s0.t + k as f64 * dt;
        if k % grid.sample_every == 0 || k == steps {
            samples.push(sample_of(ham, &used, state.clone())?);
        }
    }
    Ok(Trajectory {
        grid: used,
        fields: nf,
        samples,
    })
}

/// Leapfrog for `φ_tt = φ_xx − V′(φ)` with the compact second difference.
/// Shares no code with [`evolve`]; `π^0` is recovered as the centered time
/// difference of `φ` and `π^1 = −D_xφ`.
pub fn euler_lagrange_oracle(theory: &ScalarTheory, s0: &FieldState, grid: &GridSpec) -> Result<Trajectory> {
    let spec = crate::theory::LagrangianDensity::chart(theory);
    let (n, nf, nx) = (spec.n(), spec.fields(), grid.nx);
    grid.validate(n)?;
    if theory.signature() != Signature::MostlyMinus {
        return Err(Error::Config("the Euler-Lagrange oracle needs signature \"+-\"".into()));
    }
    s0.check(grid, nf)?;
    let (steps, dt) = grid.schedule();
    let used = GridSpec { dt, ..grid.clone() };
    let dx = grid.dx;
    let spatial = !grid.is_mechanics();

    let accel = |t: f64, phi: &[f64]| -> Result<Vec<f64>> {
        let mut a = vec![0.0; nx * nf];
        for j in 0..nx {
            let x: Vec<f64> = if spatial { vec![t, j as f64 * dx] } else { vec![t] };
            let q = &phi[j * nf..(j + 1) * nf];
            let dv = theory.potential().grad_q(&x, q)?;
            for i in 0..nf {
                let lap = if spatial {
                    let (up, down) = ((j + 1) % nx, (j + nx - 1) % nx);
                    (phi[up * nf + i] - 2.0 * q[i] + phi[down * nf + i]) / (dx * dx)
                } else {
                    0.0
                };
                a[j * nf + i] = lap - dv[i];
            }
        }
        Ok(a)
    };
    let diverged = |v: &[f64]| v.iter().any(|x| !x.is_finite() || x.abs() > grid.blowup_limit);

    let record = |t: f64, phi: &[f64], pi0: Vec<f64>| -> Result<Sample> {
        let mut pi1 = Vec::new();
        let mut density = Vec::with_capacity(nx);
        for j in 0..nx {
            let x: Vec<f64> = if spatial { vec![t, j as f64 * dx] } else { vec![t] };
            let q = &phi[j * nf..(j + 1) * nf];
            let mut e = theory.potential().value(&x, q)?;
            for i in 0..nf {
                let k = j * nf + i;
                e += 0.5 * pi0[k] * pi0[k];
                if spatial {
                    let (up, down) = ((j + 1) % nx, (j + nx - 1) % nx);
                    let phi_x = (phi[up * nf + i] - phi[down * nf + i]) / (2.0 * dx);
                    pi1.push(-phi_x);
                    e += 0.5 * phi_x * phi_x;
                }
            }
            density.push(e);
        }
        Ok(Sample {
            energy: used.cell() * density.iter().sum::<f64>(),
            state: FieldState {
                t,
                phi: phi.to_vec(),
                pi0,
            },
            pi1,
            energy_density: density,
        })
    };

    let t0 = s0.t;
    let a0 = accel(t0, &s0.phi)?;
    let mut prev = s0.phi.clone();
    let mut cur: Vec<f64> = (0..nx * nf)
        .map(|k| s0.phi[k] + dt * s0.pi0[k] + 0.5 * dt * dt * a0[k])
        .collect();
    let mut samples = vec![record(t0, &s0.phi, s0.pi0.clone())?];
    for k in 1..=steps {
        let t = t0 + k as f64 * dt;
        if diverged(&cur) {
            return Err(Error::Divergence { t });
        }
        let a = accel(t, &cur)?;
        let next: Vec<f64> = (0..nx * nf)
            .map(|m| 2.0 * cur[m] - prev[m] + dt * dt * a[m])
            .collect();
        if k % grid.sample_every == 0 || k == steps {
            let pi0 = (0..nx * nf).map(|m| (next[m] - prev[m]) / (2.0 * dt)).collect();
            samples.push(record(t, &cur, pi0)?);
        }
        prev = cur;
        cur = next;
    }
    Ok(Trajectory {
        grid: used,
        fields: nf,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_validation() {
        assert!(GridSpec::periodic(64, 2.0 * PI, 0.5, 1.0).validate(2).is_ok());
        assert!(GridSpec::periodic(4, 2.0 * PI, 0.5, 1.0).validate(2).is_err());
        assert!(GridSpec::periodic(64, 2.0 * PI, 2.0, 1.0).validate(2).is_err());
        assert!(GridSpec::periodic(64, 2.0 * PI, 2.0, 1.0).with_cfl(None).validate(2).is_ok());
        assert!(GridSpec::periodic(64, 2.0 * PI, 0.5, 1.0).validate(1).is_err());
        assert!(GridSpec::mechanics(0.1, 1.0).validate(1).is_ok());
        assert!(GridSpec::new(16, 0.1, -0.01, 1.0).validate(2).is_err());
        assert!(GridSpec::periodic(64, 1.0, 0.5, 1.0).validate(3).is_err());
    }

    #[test]
    fn schedule_lands_on_final_time() {
        let g = GridSpec::new(16, 0.1, 0.03, 1.0);
        let (steps, dt) = g.schedule();
        assert_eq!(steps, 34);
        assert!(dt <= 0.03 && (steps as f64 * dt - 1.0).abs() < 1e-14);
        assert_eq!(GridSpec::new(16, 0.1, 0.25, 1.0).schedule(), (4, 0.25));
    }

    #[test]
    fn massive_vacuum_is_fixed() {
        let th = ScalarTheory::free_scalar(1.0);
        let g = GridSpec::periodic(32, 2.0 * PI, 0.5, 1.0);
        let s = FieldState::zeros(&g, 1);
        let next = step(&th, &s, &g).unwrap();
        assert_eq!(next.phi, s.phi);
        assert_eq!(next.pi0, s.pi0);
    }

    #[test]
    fn pi1_is_minus_gradient() {
        let th = ScalarTheory::free_scalar(1.0);
        let g = GridSpec::periodic(32, 2.0 * PI, 0.5, 1.0);
        let s = plane_wave(&g, 1.0, 1.0, 1.0, 0.3);
        let pi1 = reconstruct_pi1(&th, &g, 0.0, &s.phi, &s.pi0).unwrap();
        for j in 0..32 {
            let d = (s.phi[(j + 1) % 32] - s.phi[(j + 31) % 32]) / (2.0 * g.dx);
            assert!((pi1[j] + d).abs() < 1e-12);
        }
    }

    #[test]
    fn mechanics_rotation() {
        let osc = ScalarTheory::oscillator(1.0);
        let g = GridSpec::mechanics(0.1, 0.1);
        let s = FieldState {
            t: 0.0,
            phi: vec![1.0],
            pi0: vec![0.0],
        };
        let next = step(&osc, &s, &g).unwrap();
        // RK4 local error ~ dt⁵/120
        assert!((next.phi[0] - 0.1f64.cos()).abs() < 1e-7);
        assert!((next.pi0[0] + 0.1f64.sin()).abs() < 1e-7);
    }

    #[test]
    fn one_step_matches_plane_wave() {
        let th = ScalarTheory::free_scalar(1.0);
        let g = GridSpec::periodic(128, 2.0 * PI, 0.5, 1.0);
        let s = plane_wave(&g, 1.0, 1.0, 1.0, 0.0);
        let next = step(&th, &s, &g).unwrap();
        let exact = plane_wave(&g, 1.0, 1.0, 1.0, g.dt);
        let err = next.phi.iter().zip(&exact.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 4.0 * g.dt * g.dx * g.dx, "{err}");
    }

    #[test]
    fn zero_data_oracle() {
        let th = ScalarTheory::sine_gordon();
        let g = GridSpec::periodic(16, 2.0 * PI, 0.5, 1.0);
        let tr = euler_lagrange_oracle(&th, &FieldState::zeros(&g, 1), &g).unwrap();
        assert!(tr.samples.iter().all(|s| s.state.phi.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn oracle_rejects_mostly_plus() {
        use crate::theory::Potential;
        let th = ScalarTheory::new("x", 2, 1, Signature::MostlyPlus, Potential::Quadratic { mass: 1.0 }).unwrap();
        let g = GridSpec::periodic(16, 2.0 * PI, 0.5, 1.0);
        assert!(matches!(
            euler_lagrange_oracle(&th, &FieldState::zeros(&g, 1), &g),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let th = ScalarTheory::free_scalar(1.0);
        let g = GridSpec::periodic(8, 1.0, 0.5, 0.0625).with_sample_every(1);
        let tr = evolve(&th, &plane_wave(&g, 0.1, g.wavenumber(1), 1.0, 0.0), &g).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x,phi,pi0,pi1,energy_density");
        assert_eq!(lines.len(), 1 + 8 * tr.samples.len());
        let cols: Vec<f64> = lines[9].split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[0], tr.samples[1].state.t);
        assert_eq!(cols[2], tr.samples[1].state.phi[0]);
    }

    #[test]
    fn divergence_is_reported() {
        let th = ScalarTheory::free_scalar(1.0);
        let g = GridSpec::periodic(64, 2.0 * PI, 4.0, 10.0).with_cfl(None);
        let s = plane_wave(&g, 1.0, 1.0, 1.0, 0.0);
        // roundoff seeds the unstable high modes
        let mut noisy = s.clone();
        for (j, v) in noisy.phi.iter_mut().enumerate() {
            *v += 1e-10 * (j as f64 * 1.7).sin();
        }
        let err = evolve(&th, &noisy, &g).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }
}
