//! Split-operator solver for the one-body Pauli equation on a periodic
//! grid, used to check the closed-form spinors.
//!
//! ```text
//! i hbar dPsi/dt = -hbar^2/2m lap Psi + mu (B . sigma) Psi,   B = (B' x, 0, B0 - B' z)
//! ```
//!
//! The 1D mode keeps only z and drops `B_x`; the 2D mode keeps both. Each
//! step is kinetic half step (spectral), exact pointwise spin rotation,
//! kinetic half step, with consecutive half steps fused.
//!
//! For a potential linear in z the splitting error is a c-number, i.e. a
//! global phase shared by both components. [`ErrorReport`] therefore also
//! reports errors after removing the best global phase.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::analytic::{spinor_after_field_1d, spinor_in_field_1d};
use crate::config::{Apparatus, PhysicalConfig};
use crate::error::{Error, Result};
use crate::spinor::{SpinOrientation, Spinor};

/// Probability allowed within three cells of the boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-8;

/// One periodic axis of `n` cells starting at `min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Self {
        Self { min, max, n }
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / self.n as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    /// Angular wavenumber of FFT bin `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        let n = self.n as i64;
        let j = i as i64;
        let m = if j < n / 2 { j } else { j - n };
        2.0 * std::f64::consts::PI * m as f64 / (self.max - self.min)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.n < 64 || !self.n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "{name} axis needs a power of two >= 64 cells, got {}",
                self.n
            )));
        }
        if !(self.max > self.min && self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::InvalidGrid(format!("{name} axis range [{}, {}] is empty", self.min, self.max)));
        }
        Ok(())
    }
}

/// Grid and time stepping of an oracle run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub z: Axis,
    /// Present in 2D mode.
    pub x: Option<Axis>,
    pub dt: f64,
    pub n_steps: usize,
}

impl GridSpec {
    /// 1D grid over `+-15 sigma0` fine enough for the largest momentum `m u`
    /// reached after the magnet, with `n_steps` steps across the magnet.
    pub fn default_for(app: &Apparatus, n_steps: usize) -> Self {
        let s = app.config.sigma0;
        let half = 15.0 * s;
        let k_max = (app.config.mass * app.derived.u / app.config.hbar).abs();
        // Nyquist at least 1.2 k_max
        let needed = (1.2 * k_max * 2.0 * half / std::f64::consts::PI).ceil() as usize;
        let n = needed.next_power_of_two().max(64);
        Self {
            z: Axis::new(-half, half, n),
            x: None,
            dt: app.t_exit() / n_steps as f64,
            n_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.z.validate("z")?;
        if let Some(x) = &self.x {
            x.validate("x")?;
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.n_steps == 0 {
            return Err(Error::InvalidGrid(format!(
                "need dt > 0 and n_steps >= 1, got dt = {} and n_steps = {}",
                self.dt, self.n_steps
            )));
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        self.x.map_or(1, |a| a.n)
    }

    pub fn len(&self) -> usize {
        self.nx() * self.z.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell volume (length in 1D, area in 2D).
    pub fn cell(&self) -> f64 {
        self.z.spacing() * self.x.map_or(1.0, |a| a.spacing())
    }

    fn same_points(&self, other: &GridSpec) -> bool {
        self.z == other.z && self.x == other.x
    }
}

/// Spinor sampled on a grid; index `ix * n_z + iz`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpinor {
    pub spec: GridSpec,
    pub t: f64,
    pub plus: Vec<Complex64>,
    pub minus: Vec<Complex64>,
}

impl GridSpinor {
    /// Samples `f(x, z)`; `x` is 0 in 1D mode.
    pub fn from_fn(spec: GridSpec, t: f64, mut f: impl FnMut(f64, f64) -> Result<Spinor>) -> Result<Self> {
        spec.validate()?;
        let mut plus = Vec::with_capacity(spec.len());
        let mut minus = Vec::with_capacity(spec.len());
        for ix in 0..spec.nx() {
            let x = spec.x.map_or(0.0, |a| a.coord(ix));
            for iz in 0..spec.z.n {
                let s = f(x, spec.z.coord(iz))?;
                plus.push(s.plus);
                minus.push(s.minus);
            }
        }
        Ok(Self { spec, t, plus, minus })
    }

    pub fn value(&self, index: usize) -> Spinor {
        Spinor::new(self.plus[index], self.minus[index])
    }

    pub fn norm_sqr(&self) -> f64 {
        let s: f64 = self
            .plus
            .iter()
            .zip(&self.minus)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .sum();
        s * self.spec.cell()
    }

    /// Probability within `cells` cells of any boundary.
    pub fn boundary_mass(&self, cells: usize) -> f64 {
        let (nx, nz) = (self.spec.nx(), self.spec.z.n);
        let near = |i: usize, n: usize| i < cells || i + cells >= n;
        let mut s = 0.0;
        for ix in 0..nx {
            for iz in 0..nz {
                if near(iz, nz) || (nx > 1 && near(ix, nx)) {
                    let k = ix * nz + iz;
                    s += self.plus[k].norm_sqr() + self.minus[k].norm_sqr();
                }
            }
        }
        s * self.spec.cell()
    }

    /// z density summed over x.
    pub fn z_density(&self) -> Vec<f64> {
        let nz = self.spec.z.n;
        let dx = self.spec.x.map_or(1.0, |a| a.spacing());
        let mut out = vec![0.0; nz];
        for ix in 0..self.spec.nx() {
            for iz in 0..nz {
                let k = ix * nz + iz;
                out[iz] += (self.plus[k].norm_sqr() + self.minus[k].norm_sqr()) * dx;
            }
        }
        out
    }
}

/// Field seen by the atom: `B = (g x, 0, b0 - g z)` while active.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub b0: f64,
    pub gradient: f64,
    pub active: bool,
}

impl Field {
    pub fn of(config: &PhysicalConfig) -> Self {
        Self {
            b0: config.signed_offset(),
            gradient: config.signed_gradient(),
            active: true,
        }
    }

    pub fn off() -> Self {
        Self {
            b0: 0.0,
            gradient: 0.0,
            active: false,
        }
    }
}

/// Mass, magnetic moment and hbar of the evolved particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub mass: f64,
    pub mu: f64,
    pub hbar: f64,
}

impl Particle {
    pub fn of(config: &PhysicalConfig) -> Self {
        Self {
            mass: config.mass,
            mu: config.mu,
            hbar: config.hbar,
        }
    }
}

struct Spectral {
    nx: usize,
    nz: usize,
    fz: Arc<dyn Fft<f64>>,
    iz: Arc<dyn Fft<f64>>,
    fx: Option<Arc<dyn Fft<f64>>>,
    ix: Option<Arc<dyn Fft<f64>>>,
    scratch: Vec<Complex64>,
    column: Vec<Complex64>,
}

impl Spectral {
    fn new(spec: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let (nx, nz) = (spec.nx(), spec.z.n);
        let fz = planner.plan_fft_forward(nz);
        let iz = planner.plan_fft_inverse(nz);
        let (fx, ix) = if nx > 1 {
            (Some(planner.plan_fft_forward(nx)), Some(planner.plan_fft_inverse(nx)))
        } else {
            (None, None)
        };
        let mut need = fz.get_inplace_scratch_len().max(iz.get_inplace_scratch_len());
        if let (Some(a), Some(b)) = (&fx, &ix) {
            need = need.max(a.get_inplace_scratch_len()).max(b.get_inplace_scratch_len());
        }
        Self {
            nx,
            nz,
            fz,
            iz,
            fx,
            ix,
            scratch: vec![Complex64::new(0.0, 0.0); need],
            column: vec![Complex64::new(0.0, 0.0); nx],
        }
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        let z = if forward { &self.fz } else { &self.iz };
        z.process_with_scratch(data, &mut self.scratch);
        let x = if forward { &self.fx } else { &self.ix };
        if let Some(x) = x {
            for iz in 0..self.nz {
                for ix in 0..self.nx {
                    self.column[ix] = data[ix * self.nz + iz];
                }
                x.process_with_scratch(&mut self.column, &mut self.scratch);
                for ix in 0..self.nx {
                    data[ix * self.nz + iz] = self.column[ix];
                }
            }
        }
    }
}

/// `exp(-i hbar k^2 tau / 2m) / N`, the unnormalized inverse FFT folded in.
fn kinetic_factors(spec: &GridSpec, particle: &Particle, tau: f64) -> Vec<Complex64> {
    let n = spec.len() as f64;
    let c = particle.hbar * tau / (2.0 * particle.mass);
    let mut out = Vec::with_capacity(spec.len());
    for ix in 0..spec.nx() {
        let kx = spec.x.map_or(0.0, |a| a.wavenumber(ix));
        for iz in 0..spec.z.n {
            let kz = spec.z.wavenumber(iz);
            out.push(Complex64::from_polar(1.0 / n, -c * (kx * kx + kz * kz)));
        }
    }
    out
}

fn apply_kinetic(state: &mut GridSpinor, factors: &[Complex64]) {
    for ((p, m), f) in state.plus.iter_mut().zip(state.minus.iter_mut()).zip(factors) {
        *p *= f;
        *m *= f;
    }
}

/// Exact `exp(-i mu (B . sigma) h / hbar)` at every grid point.
fn apply_field(state: &mut GridSpinor, field: &Field, particle: &Particle, h: f64) {
    let spec = state.spec;
    let k = particle.mu * h / particle.hbar;
    let nz = spec.z.n;
    for ix in 0..spec.nx() {
        let bx = spec.x.map_or(0.0, |a| field.gradient * a.coord(ix));
        for iz in 0..nz {
            let bz = field.b0 - field.gradient * spec.z.coord(iz);
            let i = ix * nz + iz;
            let (p, m) = (state.plus[i], state.minus[i]);
            if bx == 0.0 {
                let rot = Complex64::from_polar(1.0, -k * bz);
                state.plus[i] = p * rot;
                state.minus[i] = m * rot.conj();
            } else {
                let b = bx.hypot(bz);
                let (s, c) = (k * b).sin_cos();
                let (nx, nzc) = (bx / b, bz / b);
                // cos a - i sin a (n_x sigma_x + n_z sigma_z)
                let off = Complex64::new(0.0, -s * nx);
                state.plus[i] = p * Complex64::new(c, -s * nzc) + m * off;
                state.minus[i] = p * off + m * Complex64::new(c, s * nzc);
            }
        }
    }
}

fn check_boundary(state: &GridSpinor) -> Result<()> {
    let mass = state.boundary_mass(3);
    if mass > BOUNDARY_TOLERANCE {
        return Err(Error::GridTooSmall { mass });
    }
    Ok(())
}

/// Evolves `initial` for `t_total = spec.dt * spec.n_steps` with Strang
/// splitting. An inactive field is handled in one exact spectral step.
pub fn evolve(initial: &GridSpinor, field: &Field, particle: &Particle, t_total: f64, spec: &GridSpec) -> Result<GridSpinor> {
    spec.validate()?;
    if !initial.spec.same_points(spec) {
        return Err(Error::GridMismatch("initial spinor lives on a different grid".into()));
    }
    let expected = spec.dt * spec.n_steps as f64;
    if !((t_total - expected).abs() <= 1e-12 * expected.abs()) {
        return Err(Error::InvalidGrid(format!(
            "t_total = {t_total} differs from dt * n_steps = {expected}"
        )));
    }
    check_boundary(initial)?;
    let mut state = GridSpinor {
        spec: *spec,
        ..initial.clone()
    };
    let mut fft = Spectral::new(spec);
    fft.transform(&mut state.plus, true);
    fft.transform(&mut state.minus, true);
    if !field.active {
        apply_kinetic(&mut state, &kinetic_factors(spec, particle, t_total));
    } else {
        let half = kinetic_factors(spec, particle, 0.5 * spec.dt);
        let full = kinetic_factors(spec, particle, spec.dt);
        apply_kinetic(&mut state, &half);
        for step in 0..spec.n_steps {
            fft.transform(&mut state.plus, false);
            fft.transform(&mut state.minus, false);
            check_boundary(&state)?;
            apply_field(&mut state, field, particle, spec.dt);
            fft.transform(&mut state.plus, true);
            fft.transform(&mut state.minus, true);
            let last = step + 1 == spec.n_steps;
            apply_kinetic(&mut state, if last { &half } else { &full });
        }
    }
    fft.transform(&mut state.plus, false);
    fft.transform(&mut state.minus, false);
    state.t = initial.t + t_total;
    check_boundary(&state)?;
    Ok(state)
}

/// Relative error norms between a numerical and a reference spinor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `||num - ref|| / ||ref||`.
    pub l2: f64,
    /// L2 after multiplying `num` by the global phase that best matches `ref`.
    pub l2_phase_aligned: f64,
    /// The removed global phase, rad.
    pub global_phase: f64,
    /// `max |num - ref| / max |ref|` over both components.
    pub linf: f64,
    pub linf_phase_aligned: f64,
    pub l2_plus: f64,
    pub l2_minus: f64,
}

/// Compares two spinors on the same grid at the same time.
pub fn compare(numeric: &GridSpinor, reference: &GridSpinor) -> Result<ErrorReport> {
    if !numeric.spec.same_points(&reference.spec) {
        return Err(Error::GridMismatch("spinors live on different grids".into()));
    }
    if (numeric.t - reference.t).abs() > 1e-12 * numeric.t.abs().max(reference.t.abs()) {
        return Err(Error::GridMismatch(format!(
            "spinors are at different times {} and {}",
            numeric.t, reference.t
        )));
    }
    let pairs = || {
        numeric
            .plus
            .iter()
            .zip(&reference.plus)
            .chain(numeric.minus.iter().zip(&reference.minus))
    };
    let overlap: Complex64 = pairs().map(|(n, r)| r.conj() * n).sum();
    let phase = if overlap.norm() > 0.0 { overlap.arg() } else { 0.0 };
    let undo = Complex64::from_polar(1.0, -phase);
    let (mut ref2, mut d2, mut da2) = (0.0, 0.0, 0.0);
    let (mut ref_max, mut d_max, mut da_max) = (0.0f64, 0.0f64, 0.0f64);
    for (n, r) in pairs() {
        ref2 += r.norm_sqr();
        ref_max = ref_max.max(r.norm());
        let d = (n - r).norm();
        let da = (n * undo - r).norm();
        d2 += d * d;
        da2 += da * da;
        d_max = d_max.max(d);
        da_max = da_max.max(da);
    }
    let comp = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(n, r)| (n - r).norm_sqr()).sum::<f64>();
    let rel = |x: f64| if ref2 > 0.0 { (x / ref2).sqrt() } else { x.sqrt() };
    let rel_max = |x: f64| if ref_max > 0.0 { x / ref_max } else { x };
    Ok(ErrorReport {
        l2: rel(d2),
        l2_phase_aligned: rel(da2),
        global_phase: phase,
        linf: rel_max(d_max),
        linf_phase_aligned: rel_max(da_max),
        l2_plus: rel(comp(&numeric.plus, &reference.plus)),
        l2_minus: rel(comp(&numeric.minus, &reference.minus)),
    })
}

/// Samples `reference(x, z)` on the numeric grid and compares.
pub fn compare_with(numeric: &GridSpinor, reference: impl FnMut(f64, f64) -> Result<Spinor>) -> Result<ErrorReport> {
    let r = GridSpinor::from_fn(numeric.spec, numeric.t, reference)?;
    compare(numeric, &r)
}

/// Outcome of one closed-form check: through the magnet, then `t_D` of
/// free flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub theta0: f64,
    pub in_field: ErrorReport,
    pub after_field: ErrorReport,
    /// Global phase the splitting is predicted to add,
    /// `-F^2 t h^2 / (12 hbar m)` with `F = mu B'`.
    pub splitting_phase: f64,
    /// Raw L2 after removing `splitting_phase`, at the exit and after `t_D`.
    pub in_field_corrected: f64,
    pub after_field_corrected: f64,
    /// `|norm_end / norm_start - 1|` over the whole run.
    pub norm_drift: f64,
    pub n_z: usize,
    pub n_steps: usize,
}

impl OracleCase {
    /// Corrected L2 below `tol` at both checkpoints and norm drift below
    /// `norm_tol`.
    pub fn passes(&self, tol: f64, norm_tol: f64) -> bool {
        self.in_field_corrected < tol && self.after_field_corrected < tol && self.norm_drift < norm_tol
    }
}

/// Global phase added by `t / h` Strang steps of size `h` in a linear
/// field. The BCH series ends at `[V, [V, T]] = -hbar^2 F^2 / m`.
pub fn splitting_phase(particle: &Particle, field: &Field, t: f64, h: f64) -> f64 {
    if !field.active {
        return 0.0;
    }
    let f = particle.mu * field.gradient;
    -f * f * t * h * h / (12.0 * particle.hbar * particle.mass)
}

fn rephase(state: &GridSpinor, phase: f64) -> GridSpinor {
    let r = Complex64::from_polar(1.0, phase);
    let mut out = state.clone();
    out.plus.iter_mut().chain(out.minus.iter_mut()).for_each(|v| *v *= r);
    out
}

/// Runs the 1D oracle for a pure state prepared at `theta0`.
pub fn run_case(app: &Apparatus, theta0: f64, spec: &GridSpec) -> Result<OracleCase> {
    let spin = SpinOrientation::new(theta0, 0.0);
    let particle = Particle::of(&app.config);
    let exit = app.t_exit();
    let td = app.derived.t_decoherence;
    let start = GridSpinor::from_fn(*spec, 0.0, |_, z| spinor_in_field_1d(z, 0.0, &spin, app))?;
    let n0 = start.norm_sqr();
    let mut in_spec = *spec;
    in_spec.dt = exit / spec.n_steps as f64;
    let at_exit = evolve(&start, &Field::of(&app.config), &particle, exit, &in_spec)?;
    let in_ref = GridSpinor::from_fn(at_exit.spec, exit, |_, z| spinor_in_field_1d(z, exit, &spin, app))?;
    let in_field = compare(&at_exit, &in_ref)?;
    let splitting_phase = splitting_phase(&particle, &Field::of(&app.config), exit, in_spec.dt);
    let in_field_corrected = compare(&rephase(&at_exit, -splitting_phase), &in_ref)?.l2;
    let free_spec = GridSpec {
        dt: td,
        n_steps: 1,
        ..*spec
    };
    let after = evolve(&at_exit, &Field::off(), &particle, td, &free_spec)?;
    let shifted = GridSpinor { t: td, ..after };
    let after_ref = GridSpinor::from_fn(shifted.spec, td, |_, z| spinor_after_field_1d(z, td, &spin, app))?;
    let after_field = compare(&shifted, &after_ref)?;
    let after_field_corrected = compare(&rephase(&shifted, -splitting_phase), &after_ref)?.l2;
    Ok(OracleCase {
        theta0,
        in_field,
        after_field,
        splitting_phase,
        in_field_corrected,
        after_field_corrected,
        norm_drift: (shifted.norm_sqr() / n0 - 1.0).abs(),
        n_z: spec.z.n,
        n_steps: spec.n_steps,
    })
}

/// Two-body grid over `(z_A, z_B)` with the four spin components
/// `(++, +-, -+, --)`; only A feels the field.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrid {
    pub axis: Axis,
    pub t: f64,
    /// `amps[c][ia * n + ib]`.
    pub amps: [Vec<Complex64>; 4],
}

impl PairGrid {
    pub fn from_fn(axis: Axis, mut f: impl FnMut(f64, f64) -> [Complex64; 4]) -> Result<Self> {
        axis.validate("z")?;
        let n = axis.n;
        let mut amps: [Vec<Complex64>; 4] = Default::default();
        for a in amps.iter_mut() {
            a.reserve(n * n);
        }
        for ia in 0..n {
            for ib in 0..n {
                let v = f(axis.coord(ia), axis.coord(ib));
                for c in 0..4 {
                    amps[c].push(v[c]);
                }
            }
        }
        Ok(Self { axis, t: 0.0, amps })
    }

    /// `(z_A, z_B)` density summed over spins.
    pub fn density(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.amps[0].len()];
        for a in &self.amps {
            for (o, v) in out.iter_mut().zip(a) {
                *o += v.norm_sqr();
            }
        }
        out
    }

    /// Marginal density of `z_A`.
    pub fn marginal_a(&self) -> Vec<f64> {
        let n = self.axis.n;
        let h = self.axis.spacing();
        let rho = self.density();
        (0..n).map(|ia| rho[ia * n..(ia + 1) * n].iter().sum::<f64>() * h).collect()
    }

    /// Marginal density of `z_B`.
    pub fn marginal_b(&self) -> Vec<f64> {
        let n = self.axis.n;
        let h = self.axis.spacing();
        let rho = self.density();
        (0..n).map(|ib| (0..n).map(|ia| rho[ia * n + ib]).sum::<f64>() * h).collect()
    }
}

/// Strang evolution of a pair in which A crosses the 1D field and B is free.
pub fn evolve_pair_1d(initial: &PairGrid, field: &Field, particle: &Particle, dt: f64, n_steps: usize) -> Result<PairGrid> {
    let axis = initial.axis;
    let spec = GridSpec {
        z: axis,
        x: Some(axis),
        dt,
        n_steps,
    };
    spec.validate()?;
    let n = axis.n;
    let mut state = initial.clone();
    // x slot holds z_A (slow index), z slot holds z_B (fast index)
    let mut fft = Spectral::new(&spec);
    let half = kinetic_factors(&spec, particle, 0.5 * dt);
    let full = kinetic_factors(&spec, particle, dt);
    let k = particle.mu * dt / particle.hbar;
    let rotations: Vec<Complex64> = (0..n)
        .map(|ia| Complex64::from_polar(1.0, -k * (field.b0 - field.gradient * axis.coord(ia))))
        .collect();
    for a in state.amps.iter_mut() {
        fft.transform(a, true);
        a.iter_mut().zip(&half).for_each(|(v, f)| *v *= f);
    }
    for step in 0..n_steps {
        let last = step + 1 == n_steps;
        for (c, a) in state.amps.iter_mut().enumerate() {
            fft.transform(a, false);
            if field.active {
                // A's spin is the first label: components 0, 1 are A = +
                let up = c < 2;
                for ia in 0..n {
                    let r = if up { rotations[ia] } else { rotations[ia].conj() };
                    a[ia * n..(ia + 1) * n].iter_mut().for_each(|v| *v *= r);
                }
            }
            fft.transform(a, true);
            let f = if last { &half } else { &full };
            a.iter_mut().zip(f).for_each(|(v, f)| *v *= f);
        }
    }
    for a in state.amps.iter_mut() {
        fft.transform(a, false);
    }
    state.t = initial.t + dt * n_steps as f64;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_particle() -> Particle {
        Particle {
            mass: 1.0,
            mu: 1.0,
            hbar: 1.0,
        }
    }

    fn gaussian(z: f64, sigma: f64) -> Complex64 {
        let a = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
        Complex64::new(a * (-z * z / (4.0 * sigma * sigma)).exp(), 0.0)
    }

    fn spec_1d(half: f64, n: usize, dt: f64, n_steps: usize) -> GridSpec {
        GridSpec {
            z: Axis::new(-half, half, n),
            x: None,
            dt,
            n_steps,
        }
    }

    fn width(s: &GridSpinor) -> f64 {
        let rho = s.z_density();
        let h = s.spec.z.spacing();
        let m: f64 = rho.iter().sum::<f64>() * h;
        let var: f64 = rho
            .iter()
            .enumerate()
            .map(|(i, r)| r * s.spec.z.coord(i).powi(2))
            .sum::<f64>()
            * h;
        (var / m).sqrt()
    }

    #[test]
    fn grid_validation() {
        assert!(spec_1d(10.0, 100, 0.1, 1).validate().is_err());
        assert!(spec_1d(10.0, 32, 0.1, 1).validate().is_err());
        assert!(spec_1d(10.0, 64, 0.0, 1).validate().is_err());
        assert!(spec_1d(10.0, 64, 0.1, 1).validate().is_ok());
        let s = spec_1d(10.0, 64, 0.1, 3);
        let psi = GridSpinor::from_fn(s, 0.0, |_, z| Ok(Spinor::new(gaussian(z, 1.0), Complex64::new(0.0, 0.0)))).unwrap();
        assert!(matches!(
            evolve(&psi, &Field::off(), &unit_particle(), 1.0, &s),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn default_grid_resolves_the_drift_momentum() {
        let app = Apparatus::silver();
        let g = GridSpec::default_for(&app, 100);
        let k = app.config.mass * app.derived.u / app.config.hbar;
        assert!(g.z.wavenumber(g.z.n / 2 - 1) > k);
        assert!(g.z.max >= 13.0 * app.config.sigma0);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn free_packet_spreads_like_the_textbook_formula() {
        let (sigma, t) = (1.0, 2.0);
        let s = spec_1d(40.0, 1024, t, 1);
        let psi = GridSpinor::from_fn(s, 0.0, |_, z| Ok(Spinor::new(gaussian(z, sigma), Complex64::new(0.0, 0.0)))).unwrap();
        let out = evolve(&psi, &Field::off(), &unit_particle(), t, &s).unwrap();
        let want = sigma * (1.0f64 + (t / (2.0 * sigma * sigma)).powi(2)).sqrt();
        assert!((width(&out) / want - 1.0).abs() < 1e-6);
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_field_only_rotates_the_phase() {
        let p = unit_particle();
        let (b0, t, n) = (3.0, 1.5, 50);
        let s = spec_1d(20.0, 256, t / n as f64, n);
        let psi = GridSpinor::from_fn(s, 0.0, |_, z| Ok(Spinor::new(gaussian(z, 1.0), Complex64::new(0.0, 0.0)))).unwrap();
        let field = Field {
            b0,
            gradient: 0.0,
            active: true,
        };
        let with = evolve(&psi, &field, &p, t, &s).unwrap();
        let free = evolve(&psi, &Field::off(), &p, t, &s).unwrap();
        let rot = Complex64::from_polar(1.0, -p.mu * b0 * t / p.hbar);
        for i in 0..s.len() {
            assert!((with.plus[i] - free.plus[i] * rot).norm() < 1e-12);
            assert_eq!(with.minus[i].norm(), 0.0);
        }
        let (a, b) = (with.z_density(), free.z_density());
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn norm_is_conserved_in_a_gradient() {
        let s = spec_1d(30.0, 512, 0.01, 200);
        let psi = GridSpinor::from_fn(s, 0.0, |_, z| Ok(Spinor::new(gaussian(z, 1.0), gaussian(z, 1.0)) * std::f64::consts::FRAC_1_SQRT_2)).unwrap();
        let field = Field {
            b0: 2.0,
            gradient: 1.0,
            active: true,
        };
        let out = evolve(&psi, &field, &unit_particle(), 2.0, &s).unwrap();
        assert!((out.norm_sqr() / psi.norm_sqr() - 1.0).abs() < 1e-12);
        // the packets separate by g t^2 / m = 4 in total
        let rho = out.z_density();
        let h = s.z.spacing();
        let up: f64 = (0..s.z.n).filter(|&i| s.z.coord(i) > 0.0).map(|i| rho[i] * h).sum();
        assert!((up - 0.5).abs() < 0.05);
    }

    #[test]
    fn splitting_error_is_second_order() {
        let p = unit_particle();
        let field = Field {
            b0: 2.0,
            gradient: 1.0,
            active: true,
        };
        let t = 2.0;
        let run = |n: usize| {
            let s = spec_1d(30.0, 512, t / n as f64, n);
            let psi = GridSpinor::from_fn(s, 0.0, |_, z| Ok(Spinor::new(gaussian(z, 1.0), gaussian(z, 1.0)))).unwrap();
            evolve(&psi, &field, &p, t, &s).unwrap()
        };
        let (a, b, c) = (run(20), run(40), run(80));
        let e1 = compare(&a, &c).unwrap().l2;
        let e2 = compare(&b, &c).unwrap().l2;
        // Richardson: e(h) - e(h/4) vs e(h/2) - e(h/4) gives (16 - 1)/(4 - 1) = 5
        let ratio = e1 / e2;
        assert!((ratio - 5.0).abs() < 0.2, "ratio {ratio}");
        // the difference is a global phase of the predicted size
        let r = compare(&a, &c).unwrap();
        assert!(r.l2_phase_aligned < 1e-10);
        let want = splitting_phase(&p, &field, t, t / 20.0) - splitting_phase(&p, &field, t, t / 80.0);
        assert!((r.global_phase - want).abs() < 1e-9, "{} vs {want}", r.global_phase);
    }

    #[test]
    fn compare_sanity() {
        let s = spec_1d(20.0, 256, 1.0, 1);
        let psi = GridSpinor::from_fn(s, 0.0, |_, z| Ok(Spinor::new(gaussian(z, 1.0), gaussian(z - 1.0, 1.0)))).unwrap();
        let same = compare(&psi, &psi.clone()).unwrap();
        assert_eq!((same.l2, same.linf, same.l2_phase_aligned), (0.0, 0.0, 0.0));
        let h = s.z.spacing();
        let shifted = GridSpinor::from_fn(s, 0.0, |_, z| Ok(Spinor::new(gaussian(z - h, 1.0), gaussian(z - 1.0 - h, 1.0)))).unwrap();
        let r = compare(&psi, &shifted).unwrap();
        // a shift by h changes a unit Gaussian by about h / (2 sqrt 2 sigma)
        assert!(r.l2 > 0.0 && r.l2 < h);
        let other = GridSpinor {
            t: 1.0,
            ..psi.clone()
        };
        assert!(matches!(compare(&psi, &other), Err(Error::GridMismatch(_))));
        let coarse = GridSpinor::from_fn(spec_1d(20.0, 128, 1.0, 1), 0.0, |_, z| Ok(Spinor::new(gaussian(z, 1.0), gaussian(z, 1.0)))).unwrap();
        assert!(matches!(compare(&psi, &coarse), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn packet_at_the_edge_is_rejected() {
        let s = spec_1d(10.0, 128, 0.1, 1);
        let psi = GridSpinor::from_fn(s, 0.0, |_, z| Ok(Spinor::new(gaussian(z - 9.0, 1.0), Complex64::new(0.0, 0.0)))).unwrap();
        assert!(matches!(
            evolve(&psi, &Field::off(), &unit_particle(), 0.1, &s),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn transverse_field_component_matters_only_when_b0_is_small() {
        // 2D with B_x = g x against the z-only evolution times free x motion
        let p = unit_particle();
        let axis = Axis::new(-12.0, 12.0, 128);
        let (t, n) = (1.0, 100);
        let run = |b0: f64| {
            let spec2 = GridSpec {
                z: axis,
                x: Some(axis),
                dt: t / n as f64,
                n_steps: n,
            };
            let init = |x: f64, z: f64| {
                let f = gaussian(x, 1.0) * gaussian(z, 1.0) * std::f64::consts::FRAC_1_SQRT_2;
                Ok(Spinor::new(f, f * Complex64::i()))
            };
            let field = Field {
                b0,
                gradient: 1.0,
                active: true,
            };
            let two = evolve(&GridSpinor::from_fn(spec2, 0.0, init).unwrap(), &field, &p, t, &spec2).unwrap();
            let spec1 = GridSpec { x: None, ..spec2 };
            let one = evolve(&GridSpinor::from_fn(spec1, 0.0, |_, z| init(0.0, z)).unwrap(), &field, &p, t, &spec1).unwrap();
            let xfree = evolve(
                &GridSpinor::from_fn(spec1, 0.0, |_, x| Ok(Spinor::new(gaussian(x, 1.0), Complex64::new(0.0, 0.0)))).unwrap(),
                &Field::off(),
                &p,
                t,
                &spec1,
            )
            .unwrap();
            let norm0 = gaussian(0.0, 1.0);
            let product = GridSpinor::from_fn(spec2, t, |x, z| {
                let ix = ((x - axis.min) / axis.spacing()).round() as usize;
                let iz = ((z - axis.min) / axis.spacing()).round() as usize;
                Ok(one.value(iz) * (xfree.plus[ix] / norm0))
            })
            .unwrap();
            assert!((two.norm_sqr() - 1.0).abs() < 1e-10);
            compare(&two, &product).unwrap().l2_phase_aligned
        };
        let strong = run(200.0);
        let weak = run(0.5);
        assert!(strong < 0.01, "B0 = 200: {strong}");
        assert!(weak > 5.0 * strong, "B0 = 0.5: {weak}");
    }

    #[test]
    fn pair_marginal_matches_the_one_body_mixture() {
        let p = unit_particle();
        let axis = Axis::new(-12.0, 12.0, 128);
        let field = Field {
            b0: 2.0,
            gradient: 1.0,
            active: true,
        };
        let k = std::f64::consts::FRAC_1_SQRT_2;
        let zero = Complex64::new(0.0, 0.0);
        let pair0 = PairGrid::from_fn(axis, |za, zb| {
            let f = gaussian(za, 1.0) * gaussian(zb, 1.0) * k;
            [zero, f, -f, zero]
        })
        .unwrap();
        let (dt, n) = (0.02, 100);
        let pair = evolve_pair_1d(&pair0, &field, &p, dt, n).unwrap();
        let spec = GridSpec {
            z: axis,
            x: None,
            dt,
            n_steps: n,
        };
        let one = |up: bool| {
            let psi = GridSpinor::from_fn(spec, 0.0, |_, z| {
                let f = gaussian(z, 1.0);
                Ok(if up { Spinor::new(f, zero) } else { Spinor::new(zero, f) })
            })
            .unwrap();
            evolve(&psi, &field, &p, dt * n as f64, &spec).unwrap().z_density()
        };
        let (up, down) = (one(true), one(false));
        let free_b = evolve(
            &GridSpinor::from_fn(spec, 0.0, |_, z| Ok(Spinor::new(gaussian(z, 1.0), zero))).unwrap(),
            &Field::off(),
            &p,
            dt * n as f64,
            &GridSpec { dt: dt * n as f64, n_steps: 1, ..spec },
        )
        .unwrap()
        .z_density();
        let ma = pair.marginal_a();
        let mb = pair.marginal_b();
        let rho = pair.density();
        let nn = axis.n;
        for i in 0..nn {
            let mix = 0.5 * (up[i] + down[i]);
            assert!((ma[i] - mix).abs() < 1e-10, "A marginal at {i}");
            assert!((mb[i] - free_b[i]).abs() < 1e-10, "B marginal at {i}");
            for j in (0..nn).step_by(7) {
                assert!((rho[i * nn + j] - ma[i] * mb[j]).abs() < 1e-10);
            }
        }
        assert!(pair.amps[0].iter().chain(&pair.amps[3]).all(|v| v.norm() == 0.0));
    }
}
