//! Galerkin moment-method model of the infinite probe-fed patch array.
//!
//! The patch current is expanded in entire-domain cavity modes, the Floquet
//! series is truncated at `|p| <= P`, `|q| <= Q`, and one traversal of the
//! harmonic grid produces the impedance matrix, the probe test voltages and the
//! expansion voltages together.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{greens_dyad, GreensKernel, SpectralGreens, SubstrateSpec, WaimStack};
use crate::lattice::{floquet_wavevector, ArrayDescriptors, ReciprocalLattice, SpectralPoint, SteeringPoint};

pub const MAX_MODES: usize = 6;
const PIVOT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
}

/// One sinusoidal entire-domain mode, uniform across its transverse axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub direction: Direction,
    pub harmonic: u32,
    /// Extent along the current direction (m).
    pub resonant_extent: f64,
    /// Extent across the current direction (m).
    pub transverse_extent: f64,
}

/// Four x-directed odd harmonics followed by two y-directed harmonics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    pub modes: Vec<Mode>,
    pub patch_x: f64,
    pub patch_y: f64,
}

impl ModalBasis {
    const LAYOUT: [(Direction, u32); MAX_MODES] = [
        (Direction::X, 1),
        (Direction::X, 3),
        (Direction::X, 5),
        (Direction::X, 7),
        (Direction::Y, 1),
        (Direction::Y, 2),
    ];

    pub fn new(patch_x: f64, patch_y: f64, count: usize) -> Result<Self> {
        if count == 0 || count > MAX_MODES {
            return Err(Error::InvalidInput(format!("mode count must be in 1..={MAX_MODES}, got {count}")));
        }
        let modes = Self::LAYOUT[..count]
            .iter()
            .map(|&(direction, harmonic)| {
                let (resonant_extent, transverse_extent) = match direction {
                    Direction::X => (patch_x, patch_y),
                    Direction::Y => (patch_y, patch_x),
                };
                Mode {
                    direction,
                    harmonic,
                    resonant_extent,
                    transverse_extent,
                }
            })
            .collect();
        Ok(Self { modes, patch_x, patch_y })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    fn mode(&self, m: usize) -> Result<&Mode> {
        m.checked_sub(1)
            .and_then(|i| self.modes.get(i))
            .ok_or_else(|| Error::InvalidInput(format!("mode index {m} out of range 1..={}", self.modes.len())))
    }
}

/// Current shape of mode `m` (1-based) at `(x, y)`; zero off the patch.
pub fn basis_mode_eval(m: usize, x: f64, y: f64, basis: &ModalBasis) -> Result<[f64; 2]> {
    let mode = basis.mode(m)?;
    let (along, across) = match mode.direction {
        Direction::X => (x, y),
        Direction::Y => (y, x),
    };
    let (a, b) = (mode.resonant_extent, mode.transverse_extent);
    if along.abs() > 0.5 * a || across.abs() > 0.5 * b {
        return Ok([0.0, 0.0]);
    }
    let v = (f64::from(mode.harmonic) * PI * (along + 0.5 * a) / a).sin();
    Ok(match mode.direction {
        Direction::X => [v, 0.0],
        Direction::Y => [0.0, v],
    })
}

/// Spatial transform `(Jx, Jy)` of one mode, kernel `exp(+j k.r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeTransform {
    pub jx: C64,
    pub jy: C64,
}

/// Half phase `|k| l / 2` across one patch axis and its sine and cosine.
/// Every transform along or across that axis is built from this pair, so a
/// harmonic costs two `sin_cos` calls for the whole basis.
#[derive(Debug, Clone, Copy)]
struct AxisPhase {
    k: f64,
    extent: f64,
    half: f64,
    sin: f64,
    cos: f64,
}

impl AxisPhase {
    fn new(k: f64, extent: f64) -> Self {
        let half = 0.5 * k.abs() * extent;
        let (sin, cos) = half.sin_cos();
        Self { k, extent, half, sin, cos }
    }

    /// `int_{-l/2}^{l/2} exp(j k s) ds`.
    fn uniform(&self) -> f64 {
        let u = self.half;
        let sinc = if u < 1e-4 { 1.0 - u * u / 6.0 } else { self.sin / u };
        self.extent * sinc
    }

    /// `int_{-l/2}^{l/2} sin(n pi (s + l/2) / l) exp(j k s) ds`, written around
    /// `u = (|k| - n pi / l) l / 2` so the removable singularity at `u = 0`
    /// needs no special case. The value is real for odd `n` and imaginary for
    /// even `n`; this returns the real coefficient of `j^(n+1 mod 2)`.
    fn sine_coefficient(&self, n: u32) -> f64 {
        let a = self.extent;
        let kappa = f64::from(n) * PI / a;
        let u = self.half - 0.5 * f64::from(n) * PI;
        // sin(half - n pi / 2)
        let sin_u = match n % 4 {
            0 => self.sin,
            1 => -self.cos,
            2 => -self.sin,
            _ => self.cos,
        };
        let sinc = if u.abs() < 1e-4 { 1.0 - u * u / 6.0 } else { sin_u / u };
        let core = kappa * a * sinc / (self.k.abs() + kappa);
        let sign = if (n / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
        if n % 2 == 1 || self.k >= 0.0 {
            sign * core
        } else {
            -sign * core
        }
    }
}

/// Real amplitude of the transform of `mode`; the transform itself is this
/// value for odd harmonics and `j` times it for even ones.
fn transform_coefficient(mode: &Mode, along: &AxisPhase, across: &AxisPhase) -> f64 {
    along.sine_coefficient(mode.harmonic) * across.uniform()
}

fn transform_with(mode: &Mode, along: &AxisPhase, across: &AxisPhase) -> C64 {
    let r = transform_coefficient(mode, along, across);
    if mode.harmonic % 2 == 1 {
        C64::new(r, 0.0)
    } else {
        C64::new(0.0, r)
    }
}

fn axis_phases(mode: &Mode, kx: f64, ky: f64) -> (AxisPhase, AxisPhase) {
    match mode.direction {
        Direction::X => (AxisPhase::new(kx, mode.resonant_extent), AxisPhase::new(ky, mode.transverse_extent)),
        Direction::Y => (AxisPhase::new(ky, mode.resonant_extent), AxisPhase::new(kx, mode.transverse_extent)),
    }
}

pub fn mode_transform(m: usize, sp: &SpectralPoint, basis: &ModalBasis) -> Result<ModeTransform> {
    let mode = basis.mode(m)?;
    let (along, across) = axis_phases(mode, sp.kx, sp.ky);
    let j = transform_with(mode, &along, &across);
    let zero = C64::new(0.0, 0.0);
    Ok(match mode.direction {
        Direction::X => ModeTransform { jx: j, jy: zero },
        Direction::Y => ModeTransform { jx: zero, jy: j },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    pub p: u32,
    pub q: u32,
    pub modes: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self { p: 60, q: 60, modes: 6 }
    }
}

impl TruncationConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.p < 1 {
            out.push("p: must be >= 1".into());
        }
        if self.q < 1 {
            out.push("q: must be >= 1".into());
        }
        if self.modes < 1 || self.modes > MAX_MODES {
            out.push(format!("modes: must be in 1..={MAX_MODES}"));
        }
        out
    }
}

/// Solver settings shared by every evaluation of one problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSettings {
    pub truncation: TruncationConfig,
    /// Substrate loss tangent that keeps surface-wave poles off the real axis.
    pub loss_tangent: f64,
    pub arl_cap: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            truncation: TruncationConfig::default(),
            loss_tangent: 1e-9,
            arl_cap: 1e6,
        }
    }
}

/// Impedance matrix, test voltages and expansion voltages at one steering point.
///
/// `sigma[m][h]` multiplies `C_m` in test equation `h`:
/// `sum_m sigma[m][h] C_m = u[h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSystem {
    pub sigma: Vec<Vec<C64>>,
    pub u: Vec<C64>,
    pub v: Vec<C64>,
    pub steer: SteeringPoint,
    pub p: u32,
    pub q: u32,
}

impl MomentSystem {
    pub fn size(&self) -> usize {
        self.u.len()
    }

    /// 1-norm condition estimate of the matrix actually solved.
    pub fn condition_estimate(&self) -> f64 {
        let a = self.matrix();
        let norm1 = |m: &DMatrix<C64>| {
            (0..m.ncols())
                .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        match a.clone().try_inverse() {
            Some(inv) => norm1(&a) * norm1(&inv),
            None => f64::INFINITY,
        }
    }

    fn matrix(&self) -> DMatrix<C64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |h, m| self.sigma[m][h])
    }
}

/// Active impedance and the derived match figures at one steering point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveResponse {
    pub z: C64,
    /// Reflection coefficient referred to the broadside active impedance.
    pub gamma: C64,
    /// `min(1 / |gamma|^2, cap)`.
    pub arl: f64,
    /// `1 - |gamma|^2`.
    pub atc: f64,
    pub arl_cap: f64,
}

impl ActiveResponse {
    pub fn from_impedances(z: C64, z_broadside: C64, arl_cap: f64) -> Result<Self> {
        let den = z_broadside + z;
        if den.norm() < PIVOT_FLOOR {
            return Err(Error::Degenerate("reflection denominator |Z(0) + Z|".into()));
        }
        let gamma = (z_broadside - z) / den;
        let g2 = gamma.norm_sqr();
        let arl = if g2 > 0.0 { (1.0 / g2).min(arl_cap) } else { arl_cap };
        Ok(Self {
            z,
            gamma,
            arl,
            atc: 1.0 - g2,
            arl_cap,
        })
    }

    /// ARL before the cap is applied.
    pub fn arl_uncapped(&self) -> f64 {
        1.0 / self.gamma.norm_sqr()
    }

    pub fn arl_db(&self) -> f64 {
        10.0 * self.arl.log10()
    }
}

/// Dense LU solve of `sum_m sigma[m][h] C_m = u[h]`.
pub fn solve_mode_currents(sys: &MomentSystem) -> Result<Vec<C64>> {
    let n = sys.size();
    let singular = || Error::SingularMatrix {
        theta_deg: sys.steer.theta_deg(),
        phi_deg: sys.steer.phi_deg(),
        freq: sys.steer.freq(),
    };
    let a = sys.matrix();
    if a.iter().any(|z| !z.is_finite()) {
        return Err(Error::non_finite("moment matrix"));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    if (0..n).any(|i| u[(i, i)].norm() < PIVOT_FLOOR) {
        return Err(singular());
    }
    let rhs = DVector::from_column_slice(&sys.u);
    let c = lu.solve(&rhs).ok_or_else(singular)?;
    let residual = (&a * &c - &rhs).norm();
    let scale = rhs.norm();
    if scale > 0.0 && residual > 1e-10 * scale {
        return Err(Error::Degenerate(format!(
            "moment solve residual {:.3e} exceeds 1e-10 at theta={} phi={}",
            residual / scale,
            sys.steer.theta_deg(),
            sys.steer.phi_deg()
        )));
    }
    Ok(c.iter().copied().collect())
}

/// Precomputed geometry for repeated evaluations of one array.
#[derive(Debug, Clone)]
pub struct ArrayModel {
    pub descriptors: ArrayDescriptors,
    pub lattice: ReciprocalLattice,
    pub basis: ModalBasis,
    pub substrate: SubstrateSpec,
    pub settings: ModelSettings,
}

impl ArrayModel {
    pub fn new(descriptors: ArrayDescriptors, settings: ModelSettings) -> Result<Self> {
        descriptors.validate()?;
        let tv = settings.truncation.violations();
        if !tv.is_empty() {
            return Err(Error::InvalidInput(tv.join("; ")));
        }
        if !(settings.arl_cap >= 1.0) {
            return Err(Error::InvalidInput("arl_cap must be >= 1".into()));
        }
        if !(settings.loss_tangent >= 0.0) {
            return Err(Error::InvalidInput("loss_tangent must be >= 0".into()));
        }
        Ok(Self {
            lattice: descriptors.reciprocal()?,
            basis: ModalBasis::new(descriptors.patch_x, descriptors.patch_y, settings.truncation.modes)?,
            substrate: SubstrateSpec {
                thickness: descriptors.substrate_thickness,
                eps: descriptors.substrate_eps,
                loss_tangent: settings.loss_tangent,
            },
            descriptors,
            settings,
        })
    }

    /// Same geometry with a different truncation.
    pub fn with_truncation(&self, truncation: TruncationConfig) -> Result<Self> {
        Self::new(
            self.descriptors,
            ModelSettings {
                truncation,
                ..self.settings
            },
        )
    }

    pub fn green(&self, sp: &SpectralPoint, stack: &WaimStack, freq: f64) -> Result<SpectralGreens> {
        greens_dyad(sp, &self.substrate, stack, freq)
    }

    /// Fused traversal of the Floquet grid.
    pub fn assemble(&self, steer: &SteeringPoint, stack: &WaimStack) -> Result<MomentSystem> {
        let n = self.basis.len();
        let TruncationConfig { p, q, .. } = self.settings.truncation;
        let (pi, qi) = (p as i32, q as i32);
        let (x0, y0) = (self.descriptors.feed_x, self.descriptors.feed_y);
        let freq = steer.freq();

        // Every transform is real or imaginary, so the harmonic sums run over
        // real amplitudes and the constant phases j^(e_m - e_h) are applied
        // once at the end. With G_xy = G_yx the reduced sums are symmetric.
        let mut acc = [[C64::new(0.0, 0.0); MAX_MODES]; MAX_MODES];
        let mut u = [C64::new(0.0, 0.0); MAX_MODES];
        let mut v = [C64::new(0.0, 0.0); MAX_MODES];
        let mut r = [0.0f64; MAX_MODES];
        let dirs: Vec<usize> = self
            .basis
            .modes
            .iter()
            .map(|m| match m.direction {
                Direction::X => 0,
                Direction::Y => 1,
            })
            .collect();
        let kernel = GreensKernel::new(&self.substrate, stack, freq);
        let (lx, ly) = (self.basis.patch_x, self.basis.patch_y);

        for ip in -pi..=pi {
            for iq in -qi..=qi {
                let sp = floquet_wavevector(ip, iq, steer, &self.lattice);
                let g = kernel.eval(&sp).map_err(|e| Error::Harmonic {
                    p: ip,
                    q: iq,
                    source: Box::new(e),
                })?;
                let px = AxisPhase::new(sp.kx, lx);
                let py = AxisPhase::new(sp.ky, ly);
                for (slot, mode) in r.iter_mut().zip(&self.basis.modes) {
                    *slot = match mode.direction {
                        Direction::X => transform_coefficient(mode, &px, &py),
                        Direction::Y => transform_coefficient(mode, &py, &px),
                    };
                }
                let gt = [[g.xx, g.xy], [g.yx, g.yy]];
                let phase = C64::from_polar(1.0, sp.kx * x0 + sp.ky * y0);
                let to_probe = [g.xz * phase, g.yz * phase];
                let from_probe = [g.zx * phase.conj(), g.zy * phase.conj()];
                for h in 0..n {
                    let dh = dirs[h];
                    let rh = r[h];
                    for m in h..n {
                        acc[m][h] += gt[dirs[m]][dh] * (r[m] * rh);
                    }
                    u[h] += to_probe[dh] * rh;
                    v[h] += from_probe[dh] * rh;
                }
            }
        }

        let jpow = |e: u32| match e % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        };
        let parity: Vec<u32> = self.basis.modes.iter().map(|m| (m.harmonic + 1) % 2).collect();
        let mut sigma = [[C64::new(0.0, 0.0); MAX_MODES]; MAX_MODES];
        for h in 0..n {
            for m in 0..n {
                let reduced = if m >= h { acc[m][h] } else { acc[h][m] };
                // j^(e_m) (-j)^(e_h)
                sigma[m][h] = reduced * jpow(parity[m] + 3 * parity[h]);
            }
            u[h] *= jpow(3 * parity[h]);
            v[h] *= jpow(parity[h]);
        }

        let inv_area = 1.0 / self.lattice.cell_area;
        Ok(MomentSystem {
            sigma: (0..n).map(|m| (0..n).map(|h| -sigma[m][h] * inv_area).collect()).collect(),
            u: u[..n].iter().map(|z| z * inv_area).collect(),
            v: v[..n].iter().map(|z| z * inv_area).collect(),
            steer: *steer,
            p,
            q,
        })
    }

    pub fn expansion_voltages(&self, steer: &SteeringPoint, stack: &WaimStack) -> Result<Vec<C64>> {
        Ok(self.assemble(steer, stack)?.v)
    }

    /// `Z = -sum_m C_m V_m` for a unit probe current.
    pub fn active_impedance(&self, steer: &SteeringPoint, stack: &WaimStack) -> Result<C64> {
        let sys = self.assemble(steer, stack)?;
        let c = solve_mode_currents(&sys)?;
        let z = -c.iter().zip(&sys.v).map(|(c, v)| c * v).sum::<C64>();
        if !z.is_finite() {
            return Err(Error::non_finite("active impedance"));
        }
        Ok(z)
    }

    pub fn broadside_impedance(&self, freq: f64, stack: &WaimStack) -> Result<C64> {
        self.active_impedance(&SteeringPoint::broadside(freq)?, stack)
    }

    pub fn active_response(&self, steer: &SteeringPoint, stack: &WaimStack, z_broadside: C64) -> Result<ActiveResponse> {
        let z = if steer.theta_deg() == 0.0 {
            z_broadside
        } else {
            self.active_impedance(steer, stack)?
        };
        ActiveResponse::from_impedances(z, z_broadside, self.settings.arl_cap)
    }
}
