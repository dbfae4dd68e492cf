//! Spectral-domain Green's dyad of a grounded substrate under a stack of
//! diagonally anisotropic dielectric layers terminated by free space.
//!
//! Each spectral point is split into TM_z and TE_z lines along the transverse
//! wavevector. TM quantities are carried as impedances (`Z`, reflection `Gamma`
//! of the current wave) and TE quantities as admittances (`Y`, reflection `Phi`
//! of the voltage wave), so that `Z^T = Z (1 - Gamma) / (1 + Gamma)` and
//! `Y^T = Y (1 - Phi) / (1 + Phi)` are the immittances looking up from the
//! bottom of each layer. Time dependence is `exp(+j w t)`; evanescent waves take
//! `Im(beta) <= 0`.
//!
//! Transferred immittances are computed from `beta^2` and `tan(x)/x`, which
//! stays finite through `beta = 0` and for strongly evanescent harmonics.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{SpectralPoint, SPEED_OF_LIGHT};

/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;
/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;

const J: C64 = C64::new(0.0, 1.0);
const TINY: f64 = 1e-300;

/// SI constants plus the angular frequency of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub eps0: f64,
    pub mu0: f64,
    pub c: f64,
    pub omega: f64,
}

impl PhysicalConstants {
    pub fn at(freq: f64) -> Self {
        Self {
            eps0: EPS0,
            mu0: MU0,
            c: SPEED_OF_LIGHT,
            omega: 2.0 * PI * freq,
        }
    }

    pub fn k0(&self) -> f64 {
        self.omega / self.c
    }
}

/// One coating layer with a diagonal relative permittivity tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniaxialLayer {
    /// Thickness (m).
    pub thickness: f64,
    pub eps_xx: f64,
    pub eps_yy: f64,
    pub eps_zz: f64,
}

impl UniaxialLayer {
    pub fn isotropic(thickness: f64, eps: f64) -> Self {
        Self {
            thickness,
            eps_xx: eps,
            eps_yy: eps,
            eps_zz: eps,
        }
    }

    pub fn is_isotropic(&self) -> bool {
        self.eps_xx == self.eps_yy && self.eps_yy == self.eps_zz
    }
}

/// Ordered coating, index 0 sits on the substrate. An empty stack is the
/// uncoated array.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaimStack {
    pub layers: Vec<UniaxialLayer>,
    #[serde(default)]
    pub isotropic: bool,
}

impl WaimStack {
    pub fn uncoated() -> Self {
        Self::default()
    }

    pub fn new(layers: Vec<UniaxialLayer>) -> Self {
        let isotropic = layers.iter().all(UniaxialLayer::is_isotropic);
        Self { layers, isotropic }
    }

    /// Isotropic stack from `(thickness, eps)` pairs.
    pub fn isotropic(layers: &[(f64, f64)]) -> Self {
        Self {
            layers: layers.iter().map(|&(t, e)| UniaxialLayer::isotropic(t, e)).collect(),
            isotropic: true,
        }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn total_thickness(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for l in &mut out.layers {
            l.thickness *= s;
        }
        out
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let n = i + 1;
            if !(l.thickness >= 0.0) || !l.thickness.is_finite() {
                out.push(format!("layer {n}: thickness must be finite and >= 0"));
            }
            for (name, e) in [("eps_xx", l.eps_xx), ("eps_yy", l.eps_yy), ("eps_zz", l.eps_zz)] {
                if !(e >= 1.0) || !e.is_finite() {
                    out.push(format!("layer {n}: {name} below physical floor 1"));
                }
            }
            if self.isotropic && !l.is_isotropic() {
                out.push(format!("layer {n}: stack is flagged isotropic but tensor is not"));
            }
        }
        out
    }
}

/// Grounded substrate below the patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstrateSpec {
    pub thickness: f64,
    pub eps: f64,
    /// Regularizing loss tangent applied as `eps (1 - j delta)`.
    pub loss_tangent: f64,
}

impl SubstrateSpec {
    pub fn eps_complex(&self) -> C64 {
        C64::new(self.eps, -self.eps * self.loss_tangent)
    }
}

/// Square root with the `Im <= 0` branch.
pub(crate) fn branch_sqrt(w: C64) -> C64 {
    let (a, b) = (w.re, w.im);
    if b == 0.0 {
        return if a >= 0.0 { C64::new(a.sqrt(), 0.0) } else { C64::new(0.0, -(-a).sqrt()) };
    }
    // Principal root without the polar round trip, then flipped onto Im <= 0.
    let r = (a * a + b * b).sqrt();
    let s = if a >= 0.0 {
        let t = (0.5 * (r + a)).sqrt();
        C64::new(t, 0.5 * b / t)
    } else {
        let t = (0.5 * (r - a)).sqrt();
        C64::new(0.5 * b.abs() / t, t.copysign(b))
    };
    if s.im > 0.0 {
        -s
    } else {
        s
    }
}

/// `sqrt(k0^2 eps - kt^2)` on the decaying branch.
pub fn propagation_constant(eps: f64, freq: f64, kt: f64) -> C64 {
    let k0 = PhysicalConstants::at(freq).k0();
    branch_sqrt(C64::new(k0 * k0 * eps - kt * kt, 0.0))
}

/// TM wave impedance `beta / (w eps0 eps)` and TE wave admittance `beta / (w mu0)`.
pub fn wave_impedance_admittance(beta: C64, eps: f64, freq: f64) -> (C64, C64) {
    let w = PhysicalConstants::at(freq).omega;
    (beta / (w * EPS0 * eps), beta / (w * MU0))
}

/// `tan(z)` that does not overflow for large `|Im z|`.
pub(crate) fn tan_c(z: C64) -> C64 {
    if z.im.abs() < 20.0 {
        let (s2, c2) = (2.0 * z.re).sin_cos();
        // sinh and cosh of 2 Im z from one expm1, accurate for tiny losses.
        let x = 2.0 * z.im;
        let e = x.abs().exp_m1();
        let sh = (0.5 * e * (e + 2.0) / (e + 1.0)).copysign(x);
        let ch = 1.0 + 0.5 * e * e / (e + 1.0);
        C64::new(s2, sh) / (c2 + ch)
    } else if z.im < 0.0 {
        let e = (-2.0 * J * z).exp();
        -J * (C64::new(1.0, 0.0) - e) / (C64::new(1.0, 0.0) + e)
    } else {
        let e = (2.0 * J * z).exp();
        -J * (e - 1.0) / (e + 1.0)
    }
}

/// `tan(z) / z`, even in `z`.
pub(crate) fn tanc(z: C64) -> C64 {
    let z2 = z * z;
    if z2.l1_norm() < 1e-6 {
        1.0 + z2 * (1.0 / 3.0 + z2 * (2.0 / 15.0 + z2 * (17.0 / 315.0)))
    } else {
        tan_c(z) / z
    }
}

/// `beta` and `t tan(beta t) / (beta t)` for a lossless line with real `beta^2`.
/// Both branches give a real line factor.
fn lossless_line(b2: f64, t: f64) -> (C64, f64) {
    if b2 >= 0.0 {
        let beta = b2.sqrt();
        let x = beta * t;
        let r = if x < 1e-3 {
            let x2 = x * x;
            1.0 + x2 * (1.0 / 3.0 + x2 * (2.0 / 15.0))
        } else {
            x.tan() / x
        };
        (C64::new(beta, 0.0), t * r)
    } else {
        let y = (-b2).sqrt();
        let x = y * t;
        let r = if x < 1e-3 {
            let x2 = x * x;
            1.0 - x2 * (1.0 / 3.0 - x2 * (2.0 / 15.0))
        } else {
            x.tanh() / x
        };
        (C64::new(0.0, -y), t * r)
    }
}

/// Immittance at the bottom of a line of length `t` loaded by `load`.
/// `c` is the characteristic immittance per unit `beta`, `tl = t tanc(beta t)`.
#[inline]
fn transfer_line(c: f64, b2: f64, tl: f64, load: C64) -> C64 {
    (c * load + J * (c * c * b2 * tl)) / (c + J * load * tl)
}

/// Wave quantities of one layer (or of the free-space termination).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerWaveState {
    /// Effective permittivity seen by the TM line.
    pub eps_tm: f64,
    /// Effective permittivity seen by the TE line.
    pub eps_te: f64,
    pub beta_tm: C64,
    pub beta_te: C64,
    /// TM wave impedance (ohm).
    pub z: C64,
    /// TE wave admittance (S).
    pub y: C64,
    /// TM (current-wave) reflection coefficient at the bottom of the layer.
    pub gamma: C64,
    /// TE (voltage-wave) reflection coefficient at the bottom of the layer.
    pub phi: C64,
    /// Impedance looking up from the bottom of the layer.
    pub z_up: C64,
    /// Admittance looking up from the bottom of the layer.
    pub y_up: C64,
}

/// Result of the downward sweep; `layers[0]` is the layer on the substrate.
#[derive(Debug, Clone, PartialEq)]
pub struct StackWaves {
    pub layers: Vec<LayerWaveState>,
    pub free_space: LayerWaveState,
}

impl StackWaves {
    /// State the substrate sees above it.
    pub fn first(&self) -> &LayerWaveState {
        self.layers.first().unwrap_or(&self.free_space)
    }
}

/// Frequency-dependent constants and the direction of one transverse wavevector.
#[derive(Debug, Clone, Copy)]
struct Frame {
    k0sq: f64,
    kt2: f64,
    cos2: f64,
    sin2: f64,
    /// `1 / (w eps0)`.
    c0: f64,
    /// `1 / (w mu0)`.
    g0: f64,
}

impl Frame {
    fn at(freq: f64, kt: f64, cos: f64, sin: f64) -> Self {
        let pc = PhysicalConstants::at(freq);
        let k0 = pc.k0();
        Self {
            k0sq: k0 * k0,
            kt2: kt * kt,
            cos2: cos * cos,
            sin2: sin * sin,
            c0: 1.0 / (pc.omega * EPS0),
            g0: 1.0 / (pc.omega * MU0),
        }
    }

    fn free_space(&self) -> LayerWaveState {
        let (beta, _) = lossless_line(self.k0sq - self.kt2, 0.0);
        let z = beta * self.c0;
        let y = beta * self.g0;
        LayerWaveState {
            eps_tm: 1.0,
            eps_te: 1.0,
            beta_tm: beta,
            beta_te: beta,
            z,
            y,
            gamma: C64::new(0.0, 0.0),
            phi: C64::new(0.0, 0.0),
            z_up: z,
            y_up: y,
        }
    }

    fn line_parameters(&self, layer: &UniaxialLayer) -> (f64, f64, f64, f64) {
        if layer.is_isotropic() {
            let b2 = self.k0sq * layer.eps_xx - self.kt2;
            return (layer.eps_xx, layer.eps_xx, b2, b2);
        }
        let eps_tm = layer.eps_xx * self.cos2 + layer.eps_yy * self.sin2;
        let eps_te = layer.eps_xx * self.sin2 + layer.eps_yy * self.cos2;
        let b2_tm = self.k0sq * eps_tm - self.kt2 * eps_tm / layer.eps_zz;
        let b2_te = self.k0sq * eps_te - self.kt2;
        (eps_tm, eps_te, b2_tm, b2_te)
    }

    /// Transfers the load immittances `(z_load, y_load)` through `layer`.
    fn transfer(&self, layer: &UniaxialLayer, z_load: C64, y_load: C64) -> LayerWaveState {
        let (eps_tm, eps_te, b2_tm, b2_te) = self.line_parameters(layer);
        let t = layer.thickness;
        let c = self.c0 / eps_tm;
        let g = self.g0;
        let (beta_tm, tl_tm) = lossless_line(b2_tm, t);
        let (beta_te, tl_te) = if b2_te == b2_tm { (beta_tm, tl_tm) } else { lossless_line(b2_te, t) };
        let z_up = transfer_line(c, b2_tm, tl_tm, z_load);
        let y_up = transfer_line(g, b2_te, tl_te, y_load);
        let z = c * beta_tm;
        let y = g * beta_te;
        LayerWaveState {
            eps_tm,
            eps_te,
            beta_tm,
            beta_te,
            z,
            y,
            gamma: reflection_from_transfer(z, z_up),
            phi: reflection_from_transfer(y, y_up),
            z_up,
            y_up,
        }
    }

    /// Immittances looking up from the substrate surface, without storing
    /// per-layer states.
    fn top_immittances(&self, stack: &WaimStack) -> Result<(C64, C64)> {
        let (beta0, _) = lossless_line(self.k0sq - self.kt2, 0.0);
        let (mut z, mut y) = (beta0 * self.c0, beta0 * self.g0);
        for (i, layer) in stack.layers.iter().enumerate().rev() {
            let (eps_tm, _, b2_tm, b2_te) = self.line_parameters(layer);
            let t = layer.thickness;
            let (_, tl_tm) = lossless_line(b2_tm, t);
            let tl_te = if b2_te == b2_tm { tl_tm } else { lossless_line(b2_te, t).1 };
            z = transfer_line(self.c0 / eps_tm, b2_tm, tl_tm, z);
            y = transfer_line(self.g0, b2_te, tl_te, y);
            if !(z.is_finite() && y.is_finite()) {
                return Err(Error::non_finite(format!("transfer through layer {}", i + 1)));
            }
        }
        Ok((z, y))
    }

    fn sweep(&self, stack: &WaimStack) -> Result<StackWaves> {
        let free_space = self.free_space();
        let mut layers = vec![free_space; stack.len()];
        let (mut z, mut y) = (free_space.z_up, free_space.y_up);
        for (i, layer) in stack.layers.iter().enumerate().rev() {
            let st = self.transfer(layer, z, y);
            if !(st.z_up.is_finite() && st.y_up.is_finite()) {
                return Err(Error::non_finite(format!("transfer through layer {}", i + 1)));
            }
            z = st.z_up;
            y = st.y_up;
            layers[i] = st;
        }
        Ok(StackWaves { layers, free_space })
    }
}

/// Inverts `up = w (1 - r) / (1 + r)`; matched media give 0.
fn reflection_from_transfer(w: C64, up: C64) -> C64 {
    let den = w + up;
    if den.l1_norm() < TINY {
        C64::new(0.0, 0.0)
    } else {
        (w - up) / den
    }
}

/// Downward sweep from the free-space half-space to the layer on the
/// substrate. `phi_k` is the azimuth of the transverse wavevector.
pub fn reflection_recursion(stack: &WaimStack, kt: f64, phi_k: f64, freq: f64) -> Result<StackWaves> {
    let (s, c) = phi_k.sin_cos();
    Frame::at(freq, kt, c, s).sweep(stack)
}

/// Substrate quantities and the patch-plane response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstrateBoundary {
    pub beta_sub: C64,
    /// `exp(-2j beta_sub d)`.
    pub gamma_sub: C64,
    /// `-exp(-2j beta_sub d)`.
    pub phi_sub: C64,
    /// TM patch-plane field per unit current along the transverse wavevector.
    pub a_sub: C64,
    /// TE patch-plane field per unit current across the transverse wavevector.
    pub b_sub: C64,
    /// TM denominator coefficient.
    pub a_coef: C64,
    /// TE denominator coefficient.
    pub b_coef: C64,
    /// Substrate-integrated `E_z` per unit `k_u J_u`; also the probe term.
    pub probe_coupling: C64,
}

/// Grounded-substrate constants that do not depend on the wavevector.
#[derive(Debug, Clone, Copy)]
struct GroundedSlab {
    eps: C64,
    d: f64,
    /// `1 / (w eps0 eps_sub)`.
    c_s: C64,
    g0: f64,
}

/// Patch-plane responses of the grounded slab under given upward immittances.
#[derive(Debug, Clone, Copy)]
struct PatchPlane {
    beta_sub: C64,
    a_sub: C64,
    b_sub: C64,
    probe_coupling: C64,
}

impl GroundedSlab {
    fn new(substrate: &SubstrateSpec, freq: f64) -> Self {
        let pc = PhysicalConstants::at(freq);
        let eps = substrate.eps_complex();
        Self {
            eps,
            d: substrate.thickness,
            c_s: 1.0 / (pc.omega * EPS0 * eps),
            g0: 1.0 / (pc.omega * MU0),
        }
    }

    fn close(&self, k0sq: f64, kt2: f64, z_up: C64, y_up: C64) -> Result<PatchPlane> {
        let b2 = self.eps * k0sq - kt2;
        let beta_sub = branch_sqrt(b2);
        let tc = tanc(beta_sub * self.d);
        let z_down = J * self.c_s * b2 * self.d * tc;
        let y_down = -J * self.g0 / (self.d * tc);
        let z_sum = z_up + z_down;
        let y_sum = y_up + y_down;
        if z_sum.l1_norm() < TINY || y_sum.l1_norm() < TINY {
            return Err(Error::non_finite("surface-wave pole"));
        }
        let inv_z = 1.0 / z_sum;
        let out = PatchPlane {
            beta_sub,
            a_sub: -z_up * z_down * inv_z,
            b_sub: -1.0 / y_sum,
            probe_coupling: -z_up * (self.d * tc * self.c_s) * inv_z,
        };
        if !(out.a_sub.is_finite() && out.b_sub.is_finite() && out.probe_coupling.is_finite()) {
            return Err(Error::non_finite("substrate boundary"));
        }
        Ok(out)
    }
}

/// Closes the downward sweep on the grounded substrate.
pub fn substrate_boundary(
    substrate: &SubstrateSpec,
    first: &LayerWaveState,
    kt: f64,
    freq: f64,
) -> Result<SubstrateBoundary> {
    let k0 = PhysicalConstants::at(freq).k0();
    let slab = GroundedSlab::new(substrate, freq);
    let pp = slab.close(k0 * k0, kt * kt, first.z_up, first.y_up)?;
    let beta_sub = pp.beta_sub;
    let eps = slab.eps;

    let gamma_sub = (-2.0 * J * beta_sub * slab.d).exp();
    let phi_sub = -gamma_sub;
    let one = C64::new(1.0, 0.0);
    let a_coef = J
        * (beta_sub / eps * (one + first.gamma) * (one - gamma_sub)
            + first.beta_tm / first.eps_tm * (one + gamma_sub) * (one - first.gamma));
    let b_coef = J
        * (beta_sub * (one + first.phi) * (one - phi_sub) + first.beta_te * (one + phi_sub) * (one - first.phi));
    if a_coef.norm() < TINY || b_coef.norm() < TINY {
        return Err(Error::non_finite("substrate boundary denominator"));
    }
    Ok(SubstrateBoundary {
        beta_sub,
        gamma_sub,
        phi_sub,
        a_sub: pp.a_sub,
        b_sub: pp.b_sub,
        a_coef,
        b_coef,
        probe_coupling: pp.probe_coupling,
    })
}

/// Spectral dyad at one transverse wavevector.
///
/// `xx, xy, yx, yy` map a patch-plane surface current to the patch-plane
/// tangential field. `zx, zy` give the substrate-integrated `E_z` under the
/// patch (the probe voltage), and `xz, yz` the patch-plane field of a unit
/// probe current spanning the substrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralGreens {
    pub xx: C64,
    pub xy: C64,
    pub yx: C64,
    pub yy: C64,
    pub zx: C64,
    pub zy: C64,
    pub xz: C64,
    pub yz: C64,
}

impl SpectralGreens {
    pub fn components(&self) -> [C64; 8] {
        [self.xx, self.xy, self.yx, self.yy, self.zx, self.zy, self.xz, self.yz]
    }
}

/// Dyad evaluator with the per-frequency constants hoisted out of the
/// harmonic loop.
#[derive(Debug, Clone)]
pub struct GreensKernel<'a> {
    stack: &'a WaimStack,
    slab: GroundedSlab,
    freq: f64,
}

impl<'a> GreensKernel<'a> {
    pub fn new(substrate: &SubstrateSpec, stack: &'a WaimStack, freq: f64) -> Self {
        Self {
            stack,
            slab: GroundedSlab::new(substrate, freq),
            freq,
        }
    }

    pub fn eval(&self, sp: &SpectralPoint) -> Result<SpectralGreens> {
        let (c, s) = if sp.kt > 0.0 { (sp.kx / sp.kt, sp.ky / sp.kt) } else { (1.0, 0.0) };
        let frame = Frame::at(self.freq, sp.kt, c, s);
        let (z_up, y_up) = frame.top_immittances(self.stack)?;
        let pp = self.slab.close(frame.k0sq, frame.kt2, z_up, y_up)?;
        let cross = (pp.a_sub - pp.b_sub) * (c * s);
        let w = pp.probe_coupling;
        Ok(SpectralGreens {
            xx: pp.a_sub * (c * c) + pp.b_sub * (s * s),
            xy: cross,
            yx: cross,
            yy: pp.a_sub * (s * s) + pp.b_sub * (c * c),
            zx: w * sp.kx,
            zy: w * sp.ky,
            xz: -w * sp.kx,
            yz: -w * sp.ky,
        })
    }
}

pub fn greens_dyad(sp: &SpectralPoint, substrate: &SubstrateSpec, stack: &WaimStack, freq: f64) -> Result<SpectralGreens> {
    GreensKernel::new(substrate, stack, freq).eval(sp)
}
