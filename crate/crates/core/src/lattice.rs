//! Planar lattice geometry, reciprocal vectors and Floquet wavevectors.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const DEGENERATE_AREA: f64 = 1e-18;

/// Fixed geometry of the printed array.
///
/// The patch occupies `[-patch_x/2, patch_x/2] x [-patch_y/2, patch_y/2]`
/// on top of a grounded substrate. The x axis is the resonant axis of the
/// dominant cavity mode, so the `phi = 0` cut is the E-plane. Feed offsets are
/// measured from the patch center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayDescriptors {
    /// Substrate thickness (m).
    pub substrate_thickness: f64,
    /// Substrate relative permittivity.
    pub substrate_eps: f64,
    /// Patch extent along x (m).
    pub patch_x: f64,
    /// Patch extent along y (m).
    pub patch_y: f64,
    /// Probe offset along x from the patch center (m).
    pub feed_x: f64,
    /// Probe offset along y from the patch center (m).
    pub feed_y: f64,
    /// First lattice vector (m).
    pub w1: [f64; 2],
    /// Second lattice vector (m).
    pub w2: [f64; 2],
}

impl ArrayDescriptors {
    /// Returns every violated invariant, prefixed with the field name.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let finite = [
            ("substrate_thickness", self.substrate_thickness),
            ("substrate_eps", self.substrate_eps),
            ("patch_x", self.patch_x),
            ("patch_y", self.patch_y),
            ("feed_x", self.feed_x),
            ("feed_y", self.feed_y),
            ("w1", self.w1[0]),
            ("w1", self.w1[1]),
            ("w2", self.w2[0]),
            ("w2", self.w2[1]),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                out.push(format!("{name}: value must be finite"));
            }
        }
        if !(self.substrate_thickness > 0.0) {
            out.push("substrate_thickness: must be > 0".into());
        }
        if !(self.substrate_eps >= 1.0) {
            out.push("substrate_eps: below physical floor 1".into());
        }
        if !(self.patch_x > 0.0) {
            out.push("patch_x: must be > 0".into());
        }
        if !(self.patch_y > 0.0) {
            out.push("patch_y: must be > 0".into());
        }
        if !(self.feed_x.abs() <= 0.5 * self.patch_x) {
            out.push("feed_x: probe lies outside the patch".into());
        }
        if !(self.feed_y.abs() <= 0.5 * self.patch_y) {
            out.push("feed_y: probe lies outside the patch".into());
        }
        if !(cross(self.w1, self.w2).abs() > DEGENERATE_AREA) {
            out.push("w2: lattice vectors are degenerate".into());
        } else if let Some((n1, n2)) = self.overlapping_neighbour() {
            out.push(format!("w2: patches overlap the neighbour at lattice offset ({n1}, {n2})"));
        }
        out
    }

    /// First lattice translate, if any, whose patch intersects the central one.
    pub fn overlapping_neighbour(&self) -> Option<(i32, i32)> {
        const REACH: i32 = 3;
        for n1 in -REACH..=REACH {
            for n2 in -REACH..=REACH {
                if (n1, n2) == (0, 0) {
                    continue;
                }
                let dx = f64::from(n1) * self.w1[0] + f64::from(n2) * self.w2[0];
                let dy = f64::from(n1) * self.w1[1] + f64::from(n2) * self.w2[1];
                if dx.abs() < self.patch_x && dy.abs() < self.patch_y {
                    return Some((n1, n2));
                }
            }
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(v.join("; ")))
        }
    }

    pub fn reciprocal(&self) -> Result<ReciprocalLattice> {
        reciprocal_lattice(self.w1, self.w2)
    }

    /// Copy with every length multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            substrate_thickness: self.substrate_thickness * s,
            patch_x: self.patch_x * s,
            patch_y: self.patch_y * s,
            feed_x: self.feed_x * s,
            feed_y: self.feed_y * s,
            w1: [self.w1[0] * s, self.w1[1] * s],
            w2: [self.w2[0] * s, self.w2[1] * s],
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReciprocalLattice {
    pub nu1: [f64; 2],
    pub nu2: [f64; 2],
    /// Unit-cell area |w1 x w2| (m^2).
    pub cell_area: f64,
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Reciprocal vectors with `nu_i . w_j = 2 pi delta_ij`.
pub fn reciprocal_lattice(w1: [f64; 2], w2: [f64; 2]) -> Result<ReciprocalLattice> {
    let det = cross(w1, w2);
    if !(det.abs() > DEGENERATE_AREA) {
        return Err(Error::DegenerateLattice { area: det.abs() });
    }
    let s = 2.0 * PI / det;
    Ok(ReciprocalLattice {
        nu1: [s * w2[1], -s * w2[0]],
        nu2: [-s * w1[1], s * w1[0]],
        cell_area: det.abs(),
    })
}

/// Beam steering direction and frequency. Angles are given in degrees and
/// converted once on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringPoint {
    theta_deg: f64,
    phi_deg: f64,
    freq: f64,
    sin_theta: f64,
    cos_phi: f64,
    sin_phi: f64,
}

impl SteeringPoint {
    pub fn new(theta_deg: f64, phi_deg: f64, freq: f64) -> Result<Self> {
        if !(0.0..=90.0).contains(&theta_deg) || !phi_deg.is_finite() {
            return Err(Error::InvalidInput(format!(
                "steering angle out of range: theta={theta_deg} phi={phi_deg}"
            )));
        }
        if !(freq > 0.0) || !freq.is_finite() {
            return Err(Error::InvalidInput(format!("frequency must be > 0, got {freq}")));
        }
        let (sp, cp) = phi_deg.to_radians().sin_cos();
        Ok(Self {
            theta_deg,
            phi_deg,
            freq,
            sin_theta: theta_deg.to_radians().sin(),
            cos_phi: cp,
            sin_phi: sp,
        })
    }

    pub fn broadside(freq: f64) -> Result<Self> {
        Self::new(0.0, 0.0, freq)
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta_deg
    }

    pub fn phi_deg(&self) -> f64 {
        self.phi_deg
    }

    pub fn freq(&self) -> f64 {
        self.freq
    }

    pub fn lambda(&self) -> f64 {
        SPEED_OF_LIGHT / self.freq
    }

    /// Free-space wavenumber (rad/m).
    pub fn k0(&self) -> f64 {
        2.0 * PI * self.freq / SPEED_OF_LIGHT
    }

    /// Transverse wavevector of the (0, 0) harmonic.
    pub fn incident(&self) -> [f64; 2] {
        let kt = self.k0() * self.sin_theta;
        [kt * self.cos_phi, kt * self.sin_phi]
    }

    pub fn with_freq(&self, freq: f64) -> Result<Self> {
        Self::new(self.theta_deg, self.phi_deg, freq)
    }
}

/// One Floquet harmonic of the transverse spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    pub p: i32,
    pub q: i32,
    pub kx: f64,
    pub ky: f64,
    /// Transverse magnitude sqrt(kx^2 + ky^2).
    pub kt: f64,
}

impl SpectralPoint {
    pub fn new(kx: f64, ky: f64) -> Self {
        Self {
            p: 0,
            q: 0,
            kx,
            ky,
            kt: (kx * kx + ky * ky).sqrt(),
        }
    }
}

pub fn floquet_wavevector(p: i32, q: i32, steer: &SteeringPoint, rl: &ReciprocalLattice) -> SpectralPoint {
    let [k0x, k0y] = steer.incident();
    let (pf, qf) = (f64::from(p), f64::from(q));
    let kx = pf * rl.nu1[0] + qf * rl.nu2[0] + k0x;
    let ky = pf * rl.nu1[1] + qf * rl.nu2[1] + k0y;
    SpectralPoint {
        p,
        q,
        kx,
        ky,
        kt: (kx * kx + ky * ky).sqrt(),
    }
}
