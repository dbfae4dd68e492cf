//! Integral active-return-loss cost, feasibility sets and tolerance sweeps.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{UniaxialLayer, WaimStack};
use crate::lattice::{SteeringPoint, SPEED_OF_LIGHT};
use crate::moments::{ActiveResponse, ArrayModel};

/// Steering and frequency ranges with midpoint sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_freq: usize,
    /// Weight nodes by `sin(theta)` (solid angle) instead of plain `dtheta dphi`.
    #[serde(default)]
    pub solid_angle: bool,
}

impl ScanSpec {
    /// Full quadrant at one frequency with the default 30 x 30 grid.
    pub fn single_frequency(freq: f64) -> Self {
        Self {
            theta_min: 0.0,
            theta_max: 90.0,
            phi_min: 0.0,
            phi_max: 90.0,
            f_min: freq,
            f_max: freq,
            n_theta: 30,
            n_phi: 30,
            n_freq: 1,
            solid_angle: false,
        }
    }

    pub fn with_grid(self, n_theta: usize, n_phi: usize) -> Self {
        Self { n_theta, n_phi, ..self }
    }

    pub fn center_frequency(&self) -> f64 {
        0.5 * (self.f_min + self.f_max)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let axes = [
            ("theta", self.theta_min, self.theta_max, self.n_theta),
            ("phi", self.phi_min, self.phi_max, self.n_phi),
            ("f", self.f_min, self.f_max, self.n_freq),
        ];
        for (name, lo, hi, n) in axes {
            if !(lo.is_finite() && hi.is_finite()) {
                out.push(format!("{name}_min/{name}_max must be finite"));
                continue;
            }
            if n < 1 {
                out.push(format!("n_{name} must be >= 1"));
            }
            if lo > hi {
                out.push(format!("{name}_min must not exceed {name}_max"));
            }
        }
        if self.theta_min < 0.0 || self.theta_max > 90.0 {
            out.push("theta range must lie in [0, 90] deg".into());
        }
        if !(self.f_min > 0.0) {
            out.push("f_min must be > 0".into());
        }
        out
    }
}

/// One angular quadrature node; `weight` is in rad^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleNode {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub weight: f64,
}

/// One frequency node; `weight` is in Hz, or 1 for a single frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqNode {
    pub freq: f64,
    pub weight: f64,
}

/// Tensor-product midpoint grid over `(theta, phi, f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrid {
    pub angles: Vec<AngleNode>,
    pub freqs: Vec<FreqNode>,
}

/// Midpoint nodes and weights; a degenerate axis is one node of unit measure.
fn midpoint_axis(lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    if n == 1 || lo == hi {
        let w = if lo == hi { 1.0 } else { hi - lo };
        return vec![(0.5 * (lo + hi), w)];
    }
    let h = (hi - lo) / n as f64;
    (0..n).map(|i| (lo + (i as f64 + 0.5) * h, h)).collect()
}

impl ScanGrid {
    pub fn new(spec: &ScanSpec) -> Result<Self> {
        let v = spec.violations();
        if !v.is_empty() {
            return Err(Error::InvalidInput(format!("scan: {}", v.join("; "))));
        }
        let rad = std::f64::consts::PI / 180.0;
        let thetas = midpoint_axis(spec.theta_min, spec.theta_max, spec.n_theta);
        let phis = midpoint_axis(spec.phi_min, spec.phi_max, spec.n_phi);
        let angle_weight = |lo: f64, hi: f64, w: f64| if lo == hi { 1.0 } else { w * rad };
        let mut angles = Vec::with_capacity(thetas.len() * phis.len());
        for &(t, wt) in &thetas {
            for &(p, wp) in &phis {
                let mut weight = angle_weight(spec.theta_min, spec.theta_max, wt)
                    * angle_weight(spec.phi_min, spec.phi_max, wp);
                if spec.solid_angle {
                    weight *= (t * rad).sin();
                }
                angles.push(AngleNode {
                    theta_deg: t,
                    phi_deg: p,
                    weight,
                });
            }
        }
        let freqs = midpoint_axis(spec.f_min, spec.f_max, spec.n_freq)
            .into_iter()
            .map(|(freq, weight)| FreqNode { freq, weight })
            .collect();
        Ok(Self { angles, freqs })
    }

    pub fn len(&self) -> usize {
        self.angles.len() * self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sum of the angular weights (the angular measure for `solid_angle = false`).
    pub fn angular_measure(&self) -> f64 {
        self.angles.iter().map(|a| a.weight).sum()
    }
}

/// Flattened `(steering point, weight)` list, frequency-major.
pub fn scan_grid(spec: &ScanSpec) -> Result<Vec<(SteeringPoint, f64)>> {
    let grid = ScanGrid::new(spec)?;
    let mut out = Vec::with_capacity(grid.len());
    for f in &grid.freqs {
        for a in &grid.angles {
            out.push((SteeringPoint::new(a.theta_deg, a.phi_deg, f.freq)?, a.weight * f.weight));
        }
    }
    Ok(out)
}

/// Closed bounds on layer thickness and permittivity components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibilitySets {
    pub t_min: f64,
    pub t_max: f64,
    pub eps_min: f64,
    pub eps_max: f64,
}

impl FeasibilitySets {
    /// `t in [0, 0.5 lambda]`, `eps in [1, 30]` at frequency `freq`.
    pub fn standard(freq: f64) -> Self {
        Self {
            t_min: 0.0,
            t_max: 0.5 * SPEED_OF_LIGHT / freq,
            eps_min: 1.0,
            eps_max: 30.0,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.t_min >= 0.0) {
            out.push("t_min must be >= 0".into());
        }
        if !(self.t_max >= self.t_min) || !self.t_max.is_finite() {
            out.push("t_max must be finite and >= t_min".into());
        }
        if !(self.eps_min >= 1.0) {
            out.push("eps_min below physical floor 1".into());
        }
        if !(self.eps_max >= self.eps_min) || !self.eps_max.is_finite() {
            out.push("eps_max must be finite and >= eps_min".into());
        }
        out
    }
}

/// Whether every thickness and tensor component lies in its closed interval,
/// with one message per violation.
pub fn feasibility_check(stack: &WaimStack, sets: &FeasibilitySets) -> (bool, Vec<String>) {
    let mut out = Vec::new();
    for (i, l) in stack.layers.iter().enumerate() {
        let n = i + 1;
        if !(l.thickness >= sets.t_min && l.thickness <= sets.t_max) {
            out.push(format!(
                "layer {n}: thickness {} outside [{}, {}]",
                l.thickness, sets.t_min, sets.t_max
            ));
        }
        for (name, e) in [("eps_xx", l.eps_xx), ("eps_yy", l.eps_yy), ("eps_zz", l.eps_zz)] {
            if !(e >= sets.eps_min) {
                out.push(format!("layer {n}: {name} {e} below eps_min {}", sets.eps_min));
            } else if !(e <= sets.eps_max) {
                out.push(format!("layer {n}: {name} {e} above eps_max {}", sets.eps_max));
            }
        }
    }
    (out.is_empty(), out)
}

/// Active response at one grid node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeResponse {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub freq: f64,
    pub response: ActiveResponse,
}

/// Evaluates `f` on every item, in parallel, keeping the input order.
fn ordered_map<T, U, F>(items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Active responses at the given `(theta, phi)` pairs for one frequency, all
/// referred to the broadside impedance `z_broadside`.
pub fn responses_at(
    model: &ArrayModel,
    stack: &WaimStack,
    freq: f64,
    z_broadside: C64,
    angles: &[(f64, f64)],
) -> Result<Vec<NodeResponse>> {
    ordered_map(angles, |&(theta_deg, phi_deg)| {
        let node_err = |e: Error| Error::Node {
            theta_deg,
            phi_deg,
            freq,
            source: Box::new(e),
        };
        let steer = SteeringPoint::new(theta_deg, phi_deg, freq).map_err(node_err)?;
        let response = model.active_response(&steer, stack, z_broadside).map_err(node_err)?;
        Ok(NodeResponse {
            theta_deg,
            phi_deg,
            freq,
            response,
        })
    })
}

/// Responses on the whole grid, frequency-major then in angular node order.
pub fn atc_map(model: &ArrayModel, stack: &WaimStack, grid: &ScanGrid) -> Result<Vec<NodeResponse>> {
    let angles: Vec<(f64, f64)> = grid.angles.iter().map(|a| (a.theta_deg, a.phi_deg)).collect();
    let mut out = Vec::with_capacity(grid.len());
    for f in &grid.freqs {
        let zb = model.broadside_impedance(f.freq, stack)?;
        out.extend(responses_at(model, stack, f.freq, zb, &angles)?);
    }
    Ok(out)
}

/// `psi(f)` for one frequency node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqPsi {
    pub freq: f64,
    pub weight: f64,
    pub psi: f64,
}

/// Quadrature of an arbitrary ARL evaluator over the grid; the sum runs in
/// node order so the result does not depend on scheduling.
pub fn integrate_arl<F>(grid: &ScanGrid, arl: F) -> Result<Vec<FreqPsi>>
where
    F: Fn(&SteeringPoint) -> Result<f64> + Sync + Send,
{
    let mut out = Vec::with_capacity(grid.freqs.len());
    for f in &grid.freqs {
        let values = ordered_map(&grid.angles, |a| {
            let steer = SteeringPoint::new(a.theta_deg, a.phi_deg, f.freq)?;
            arl(&steer)
        })?;
        let psi = grid.angles.iter().zip(&values).map(|(a, v)| a.weight * v).sum();
        out.push(FreqPsi {
            freq: f.freq,
            weight: f.weight,
            psi,
        });
    }
    Ok(out)
}

/// `psi(f) = sum_nodes w ARL` with the broadside reference cached per frequency.
pub fn integral_arl(model: &ArrayModel, stack: &WaimStack, grid: &ScanGrid) -> Result<Vec<FreqPsi>> {
    let map = atc_map(model, stack, grid)?;
    Ok(psi_from_map(grid, &map))
}

/// Folds an ATC map produced by [`atc_map`] on the same grid into `psi(f)`.
pub fn psi_from_map(grid: &ScanGrid, map: &[NodeResponse]) -> Vec<FreqPsi> {
    let na = grid.angles.len();
    grid.freqs
        .iter()
        .zip(map.chunks(na))
        .map(|(f, nodes)| FreqPsi {
            freq: f.freq,
            weight: f.weight,
            psi: grid.angles.iter().zip(nodes).map(|(a, n)| a.weight * n.response.arl).sum(),
        })
        .collect()
}

/// Cost figures of one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub psi_f: Vec<FreqPsi>,
    /// `1 / sum_f w_f psi(f)`.
    pub psi: f64,
    /// `psi / psi_no_waim`.
    pub psi_norm: f64,
    /// `psi_norm - 1`.
    pub delta_psi: f64,
}

/// `1 / sum_f w_f psi(f)`.
pub fn cost_from_psi(psi_f: &[FreqPsi]) -> Result<f64> {
    let total: f64 = psi_f.iter().map(|p| p.weight * p.psi).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Degenerate(format!("integral ARL {total} is not positive")));
    }
    Ok(1.0 / total)
}

impl CostReport {
    pub fn new(psi_f: Vec<FreqPsi>, psi_no_waim: f64) -> Result<Self> {
        let psi = cost_from_psi(&psi_f)?;
        let psi_norm = psi / psi_no_waim;
        Ok(Self {
            psi_f,
            psi,
            psi_norm,
            delta_psi: psi_norm - 1.0,
        })
    }
}

/// One array, one scan and the uncoated reference cost.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: ArrayModel,
    pub scan: ScanSpec,
    pub grid: ScanGrid,
    pub psi_no_waim: f64,
}

impl Problem {
    /// Builds the grid and evaluates the uncoated reference once.
    pub fn new(model: ArrayModel, scan: ScanSpec) -> Result<Self> {
        Ok(Self::with_reference_map(model, scan)?.0)
    }

    /// Like [`Problem::new`], also returning the uncoated ATC map.
    pub fn with_reference_map(model: ArrayModel, scan: ScanSpec) -> Result<(Self, Vec<NodeResponse>)> {
        let grid = ScanGrid::new(&scan)?;
        let map = atc_map(&model, &WaimStack::uncoated(), &grid)?;
        let psi_no_waim = cost_from_psi(&psi_from_map(&grid, &map))?;
        let problem = Self {
            model,
            scan,
            grid,
            psi_no_waim,
        };
        Ok((problem, map))
    }

    pub fn cost(&self, stack: &WaimStack) -> Result<CostReport> {
        CostReport::new(integral_arl(&self.model, stack, &self.grid)?, self.psi_no_waim)
    }

    /// Cost and ATC map from one pass over the grid.
    pub fn cost_and_map(&self, stack: &WaimStack) -> Result<(CostReport, Vec<NodeResponse>)> {
        let map = atc_map(&self.model, stack, &self.grid)?;
        let report = CostReport::new(psi_from_map(&self.grid, &map), self.psi_no_waim)?;
        Ok((report, map))
    }

    /// Responses along constant-`phi` planes at `thetas`, for every frequency node.
    pub fn cuts(&self, stack: &WaimStack, phis: &[f64], thetas: &[f64]) -> Result<Vec<NodeResponse>> {
        plane_cuts(&self.model, stack, &self.grid, phis, thetas)
    }
}

/// Responses along constant-`phi` planes at `thetas`, plane-major, for every
/// frequency node of `grid`.
pub fn plane_cuts(
    model: &ArrayModel,
    stack: &WaimStack,
    grid: &ScanGrid,
    phis: &[f64],
    thetas: &[f64],
) -> Result<Vec<NodeResponse>> {
    let angles: Vec<(f64, f64)> = phis.iter().flat_map(|&p| thetas.iter().map(move |&t| (t, p))).collect();
    let mut out = Vec::new();
    for f in &grid.freqs {
        let zb = model.broadside_impedance(f.freq, stack)?;
        out.extend(responses_at(model, stack, f.freq, zb, &angles)?);
    }
    Ok(out)
}

/// Worst ATC over every plane and frequency at each distinct `theta`, sorted
/// by `theta`.
pub fn worst_by_theta(responses: &[NodeResponse]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut sorted: Vec<(f64, f64)> = responses.iter().map(|r| (r.theta_deg, r.response.atc)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, a) in sorted {
        match out.last_mut() {
            Some(last) if last.0 == t => last.1 = last.1.min(a),
            _ => out.push((t, a)),
        }
    }
    out
}

/// Largest `theta` up to which the worst ATC stays `>= threshold`, linearly
/// interpolated across the first failing sample; the last sample if none
/// fails. `None` if the first sample already fails.
pub fn scan_limit(responses: &[NodeResponse], threshold: f64) -> Option<f64> {
    let worst = worst_by_theta(responses);
    let Some(first_fail) = worst.iter().position(|&(_, a)| a < threshold) else {
        return worst.last().map(|w| w.0);
    };
    if first_fail == 0 {
        return None;
    }
    let (t0, a0) = worst[first_fail - 1];
    let (t1, a1) = worst[first_fail];
    Some(t0 + (t1 - t0) * (a0 - threshold) / (a0 - a1))
}

/// `theta` positions of local ATC minima deeper than `depth` along one cut.
/// `cut` must hold a single plane and frequency.
pub fn dip_locations(cut: &[NodeResponse], depth: f64) -> Vec<f64> {
    let w = worst_by_theta(cut);
    (1..w.len().saturating_sub(1))
        .filter(|&i| w[i].1 < depth && w[i].1 <= w[i - 1].1 && w[i].1 < w[i + 1].1)
        .map(|i| w[i].0)
        .collect()
}

/// Outcome for one member of a tolerance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepVariant {
    /// `nominal`, or one sign per layer such as `+-`.
    pub label: String,
    /// `+1` / `-1` per layer; empty for the nominal stack.
    pub signs: Vec<i8>,
    pub stack: WaimStack,
    pub feasible: bool,
    pub violations: Vec<String>,
    pub report: Option<CostReport>,
    pub cuts: Vec<NodeResponse>,
}

/// Nominal stack plus every `+-perturbation` combination on the thicknesses.
/// Infeasible variants are reported with their violations and not evaluated.
pub fn tolerance_sweep(
    problem: &Problem,
    stack: &WaimStack,
    sets: &FeasibilitySets,
    perturbation: f64,
    phis: &[f64],
    thetas: &[f64],
) -> Result<Vec<SweepVariant>> {
    if !(0.0..1.0).contains(&perturbation) {
        return Err(Error::InvalidInput(format!("perturbation {perturbation} outside [0, 1)")));
    }
    let l = stack.len();
    if l > 16 {
        return Err(Error::InvalidInput(format!("{l} layers give too many sign combinations")));
    }
    let mut candidates = vec![(String::from("nominal"), Vec::new(), stack.clone())];
    for mask in 0..(1usize << l) {
        let signs: Vec<i8> = (0..l).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect();
        let label = signs.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect();
        let layers = stack
            .layers
            .iter()
            .zip(&signs)
            .map(|(layer, &s)| UniaxialLayer {
                thickness: layer.thickness * (1.0 + f64::from(s) * perturbation),
                ..*layer
            })
            .collect();
        candidates.push((
            label,
            signs,
            WaimStack {
                layers,
                isotropic: stack.isotropic,
            },
        ));
    }
    candidates
        .into_iter()
        .map(|(label, signs, stack)| {
            let (feasible, violations) = feasibility_check(&stack, sets);
            let (report, cuts) = if feasible {
                (Some(problem.cost(&stack)?), problem.cuts(&stack, phis, thetas)?)
            } else {
                (None, Vec::new())
            };
            Ok(SweepVariant {
                label,
                signs,
                stack,
                feasible,
                violations,
                report,
                cuts,
            })
        })
        .collect()
}
