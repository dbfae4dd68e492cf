//! Physical property checks shared by `selftest` and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::greens::{UniaxialLayer, WaimStack};
use crate::lattice::SteeringPoint;
use crate::moments::ArrayModel;
use crate::objective::{atc_map, FeasibilitySets, ScanGrid};

/// Largest `|ATC_coated - ATC_uncoated|` over the grid for a stack whose
/// layers all have unit permittivity.
pub fn invisible_layer_deviation(model: &ArrayModel, thicknesses: &[f64], grid: &ScanGrid) -> Result<f64> {
    let stack = WaimStack::isotropic(&thicknesses.iter().map(|&t| (t, 1.0)).collect::<Vec<_>>());
    let bare = atc_map(model, &WaimStack::uncoated(), grid)?;
    let coated = atc_map(model, &stack, grid)?;
    Ok(bare
        .iter()
        .zip(&coated)
        .map(|(a, b)| (a.response.atc - b.response.atc).abs())
        .fold(0.0, f64::max))
}

/// `|ATC(theta = 0) - 1|`.
pub fn broadside_deviation(model: &ArrayModel, stack: &WaimStack, freq: f64) -> Result<f64> {
    let zb = model.broadside_impedance(freq, stack)?;
    let r = model.active_response(&SteeringPoint::broadside(freq)?, stack, zb)?;
    Ok((r.atc - 1.0).abs())
}

/// Largest relative change of the reflection coefficient when every length is
/// multiplied by `scale` and the frequency divided by it.
pub fn scale_deviation(
    model: &ArrayModel,
    stack: &WaimStack,
    freq: f64,
    scale: f64,
    angles: &[(f64, f64)],
) -> Result<f64> {
    let scaled = ArrayModel::new(model.descriptors.scaled(scale), model.settings)?;
    let stack_s = stack.scaled(scale);
    let (f_s, zb, zb_s) = (
        freq / scale,
        model.broadside_impedance(freq, stack)?,
        scaled.broadside_impedance(freq / scale, &stack_s)?,
    );
    let mut worst = 0.0f64;
    for &(theta, phi) in angles {
        let g = model.active_response(&SteeringPoint::new(theta, phi, freq)?, stack, zb)?.gamma;
        let g_s = scaled.active_response(&SteeringPoint::new(theta, phi, f_s)?, &stack_s, zb_s)?.gamma;
        worst = worst.max((g - g_s).norm() / g.norm().max(1e-300));
    }
    Ok(worst)
}

/// Random stack drawn uniformly from the feasibility box.
pub fn random_stack(rng: &mut ChaCha8Rng, layers: usize, isotropic: bool, sets: &FeasibilitySets) -> WaimStack {
    let mut eps = || rng.random_range(sets.eps_min..=sets.eps_max);
    let mut layer_eps: Vec<[f64; 3]> = Vec::with_capacity(layers);
    for _ in 0..layers {
        layer_eps.push(if isotropic { [eps(); 3] } else { [eps(), eps(), eps()] });
    }
    let layers = layer_eps
        .into_iter()
        .map(|[xx, yy, zz]| UniaxialLayer {
            thickness: rng.random_range(sets.t_min..=sets.t_max),
            eps_xx: xx,
            eps_yy: yy,
            eps_zz: zz,
        })
        .collect();
    WaimStack { layers, isotropic }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

/// Invisible-layer, broadside and scale-invariance checks on `model` with a
/// few random designs; cheap enough for a smoke test at low truncation.
pub fn property_suite(model: &ArrayModel, freq: f64, sets: &FeasibilitySets, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = seeded(seed);
    let grid = ScanGrid::new(&crate::objective::ScanSpec::single_frequency(freq).with_grid(6, 4))?;
    let mut invisible = 0.0f64;
    for _ in 0..3 {
        let t: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..sets.t_max)).collect();
        invisible = invisible.max(invisible_layer_deviation(model, &t, &grid)?);
    }
    let mut broadside = 0.0f64;
    let mut scale = 0.0f64;
    let angles = [(10.0, 0.0), (35.0, 45.0), (60.0, 90.0), (80.0, 20.0)];
    for _ in 0..3 {
        let stack = random_stack(&mut rng, 2, false, sets);
        broadside = broadside.max(broadside_deviation(model, &stack, freq)?);
        for s in [0.5, 2.0] {
            scale = scale.max(scale_deviation(model, &stack, freq, s, &angles)?);
        }
    }
    Ok(vec![
        CheckResult {
            name: "invisible layer",
            value: invisible,
            tolerance: 1e-9,
        },
        CheckResult {
            name: "broadside match",
            value: broadside,
            tolerance: 1e-12,
        },
        CheckResult {
            name: "scale invariance",
            value: scale,
            tolerance: 1e-9,
        },
    ])
}
