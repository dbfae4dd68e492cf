//! Inertial-weight particle swarm with reflecting walls and a stagnation stop.
//!
//! All random numbers of an iteration are drawn on the calling thread before
//! the fitness evaluations are dispatched, so a run is reproducible per seed
//! whatever the evaluation concurrency.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{UniaxialLayer, WaimStack};
use crate::objective::{feasibility_check, CostReport, FeasibilitySets, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmConfig {
    pub agents: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub max_iterations: usize,
    /// Stagnation window.
    pub window: usize,
    /// Stagnation threshold on the normalized best cost.
    pub threshold: f64,
    pub seed: u64,
    /// Velocity limit as a fraction of each dimension's range.
    pub v_max_fraction: f64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            agents: 10,
            inertia: 0.4,
            cognitive: 2.0,
            social: 2.0,
            max_iterations: 200,
            window: 30,
            threshold: 1e-4,
            seed: 1,
            v_max_fraction: 0.5,
        }
    }
}

impl SwarmConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.agents < 1 {
            out.push("agents must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.inertia) {
            out.push("inertia must lie in [0, 1)".into());
        }
        if !(self.cognitive >= 0.0 && self.social >= 0.0) {
            out.push("cognitive and social accelerations must be >= 0".into());
        }
        if self.max_iterations < 1 {
            out.push("max_iterations must be >= 1".into());
        }
        if self.window < 1 {
            out.push("window must be >= 1".into());
        }
        if !(self.threshold > 0.0) {
            out.push("threshold must be > 0".into());
        }
        if !(self.v_max_fraction > 0.0) {
            out.push("v_max_fraction must be > 0".into());
        }
        out
    }
}

/// Closed box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidInput("bounds must be non-empty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidInput("every bound must be finite with lower <= upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Cost at the current position; `+inf` until evaluated or after a failure.
    pub cost: f64,
    pub best_position: Vec<f64>,
    pub best_cost: f64,
}

#[derive(Debug, Clone)]
pub struct SwarmState {
    pub agents: Vec<Agent>,
    pub best_position: Vec<f64>,
    pub best_cost: f64,
    pub iteration: usize,
    pub evaluations: usize,
    v_max: Vec<f64>,
    rng: ChaCha8Rng,
}

/// Uniform positions in the box and velocities in `[-v_max, v_max]`; costs
/// are `+inf` until [`evaluate_swarm`] runs.
pub fn init_swarm(config: &SwarmConfig, bounds: &Bounds) -> Result<SwarmState> {
    let v = config.violations();
    if !v.is_empty() {
        return Err(Error::InvalidInput(format!("swarm: {}", v.join("; "))));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let v_max: Vec<f64> = bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(l, u)| config.v_max_fraction * (u - l))
        .collect();
    let mut agents = Vec::with_capacity(config.agents);
    for _ in 0..config.agents {
        let mut position = Vec::with_capacity(bounds.dims());
        let mut velocity = Vec::with_capacity(bounds.dims());
        for d in 0..bounds.dims() {
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let (l, u) = (bounds.lower[d], bounds.upper[d]);
            position.push((l + r1 * (u - l)).clamp(l, u));
            velocity.push(v_max[d] * (2.0 * r2 - 1.0));
        }
        agents.push(Agent {
            best_position: position.clone(),
            position,
            velocity,
            cost: f64::INFINITY,
            best_cost: f64::INFINITY,
        });
    }
    Ok(SwarmState {
        best_position: agents[0].position.clone(),
        best_cost: f64::INFINITY,
        agents,
        iteration: 0,
        evaluations: 0,
        v_max,
        rng,
    })
}

/// Evaluates every agent concurrently, then updates personal and global bests
/// in agent order. A failed evaluation counts as `+inf`.
pub fn evaluate_swarm<F>(state: &mut SwarmState, evaluate: &F)
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let costs: Vec<f64> = state
        .agents
        .par_iter()
        .map(|a| match evaluate(&a.position) {
            Ok(c) if !c.is_nan() => c,
            Ok(_) => {
                log::warn!("cost is NaN at {:?}; treated as +inf", a.position);
                f64::INFINITY
            }
            Err(e) => {
                log::warn!("evaluation failed at {:?}: {e}; treated as +inf", a.position);
                f64::INFINITY
            }
        })
        .collect();
    state.evaluations += costs.len();
    for (a, c) in state.agents.iter_mut().zip(costs) {
        a.cost = c;
        if c < a.best_cost {
            a.best_cost = c;
            a.best_position.clone_from(&a.position);
        }
    }
    for a in &state.agents {
        if a.best_cost < state.best_cost {
            state.best_cost = a.best_cost;
            state.best_position.clone_from(&a.best_position);
        }
    }
}

/// Reflects `x` into `[l, u]`, negating `v` on each bounce.
fn reflect(mut x: f64, mut v: f64, l: f64, u: f64) -> (f64, f64) {
    if l == u {
        return (l, 0.0);
    }
    for _ in 0..8 {
        if x > u {
            x = 2.0 * u - x;
            v = -v;
        } else if x < l {
            x = 2.0 * l - x;
            v = -v;
        } else {
            break;
        }
    }
    (x.clamp(l, u), v)
}

/// Moves every agent by the velocity rule without evaluating.
pub fn advance(state: &mut SwarmState, config: &SwarmConfig, bounds: &Bounds) {
    let gbest = state.best_position.clone();
    for a in &mut state.agents {
        for d in 0..bounds.dims() {
            let (r1, r2): (f64, f64) = (state.rng.random(), state.rng.random());
            let vm = state.v_max[d];
            let v = config.inertia * a.velocity[d]
                + config.cognitive * r1 * (a.best_position[d] - a.position[d])
                + config.social * r2 * (gbest[d] - a.position[d]);
            let v = v.clamp(-vm, vm);
            let (x, v) = reflect(a.position[d] + v, v, bounds.lower[d], bounds.upper[d]);
            a.position[d] = x;
            a.velocity[d] = v;
        }
    }
    state.iteration += 1;
}

/// Moves every agent, then evaluates the new positions.
pub fn swarm_step<F>(state: &mut SwarmState, config: &SwarmConfig, bounds: &Bounds, evaluate: &F)
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    advance(state, config, bounds);
    evaluate_swarm(state, evaluate);
}

/// True when the last normalized best cost is within `threshold` of the mean
/// of the `window` values before it.
pub fn stagnation_check(normalized: &[f64], config: &SwarmConfig) -> bool {
    let w = config.window;
    if normalized.len() < w + 1 {
        return false;
    }
    let last = normalized[normalized.len() - 1];
    let prev = &normalized[normalized.len() - 1 - w..normalized.len() - 1];
    let mean = prev.iter().sum::<f64>() / w as f64;
    (last - mean).abs() <= config.threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub best_cost: f64,
    pub best_cost_normalized: f64,
    pub evals: usize,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub best_position: Vec<f64>,
}

impl RunTrace {
    pub fn normalized(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_cost_normalized).collect()
    }
}

/// Wall time split between swarm bookkeeping and fitness evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub total_s: f64,
    /// Position and velocity updates.
    pub exploration_s: f64,
    /// Decoding positions, feasibility checks and cost bookkeeping.
    pub linkage_s: f64,
    /// Electromagnetic evaluation.
    pub em_s: f64,
}

#[derive(Debug, Clone)]
pub struct SwarmOutcome {
    pub best_position: Vec<f64>,
    pub best_cost: f64,
    pub trace: RunTrace,
    pub iterations: usize,
    pub evaluations: usize,
    pub stagnated: bool,
    pub timing: Timing,
}

/// Runs the swarm until `max_iterations` or stagnation. `normalize` maps a raw
/// cost to the scale-free value the stagnation test uses.
pub fn optimize<F, N>(config: &SwarmConfig, bounds: &Bounds, evaluate: F, normalize: N) -> Result<SwarmOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
    N: Fn(f64) -> f64,
{
    let start = Instant::now();
    let mut exploration = Duration::ZERO;
    let mut em = Duration::ZERO;

    let t = Instant::now();
    let mut state = init_swarm(config, bounds)?;
    exploration += t.elapsed();

    let t = Instant::now();
    evaluate_swarm(&mut state, &evaluate);
    em += t.elapsed();

    let mut trace = RunTrace::default();
    let record = |state: &SwarmState, trace: &mut RunTrace| {
        trace.records.push(TraceRecord {
            iteration: state.iteration,
            best_cost: state.best_cost,
            best_cost_normalized: normalize(state.best_cost),
            evals: state.evaluations,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
    };
    record(&state, &mut trace);

    let mut stagnated = false;
    while state.iteration < config.max_iterations {
        let t = Instant::now();
        advance(&mut state, config, bounds);
        exploration += t.elapsed();

        let t = Instant::now();
        evaluate_swarm(&mut state, &evaluate);
        em += t.elapsed();

        record(&state, &mut trace);
        log::info!(
            "iteration {}: best {:.6e} ({:.4} normalized)",
            state.iteration,
            state.best_cost,
            normalize(state.best_cost)
        );
        if stagnation_check(&trace.normalized(), config) {
            stagnated = true;
            break;
        }
    }
    trace.best_position.clone_from(&state.best_position);
    let total = start.elapsed();
    Ok(SwarmOutcome {
        best_position: state.best_position.clone(),
        best_cost: state.best_cost,
        iterations: state.iteration,
        evaluations: state.evaluations,
        stagnated,
        trace,
        timing: Timing {
            total_s: total.as_secs_f64(),
            exploration_s: exploration.as_secs_f64(),
            linkage_s: total.saturating_sub(exploration + em).as_secs_f64(),
            em_s: em.as_secs_f64(),
        },
    })
}

/// Encoding of a coating as a flat search vector: thicknesses first, then
/// one permittivity per layer (isotropic) or `xx, yy, zz` per layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpace {
    pub layers: usize,
    pub isotropic: bool,
    pub sets: FeasibilitySets,
}

impl DesignSpace {
    pub fn dims(&self) -> usize {
        self.layers * if self.isotropic { 2 } else { 4 }
    }

    pub fn bounds(&self) -> Result<Bounds> {
        let l = self.layers;
        let ne = self.dims() - l;
        let mut lower = vec![self.sets.t_min; l];
        let mut upper = vec![self.sets.t_max; l];
        lower.extend(std::iter::repeat_n(self.sets.eps_min, ne));
        upper.extend(std::iter::repeat_n(self.sets.eps_max, ne));
        Bounds::new(lower, upper)
    }

    pub fn decode(&self, x: &[f64]) -> WaimStack {
        let l = self.layers;
        let layers = (0..l)
            .map(|i| {
                let t = x[i];
                if self.isotropic {
                    UniaxialLayer::isotropic(t, x[l + i])
                } else {
                    let e = &x[l + 3 * i..l + 3 * i + 3];
                    UniaxialLayer {
                        thickness: t,
                        eps_xx: e[0],
                        eps_yy: e[1],
                        eps_zz: e[2],
                    }
                }
            })
            .collect();
        WaimStack {
            layers,
            isotropic: self.isotropic,
        }
    }

    pub fn encode(&self, stack: &WaimStack) -> Vec<f64> {
        let mut x: Vec<f64> = stack.layers.iter().map(|l| l.thickness).collect();
        for l in &stack.layers {
            if self.isotropic {
                x.push(l.eps_xx);
            } else {
                x.extend([l.eps_xx, l.eps_yy, l.eps_zz]);
            }
        }
        x
    }
}

/// Best coating found, its cost report and the search history.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub stack: WaimStack,
    pub report: CostReport,
    pub outcome: SwarmOutcome,
}

pub fn run_synthesis(problem: &Problem, space: &DesignSpace, config: &SwarmConfig) -> Result<Synthesis> {
    if space.layers == 0 {
        return Err(Error::InvalidInput("synthesis needs at least one layer".into()));
    }
    let sv = space.sets.violations();
    if !sv.is_empty() {
        return Err(Error::InvalidInput(format!("feasibility sets: {}", sv.join("; "))));
    }
    let bounds = space.bounds()?;
    let evaluate = |x: &[f64]| -> Result<f64> {
        let stack = space.decode(x);
        let (ok, v) = feasibility_check(&stack, &space.sets);
        if !ok {
            return Err(Error::InvalidInput(v.join("; ")));
        }
        Ok(problem.cost(&stack)?.psi)
    };
    let outcome = optimize(config, &bounds, evaluate, |c| c / problem.psi_no_waim)?;
    if !outcome.best_cost.is_finite() {
        return Err(Error::Degenerate("every evaluated design failed".into()));
    }
    let stack = space.decode(&outcome.best_position);
    let report = problem.cost(&stack)?;
    Ok(Synthesis { stack, report, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> Result<f64> {
        Ok(x.iter().map(|v| v * v).sum())
    }

    fn cube(d: usize) -> Bounds {
        Bounds::new(vec![-5.0; d], vec![5.0; d]).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_in_bounds() {
        let c = SwarmConfig::default();
        let b = cube(4);
        let s1 = init_swarm(&c, &b).unwrap();
        let s2 = init_swarm(&c, &b).unwrap();
        assert_eq!(s1.agents, s2.agents);
        assert_eq!(s1.agents.len(), 10);
        for a in &s1.agents {
            assert!(b.contains(&a.position));
            assert!(a.velocity.iter().all(|v| v.abs() <= 5.0));
        }
    }

    #[test]
    fn collapsed_bounds_pin_agents() {
        let b = Bounds::new(vec![1.5, -2.0], vec![1.5, -2.0]).unwrap();
        let s = init_swarm(&SwarmConfig::default(), &b).unwrap();
        for a in &s.agents {
            assert_eq!(a.position, vec![1.5, -2.0]);
            assert_eq!(a.velocity, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn stationary_fixed_point() {
        let c = SwarmConfig {
            agents: 1,
            ..Default::default()
        };
        let b = cube(3);
        let mut s = init_swarm(&c, &b).unwrap();
        let x = vec![0.5, -1.0, 2.0];
        s.agents[0].position = x.clone();
        s.agents[0].velocity = vec![0.0; 3];
        s.agents[0].best_position = x.clone();
        s.best_position = x.clone();
        swarm_step(&mut s, &c, &b, &sphere);
        assert_eq!(s.agents[0].position, x);
    }

    #[test]
    fn reflecting_wall() {
        let (x, v) = reflect(5.75, 1.0, -5.0, 5.0);
        assert_eq!((x, v), (4.25, -1.0));
        let (x, v) = reflect(-5.5, -2.0, -5.0, 5.0);
        assert_eq!((x, v), (-4.5, 2.0));
        assert_eq!(reflect(3.0, 0.7, -5.0, 5.0), (3.0, 0.7));
    }

    #[test]
    fn stagnation_rule() {
        let c = SwarmConfig {
            window: 3,
            threshold: 1e-4,
            ..Default::default()
        };
        assert!(stagnation_check(&[0.7; 4], &c));
        assert!(!stagnation_check(&[0.7; 3], &c));
        assert!(!stagnation_check(&[1.0, 0.9, 0.8, 0.7], &c));
        assert!(stagnation_check(&[0.7, 0.700005, 0.70001, 0.699995], &c));
    }

    #[test]
    fn sphere_benchmark() {
        for seed in 1..=5 {
            let c = SwarmConfig {
                seed,
                ..Default::default()
            };
            let out = optimize(&c, &cube(4), sphere, |v| v).unwrap();
            assert!(out.best_cost < 1e-3, "seed {seed}: {}", out.best_cost);
            let costs: Vec<f64> = out.trace.records.iter().map(|r| r.best_cost).collect();
            assert!(costs.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(out.evaluations, c.agents * (out.iterations + 1));
        }
    }

    #[test]
    fn single_iteration_returns_initial_best() {
        let c = SwarmConfig {
            max_iterations: 1,
            ..Default::default()
        };
        let init = {
            let mut s = init_swarm(&c, &cube(2)).unwrap();
            evaluate_swarm(&mut s, &sphere);
            s.best_cost
        };
        let out = optimize(&c, &cube(2), sphere, |v| v).unwrap();
        assert!(out.best_cost <= init);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn failures_are_infinite_not_fatal() {
        let c = SwarmConfig {
            max_iterations: 5,
            ..Default::default()
        };
        let flaky = |x: &[f64]| {
            if x[0] > 0.0 {
                Err(Error::Degenerate("test".into()))
            } else {
                sphere(x)
            }
        };
        let out = optimize(&c, &cube(2), flaky, |v| v).unwrap();
        assert!(out.best_cost.is_finite());
        assert!(out.best_position[0] <= 0.0);
    }

    #[test]
    fn design_space_round_trip() {
        let sets = FeasibilitySets::standard(10e9);
        let iso = DesignSpace {
            layers: 2,
            isotropic: true,
            sets,
        };
        assert_eq!(iso.dims(), 4);
        let stack = WaimStack::isotropic(&[(4.65e-3, 1.04), (1.34e-2, 3.13)]);
        assert_eq!(iso.decode(&iso.encode(&stack)), stack);
        let aniso = DesignSpace {
            layers: 2,
            isotropic: false,
            sets,
        };
        assert_eq!(aniso.dims(), 8);
        let x = vec![5.7e-3, 1.2e-2, 1.02, 1.07, 17.38, 2.89, 29.44, 1.74];
        let s = aniso.decode(&x);
        assert_eq!(s.layers[1].eps_yy, 29.44);
        assert_eq!(aniso.encode(&s), x);
    }
}
