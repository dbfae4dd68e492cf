//! Problem configuration: TOML with explicit SI units (m, Hz) and angles in
//! degrees. Every section is parsed into optional fields first so that a load
//! reports all missing or invalid values at once.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::greens::{UniaxialLayer, WaimStack};
use crate::lattice::{ArrayDescriptors, SPEED_OF_LIGHT};
use crate::moments::{ArrayModel, ModelSettings, TruncationConfig};
use crate::objective::{FeasibilitySets, Problem, ScanSpec};
use crate::swarm::{DesignSpace, SwarmConfig};

/// Coating search space and, optionally, a fixed coating to analyze.
#[derive(Debug, Clone, PartialEq)]
pub struct WaimConfig {
    pub layers: usize,
    pub isotropic: bool,
    pub sets: FeasibilitySets,
    pub design: Option<WaimStack>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub array: ArrayDescriptors,
    pub waim: WaimConfig,
    pub scan: ScanSpec,
    pub spectral: ModelSettings,
    pub swarm: SwarmConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    array: Option<RawArray>,
    waim: Option<RawWaim>,
    scan: Option<RawScan>,
    spectral: Option<RawSpectral>,
    swarm: Option<RawSwarm>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArray {
    substrate_thickness: Option<f64>,
    substrate_eps: Option<f64>,
    patch_x: Option<f64>,
    patch_y: Option<f64>,
    feed_x: Option<f64>,
    feed_y: Option<f64>,
    w1: Option<[f64; 2]>,
    w2: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWaim {
    layers: Option<usize>,
    isotropic: Option<bool>,
    t_min: Option<f64>,
    t_max: Option<f64>,
    eps_min: Option<f64>,
    eps_max: Option<f64>,
    layer: Option<Vec<RawLayer>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    thickness: Option<f64>,
    eps: Option<f64>,
    eps_xx: Option<f64>,
    eps_yy: Option<f64>,
    eps_zz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    theta_min: Option<f64>,
    theta_max: Option<f64>,
    phi_min: Option<f64>,
    phi_max: Option<f64>,
    f_min: Option<f64>,
    f_max: Option<f64>,
    n_theta: Option<usize>,
    n_phi: Option<usize>,
    n_freq: Option<usize>,
    solid_angle: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpectral {
    p: Option<u32>,
    q: Option<u32>,
    modes: Option<usize>,
    loss_tangent: Option<f64>,
    arl_cap: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSwarm {
    agents: Option<usize>,
    inertia: Option<f64>,
    cognitive: Option<f64>,
    social: Option<f64>,
    max_iterations: Option<usize>,
    window: Option<usize>,
    threshold: Option<f64>,
    seed: Option<u64>,
    v_max_fraction: Option<f64>,
}

/// Canonical layout written by [`ProblemConfig::to_toml`]; every field explicit.
#[derive(Serialize)]
struct Canonical<'a> {
    array: &'a ArrayDescriptors,
    waim: CanonicalWaim<'a>,
    scan: &'a ScanSpec,
    spectral: CanonicalSpectral,
    swarm: &'a SwarmConfig,
}

#[derive(Serialize)]
struct CanonicalWaim<'a> {
    layers: usize,
    isotropic: bool,
    t_min: f64,
    t_max: f64,
    eps_min: f64,
    eps_max: f64,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    layer: &'a [UniaxialLayer],
}

#[derive(Serialize)]
struct CanonicalSpectral {
    p: u32,
    q: u32,
    modes: usize,
    loss_tangent: f64,
    arl_cap: f64,
}

/// Collects `section.field: message` errors.
#[derive(Default)]
struct Errors(Vec<String>);

impl Errors {
    fn required<T: Copy>(&mut self, path: &str, v: Option<T>) -> Option<T> {
        if v.is_none() {
            self.0.push(format!("{path}: missing"));
        }
        v
    }

    fn extend(&mut self, section: &str, msgs: Vec<String>) {
        self.0.extend(msgs.into_iter().map(|m| format!("{section}.{m}")));
    }
}

fn build_array(raw: Option<RawArray>, e: &mut Errors) -> Option<ArrayDescriptors> {
    let r = raw.unwrap_or_default();
    let d = (
        e.required("array.substrate_thickness", r.substrate_thickness),
        e.required("array.substrate_eps", r.substrate_eps),
        e.required("array.patch_x", r.patch_x),
        e.required("array.patch_y", r.patch_y),
        e.required("array.feed_x", r.feed_x),
        e.required("array.feed_y", r.feed_y),
        e.required("array.w1", r.w1),
        e.required("array.w2", r.w2),
    );
    let (Some(t), Some(eps), Some(px), Some(py), Some(fx), Some(fy), Some(w1), Some(w2)) = d else {
        return None;
    };
    let a = ArrayDescriptors {
        substrate_thickness: t,
        substrate_eps: eps,
        patch_x: px,
        patch_y: py,
        feed_x: fx,
        feed_y: fy,
        w1,
        w2,
    };
    e.extend("array", a.violations());
    Some(a)
}

fn build_scan(raw: Option<RawScan>, e: &mut Errors) -> Option<ScanSpec> {
    let r = raw.unwrap_or_default();
    let f_min = e.required("scan.f_min", r.f_min)?;
    let s = ScanSpec {
        theta_min: r.theta_min.unwrap_or(0.0),
        theta_max: r.theta_max.unwrap_or(90.0),
        phi_min: r.phi_min.unwrap_or(0.0),
        phi_max: r.phi_max.unwrap_or(90.0),
        f_min,
        f_max: r.f_max.unwrap_or(f_min),
        n_theta: r.n_theta.unwrap_or(30),
        n_phi: r.n_phi.unwrap_or(30),
        n_freq: r.n_freq.unwrap_or(1),
        solid_angle: r.solid_angle.unwrap_or(false),
    };
    let v = s.violations();
    let ok = v.is_empty();
    e.extend("scan", v);
    ok.then_some(s)
}

fn build_layer(i: usize, r: &RawLayer, isotropic: bool, e: &mut Errors) -> Option<UniaxialLayer> {
    let path = format!("waim.layer[{}]", i + 1);
    let thickness = e.required(&format!("{path}.thickness"), r.thickness);
    let tensor = [r.eps_xx, r.eps_yy, r.eps_zz];
    let eps = match (r.eps, tensor) {
        (Some(v), [None, None, None]) => Some([v; 3]),
        (None, [Some(xx), Some(yy), Some(zz)]) => {
            if isotropic && !(xx == yy && yy == zz) {
                e.0.push(format!("{path}: tensor components differ in an isotropic stack"));
            }
            Some([xx, yy, zz])
        }
        (Some(_), _) => {
            e.0.push(format!("{path}: give either eps or eps_xx/eps_yy/eps_zz, not both"));
            None
        }
        (None, _) => {
            e.0.push(format!("{path}.eps: missing (or all of eps_xx, eps_yy, eps_zz)"));
            None
        }
    };
    let (t, [xx, yy, zz]) = (thickness?, eps?);
    Some(UniaxialLayer {
        thickness: t,
        eps_xx: xx,
        eps_yy: yy,
        eps_zz: zz,
    })
}

fn build_waim(raw: Option<RawWaim>, scan: Option<&ScanSpec>, e: &mut Errors) -> Option<WaimConfig> {
    let r = raw.unwrap_or_default();
    let isotropic = r.isotropic.unwrap_or(true);
    let explicit = r.layer.unwrap_or_default();
    let layers = match (r.layers, explicit.len()) {
        (Some(n), 0) => n,
        (None, 0) => {
            e.0.push("waim.layers: missing".into());
            return None;
        }
        (None, n) => n,
        (Some(n), m) => {
            if n != m {
                e.0.push(format!("waim.layers: {n} declared but {m} [[waim.layer]] entries given"));
            }
            n
        }
    };
    if layers < 1 {
        e.0.push("waim.layers: must be >= 1".into());
    }
    let t_max = match (r.t_max, scan) {
        (Some(t), _) => Some(t),
        (None, Some(s)) => Some(0.5 * SPEED_OF_LIGHT / s.center_frequency()),
        (None, None) => None,
    };
    let sets = FeasibilitySets {
        t_min: r.t_min.unwrap_or(0.0),
        t_max: t_max?,
        eps_min: r.eps_min.unwrap_or(1.0),
        eps_max: r.eps_max.unwrap_or(30.0),
    };
    e.extend("waim", sets.violations());
    let mut built = Vec::new();
    for (i, l) in explicit.iter().enumerate() {
        if let Some(layer) = build_layer(i, l, isotropic, e) {
            built.push(layer);
        }
    }
    let design = if explicit.is_empty() || built.len() != explicit.len() {
        None
    } else {
        let stack = WaimStack {
            layers: built,
            isotropic,
        };
        e.extend("waim", stack.violations());
        let (_, outside) = crate::objective::feasibility_check(&stack, &sets);
        e.extend("waim", outside);
        Some(stack)
    };
    Some(WaimConfig {
        layers,
        isotropic,
        sets,
        design,
    })
}

fn build_spectral(raw: Option<RawSpectral>, e: &mut Errors) -> ModelSettings {
    let r = raw.unwrap_or_default();
    let d = ModelSettings::default();
    let truncation = TruncationConfig {
        p: r.p.unwrap_or(d.truncation.p),
        q: r.q.unwrap_or(d.truncation.q),
        modes: r.modes.unwrap_or(d.truncation.modes),
    };
    e.extend("spectral", truncation.violations());
    let s = ModelSettings {
        truncation,
        loss_tangent: r.loss_tangent.unwrap_or(d.loss_tangent),
        arl_cap: r.arl_cap.unwrap_or(d.arl_cap),
    };
    if !(s.loss_tangent >= 0.0 && s.loss_tangent.is_finite()) {
        e.0.push("spectral.loss_tangent: must be finite and >= 0".into());
    }
    if !(s.arl_cap >= 1.0 && s.arl_cap.is_finite()) {
        e.0.push("spectral.arl_cap: must be finite and >= 1".into());
    }
    s
}

fn build_swarm(raw: Option<RawSwarm>, e: &mut Errors) -> SwarmConfig {
    let r = raw.unwrap_or_default();
    let d = SwarmConfig::default();
    let s = SwarmConfig {
        agents: r.agents.unwrap_or(d.agents),
        inertia: r.inertia.unwrap_or(d.inertia),
        cognitive: r.cognitive.unwrap_or(d.cognitive),
        social: r.social.unwrap_or(d.social),
        max_iterations: r.max_iterations.unwrap_or(d.max_iterations),
        window: r.window.unwrap_or(d.window),
        threshold: r.threshold.unwrap_or(d.threshold),
        seed: r.seed.unwrap_or(d.seed),
        v_max_fraction: r.v_max_fraction.unwrap_or(d.v_max_fraction),
    };
    e.extend("swarm", s.violations());
    s
}

impl ProblemConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates `text`; `origin` labels parse errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        let mut e = Errors::default();
        let array = build_array(raw.array, &mut e);
        let scan = build_scan(raw.scan, &mut e);
        let waim = build_waim(raw.waim, scan.as_ref(), &mut e);
        let spectral = build_spectral(raw.spectral, &mut e);
        let swarm = build_swarm(raw.swarm, &mut e);
        match (array, waim, scan) {
            (Some(array), Some(waim), Some(scan)) if e.0.is_empty() => Ok(Self {
                array,
                waim,
                scan,
                spectral,
                swarm,
            }),
            _ => Err(Error::Validation(e.0)),
        }
    }

    /// Canonical TOML with every field explicit; parses back to `self`.
    pub fn to_toml(&self) -> String {
        let canonical = Canonical {
            array: &self.array,
            waim: CanonicalWaim {
                layers: self.waim.layers,
                isotropic: self.waim.isotropic,
                t_min: self.waim.sets.t_min,
                t_max: self.waim.sets.t_max,
                eps_min: self.waim.sets.eps_min,
                eps_max: self.waim.sets.eps_max,
                layer: self.waim.design.as_ref().map_or(&[], |s| &s.layers),
            },
            scan: &self.scan,
            spectral: CanonicalSpectral {
                p: self.spectral.truncation.p,
                q: self.spectral.truncation.q,
                modes: self.spectral.truncation.modes,
                loss_tangent: self.spectral.loss_tangent,
                arl_cap: self.spectral.arl_cap,
            },
            swarm: &self.swarm,
        };
        toml::to_string(&canonical).expect("config fields are always representable in TOML")
    }

    /// SHA-256 of the canonical serialization, lowercase hex.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn with_grid(mut self, n_theta: usize, n_phi: usize) -> Self {
        self.scan = self.scan.with_grid(n_theta, n_phi);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.swarm.seed = seed;
        self
    }

    pub fn model(&self) -> Result<ArrayModel> {
        ArrayModel::new(self.array, self.spectral)
    }

    /// Grid plus uncoated reference; evaluates the uncoated array once.
    pub fn problem(&self) -> Result<Problem> {
        Problem::new(self.model()?, self.scan)
    }

    pub fn design_space(&self) -> DesignSpace {
        DesignSpace {
            layers: self.waim.layers,
            isotropic: self.waim.isotropic,
            sets: self.waim.sets,
        }
    }
}
