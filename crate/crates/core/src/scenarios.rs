//! Reproducible built-in problems.
//!
//! Every scenario is a pure function of its [`ScenarioSpec`]. The perturbed
//! square displaces nodes by a smooth seeded field, so every refinement level
//! samples the same geometry.

use std::f64::consts::PI;

use crate::error::{Result, TmopError};
use crate::field::DiscreteField;
use crate::mesh::{uniform_refine, Lcg64, Mesh, QuadratureRule};
use crate::metrics::MetricId;
use crate::solver::{SolverParams, TargetUpdate};
use crate::objective::{max_displacement, ObjectiveConfig, SpatialScalar, XiKind};
use crate::targets::{make_target_builder, TargetBuilder, TargetKind};
use crate::trigger::AdmissibleSpec;

pub const SCENARIO_NAMES: [&str; 5] = ["perturbed-square", "local-limit", "sine-interface", "size-band", "deform-sequence"];

/// Bound on the smooth perturbation, in units of the domain side.
pub const PERTURBATION_AMPLITUDE: f64 = 0.05;
/// Sine modes `(m, n)` of the perturbation field.
const PERTURBATION_MODES: [(f64, f64); 4] = [(1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (2.0, 2.0)];
pub const SIZE_RATIO: f64 = 10.0;
/// Band of the size scenario, `lo <= y <= hi`.
pub const BAND: (f64, f64) = (0.4, 0.6);
/// Indicator smoothing width in node spacings.
pub const SMOOTHING_SPACINGS: f64 = 2.0;
/// Final time and step of the deformation sequence.
pub const DEFORM_STEPS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    /// Elements per side; `None` uses the scenario default.
    pub n: Option<usize>,
    pub degree: Option<usize>,
    pub refinements: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(name: &str) -> Self {
        ScenarioSpec {
            name: name.to_string(),
            n: None,
            degree: None,
            refinements: 0,
            seed: 1,
        }
    }

    pub fn refinements(mut self, r: usize) -> Self {
        self.refinements = r;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn size(mut self, n: usize, degree: usize) -> Self {
        self.n = Some(n);
        self.degree = Some(degree);
        self
    }
}

#[derive(Clone, Debug)]
pub struct NamedField {
    pub name: String,
    pub field: DiscreteField,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub mesh0: Mesh,
    /// Nodal fields on `mesh0`. A field named `indicator` drives adaptive
    /// targets; a field named `delta` samples a space-dependent limiting
    /// distance.
    pub fields: Vec<NamedField>,
    pub config: ObjectiveConfig,
    pub target: TargetKind,
    pub alpha: f64,
    pub trigger: Option<AdmissibleSpec>,
    pub solver: SolverParams,
    /// Largest node offset of `mesh0` from the unperturbed lattice.
    pub initial_perturbation: f64,
}

impl Scenario {
    pub fn field(&self, name: &str) -> Option<&DiscreteField> {
        self.fields.iter().find(|f| f.name == name).map(|f| &f.field)
    }

    pub fn target_builder(&self, quad: &QuadratureRule) -> Result<Box<dyn TargetBuilder>> {
        make_target_builder(self.target, &self.mesh0, self.field("indicator"), self.alpha, quad)
    }

    pub fn quadrature(&self) -> QuadratureRule {
        self.config.quadrature(&self.mesh0)
    }
}

fn refine_times(mut mesh: Mesh, times: usize) -> Mesh {
    for _ in 0..times {
        mesh = uniform_refine(&mesh);
    }
    mesh
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Band indicator ramping over `width` centred on each band edge.
pub fn band_indicator(y: f64, width: f64) -> f64 {
    let (lo, hi) = BAND;
    smoothstep((y - lo) / width + 0.5) * (1.0 - smoothstep((y - hi) / width + 0.5))
}

/// Smoothed material indicator of the sine interface.
pub fn sine_interface_eta(p: &[f64]) -> f64 {
    0.5 * (1.0 + ((p[1] - 0.4 - 0.1 * (2.0 * PI * p[0]).sin()) / 0.02).tanh())
}

/// Limiting distance of the split-domain scenario.
pub fn local_limit_delta(p: &[f64]) -> f64 {
    if p[0] > p[1] {
        1e-4
    } else {
        1.0
    }
}

/// Displacement driving the deformation sequence; zero on the boundary.
pub fn deform_displacement(p: &[f64]) -> [f64; 2] {
    [0.0, -0.13 * (2.0 * PI * p[1]).sin() * (PI * p[0]).sin()]
}

/// `x(t) = x0 + t u(x0)` for `t = 0, 1/DEFORM_STEPS, ..., 1`.
pub fn deform_sequence(mesh0: &Mesh) -> Result<Vec<(f64, Mesh)>> {
    if mesh0.dim() != 2 {
        return Err(TmopError::invalid("the deformation sequence is two-dimensional"));
    }
    Ok((0..=DEFORM_STEPS)
        .map(|i| {
            let t = i as f64 / DEFORM_STEPS as f64;
            let x: Vec<f64> = mesh0
                .coords()
                .chunks(2)
                .flat_map(|p| {
                    let u = deform_displacement(p);
                    [p[0] + t * u[0], p[1] + t * u[1]]
                })
                .collect();
            (t, mesh0.with_coords(x))
        })
        .collect())
}

/// Smooth displacement vanishing on the unit-square boundary, with
/// `|u| <= amplitude` componentwise.
///
/// Coefficients of `sin(m pi x) sin(n pi y)` are drawn from the seeded
/// generator and normalized by their absolute sum.
pub fn smooth_perturbation(seed: u64, amplitude: f64) -> impl Fn(&[f64]) -> [f64; 2] {
    let mut rng = Lcg64::new(seed);
    let mut coef = [[0.0; 4]; 2];
    for c in coef.iter_mut() {
        for v in c.iter_mut() {
            *v = rng.next_symmetric();
        }
        let norm: f64 = c.iter().map(|v| v.abs()).sum();
        c.iter_mut().for_each(|v| *v *= amplitude / norm);
    }
    move |p: &[f64]| {
        let mut u = [0.0; 2];
        for (a, c) in coef.iter().enumerate() {
            for (k, (m, n)) in PERTURBATION_MODES.iter().enumerate() {
                u[a] += c[k] * (m * PI * p[0]).sin() * (n * PI * p[1]).sin();
            }
        }
        u
    }
}

fn perturbed_square(spec: &ScenarioSpec) -> Result<(Mesh, f64)> {
    let uniform = refine_times(
        Mesh::unit_square(spec.n.unwrap_or(8), spec.degree.unwrap_or(3))?,
        spec.refinements,
    );
    let u = smooth_perturbation(spec.seed, PERTURBATION_AMPLITUDE);
    let x: Vec<f64> = uniform
        .coords()
        .chunks(2)
        .enumerate()
        .flat_map(|(i, p)| {
            if uniform.is_boundary(i) {
                [p[0], p[1]]
            } else {
                let d = u(p);
                [p[0] + d[0], p[1] + d[1]]
            }
        })
        .collect();
    let mesh = uniform.with_coords(x);
    let offset = max_displacement(mesh.coords(), uniform.coords(), 2);
    Ok((mesh, offset))
}

pub fn build_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let ideal_size = |mesh0: Mesh, config: ObjectiveConfig, offset: f64, fields: Vec<NamedField>| Scenario {
        name: spec.name.clone(),
        mesh0,
        fields,
        config,
        target: TargetKind::IdealSize,
        alpha: SIZE_RATIO,
        trigger: None,
        solver: SolverParams::default(),
        initial_perturbation: offset,
    };
    match spec.name.as_str() {
        "perturbed-square" => {
            let (mesh0, offset) = perturbed_square(spec)?;
            let config = ObjectiveConfig::single(MetricId::ShapeSize9).with_limiting(XiKind::Quadratic, SpatialScalar::Constant(0.1));
            Ok(ideal_size(mesh0, config, offset, Vec::new()))
        }
        "local-limit" => {
            let (mesh0, offset) = perturbed_square(spec)?;
            let config = ObjectiveConfig::single(MetricId::ShapeSize9)
                .with_limiting(XiKind::Quadratic, SpatialScalar::function(local_limit_delta));
            let delta = DiscreteField::from_fn(&mesh0, local_limit_delta);
            let fields = vec![NamedField {
                name: "delta".into(),
                field: delta,
            }];
            Ok(ideal_size(mesh0, config, offset, fields))
        }
        "sine-interface" => {
            let mesh0 = refine_times(Mesh::unit_square(spec.n.unwrap_or(16), spec.degree.unwrap_or(2))?, spec.refinements);
            let eta = DiscreteField::indicator(&mesh0, DiscreteField::from_fn(&mesh0, sine_interface_eta).values().to_vec())?;
            Ok(Scenario {
                name: spec.name.clone(),
                fields: vec![NamedField {
                    name: "indicator".into(),
                    field: eta,
                }],
                mesh0,
                config: ObjectiveConfig::single(MetricId::ShapeSize9),
                target: TargetKind::Interface,
                alpha: SIZE_RATIO,
                trigger: None,
                // Lagged interface targets cycle without the dW/dx terms.
                solver: SolverParams {
                    target_update: TargetUpdate::FrozenAtStart,
                    ..SolverParams::default()
                },
                initial_perturbation: 0.0,
            })
        }
        "size-band" => {
            let n = spec.n.unwrap_or(16);
            let k = spec.degree.unwrap_or(2);
            let mesh0 = refine_times(Mesh::unit_square(n, k)?, spec.refinements);
            let spacing = 1.0 / (n * k * (1 << spec.refinements)) as f64;
            let width = SMOOTHING_SPACINGS * spacing;
            let g = DiscreteField::indicator(&mesh0, DiscreteField::from_fn(&mesh0, |p| band_indicator(p[1], width)).values().to_vec())?;
            Ok(Scenario {
                name: spec.name.clone(),
                fields: vec![NamedField {
                    name: "indicator".into(),
                    field: g,
                }],
                mesh0,
                config: ObjectiveConfig::single(MetricId::ShapeSize7),
                target: TargetKind::AdaptiveSize,
                alpha: SIZE_RATIO,
                trigger: None,
                solver: SolverParams::default(),
                initial_perturbation: 0.0,
            })
        }
        "deform-sequence" => {
            let mesh0 = refine_times(Mesh::unit_square(spec.n.unwrap_or(8), spec.degree.unwrap_or(2))?, spec.refinements);
            Ok(Scenario {
                name: spec.name.clone(),
                mesh0,
                fields: Vec::new(),
                config: ObjectiveConfig::single(MetricId::Shape2),
                target: TargetKind::Ideal,
                alpha: SIZE_RATIO,
                trigger: Some(AdmissibleSpec::diagonal(&[1.0, 4.0], MetricId::Shape2)?),
                solver: SolverParams::default(),
                initial_perturbation: 0.0,
            })
        }
        other => Err(TmopError::UnknownScenario(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{indicator_volumes, size_from_volumes};

    #[test]
    fn unknown_name() {
        assert!(matches!(build_scenario(&ScenarioSpec::new("nope")), Err(TmopError::UnknownScenario(_))));
    }

    #[test]
    fn all_scenarios_build() {
        for name in SCENARIO_NAMES {
            let s = build_scenario(&ScenarioSpec::new(name)).unwrap();
            let q = s.quadrature();
            assert!(s.mesh0.min_det_jacobian(&q) > 0.0, "{name}");
            s.target_builder(&q).unwrap().build(&s.mesh0, &q).unwrap();
        }
    }

    #[test]
    fn refinement_element_counts_and_domain() {
        for (r, count) in [(0, 64), (1, 256), (2, 1024)] {
            let s = build_scenario(&ScenarioSpec::new("perturbed-square").refinements(r)).unwrap();
            assert_eq!(s.mesh0.num_elements(), count);
            assert!((s.mesh0.volume(&s.quadrature()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = build_scenario(&ScenarioSpec::new("perturbed-square").seed(7)).unwrap();
        let b = build_scenario(&ScenarioSpec::new("perturbed-square").seed(7)).unwrap();
        let c = build_scenario(&ScenarioSpec::new("perturbed-square").seed(8)).unwrap();
        assert_eq!(a.mesh0.coords(), b.mesh0.coords());
        assert_ne!(a.mesh0.coords(), c.mesh0.coords());
        assert!(a.initial_perturbation > 0.0);
    }

    #[test]
    fn perturbation_is_bounded_and_vanishes_on_boundary() {
        let u = smooth_perturbation(3, 0.05);
        for p in [[0.0, 0.3], [1.0, 0.7], [0.2, 0.0], [0.9, 1.0]] {
            let d = u(&p);
            assert!(d[0].abs() < 1e-15 && d[1].abs() < 1e-15);
        }
        for i in 0..=20 {
            for j in 0..=20 {
                let d = u(&[i as f64 / 20.0, j as f64 / 20.0]);
                assert!(d[0].abs() <= 0.05 + 1e-15 && d[1].abs() <= 0.05 + 1e-15);
            }
        }
    }

    #[test]
    fn band_indicator_shape() {
        let w = 0.05;
        assert_eq!(band_indicator(0.5, w), 1.0);
        assert_eq!(band_indicator(0.1, w), 0.0);
        assert_eq!(band_indicator(0.9, w), 0.0);
        assert!((band_indicator(0.4, w) - 0.5).abs() < 1e-15);
        assert!((band_indicator(0.6, w) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn size_band_balance() {
        let s = build_scenario(&ScenarioSpec::new("size-band")).unwrap();
        let q = s.quadrature();
        let (vg, v) = indicator_volumes(&s.mesh0, s.field("indicator").unwrap(), &q).unwrap();
        assert!((vg / v - 0.2).abs() < 0.01, "{}", vg / v);
        let size = size_from_volumes(vg, v, s.mesh0.num_elements(), s.alpha);
        assert!(((vg + (v - vg) / s.alpha) / size - s.mesh0.num_elements() as f64).abs() < 1e-9);
    }

    #[test]
    fn deform_sequence_is_anchored() {
        let s = build_scenario(&ScenarioSpec::new("deform-sequence")).unwrap();
        let seq = deform_sequence(&s.mesh0).unwrap();
        assert_eq!(seq.len(), DEFORM_STEPS + 1);
        assert_eq!(seq[0].1.coords(), s.mesh0.coords());
        for n in 0..s.mesh0.num_nodes() {
            if s.mesh0.is_boundary(n) {
                for (_, m) in &seq {
                    let p = m.node(n);
                    let p0 = s.mesh0.node(n);
                    assert!((p[0] - p0[0]).abs() < 1e-15 && (p[1] - p0[1]).abs() < 1e-15);
                }
            }
        }
    }
}
