#![allow(dead_code)]

use std::sync::Arc;

use jumpflow::control::{ActionSet, Control, StepControl};
use jumpflow::model::StateBox;
use jumpflow::{
    CatalogModel, Coefficients, Integrator, IntegratorOptions, LevyMeasureSpec, MarkDistribution, NoiseSetup,
};

pub fn measure(small: f64, large: f64, mark_dim: usize) -> LevyMeasureSpec {
    LevyMeasureSpec {
        small_intensity: small,
        small_marks: MarkDistribution::UniformBall { radius: 1.0 },
        large_intensity: large,
        large_marks: MarkDistribution::UniformShell { inner: 1.0, outer: 2.0 },
        mark_dim,
    }
}

pub fn noise(measure: LevyMeasureSpec, level: u32, brownian_dim: usize) -> NoiseSetup {
    NoiseSetup::new(measure, 1.0, 0.5f64.powi(level as i32), brownian_dim).unwrap()
}

pub fn integrator<C: Coefficients + 'static>(model: C, noise: NoiseSetup) -> Integrator {
    Integrator::new(Arc::new(model), noise, 99, IntegratorOptions::default()).unwrap()
}

pub fn clamped<C: Coefficients + 'static>(model: C, noise: NoiseSetup, bound: f64) -> Integrator {
    let d = model.dims().state;
    let options = IntegratorOptions { clamp: Some(StateBox::symmetric(d, bound)) };
    Integrator::new(Arc::new(model), noise, 99, options).unwrap()
}

/// One integrator per catalog entry, each with a control of the right dimension.
pub fn catalog_suite(level: u32) -> Vec<(String, Integrator, Control)> {
    let none = Control::None;
    let switching =
        Control::Step(StepControl::new(vec![0.0, 0.3, 0.55, 1.0], vec![vec![1.0], vec![-0.5], vec![0.25]]).unwrap());
    let affine = CatalogModel::Affine {
        dim: 2,
        brownian_dim: 2,
        control_dim: 1,
        mark_dim: 2,
        a: vec![-1.0, 0.5, 0.0, -2.0],
        b: vec![1.0, -1.0],
        c: vec![0.1, 0.2],
        sigma: vec![0.3, 0.0, 0.1, 0.2],
    };
    let jump_linear = CatalogModel::JumpLinear {
        dim: 2,
        theta: 1.0,
        mu: 0.5,
        sigma: 0.2,
        gamma: 0.4,
        eta: 0.3,
        kappa: 0.5,
        control_gain: None,
    };
    vec![
        ("affine".into(), integrator(affine, noise(measure(2.0, 1.0, 2), level, 2)), switching.clone()),
        (
            "ornstein-uhlenbeck".into(),
            integrator(CatalogModel::ornstein_uhlenbeck(1.0, 0.5, 0.7), noise(measure(2.0, 1.0, 1), level, 1)),
            none.clone(),
        ),
        (
            "controlled-drift".into(),
            integrator(CatalogModel::controlled_drift(0.4), noise(measure(2.0, 1.0, 1), level, 1)),
            switching.clone(),
        ),
        (
            "controlled-linear".into(),
            integrator(CatalogModel::controlled_linear(0.3), noise(measure(2.0, 1.0, 1), level, 1)),
            switching.clone(),
        ),
        (
            "geometric-like".into(),
            integrator(
                CatalogModel::GeometricLike { mu: 0.3, sigma: 0.5, radius: 5.0, mark_dim: 1 },
                noise(measure(2.0, 1.0, 1), level, 1),
            ),
            none.clone(),
        ),
        ("jump-linear".into(), integrator(jump_linear, noise(measure(3.0, 2.0, 2), level, 2)), none),
    ]
}

pub fn binary_actions() -> ActionSet {
    ActionSet::new(vec![vec![0.0], vec![1.0]]).unwrap()
}
