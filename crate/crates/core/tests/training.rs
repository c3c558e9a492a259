mod common;

use robust_sched::{
    erm_train, generate, ibr_train, primal_dual_train, robust_loss, training_distribution,
    Baselines, GradientMode, GroupLosses, GroupWeights, IbrOptions, LrSchedule, PrimalDualOptions,
    SolverConfig, TaskSpec, UncertaintySet,
};

fn quadratic() -> TaskSpec {
    TaskSpec::QuadraticMeans {
        mus: vec![0.0, 0.0, 1.0],
        noise: 0.0,
        sizes: vec![100, 100, 100],
    }
}

fn decay() -> LrSchedule {
    LrSchedule::StepDecay {
        base: 0.01,
        warmup_steps: 0,
        decay_every: 300,
        factor: 0.8,
    }
}

fn quad_losses(t: f64) -> GroupLosses {
    GroupLosses::new(vec![t * t, t * t, (1.0 - t) * (1.0 - t)]).unwrap()
}

#[test]
fn erm_finds_the_mean() {
    let spec = quadratic();
    let ds = generate(&spec, 0).unwrap();
    let opts = IbrOptions {
        epochs: 40,
        ..Default::default()
    };
    let out = erm_train(
        &ds,
        &spec.model(),
        &GroupWeights::uniform(3).unwrap(),
        &decay(),
        &opts,
    )
    .unwrap();
    assert!((out.params.theta[0] - 1.0 / 3.0).abs() < 1e-2);
    assert_eq!(out.trajectory.len(), 40);
    assert!(out.trajectory.iter().all(|r| r.q == vec![1.0 / 3.0; 3]));
}

#[test]
fn singleton_ibr_is_erm() {
    let spec = quadratic();
    let ds = generate(&spec, 0).unwrap();
    let w = GroupWeights::new(vec![0.2, 0.3, 0.5]).unwrap();
    let opts = IbrOptions {
        epochs: 5,
        seed: 9,
        ..Default::default()
    };
    let a = erm_train(&ds, &spec.model(), &w, &decay(), &opts).unwrap();
    let b = ibr_train(
        &ds,
        &spec.model(),
        &UncertaintySet::singleton(w),
        None,
        &decay(),
        &opts,
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn chi_square_ibr_reaches_the_minimax_point() {
    let spec = quadratic();
    let ds = generate(&spec, 0).unwrap();
    let set = UncertaintySet::chi_square(0.24, GroupWeights::uniform(3).unwrap()).unwrap();
    let opts = IbrOptions {
        epochs: 40,
        seed: 3,
        ..Default::default()
    };
    let out = ibr_train(&ds, &spec.model(), &set, None, &decay(), &opts).unwrap();
    assert!(
        (out.params.theta[0] - 0.5).abs() < 2e-2,
        "{}",
        out.params.theta[0]
    );
}

#[test]
fn ibr_and_primal_dual_agree_with_the_grid() {
    let spec = quadratic();
    let ds = generate(&spec, 0).unwrap();
    let cfg = SolverConfig::default();
    let set = UncertaintySet::chi_square(0.1, GroupWeights::uniform(3).unwrap()).unwrap();
    let rl = |t: f64| robust_loss(&quad_losses(t), &set, None, &cfg).unwrap();
    let (_, best) = common::grid_min(rl, 0.0, 1.0, 10_000);

    let ibr = ibr_train(
        &ds,
        &spec.model(),
        &set,
        None,
        &decay(),
        &IbrOptions {
            epochs: 40,
            seed: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let pd_opts = PrimalDualOptions {
        steps: 12_000,
        q_step: 0.01,
        seed: 3,
        ..Default::default()
    };
    let model = spec.model();
    let pd = primal_dual_train(
        &ds,
        &model,
        &set,
        None,
        &decay(),
        &GradientMode::SampleFromQ,
        &pd_opts,
    )
    .unwrap();
    let iw = GradientMode::ImportanceWeight(training_distribution(&ds.sizes()).unwrap());
    let pd_iw = primal_dual_train(&ds, &model, &set, None, &decay(), &iw, &pd_opts).unwrap();

    for (name, out) in [("ibr", &ibr), ("pd", &pd), ("pd_iw", &pd_iw)] {
        let value = rl(out.params.theta[0]);
        assert!(value - best < 2e-2, "{name}: {value} vs grid {best}");
    }
    assert!((rl(ibr.params.theta[0]) - rl(pd.params.theta[0])).abs() < 5e-2);
}

#[test]
fn primal_dual_on_the_full_simplex_uses_mirror_ascent() {
    let spec = quadratic();
    let ds = generate(&spec, 0).unwrap();
    let opts = PrimalDualOptions {
        steps: 12_000,
        q_step: 0.01,
        seed: 1,
        record_every: Some(3000),
        ..Default::default()
    };
    let out = primal_dual_train(
        &ds,
        &spec.model(),
        &UncertaintySet::FullSimplex,
        None,
        &decay(),
        &GradientMode::SampleFromQ,
        &opts,
    )
    .unwrap();
    assert!(
        (out.params.theta[0] - 0.5).abs() < 5e-2,
        "{}",
        out.params.theta[0]
    );
    assert_eq!(out.trajectory.len(), 4);
    assert_eq!(out.steps, 12_000);
}

#[test]
fn full_simplex_is_rejected_by_ibr() {
    let spec = quadratic();
    let ds = generate(&spec, 0).unwrap();
    let err = ibr_train(
        &ds,
        &spec.model(),
        &UncertaintySet::FullSimplex,
        None,
        &decay(),
        &IbrOptions::default(),
    );
    assert!(matches!(err, Err(robust_sched::Error::Config(_))));
}

#[test]
fn baselines_from_erm_feed_a_robust_run() {
    let spec = quadratic();
    let ds = generate(&spec, 0).unwrap();
    let model = spec.model();
    let opts = IbrOptions {
        epochs: 20,
        seed: 2,
        ..Default::default()
    };
    let erm = erm_train(
        &ds,
        &model,
        &GroupWeights::uniform(3).unwrap(),
        &decay(),
        &opts,
    )
    .unwrap();
    let b = Baselines::new(
        ds.group_losses(&model, &erm.params.theta)
            .unwrap()
            .into_vec(),
        "erm",
    )
    .unwrap();
    let set = UncertaintySet::cvar(0.5, GroupWeights::uniform(3).unwrap()).unwrap();
    let out = ibr_train(&ds, &model, &set, Some(&b), &decay(), &opts).unwrap();
    let p_max = out.final_q.as_slice().iter().cloned().fold(0.0, f64::max);
    assert!(p_max <= 2.0 / 3.0 + 1e-12);
    assert!(out.params.theta[0] > 0.0 && out.params.theta[0] < 1.0);
}
