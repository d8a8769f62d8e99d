mod common;

use common::{gauss_solve, normal, random_degradation, random_linear, random_model};
use jpmap_core::degrade;
use jpmap_core::energy::{Beta, EnergyCtx, GdConfig};
use jpmap_core::oracle::build_exact_vae;
use jpmap_core::rng::seeded;
use jpmap_core::solvers::{
    csgm, jpmap_approx, jpmap_continuation, jpmap_exact, jpmap_fast, mapz_objective, mapz_splitting, mcsgm,
    pgd_gan, project_to_range, pulse, ContinuationConfig, JpmapConfig, LatentConfig, PgdConfig, SplittingConfig, Step,
};
use proptest::prelude::*;

fn quick() -> JpmapConfig {
    JpmapConfig {
        n1: 3,
        n2: 8,
        n_max: 25,
        gd: GdConfig {
            max_iters: 60,
            ..GdConfig::default()
        },
        ..JpmapConfig::default()
    }
}

#[test]
fn linear_candidates_coincide() {
    let mut rng = seeded(500);
    let lv = random_linear(16, 3, &mut rng);
    let model = build_exact_vae(&lv).unwrap();
    let deg = random_degradation(2, 4, &mut rng);
    let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
    let gd = GdConfig {
        max_iters: 20_000,
        patience: 20_000,
        ..GdConfig::default()
    };
    let mut x = deg.back_projection();
    let mut z = normal(&mut rng, 3);
    for _ in 0..5 {
        let z1 = ctx.z_step_approx(&x).unwrap();
        let z2 = ctx.gd_refine_z(&x, &z1, &gd).unwrap().z;
        let z3 = ctx.gd_refine_z(&x, &z, &gd).unwrap().z;
        assert!(common::max_abs_diff(&z1, &z2) < 1e-5);
        assert!(common::max_abs_diff(&z1, &z3) < 1e-5);
        z = z1;
        x = ctx.x_step(&z).unwrap();
    }
}

#[test]
fn fast_never_trails_exact_on_linear_model() {
    let mut rng = seeded(501);
    for kind in 0..5 {
        let lv = random_linear(36, 3, &mut rng);
        let model = build_exact_vae(&lv).unwrap();
        let deg = random_degradation(kind, 6, &mut rng);
        let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
        let x0 = deg.back_projection();
        let exact = jpmap_exact(&ctx, &x0, 30).unwrap();
        let fast = jpmap_fast(&ctx, &x0, &quick()).unwrap();
        for (f, e) in fast.trace.records.iter().zip(&exact.trace.records) {
            assert!(f.objective <= e.objective + 1e-9 * e.objective.abs().max(1.0));
        }
    }
}

#[test]
fn fast_stops_on_stalled_energy() {
    let mut rng = seeded(502);
    let lv = random_linear(16, 2, &mut rng);
    let model = build_exact_vae(&lv).unwrap();
    let deg = random_degradation(0, 4, &mut rng);
    let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
    let cfg = JpmapConfig::default();
    let sol = jpmap_fast(&ctx, &deg.back_projection(), &cfg).unwrap();
    assert!(sol.converged());
    assert!(sol.trace.iterations < cfg.n_max);
    let e: Vec<f64> = sol.trace.records.iter().map(|r| r.objective).collect();
    let n = e.len();
    assert!(e[n - 6] - e[n - 1] < 1e-6 * e[n - 1].abs().max(1.0));
    assert!(e[n - 7] - e[n - 2] >= 1e-6 * e[n - 2].abs().max(1.0));
}

#[test]
fn late_iterations_use_warm_branch_only() {
    let mut rng = seeded(503);
    let model = random_model(16, 2, &[8], 3);
    let deg = random_degradation(2, 4, &mut rng);
    let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
    let cfg = JpmapConfig {
        energy_rel_tol: 0.0,
        ..quick()
    };
    let sol = jpmap_fast(&ctx, &deg.back_projection(), &cfg).unwrap();
    for (n, rec) in sol.trace.records.iter().skip(1).enumerate() {
        if n >= cfg.n2 {
            assert_eq!(rec.step, Step::WarmGd);
        } else if n >= cfg.n1 {
            assert_ne!(rec.step, Step::Encoder);
        }
    }
}

#[test]
fn splitting_residual_shrinks_stage_over_stage() {
    let mut rng = seeded(504);
    let lv = random_linear(25, 3, &mut rng);
    let model = build_exact_vae(&lv).unwrap();
    let deg = random_degradation(2, 5, &mut rng);
    let cfg = SplittingConfig {
        gd: GdConfig {
            max_iters: 2000,
            ..GdConfig::default()
        },
        ..SplittingConfig::default()
    };
    let sol = mapz_splitting(&model, &deg, &deg.back_projection(), &cfg).unwrap();
    let mut stage_end = Vec::new();
    let recs = &sol.trace.records;
    for (i, r) in recs.iter().enumerate() {
        if i + 1 == recs.len() || recs[i + 1].step == Step::Initial {
            stage_end.push(r.residual);
        }
    }
    assert_eq!(stage_end.len(), 5);
    assert!(stage_end.windows(2).all(|w| w[1] < w[0]), "{stage_end:?}");
    assert!(sol.trace.max_increase() <= 1e-9);
}

// MAP-z of a linear decoder: (VᵀAᵀAV/σ² + I) z = VᵀAᵀ(y − Av)/σ²
fn linear_mapz(lv: &jpmap_core::oracle::LinearVae, deg: &jpmap_core::degrade::Degradation) -> Vec<f64> {
    let (d, l) = (lv.data_dim(), lv.latent_dim());
    let s2 = deg.sigma() * deg.sigma();
    let cols: Vec<Vec<f64>> = (0..l)
        .map(|k| {
            let col: Vec<f64> = (0..d).map(|i| lv.weights()[(i, k)]).collect();
            deg.op().apply(&col).unwrap()
        })
        .collect();
    let mut sys = vec![vec![0.0; l]; l];
    for a in 0..l {
        for b in 0..l {
            sys[a][b] = common::dot(&cols[a], &cols[b]) / s2;
        }
        sys[a][a] += 1.0;
    }
    let av = deg.op().apply(lv.bias()).unwrap();
    let r: Vec<f64> = deg.observation().iter().zip(&av).map(|(y, a)| y - a).collect();
    let rhs: Vec<f64> = cols.iter().map(|c| common::dot(c, &r) / s2).collect();
    gauss_solve(&sys, &rhs)
}

#[test]
fn csgm_started_at_optimum_stays() {
    let mut rng = seeded(505);
    let lv = random_linear(16, 3, &mut rng);
    let model = build_exact_vae(&lv).unwrap();
    let deg = random_degradation(1, 4, &mut rng);
    let z_star = linear_mapz(&lv, &deg);
    let sol = csgm(&model, &deg, &z_star, &LatentConfig::default()).unwrap();
    assert!(common::max_abs_diff(&sol.z, &z_star) < 1e-8);
    // and from elsewhere it gets close
    let far = csgm(&model, &deg, &[1.0, 1.0, 1.0], &LatentConfig { iters: 5000, lr: 0.01 }).unwrap();
    assert!(common::max_abs_diff(&far.z, &z_star) < 1e-3);
}

#[test]
fn mcsgm_keeps_best_restart() {
    let mut rng = seeded(506);
    let model = random_model(16, 3, &[8], 4);
    let deg = random_degradation(2, 4, &mut rng);
    let cfg = LatentConfig { iters: 50, lr: 0.05 };
    let multi = mcsgm(&model, &deg, 10, &cfg, &mut seeded(9)).unwrap();
    let best = mapz_objective(&model, &deg, &multi.z).unwrap();
    let mut member_rng = seeded(9);
    for _ in 0..10 {
        let z0 = normal(&mut member_rng, 3);
        let one = csgm(&model, &deg, &z0, &cfg).unwrap();
        assert!(best <= mapz_objective(&model, &deg, &one.z).unwrap());
    }
}

#[test]
fn pulse_iterates_stay_on_sphere() {
    let mut rng = seeded(507);
    let model = random_model(16, 8, &[8], 5);
    let deg = random_degradation(2, 4, &mut rng);
    let sol = pulse(&model, &deg, &normal(&mut rng, 8), &LatentConfig::default()).unwrap();
    let r = 8f64.sqrt();
    assert_eq!(sol.trace.records.len(), 1001);
    assert!(sol.trace.records.iter().all(|rec| (rec.latent_norm - r).abs() < 1e-10));
    assert!((common::norm(&sol.z) - r).abs() < 1e-10);
}

#[test]
fn linear_projection_matches_least_squares() {
    let mut rng = seeded(508);
    let lv = random_linear(20, 3, &mut rng);
    let model = build_exact_vae(&lv).unwrap();
    let w = normal(&mut rng, 20);
    let vtv = lv.weights().gram();
    let rows: Vec<Vec<f64>> = (0..3).map(|i| vtv.row(i).to_vec()).collect();
    let centered: Vec<f64> = w.iter().zip(lv.bias()).map(|(a, b)| a - b).collect();
    let exact = gauss_solve(&rows, &lv.weights().matvec_t(&centered).unwrap());
    let z = project_to_range(&model, &w, &[0.0; 3], &LatentConfig { iters: 20_000, lr: 0.01 }).unwrap();
    assert!(common::max_abs_diff(&z, &exact) < 1e-5);
}

#[test]
fn pgd_is_stationary_on_consistent_range_point() {
    let mut rng = seeded(509);
    let lv = random_linear(16, 2, &mut rng);
    let model = build_exact_vae(&lv).unwrap();
    let x0 = lv.decode(&[0.4, -0.3]).unwrap();
    let mut deg = random_degradation(1, 4, &mut rng);
    let y = deg.op().apply(&x0).unwrap();
    deg = deg.with_observation(y).unwrap();
    let cfg = PgdConfig {
        iters: 5,
        eta: None,
        projection: LatentConfig { iters: 5000, lr: 0.01 },
    };
    let sol = pgd_gan(&model, &deg, &x0, &cfg).unwrap();
    assert!(common::max_abs_diff(&sol.x, &x0) < 1e-4);
}

#[test]
fn solvers_are_deterministic() {
    let mut rng = seeded(510);
    let model = random_model(16, 3, &[8], 6);
    let deg = random_degradation(3, 4, &mut rng);
    let x0 = deg.back_projection();
    let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
    let ccfg = ContinuationConfig::default_for(16);
    let small = LatentConfig { iters: 100, lr: 0.01 };
    let pcfg = PgdConfig {
        iters: 5,
        ..PgdConfig::default()
    };
    let z0 = ctx.z_step_approx(&x0).unwrap();
    let runs = |_: ()| {
        vec![
            jpmap_exact(&ctx, &x0, 20).unwrap(),
            jpmap_approx(&ctx, &x0, &z0, &quick()).unwrap(),
            jpmap_fast(&ctx, &x0, &quick()).unwrap(),
            jpmap_continuation(&model, &deg, &x0, &ccfg, &quick()).unwrap(),
            csgm(&model, &deg, &[0.3, 0.1, -0.2], &small).unwrap(),
            mcsgm(&model, &deg, 3, &small, &mut seeded(1)).unwrap(),
            pulse(&model, &deg, &[0.3, 0.1, -0.2], &small).unwrap(),
            pgd_gan(&model, &deg, &x0, &pcfg).unwrap(),
        ]
    };
    for (a, b) in runs(()).iter().zip(&runs(())) {
        assert!(a.trace.same_path(&b.trace));
        assert_eq!(a.x, b.x);
        assert_eq!(a.z, b.z);
    }
}

#[test]
fn stationarity_at_termination() {
    let mut rng = seeded(511);
    for kind in 0..5 {
        let lv = random_linear(16, 2, &mut rng);
        let model = build_exact_vae(&lv).unwrap();
        let deg = random_degradation(kind, 4, &mut rng);
        let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
        let cfg = JpmapConfig {
            n1: 0,
            n2: 0,
            ..JpmapConfig::default()
        };
        let sol = jpmap_fast(&ctx, &deg.back_projection(), &cfg).unwrap();
        let last = sol.trace.records.last().unwrap();
        if last.grad_tol_met {
            let gz = ctx.j1_grad_z(&sol.x, &sol.z).unwrap();
            assert!(gz.iter().all(|g| g.abs() <= cfg.gd.grad_tol), "{gz:?}");
        }
        let gx = ctx.j1_grad_x(&sol.x, &sol.z).unwrap();
        let s2 = deg.sigma() * deg.sigma();
        assert!(gx.iter().all(|g| g.abs() <= 1e-6 / s2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn jpmap_family_is_monotone(seed in any::<u64>(), kind in 0usize..5) {
        let mut rng = seeded(seed);
        let model = random_model(16, 2, &[10], seed ^ 0x55);
        let deg = random_degradation(kind, 4, &mut rng);
        let x0 = deg.back_projection();
        let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
        let z0 = ctx.z_step_approx(&x0).unwrap();
        let ccfg = ContinuationConfig {
            max_outer: 6,
            ..ContinuationConfig::default_for(16)
        };
        let scfg = SplittingConfig {
            inner_iters: 8,
            gd: quick().gd,
            ..SplittingConfig::default()
        };
        let sols = [
            jpmap_approx(&ctx, &x0, &z0, &quick()).unwrap(),
            jpmap_fast(&ctx, &x0, &quick()).unwrap(),
            jpmap_continuation(&model, &deg, &x0, &ccfg, &quick()).unwrap(),
            mapz_splitting(&model, &deg, &x0, &scfg).unwrap(),
        ];
        for sol in &sols {
            prop_assert!(sol.trace.max_increase() <= 1e-9, "increase {}", sol.trace.max_increase());
            let beta_floor = sol.trace.records.iter().all(|r| {
                let b = r.beta.unwrap();
                r.objective >= 8.0 * (2.0 * std::f64::consts::PI / b).ln() - 1e-9
            });
            prop_assert!(beta_floor);
        }
    }
}

#[test]
fn continuation_meets_bound_on_linear_model() {
    let mut rng = seeded(512);
    let lv = random_linear(25, 3, &mut rng);
    let model = build_exact_vae(&lv).unwrap();
    let deg = degrade::interpolation(0.5, 25, 0.05, &mut rng).unwrap();
    let mut deg = deg;
    deg.degrade(&lv.decode(&[0.5, 0.2, -0.4]).unwrap(), &mut rng).unwrap();
    let ccfg = ContinuationConfig::for_gray_levels(1.0, 25);
    let sol = jpmap_continuation(&model, &deg, &deg.back_projection(), &ccfg, &quick()).unwrap();
    assert!(sol.converged());
    let gap = common::dist_sq(&model.decode(&sol.z).unwrap(), &sol.x);
    assert!(gap <= ccfg.epsilon);
}
