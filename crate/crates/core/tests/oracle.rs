mod common;

use common::{gauss_solve, normal, random_degradation, random_linear};
use jpmap_core::degrade::{self, Degradation};
use jpmap_core::energy::{Beta, EnergyCtx};
use jpmap_core::oracle::{analytic_joint_map, build_exact_vae, linear_posterior, LinearVae};
use jpmap_core::rng::seeded;
use jpmap_core::solvers::jpmap_exact;
use jpmap_core::Matrix;
use proptest::prelude::*;

fn invert(m: &Matrix) -> Vec<Vec<f64>> {
    let n = m.rows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            gauss_solve(&rows, &e)
        })
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

fn log_det(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    let mut det = 0.0;
    for c in 0..n {
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
        det += a[c][c].ln();
    }
    det
}

#[test]
fn posterior_is_proportional_to_joint_density() {
    let mut rng = seeded(400);
    let lv = LinearVae::random(12, 3, 0.3, &mut rng).unwrap();
    let x = normal(&mut rng, 12);
    let post = linear_posterior(&lv, &x).unwrap();
    let prec = invert(&post.cov);
    let ld = log_det(&post.cov);
    let mut ratios = Vec::new();
    for a in -3..=3 {
        for b in -3..=3 {
            for c in -3..=3 {
                let z = [a as f64 * 0.5, b as f64 * 0.5, c as f64 * 0.5];
                let dz: Vec<f64> = z.iter().zip(&post.mean).map(|(p, q)| p - q).collect();
                let quad: f64 = (0..3).map(|i| (0..3).map(|j| dz[i] * prec[i][j] * dz[j]).sum::<f64>()).sum();
                let log_post = -0.5 * (quad + ld + 3.0 * (2.0 * std::f64::consts::PI).ln());
                let mean = lv.decode(&z).unwrap();
                let log_lik: f64 = x
                    .iter()
                    .zip(&mean)
                    .map(|(xi, mi)| -0.5 * ((2.0 * std::f64::consts::PI * 0.3).ln() + (xi - mi).powi(2) / 0.3))
                    .sum();
                let log_prior = -0.5 * (common::dot(&z, &z) + 3.0 * (2.0 * std::f64::consts::PI).ln());
                ratios.push(log_post - log_lik - log_prior);
            }
        }
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo < 1e-8, "log-ratio spread {}", hi - lo);
}

#[test]
fn tiny_noise_denoising_recovers_observation() {
    let mut rng = seeded(401);
    let lv = LinearVae::random(10, 2, 0.2, &mut rng).unwrap();
    let z0 = [0.8, -0.5];
    let x_obs = lv.decode(&z0).unwrap();
    let deg = degrade::denoising(10, 1e-6).unwrap().with_observation(x_obs.clone()).unwrap();
    let (x, z) = analytic_joint_map(&lv, &deg).unwrap();
    assert!(common::max_abs_diff(&x, &x_obs) < 1e-9);
    // z* = M Vᵀ V z0
    let m = lv.shrinkage();
    let vtv = lv.weights().gram();
    let shrunk = m.matvec(&vtv.matvec(&z0).unwrap()).unwrap();
    assert!(common::max_abs_diff(&z, &shrunk) < 1e-8);
}

#[test]
fn joint_map_agrees_with_grid_search() {
    let mut rng = seeded(402);
    let lv = LinearVae::random(8, 2, 0.25, &mut rng).unwrap();
    let keep = vec![true, false, true, true, false, true, false, true];
    let deg = Degradation::new(jpmap_core::LinOp::Mask { keep }, 0.15)
        .unwrap()
        .with_observation(normal(&mut rng, 8))
        .unwrap();
    let (_, z_star) = analytic_joint_map(&lv, &deg).unwrap();
    let model = build_exact_vae(&lv).unwrap();
    let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
    // profile J1 over z on a grid, minimizing x exactly for each z
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    let step = 0.01;
    for a in -300..=300 {
        for b in -300..=300 {
            let z = [a as f64 * step, b as f64 * step];
            if (z[0] - z_star[0]).abs() > 0.5 || (z[1] - z_star[1]).abs() > 0.5 {
                continue;
            }
            let x = ctx.x_step(&z).unwrap();
            let e = ctx.j1(&x, &z).unwrap();
            if e < best.0 {
                best = (e, z);
            }
        }
    }
    assert!((best.1[0] - z_star[0]).abs() <= step && (best.1[1] - z_star[1]).abs() <= step);
}

#[test]
fn joint_map_beats_random_perturbations() {
    let mut rng = seeded(403);
    let lv = LinearVae::random(16, 3, 0.2, &mut rng).unwrap();
    let deg = random_degradation(1, 4, &mut rng);
    let (x, z) = analytic_joint_map(&lv, &deg).unwrap();
    let model = build_exact_vae(&lv).unwrap();
    let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
    let base = ctx.j1(&x, &z).unwrap();
    for i in 0..10_000 {
        let scale = 10f64.powi(-(i % 4) - 1);
        let dx = normal(&mut rng, 16);
        let dz = normal(&mut rng, 3);
        let xp: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + scale * b).collect();
        let zp: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + scale * b).collect();
        assert!(ctx.j1(&xp, &zp).unwrap() >= base);
    }
}

#[test]
fn zero_weights_give_decoupled_answer() {
    let lv = LinearVae::new(Matrix::zeros(6, 2), vec![0.4; 6], 0.5).unwrap();
    let deg = degrade::denoising(6, 0.5).unwrap().with_observation(vec![1.0; 6]).unwrap();
    let (x, z) = analytic_joint_map(&lv, &deg).unwrap();
    assert!(z.iter().all(|v| v.abs() < 1e-15));
    // (y/σ² + βv)/(1/σ² + β), σ² = 0.25, β = 2
    assert!(x.iter().all(|v| (v - (4.0 + 0.8) / 6.0).abs() < 1e-14));
}

#[test]
fn encode_decode_round_trip_applies_shrinkage() {
    let mut rng = seeded(404);
    let lv = LinearVae::random(9, 3, 0.4, &mut rng).unwrap();
    let model = build_exact_vae(&lv).unwrap();
    let m = lv.shrinkage();
    let vtv = lv.weights().gram();
    for _ in 0..10 {
        let z = normal(&mut rng, 3);
        let back = model.encoder_mean(&model.decode(&z).unwrap()).unwrap();
        let expect = m.matvec(&vtv.matvec(&z).unwrap()).unwrap();
        assert!(common::max_abs_diff(&back, &expect) < 1e-12);
    }
}

#[test]
fn vanishing_variance_gives_pseudo_inverse() {
    let mut rng = seeded(405);
    let lv = LinearVae::random(9, 3, 1e-8, &mut rng).unwrap();
    let model = build_exact_vae(&lv).unwrap();
    // V⁺ = (VᵀV)⁻¹Vᵀ by elimination
    let vtv = lv.weights().gram();
    let rows: Vec<Vec<f64>> = (0..3).map(|i| vtv.row(i).to_vec()).collect();
    for _ in 0..10 {
        let w = normal(&mut rng, 9);
        let centered: Vec<f64> = w.iter().zip(lv.bias()).map(|(a, b)| a - b).collect();
        let pinv = gauss_solve(&rows, &lv.weights().matvec_t(&centered).unwrap());
        assert!(common::max_abs_diff(&model.encoder_mean(&w).unwrap(), &pinv) < 1e-6);
        let z = normal(&mut rng, 3);
        let back = model.encoder_mean(&model.decode(&z).unwrap()).unwrap();
        assert!(common::max_abs_diff(&back, &z) < 1e-6);
    }
}

#[test]
fn exact_vae_encoder_equals_posterior_mean() {
    let mut rng = seeded(406);
    for _ in 0..10 {
        let lv = random_linear(20, 4, &mut rng);
        let model = build_exact_vae(&lv).unwrap();
        let x = normal(&mut rng, 20);
        let mean = linear_posterior(&lv, &x).unwrap().mean;
        assert!(common::max_abs_diff(&model.encoder_mean(&x).unwrap(), &mean) < 1e-12);
    }
}

#[test]
fn exact_solver_stays_at_joint_map() {
    let mut rng = seeded(407);
    let lv = random_linear(16, 3, &mut rng);
    let deg = random_degradation(2, 4, &mut rng);
    let (x, _) = analytic_joint_map(&lv, &deg).unwrap();
    let model = build_exact_vae(&lv).unwrap();
    let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
    let sol = jpmap_exact(&ctx, &x, 5).unwrap();
    assert!(common::max_abs_diff(&sol.x, &x) < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn exact_solver_converges_to_joint_map(seed in any::<u64>(), kind in 0usize..5, l in 1usize..=5) {
        let mut rng = seeded(seed);
        let side = 6;
        let lv = random_linear(side * side, l, &mut rng);
        let deg = random_degradation(kind, side, &mut rng);
        let (x_star, z_star) = analytic_joint_map(&lv, &deg).unwrap();
        let model = build_exact_vae(&lv).unwrap();
        let ctx = EnergyCtx::new(&model, &deg, Beta::Native).unwrap();
        let sol = jpmap_exact(&ctx, &deg.back_projection(), 200).unwrap();
        prop_assert!(sol.trace.iterations <= 200);
        prop_assert!(common::rel_err(&sol.x, &x_star) < 1e-6, "x rel err {}", common::rel_err(&sol.x, &x_star));
        prop_assert!(common::rel_err(&sol.z, &z_star) < 1e-6 || common::max_abs_diff(&sol.z, &z_star) < 1e-9);
    }
}
