mod common;

use common::*;
use rayon::prelude::*;
use slowfast_core::*;

#[test]
fn fast_mode_tracks_averaged_mean() {
    let cfg = system("linear_ou", &[], 16, 1e-2, 1.0, 1e-3);
    let gamma = 0.5;
    let f = StreamFactory::new(101);
    let diffs: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|r| {
            let traj = integrate_full(&cfg, f.pair(0, r)).unwrap();
            let tail: Vec<f64> = traj
                .iter()
                .filter(|s| s.time >= 0.5 - 1e-12)
                .map(|s| s.fast.coeffs()[0] - s.slow.position.coeffs()[0] / (1.0 + gamma))
                .collect();
            mean(&tail)
        })
        .collect();
    let (m, se) = stats::mean_stderr(&diffs);
    assert!(m.abs() <= 3.0 * se, "mean offset {m} stderr {se}");
}

#[test]
fn time_regularity_is_quadratic() {
    let h = [0.02, 0.04, 0.08];
    for name in ["linear_ou", "bounded_nonlinear"] {
        for eps in [1e-1, 1e-2] {
            let cfg = system(name, &[], 16, eps, 0.58, 1e-3);
            let f = StreamFactory::new(102);
            let rows: Vec<Vec<f64>> = (0..128u64)
                .into_par_iter()
                .map(|r| {
                    let traj = integrate_full(&cfg, f.pair(0, r)).unwrap();
                    let base = &traj[500].slow.position;
                    [20, 40, 80].iter().map(|s| traj[500 + s].slow.position.sub(base).unwrap().norm().powi(2)).collect()
                })
                .collect();
            let pts: Vec<(f64, f64)> = h
                .iter()
                .enumerate()
                .map(|(i, hi)| (*hi, mean(&rows.iter().map(|r| r[i]).collect::<Vec<_>>())))
                .collect();
            let slope = stats::fit_loglog_slope(&pts, None).unwrap().slope;
            assert!((1.7..=2.3).contains(&slope), "{name} eps {eps}: slope {slope}");
        }
    }
}

/// Time averages over the grid of `E‖Y − Ŷ‖²`, `E‖X − X̂‖₁²` and `E‖Ẋ − X̂̇‖²`.
fn auxiliary_gaps(cfg: &SystemConfig, delta: f64, replicas: u64) -> (f64, f64, f64) {
    let f = StreamFactory::new(103);
    let rows: Vec<(f64, f64, f64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let run = integrate_auxiliary(cfg, delta, f.pair(0, r)).unwrap();
            let n = run.full.len() as f64;
            run.full.iter().zip(&run.auxiliary).fold((0.0, 0.0, 0.0), |(y, x, v), (a, b)| {
                let dy = a.fast.sub(&b.fast).unwrap().norm().powi(2);
                let dx = a.slow.position.sub(&b.slow.position).unwrap().sobolev_norm(1.0).powi(2);
                let dv = a.slow.velocity.sub(&b.slow.velocity).unwrap().norm().powi(2);
                (y + dy / n, x + dx / n, v + dv / n)
            })
        })
        .collect();
    let col = |i: usize| mean(&rows.iter().map(|r| [r.0, r.1, r.2][i]).collect::<Vec<_>>());
    (col(0), col(1), col(2))
}

#[test]
fn auxiliary_gap_scales_with_delta_squared() {
    for name in ["linear_ou", "bounded_nonlinear"] {
        let cfg = system(name, &[], 16, 1e-2, 1.0, 1e-3);
        let deltas = [0.02, 0.04, 0.08];
        let gaps: Vec<(f64, f64, f64)> = deltas.iter().map(|d| auxiliary_gaps(&cfg, *d, 64)).collect();
        let slope = |i: usize| {
            let pts: Vec<(f64, f64)> = deltas.iter().zip(&gaps).map(|(d, g)| (*d, [g.0, g.1, g.2][i])).collect();
            stats::fit_loglog_slope(&pts, None).unwrap().slope
        };
        for (i, what) in ["fast", "position", "velocity"].iter().enumerate() {
            let s = slope(i);
            assert!((1.6..=2.4).contains(&s), "{name}: {what} gap slope {s}");
        }
    }
}

#[test]
fn finer_blocks_give_smaller_fast_gap() {
    let cfg = system("bounded_nonlinear", &[], 8, 1e-2, 0.5, 1e-3);
    let f = StreamFactory::new(104);
    let gap = |delta: f64| {
        let run = integrate_auxiliary(&cfg, delta, f.pair(0, 0)).unwrap();
        let (a, b) = (run.full.last().unwrap(), run.auxiliary.last().unwrap());
        a.fast.sub(&b.fast).unwrap().norm()
    };
    assert_eq!(gap(cfg.dt), 0.0);
    let (coarse, fine) = (gap(8.0 * cfg.dt), gap(2.0 * cfg.dt));
    assert!(fine < coarse, "{fine} vs {coarse}");
}

fn residuals(name: &str, dt_coarse: f64, refine: u32) -> EnergyResiduals {
    let mut cfg = system(name, &[], 8, 0.1, 1.0, dt_coarse / refine as f64);
    cfg.scheme.record_energy = true;
    let (w1, w2) = StreamFactory::new(105).pair(0, 0);
    // every run sees the Brownian path sampled at the finest step
    let fine = 8 / refine;
    let mut p1 = BrownianPath::refined(w1, fine);
    let mut p2 = BrownianPath::refined(w2, fine);
    let traj = integrate_full_paths(&cfg, &mut p1, &mut p2).unwrap();
    energy_residual(&traj, &cfg).unwrap()
}

#[test]
fn energy_residual_is_first_order() {
    for name in ["linear_ou", "bounded_nonlinear"] {
        let r: Vec<EnergyResiduals> = [1, 2, 4, 8].iter().map(|k| residuals(name, 0.01, *k)).collect();
        for w in r.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            assert!(a.max_slow() >= 1.5 * b.max_slow(), "{name} slow {} -> {}", a.max_slow(), b.max_slow());
            assert!(a.max_fast() >= 1.5 * b.max_fast(), "{name} fast {} -> {}", a.max_fast(), b.max_fast());
        }
        for s in r.iter().flat_map(|x| x.slow.iter().chain(&x.fast)) {
            assert!(s.is_finite());
        }
    }
}

#[test]
fn fast_energy_stays_nonnegative() {
    let mut cfg = system("bounded_nonlinear", &[], 8, 0.05, 1.0, 0.005);
    cfg.scheme.record_energy = true;
    let traj = integrate_full(&cfg, StreamFactory::new(106).pair(0, 0)).unwrap();
    let r = energy_residual(&traj, &cfg).unwrap();
    assert!(traj.iter().all(|s| s.fast.norm() >= 0.0));
    assert!(r.fast.iter().all(|v| v.is_finite()));
}

#[test]
fn a_priori_energy_bound() {
    for name in ["linear_ou", "bounded_nonlinear"] {
        for k in [4, 6, 8] {
            let eps = 0.5f64.powi(k);
            let cfg = system(name, &[], 16, eps, 1.0, eps / 10.0);
            let f = StreamFactory::new(107);
            let runs: Vec<Vec<(f64, f64)>> = (0..64u64)
                .into_par_iter()
                .map(|r| {
                    integrate_full(&cfg, f.pair(k as u64, r))
                        .unwrap()
                        .iter()
                        .map(|s| (s.slow.energy(), s.fast.norm().powi(2)))
                        .collect()
                })
                .collect();
            let initial = cfg.initial.position.sobolev_norm(1.0).powi(2);
            for t in 0..runs[0].len() {
                let slow = mean(&runs.iter().map(|r| r[t].0).collect::<Vec<_>>());
                let fast = mean(&runs.iter().map(|r| r[t].1).collect::<Vec<_>>());
                assert!(slow < 10.0 * initial && fast < 10.0 * initial, "{name} eps {eps}: {slow} {fast}");
            }
        }
    }
}

#[test]
fn noiseless_fast_mode_follows_slow_state() {
    // quasi-static limit: with b = 0 the fast mode sits at x_k/(α_k+γ) up to O(ε)
    let cfg = system("linear_ou", &[("sigma1", 0.0), ("sigma2", 0.0)], 4, 1e-5, 0.5, 1e-3);
    let traj = integrate_full(&cfg, StreamFactory::new(108).pair(0, 0)).unwrap();
    let last = traj.last().unwrap();
    for k in 0..4 {
        let alpha = ((k + 1) * (k + 1)) as f64;
        let target = last.slow.position.coeffs()[k] / (alpha + 0.5);
        assert!((last.fast.coeffs()[k] - target).abs() < 1e-3, "mode {k}");
    }
}

#[test]
fn exact_variance_mode_matches_convolution_variance() {
    let mut cfg = system("linear_ou", &[("sigma1", 1.0)], 4, 0.1, 0.5, 0.5);
    cfg.initial = InitialData::zero(&cfg.basis);
    cfg.scheme.exact_variance = true;
    let f = StreamFactory::new(109);
    let samples: Vec<(f64, f64)> = (0..20_000u64)
        .into_par_iter()
        .map(|r| {
            let traj = integrate_full(&cfg, f.pair(0, r)).unwrap();
            let s = &traj.last().unwrap().slow;
            (s.position.coeffs()[2], s.velocity.coeffs()[2])
        })
        .collect();
    // mode 3: ω = 3, λ = 1/9; Y₀ = 0 and f = y adds a small drift contribution
    let (w, dt, lambda) = (3.0f64, 0.5f64, 1.0 / 9.0);
    let vx = lambda * (dt / 2.0 - (2.0 * w * dt).sin() / (4.0 * w)) / (w * w);
    let vv = lambda * (dt / 2.0 + (2.0 * w * dt).sin() / (4.0 * w));
    let mx = mean(&samples.iter().map(|s| s.0 * s.0).collect::<Vec<_>>());
    let mv = mean(&samples.iter().map(|s| s.1 * s.1).collect::<Vec<_>>());
    assert!((mx / vx - 1.0).abs() < 0.05, "{mx} vs {vx}");
    assert!((mv / vv - 1.0).abs() < 0.05, "{mv} vs {vv}");
}

#[test]
fn runs_are_deterministic_and_schedule_independent() {
    let cfg = system("bounded_nonlinear", &[], 8, 0.05, 0.2, 0.005);
    let f = StreamFactory::new(110);
    let serial: Vec<_> = (0..8u64).map(|r| integrate_full(&cfg, f.pair(0, r)).unwrap()).collect();
    let parallel: Vec<_> = (0..8u64).into_par_iter().map(|r| integrate_full(&cfg, f.pair(0, r)).unwrap()).collect();
    assert_eq!(serial, parallel);
    assert_ne!(serial[0], serial[1]);
}
