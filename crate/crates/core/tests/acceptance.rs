//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs as a plain binary so every criterion reports even when an
//! earlier one fails.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use esor_core::bounds::{gamma, p_sum, transfer_l1};
use esor_core::harness::{
    compute_metrics, run_scenario, ControllerKind, Metrics, RunStatus, ScenarioConfig,
    TrajectoryLog,
};
use esor_core::numerics::{characteristic_polynomial, solve_qp, Matrix};
use esor_core::observer::{continuous_gains, discrete_gains, AugmentedSystem};
use esor_core::plants::{
    AccParams, AccPlant, DisturbanceSignal, LeadProfile, Plant, SegwayParams, SegwayPlant,
};
use esor_core::safety::RobustMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run(cfg: &ScenarioConfig) -> Result<(TrajectoryLog, Metrics), String> {
    let log = run_scenario(cfg).map_err(|e| e.to_string())?;
    let m = compute_metrics(&log, cfg.simulation.transient);
    Ok((log, m))
}

fn with_controller(cfg: &ScenarioConfig, c: ControllerKind) -> ScenarioConfig {
    let mut c2 = cfg.clone();
    c2.controller = c;
    c2
}

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Pascal's triangle row `n`, as exact integers.
fn pascal(n: usize) -> Vec<u64> {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![1u64; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    row
}

/// `det(M)` by Gaussian elimination with partial pivoting.
fn det(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))
            .unwrap();
        if m[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        d *= m[c][c];
        for r in c + 1..n {
            let k = m[r][c] / m[c][c];
            for j in c..n {
                m[r][j] -= k * m[c][j];
            }
        }
    }
    d
}

fn c1_acc_containment() -> Outcome {
    let cfg = ScenarioConfig::acc_default();
    let start = Instant::now();
    let (_, m) = run(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    check(
        m.containment_rate >= 0.999 && secs < 60.0,
        format!(
            "containment {:.6} (need >= 0.999), runtime {secs:.2} s (need < 60)",
            m.containment_rate
        ),
    )
}

fn c2_p_sum_closed_forms() -> Outcome {
    let mut worst = 0.0f64;
    for w in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99] {
        let got = p_sum(0, w, 1e-13).map_err(|e| e.to_string())?;
        worst = worst.max((got - 1.0 / (1.0 - w)).abs());
    }
    let mut exact = true;
    for r in 0..=3 {
        exact &= p_sum(r, 0.0, 1e-13).map_err(|e| e.to_string())? == (r + 1) as f64;
    }
    check(
        worst <= 1e-9 && exact,
        format!("r=0 worst error {worst:.3e} (need <= 1e-9), pole 0 gives r+1 exactly: {exact}"),
    )
}

fn c3_gamma_linear_in_period() -> Outcome {
    let mut worst = 0.0f64;
    for r in 0..=4 {
        for w in [0.0, 0.5, 0.9, 0.998, 0.9998] {
            for t in [1e-5, 1e-4, 3e-4, 1e-3, 1e-2] {
                let a = gamma(r, w, 2.0 * t, 1.2566).map_err(|e| e.to_string())?;
                let b = gamma(r, w, t, 1.2566).map_err(|e| e.to_string())?;
                worst = worst.max((a - 2.0 * b).abs() / (2.0 * b).abs());
            }
        }
    }
    check(
        worst <= f64::EPSILON,
        format!(
            "worst relative gap {worst:.3e} (need <= {:.3e})",
            f64::EPSILON
        ),
    )
}

fn c4_l1_oracles() -> Outcome {
    let (mut eg, mut eh) = (0.0f64, 0.0f64);
    for w in [1.0, 20.0, 100.0] {
        let mut a = Matrix::zeros(1, 1);
        a[(0, 0)] = -w;
        let l1 = transfer_l1(&a, &[1.0], 1e-12).map_err(|e| e.to_string())?;
        eg = eg.max((l1.g[0] - 1.0 / w).abs());
        eh = eh.max((l1.h[0] - 2.0).abs());
    }
    check(
        eg <= 1e-6 && eh <= 1e-5,
        format!("1/(s+w) worst error {eg:.3e} (need <= 1e-6), s/(s+w) worst error {eh:.3e} (need <= 1e-5)"),
    )
}

fn c5_characteristic_polynomials() -> Outcome {
    let mut worst_coef = 0.0f64;
    let mut worst_det = 0.0f64;
    let mut record = |m: &Matrix, root: f64| -> Result<(), String> {
        let n = m.rows();
        // (s - root)^n by the binomial theorem
        let want: Vec<f64> = pascal(n)
            .iter()
            .enumerate()
            .map(|(j, &c)| c as f64 * (-root).powi(j as i32))
            .collect();
        let got = characteristic_polynomial(m).map_err(|e| e.to_string())?;
        for (g, w) in got.iter().zip(&want) {
            worst_coef = worst_coef.max((g - w).abs() / w.abs());
        }
        for s in [root + 0.5, root - 1.3, 2.0 * root + 0.7] {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| if i == j { s - m[(i, j)] } else { -m[(i, j)] })
                        .collect()
                })
                .collect();
            // error relative to the magnitude of the terms being summed
            let scale: f64 = want
                .iter()
                .enumerate()
                .map(|(j, c)| c.abs() * s.abs().powi((n - j) as i32))
                .sum();
            worst_det = worst_det.max((det(rows) - (s - root).powi(n as i32)).abs() / scale);
        }
        Ok(())
    };
    for r in 1..=4 {
        for w in [1.0, 20.0, 100.0] {
            let g = continuous_gains(r, w).map_err(|e| e.to_string())?;
            record(&AugmentedSystem::continuous(r).error_dynamics(&g.gains), -w)?;
        }
        for (pole, t) in [
            ((-20.0f64 * 1e-4).exp(), 1e-4),
            ((-20.0f64 * 1e-3).exp(), 1e-3),
            (0.5, 1e-2),
        ] {
            let g = discrete_gains(r, pole, t).map_err(|e| e.to_string())?;
            record(
                &AugmentedSystem::discrete(r, t).error_dynamics(&g.gains),
                pole,
            )?;
        }
    }
    check(
        worst_coef <= 1e-9 && worst_det <= 1e-9,
        format!("worst relative coefficient error {worst_coef:.3e}, determinant cross-check {worst_det:.3e} (need <= 1e-9)"),
    )
}

fn c6_random_qps() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_obj, mut worst_feas) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let p = common::random_qp(&mut rng);
        let sol = solve_qp(&p).map_err(|e| e.to_string())?;
        let oracle = common::oracle_objective(&p).ok_or("oracle found no feasible point")?;
        worst_obj = worst_obj.max((sol.objective - oracle).abs());
        worst_feas = worst_feas.max(p.max_violation(&sol.point));
    }
    check(
        worst_obj <= 1e-6 && worst_feas <= 1e-8,
        format!("worst objective gap {worst_obj:.3e} (need <= 1e-6), worst violation {worst_feas:.3e} (need <= 1e-8)"),
    )
}

fn c7_sufficiency() -> Outcome {
    let mut cfg = ScenarioConfig::acc_default();
    cfg.control.robust_mode = RobustMode::Strict;
    let (_, m) = run(&cfg)?;
    let pole = (-20.0f64 * 1e-4).exp();
    let mut gaps = Vec::new();
    for t in [1e-3, 5e-4, 2e-4, 1e-4] {
        let mut c = cfg.clone();
        c.observer.bound_period = t;
        c.observer.bound_pole = Some(pole);
        gaps.push(run(&c)?.1.mean_sufficiency_gap);
    }
    let monotone = gaps.windows(2).all(|w| w[1] <= 1.05 * w[0]);
    check(
        m.sufficiency_rate >= 0.999 && monotone,
        format!(
            "sufficiency {:.6} (need >= 0.999), mean gap over T = 1e-3, 5e-4, 2e-4, 1e-4: {:.4?} (non-increasing within 5%)",
            m.sufficiency_rate, gaps
        ),
    )
}

fn c8_default_scenarios_safe() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["acc_default.toml", "segway_default.toml"] {
        let cfg = ScenarioConfig::load(&scenario_dir().join(name)).map_err(|e| e.to_string())?;
        let cfg = with_controller(&cfg, ControllerKind::EsorQp);
        let (_, m) = run(&cfg)?;
        let code = RunStatus::from_metrics(&m).exit_code();
        ok &= m.violations == 0 && m.min_h >= 0.0 && code == 0;
        parts.push(format!("{name}: min h {:.4}, exit {code}", m.min_h));
    }
    check(ok, parts.join("; "))
}

fn c9_acc_matches_dob() -> Outcome {
    let cfg = ScenarioConfig::acc_default();
    let (esor, _) = run(&with_controller(&cfg, ControllerKind::EsorQp))?;
    let (dob, _) = run(&with_controller(&cfg, ControllerKind::DobCbfQp))?;
    let max_h = esor.rows.iter().map(|r| r.h).fold(f64::MIN, f64::max);
    let diff = esor
        .rows
        .iter()
        .zip(&dob.rows)
        .map(|(a, b)| (a.h - b.h).abs())
        .fold(0.0, f64::max);
    check(
        diff <= 0.02 * max_h,
        format!(
            "max |h_esor - h_dob| {diff:.4e}, 2% of max h = {:.4e}",
            0.02 * max_h
        ),
    )
}

fn c10_segway_dob_more_conservative() -> Outcome {
    let cfg = ScenarioConfig::segway_default();
    let (_, e) = run(&with_controller(&cfg, ControllerKind::EsorQp))?;
    let (_, d) = run(&with_controller(&cfg, ControllerKind::DobCbfQp))?;
    check(
        d.mean_h > e.mean_h && e.min_h >= 0.0 && d.min_h >= 0.0,
        format!(
            "mean h dob {:.6} vs esor {:.6} (margin {:.3e}), min h dob {:.4} esor {:.4}",
            d.mean_h,
            e.mean_h,
            d.mean_h - e.mean_h,
            d.min_h,
            e.min_h
        ),
    )
}

fn c11_zero_disturbance_matches_true_d() -> Outcome {
    let mut acc = ScenarioConfig::acc_default();
    acc.acc.disturbance = DisturbanceSignal::Zero {};
    let mut seg = ScenarioConfig::segway_default();
    seg.segway.d1 = DisturbanceSignal::Zero {};
    seg.segway.d2 = DisturbanceSignal::Zero {};
    let mut worst = 0.0f64;
    for mut cfg in [acc, seg] {
        cfg.control.zero_bounds = true;
        let (a, _) = run(&with_controller(&cfg, ControllerKind::EsorQp))?;
        let (b, _) = run(&with_controller(&cfg, ControllerKind::TrueDQp))?;
        worst = worst.max(
            a.rows
                .iter()
                .zip(&b.rows)
                .map(|(x, y)| (x.u - y.u).abs())
                .fold(0.0, f64::max),
        );
    }
    check(
        worst <= 1e-6,
        format!("worst control difference {worst:.3e} (need <= 1e-6)"),
    )
}

fn reassembly_error(plant: &dyn Plant, x: &[f64], u: f64, t: f64) -> Result<f64, String> {
    let dx = plant.dynamics(x, u, t).map_err(|e| e.to_string())?;
    let y = plant.measure(x);
    let d = plant.channel_disturbances(t);
    let mut worst = 0.0f64;
    for (ch, di) in plant.observed_channels().iter().zip(&d) {
        let r = ch.relative_degree;
        for j in 0..r - 1 {
            let (got, want) = (dx[ch.state_indices[j]], x[ch.state_indices[j + 1]]);
            worst = worst.max((got - want).abs() / (1.0 + want.abs()));
        }
        let a = if ch.control_index.is_some() {
            ch.a(x, &y).map_err(|e| e.to_string())?
        } else {
            0.0
        };
        let want = ch.b(x, &y) + a * u + di;
        let got = dx[ch.top_index()];
        worst = worst.max((got - want).abs() / (1.0 + want.abs()));
    }
    Ok(worst)
}

fn c12_channel_reassembly() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let d0 = DisturbanceSignal::Sinusoid {
        amplitude: 1.962,
        period: 10.0,
        phase: 0.0,
    };
    let accs: Vec<AccPlant> = [true, false]
        .into_iter()
        .map(|known| {
            AccPlant::new(
                AccParams::default(),
                d0,
                LeadProfile {
                    known,
                    ..LeadProfile::default()
                },
            )
            .unwrap()
        })
        .collect();
    let seg = SegwayPlant::new(
        SegwayParams::default(),
        DisturbanceSignal::Sinusoid {
            amplitude: 2.0,
            period: 10.0,
            phase: 0.0,
        },
        DisturbanceSignal::Sinusoid {
            amplitude: 2.0,
            period: 10.0,
            phase: std::f64::consts::FRAC_PI_2,
        },
    )
    .unwrap();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let t = rng.gen_range(0.0..30.0);
        let x = [rng.gen_range(0.0..40.0), rng.gen_range(0.0..200.0)];
        let u = rng.gen_range(-5000.0..5000.0);
        for p in &accs {
            worst = worst.max(reassembly_error(p, &x, u, t)?);
        }
        let xs = [
            rng.gen_range(-3.0..5.0),
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        ];
        worst = worst.max(reassembly_error(&seg, &xs, rng.gen_range(-20.0..20.0), t)?);
    }
    check(
        worst <= 1e-12,
        format!("worst relative mismatch {worst:.3e} over 1000 states (need <= 1e-12)"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("acc containment", c1_acc_containment),
        ("p_sum closed forms", c2_p_sum_closed_forms),
        ("gamma linear in period", c3_gamma_linear_in_period),
        ("L1 oracles", c4_l1_oracles),
        (
            "observer characteristic polynomials",
            c5_characteristic_polynomials,
        ),
        ("random QPs against oracle", c6_random_qps),
        ("sufficiency of the bound", c7_sufficiency),
        ("default scenarios stay safe", c8_default_scenarios_safe),
        ("acc ESOR matches DOB", c9_acc_matches_dob),
        (
            "segway DOB more conservative",
            c10_segway_dob_more_conservative,
        ),
        (
            "zero disturbance matches true-d QP",
            c11_zero_disturbance_matches_true_d,
        ),
        ("channel reassembly", c12_channel_reassembly),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
