//! Acceptance criteria. Each criterion prints one `PASS`/`FAIL` line with the
//! measured quantities; the process fails if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use phi_ldp::action::objective_and_gradient;
use phi_ldp::lab::condition2::condition2_experiment;
use phi_ldp::lab::config::LabConfig;
use phi_ldp::lab::curve::{event_problem, ldp_curve, CurveOptions};
use phi_ldp::lab::events::{EventSpec, Model};
use phi_ldp::lab::parallel::Runner;
use phi_ldp::lab::regime::numeric_regime;
use phi_ldp::lab::stats::normal_tail;
use phi_ldp::noise::levels::{MomentNorm, Resolution, Spectrum};
use phi_ldp::noise::rng::purpose;
use phi_ldp::noise::scaling::{moment_scaling_experiment, ScalingConfig, ScalingTable, SupMode};
use phi_ldp::noise::OuFactors;
use phi_ldp::nonlinearity::{dissipativity_gap, DissipativityGap};
use phi_ldp::spectral::build_basis;
use phi_ldp::{
    classify_regime, control_cost, evaluate_action, minimize_action, solve_skeleton, ActionProblem, Control,
    DriftOperator, GridField, MinimizerOptions, NoiseModel, NoiseParams, PolynomialDrift, RngStream,
    ScalingFamily, SpectralBasis, SpectralField, StreamId, TimeGrid,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64, block: u8) -> RngStream {
    RngStream::new(seed, StreamId::new(0, block, purpose::TEST_DIRECTIONS))
}

fn dissipativity() -> Outcome {
    let mut violations = 0usize;
    let mut checked = (0usize, 0usize);
    for n in 1..=3u32 {
        let mut r = rng(100 + n as u64, 0);
        for _ in 0..10_000 {
            let drift = PolynomialDrift::new(n, r.random_range(0.0..2.0), r.random_range(-1.0..1.0)).unwrap();
            assert_eq!(drift.dissipativity_constant(), 2f64.powi(-2 * n as i32));
            let scale = 10f64.powf(r.random_range(-2.0..1.0));
            let (x, y) = (scale * r.normal(), scale * r.normal());
            let dxy = x - y;
            let (fx, fy) = (drift.f(x), drift.f(y));
            let gap = DissipativityGap {
                lhs: (fx - fy) * dxy,
                rhs: -drift.dissipativity_constant() * dxy.abs().powi(2 * n as i32 + 2)
                    + drift.lambda1 * dxy * dxy,
                rounding: (fx.abs() + fy.abs()) * dxy.abs(),
            };
            violations += usize::from(!gap.holds());
            checked.0 += 1;
        }
        let bases: Vec<Arc<SpectralBasis>> =
            vec![build_basis(1, PI, 32).unwrap(), build_basis(2, PI, 12).unwrap(), build_basis(3, 2.0, 6).unwrap()];
        for i in 0..1000 {
            let b = &bases[i % 3];
            let drift = PolynomialDrift::new(n, r.random_range(0.0..2.0), r.random_range(-1.0..1.0)).unwrap();
            let scale = 10f64.powf(r.random_range(-2.0..1.0));
            let mut field = || GridField::new(b, (0..b.len()).map(|_| scale * r.normal()).collect()).unwrap();
            let (x, y) = (field(), field());
            violations += usize::from(!dissipativity_gap(&x, &y, &drift).unwrap().holds());
            checked.1 += 1;
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations over {} scalar and {} field pairs", checked.0, checked.1),
    )
}

fn scaling_table(spectrum: Spectrum, norm: MomentNorm, sup: SupMode, tune: impl Fn(&mut ScalingConfig)) -> ScalingTable {
    let deltas = (3..=8).map(|j| 0.5f64.powi(j)).collect();
    let mut c = ScalingConfig::new(spectrum, 0.75, deltas);
    c.norm = norm;
    c.sup_mode = sup;
    c.seed = 7;
    tune(&mut c);
    moment_scaling_experiment(&c, &Runner::from_env()).unwrap()
}

fn box_spectrum(d: usize) -> Spectrum {
    Spectrum::Box {
        d,
        length: 8.0 * PI,
        resolution: Resolution::default(),
    }
}

fn oracle_z(t: &ScalingTable) -> f64 {
    t.rows
        .iter()
        .map(|r| ((r.estimate - r.exact.unwrap()) / r.stderr).abs())
        .fold(0.0, f64::max)
}

fn noise_scaling() -> Outcome {
    let d3 = scaling_table(box_spectrum(3), MomentNorm::L2, SupMode::SupOfMean, |_| {});
    let d2 = scaling_table(box_spectrum(2), MomentNorm::L2, SupMode::SupOfMean, |_| {});
    let syn = scaling_table(
        Spectrum::Synthetic {
            d: 2,
            alpha_exponent: 1.0,
            resolution: Resolution::default(),
        },
        MomentNorm::L2,
        SupMode::SupOfMean,
        |_| {},
    );
    let z = oracle_z(&d3).max(oracle_z(&d2)).max(oracle_z(&syn));
    let pass = (d3.power_fit.slope + 1.0).abs() <= 0.15
        && d2.log_fit.r_squared >= 0.98
        && (syn.power_fit.slope + 1.0).abs() <= 0.15
        && z <= 2.0;
    outcome(
        pass,
        format!(
            "d=3 slope {:.3}; d=2 log-linear R^2 {:.4}; synthetic slope {:.3}; max |MC - exact| {z:.2} se",
            d3.power_fit.slope, d2.log_fit.r_squared, syn.power_fit.slope
        ),
    )
}

fn negative_norm_bound() -> Outcome {
    let tune = |c: &mut ScalingConfig| {
        c.output_times = SUP_OUTPUT_TIMES;
        c.sampled_levels = SUP_SAMPLED_LEVELS;
    };
    let s1 = scaling_table(box_spectrum(3), MomentNorm::Hneg(1.0), SupMode::MeanOfSup, tune);
    let s14 = scaling_table(box_spectrum(3), MomentNorm::Hneg(0.25), SupMode::MeanOfSup, tune);
    let pass = s1.power_fit.slope >= -0.1 && (s14.power_fit.slope + 0.5).abs() <= 0.15;
    outcome(
        pass,
        format!(
            "s=1 slope {:.3} (E sup {:.1} .. {:.1}); s=0.25 slope {:.3}",
            s1.power_fit.slope,
            s1.rows[0].estimate,
            s1.rows.last().unwrap().estimate,
            s14.power_fit.slope
        ),
    )
}

const SUP_OUTPUT_TIMES: usize = 16;
const SUP_SAMPLED_LEVELS: usize = 4096;

fn smooth_control(b: &Arc<SpectralBasis>, g: &TimeGrid, r: &mut RngStream, modes: usize) -> Control {
    let coef: Vec<[f64; 3]> = (0..modes).map(|_| [r.normal(), r.normal(), r.normal()]).collect();
    let phase: f64 = r.random_range(0.0..2.0 * PI);
    Control::from_fn(b, g, |t| {
        let mut v = vec![0.0; b.len()];
        for (k, c) in coef.iter().enumerate() {
            v[k] = (c[0] + c[1] * (PI * t + phase).cos() + c[2] * (2.0 * PI * t).sin()) / (1.0 + k as f64);
        }
        v
    })
    .unwrap()
}

fn low_mode_state(b: &Arc<SpectralBasis>, r: &mut RngStream) -> SpectralField {
    let mut x = SpectralField::zeros(b);
    for k in 0..3 {
        x.coeffs_mut()[k] = 0.5 * r.normal() / (1.0 + k as f64);
    }
    x
}

fn action_identity() -> Outcome {
    let b = build_basis(1, PI, 16).unwrap();
    let drift = DriftOperator::new(&b, PolynomialDrift::new(1, 1.0, 0.0).unwrap(), true).unwrap();
    let mut r = rng(4, 0);
    let (mut worst, mut worst_ratio) = (0.0f64, f64::INFINITY);
    for _ in 0..20 {
        let x = low_mode_state(&b, &mut r);
        let seed: u64 = r.random();
        let mut errs = [0.0; 2];
        for (i, dt) in [1.0 / 512.0, 1.0 / 1024.0].into_iter().enumerate() {
            let g = TimeGrid::new(1.0, dt).unwrap();
            let phi = smooth_control(&b, &g, &mut rng(seed, 1), 4);
            let u = solve_skeleton(&x, &phi, &drift, &g).unwrap();
            let cost = control_cost(&phi);
            errs[i] = (evaluate_action(&u, &drift).unwrap() - cost).abs() / cost;
        }
        worst = worst.max(errs[0]);
        worst_ratio = worst_ratio.min(errs[0] / errs[1]);
    }
    outcome(
        worst <= 0.01 && worst_ratio >= 1.8,
        format!("max relative error {worst:.2e} at dt=1/512; min error ratio on halving dt {worst_ratio:.2}"),
    )
}

fn adjoint_gradient_check() -> Outcome {
    let b = build_basis(1, PI, 8).unwrap();
    let g = TimeGrid::new(1.0, 1.0 / 128.0).unwrap();
    let noise = NoiseModel::new(&b, NoiseParams::new(0.2, 1.0).unwrap()).unwrap();
    let mut r = rng(5, 0);
    let mut worst = 0.0f64;
    for n in 1..=2u32 {
        let drift = DriftOperator::new(&b, PolynomialDrift::new(n, 1.0, 0.1).unwrap(), true).unwrap();
        let target = low_mode_state(&b, &mut r);
        let p = ActionProblem::new(low_mode_state(&b, &mut r), drift, g, target, 1e-3, 10.0)
            .unwrap()
            .with_noise(&noise)
            .unwrap();
        let phi = smooth_control(&b, &g, &mut r, 4);
        let (_, grad, _) = objective_and_gradient(&p, &phi).unwrap();
        for _ in 0..20 {
            let v = smooth_control(&b, &g, &mut r, 8);
            let analytic: f64 = grad
                .values()
                .iter()
                .zip(v.values())
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
                .sum::<f64>()
                * g.dt();
            let h = 1e-5;
            let shifted = |s: f64| {
                let vals = phi
                    .values()
                    .iter()
                    .zip(v.values())
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
                    .collect();
                objective_and_gradient(&p, &Control::new(&b, g.dt(), vals).unwrap()).unwrap().0
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            worst = worst.max((fd - analytic).abs() / analytic.abs());
        }
    }
    outcome(worst <= 1e-4, format!("max relative error {worst:.2e} over 40 directions"))
}

fn linear_model(beta: f64) -> Model {
    let b = build_basis(1, PI, 2).unwrap();
    let grid = TimeGrid::new(1.0, 1.0 / 256.0).unwrap();
    Model::new(DriftOperator::disabled(&b), beta, grid, SpectralField::zeros(&b)).unwrap()
}

/// Minimum of `1/2 dt sum |phi_j|^2` subject to hitting `level` exactly with
/// the discrete single-mode recursion.
fn discrete_oracle(lambda: f64, grid: &TimeGrid, level: f64) -> f64 {
    let f = OuFactors::new(1.0, grid.dt());
    let n = grid.steps();
    let a2: f64 = (0..n).map(|j| (lambda * f.gain * f.decay.powi((n - 1 - j) as i32)).powi(2)).sum();
    0.5 * grid.dt() * level * level / a2
}

fn linear_ldp() -> Outcome {
    let (r0, alpha) = (1.0, 1.0);
    let model = linear_model(1.0);
    let family = ScalingFamily::new(2.0, 1, 0.0).unwrap();
    let eps_grid = [0.2, 0.1, 0.05];
    let event = EventSpec::terminal_projection(0, r0);
    let closed = |lambda: f64| r0 * r0 * alpha / (lambda * lambda * (1.0 - (-2.0 * alpha).exp()));
    let mut instanton_err = 0.0f64;
    let mut oracle_err = 0.0f64;
    for &eps in &eps_grid {
        let noise = model.noise(family.delta(eps)).unwrap();
        let lambda = noise.amplitudes()[0];
        let p = event_problem(&event, &model, &noise, 1.0, 1e-4).unwrap().unwrap();
        let i_star = minimize_action(&p, &p.zero_control(), &MinimizerOptions::default()).unwrap().action_value;
        instanton_err = instanton_err.max((i_star / closed(lambda) - 1.0).abs());
        oracle_err = oracle_err.max((i_star / discrete_oracle(lambda, &model.grid, r0) - 1.0).abs());
    }
    let curve = ldp_curve(
        &event,
        &eps_grid,
        &family,
        &model,
        10_000,
        6,
        &Runner::from_env(),
        &CurveOptions::default(),
    )
    .unwrap();
    let last = curve.rows.last().unwrap();
    let lambda = model.noise(last.delta).unwrap().amplitudes()[0];
    let i_exact = closed(lambda);
    let sigma = (last.eps * lambda * lambda * (1.0 - (-2.0 * alpha).exp()) / (2.0 * alpha)).sqrt();
    let p_exact = normal_tail(r0 / sigma);
    let gap = last.rate.map(|rate| (rate - i_exact).abs() / i_exact);
    let feasible = curve
        .smallest_feasible()
        .map_or("none".to_string(), |r| format!("eps={} ({} hits)", r.eps, r.hits));
    let pass = instanton_err <= 0.005 && oracle_err <= 1e-3 && gap.is_some_and(|g| g <= 0.15);
    outcome(
        pass,
        format!(
            "I* vs closed form {:.2e}, vs discrete oracle {:.2e}; eps={}: {} hits in {} (exact p {p_exact:.2e}), gap {}; smallest feasible {feasible}",
            instanton_err,
            oracle_err,
            last.eps,
            last.hits,
            last.reps,
            gap.map_or("undefined (censored)".to_string(), |g| format!("{g:.3}"))
        ),
    )
}

fn regime_classifier() -> Outcome {
    let mut disagreements = 0;
    let mut total = 0;
    for d in [2, 3] {
        for alpha in [0.0, 1.0] {
            for i in 1..=30 {
                let family = ScalingFamily::new(i as f64 / 10.0, d, alpha).unwrap();
                let a = classify_regime(&family, None);
                let b = numeric_regime(&family, None);
                disagreements += usize::from(a.holds_rd46 != b.holds_rd46);
                total += 1;
            }
        }
    }
    outcome(disagreements == 0, format!("{disagreements} disagreements over {total} families"))
}

fn condition2() -> Outcome {
    let mut config = LabConfig::default();
    config.drift.enabled = true;
    config.drift.n = 1;
    config.experiment.a = 0.5;
    config.experiment.eps_grid = vec![0.2, 0.1, 0.05, 0.025];
    let model = config.model().unwrap();
    let spec = config.condition2_spec(&model).unwrap();
    let family = config.family().unwrap();
    let runner = Runner::from_env();
    let mut taus = Vec::new();
    let mut mean_gap = vec![0.0; spec.eps_grid.len()];
    for seed in 0..10 {
        let t = condition2_experiment(&spec, &family, &model, seed, &runner).unwrap();
        assert!(t.holds_rd46);
        taus.push(t.kendall_tau);
        for (m, r) in mean_gap.iter_mut().zip(&t.rows) {
            *m += r.gap / 10.0;
        }
    }
    let tau = taus.iter().sum::<f64>() / taus.len() as f64;
    let decreasing = mean_gap.windows(2).all(|w| w[1] < w[0]);
    let gaps: Vec<String> = mean_gap.iter().map(|g| format!("{g:.4}")).collect();
    outcome(
        tau <= -0.8 && decreasing,
        format!("mean Kendall tau {tau:.3} over 10 seeds; mean gaps [{}]", gaps.join(", ")),
    )
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let commands: [&[&str]; 6] = [
        &["simulate"],
        &["instanton"],
        &["ldp-curve", "--reps", "300"],
        &["noise-scaling"],
        &["condition2", "--reps", "20"],
        &["regime", "--d", "3", "--alpha", "0", "--a", "0.5"],
    ];
    let mut mismatched = Vec::new();
    for cmd in commands {
        let mut outputs = Vec::new();
        for threads in ["1", "1", "4"] {
            let dir = tempfile::tempdir().unwrap();
            let mut argv = vec!["phi-ldp", "--seed", "42", "--threads", threads, "--out", dir.path().to_str().unwrap()];
            argv.extend_from_slice(cmd);
            let code = phi_ldp_cli::run(argv);
            outputs.push((code, files(dir.path())));
        }
        let ok = outputs[0].0 == 0 && !outputs[0].1.is_empty() && outputs.iter().all(|o| *o == outputs[0]);
        if !ok {
            mismatched.push(cmd[0]);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("6 subcommands, rerun serially and with 4 threads; mismatches: {mismatched:?}"),
    )
}

type Criterion = (&'static str, u64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 dissipativity", 10, dissipativity),
        ("2 noise scaling", 120, noise_scaling),
        ("3 negative-norm bound", 120, negative_norm_bound),
        ("4 action identity", 60, action_identity),
        ("5 adjoint gradient", 60, adjoint_gradient_check),
        ("6 linear LDP benchmark", 300, linear_ldp),
        ("7 regime classifier", 1, regime_classifier),
        ("8 condition-2 convergence", 600, condition2),
        ("9 determinism", u64::MAX, determinism),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = o.pass && in_time;
        failed += usize::from(!pass);
        let limit = if budget == u64::MAX {
            String::new()
        } else {
            format!(" / {budget} s")
        };
        println!(
            "criterion {name}: {} ({}; {:.1} s{limit})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
