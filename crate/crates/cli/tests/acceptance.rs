//! Acceptance suite: one PASS/FAIL line per criterion, then a single assertion.
//!
//! Run with `cargo test -p gmmlor-cli --test acceptance -- --nocapture` to
//! see the report.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use gmmlor_cli::{cmd_replicate, ReplicateArgs, StudySummary, STUDY_CSV, SUMMARY_JSON};
use gmmlor_core::estimate::driver::balanced_assignment;
use gmmlor_core::estimate::{fit, fit_from_assignment, invert_moments, solve_orientation, solve_quartic, FitConfig, Phase, WeightedMoments};
use gmmlor_core::io::model_to_json;
use gmmlor_core::metrics::parameter_errors;
use gmmlor_core::model::{eigen_from_covariance, GaussianComponent2D, LineOfResponse, MixtureModel2D};
use gmmlor_core::phantom::{three_component, PHANTOM_COUNTS};
use gmmlor_core::projection::{line_integral_density, projection_variance, theoretical_moments, CenteredLoR, ProjectionVarianceParams};
use gmmlor_core::rng::{EventRng, Stream};
use gmmlor_core::simulate::{generate, EventCounts, SimulationConfig};

const REPLICATES: usize = 100;
const MASTER_SEED: u64 = 2024;
const REFERENCE_MEAN: [f64; 3] = [0.035, 0.029, 0.011];
const REFERENCE_COV: [f64; 3] = [0.014, 0.021, 0.004];
const REFERENCE_WEIGHT: [f64; 3] = [0.019, 0.018, 0.002];

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn run_study(dir: &Path, out: &str) -> (Vec<u8>, StudySummary) {
    let truth = dir.join("truth.json");
    fs::write(&truth, model_to_json(&three_component()).unwrap()).unwrap();
    let out = dir.join(out);
    let args = ReplicateArgs {
        model: Some(truth),
        counts: Some(PHANTOM_COUNTS.to_vec()),
        replicates: Some(REPLICATES),
        seed: Some(MASTER_SEED),
        out: Some(out.clone()),
        ..Default::default()
    };
    let code = cmd_replicate(&args).unwrap();
    assert_eq!(code, 0, "fewer than 95% of replicates succeeded");
    let csv = fs::read(out.join(STUDY_CSV)).unwrap();
    let summary = serde_json::from_str(&fs::read_to_string(out.join(SUMMARY_JSON)).unwrap()).unwrap();
    (csv, summary)
}

fn table_one(summary: &StudySummary) -> Outcome {
    let mut pass = summary.succeeded == REPLICATES;
    let mut parts = Vec::new();
    for (label, reference, pick) in [
        ("mean", REFERENCE_MEAN, (|e: &gmmlor_core::metrics::ComponentErrors| e.mean_error) as fn(&_) -> f64),
        ("cov", REFERENCE_COV, |e| e.cov_error),
        ("weight", REFERENCE_WEIGHT, |e| e.weight_error),
    ] {
        let got: Vec<f64> = summary.average_errors.iter().map(pick).collect();
        for (g, r) in got.iter().zip(reference) {
            pass &= *g <= 2.0 * r;
        }
        parts.push(format!("{label} {:.4?} (limit {:.3?})", got, reference.map(|r| 2.0 * r)));
    }
    outcome(
        "replication study average errors within 2x of reference",
        pass,
        format!("{}/{} ok; {}", summary.succeeded, summary.replicates, parts.join("; ")),
    )
}

fn kl_study(summary: &StudySummary) -> Outcome {
    let (mean, max) = (summary.kl_mean.unwrap_or(f64::NAN), summary.kl_max.unwrap_or(f64::NAN));
    outcome(
        "KL mean <= 0.03 and max <= 0.05",
        mean <= 0.03 && max <= 0.05,
        format!("mean {mean:.5}, max {max:.5}"),
    )
}

fn moment_round_trip() -> Outcome {
    let mut rng = EventRng::new(101, Stream::Simulation);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let s1 = 10f64.powf(rng.uniform_in(-6.0, 2.0));
        let s2 = 10f64.powf(rng.uniform_in(-6.0, s1.log10()));
        let (m2w, m4w) = theoretical_moments(&ProjectionVarianceParams::new(s1, s2, 0.0).unwrap());
        let (r1, r2) = invert_moments(&WeightedMoments { m2w, m4w, mass: 1.0 }, 0.0);
        worst = worst.max((r1 - s1).abs().max((r2 - s2).abs()) / s1);
    }
    outcome("moment round trip 1e-12", worst <= 1e-12, format!("worst {worst:.2e} relative to sigma1^2"))
}

fn random_cov(rng: &mut EventRng) -> [[f64; 2]; 2] {
    let a = 10f64.powf(rng.uniform_in(-3.0, 0.0));
    let c = a * 10f64.powf(rng.uniform_in(-1.0, 1.0));
    let b = rng.uniform_in(-0.9, 0.9) * (a * c).sqrt();
    [[a, b], [b, c]]
}

fn projection_oracle() -> Outcome {
    let mut rng = EventRng::new(102, Stream::Simulation);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let cov = random_cov(&mut rng);
        let phi = rng.uniform_in(-PI, PI);
        let params = ProjectionVarianceParams::from(eigen_from_covariance(&cov).unwrap());
        let n = [-phi.sin(), phi.cos()];
        let direct = n[0] * (cov[0][0] * n[0] + cov[0][1] * n[1]) + n[1] * (cov[1][0] * n[0] + cov[1][1] * n[1]);
        worst = worst.max((projection_variance(&params, phi) - direct).abs() / direct);
    }
    outcome("projection variance equals n^T Sigma n", worst <= 1e-12, format!("worst {worst:.2e}"))
}

/// Adaptive Simpson with the tolerance split between halves.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    step(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 30)
}

fn line_integral_oracle() -> Outcome {
    let mut rng = EventRng::new(103, Stream::Simulation);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let cov = random_cov(&mut rng);
        let mean = [rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0)];
        let phi = rng.uniform_in(-FRAC_PI_2, FRAC_PI_2);
        let (sin, cos) = phi.sin_cos();
        let var = cov[0][0] * sin * sin - 2.0 * cov[0][1] * sin * cos + cov[1][1] * cos * cos;
        let s = -sin * mean[0] + cos * mean[1] + rng.uniform_in(-3.0, 3.0) * var.sqrt();
        let comp = GaussianComponent2D::new(mean, cov, 1.0).unwrap();
        let closed = line_integral_density(&comp, &LineOfResponse::new(s, phi)).unwrap();
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let f = |t: f64| {
            let (dx, dy) = (-s * sin + t * cos - mean[0], s * cos + t * sin - mean[1]);
            let q = (cov[1][1] * dx * dx - 2.0 * cov[0][1] * dx * dy + cov[0][0] * dy * dy) / det;
            (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
        };
        let t0 = cos * mean[0] + sin * mean[1];
        let reach = 40.0 * cov[0][0].max(cov[1][1]).sqrt();
        let numeric = adaptive_simpson(&f, t0 - reach, t0 + reach, 1e-12 * closed);
        worst = worst.max((numeric - closed).abs() / closed);
    }
    outcome("line integral matches adaptive quadrature 1e-8", worst <= 1e-8, format!("worst {worst:.2e}"))
}

fn orientation_and_quartic() -> Outcome {
    let mut worst_angle: f64 = 0.0;
    let (s1, s2) = (0.104051, 0.025949);
    let params = |phi0| ProjectionVarianceParams::new(s1, s2, phi0).unwrap();
    for i in 0..50 {
        let phi0 = -FRAC_PI_2 + PI * (i as f64 + 1.0) / 50.0;
        let p = params(phi0);
        let offs: Vec<CenteredLoR> = (0..180)
            .map(|j| {
                let phi = -FRAC_PI_2 + PI * (j as f64 + 0.5) / 180.0;
                CenteredLoR { s_c: projection_variance(&p, phi).sqrt(), phi }
            })
            .collect();
        let got = solve_orientation(&offs, &[1.0; 180], s1, s2).unwrap();
        let d = (got - phi0).rem_euclid(PI);
        worst_angle = worst_angle.max(d.min(PI - d));
    }
    let mut rng = EventRng::new(104, Stream::Simulation);
    let mut worst_residual: f64 = 0.0;
    for _ in 0..10_000 {
        let c = [0; 5].map(|_| rng.uniform_in(-1.0, 1.0));
        let scale: f64 = c.iter().map(|v| v.abs()).sum();
        for r in solve_quartic(c[0], c[1], c[2], c[3], c[4]) {
            let value = c.iter().fold(Complex64::new(0.0, 0.0), |acc, &v| acc * r + v);
            worst_residual = worst_residual.max(value.norm() / (scale * r.norm().max(1.0).powi(4)));
        }
    }
    outcome(
        "orientation 1e-9 on 50-point grid, quartic residual 1e-8",
        worst_angle <= 1e-9 && worst_residual <= 1e-8,
        format!("angle {worst_angle:.2e}, residual {worst_residual:.2e}"),
    )
}

fn single_component() -> Outcome {
    let truth = three_component();
    let mut pass = true;
    let mut worst = (0.0f64, 0.0f64);
    for (index, comp) in truth.components().iter().enumerate() {
        let model = MixtureModel2D::new(vec![comp.with_weight(1.0).unwrap()]).unwrap();
        for seed in 0..5u64 {
            let data = generate(&SimulationConfig::new(model.clone(), EventCounts::Total(100_000), 1000 * index as u64 + seed)).unwrap();
            match fit(&data.lors, &FitConfig::new(1)) {
                Ok(out) => {
                    let e = parameter_errors(&out.model, &model, &[0])[0];
                    worst = (worst.0.max(e.mean_error), worst.1.max(e.cov_error));
                    pass &= e.mean_error < 0.01 && e.cov_error < 0.01;
                }
                Err(_) => pass = false,
            }
        }
    }
    outcome(
        "single component within 0.01 (3 sets x 5 seeds, N=1e5)",
        pass,
        format!("worst mean {:.4}, worst cov {:.4}", worst.0, worst.1),
    )
}

fn membership_normalization() -> Outcome {
    let mut worst_row: f64 = 0.0;
    let mut worst_weight: f64 = 0.0;
    let mut iterations = 0;
    for seed in 0..5u64 {
        let data = generate(&SimulationConfig::new(three_component(), EventCounts::PerComponent(PHANTOM_COUNTS.to_vec()), seed)).unwrap();
        let labels = balanced_assignment(data.len(), 3, seed);
        let _ = fit_from_assignment(&data.lors, &FitConfig::new(3), &labels, &mut |s| {
            if s.phase == Phase::Soft {
                iterations += 1;
                worst_row = worst_row.max(s.memberships.max_row_deviation());
                worst_weight = worst_weight.max((s.model.weights().iter().sum::<f64>() - 1.0).abs());
            }
        });
    }
    outcome(
        "membership rows and weights sum to 1 within 1e-9",
        iterations > 0 && worst_row <= 1e-9 && worst_weight <= 1e-9,
        format!("{iterations} soft iterations; row {worst_row:.2e}, weights {worst_weight:.2e}"),
    )
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let (first_csv, summary) = run_study(dir.path(), "first");
    let (second_csv, _) = run_study(dir.path(), "second");
    let results = vec![
        table_one(&summary),
        kl_study(&summary),
        moment_round_trip(),
        projection_oracle(),
        line_integral_oracle(),
        orientation_and_quartic(),
        single_component(),
        membership_normalization(),
        outcome(
            "replicate study CSV byte-identical across runs",
            first_csv == second_csv,
            format!("{} bytes", first_csv.len()),
        ),
    ];
    println!();
    for r in &results {
        println!("[{}] {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.name).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
