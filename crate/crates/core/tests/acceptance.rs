//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! stderr (bypassing output capture) before asserting.
//!
//! The desk-profile checks train 10 models on the bundled 10k digits and take
//! roughly half an hour each run on one core; the determinism check runs the
//! pipeline a second time. The full-profile check is `#[ignore]`d.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use actprobe::cli::{self, STATS_FILE};
use actprobe::experiment::{self, Dataset, Profile};
use actprobe::feature_demo::{offset_experiment, selected_features, FeatureMixture};
use actprobe::idx::LabelSet;
use actprobe::model::{self, ActivationKind, ModelParams};
use actprobe::numerics::{Matrix, Rng};
use actprobe::perturb::{self, NodeRangeTable, PerturbationConfig, ProbeFamily, ProbeOptions};
use actprobe::stats::{self, StatRow};

fn verdict(id: &str, ok: bool, detail: &str) {
    let word = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{word} criterion {id}: {detail}");
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-10k")
}

/// Runs train, sweep, stats and report through the command line into a
/// fresh directory.
fn desk_pipeline(name: &str) -> PathBuf {
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&out);
    let d = data_dir();
    let (d, o) = (d.to_str().unwrap(), out.to_str().unwrap());
    for args in [
        vec!["train", "--profile", "desk", "--data-dir", d, "--out-dir", o],
        vec!["sweep", "--profile", "desk", "--data-dir", d, "--out-dir", o],
        vec!["stats", "--out-dir", o],
        vec!["report", "--out-dir", o],
    ] {
        let code = cli::dispatch(std::iter::once("actprobe").chain(args.iter().copied()));
        assert_eq!(code, 0, "{args:?} exited with {code}");
    }
    out
}

fn first_run() -> &'static Path {
    static RUN: OnceLock<PathBuf> = OnceLock::new();
    RUN.get_or_init(|| desk_pipeline("run_a"))
}

/// `(activation, percent in basis points) -> mean accuracy in percent` for
/// one family.
fn means(family: ProbeFamily) -> BTreeMap<(ActivationKind, i64), f64> {
    let f = std::fs::File::open(first_run().join(STATS_FILE)).unwrap();
    stats::read_stats_csv(f)
        .unwrap()
        .into_iter()
        .filter(|r: &StatRow| r.family == family)
        .map(|r| ((r.activation, (r.percent * 1e4).round() as i64), r.mean_acc))
        .collect()
}

/// Mean baseline train accuracy in percent.
fn baseline(act: ActivationKind) -> f64 {
    let all = experiment::load_baselines(&first_run().join(experiment::BASELINES_FILE)).unwrap();
    let accs: Vec<f64> = all.iter().filter(|b| b.activation == act).map(|b| 100.0 * b.train_accuracy).collect();
    assert_eq!(accs.len(), 5);
    stats::mean(&accs).unwrap()
}

#[test]
#[ignore = "full profile: 40 models at H=784 for 5000 epochs on 60k images"]
fn full_profile_baselines() {
    let dir = std::env::var_os("ACTPROBE_FULL_DATA").map_or_else(
        || Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"),
        PathBuf::from,
    );
    let data = Dataset::load(&dir, None).unwrap();
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join("full");
    let profile = Profile::Paper;
    let records =
        experiment::run_baselines(&profile.train_config(), &profile.seeds(), &ActivationKind::ALL, &data, &out).unwrap();
    let mean = |a| {
        let v: Vec<f64> = records.iter().filter(|r| r.activation == a).map(|r| 100.0 * r.train_accuracy).collect();
        stats::mean(&v).unwrap()
    };
    let (abs, relu) = (mean(ActivationKind::Abs), mean(ActivationKind::Relu));
    let ok = (abs - 99.99).abs() <= 0.5 && (relu - 98.33).abs() <= 1.0;
    verdict("1", ok, &format!("Abs {abs:.2}% (want 99.99 ± 0.5), ReLU {relu:.2}% (want 98.33 ± 1.0)"));
    assert!(ok);
}

#[test]
fn desk_offset_sweep() {
    let m = means(ProbeFamily::Offset);
    let mut ok = true;
    let mut notes = Vec::new();
    for act in ActivationKind::ALL {
        let (&(_, best), &best_acc) =
            m.iter().filter(|((a, _), _)| *a == act).max_by(|x, y| x.1.total_cmp(y.1)).unwrap();
        let peak_ok = best.abs() <= 200;
        ok &= peak_ok;
        let base = m[&(act, 0)];
        let minus = base - m[&(act, -2500)];
        let plus = base - m[&(act, 2500)];
        let drops_ok = match act {
            ActivationKind::Abs => minus >= 30.0 && plus >= 30.0,
            ActivationKind::Relu => plus >= 10.0,
        };
        ok &= drops_ok;
        notes.push(format!(
            "{} peak {:.2}% at {:+}% , drop {:.2} at -25%, {:.2} at +25%",
            act.label(),
            best_acc,
            best as f64 / 100.0,
            minus,
            plus
        ));
    }
    verdict("2a", ok, &format!("{} (Abs needs >= 30 both sides, ReLU >= 10 at +25%)", notes.join("; ")));
    assert!(ok);
}

#[test]
fn desk_scale_plateau() {
    let m = means(ProbeFamily::Scale);
    let mut ok = true;
    let mut notes = Vec::new();
    for act in ActivationKind::ALL {
        let base = baseline(act);
        for bp in [5000, 10000, 100000] {
            let diff = m[&(act, bp)] - base;
            ok &= diff.abs() < 1.0;
            notes.push(format!("{} {}% {diff:+.2}", act.label(), bp / 100));
        }
    }
    verdict("2b", ok, &format!("difference from baseline: {} (need < 1 point)", notes.join(", ")));
    assert!(ok);
}

#[test]
fn desk_cutoff_sweep() {
    let m = means(ProbeFamily::Cutoff);
    let mut ok = true;
    let mut notes = Vec::new();
    for act in ActivationKind::ALL {
        let base = baseline(act);
        let near = m[&(act, 7500)] - base;
        let drop = base - m[&(act, 100)];
        ok &= near.abs() < 1.0 && drop >= 15.0;
        notes.push(format!("{} 75% {near:+.2}, 1% drop {drop:.2}", act.label()));
    }
    verdict("2c", ok, &format!("{} (need |75%| < 1, 1% drop >= 15)", notes.join("; ")));
    assert!(ok);
}

fn random_instance(rng: &mut Rng, act: ActivationKind) -> (ModelParams, Matrix) {
    let (n, d, h) = (40, 9, 16);
    let params = ModelParams::init(rng, d, h, act);
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.uniform(-3.0, 3.0).unwrap()).collect()).unwrap();
    (params, x)
}

#[test]
fn exactness_properties() {
    let mut rng = Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    for trial in 0..50 {
        let act = ActivationKind::ALL[trial % 2];
        let (params, x) = random_instance(&mut rng, act);
        let h = params.hidden();
        let plain = model::forward_unperturbed(&params, &x).unwrap();
        let ident = model::forward(&params, &x, &PerturbationConfig::identity(h)).unwrap();
        if ident != plain {
            failures.push(format!("identity differs ({act}, trial {trial})"));
        }

        let ranges = NodeRangeTable::from_preact(&plain.preact);
        for p in [0.01, 0.5, 0.75, 2.0, 10.0, rng.uniform(0.0, 10.0).unwrap()] {
            if p <= 0.0 {
                continue;
            }
            let scaled = model::forward(&params, &x, &perturb::make_scale_probe(p, h).unwrap()).unwrap();
            let homogeneous =
                scaled.hidden_out.as_slice().iter().zip(plain.hidden_out.as_slice()).all(|(s, b)| *s == p * b);
            if !homogeneous {
                failures.push(format!("scale {p} not homogeneous ({act})"));
            }
        }

        for p in [-2.0, -1.0, -0.25, -0.01, 0.0, 0.01, 0.25, 1.0, rng.uniform(-1.0, 1.0).unwrap()] {
            let probe = perturb::make_offset_probe(p, &ranges, ProbeOptions::default()).unwrap();
            for (i, node) in ranges.nodes().iter().enumerate() {
                let r = node.range();
                if r > 0.0 && probe.apply_unit(i, r) != r {
                    failures.push(format!("offset {p} unit {i}: apply(r) != r"));
                }
            }
        }

        // the largest range-relative clip that still clears every maximum
        let clears = ranges
            .nodes()
            .iter()
            .filter(|n| n.range() > 0.0)
            .map(|n| n.max / n.range())
            .fold(0.0f64, f64::max);
        let p = (clears * 1.01).clamp(1e-3, 10.0);
        if clears * 1.01 <= 10.0 {
            let cut = perturb::make_cutoff_probe(p, &ranges, ProbeOptions::default()).unwrap();
            if model::forward(&params, &x, &cut).unwrap() != plain {
                failures.push(format!("cutoff {p} above every max changed the output"));
            }
        }
        let cut = perturb::make_cutoff_probe(1.5, &ranges, ProbeOptions { cutoff_of_max: true, ..Default::default() })
            .unwrap();
        let all_positive = ranges.nodes().iter().all(|n| n.max >= 0.0);
        if all_positive && model::forward(&params, &x, &cut).unwrap() != plain {
            failures.push("cutoff at 150% of max changed the output".into());
        }
    }
    let ok = failures.is_empty();
    verdict(
        "3",
        ok,
        &if ok {
            "identity, scale homogeneity, offset fixed point and cutoff no-op hold bit-exactly on 50 instances".into()
        } else {
            failures.join("; ")
        },
    );
    assert!(ok);
}

fn w1_of(p: &mut ModelParams) -> &mut [f64] {
    p.w1.as_mut_slice()
}

fn b1_of(p: &mut ModelParams) -> &mut [f64] {
    &mut p.b1
}

fn w2_of(p: &mut ModelParams) -> &mut [f64] {
    p.w2.as_mut_slice()
}

fn b2_of(p: &mut ModelParams) -> &mut [f64] {
    &mut p.b2
}

#[test]
fn gradient_oracle() {
    const EPS: f64 = 1e-6;
    let mut rng = Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 50 {
        let act = ActivationKind::ALL[done % 2];
        let n = 3 + (rng.next_u64() % 4) as usize;
        let d = 3 + (rng.next_u64() % 4) as usize;
        let h = 2 + (rng.next_u64() % 5) as usize;
        let params = ModelParams::init(&mut rng, d, h, act);
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.uniform(-2.0, 2.0).unwrap()).collect()).unwrap();
        let y = LabelSet::new((0..n).map(|_| (rng.next_u64() % 10) as u8).collect()).unwrap();
        let trace = model::forward_unperturbed(&params, &x).unwrap();
        if trace.preact.as_slice().iter().any(|z| z.abs() < 1e-3) {
            continue;
        }
        let g = model::backward(&params, &x, &y, &trace).unwrap();
        let loss = |p: &ModelParams| {
            let t = model::forward_unperturbed(p, &x).unwrap();
            model::loss_cross_entropy(&t.logits, &y).unwrap()
        };
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        let mut probe = |get: fn(&mut ModelParams) -> &mut [f64], grad: &[f64]| {
            for (i, &gi) in grad.iter().enumerate() {
                let mut p = params.clone();
                let v = get(&mut p)[i];
                get(&mut p)[i] = v + EPS;
                let up = loss(&p);
                get(&mut p)[i] = v - EPS;
                let down = loss(&p);
                analytic.push(gi);
                numeric.push((up - down) / (2.0 * EPS));
            }
        };
        probe(w1_of, g.w1.as_slice());
        probe(b1_of, &g.b1);
        probe(w2_of, g.w2.as_slice());
        probe(b2_of, &g.b2);
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff) / norm(&analytic).max(norm(&numeric)));
        done += 1;
    }
    let ok = worst <= 1e-4;
    verdict("4", ok, &format!("worst relative error {worst:.2e} over 50 instances (need <= 1e-4)"));
    assert!(ok);
}

/// Student t density for df = 10, with Γ(5.5) written out.
fn t10_pdf(t: f64) -> f64 {
    let gamma_5_5 = 4.5 * 3.5 * 2.5 * 1.5 * 0.5 * std::f64::consts::PI.sqrt();
    let gamma_5 = 24.0;
    let c = gamma_5_5 / ((10.0 * std::f64::consts::PI).sqrt() * gamma_5);
    c * (1.0 + t * t / 10.0).powf(-5.5)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

#[test]
fn statistics_oracle() {
    let mut ok = true;
    let mut notes = Vec::new();

    let cauchy = [-100.0, -2.5, -0.3, 0.0, 0.7, 1.0, 9.0, 1e4]
        .iter()
        .map(|&t| (stats::t_cdf(t, 1).unwrap() - (0.5 + f64::atan(t) / std::f64::consts::PI)).abs())
        .fold(0.0, f64::max);
    ok &= cauchy <= 1e-10;
    notes.push(format!("Cauchy max error {cauchy:.1e}"));

    let integrated = 0.5 + simpson(t10_pdf, 0.0, 1.812, 2000);
    let cdf = stats::t_cdf(1.812, 10).unwrap();
    ok &= (cdf - integrated).abs() <= 5e-4 && (cdf - 0.950).abs() < 1e-3;
    notes.push(format!("t_cdf(1.812, 10) = {cdf:.6} vs quadrature {integrated:.6}"));

    // high-precision reference: t = -17.962924780409927395, p = 5.6457662208681763423e-5
    let r = stats::paired_t_test(&[0.90, 0.92, 0.89, 0.93, 0.91], &[0.95, 0.96, 0.94, 0.97, 0.95]).unwrap();
    let t_err = (r.t - -17.962924780409927395).abs();
    let p_err = (r.p - 5.6457662208681763423e-5).abs();
    ok &= t_err <= 1e-9 && p_err <= 1e-9;
    notes.push(format!("paired t {:.9} (err {t_err:.1e}), p {:.6e} (err {p_err:.1e})", r.t, r.p));

    let q = stats::t_quantile(0.975, 19).unwrap();
    ok &= (q - 2.093).abs() <= 1e-3;
    notes.push(format!("t*(0.975, 19) = {q:.6}"));

    verdict("5", ok, &notes.join("; "));
    assert!(ok);
}

#[test]
fn feature_demo_selections() {
    let relu = FeatureMixture::canonical(ActivationKind::Relu);
    let abs = FeatureMixture::canonical(ActivationKind::Abs);
    let sel = |mix: &FeatureMixture, act, delta| offset_experiment(mix, act, &[delta]).remove(0).1;
    let checks = [
        ("ReLU baseline", selected_features(&relu, ActivationKind::Relu), "abc", false),
        ("Abs baseline", selected_features(&abs, ActivationKind::Abs), "c", false),
        ("Abs delta -1", sel(&abs, ActivationKind::Abs, -1.0), "b", false),
        ("ReLU delta -1", sel(&relu, ActivationKind::Relu, -1.0), "ab", false),
        ("Abs delta +0.5", sel(&abs, ActivationKind::Abs, 0.5), "cd", true),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, got, want, misaligned) in checks {
        let good = got.label_string() == want && got.misaligned == misaligned;
        ok &= good;
        let flag = if got.misaligned { " misaligned" } else { "" };
        notes.push(format!("{name} {{{}}}{flag}", got.label_string()));
    }
    verdict("6", ok, &notes.join(", "));
    assert!(ok);
}

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        if name == experiment::RESULTS_FILE || name == STATS_FILE || name.ends_with(".svg") {
            files.insert(name, std::fs::read(&path).unwrap());
        }
    }
    files
}

#[test]
fn pipeline_determinism() {
    let a = outputs(first_run());
    let b = outputs(&desk_pipeline("run_b"));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let ok = a.len() == 5 && a.keys().eq(b.keys()) && differing.is_empty();
    verdict(
        "7",
        ok,
        &format!("compared {} files ({}) across two runs, {} differ", a.len(), a.keys().cloned().collect::<Vec<_>>().join(", "), differing.len()),
    );
    assert!(ok);
}
