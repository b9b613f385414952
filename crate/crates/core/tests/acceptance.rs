//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line; the run
//! fails if any criterion fails.
//!
//! Criteria 6 to 8 run the full pipeline on a seeded six-class phantom set
//! (29 train / 28 test images, 512 x 512 x 8 bands); criterion 10 repeats that
//! run and compares every report.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectag_core::classifier::{
    fit, pairwise_couple, rbf_kernel, smo_train, solve_dual, ClassProbabilities, FitParams, GridSearchResult, SmoParams,
};
use spectag_core::confidence::{gini_coefficient, ppci, ConfidenceMetric, ConfidenceThreshold};
use spectag_core::features::{feature_len, riu2_code, riu2_from_samples, LbpConfig};
use spectag_core::imaging::{mi_bands, normalize_reflectance, Band, CalibrationPair, ChannelStack};
use spectag_core::pipeline::{
    evaluate_model, leave_one_organ_out, prepare_dataset, tag_image, train_model, EvaluationReport, LeaveOneOutReport, Modality,
    PipelineConfig, Scores, SuperpixelPrediction, SynthSpec, SyntheticSource,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(name: &str, elapsed: Duration, budget: Duration) -> Result<(), String> {
    check(elapsed < budget, || format!("{name} took {elapsed:?}, budget {budget:?}"))
}

// ---------------------------------------------------------------------------
// 1. Confidence metrics at their endpoints and at a two-class split.

fn criterion_1() -> Outcome {
    let start = Instant::now();
    for j in 2..=6 {
        let u = ClassProbabilities::uniform(j);
        let gc_u = gini_coefficient(&u).map_err(|e| e.to_string())?;
        let pp_u = ppci(&u).map_err(|e| e.to_string())?;
        check(gc_u.abs() <= 1e-12 && pp_u.abs() <= 1e-12, || format!("J={j} uniform: GC {gc_u}, PPCI {pp_u}"))?;
        for k in 0..j {
            let h = ClassProbabilities::one_hot(j, k);
            let gc_h = gini_coefficient(&h).map_err(|e| e.to_string())?;
            let pp_h = ppci(&h).map_err(|e| e.to_string())?;
            check((gc_h - 1.0).abs() <= 1e-12 && (pp_h - 1.0).abs() <= 1e-12, || {
                format!("J={j} one-hot {k}: GC {gc_h}, PPCI {pp_h}")
            })?;
        }
    }
    let half = ClassProbabilities::new(vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
    let gc = gini_coefficient(&half).map_err(|e| e.to_string())?;
    let pp = ppci(&half).map_err(|e| e.to_string())?;
    let pp_expected = 1.0 - 2f64.ln() / 6f64.ln();
    check((gc - 0.8).abs() <= 1e-9, || format!("GC(half-half) = {gc}, expected 0.8"))?;
    check((pp - pp_expected).abs() <= 1e-9, || format!("PPCI(half-half) = {pp}, expected {pp_expected}"))?;
    within_budget("criterion 1", start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("GC(half) = {gc:.12}, PPCI(half) = {pp:.12}, {:?}", start.elapsed()))
}

// ---------------------------------------------------------------------------
// 2. Coupling against a dense linear solve.

/// Solves `Q p = 0` with the last row replaced by `sum p = 1`, where
/// `Q_jj = sum_{i != j} r_ij` and `Q_ji = -r_ji`.
fn dense_coupling(r: &Array2<f64>) -> Vec<f64> {
    let j = r.nrows();
    let mut a = vec![vec![0.0; j + 1]; j];
    for row in 0..j {
        for i in 0..j {
            if i != row {
                a[row][row] += r[(i, row)];
                a[row][i] -= r[(row, i)];
            }
        }
    }
    for col in 0..j {
        a[j - 1][col] = 1.0;
    }
    a[j - 1][j] = 1.0;
    for col in 0..j {
        let pivot = (col..j).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in 0..j {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=j {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..j).map(|k| a[k][j] / a[k][k]).collect()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let j = 3 + trial % 4;
        let mut r = Array2::zeros((j, j));
        for a in 0..j {
            for b in a + 1..j {
                let v: f64 = rng.random_range(0.01..0.99);
                r[(a, b)] = v;
                r[(b, a)] = 1.0 - v;
            }
        }
        let p = pairwise_couple(&r).map_err(|e| format!("trial {trial}: {e}"))?;
        let oracle = dense_coupling(&r);
        let p = p.as_slice();
        let sum: f64 = p.iter().sum();
        check((sum - 1.0).abs() <= 1e-12 && p.iter().all(|&v| v >= 0.0), || format!("trial {trial}: p not a distribution {p:?}"))?;
        for (a, b) in p.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
        check(worst <= 1e-8, || format!("trial {trial}: deviation {worst:e} from dense oracle"))?;
    }
    within_budget("criterion 2", start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("1000 matrices, max |p - p_oracle| = {worst:.2e}, {:?}", start.elapsed()))
}

// ---------------------------------------------------------------------------
// 3. LBP code alphabet, rotation invariance and feature lengths.

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let cfg = LbpConfig::default();
    for &(_, p) in &cfg.pairs {
        let mut seen = BTreeSet::new();
        // Exhaustive for P = 8 and 16, 2^16 random patterns for P = 24.
        let patterns: Box<dyn Iterator<Item = u64>> = if p <= 16 {
            Box::new(0..(1u64 << p))
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(p as u64);
            Box::new((0..1u64 << 16).map(move |_| rng.random::<u64>() & ((1u64 << p) - 1)))
        };
        for pattern in patterns {
            let bits: Vec<bool> = (0..p).map(|k| pattern >> k & 1 == 1).collect();
            let code = riu2_code(&bits);
            seen.insert(code);
            let shift = (pattern as usize) % p;
            let mut rotated = bits.clone();
            rotated.rotate_left(shift.max(1));
            check(riu2_code(&rotated) == code, || format!("P={p}: rotation changed the code of {pattern:#x}"))?;
        }
        if p <= 16 {
            let expected: BTreeSet<u8> = (0..(p + 2) as u8).collect();
            check(seen == expected, || format!("P={p}: code alphabet {seen:?}"))?;
        } else {
            // Every uniform code and the non-uniform code, constructed directly.
            for ones in 0..=p {
                let bits: Vec<bool> = (0..p).map(|k| k < ones).collect();
                seen.insert(riu2_code(&bits));
            }
            let expected: BTreeSet<u8> = (0..(p + 2) as u8).collect();
            check(seen == expected, || format!("P={p}: code alphabet {seen:?}"))?;
        }
    }
    // Rotating sampled neighbour values about the centre leaves the code unchanged.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for &(_, p) in &cfg.pairs {
        for _ in 0..2000 {
            let centre: f64 = rng.random_range(0.0..1.0);
            let samples: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.0)).collect();
            let code = riu2_from_samples(centre, &samples);
            for shift in 1..p {
                let mut rotated = samples.clone();
                rotated.rotate_left(shift);
                check(riu2_from_samples(centre, &rotated) == code, || format!("P={p}: sample rotation by {shift} changed the code"))?;
            }
        }
    }
    let l_hlbp: usize = cfg.pairs.iter().map(|&(_, p)| p + 2).sum();
    check(l_hlbp == 54, || format!("l_HLBP = {l_hlbp}"))?;
    check(feature_len(8, &cfg) == 440, || format!("N_C=8 length {}", feature_len(8, &cfg)))?;
    check(feature_len(3, &cfg) == 165, || format!("N_C=3 length {}", feature_len(3, &cfg)))?;
    within_budget("criterion 3", start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("alphabets P+2, rotation invariant, l_HLBP = 54, lengths 440/165, {:?}", start.elapsed()))
}

// ---------------------------------------------------------------------------
// 4. SMO feasibility, optimality against a QP oracle, separable blobs.

fn gram(x: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = rbf_kernel(&x[i], &x[j], gamma);
        }
    }
    k
}

/// Projected gradient on `a'Qa/2 - sum(a)` over `{0 <= a <= c, y'a = 0}`;
/// the projection bisects on the multiplier of the equality constraint.
fn qp_oracle(k: &[f64], y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let q: Vec<f64> = (0..n * n).map(|t| y[t / n] * y[t % n] * k[t]).collect();
    let project = |v: &[f64]| -> Vec<f64> {
        let clip = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(a, yi)| (a - mu * yi).clamp(0.0, c)).collect() };
        let g = |mu: f64| -> f64 { clip(mu).iter().zip(y).map(|(a, yi)| a * yi).sum() };
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        clip(0.5 * (lo + hi))
    };
    let lmax = (0..n).map(|i| (0..n).map(|j| q[i * n + j].abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lmax;
    let mut a = vec![0.0; n];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..n)
            .map(|i| a[i] - step * ((0..n).map(|j| q[i * n + j] * a[j]).sum::<f64>() - 1.0))
            .collect();
        a = project(&next);
    }
    let quad: f64 = (0..n).map(|i| (0..n).map(|j| a[i] * q[i * n + j] * a[j]).sum::<f64>()).sum();
    0.5 * quad - a.iter().sum::<f64>()
}

fn blobs(n: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for k in 0..2 * n {
        let label = if k < n { 1.0 } else { -1.0 };
        let centre = label * sep / 2.0;
        x.push(vec![centre + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        y.push(label);
    }
    (x, y)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut worst_rel = 0.0f64;
    let mut worst_eq = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..6 {
        let n = 8 + trial * 6;
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut y: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let c = [0.5, 1.0, 10.0][trial % 3];
        let gamma = [0.5, 1.0, 2.0][trial % 3];
        let k = gram(&x, gamma);
        let sol = solve_dual(&k, &y, c, 1e-6, 10 * n * n * 100, None);
        check(sol.converged, || format!("trial {trial}: no convergence"))?;
        let feasible = sol.alpha.iter().all(|&a| (0.0..=c).contains(&a));
        let eq: f64 = sol.alpha.iter().zip(&y).map(|(a, yi)| a * yi).sum();
        worst_eq = worst_eq.max(eq.abs());
        check(feasible && eq.abs() < 1e-6, || format!("trial {trial}: infeasible dual, sum a*y = {eq:e}"))?;
        let oracle = qp_oracle(&k, &y, c);
        let rel = (sol.objective() - oracle).abs() / oracle.abs().max(1e-12);
        worst_rel = worst_rel.max(rel);
        check(rel <= 1e-4, || format!("trial {trial} (n={n}): objective {} vs oracle {oracle}", sol.objective()))?;
    }
    let (x, y) = blobs(100, 4.0, 11);
    let model = smo_train(&x, &y, &SmoParams::new(10.0, 1.0)).map_err(|e| e.to_string())?;
    let eq: f64 = model.dual_coef.iter().sum();
    worst_eq = worst_eq.max(eq.abs());
    check(model.dual_coef.iter().all(|a| a.abs() <= 10.0) && eq.abs() < 1e-6, || format!("blobs: infeasible dual, sum = {eq:e}"))?;
    let errors = x.iter().zip(&y).filter(|(xi, yi)| model.predict(xi) != **yi).count();
    check(errors == 0, || format!("blobs: {errors} training errors"))?;
    within_budget("criterion 4", start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "max relative objective gap {worst_rel:.2e}, max |sum a*y| {worst_eq:.2e}, blobs 100%, {:?}",
        start.elapsed()
    ))
}

// ---------------------------------------------------------------------------
// 5. Reflectance normalisation identities.

fn criterion_5() -> Outcome {
    let bands: Vec<Band> = mi_bands();
    let (w, h) = (16, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut dark = Vec::new();
    let mut white = Vec::new();
    for _ in &bands {
        dark.push(Array2::from_shape_fn((h, w), |_| rng.random_range(0.0..0.1)));
        white.push(Array2::from_shape_fn((h, w), |_| rng.random_range(0.6..1.0)));
    }
    let d = ChannelStack::new(bands.clone(), dark.clone()).map_err(|e| e.to_string())?;
    let wh = ChannelStack::new(bands.clone(), white.clone()).map_err(|e| e.to_string())?;
    let mid = ChannelStack::new(bands.clone(), dark.iter().zip(&white).map(|(a, b)| (a + b) / 2.0).collect()).map_err(|e| e.to_string())?;
    let calib = CalibrationPair::new(d.clone(), wh.clone()).map_err(|e| e.to_string())?;
    let max_err = |s: &ChannelStack, target: f64| -> f64 {
        s.channel_data().iter().flat_map(|c| c.iter()).map(|v| (v - target).abs()).fold(0.0, f64::max)
    };
    let ulp = 4.0 * f64::EPSILON;
    let one = max_err(&normalize_reflectance(&wh, &calib).map_err(|e| e.to_string())?, 1.0);
    let zero = max_err(&normalize_reflectance(&d, &calib).map_err(|e| e.to_string())?, 0.0);
    let half = max_err(&normalize_reflectance(&mid, &calib).map_err(|e| e.to_string())?, 0.5);
    check(one <= ulp && zero <= ulp && half <= ulp, || format!("I=W err {one:e}, I=D err {zero:e}, midpoint err {half:e}"))?;
    Ok(format!("I=W -> 1 (err {one:e}), I=D -> 0 (err {zero:e}), midpoint -> 0.5 (err {half:e})"))
}

// ---------------------------------------------------------------------------
// 6-8 and 10. End-to-end phantom experiment.

const EXPERIMENT_SEED: u64 = 7;

struct Experiment {
    mi: EvaluationReport,
    rgb: EvaluationReport,
    mi_grid: GridSearchResult,
    rgb_grid: GridSearchResult,
    loo: LeaveOneOutReport,
    mi_model: String,
    elapsed_6_7: Duration,
    elapsed_8: Duration,
}

fn experiment_config() -> PipelineConfig {
    let mut config = PipelineConfig::default();
    // 512 x 512 phantoms hold far fewer pixels than the default superpixel
    // size was chosen for; 64 px superpixels give ~64 regions per image.
    config.lsc.avg_size = 64;
    config.svm.seed = EXPERIMENT_SEED;
    config
}

fn run_experiment() -> Result<Experiment, String> {
    let spec = SynthSpec {
        seed: EXPERIMENT_SEED,
        ..SynthSpec::default()
    };
    let config = experiment_config();
    let start = Instant::now();
    let source = SyntheticSource::new(spec).map_err(|e| e.to_string())?;
    let ds = prepare_dataset(&source, &config, true).map_err(|e| e.to_string())?;
    let (mi_model, mi_grid) = train_model(&ds, Modality::Mi, &config).map_err(|e| e.to_string())?;
    let (rgb_model, rgb_grid) = train_model(&ds, Modality::Rgb, &config).map_err(|e| e.to_string())?;
    let (mi, _) = evaluate_model(&ds, &mi_model, Modality::Mi, &config).map_err(|e| e.to_string())?;
    let (rgb, _) = evaluate_model(&ds, &rgb_model, Modality::Rgb, &config).map_err(|e| e.to_string())?;
    let elapsed_6_7 = start.elapsed();
    let start = Instant::now();
    let thr = ConfidenceThreshold::new(0.9, ConfidenceMetric::Gc).map_err(|e| e.to_string())?;
    let loo = leave_one_organ_out(&ds, Modality::Mi, mi_model.c, mi_model.gamma, &thr, &config).map_err(|e| e.to_string())?;
    let elapsed_8 = start.elapsed();
    let mi_model = serde_json::to_string(&mi_model).map_err(|e| e.to_string())?;
    Ok(Experiment {
        mi,
        rgb,
        mi_grid,
        rgb_grid,
        loo,
        mi_model,
        elapsed_6_7,
        elapsed_8,
    })
}

fn median_of(report: &EvaluationReport, metric: Option<ConfidenceMetric>, tau: Option<f64>) -> Result<f64, String> {
    report
        .sweep
        .iter()
        .find(|op| op.metric == metric && op.tau == tau)
        .and_then(|op| op.acc_spx.as_ref())
        .map(|s| s.median)
        .ok_or_else(|| format!("no Acc_Spx for {metric:?} at {tau:?}"))
}

fn criterion_6(e: &Experiment) -> Outcome {
    let base = median_of(&e.mi, None, None)?;
    let mut curve = vec![base];
    for &tau in &experiment_config().tau_grid {
        curve.push(median_of(&e.mi, Some(ConfidenceMetric::Gc), Some(tau))?);
    }
    let at_09 = median_of(&e.mi, Some(ConfidenceMetric::Gc), Some(0.9))?;
    check(base >= 0.90, || format!("Base median Acc_Spx {base:.4} < 0.90"))?;
    check(at_09 >= 0.97, || format!("median Acc_Spx at GC > 0.9 is {at_09:.4} < 0.97"))?;
    check(at_09 >= base, || format!("tau = 0.9 median {at_09:.4} below Base {base:.4}"))?;
    for w in curve.windows(2) {
        check(w[1] >= w[0] - 0.01, || format!("Acc_Spx drops by more than 1 pp along the tau grid: {curve:?}"))?;
    }
    within_budget("criteria 6-7 pipeline", e.elapsed_6_7, Duration::from_secs(15 * 60))?;
    Ok(format!("Base {base:.4}, GC>0.9 {at_09:.4}, curve {curve:.4?}, {:?}", e.elapsed_6_7))
}

fn criterion_7(e: &Experiment) -> Outcome {
    let mi = median_of(&e.mi, None, None)?;
    let rgb = median_of(&e.rgb, None, None)?;
    check(mi - rgb >= 0.05, || format!("MI Base {mi:.4} vs RGB Base {rgb:.4}: gap below 5 pp"))?;
    Ok(format!("MI Base {mi:.4} vs RGB Base {rgb:.4} (+{:.1} pp)", 100.0 * (mi - rgb)))
}

fn criterion_8(e: &Experiment) -> Outcome {
    let ex = e.loo.mean_lc_ex.ok_or("no held-out superpixels")?;
    let inc = e.loo.mean_lc_in.ok_or("no trained-class superpixels")?;
    check(ex > inc, || format!("mean %LC_Ex {ex:.4} <= mean %LC_In {inc:.4}"))?;
    within_budget("criterion 8", e.elapsed_8, Duration::from_secs(30 * 60))?;
    Ok(format!("mean %LC_Ex {:.1}% > mean %LC_In {:.1}%, {:?}", 100.0 * ex, 100.0 * inc, e.elapsed_8))
}

fn criterion_10(first: &Experiment, second: &Experiment) -> Outcome {
    let pairs: [(&str, String, String); 6] = [
        ("MI report", json(&first.mi), json(&second.mi)),
        ("RGB report", json(&first.rgb), json(&second.rgb)),
        ("MI CV table", json(&first.mi_grid), json(&second.mi_grid)),
        ("RGB CV table", json(&first.rgb_grid), json(&second.rgb_grid)),
        ("leave-one-out report", json(&first.loo), json(&second.loo)),
        ("MI model", first.mi_model.clone(), second.mi_model.clone()),
    ];
    for (name, a, b) in &pairs {
        check(a == b, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} artefacts identical across two seeded runs", pairs.len()))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serialisable report")
}

// ---------------------------------------------------------------------------
// 9. Tagging with one misclassified, low-confidence superpixel.

fn criterion_9() -> Outcome {
    // Three well-separated classes in 2-D; a point on the segment between
    // class 0 and class 2 yields an uncertain, wrong call when its truth is 0.
    let centres = [(0.0, 0.0), (6.0, 0.0), (3.0, 5.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (k, &(cx, cy)) in centres.iter().enumerate() {
        for _ in 0..40 {
            x.push(vec![cx + rng.random_range(-1.0..1.0), cy + rng.random_range(-1.0..1.0)]);
            y.push(k);
        }
    }
    let classes: Vec<String> = ["liver", "gallbladder", "spleen"].map(String::from).to_vec();
    let model = fit(&x, &y, &classes, &FitParams::new(10.0, 0.5)).map_err(|e| e.to_string())?;
    let thr = ConfidenceThreshold::new(0.9, ConfidenceMetric::Gc).map_err(|e| e.to_string())?;
    let predict = |id: usize, point: &[f64], truth: usize| -> Result<SuperpixelPrediction, String> {
        let p = model.predict_proba(point).map_err(|e| e.to_string())?;
        let scores = Scores::of(&p).map_err(|e| e.to_string())?;
        Ok(SuperpixelPrediction {
            superpixel: id,
            predicted: p.argmax(),
            confident: thr.accepts(scores.gc),
            probabilities: p,
            scores,
            truth: Some(truth),
            purity: Some(1.0),
        })
    };
    // Walk from class 0 towards class 2 until the call flips to class 2
    // while the Gini coefficient is still at or below tau.
    let mut ambiguous = None;
    for step in 0..=200 {
        let t = step as f64 / 200.0;
        let point = [centres[0].0 + t * (centres[2].0 - centres[0].0), centres[0].1 + t * (centres[2].1 - centres[0].1)];
        let pred = predict(99, &point, 0)?;
        if pred.predicted == 2 && !thr.accepts(pred.scores.gc) {
            ambiguous = Some(pred);
            break;
        }
    }
    let ambiguous = ambiguous.ok_or("no low-confidence misclassified point found between classes 0 and 2")?;

    let mut images = 0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut preds = Vec::new();
        for id in 0..12 {
            let k = id % 2;
            let (cx, cy) = centres[k];
            let point = [cx + rng.random_range(-0.5..0.5), cy + rng.random_range(-0.5..0.5)];
            let p = predict(id, &point, k)?;
            check(p.predicted == k && p.confident, || format!("image {seed}: core superpixel {id} not a confident correct call"))?;
            preds.push(p);
        }
        preds.insert((seed as usize * 5) % preds.len(), ambiguous.clone());
        let wrong_low: Vec<_> = preds.iter().filter(|p| p.is_correct() == Some(false)).collect();
        check(wrong_low.len() == 1 && !wrong_low[0].confident, || format!("image {seed}: expected exactly one low-confidence error"))?;
        let truth: BTreeSet<usize> = [0, 1].into();
        let filtered = tag_image(&preds, Some(&thr));
        let base = tag_image(&preds, None);
        check(filtered.tags == truth, || format!("image {seed}: filtered tags {:?}", filtered.tags))?;
        check(base.tags.contains(&2) && base.tags.is_superset(&truth), || format!("image {seed}: Base tags {:?}", base.tags))?;
        images += 1;
    }
    Ok(format!(
        "{images} images: GC-filtered tags = truth {{liver, gallbladder}}, Base adds spleen (ambiguous GC {:.3})",
        ambiguous.scores.gc
    ))
}

// ---------------------------------------------------------------------------

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match result {
        Ok(msg) => {
            println!("PASS {name}: {msg}");
            true
        }
        Err(msg) => {
            println!("FAIL {name}: {msg} ({:?})", start.elapsed());
            false
        }
    }
}

fn main() {
    // Honour `cargo test -- --list` and name filters loosely: the suite is a
    // single unit.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut ok = true;
    ok &= run("criterion 1 (confidence metric endpoints)", criterion_1);
    ok &= run("criterion 2 (coupling vs dense oracle)", criterion_2);
    ok &= run("criterion 3 (LBP structure)", criterion_3);
    ok &= run("criterion 4 (SMO correctness)", criterion_4);
    ok &= run("criterion 5 (normalisation identities)", criterion_5);
    ok &= run("criterion 9 (tagging with confidence filter)", criterion_9);

    let first = panic::catch_unwind(run_experiment).unwrap_or_else(|_| Err("pipeline panicked".into()));
    match &first {
        Ok(e) => {
            ok &= run("criterion 6 (Acc_Spx rises with tau, phantom)", || criterion_6(e));
            ok &= run("criterion 7 (MI beats RGB, phantom)", || criterion_7(e));
            ok &= run("criterion 8 (leave-one-organ-out direction)", || criterion_8(e));
        }
        Err(msg) => {
            for name in ["criterion 6", "criterion 7", "criterion 8"] {
                println!("FAIL {name}: pipeline failed: {msg}");
            }
            ok = false;
        }
    }
    let second = panic::catch_unwind(run_experiment).unwrap_or_else(|_| Err("pipeline panicked".into()));
    match (&first, &second) {
        (Ok(a), Ok(b)) => ok &= run("criterion 10 (determinism)", || criterion_10(a, b)),
        (_, Err(msg)) | (Err(msg), _) => {
            println!("FAIL criterion 10 (determinism): pipeline failed: {msg}");
            ok = false;
        }
    }
    if !ok {
        std::process::exit(1);
    }
}
