//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any check fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use morphcf::descriptors::{amplitude, dominant_frequency, max_gradient, plateau_fraction, profile, trend_slope};
use morphcf::metrics::{kl_divergence, plausibility, validity};
use morphcf::nsga3::{hypervolume, non_dominated_sort, reference_points};
use morphcf::operators::{blend_weights, build_reference_set, crossover, mutate};
use morphcf::regressors::SpectralRateRegressor;
use morphcf::signal::{dtw, SsaConfig};
use morphcf::uncertainty::spearman;
use morphcf::{
    run, BlendParams, Candidate, Dataset, LabeledSeries, MorphSpec, ObjectiveContext, ObjectiveVector, RunConfig,
    TargetSpec, TimeSeries,
};
use morphcf_cli::pipeline::{run_generate, run_uncertainty, GenerateRun};
use morphcf_cli::ExperimentConfig;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ts(v: Vec<f64>) -> TimeSeries {
    TimeSeries::new(v, 125.0).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("cannot load {}: {e:#}", path.display()))
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("runtime {:.1}s exceeds {limit_s}s", elapsed.as_secs_f64())
    })
}

fn descriptor_suite() -> Check {
    let t0 = Instant::now();
    let constant = ts(vec![3.7; 50]);
    let p = profile(&constant).to_array();
    ensure(p == [0.0, 0.0, 1.0, 0.0, 0.0], || format!("constant profile {p:?}"))?;
    let ramp = ts((0..100).map(f64::from).collect());
    ensure(close(amplitude(&ramp), 89.1, 1e-12), || format!("ramp amplitude {}", amplitude(&ramp)))?;
    let sine = |bin: f64, amp: f64| (0..1000).map(move |t| amp * (2.0 * std::f64::consts::PI * bin * t as f64 / 1000.0).sin());
    ensure(dominant_frequency(&ts(sine(40.0, 1.0).collect())) == 5.0, || "sine at bin 40".into())?;
    let mixed: Vec<f64> = sine(20.0, 1.0).zip(sine(60.0, 3.0)).map(|(a, b)| a + b).collect();
    ensure(dominant_frequency(&ts(mixed)) == 60.0 * 0.125, || "two-tone argmax".into())?;
    ensure(plateau_fraction(&ts(vec![0.0, 0.0, 1.0, 1.0])) == 0.5, || "plateau of [0,0,1,1]".into())?;
    let line = ts((0..200).map(|t| 2.0 * t as f64 + 7.0).collect());
    ensure(close(trend_slope(&line), 2.0, 1e-12), || format!("line slope {}", trend_slope(&line)))?;
    let alt = ts((0..64).map(|t| (t % 2) as f64).collect());
    ensure(close(max_gradient(&alt), 125.0, 1e-12), || "alternating gradient".into())?;
    let ramp_a = ts((0..64).map(|t| -0.3 * t as f64).collect());
    ensure(close(max_gradient(&ramp_a), 0.3 * 125.0, 1e-12), || "ramp gradient".into())?;

    let mut rng = StdRng::seed_from_u64(11);
    for case in 0..100 {
        let n = rng.random_range(64..400);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = rng.random_range(-5.0..5.0);
        let k = rng.random_range(0.2..4.0);
        let base = ts(x.clone());
        let shifted = ts(x.iter().map(|v| v + c).collect());
        let scaled = ts(x.iter().map(|v| v * k).collect());
        let (pb, ps, pk, pr) = (
            profile(&base).to_array(),
            profile(&shifted).to_array(),
            profile(&scaled).to_array(),
            profile(&base.reversed()).to_array(),
        );
        let tol = 1e-9;
        let shift_ok = (0..5).all(|d| close(pb[d], ps[d], tol));
        let scale_ok = close(pk[0], k * pb[0], tol)
            && pk[1] == pb[1]
            && close(pk[2], pb[2], tol)
            && close(pk[3], k * pb[3], tol)
            && close(pk[4], k * pb[4], tol);
        let rev_ok = close(pr[0], pb[0], tol)
            && pr[1] == pb[1]
            && close(pr[2], pb[2], tol)
            && close(pr[3], -pb[3], tol)
            && close(pr[4], pb[4], tol);
        ensure(shift_ok && scale_ok && rev_ok, || {
            format!("invariance broken on signal {case}: shift {shift_ok} scale {scale_ok} reversal {rev_ok}")
        })?;
    }
    within(t0.elapsed(), 10)?;
    Ok(format!("examples exact, 100 random signals invariant ({:.2}s)", t0.elapsed().as_secs_f64()))
}

fn small_problem(seed: u64) -> (Dataset, TimeSeries) {
    let spec = morphcf::dataset::SynthDatasetSpec {
        n: 12,
        min_bpm: 60.0,
        max_bpm: 120.0,
        excluded_bands: Vec::new(),
        duration_s: 4.0,
        sample_rate_hz: 125.0,
        noise_std: 0.02,
        shape_jitter: 0.1,
    };
    let train = morphcf::dataset::synth_dataset("t", &spec, seed).unwrap();
    let query = train.items()[0].series.clone();
    (train, query)
}

fn operator_suite() -> Check {
    let t0 = Instant::now();
    let p = BlendParams::default();
    for len in [2usize, 5, 50, 500] {
        let a = blend_weights(len, &p).map_err(|e| e.to_string())?;
        ensure(a[0] == 1.0 && a[len - 1].abs() < 1e-15, || format!("endpoints at len {len}: {} {}", a[0], a[len - 1]))?;
    }

    let mut rng = StdRng::seed_from_u64(5);
    let n = 300;
    let members: Vec<TimeSeries> = (0..4)
        .map(|_| ts((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    let refset = morphcf::ReferenceSet::new(members.clone()).map_err(|e| e.to_string())?;
    for trial in 0..200u64 {
        let w = rng.random_range(2..n / 2);
        let a = Candidate::new(members[(trial % 4) as usize].clone(), w);
        let b = Candidate::new(members[((trial + 1) % 4) as usize].clone(), w);
        let m = mutate(&a, &refset, &p, trial).map_err(|e| e.to_string())?;
        let (av, mv) = (a.waveform.values(), m.waveform.values());
        let changed: Vec<usize> = (0..n).filter(|&t| av[t].to_bits() != mv[t].to_bits()).collect();
        if let (Some(&lo), Some(&hi)) = (changed.first(), changed.last()) {
            ensure(hi - lo < w, || format!("mutation edits span {} > window {w}", hi - lo + 1))?;
        }

        let (c1, _) = crossover(&a, &b, &p, trial).map_err(|e| e.to_string())?;
        let (bv, cv) = (b.waveform.values(), c1.waveform.values());
        for t in 0..n {
            let (lo, hi) = (av[t].min(bv[t]), av[t].max(bv[t]));
            ensure(cv[t] >= lo - 1e-12 && cv[t] <= hi + 1e-12, || format!("crossover sample {t} leaves its hull"))?;
        }
        let first_b = (0..n).find(|&t| cv[t].to_bits() != av[t].to_bits()).unwrap_or(n);
        let last_a = (0..n).rev().find(|&t| cv[t].to_bits() != bv[t].to_bits()).map_or(0, |t| t + 1);
        ensure(last_a.saturating_sub(first_b) <= 2 * w, || "crossover blends outside its window".into())?;
    }

    let (train, query) = small_problem(3);
    let refset = build_reference_set(&train, &SsaConfig::default_for(query.len())).map_err(|e| e.to_string())?;
    let regressor = SpectralRateRegressor::new(60.0).map_err(|e| e.to_string())?;
    let target = TargetSpec::new(train.items()[0].label + 10.0, 5.0).map_err(|e| e.to_string())?;
    let ctx = ObjectiveContext::new(query, MorphSpec::default(), target).map_err(|e| e.to_string())?;
    let cfg = RunConfig {
        population: 12,
        generations: 3,
        seed: 99,
        ..RunConfig::default()
    };
    let go = || run(&ctx, &refset, &regressor, &cfg, &p, 50).map_err(|e| e.to_string());
    let (r1, r2) = (go()?, go()?);
    let bits = |a: &morphcf::CfeArchive| -> Vec<Vec<u64>> { a.all_feasible.iter().map(|c| c.waveform.bit_pattern()).collect() };
    ensure(bits(&r1) == bits(&r2) && r1.per_generation_stats == r2.per_generation_stats, || {
        "repeated run with one seed differs".into()
    })?;
    within(t0.elapsed(), 10)?;
    Ok(format!(
        "endpoints 1/0, locality and convexity over 200 draws, deterministic run ({:.2}s)",
        t0.elapsed().as_secs_f64()
    ))
}

fn brute_fronts(objs: &[ObjectiveVector]) -> Vec<Vec<usize>> {
    let dom = |a: &ObjectiveVector, b: &ObjectiveVector| -> bool {
        if a.feasible != b.feasible {
            return a.feasible;
        }
        let (x, y) = (a.values(), b.values());
        (0..3).all(|i| x[i] <= y[i]) && (0..3).any(|i| x[i] < y[i])
    };
    let mut left: Vec<usize> = (0..objs.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dom(&objs[j], &objs[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn optimizer_oracle() -> Check {
    let t0 = Instant::now();
    let mut rng = StdRng::seed_from_u64(21);
    for case in 0..50 {
        let n = rng.random_range(1..=200);
        // A coarse grid produces ties and duplicates.
        let objs: Vec<ObjectiveVector> = (0..n)
            .map(|_| ObjectiveVector {
                morph: rng.random_range(0..8) as f64,
                maxgrad: rng.random_range(0..8) as f64,
                out: rng.random_range(0..8) as f64,
                feasible: rng.random_bool(0.7),
                prediction: 0.0,
            })
            .collect();
        let got = non_dominated_sort(&objs);
        ensure(got == brute_fronts(&objs), || format!("fronts differ on instance {case} (n={n})"))?;
    }
    for (m, p, want) in [(2usize, 4usize, 5usize), (3, 12, 91)] {
        let got = reference_points(m, p).map_err(|e| e.to_string())?.len();
        ensure(got == want, || format!("Das-Dennis ({m},{p}) gave {got}, want {want}"))?;
    }
    let hv = hypervolume(&[vec![1.0, 2.0], vec![2.0, 1.0]], &[3.0, 3.0]).map_err(|e| e.to_string())?;
    ensure(hv == 3.0, || format!("2-D hypervolume {hv}"))?;
    within(t0.elapsed(), 30)?;
    Ok(format!("50 sorts match, 5 and 91 reference points, HV 3.0 ({:.2}s)", t0.elapsed().as_secs_f64()))
}

fn dtw_by_paths(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
    let here = (a[i] - b[j]).abs();
    if i + 1 == a.len() && j + 1 == b.len() {
        return here;
    }
    let mut best = f64::INFINITY;
    if i + 1 < a.len() {
        best = best.min(dtw_by_paths(a, b, i + 1, j));
    }
    if j + 1 < b.len() {
        best = best.min(dtw_by_paths(a, b, i, j + 1));
    }
    if i + 1 < a.len() && j + 1 < b.len() {
        best = best.min(dtw_by_paths(a, b, i + 1, j + 1));
    }
    here + best
}

fn metric_suite() -> Check {
    let t0 = Instant::now();
    let mut rng = StdRng::seed_from_u64(8);
    for pair in 0..20 {
        let a: Vec<f64> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(-3..=3) as f64).collect();
        let b: Vec<f64> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(-3..=3) as f64).collect();
        let got = dtw(&a, &b, None).map_err(|e| e.to_string())?;
        let want = dtw_by_paths(&a, &b, 0, 0);
        ensure(got == want, || format!("pair {pair}: dtw {got} vs path oracle {want}"))?;
    }
    ensure(dtw(&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0, 0.0], None).ok() == Some(0.0), || "insertion example".into())?;

    let kl = kl_divergence(&[0.5, 0.5], &[0.9, 0.1]);
    let want = 0.5 * (5.0f64 / 9.0).ln() + 0.5 * 5.0f64.ln();
    ensure((kl - 0.5108).abs() < 1e-3 && (kl - want).abs() < 1e-9, || format!("KL {kl}"))?;

    let target = TargetSpec::new(80.0, 5.0).map_err(|e| e.to_string())?;
    let v = validity(&[78.0, 82.0, 90.0], &target).map_err(|e| e.to_string())?;
    ensure(v == 2.0 / 3.0, || format!("validity {v}"))?;
    ensure(validity(&[80.0; 4], &target).ok() == Some(1.0), || "validity at y".into())?;
    ensure(validity(&[90.0; 4], &target).ok() == Some(0.0), || "validity at y+2δ".into())?;

    let items = [79.0, 81.0, 84.0, 90.0, 100.0]
        .iter()
        .enumerate()
        .map(|(i, &l)| LabeledSeries::new(ts(vec![i as f64; 8]), l).unwrap())
        .collect();
    let train = Dataset::new("p", items).map_err(|e| e.to_string())?;
    let xp = ts(vec![0.0; 8]);
    let p5 = plausibility(&xp, 80.0, &train, 5, 5.0, None).map_err(|e| e.to_string())?;
    ensure(p5 == 0.6, || format!("plausibility over five labels {p5}"))?;
    let p1 = plausibility(&train.items()[1].series, 81.0, &train, 1, 5.0, None).map_err(|e| e.to_string())?;
    ensure(p1 == 1.0, || format!("self-neighbourhood plausibility {p1}"))?;
    within(t0.elapsed(), 30)?;
    Ok(format!("20 DTW pairs match path enumeration, KL {kl:.4}, hand examples exact ({:.2}s)", t0.elapsed().as_secs_f64()))
}

fn generation_check(run: &GenerateRun, elapsed: Duration) -> Check {
    let mut ratios_num = Vec::new();
    let mut ratios_den = Vec::new();
    let mut sizes = Vec::new();
    for (i, outcome) in &run.outcomes {
        let o = outcome.as_ref().map_err(|e| format!("instance {i} failed: {e}"))?;
        let r = &o.report;
        ensure(r.cfe.validity == Some(1.0), || format!("instance {i} validity {:?}", r.cfe.validity))?;
        ensure(o.archive.len() >= 20, || format!("instance {i} archive size {}", o.archive.len()))?;
        sizes.push(o.archive.len() as f64);
        let hv: Vec<f64> = o.archive.per_generation_stats.iter().map(|s| s.hypervolume).collect();
        ensure(hv.windows(2).all(|w| w[1] >= w[0]), || format!("instance {i} hypervolume decreases"))?;
        let stats = &o.archive.per_generation_stats;
        ratios_den.push(stats[1].median_morph);
        ratios_num.push(stats.last().unwrap().median_morph);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    let ratio = median(&mut ratios_num) / median(&mut ratios_den);
    ensure(ratio <= 0.3, || format!("O_morph ratio G30/G1 = {ratio:.3}"))?;
    within(elapsed, 300)?;
    Ok(format!(
        "{} instances valid, mean archive {:.0}, HV monotone, O_morph G30/G1 = {ratio:.3} ({:.1}s)",
        run.outcomes.len(),
        sizes.iter().sum::<f64>() / sizes.len() as f64,
        elapsed.as_secs_f64()
    ))
}

fn nun_check(run: &GenerateRun) -> Check {
    for (i, outcome) in &run.outcomes {
        let r = &outcome.as_ref().map_err(|e| format!("instance {i} failed: {e}"))?.report;
        let label = r.nun.label.ok_or_else(|| format!("instance {i}: no NUN label in the target interval"))?;
        ensure(label >= r.target_lower && label <= r.target_upper, || {
            format!("instance {i}: NUN label {label} outside [{}, {}]", r.target_lower, r.target_upper)
        })?;
        ensure(r.nun.report.diversity == 0, || format!("instance {i}: NUN diversity {}", r.nun.report.diversity))?;
        ensure(r.cfe.diversity > r.nun.report.diversity, || format!("instance {i}: archive not larger than NUN"))?;
    }
    Ok(format!("{} NUN labels inside the target, NUN diversity 0", run.outcomes.len()))
}

fn uncertainty_check() -> Check {
    let t0 = Instant::now();
    let run = run_uncertainty(&config("uncertainty.toml")).map_err(|e| format!("{e:#}"))?;
    let elapsed = t0.elapsed();
    let bins = &run.bins;
    let gap = bins
        .iter()
        .position(|b| b.lower == 100.0 && b.upper == 110.0)
        .ok_or("no [100,110) bin")?;
    let argmax = |f: &dyn Fn(&morphcf::uncertainty::BinReport) -> Option<f64>| {
        bins.iter()
            .enumerate()
            .filter_map(|(i, b)| f(b).map(|v| (i, v)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    };
    let nll_at = argmax(&|b| b.mean_kde_nll);
    let var_at = argmax(&|b| b.mean_cfe_variance);
    let pairs: Vec<(f64, f64)> = bins
        .iter()
        .filter_map(|b| Some((b.mean_bootstrap_ci_width?, b.mean_cfe_ci_width?)))
        .collect();
    let (boot, cfe): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let rho = spearman(&boot, &cfe).ok_or("spearman undefined")?;
    let name = |i: Option<usize>| i.map_or("none".to_string(), |i| format!("[{},{})", bins[i].lower, bins[i].upper));
    ensure(nll_at == Some(gap), || format!("max KDE NLL in {}", name(nll_at)))?;
    ensure(var_at == Some(gap), || format!("max CFE variance in {}", name(var_at)))?;
    ensure(rho > 0.0, || format!("spearman {rho:.3}"))?;
    within(elapsed, 600)?;
    Ok(format!(
        "gap bin holds max NLL {:.2} and max CFE variance {:.1}, spearman {rho:.2} ({:.1}s)",
        bins[gap].mean_kde_nll.unwrap_or(f64::NAN),
        bins[gap].mean_cfe_variance.unwrap_or(f64::NAN),
        elapsed.as_secs_f64()
    ))
}

fn report(id: usize, name: &str, result: &Check) -> bool {
    match result {
        Ok(detail) => println!("criterion {id} PASS {name}: {detail}"),
        Err(why) => println!("criterion {id} FAIL {name}: {why}"),
    }
    result.is_ok()
}

fn main() {
    let mut ok = true;
    ok &= report(1, "descriptor suite", &descriptor_suite());
    ok &= report(2, "operator suite", &operator_suite());
    ok &= report(3, "optimizer oracle", &optimizer_oracle());

    let t0 = Instant::now();
    let generated = run_generate(&config("generation.toml")).map_err(|e| format!("{e:#}"));
    let elapsed = t0.elapsed();
    let (c4, c7) = match &generated {
        Ok(run) => (generation_check(run, elapsed), nun_check(run)),
        Err(e) => (Err(e.clone()), Err(e.clone())),
    };
    ok &= report(4, "end-to-end generation", &c4);
    ok &= report(5, "metric suite", &metric_suite());
    ok &= report(6, "uncertainty pattern", &uncertainty_check());
    ok &= report(7, "NUN baseline", &c7);
    if !ok {
        std::process::exit(1);
    }
}
