use llmsr::data::{load_builtin, Dataset};
use llmsr::optimize::{fit, fit_from, refits, repeat_fit, FitConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Closed-form least-squares line y = a + b x; returns its MSE.
fn best_line_mse(d: &Dataset) -> f64 {
    let n = d.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..d.len() {
        let (x, y) = (d.x(i)[0], d.y(i));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let a = (sy - b * sx) / n;
    (0..d.len())
        .map(|i| (a + b * d.x(i)[0] - d.y(i)).powi(2))
        .sum::<f64>()
        / n
}

#[test]
fn langmuir_beats_best_line() {
    let d = load_builtin("langmuir").unwrap();
    let r = fit(d.target.as_ref().unwrap(), &d, &FitConfig::default()).unwrap();
    assert!(r.mse < best_line_mse(&d), "{} vs {}", r.mse, best_line_mse(&d));
}

#[test]
fn dual_site_nests_single_site() {
    let d = load_builtin("dual_site_langmuir").unwrap();
    let cfg = FitConfig::default();
    let single = fit(&d.parse("c1*x1/(c2+x1)").unwrap(), &d, &cfg).unwrap();
    let dual = fit(d.target.as_ref().unwrap(), &d, &cfg).unwrap();
    assert!(dual.mse <= single.mse + 1e-12, "{} > {}", dual.mse, single.mse);
}

#[test]
fn rosenbrock_surrogate() {
    // rows encode MSE = ((c1-1)^2 + 100 (c2-c1^2)^2) / 2
    let d = Dataset::new(
        "rosenbrock",
        vec!["x1".into(), "x2".into()],
        "y",
        vec![vec![1.0, 0.0, 1.0], vec![0.0, 10.0, 0.0]],
    )
    .unwrap();
    let e = d.parse("x1*c1+x2*(c2-c1*c1)").unwrap();
    for seed in 0..10 {
        let cfg = FitConfig {
            hops: 50,
            seed,
            ..FitConfig::default()
        };
        let r = fit_from(&e, &d, &cfg, &[-1.2, 1.0]).unwrap();
        assert!(2.0 * r.mse < 1e-6, "seed {seed}: {}", r.mse);
    }
}

#[test]
fn sr_similar_forms_reach_the_same_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let x: f64 = rng.random_range(0.5..5.0);
            vec![x, 1.3 + 0.7 * x + rng.random_range(-0.1..0.1)]
        })
        .collect();
    let d = Dataset::new("r", vec!["x1".into()], "y", rows).unwrap();
    let cfg = FitConfig::default();
    let a = fit(&d.parse("c1*(c2+x1)").unwrap(), &d, &cfg).unwrap();
    let b = fit(&d.parse("c1+c2*x1").unwrap(), &d, &cfg).unwrap();
    assert!((a.mse - b.mse).abs() < 1e-10, "{} vs {}", a.mse, b.mse);
}

#[test]
fn monotone_from_finite_start() {
    let d = load_builtin("bode").unwrap();
    for src in ["c1*exp(c2*x1)+c3", "c1*x1^c2+c3", "c1+c2*x1*x1"] {
        let e = d.parse(src).unwrap();
        let start: f64 = (0..d.len())
            .map(|i| (e.evaluate(e.initial_guess(), d.x(i)).unwrap().unwrap() - d.y(i)).powi(2))
            .sum::<f64>()
            / d.len() as f64;
        let r = fit(&e, &d, &FitConfig::default()).unwrap();
        assert!(r.mse <= start, "{src}");
    }
}

#[test]
fn refits_prefix_is_non_increasing() {
    let d = load_builtin("nikuradse").unwrap();
    let e = d.parse("c1+c2/(x1*x2)+c3*x1^c4").unwrap();
    let cfg = FitConfig {
        hops: 3,
        refits: 6,
        seed: 5,
        ..FitConfig::default()
    };
    let all = refits(&e, &d, &cfg).unwrap();
    let mut last = f64::INFINITY;
    for k in 1..=6 {
        let r = repeat_fit(&e, &d, &FitConfig { refits: k, ..cfg.clone() }).unwrap();
        assert!(r.mae <= last);
        last = r.mae;
        assert_eq!(r, *all.results[..k].iter().flatten().min_by(|a, b| a.mae.total_cmp(&b.mae)).unwrap());
    }
}
