use mipool::frame::LongTable;
use mipool::imputer::{impute_monotone_reg, impute_monotone_reg_par, impute_single, ImputationSpec};

/// Pairs at each x with residuals ±0.5, so the least-squares line is exactly
/// y = 2x; the row at x = 3 is missing.
fn paired_line(xs: &[f64]) -> LongTable {
    let mut csv = String::from("x,y\n");
    for &x in xs {
        csv.push_str(&format!("{x},{}\n{x},{}\n", 2.0 * x + 0.5, 2.0 * x - 0.5));
    }
    csv.push_str("3,.\n");
    LongTable::from_csv(csv.as_bytes(), &[]).unwrap()
}

fn imputed_values(table: &LongTable, spec: &ImputationSpec) -> Vec<f64> {
    let row = table.n_rows() - 1;
    impute_monotone_reg(table, spec)
        .unwrap()
        .iter()
        .map(|c| c.table.numeric("y").unwrap()[row].unwrap())
        .collect()
}

#[test]
fn imputations_center_on_regression_prediction() {
    let t = paired_line(&[1.0, 2.0, 4.0, 5.0]);
    let v = imputed_values(&t, &ImputationSpec::new("y", "x", 10_000, 17));
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean - 6.0).abs() < 0.05, "mean {mean}");
}

#[test]
fn imputation_variance_matches_posterior_predictive() {
    // predictive law is x0'β̂ + sqrt(RSS/ν (1 + h)) t_ν, variance RSS (1 + h) / (ν - 2)
    let xs = [1.0, 2.0, 4.0, 5.0, 6.0, 7.0];
    let t = paired_line(&xs);
    let obs: Vec<f64> = xs.iter().flat_map(|&x| [x, x]).collect();
    let n = obs.len() as f64;
    let xbar = obs.iter().sum::<f64>() / n;
    let sxx: f64 = obs.iter().map(|x| (x - xbar).powi(2)).sum();
    let h = 1.0 / n + (3.0 - xbar).powi(2) / sxx;
    let rss = 0.25 * n;
    let nu = n - 2.0;
    let oracle = rss * (1.0 + h) / (nu - 2.0);

    let v = imputed_values(&t, &ImputationSpec::new("y", "x", 20_000, 3));
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    assert!((var / oracle - 1.0).abs() < 0.08, "var {var} vs {oracle}");
}

#[test]
fn between_imputation_variance_is_positive() {
    let t = paired_line(&[1.0, 2.0, 4.0, 5.0]);
    let v = imputed_values(&t, &ImputationSpec::new("y", "x", 5, 1));
    let mean = v.iter().sum::<f64>() / 5.0;
    assert!(v.iter().map(|y| (y - mean).powi(2)).sum::<f64>() > 0.0);
}

#[test]
fn results_do_not_depend_on_evaluation_order() {
    let t = paired_line(&[1.0, 2.0, 4.0, 5.0]);
    let spec = ImputationSpec::new("y", "x", 40, 99);
    let seq = impute_monotone_reg(&t, &spec).unwrap();
    let par = rayon::ThreadPoolBuilder::new()
        .num_threads(6)
        .build()
        .unwrap()
        .install(|| impute_monotone_reg_par(&t, &spec).unwrap());
    assert_eq!(seq, par);
    for l in (1..=40).rev() {
        assert_eq!(impute_single(&t, &spec, l).unwrap(), seq[l - 1]);
    }
    assert!(impute_single(&t, &spec, 41).is_err());
}

#[test]
fn categorical_predictor_imputes_within_group() {
    let mut csv = String::from("g,y\n");
    for i in 0..20 {
        let (g, base) = if i % 2 == 0 { ("a", 0.0) } else { ("b", 100.0) };
        csv.push_str(&format!("{g},{}\n", base + (i % 4) as f64 * 0.1));
    }
    csv.push_str("a,.\nb,.\n");
    let t = LongTable::from_csv(csv.as_bytes(), &["g"]).unwrap();
    let out = impute_monotone_reg(&t, &ImputationSpec::new("y", "g", 20, 5)).unwrap();
    for c in &out {
        let y = c.table.numeric("y").unwrap();
        assert!(y[20].unwrap().abs() < 5.0);
        assert!((y[21].unwrap() - 100.0).abs() < 5.0);
    }
}
