//! Distribution tails and Welch/Games-Howell results checked against values
//! frozen from an independent reference implementation (see `data/*.py`).

use ledger_signal::stats::{
    f_upper_tail, games_howell, studentized_range_quantile, t_two_sided, welch_anova, welch_t_test,
    SampleGroup,
};
use serde_json::Value;

fn load(name: &str) -> Value {
    let path = format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

fn close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(1.0)
}

#[test]
fn f_tail_matches_reference() {
    let data = load("tail_reference.json");
    let mut worst = 0.0f64;
    for row in data["f_sf"].as_array().unwrap() {
        let r: Vec<f64> = row.as_array().unwrap().iter().map(f).collect();
        let got = f_upper_tail(r[0], r[1], r[2]).unwrap();
        worst = worst.max((got - r[3]).abs());
        assert!((got - r[3]).abs() <= 1e-12, "F({}, {}) at {}: {got} vs {}", r[1], r[2], r[0], r[3]);
    }
    eprintln!("worst F tail abs error {worst:e}");
}

#[test]
fn t_tail_matches_reference() {
    let data = load("tail_reference.json");
    for row in data["t_two_sided"].as_array().unwrap() {
        let r: Vec<f64> = row.as_array().unwrap().iter().map(f).collect();
        let got = t_two_sided(r[0], r[1]).unwrap();
        assert!((got - r[2]).abs() <= 1e-12, "t({}) at {}: {got} vs {}", r[1], r[0], r[2]);
    }
}

fn groups_of(case: &Value) -> Vec<SampleGroup> {
    case["groups"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            SampleGroup::new(format!("g{i}"), g.as_array().unwrap().iter().map(f).collect()).unwrap()
        })
        .collect()
}

#[test]
fn welch_anova_matches_reference() {
    let data = load("welch_reference.json");
    for (n, case) in data["cases"].as_array().unwrap().iter().enumerate() {
        let r = welch_anova(&groups_of(case)).unwrap();
        let w = &case["welch"];
        assert!(close(r.f, f(&w["f"]), 1e-9), "case {n}: F {} vs {}", r.f, w["f"]);
        assert_eq!(r.df1, f(&w["df1"]));
        assert!(close(r.df2, f(&w["df2"]), 1e-9), "case {n}: df2 {} vs {}", r.df2, w["df2"]);
        assert!((r.p - f(&w["p"])).abs() <= 1e-9, "case {n}: p {} vs {}", r.p, w["p"]);
    }
}

#[test]
fn welch_t_matches_reference() {
    let data = load("welch_reference.json");
    let mut seen = 0;
    for case in data["cases"].as_array().unwrap() {
        let Some(wt) = case.get("welch_t") else { continue };
        let g = groups_of(case);
        let r = welch_t_test(&g[0], &g[1]).unwrap();
        assert!(close(r.t, f(&wt["t"]), 1e-9));
        assert!((r.p - f(&wt["p"])).abs() <= 1e-9);
        seen += 1;
    }
    assert!(seen > 0);
}

#[test]
fn games_howell_matches_reference() {
    let data = load("welch_reference.json");
    let alpha = f(&data["alpha"]);
    for (n, case) in data["cases"].as_array().unwrap().iter().enumerate() {
        let groups = groups_of(case);
        let r = games_howell(&groups, alpha).unwrap();
        for want in case["games_howell"].as_array().unwrap() {
            let (i, j) = (want["i"].as_u64().unwrap(), want["j"].as_u64().unwrap());
            let got = r.pair(&format!("g{i}"), &format!("g{j}")).unwrap();
            assert!(close(got.diff, f(&want["diff"]), 1e-12));
            assert!(close(got.df, f(&want["df"]), 1e-9));
            assert!(close(got.q, f(&want["q"]), 1e-9));
            assert!((got.p - f(&want["p"])).abs() <= 1e-6, "case {n} ({i},{j}): p {} vs {}", got.p, want["p"]);
            assert!((got.ci_low - f(&want["ci_low"])).abs() <= 1e-6, "case {n} ({i},{j}): lo {} vs {}", got.ci_low, want["ci_low"]);
            assert!((got.ci_high - f(&want["ci_high"])).abs() <= 1e-6);
            assert_eq!(got.significant, got.p < alpha);
            assert_eq!(got.significant, got.ci_low > 0.0 || got.ci_high < 0.0, "case {n} ({i},{j})");
        }
    }
}

#[test]
fn q_crit_matches_reference() {
    let data = load("welch_reference.json");
    for row in data["tukey_q_crit_0_05"].as_array().unwrap() {
        let (k, df) = (row["k"].as_u64().unwrap() as u32, f(&row["df"]));
        let got = studentized_range_quantile(0.05, k, df).unwrap();
        assert!((got - f(&row["q_crit"])).abs() <= 1e-6, "k={k} df={df}: {got} vs {}", row["q_crit"]);
    }
}
