//! Property tests over randomly generated small datasets.

mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use weaksep::bootstrap::{align_sign, pvalue_from_statistics};
use weaksep::datagrid::{center, read_csv_long, read_mwfd1, write_csv_long, write_mwfd1, GridAxis, MultiwayDataset};
use weaksep::marginal_fpca::{full_scores, marginal_fpca, select_pk};
use weaksep::plv::{compute_plv, read_phase_tensors, write_phase_tensors, PhaseTensor};
use weaksep::simlab::{RejectionTable, TableRow};
use weaksep::weaksep_test::{
    analyze, analyze_with, chi2_mixture_pvalue, chi2_test, estimate_theta, welch_satterthwaite, PkRule, ThetaRoute,
};

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn dataset() -> impl Strategy<Value = MultiwayDataset> {
    (any::<u64>(), 6usize..25, 4usize..9, 4usize..9).prop_map(|(seed, n, ns, nt)| common::random_dataset(seed, n, ns, nt))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigenvectors_are_weighted_orthonormal(data in dataset()) {
        let eig = marginal_fpca(&center(&data).unwrap()).unwrap();
        for (m, axis) in [(eig.psi(), data.s_axis()), (eig.phi(), data.t_axis())] {
            for a in 0..m.ncols() {
                for b in 0..m.ncols() {
                    let ip = axis.inner(m.column(a).as_slice(), m.column(b).as_slice());
                    let want = if a == b { 1.0 } else { 0.0 };
                    prop_assert!((ip - want).abs() <= 1e-8, "({a}, {b}): {ip}");
                }
            }
        }
    }

    #[test]
    fn parseval_and_trace_identities(data in dataset()) {
        let c = center(&data).unwrap();
        let eig = marginal_fpca(&c).unwrap();
        let scores = full_scores(&c, &eig).unwrap();
        let (sw, tw) = (data.s_axis().weights(), data.t_axis().weights());
        let nt = tw.len();
        let mut total = 0.0;
        for i in 0..c.n() {
            let r = c.residual(i);
            let norm: f64 = r.iter().enumerate().map(|(x, v)| sw[x / nt] * tw[x % nt] * v * v).sum();
            let energy: f64 = scores.subject(i).iter().map(|x| x * x).sum();
            prop_assert!(rel(norm, energy) <= 1e-8 || norm < 1e-20);
            total += norm;
        }
        let mean = total / c.n() as f64;
        prop_assert!(rel(eig.lambda().iter().sum(), mean) <= 1e-8);
        prop_assert!(rel(eig.gamma().iter().sum(), mean) <= 1e-8);
        for j in 0..scores.p() {
            let row: f64 = (0..scores.k()).map(|k| scores.eta(j, k)).sum();
            prop_assert!(rel(row, eig.lambda()[j]) <= 1e-8);
        }
        for k in 0..scores.k() {
            let col: f64 = (0..scores.p()).map(|j| scores.eta(j, k)).sum();
            prop_assert!(rel(col, eig.gamma()[k]) <= 1e-8);
        }
    }

    #[test]
    fn scaling_covariance(data in dataset(), c in prop_oneof![0.05f64..20.0, -20.0f64..-0.05]) {
        let base = center(&data).unwrap();
        let eig = marginal_fpca(&base).unwrap();
        let scores = full_scores(&base, &eig).unwrap();
        let scaled_c = center(&data.scaled(c)).unwrap();
        let eig2 = marginal_fpca(&scaled_c).unwrap();
        let scores2 = full_scores(&scaled_c, &eig2).unwrap();
        let c2 = c * c;
        for (a, b) in eig.lambda().iter().zip(eig2.lambda()) {
            prop_assert!(rel(a * c2, *b) <= 1e-10 || a * c2 < 1e-12 * eig.lambda()[0] * c2);
        }
        for (a, b) in eig.gamma().iter().zip(eig2.gamma()) {
            prop_assert!(rel(a * c2, *b) <= 1e-10 || a * c2 < 1e-12 * eig.gamma()[0] * c2);
        }
        prop_assert_eq!((scores.p(), scores.k()), (scores2.p(), scores2.k()));
        let lead = scores.eta(0, 0).max(1e-300);
        for j in 0..scores.p() {
            for k in 0..scores.k() {
                // η̂ scales by c²; tiny entries are compared on the leading scale
                let (a, b) = (scores.eta(j, k) * c2, scores2.eta(j, k));
                prop_assert!((a - b).abs() <= 1e-10 * lead * c2);
            }
        }
        // scores scale by c up to the per-component sign convention
        let (p, k) = (2.min(scores.p()), 2.min(scores.k()));
        for i in 0..scores.n() {
            for j in 0..p {
                for kk in 0..k {
                    let (a, b) = (scores.chi(i, j, kk) * c, scores2.chi(i, j, kk));
                    prop_assert!((a.abs() - b.abs()).abs() <= 1e-10 * (lead * c2).sqrt());
                }
            }
        }
        let sel = select_pk(&eig, &scores);
        let sel2 = select_pk(&eig2, &scores2);
        prop_assert_eq!((sel.p, sel.k), (sel2.p, sel2.k));
    }

    #[test]
    fn statistic_scaling_laws(data in dataset(), c in 0.1f64..10.0) {
        let Ok(a) = analyze(&data, PkRule::Fixed(2, 2)) else { return Ok(()) };
        let b = analyze(&data.scaled(c), PkRule::Fixed(2, 2)).unwrap();
        let c2 = c * c;
        let c4 = c2 * c2;
        prop_assert!(rel(a.sn * c4, b.sn) <= 1e-10);
        let t_scale = a.tn.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.tn.values().iter().zip(b.tn.values()) {
            prop_assert!((x.abs() * c2 - y.abs()).abs() <= 1e-10 * t_scale * c2);
        }
        let (ta, _) = estimate_theta(&a, ThetaRoute::Influence).unwrap();
        let (tb, _) = estimate_theta(&b, ThetaRoute::Influence).unwrap();
        prop_assert!(rel(ta.trace() * c4, tb.trace()) <= 1e-10);
        let (ba, da) = welch_satterthwaite(&ta).unwrap();
        let (bb, db) = welch_satterthwaite(&tb).unwrap();
        prop_assert!(rel(ba * c4, bb) <= 1e-10);
        prop_assert!(rel(da, db) <= 1e-10);
        let pa = chi2_test(&a, ThetaRoute::Influence).unwrap().p_value;
        let pb = chi2_test(&b, ThetaRoute::Influence).unwrap().p_value;
        prop_assert!((pa - pb).abs() <= 1e-10);
    }

    #[test]
    fn sign_flips_leave_the_test_unchanged(data in dataset(), j in 0usize..4, k in 0usize..4) {
        let Ok(a) = analyze(&data, PkRule::Fve) else { return Ok(()) };
        let r = chi2_test(&a, ThetaRoute::Influence).unwrap();
        let (ms, mt) = a.eig.numerical_rank();
        for eig in [a.eig.with_flipped_psi(j % ms), a.eig.with_flipped_phi(k % mt)] {
            let b = analyze_with(a.centered.clone(), eig, PkRule::Fve).unwrap();
            let s = chi2_test(&b, ThetaRoute::Influence).unwrap();
            prop_assert!(rel(r.s_n, s.s_n) <= 1e-12);
            prop_assert!(rel(r.trace_theta.unwrap(), s.trace_theta.unwrap()) <= 1e-12);
            prop_assert!(rel(r.trace_theta_sq.unwrap(), s.trace_theta_sq.unwrap()) <= 1e-12);
            prop_assert!((r.p_value - s.p_value).abs() <= 1e-12);
        }
    }

    #[test]
    fn theta_routes_agree(data in dataset()) {
        let Ok(a) = analyze(&data, PkRule::Fixed(2, 3)) else { return Ok(()) };
        let (x, _) = estimate_theta(&a, ThetaRoute::Influence).unwrap();
        let (y, _) = estimate_theta(&a, ThetaRoute::NineCase).unwrap();
        let scale = x.matrix().amax();
        for (u, v) in x.matrix().iter().zip(y.matrix().iter()) {
            prop_assert!(rel(*u, *v) <= 1e-10 || (u - v).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn centering_is_idempotent(data in dataset()) {
        let once = center(&data).unwrap();
        let twice = center(&once.to_dataset()).unwrap();
        let scale = data.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in once.residuals().iter().zip(twice.residuals()) {
            prop_assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn binary_and_csv_round_trips(data in dataset()) {
        let mut bin = Vec::new();
        write_mwfd1(&data, &mut bin).unwrap();
        let back = read_mwfd1(&bin).unwrap();
        prop_assert_eq!(&back, &data);
        let mut text = Vec::new();
        write_csv_long(&data, &mut text).unwrap();
        let back = read_csv_long(&text[..], Some(data.s_axis().clone()), Some(data.t_axis().clone())).unwrap();
        let same_bits = back.values().iter().zip(data.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same_bits);
    }

    #[test]
    fn mixture_pvalue_is_scale_free(sn in 0.0f64..50.0, beta in 0.01f64..10.0, d in 0.2f64..30.0, c in 0.1f64..10.0) {
        let p = chi2_mixture_pvalue(sn, beta, d).unwrap();
        let q = chi2_mixture_pvalue(c * c * sn, c * c * beta, d).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p - q).abs() <= 1e-12);
    }

    #[test]
    fn bootstrap_pvalue_counts_strict_exceedances(sn in -1.0f64..1.0, stats in prop::collection::vec(-1.0f64..1.0, 1..50)) {
        let p = pvalue_from_statistics(sn, &stats);
        let above = stats.iter().filter(|&&s| s > sn).count();
        prop_assert_eq!(p, above as f64 / stats.len() as f64);
    }

    #[test]
    fn align_sign_never_points_away(v in prop::collection::vec(-1.0f64..1.0, 2..8), seed in any::<u64>()) {
        let r: Vec<f64> = v.iter().enumerate().map(|(i, x)| x + ((seed >> (i % 60)) & 1) as f64 - 0.5).collect();
        let w = vec![0.7; v.len()];
        let out = align_sign(&v, &r, &w);
        let ip: f64 = out.iter().zip(&r).zip(&w).map(|((a, b), c)| a * b * c).sum();
        prop_assert!(ip >= 0.0);
        let flipped = out.iter().zip(&v).all(|(a, b)| *a == -b);
        prop_assert!(out == v || flipped);
    }

    #[test]
    fn plv_range_and_offset_invariance(
        phases in prop::collection::vec(-10.0f64..10.0, 2 * 3 * 2 * 3),
        offset in -50.0f64..50.0,
    ) {
        let (n_t, ns, nt) = (3, 2, 3);
        let tensor = |v: Vec<f64>| PhaseTensor::new(n_t, GridAxis::uniform(ns).unwrap(), GridAxis::uniform(nt).unwrap(), v).unwrap();
        let (a, b) = phases.split_at(n_t * ns * nt);
        let plv = compute_plv(&tensor(a.to_vec()), &tensor(b.to_vec())).unwrap();
        prop_assert!(plv.iter().all(|v| (0.0..=1.0).contains(v)));
        let shift = |x: &[f64]| x.iter().map(|p| p + offset).collect::<Vec<_>>();
        let moved = compute_plv(&tensor(shift(a)), &tensor(shift(b))).unwrap();
        for (x, y) in plv.iter().zip(&moved) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let wrapped: Vec<f64> = a.iter().enumerate().map(|(i, p)| p + 2.0 * PI * (i % 3) as f64).collect();
        let same = compute_plv(&tensor(wrapped), &tensor(b.to_vec())).unwrap();
        for (x, y) in plv.iter().zip(&same) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn phase_file_round_trip(phases in prop::collection::vec(-4.0f64..4.0, 2 * 2 * 2 * 3)) {
        let tensor = |v: &[f64]| PhaseTensor::new(2, GridAxis::uniform(2).unwrap(), GridAxis::uniform(3).unwrap(), v.to_vec()).unwrap();
        let subjects = vec![tensor(&phases[..12]), tensor(&phases[12..])];
        let mut buf = Vec::new();
        write_phase_tensors(&subjects, &mut buf).unwrap();
        prop_assert_eq!(read_phase_tensors(&buf).unwrap(), subjects);
    }

    #[test]
    fn rejection_table_round_trip(
        rates in prop::collection::vec(prop::option::of(0usize..=40), 1..5),
        seed in any::<u64>(),
    ) {
        let columns: Vec<String> = (0..rates.len()).map(|c| if c == 0 { "FVE".into() } else { format!("{c}x{c}") }).collect();
        let table = RejectionTable {
            generator: "ChaCha8".into(),
            seed,
            columns,
            rows: vec![TableRow {
                variant: "V1".into(),
                distribution: "normal".into(),
                n: 50,
                off_diagonal: "H0".into(),
                trials: 40,
                rates: rates.iter().map(|r| r.map(|x| x as f64 / 40.0)).collect(),
                errors: vec![None; rates.len()],
            }],
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = RejectionTable::read_csv(&buf[..]).unwrap();
        prop_assert_eq!(back.seed, seed);
        prop_assert_eq!(&back.columns, &table.columns);
        prop_assert_eq!(&back.rows[0].rates, &table.rows[0].rates);
    }
}
