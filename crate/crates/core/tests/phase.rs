mod common;

use common::{complement, near_boundary, oracle, random_gains, random_mask, random_sigs};
use covdet::linalg::{self, CMat, RMat};
use covdet::lp::{LpStatus, VarSign};
use covdet::model::SystemConfig;
use covdet::phase::{self, PhaseRegime, RealExpansion, SweepSettings};
use covdet::rng;
use num_complex::Complex64;
use rand::Rng;

/// `[Re S̃; Im S̃]` with column `n` of `S̃` equal to `s_n* ⊗ s_n`.
fn complex_kr_realified(s: &CMat) -> RMat {
    let (l, n) = s.shape();
    let mut m = RMat::zeros(2 * l * l, n);
    for k in 0..n {
        for i in 0..l {
            for j in 0..l {
                let v = s[(i, k)].conj() * s[(j, k)];
                m[(i * l + j, k)] = v.re;
                m[(l * l + i * l + j, k)] = v.im;
            }
        }
    }
    m
}

/// Orthonormal basis of the kernel, as columns.
fn kernel(m: &RMat, rtol: f64) -> RMat {
    let n = m.ncols();
    let mut padded = RMat::zeros(m.nrows().max(n), n);
    padded.rows_mut(0, m.nrows()).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let smax = svd.singular_values.max();
    let null: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] <= rtol * smax.max(1e-300)).collect();
    v_t.select_rows(&null).transpose()
}

#[test]
fn expansion_of_one_and_i_by_hand() {
    // s* ⊗ s = (1, i, −i, 1): symmetric rows Re(s1*s1), Re(s1*s2), Re(s2*s2)
    // = 1, 0, 1 and the antisymmetric row Im(s1* s2) = 1
    let s = CMat::from_column_slice(2, 1, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
    let e = phase::khatri_rao_real_rows(&s, None).unwrap();
    assert_eq!(e.matrix, RMat::from_column_slice(4, 1, &[1.0, 0.0, 1.0, 1.0]));
    let scaled = phase::khatri_rao_real_rows(&s, Some(&[3.0])).unwrap();
    assert_eq!(scaled.matrix, RMat::from_column_slice(4, 1, &[3.0, 0.0, 3.0, 3.0]));
}

#[test]
fn real_signatures_give_zero_antisymmetric_rows() {
    let mut r = rng::stream(2, &[]);
    let s = random_sigs(3, 5, &mut r).map(|z| Complex64::new(z.re, 0.0));
    let e = phase::khatri_rao_real_rows(&s, None).unwrap();
    assert_eq!(e.matrix.nrows(), 9);
    assert!(e.matrix.rows(6, 3).iter().all(|&v| v == 0.0));
}

#[test]
fn expansion_kernel_matches_complex_khatri_rao_kernel() {
    let mut r = rng::stream(3, &[]);
    for _ in 0..200 {
        let l = r.gen_range(1..=3);
        let n = r.gen_range(1..=8);
        let s = random_sigs(l, n, &mut r);
        let e = phase::khatri_rao_real_rows(&s, None).unwrap();
        assert_eq!(e.matrix.nrows(), l * l);
        let full = complex_kr_realified(&s);
        assert_eq!(linalg::numerical_rank(&e.matrix, 1e-10), linalg::numerical_rank(&full, 1e-10), "L={l} N={n}");
        let k = kernel(&e.matrix, 1e-10);
        if k.ncols() > 0 {
            assert!((&full * &k).amax() < 1e-10, "L={l} N={n}");
        }
        let k = kernel(&full, 1e-10);
        if k.ncols() > 0 {
            assert!((&e.matrix * &k).amax() < 1e-10, "L={l} N={n}");
        }
    }
}

#[test]
fn fisher_approaches_gram_form_at_high_noise() {
    let mut r = rng::stream(4, &[]);
    let s = random_sigs(3, 3, &mut r);
    let gammas = [0.7, 1.3, 2.0];
    let noise = 1e6;
    let j = phase::fisher_info_unknown_lsf(&s, &gammas, noise).unwrap().matrix;
    let gram = s.adjoint() * &s;
    for a in 0..3 {
        for b in 0..3 {
            let want = gram[(a, b)].norm_sqr() / (noise * noise);
            assert!((j[(a, b)] - want).abs() <= 1e-5 * want.abs().max(1e-3 / (noise * noise)), "({a},{b}): {} vs {want}", j[(a, b)]);
        }
    }

    let g = [0.5, 1.0, 4.0];
    let j = phase::fisher_info_known_lsf(&s, &g, &[1.0, 0.0, 1.0], noise).unwrap().matrix;
    for a in 0..3 {
        for b in 0..3 {
            let want = g[a] * g[b] * gram[(a, b)].norm_sqr() / (noise * noise);
            assert!((j[(a, b)] - want).abs() <= 1e-5 * want.abs().max(1e-3 / (noise * noise)), "({a},{b})");
        }
    }
}

fn min_eig_sym(m: &RMat) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

#[test]
fn fisher_matrices_are_symmetric_psd_with_the_expansion_kernel() {
    let mut r = rng::stream(5, &[]);
    for case in 0..150 {
        let l = r.gen_range(1..=3);
        let n = r.gen_range(1..=8);
        let s = random_sigs(l, n, &mut r);
        let g = random_gains(n, &mut r);
        let act: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let gammas: Vec<f64> = g.iter().zip(&act).map(|(g, a)| g * a).collect();
        let blocks: Vec<Vec<f64>> = (0..3).map(|_| random_gains(n, &mut r)).collect();

        let cases = [
            (phase::fisher_info_unknown_lsf(&s, &gammas, 1.0).unwrap(), phase::khatri_rao_real_rows(&s, None).unwrap()),
            (phase::fisher_info_known_lsf(&s, &g, &act, 1.0).unwrap(), phase::khatri_rao_real_rows(&s, Some(&g)).unwrap()),
            (
                phase::fisher_info_multicell(&s, &blocks, &act, 1.0).unwrap(),
                phase::khatri_rao_real_rows(&s, None).unwrap().stack_scaled(&blocks).unwrap(),
            ),
        ];
        for (fi, e) in cases {
            let j = &fi.matrix;
            assert_eq!(j, &j.transpose(), "case {case} {:?}", fi.kind);
            let norm = j.norm();
            assert!(min_eig_sym(j) >= -1e-8 * norm, "case {case} {:?}", fi.kind);

            // x^T J x = 0 exactly on the kernel of the expansion
            let rank_j = linalg::numerical_rank(j, 1e-9);
            assert_eq!(rank_j, linalg::numerical_rank(&e.matrix, 1e-9), "case {case} {:?} L={l} N={n}", fi.kind);
            let k = kernel(&e.matrix, 1e-9);
            for c in 0..k.ncols() {
                let x = k.column(c);
                assert!(x.dot(&(j * x)) <= 1e-10 * norm, "case {case}");
            }
        }
    }
}

#[test]
fn no_active_devices_always_holds_with_full_column_rank() {
    let mut r = rng::stream(6, &[]);
    for _ in 0..30 {
        let l = r.gen_range(2..=4);
        let n = r.gen_range(1..=l * l);
        let s = random_sigs(l, n, &mut r);
        let g = random_gains(n, &mut r);
        let none = vec![true; n];
        assert!(phase::condition_known_lsf(&phase::khatri_rao_real_rows(&s, Some(&g)).unwrap(), &none).unwrap().holds);
        assert!(phase::condition_unknown_lsf(&phase::khatri_rao_real_rows(&s, None).unwrap(), &none).unwrap().holds);
        let blocks: Vec<Vec<f64>> = (0..3).map(|_| random_gains(n, &mut r)).collect();
        let d = phase::khatri_rao_real_rows(&s, None).unwrap().stack_scaled(&blocks).unwrap();
        assert!(phase::condition_multicell(&d, &none).unwrap().holds);
    }
}

#[test]
fn one_measurement_four_devices_two_active_fails() {
    let mut r = rng::stream(7, &[]);
    for _ in 0..20 {
        let s = random_sigs(1, 4, &mut r);
        let e = phase::khatri_rao_real_rows(&s, Some(&random_gains(4, &mut r))).unwrap();
        let v = phase::condition_known_lsf(&e, &random_mask(4, 2, &mut r)).unwrap();
        assert!(!v.holds);
        assert_eq!(v.lp_status, covdet::lp::LpStatus::Infeasible);
    }
}

/// Integer expansion as exact rows for the rational oracle.
fn integer_rows(e: &RealExpansion) -> Vec<Vec<i64>> {
    (0..e.matrix.nrows()).map(|i| (0..e.ncols()).map(|j| e.matrix[(i, j)] as i64).collect()).collect()
}

#[test]
fn verdicts_match_exact_primal_cone_problems() {
    let mut r = rng::stream(12, &[]);
    let mut seen = [[0usize; 2]; 2];
    for case_no in 0..300 {
        let l = r.gen_range(1..=2);
        let n = r.gen_range(2..=6);
        let s = CMat::from_fn(l, n, |_, _| Complex64::new(r.gen_range(-2..=2) as f64, r.gen_range(-2..=2) as f64));
        let g: Vec<f64> = (0..n).map(|_| r.gen_range(1..=3) as f64).collect();
        let mask: Vec<bool> = (0..n).map(|_| r.gen_bool(0.5)).collect();

        // known: a kernel vector with the sign pattern, normalized
        let e = phase::khatri_rao_real_rows(&s, Some(&g)).unwrap();
        let mut a = integer_rows(&e);
        a.push(mask.iter().map(|&z| if z { 1 } else { -1 }).collect());
        let mut b = vec![0; a.len()];
        *b.last_mut().unwrap() = 1;
        let sign: Vec<VarSign> = mask.iter().map(|&z| if z { VarSign::NonNeg } else { VarSign::NonPos }).collect();
        let known = phase::condition_known_lsf(&e, &mask).unwrap();
        assert_eq!(known.holds, !oracle(&a, &b, &sign), "case {case_no}: known, {s} {g:?} {mask:?}");
        seen[0][known.holds as usize] += 1;

        // unknown: a kernel vector with x_I >= 0 and weight on I
        let e = phase::khatri_rao_real_rows(&s, None).unwrap();
        let mut a = integer_rows(&e);
        a.push(mask.iter().map(|&z| z as i64).collect());
        let sign: Vec<VarSign> = mask.iter().map(|&z| if z { VarSign::NonNeg } else { VarSign::Free }).collect();
        let unknown = phase::condition_unknown_lsf(&e, &mask).unwrap();
        let exists = mask.iter().any(|&z| z) && oracle(&a, &b, &sign);
        assert_eq!(unknown.lp_status == LpStatus::Feasible, !exists, "case {case_no}: unknown, {s} {mask:?}");
        seen[1][(unknown.lp_status == LpStatus::Feasible) as usize] += 1;
    }
    assert!(seen.iter().flatten().all(|&c| c >= 20), "{seen:?}");
}

#[test]
fn known_fading_verdict_is_symmetric_under_complement() {
    let mut r = rng::stream(8, &[]);
    let mut seen = [0usize; 2];
    for _ in 0..150 {
        let (s, g, mask) = near_boundary(&mut r);
        let e = phase::khatri_rao_real_rows(&s, Some(&g)).unwrap();
        let v = phase::condition_known_lsf(&e, &mask).unwrap().holds;
        assert_eq!(v, phase::condition_known_lsf(&e, &complement(&mask)).unwrap().holds);
        seen[v as usize] += 1;
    }
    assert!(seen[0] >= 10 && seen[1] >= 10, "{seen:?}");
}

#[test]
fn known_fading_failure_implies_unknown_fading_failure() {
    let mut r = rng::stream(9, &[]);
    let mut known_fails = 0;
    for _ in 0..250 {
        let (s, g, mask) = near_boundary(&mut r);
        let known = phase::condition_known_lsf(&phase::khatri_rao_real_rows(&s, Some(&g)).unwrap(), &mask).unwrap();
        let unknown = phase::condition_unknown_lsf(&phase::khatri_rao_real_rows(&s, None).unwrap(), &mask).unwrap();
        if !known.holds {
            known_fails += 1;
            assert!(!unknown.holds);
        }
        if unknown.holds {
            assert!(unknown.support_rank_ok && unknown.lp_status == covdet::lp::LpStatus::Feasible);
        }
    }
    assert!(known_fails >= 10, "{known_fails}");
}

#[test]
fn unknown_fading_is_not_symmetric_for_large_supports() {
    let mut r = rng::stream(10, &[]);
    let found = (0..300).any(|_| {
        let l = 4;
        let n = r.gen_range(20..=28);
        let k = r.gen_range(n * 3 / 4..n);
        let s = random_sigs(l, n, &mut r);
        let g = random_gains(n, &mut r);
        let mask = random_mask(n, k, &mut r);
        let known = phase::condition_known_lsf(&phase::khatri_rao_real_rows(&s, Some(&g)).unwrap(), &mask).unwrap();
        let unknown = phase::condition_unknown_lsf(&phase::khatri_rao_real_rows(&s, None).unwrap(), &mask).unwrap();
        known.holds && !unknown.holds
    });
    assert!(found);
}

#[test]
fn one_cell_multicell_condition_is_the_known_fading_condition() {
    let mut r = rng::stream(11, &[]);
    for _ in 0..100 {
        let (s, g, mask) = near_boundary(&mut r);
        let single = phase::condition_known_lsf(&phase::khatri_rao_real_rows(&s, Some(&g)).unwrap(), &mask).unwrap();
        let d = phase::khatri_rao_real_rows(&s, None).unwrap().stack_scaled(&[g.clone()]).unwrap();
        assert_eq!(d.blocks, 1);
        assert_eq!(phase::condition_multicell(&d, &mask).unwrap().holds, single.holds);
    }
}

#[test]
fn multicell_verdict_is_symmetric_under_complement() {
    let mut r = rng::stream(12, &[]);
    let mut seen = [0usize; 2];
    for _ in 0..120 {
        let cells = 3;
        let l = 2;
        let n = r.gen_range(5..=8);
        let s = random_sigs(l, cells * n, &mut r);
        let blocks: Vec<Vec<f64>> = (0..cells).map(|_| random_gains(cells * n, &mut r)).collect();
        let d: RealExpansion = phase::khatri_rao_real_rows(&s, None).unwrap().stack_scaled(&blocks).unwrap();
        assert_eq!(d.matrix.nrows(), cells * l * l);
        let k = r.gen_range(0..=n);
        let mask: Vec<bool> = (0..cells).flat_map(|_| random_mask(n, k, &mut r)).collect();
        let v = phase::condition_multicell(&d, &mask).unwrap().holds;
        assert_eq!(v, phase::condition_multicell(&d, &complement(&mask)).unwrap().holds);
        seen[v as usize] += 1;
    }
    assert!(seen[0] >= 10 && seen[1] >= 10, "{seen:?}");
}

#[test]
fn mask_length_is_checked() {
    let mut r = rng::stream(13, &[]);
    let e = phase::khatri_rao_real_rows(&random_sigs(2, 3, &mut r), None).unwrap();
    assert!(phase::condition_known_lsf(&e, &[true, false]).is_err());
    assert!(phase::condition_unknown_lsf(&e, &[true; 4]).is_err());
}

fn sweep(regime: PhaseRegime, seq_lens: Vec<usize>, actives: Vec<usize>, trials: usize) -> phase::PhaseMap {
    let system = SystemConfig { devices: 20, seed: 21, ..Default::default() };
    phase::phase_sweep(&SweepSettings { system, seq_lens, actives, trials, regime, fix_positions: false }).unwrap()
}

#[test]
fn sweep_frequencies_behave() {
    let ks: Vec<usize> = (0..=20).step_by(2).collect();
    for regime in [PhaseRegime::KnownLsf, PhaseRegime::UnknownLsf] {
        let map = sweep(regime, vec![3, 4, 5], ks.clone(), 40);
        assert_eq!(map.points.len(), 3 * ks.len());
        for &l in &[3usize, 4, 5] {
            let f: Vec<f64> = ks.iter().map(|&k| map.point(l, k).unwrap().freq()).collect();
            if l * l >= 20 {
                assert_eq!(f[0], 1.0, "{regime:?} L={l}");
            }
            // the known-fading map is symmetric, so only its lower half is monotone
            let upto = if regime == PhaseRegime::KnownLsf { ks.len() / 2 + 1 } else { ks.len() };
            for w in f[..upto].windows(2) {
                assert!(w[1] <= w[0] + 0.15, "{regime:?} L={l}: {f:?}");
            }
        }
    }
}

#[test]
fn known_fading_sweep_pairs_complementary_supports() {
    let ks: Vec<usize> = (0..=20).collect();
    let map = sweep(PhaseRegime::KnownLsf, vec![4], ks, 20);
    for k in 0..=10 {
        assert_eq!(map.point(4, k).unwrap().verdicts, map.point(4, 20 - k).unwrap().verdicts, "K={k}");
    }
}

#[test]
fn sweep_csv_has_one_row_per_point() {
    let map = sweep(PhaseRegime::UnknownLsf, vec![3, 4], vec![0, 5, 10], 5);
    let mut buf = Vec::new();
    map.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("L,K,L2_over_N,K_over_N,freq,n_trials,all_hold,none_hold"));
    assert_eq!(lines.count(), 6);
    let mut buf = Vec::new();
    map.write_boundary_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
}

#[test]
fn sweep_skips_oversized_supports_and_rejects_empty_grids() {
    let map = sweep(PhaseRegime::KnownLsf, vec![3], vec![5, 25], 3);
    assert_eq!(map.points.len(), 1);
    let system = SystemConfig { devices: 20, ..Default::default() };
    let bad = SweepSettings { system, seq_lens: vec![], actives: vec![1], trials: 1, regime: PhaseRegime::KnownLsf, fix_positions: false };
    assert!(phase::phase_sweep(&bad).is_err());
}
