//! Independent recomputations of library values on the three-variable design.

use dmh::diagnostics::{build_transition_matrix, spectral_gap};
use dmh::samplers::{informed_proposal_dist, KernelSpec};
use dmh::space::enumerate_space;
use dmh::varsel::{example3_data, example3_hyper, log_posterior, Model, Neighborhood, VarSelData, VarSelTarget};

const MODELS: [&str; 8] = ["000", "001", "010", "011", "100", "101", "110", "111"];

/// Oracle output, frozen: `log pi(model) - log pi(000)` with `n = 1000`, `g = 27`, `kappa = 1`.
const FROZEN_LOG_DIFF: [(&str, f64); 7] = [
    ("001", 90.46032),
    ("010", -2.76471),
    ("011", 148.94471),
    ("100", 63.98466),
    ("101", 88.68729),
    ("110", 207.66904),
    ("111", 204.90433),
];

fn fixture() -> VarSelData {
    let s = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/example3.json")).unwrap();
    VarSelData::from_json_str(&s).unwrap()
}

/// Solves `A w = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let k = b.len();
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..k {
            let f = a[r][c] / a[c][c];
            for j in c..k {
                a[r][j] -= f * a[c][j];
            }
            b[r] -= f * b[c];
        }
    }
    let mut w = vec![0.0; k];
    for c in (0..k).rev() {
        let s: f64 = (c + 1..k).map(|j| a[c][j] * w[j]).sum();
        w[c] = (b[c] - s) / a[c][c];
    }
    w
}

fn oracle_r2(d: &VarSelData, bits: &str) -> f64 {
    let s: Vec<usize> = bits.chars().enumerate().filter(|(_, c)| *c == '1').map(|(i, _)| i).collect();
    if s.is_empty() {
        return 0.0;
    }
    let a = s.iter().map(|&i| s.iter().map(|&j| d.gram[i * d.p + j]).collect()).collect();
    let b: Vec<f64> = s.iter().map(|&i| d.xty[i]).collect();
    let w = solve(a, b.clone());
    w.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / d.yty
}

fn oracle_log_pi(d: &VarSelData, bits: &str) -> f64 {
    let k = bits.chars().filter(|&c| c == '1').count() as f64;
    let (p, n, g) = (3.0f64, d.n as f64, 27.0f64);
    let r2 = oracle_r2(d, bits);
    -k * p.ln() - 0.5 * k * (1.0 + g).ln() - 0.5 * n * (1.0 + g * (1.0 - r2)).ln()
}

#[test]
fn fixture_file_matches_builtin_design() {
    let (a, b) = (fixture(), example3_data());
    assert_eq!((a.p, a.n), (b.p, b.n));
    assert_eq!(a.gram, b.gram);
    assert_eq!(a.xty, b.xty);
    assert_eq!(a.yty, b.yty);
}

#[test]
fn log_posterior_table_against_oracle() {
    let d = fixture();
    let hyper = example3_hyper(None);
    let base = oracle_log_pi(&d, "000");
    for (bits, frozen) in FROZEN_LOG_DIFF {
        let oracle = oracle_log_pi(&d, bits) - base;
        assert!((oracle - frozen).abs() < 5e-6, "{bits}: oracle {oracle} vs frozen {frozen}");
        let lib = log_posterior(&d, &hyper, &Model::from_bits(bits)) - log_posterior(&d, &hyper, &Model::from_bits("000"));
        assert!((lib - oracle).abs() < 1e-9, "{bits}: library {lib} vs oracle {oracle}");
    }
}

/// Transition matrix built directly from the oracle posterior on `(V, N1)`.
fn oracle_chain(d: &VarSelData, clip: Option<(f64, f64)>) -> Vec<Vec<f64>> {
    let lp: Vec<f64> = MODELS.iter().map(|b| oracle_log_pi(d, b)).collect();
    let nbrs = |x: usize| (0..3).map(move |j| x ^ (1 << (2 - j))).collect::<Vec<_>>();
    let idx = |bits: usize| MODELS.iter().position(|m| usize::from_str_radix(m, 2).unwrap() == bits).unwrap();
    let states: Vec<usize> = MODELS.iter().map(|m| usize::from_str_radix(m, 2).unwrap()).collect();
    let h = |u: f64| match clip {
        Some((l, big_l)) => u.clamp(l, big_l),
        None => 1.0,
    };
    let proposal = |x: usize| -> Vec<(usize, f64)> {
        let w: Vec<(usize, f64)> = nbrs(states[x]).into_iter().map(|b| (idx(b), h((lp[idx(b)] - lp[x]).exp()))).collect();
        let z: f64 = w.iter().map(|e| e.1).sum();
        w.into_iter().map(|(y, v)| (y, v / z)).collect()
    };
    let mut p = vec![vec![0.0; 8]; 8];
    for x in 0..8 {
        for (y, k_xy) in proposal(x) {
            let k_yx = proposal(y).into_iter().find(|e| e.0 == x).unwrap().1;
            let a = ((lp[y] - lp[x]).exp() * k_yx / k_xy).min(1.0);
            p[x][y] = k_xy * a;
        }
        p[x][x] = 1.0 - p[x].iter().sum::<f64>();
    }
    p
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

fn oracle_gap(p: &[Vec<f64>], lp: &[f64]) -> f64 {
    let z = lp.iter().map(|l| (l - lp[0]).exp()).sum::<f64>().ln() + lp[0];
    let pi: Vec<f64> = lp.iter().map(|l| (l - z).exp()).collect();
    let n = p.len();
    let sym = (0..n).map(|i| (0..n).map(|j| (pi[i] / pi[j]).sqrt() * p[i][j]).collect()).collect();
    let ev = jacobi_eigenvalues(sym);
    1.0 - ev[1].max(ev[n - 1].abs())
}

#[test]
fn exact_gaps_against_oracle_chain() {
    let d = fixture();
    let lp: Vec<f64> = MODELS.iter().map(|b| oracle_log_pi(&d, b)).collect();
    let g0 = oracle_gap(&oracle_chain(&d, None), &lp);
    let gh = oracle_gap(&oracle_chain(&d, Some((3.0, 9.0))), &lp);
    assert!((g0 - 0.334).abs() < 0.005, "{g0}");
    assert!((gh - 0.582).abs() < 0.005, "{gh}");

    let t = VarSelTarget::new(example3_data(), example3_hyper(None), Neighborhood::N1);
    let en = enumerate_space(&t, 16).unwrap();
    let lib0 = spectral_gap(&build_transition_matrix(&en, &KernelSpec::random_walk()).unwrap()).unwrap().gap;
    let libh = spectral_gap(&build_transition_matrix(&en, &KernelSpec::informed(3.0, 9.0).unwrap()).unwrap()).unwrap().gap;
    assert!((lib0 - g0).abs() < 1e-10, "{lib0} vs {g0}");
    assert!((libh - gh).abs() < 1e-10, "{libh} vs {gh}");
}

#[test]
fn clipped_first_step_from_empty_model() {
    let d = fixture();
    let p = oracle_chain(&d, Some((3.0, 9.0)));
    let lp: Vec<f64> = MODELS.iter().map(|b| oracle_log_pi(&d, b)).collect();
    // From 000 the weights are clip(u) for 100, 010, 001: 9, 3, 9 up to the -2.76 neighbor at the floor.
    let w = [(lp[4] - lp[0]).exp().clamp(3.0, 9.0), (lp[2] - lp[0]).exp().clamp(3.0, 9.0), (lp[1] - lp[0]).exp().clamp(3.0, 9.0)];
    assert_eq!(w, [9.0, 3.0, 9.0]);
    let t = VarSelTarget::new(example3_data(), example3_hyper(None), Neighborhood::N1);
    let k = informed_proposal_dist(&t, &Model::from_bits("000"), &KernelSpec::informed(3.0, 9.0).unwrap()).unwrap();
    let k001 = k.iter().find(|e| e.0 == Model::from_bits("001")).unwrap().1;
    assert!((k001 - 3.0 / 7.0).abs() < 1e-12);
    // The move is uphill by e^90 and accepted with probability one.
    assert!((p[0][1] - 3.0 / 7.0).abs() < 1e-12);
}
