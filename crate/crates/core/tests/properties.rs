use dmh::diagnostics::{build_transition_matrix, spectral_gap};
use dmh::flowbound::{build_flow_graph, certify_flow, congestion, default_s, enumerate_flow, FlowMethod};
use dmh::graph::GraphTarget;
use dmh::rng::seeded;
use dmh::samplers::{acceptance_log_ratio, ChainState, KernelSpec};
use dmh::sbm::{generate_sbm, log_posterior_sbm, Labels, SbmTarget};
use dmh::space::{enumerate_space, exact_tail_masses, tail_mass_bound, unimodality_stats, DiscreteTarget};
use dmh::varsel::{generate_data, log_posterior, neighbor_moves, Covariance, Model, Neighborhood, VarSelHyper, VarSelTarget};
use proptest::prelude::*;
use rand::Rng;

fn random_graph(seed: u64, n: usize, min_log_ratio: f64) -> GraphTarget {
    let mut rng = seeded(seed);
    let extra = rng.random_range(0..=n);
    GraphTarget::random_unimodal(n, 4, min_log_ratio, extra, &mut rng)
}

/// Arbitrary connected graph with arbitrary weights, not necessarily unimodal.
fn rough_graph(seed: u64, n: usize) -> GraphTarget {
    let mut rng = seeded(seed);
    let log_pi: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    for _ in 0..n {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a < b && !edges.contains(&(a, b)) {
            edges.push((a, b));
        }
    }
    GraphTarget::new(log_pi, &edges)
}

fn kernel(family: u8, ell: f64, big_l: f64, lazy: bool) -> KernelSpec {
    match family {
        0 => KernelSpec::random_walk(),
        1 => KernelSpec::unclipped(),
        _ => KernelSpec::informed(ell, ell + big_l).unwrap(),
    }
    .lazy(lazy)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chains_are_reversible_stochastic_matrices(
        seed in any::<u64>(), n in 2usize..30, family in 0u8..3, ell in 0.0f64..20.0, big_l in 0.0f64..1e4, lazy in any::<bool>()
    ) {
        let g = rough_graph(seed, n);
        let en = enumerate_space(&g, 100).unwrap();
        let c = build_transition_matrix(&en, &kernel(family, ell, big_l, lazy)).unwrap();
        let e = c.invariant_errors();
        prop_assert!(e.row_sum < 1e-12 && e.detailed_balance < 1e-12 && e.stationarity < 1e-12, "{e:?}");
        prop_assert!(c.diag.iter().all(|&d| (-1e-12..=1.0 + 1e-12).contains(&d)));
        if lazy {
            prop_assert!(spectral_gap(&c).unwrap().lambda_min >= -1e-9);
        }
    }

    #[test]
    fn mode_mass_and_tail_bounds(seed in any::<u64>(), n in 2usize..40, r in 1.5f64..6.0) {
        let g = random_graph(seed, n, r);
        let en = enumerate_space(&g, 100).unwrap();
        let st = unimodality_stats(&en).unwrap();
        prop_assert_eq!(st.x_star, 0);
        let pi = en.log_pi_normalized();
        if st.log_rho() > 0.0 {
            prop_assert!(pi[0].exp() >= 1.0 - 1.0 / st.rho() - 1e-12);
        }
        if st.log_r > (st.m as f64).ln() {
            for (k, t) in exact_tail_masses(&en, 0).into_iter().enumerate().skip(1) {
                prop_assert!(t <= tail_mass_bound(&st, k).unwrap() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn heavy_enough_proposals_are_always_accepted(seed in any::<u64>(), n in 2usize..30, scale in 1.0f64..50.0) {
        let g = rough_graph(seed, n);
        let m = g.adj.iter().map(|a| a.len()).max().unwrap() as f64;
        let spec = KernelSpec::informed(m, m * scale).unwrap();
        for x in 0..n {
            let z: f64 = g.adj[x].iter().map(|&y| (g.log_pi[y] - g.log_pi[x]).exp().clamp(m, m * scale)).sum();
            if z < m * scale {
                continue;
            }
            for &y in &g.adj[x] {
                if g.log_pi[y] - g.log_pi[x] >= m.ln() {
                    prop_assert!(acceptance_log_ratio(&g, &x, &y, &spec) >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn informed_chain_escapes_towards_the_mode(seed in any::<u64>(), n in 2usize..40, frac in 0.05f64..1.0) {
        let g = random_graph(seed, n, 3.0);
        let en = enumerate_space(&g, 100).unwrap();
        let st = unimodality_stats(&en).unwrap();
        let m = st.m as f64;
        prop_assume!(st.log_r > 2.0 * m.ln());
        let log_l = 2.0 * m.ln() + frac * (st.log_r - 2.0 * m.ln());
        let spec = KernelSpec::informed(m, log_l.exp()).unwrap();
        let c = build_transition_matrix(&en, &spec).unwrap();
        let log_s = log_l - m.ln();
        for x in 1..c.len() {
            let mass: f64 = c.adj[x].iter().filter(|&&y| c.log_pi[y] - c.log_pi[x] >= log_s).map(|&y| c.p(x, y)).sum();
            prop_assert!(mass >= 0.5 - 1e-12, "state {x}: {mass}");
        }
    }

    #[test]
    fn canonical_flow_identities(seed in any::<u64>(), n in 2usize..16, r in 1.5f64..5.0, informed in any::<bool>()) {
        let g = random_graph(seed, n, r);
        let en = enumerate_space(&g, 100).unwrap();
        let st = unimodality_stats(&en).unwrap();
        let m = st.m as f64;
        let spec = if informed && st.log_r > 2.0 * m.ln() {
            KernelSpec::informed(m, (m.ln() + 0.5 * st.log_r).exp()).unwrap()
        } else {
            KernelSpec::random_walk()
        };
        let c = build_transition_matrix(&en, &spec).unwrap();
        let s = default_s(&c, st.log_r);
        let fg = build_flow_graph(&c, s).unwrap();
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    let sum: f64 = enumerate_flow(&fg, x, y).unwrap().iter().map(|p| p.1.exp()).sum();
                    let want = c.pi[x] * c.pi[y];
                    prop_assert!(((sum - want) / want).abs() < 1e-10);
                }
            }
        }
        let e = congestion(&fg, &c, None, Some(FlowMethod::Enumeration)).unwrap();
        let d = congestion(&fg, &c, None, Some(FlowMethod::DynamicProgram)).unwrap();
        prop_assert!(((e.a_exact - d.a_exact) / e.a_exact).abs() < 1e-12);
        if let Some(a) = e.a_closed_form {
            prop_assert!(e.a_exact <= a * (1.0 + 1e-12));
        }
        prop_assert!(certify_flow(&c, s, None).unwrap().holds);
    }

    #[test]
    fn varsel_incremental_updates_track_fresh_posteriors(seed in any::<u64>(), p in 5usize..12, steps in 1usize..60) {
        let mut rng = seeded(seed);
        let (data, _) = generate_data(p, 50, Covariance::High, None, &mut rng);
        let hyper = VarSelHyper::default_for(p);
        let t = VarSelTarget::new(data.clone(), hyper.clone(), Neighborhood::Ads);
        let mut st = t.state(&Model::empty(p));
        for _ in 0..steps {
            let moves = neighbor_moves(&st.model().0, Neighborhood::Ads);
            st.update(moves[rng.random_range(0..moves.len())]);
            let fresh = log_posterior(&data, &hyper, st.model());
            prop_assert!((st.log_pi() - fresh).abs() < 1e-8, "{} vs {fresh}", st.log_pi());
        }
    }

    #[test]
    fn sbm_flips_and_label_switching(seed in any::<u64>(), p in 2usize..40, pw in 0.0f64..1.0, pb in 0.0f64..1.0) {
        let mut rng = seeded(seed);
        let (data, _) = generate_sbm(p, pw, pb, &mut rng).unwrap();
        let t = SbmTarget::new(data.clone());
        let z: Labels = Labels((0..p).map(|_| rng.random_range(1..=2u8)).collect());
        prop_assert!((t.log_pi(&z) - t.log_pi(&z.switched())).abs() < 1e-9);
        let mut st = t.state(&z);
        for _ in 0..20 {
            let j = rng.random_range(0..p);
            st.flip(j);
            prop_assert!((st.log_pi() - log_posterior_sbm(&data, st.labels())).abs() < 1e-9);
        }
    }
}
