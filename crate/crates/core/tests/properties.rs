use approx::assert_relative_eq;
use pdrank::baselines::borda;
use pdrank::dataset::{ComparisonDataset, Label, Observation, Ranking};
use pdrank::metrics::kendall_tau;
use pdrank::prox::{prox_f, prox_g_star, spectral_norm, ProxFParams, ScalarProxProblem, SCALAR_PROX_TOL};
use proptest::prelude::*;

fn observations(max_items: usize, max_len: usize) -> impl Strategy<Value = (usize, Vec<Observation>)> {
    (2..=max_items).prop_flat_map(move |m| {
        let obs = (0..m, 0..m - 1, any::<bool>()).prop_map(|(i, k, up)| {
            // k skips i, so the pair is never a self-comparison
            let j = if k >= i { k + 1 } else { k };
            Observation::new(i, j, if up { Label::Above } else { Label::Below })
        });
        (Just(m), prop::collection::vec(obs, 1..=max_len))
    })
}

fn permutation(max_items: usize) -> impl Strategy<Value = Ranking> {
    (1..=max_items)
        .prop_flat_map(|m| Just((0..m).collect::<Vec<_>>()).prop_shuffle())
        .prop_map(|v| Ranking::new(v).unwrap())
}

fn tau_pairwise(a: &Ranking, b: &Ranking) -> f64 {
    let (pa, pb) = (a.positions(), b.positions());
    let m = pa.len();
    if m < 2 {
        return 1.0;
    }
    let mut s = 0i64;
    for i in 0..m {
        for j in i + 1..m {
            s += if (pa[i] < pa[j]) == (pb[i] < pb[j]) { 1 } else { -1 };
        }
    }
    s as f64 / (m * (m - 1) / 2) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn scalar_prox_root_inside_bracket(x in -60.0f64..60.0, log_w in -8.0f64..5.0) {
        let p = ScalarProxProblem { x_tilde: x, w_tilde: 10f64.powf(log_w) };
        let d = p.solve_offset(SCALAR_PROX_TOL).unwrap();
        prop_assert!(d > 0.0 && d < p.w_tilde);
        prop_assert!(p.residual_at_offset(d).abs() <= SCALAR_PROX_TOL);
    }
}

proptest! {
    #[test]
    fn compress_is_order_independent((m, obs) in observations(8, 60), seed in any::<u64>()) {
        let a = ComparisonDataset::compress(m, &obs).unwrap();
        let mut shuffled = obs.clone();
        // deterministic shuffle from the seed
        let n = shuffled.len();
        let mut state = seed;
        for k in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(k, (state >> 33) as usize % (k + 1));
        }
        let b = ComparisonDataset::compress(m, &shuffled).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn compress_preserves_observation_count((m, obs) in observations(8, 60)) {
        let d = ComparisonDataset::compress(m, &obs).unwrap();
        prop_assert_eq!(d.total_observations(), obs.len() as u64);
        prop_assert!(d.len() <= obs.len());
    }

    #[test]
    fn signed_row_matches_label((m, obs) in observations(8, 20), x in prop::collection::vec(-10.0f64..10.0, 8)) {
        let d = ComparisonDataset::compress(m, &obs).unwrap();
        let x = &x[..m];
        for c in d.entries() {
            let expected = c.label.sign() * (x[c.i] - x[c.j]);
            prop_assert!((c.signed_row().dot(x) - expected).abs() < 1e-12);
            prop_assert!((c.margin(x) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn moreau_identity(
        v in prop::collection::vec(-20.0f64..5.0, 50),
        w in prop::collection::vec(0.01f64..50.0, 50),
        sigma in 0.01f64..10.0,
    ) {
        let dual = prox_g_star(&v, &w, sigma).unwrap();
        for ((vn, wn), qn) in v.iter().zip(&w).zip(&dual) {
            let p = ScalarProxProblem { x_tilde: vn / sigma, w_tilde: wn / sigma };
            let u = p.x_tilde + p.solve_offset(SCALAR_PROX_TOL).unwrap();
            prop_assert!((qn + sigma * u - vn).abs() <= 1e-8 * (1.0 + vn.abs()));
            prop_assert!(*qn <= 0.0 && *qn >= -wn);
        }
    }

    #[test]
    fn prox_f_optimality(x in prop::collection::vec(-100.0f64..100.0, 1..30), gamma in 0.0f64..10.0, tau in 0.01f64..10.0) {
        let u = prox_f(&x, ProxFParams::new(gamma, tau).unwrap()).unwrap();
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        prop_assert!(mean.abs() < 1e-10);
        // u(1 + 2γτ) - x is a constant vector
        let shift: Vec<f64> = u.iter().zip(&x).map(|(ui, xi)| ui * (1.0 + 2.0 * gamma * tau) - xi).collect();
        for s in &shift {
            prop_assert!((s - shift[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn spectral_norm_bounds((m, obs) in observations(10, 40)) {
        let d = ComparisonDataset::uncompressed(m, &obs).unwrap();
        let norm = spectral_norm(&d, 1e-10, 5_000).unwrap();
        // any single row has norm √2
        prop_assert!(norm >= 2f64.sqrt() * (1.0 - 1e-6));
        // Gershgorin on AᵀA: each row sum is at most 2·degree
        let max_deg = *d.degrees().iter().max().unwrap() as f64;
        prop_assert!(norm <= (2.0 * max_deg).sqrt() * (1.0 + 1e-9));
    }

    #[test]
    fn kendall_identity_reversal_symmetry(a in permutation(40), seed in any::<u64>()) {
        let m = a.len();
        let mut order: Vec<usize> = a.order().to_vec();
        order.rotate_left((seed as usize) % m);
        let b = Ranking::new(order).unwrap();
        prop_assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        if m >= 2 {
            prop_assert_eq!(kendall_tau(&a, &a.reversed()).unwrap(), -1.0);
        }
        prop_assert_eq!(kendall_tau(&a, &b).unwrap(), kendall_tau(&b, &a).unwrap());
        prop_assert!((kendall_tau(&a, &b).unwrap() - tau_pairwise(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn borda_invariant_to_duplication((m, obs) in observations(8, 40), copies in 2usize..5) {
        let once = ComparisonDataset::compress(m, &obs).unwrap();
        let repeated: Vec<Observation> = obs.iter().cycle().take(obs.len() * copies).copied().collect();
        let many = ComparisonDataset::compress(m, &repeated).unwrap();
        let (a, ra) = borda(&once).unwrap();
        let (b, rb) = borda(&many).unwrap();
        for (p, q) in a.0.iter().zip(&b.0) {
            assert_relative_eq!(*p, *q, epsilon = 1e-12);
        }
        prop_assert_eq!(ra, rb);
    }

    #[test]
    fn borda_equivariant_to_relabeling((m, obs) in observations(8, 40)) {
        // reverse item labels: item k becomes m-1-k
        let flip = |k: usize| m - 1 - k;
        let relabeled: Vec<Observation> = obs.iter().map(|o| Observation::new(flip(o.i), flip(o.j), o.label)).collect();
        let (a, _) = borda(&ComparisonDataset::compress(m, &obs).unwrap()).unwrap();
        let (b, _) = borda(&ComparisonDataset::compress(m, &relabeled).unwrap()).unwrap();
        for k in 0..m {
            assert_relative_eq!(a.0[k], b.0[flip(k)], epsilon = 1e-12);
        }
    }
}

#[test]
fn kendall_matches_pairwise_definition_exhaustively() {
    fn all(m: usize) -> Vec<Vec<usize>> {
        if m == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in all(m - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, m - 1);
                out.push(q);
            }
        }
        out
    }
    for m in 1..=5 {
        let perms: Vec<Ranking> = all(m).into_iter().map(|p| Ranking::new(p).unwrap()).collect();
        for a in &perms {
            for b in &perms {
                assert!((kendall_tau(a, b).unwrap() - tau_pairwise(a, b)).abs() < 1e-12);
            }
        }
    }
}
