//! Property tests for the structural invariants of each layer.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use seqgibbs::decomp::{center, martingale_coboundary, moment_curve, sum_moments};
use seqgibbs::dist::{char_fn, lattice_pmf};
use seqgibbs::models::{self, ChainOptions, ReferencePast, TwoSidedFn};
use seqgibbs::sampler::{forward_kernels, sample_paths, sample_range};
use seqgibbs::spectral::{calibrate_ly, Twisted};
use seqgibbs::symbolic::{aperiodicity_window, enumerate_words, metric, Adjacency, Extension};
use seqgibbs::verify::{clt_error, DiscreteLaw, MIN_SIGMA_CLT};
use seqgibbs::{validate, ComplexFn, Error, FnSeq, RealFn, System, SystemSpec, Word};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

/// Random 3-symbol matrices with a positive diagonal, so no symbol is dead.
fn adjacency_strategy() -> impl Strategy<Value = Vec<Vec<u8>>> {
    prop::collection::vec(prop::bool::ANY, 9).prop_map(|bits| {
        (0..3)
            .map(|r| (0..3).map(|c| u8::from(r == c || bits[3 * r + c])).collect())
            .collect()
    })
}

/// Window of 16 with the matrices repeating periodically.
fn system_from(mats: &[Vec<Vec<u8>>]) -> System {
    let p = mats.len();
    let w = 16;
    let adjacency = (0..w).map(|j| Adjacency::from_rows(&mats[j % p]).unwrap()).collect();
    validate(SystemSpec { window: w as i64, alphabet_sizes: vec![3; w + 1], adjacency, extension: Extension::Periodic(p) })
        .unwrap()
}

fn bool_count(mats: &[Vec<Vec<u8>>], j: usize, len: usize) -> u64 {
    let mut v = vec![1u64; 3];
    for k in (0..len - 1).rev() {
        let a = &mats[(j + k) % mats.len()];
        v = (0..3).map(|r| (0..3).map(|c| a[r][c] as u64 * v[c]).sum()).collect();
    }
    v.iter().sum()
}

/// Potential of depth 2 from a seed-indexed table with period `p`.
fn table_potential(values: Vec<f64>, p: usize) -> FnSeq {
    let v = Arc::new(values);
    FnSeq::new(2, "table", move |j, x| v[(j.rem_euclid(p as i64) as usize * 9 + x[0] as usize * 3 + x[1] as usize) % v.len()])
}

fn mixing_system() -> impl Strategy<Value = (Vec<Vec<Vec<u8>>>, Vec<f64>)> {
    (prop::collection::vec(adjacency_strategy(), 4), prop::collection::vec(-1.0f64..1.0, 36))
        .prop_filter("mixing", |(m, _)| aperiodicity_window(&system_from(m), 12).is_ok())
}

fn chain_strategy() -> impl Strategy<Value = (Vec<Vec<Vec<f64>>>, Vec<f64>)> {
    let row = prop::collection::vec(0.1f64..1.0, 2).prop_map(|r| {
        let s: f64 = r.iter().sum();
        r.into_iter().map(|v| v / s).collect::<Vec<f64>>()
    });
    let mat = prop::collection::vec(row, 2);
    (prop::collection::vec(mat, 1..4), 0.05f64..0.95).prop_map(|(m, a)| (m, vec![a, 1.0 - a]))
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn word_counts_match_matrix_products(mats in prop::collection::vec(adjacency_strategy(), 5), j in 0usize..5) {
        let sys = system_from(&mats);
        for len in 1..=8 {
            let words = enumerate_words(&sys, j as i64, len).unwrap();
            prop_assert_eq!(words.len() as u64, bool_count(&mats, j, len));
            prop_assert!(words.iter().all(|w| sys.is_admissible(w)));
        }
    }

    #[test]
    fn aperiodicity_window_is_minimal((mats, _) in mixing_system()) {
        let sys = system_from(&mats);
        let m = aperiodicity_window(&sys, 12).unwrap();
        let product = |j: i64, count: usize| {
            let mut p = sys.adjacency(j).clone();
            for k in 1..count {
                p = p.bool_mul(sys.adjacency(j + k as i64));
            }
            p
        };
        for j in 0..4 {
            prop_assert!(product(j, m + 1).is_positive());
        }
        if m > 0 {
            prop_assert!((0..4).any(|j| !product(j, m).is_positive()));
        }
    }

    #[test]
    fn metric_is_an_ultrametric(a in prop::collection::vec(0u8..3, 6), b in prop::collection::vec(0u8..3, 6), c in prop::collection::vec(0u8..3, 6)) {
        let (x, y, z) = (Word::new(0, a), Word::new(0, b), Word::new(0, c));
        let dxz = metric(&x, &z).unwrap();
        prop_assert!(dxz <= metric(&x, &y).unwrap().max(metric(&y, &z).unwrap()));
        prop_assert_eq!(metric(&x, &y).unwrap(), metric(&y, &x).unwrap());
    }

    #[test]
    fn seminorm_is_subadditive_and_embedding_stable(u in prop::collection::vec(-2.0f64..2.0, 27), v in prop::collection::vec(-2.0f64..2.0, 27), alpha in 0.2f64..1.5) {
        let sys = validate(SystemSpec::full_shift(3, 8)).unwrap();
        let f = RealFn::from_values(&sys, 0, 3, u).unwrap();
        let g = RealFn::from_values(&sys, 0, 3, v).unwrap();
        let sum = f.add(&g).unwrap().holder_seminorm(alpha);
        prop_assert!(sum <= f.holder_seminorm(alpha) + g.holder_seminorm(alpha) + 1e-12);
        let e = f.embed(5).unwrap();
        prop_assert!((e.holder_seminorm(alpha) - f.holder_seminorm(alpha)).abs() <= 1e-12);
        // G_alpha <= G_beta max d^{beta - alpha}, with d <= 1 on the realized distances.
        prop_assert!(f.holder_seminorm(alpha) <= f.holder_seminorm(alpha + 0.5) + 1e-12);
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn normalized_operator_is_positive_and_mass_preserving((mats, pot) in mixing_system(), vals in prop::collection::vec(0.0f64..1.0, 27)) {
        let sys = system_from(&mats);
        let phi = table_potential(pot, 4);
        let rpf = seqgibbs::rpf_solve(&sys, &phi, &seqgibbs::RpfOptions::default().fit_depths(&[&phi])).unwrap();
        prop_assert!(rpf.contraction_estimate() < 1.0);
        prop_assert!(rpf.tail_error() <= 1e-9);
        let d = rpf.working_depth();
        for j in 0..4 {
            let f = RealFn::from_fn(&sys, j, d, |x| vals[x.iter().fold(0usize, |a, &s| (3 * a + s as usize) % 27)]).unwrap();
            let lf = rpf.normalized_apply(&f).unwrap();
            prop_assert!(lf.min_value() >= -1e-15);
            prop_assert!((rpf.expect(&lf).unwrap() - rpf.expect(&f).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn cylinders_are_kolmogorov_consistent((mats, pot) in mixing_system(), j in 0i64..6) {
        let sys = system_from(&mats);
        let phi = table_potential(pot, 4);
        let rpf = seqgibbs::rpf_solve(&sys, &phi, &seqgibbs::RpfOptions::default().fit_depths(&[&phi])).unwrap();
        for len in 1..=5 {
            let words = enumerate_words(&sys, j, len).unwrap();
            let total: f64 = words.iter().map(|w| rpf.gibbs_cylinder(w).unwrap()).sum();
            prop_assert!((total - 1.0).abs() <= 1e-10);
            for w in &words {
                let parent = rpf.gibbs_cylinder(w).unwrap();
                let children: f64 = (0..3u8)
                    .map(|b| {
                        let mut s = w.symbols.clone();
                        s.push(b);
                        rpf.gibbs_cylinder(&Word::new(j, s)).unwrap()
                    })
                    .sum();
                prop_assert!((parent - children).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn elliptic_chains_are_identified((p, init) in chain_strategy()) {
        let m = models::from_markov_chain(&p, &init, 16, ChainOptions::default()).unwrap();
        let rpf = m.solve().unwrap();
        for base in [0i64, 2] {
            let mut marg = init.clone();
            for k in 0..base as usize {
                let a = &p[k % p.len()];
                marg = vec![marg[0] * a[0][0] + marg[1] * a[1][0], marg[0] * a[0][1] + marg[1] * a[1][1]];
            }
            for len in 1..=6 {
                for w in enumerate_words(&m.system, base, len).unwrap() {
                    let s = &w.symbols;
                    let mut law = marg[s[0] as usize];
                    for k in 1..len {
                        law *= p[(base as usize + k - 1) % p.len()][s[k - 1] as usize][s[k] as usize];
                    }
                    prop_assert!((rpf.gibbs_cylinder(&w).unwrap() - law).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn decomposition_residuals_hold((p, init) in chain_strategy(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let m = models::from_markov_chain(&p, &init, 72, ChainOptions::default()).unwrap();
        let rpf = m.solve().unwrap();
        let f = FnSeq::new(2, "ax0+bx0x1", move |j, x| a * x[0] as f64 + b * (x[0] * x[1]) as f64 + 0.1 * (j % 3) as f64);
        let fb = center(&rpf, &f, 0, 64).unwrap();
        let dec = martingale_coboundary(&rpf, &fb, 1.0, 1.0).unwrap();
        prop_assert!(dec.max_identity_residual() <= 1e-9);
        prop_assert!(dec.max_martingale_residual() <= 1e-8);
    }

    #[test]
    fn pmf_variance_matches_moments((p, init) in chain_strategy(), n in 1usize..40) {
        let m = models::from_markov_chain(&p, &init, 48, ChainOptions::default()).unwrap();
        let rpf = m.solve().unwrap();
        let q0 = models::unit_density(&rpf).unwrap();
        let f = FnSeq::new(2, "x0+x0x1", |_, x| (x[0] + x[0] * x[1]) as f64);
        let pmf = lattice_pmf(&rpf, &f, &q0, n).unwrap();
        let mom = sum_moments(&rpf, &f, &q0, n).unwrap();
        prop_assert!((pmf.mean() - mom.mean).abs() <= 1e-8);
        prop_assert!((pmf.variance() - mom.variance).abs() <= 1e-8);
        prop_assert!((pmf.total() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn char_fn_invariants((p, init) in chain_strategy(), t in -20.0f64..20.0, n in 1usize..24) {
        let m = models::from_markov_chain(&p, &init, 32, ChainOptions::default()).unwrap();
        let rpf = m.solve().unwrap();
        let q0 = models::unit_density(&rpf).unwrap();
        let f = FnSeq::new(2, "real", |_, x| x[0] as f64 * 0.7 - x[1] as f64 * 1.9);
        prop_assert!((char_fn(&rpf, &f, &q0, n, 0.0).unwrap() - Complex64::new(1.0, 0.0)).norm() <= 1e-12);
        let v = char_fn(&rpf, &f, &q0, n, t).unwrap();
        prop_assert!(v.norm() <= 1.0 + 1e-12);
        let w = char_fn(&rpf, &f, &q0, n, -t).unwrap();
        prop_assert!((v - w.conj()).norm() <= 1e-12);
    }

    #[test]
    fn pure_coboundary_sums_stay_bounded(c in 0.1f64..3.0, pz in 0.1f64..0.9) {
        let base = models::coin(pz, 96).unwrap();
        let b = FnSeq::first_symbol().scale(c);
        let m = base.with_observable(FnSeq::coboundary(&b));
        let rpf = m.solve().unwrap();
        let q0 = models::unit_density(&rpf).unwrap();
        let curve = moment_curve(&rpf, &m.observable, &q0, 64).unwrap();
        let bound = 2.0 * c;
        prop_assert!(curve.iter().all(|mom| mom.sigma() <= bound + 1e-12));
    }

    #[test]
    fn sinai_identity_on_random_tables(vals in prop::collection::vec(-1.0f64..1.0, 8), j in 0i64..6) {
        let sys = validate(SystemSpec::full_shift(2, 12)).unwrap();
        let v = Arc::new(vals);
        let psi = TwoSidedFn::new(1, 1, "table", move |_, x| v[(4 * x[0] + 2 * x[1] + x[2]) as usize]);
        for pattern in [vec![0u8], vec![1], vec![0, 1]] {
            let red = models::sinai_reduce(&sys, &psi, Some(ReferencePast { pattern })).unwrap();
            prop_assert!(red.identity_residual(&sys, j).unwrap() <= 1e-12);
            prop_assert_eq!(red.phi.depth(), 3);
        }
    }

    #[test]
    fn law_cdf_is_monotone_and_clt_error_nonnegative(xs in prop::collection::vec(-5.0f64..5.0, 2..60)) {
        let law = DiscreteLaw::empirical(&xs);
        let mut prev = 0.0;
        for k in -60..=60 {
            let c = law.cdf(k as f64 / 10.0);
            prop_assert!(c + 1e-15 >= prev);
            prop_assert!(law.cdf_left(k as f64 / 10.0) <= c + 1e-15);
            prev = c;
        }
        match clt_error(&law) {
            Ok(e) => prop_assert!((0.0..=1.0).contains(&e)),
            Err(Error::DegenerateVariance { sigma }) => prop_assert!(sigma < MIN_SIGMA_CLT),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn sampler_batches_are_seed_isolated(seed in any::<u64>(), cut in 1usize..199) {
        let m = models::random_elliptic_chain(3, 24, 5).unwrap();
        let rpf = m.solve().unwrap();
        let k = forward_kernels(&rpf).unwrap();
        let whole = sample_paths(&k, 16, 200, seed).unwrap();
        let left = sample_range(&k, 16, 0..cut, seed).unwrap();
        let right = sample_range(&k, 16, cut..200, seed).unwrap();
        prop_assert_eq!(&whole.paths[..cut], &left.paths[..]);
        prop_assert_eq!(&whole.paths[cut..], &right.paths[..]);
    }
}

proptest! {
    #![proptest_config(config(4))]

    #[test]
    fn lasota_yorke_constants_hold(seed in any::<u64>()) {
        let m = models::random_elliptic_chain(3, 48, 9).unwrap();
        let rpf = m.solve().unwrap();
        let f = FnSeq::new(2, "x0-x1", |_, x| x[0] as f64 - 0.5 * x[1] as f64);
        let k_max = 32;
        let t_cap = 2.0;
        let ly = calibrate_ly(&rpf, &f, 0, t_cap, 40, k_max, 1.0, 17).unwrap();
        let tw = Twisted::new(&rpf, &f, 0, k_max).unwrap();
        let d = rpf.working_depth();
        let space_len = rpf.system().space(0, d).unwrap().len();
        let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let t = t_cap * (2.0 * next() - 1.0);
            let vals: Vec<Complex64> = (0..space_len).map(|_| Complex64::new(2.0 * next() - 1.0, 2.0 * next() - 1.0)).collect();
            let h = ComplexFn::from_values(rpf.system(), 0, d, vals).unwrap();
            let (sup, g0) = (h.sup_norm(), h.holder_seminorm(1.0));
            let mut cur = h.clone();
            for k in 1..=k_max {
                cur = tw.apply(cur.base(), t, &cur).unwrap();
                let bound = ly.c1 * (sup + ly.theta1.powi(k as i32) * g0);
                prop_assert!(cur.holder_seminorm(1.0) <= bound * (1.0 + 1e-9), "k={} t={}", k, t);
            }
        }
        let _ = PI;
    }
}
