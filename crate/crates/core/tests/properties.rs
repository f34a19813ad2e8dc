mod support;

use proptest::prelude::*;
use solpred::bnb::{apply_local_branching_cut, solve, BnbConfig, SolveStatus};
use solpred::gen::{generate, GenSpec, Preset, Problem};
use solpred::lp::{solve_lp, BoundOverrides, LpStatus};
use solpred::metrics::{average_precision, optimality_gap, primal_gap};
use solpred::mip::{canonicalize, Constraint, MipInstance, Sense, Variable};
use solpred::predict::select_s;

fn small_bip() -> impl Strategy<Value = MipInstance> {
    (2usize..=8, 1usize..=4, any::<bool>()).prop_flat_map(|(n, m, max)| {
        (
            prop::collection::vec(-10i32..=10, n),
            prop::collection::vec((prop::collection::vec(-5i32..=5, n), -3i32..=12, any::<bool>()), m),
            Just(max),
        )
            .prop_map(move |(c, rows, max)| {
                let mut inst = MipInstance::new("p", if max { Sense::Maximize } else { Sense::Minimize });
                for (j, &cj) in c.iter().enumerate() {
                    inst.add_var(Variable::binary(format!("x{j}")), cj as f64);
                }
                for (i, (a, b, ge)) in rows.into_iter().enumerate() {
                    let mut coeffs: Vec<(usize, f64)> =
                        a.iter().enumerate().filter(|(_, &v)| v != 0).map(|(j, &v)| (j, v as f64)).collect();
                    if coeffs.is_empty() {
                        coeffs.push((i % n, 1.0));
                    }
                    let row = if ge {
                        Constraint::ge(format!("r{i}"), coeffs, -(b as f64))
                    } else {
                        Constraint::le(format!("r{i}"), coeffs, b as f64)
                    };
                    inst.add_row(row);
                }
                inst
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bnb_agrees_with_enumeration(inst in small_bip()) {
        let res = solve(&inst, &BnbConfig::default()).unwrap();
        match support::brute_force(&inst) {
            Some(v) => {
                prop_assert_eq!(res.status, SolveStatus::Optimal);
                prop_assert!((res.objective().unwrap() - v).abs() <= 1e-6);
            }
            None => prop_assert_eq!(res.status, SolveStatus::Infeasible),
        }
    }

    #[test]
    fn lp_strong_duality(inst in small_bip()) {
        let canon = canonicalize(&inst).unwrap().instance;
        let lp = solve_lp(&canon, &BoundOverrides::new(), &[]);
        if lp.status == LpStatus::Optimal {
            let d = support::dual_objective(&canon, &lp);
            prop_assert!((lp.objective - d).abs() <= 1e-6 * (1.0 + lp.objective.abs()), "{} vs {}", lp.objective, d);
        }
    }

    #[test]
    fn zero_radius_cut_fixes_selection(inst in small_bip(), pick in prop::collection::vec(any::<(bool, bool)>(), 8)) {
        let n = inst.num_vars();
        let s: Vec<usize> = (0..n).filter(|&j| pick[j].0).collect();
        let mut x_hat = vec![0.0; n];
        for &j in &s {
            x_hat[j] = if pick[j].1 { 1.0 } else { 0.0 };
        }
        let cut = apply_local_branching_cut(&inst, &x_hat, &s, 0).unwrap();
        let got: Vec<u32> = support::enumerate(&cut).into_iter().map(|p| p.0).collect();
        let want: Vec<u32> = support::enumerate(&inst)
            .into_iter()
            .map(|p| p.0)
            .filter(|mask| s.iter().all(|&j| ((mask >> j) & 1) as f64 == x_hat[j]))
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn ap_invariant_under_monotone_maps(
        pairs in prop::collection::vec((0u32..1000, any::<bool>()), 1..40),
    ) {
        // a coarse grid keeps distinct scores distinct after the map
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 1000.0).collect();
        let mut labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        labels[0] = true;
        let a = average_precision(&scores, &labels).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0).exp()).collect();
        prop_assert_eq!(a, average_precision(&mapped, &labels).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn gaps_nonnegative_and_scale_invariant(a in -1e4f64..1e4, b in -1e4f64..1e4, k in 0.1f64..100.0) {
        prop_assert!(primal_gap(a, b) >= 0.0);
        prop_assert!(optimality_gap(a, b) >= 0.0);
        prop_assert_eq!(primal_gap(a, a), 0.0);
        if a.abs() > 1e-3 && b.abs() > 1e-3 {
            prop_assert!((primal_gap(k * a, k * b) - primal_gap(a, b)).abs() <= 1e-6);
            prop_assert!((optimality_gap(k * a, k * b) - optimality_gap(a, b)).abs() <= 1e-6 * (1.0 + optimality_gap(a, b)));
        }
    }

    #[test]
    fn selection_follows_variables_under_permutation(
        z in prop::collection::vec(0.0f64..=1.0, 1..30),
        eta in 0.05f64..=1.0,
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut perm: Vec<usize> = (0..z.len()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let zp: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
        let a = select_s(&z, eta).unwrap();
        let b = select_s(&zp, eta).unwrap();
        prop_assert_eq!(a.s.len(), b.s.len());
        // same chosen set unless keys tie at the cut-off
        let key = |v: f64| v.min(1.0 - v);
        let mut ka: Vec<f64> = a.s.iter().map(|&i| key(z[i])).collect();
        let mut kb: Vec<f64> = b.s.iter().map(|&i| key(zp[i])).collect();
        ka.sort_by(f64::total_cmp);
        kb.sort_by(f64::total_cmp);
        prop_assert_eq!(ka, kb);
        let mut xa: Vec<(u64, f64)> = a.s.iter().zip(&a.x_hat).map(|(&i, &x)| (z[i].to_bits(), x)).collect();
        let mut xb: Vec<(u64, f64)> = b.s.iter().zip(&b.x_hat).map(|(&i, &x)| (zp[i].to_bits(), x)).collect();
        xa.sort_by(|p, q| p.partial_cmp(q).unwrap());
        xb.sort_by(|p, q| p.partial_cmp(q).unwrap());
        if a.s.len() == z.len() {
            prop_assert_eq!(xa, xb);
        }
    }
}

#[test]
fn generators_are_deterministic() {
    for problem in Problem::ALL {
        let spec = GenSpec::preset(problem, Preset::Tiny, 42).unwrap();
        let a = solpred::mip::to_json_string(&generate(&spec).unwrap()).unwrap();
        let b = solpred::mip::to_json_string(&generate(&spec).unwrap()).unwrap();
        assert_eq!(a, b, "{problem}");
    }
}
