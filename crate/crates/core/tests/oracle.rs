mod support;

use solpred::bnb::{solve, BnbConfig};
use solpred::gen::{generate, GenSpec, Preset, Problem};

#[test]
fn bnb_matches_enumeration_on_tiny_presets() {
    for problem in Problem::ALL {
        let t = std::time::Instant::now();
        for seed in 0..5 {
            let inst = generate(&GenSpec::preset(problem, Preset::Tiny, seed).unwrap()).unwrap();
            let want = support::brute_force(&inst).expect("generators are feasible");
            let got = solve(&inst, &BnbConfig::default()).unwrap();
            let obj = got.objective().unwrap();
            assert!((obj - want).abs() <= 1e-6, "{problem} seed {seed}: {obj} vs {want}");
        }
        eprintln!("{problem}: {:?}", t.elapsed());
    }
}
