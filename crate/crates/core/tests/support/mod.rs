//! Exhaustive enumeration oracle for instances with few binaries.
#![allow(dead_code)]

use solpred::lp::{solve_lp, BoundOverrides, LpStatus};
use solpred::mip::{canonicalize, MipInstance, Sense};

const TOL: f64 = 1e-6;

/// Every 0/1 assignment of the binaries (bit `k` of the mask is the `k`-th
/// binary) that can be completed to a feasible point, with the best
/// objective of that completion in the instance's own sense.
pub fn enumerate(inst: &MipInstance) -> Vec<(u32, f64)> {
    let canon = canonicalize(inst).expect("valid instance");
    let m = &canon.instance;
    let bins = m.binaries();
    assert!(bins.len() <= 20, "too many binaries to enumerate");
    let pure: Vec<bool> = m.constraints.iter().map(|r| r.coeffs.iter().all(|&(j, _)| m.is_binary(j))).collect();
    let has_other = bins.len() < m.num_vars();
    let mut x = vec![0.0; m.num_vars()];
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << bins.len()) {
        for (k, &j) in bins.iter().enumerate() {
            x[j] = ((mask >> k) & 1) as f64;
        }
        let ok = m.constraints.iter().zip(&pure).filter(|(_, &p)| p).all(|(r, _)| {
            let a = r.activity(&x);
            a >= r.lhs - TOL && a <= r.rhs + TOL
        });
        if !ok {
            continue;
        }
        let obj = if has_other {
            let fix: BoundOverrides = bins.iter().map(|&j| (j, (x[j], x[j]))).collect();
            let lp = solve_lp(m, &fix, &[]);
            match lp.status {
                LpStatus::Optimal => lp.objective,
                _ => continue,
            }
        } else {
            m.objective_value(&x)
        };
        out.push((mask, if canon.sense_flipped { -obj } else { obj }));
    }
    out
}

/// Best objective over all binary assignments, in the instance's sense.
pub fn brute_force(inst: &MipInstance) -> Option<f64> {
    let pts = enumerate(inst);
    let better = |a: f64, b: f64| if inst.sense == Sense::Maximize { a > b } else { a < b };
    pts.into_iter().map(|(_, v)| v).reduce(|a, b| if better(b, a) { b } else { a })
}

/// Dual objective of an optimal LP of a minimize-sense instance: each row
/// dual prices the side its sign points at, each reduced cost the bound
/// its sign points at.
pub fn dual_objective(m: &MipInstance, lp: &solpred::lp::LpSolution) -> f64 {
    let side = |v: f64, lo: f64, hi: f64| {
        if v.abs() <= 1e-12 {
            0.0
        } else if v > 0.0 {
            v * lo
        } else {
            v * hi
        }
    };
    let rows: f64 = m.constraints.iter().zip(&lp.duals).map(|(r, &y)| side(y, r.lhs, r.rhs)).sum();
    let cols: f64 = m.variables.iter().zip(&lp.reduced_costs).map(|(v, &d)| side(d, v.lb, v.ub)).sum();
    rows + cols
}
