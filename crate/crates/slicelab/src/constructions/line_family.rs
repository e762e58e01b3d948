//! The projection-preimage line family of a Cantor tree: at each block
//! scale, every direction of the block's Farey set contributes the tube
//! cover of the preimage of the projected tree level. Also the finite-depth
//! intersection of the direction sets, located by Stern–Brocot descent.

use num::{BigInt, BigRational, One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::dyadic::Scale;
use crate::error::{Error, Result};

use super::block::projection_cover_count;
use super::cantor::CantorTree;

/// Per-level tube-cover counts of the line family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineFamilyLevel {
    /// Depth index `n ≥ 1`; the level scale is `Δ_n`.
    pub n: u32,
    pub scale: Scale,
    /// Per direction `e` of the level's Farey set: the exact tube-cover
    /// count `|π_e(R_{Δ_n})|_{Δ_n}` (one tube per projected interval).
    pub per_direction: Vec<((i128, i128), u64)>,
    pub max_per_direction: u64,
    /// Level bound `Δ_n^(-(s+τ)/2 - 1/n)` on the per-direction count.
    pub per_direction_bound: f64,
    /// Sum over directions of per-direction counts (union bound on the
    /// family's covering number at this scale).
    pub total_tubes: u64,
    /// Family bound `Δ_n^(-(3s+τ)/2 - 2/n)`.
    pub family_bound: f64,
}

/// Builds the per-scale tube covers for every materialized block level of
/// the tree.
pub fn build_lf(tree: &CantorTree) -> Result<Vec<LineFamilyLevel>> {
    let (s, tau) = (tree.params.s, tree.params.tau);
    let mut out = Vec::new();
    for (pair_idx, block_level) in tree.blocks.iter().enumerate() {
        let level_idx = 2 * (pair_idx + 1);
        let level = &tree.levels[level_idx];
        let (Some(cubes), Some(block)) = (&level.cubes, &block_level.built) else {
            break; // deeper levels are counted only
        };
        let n = (pair_idx + 1) as u32;
        let k = level.scale.exponent() as f64;
        let per_dir_bound =
            (k * ((s + tau) / 2.0 + 1.0 / n as f64) * std::f64::consts::LN_2).exp();
        let family_bound =
            (k * ((3.0 * s + tau) / 2.0 + 2.0 / n as f64) * std::f64::consts::LN_2).exp();
        let mut per_direction = Vec::new();
        let mut total = 0u64;
        let mut max_dir = 0u64;
        for &(en, ed) in &block.directions.directions {
            let e = num::rational::Ratio::new(en, ed);
            let count = projection_cover_count(cubes, e);
            total += count;
            max_dir = max_dir.max(count);
            per_direction.push(((en, ed), count));
        }
        out.push(LineFamilyLevel {
            n,
            scale: level.scale,
            per_direction,
            max_per_direction: max_dir,
            per_direction_bound: per_dir_bound,
            total_tubes: total,
            family_bound,
        });
    }
    Ok(out)
}

/// Finds a fraction `p/q` with `1 ≤ q ≤ max_den` inside the closed interval
/// `[lo, hi]`, by Stern–Brocot descent (exponential steps). Returns the
/// fraction with the smallest denominator in the interval, if any.
pub fn fraction_in_interval(lo: &BigRational, hi: &BigRational, max_den: &BigInt) -> Option<(BigInt, BigInt)> {
    if lo > hi || max_den < &BigInt::one() {
        return None;
    }
    // integer in range?
    let c = lo.ceil();
    if &c <= hi {
        return Some((c.to_integer(), BigInt::one()));
    }
    if hi < &BigRational::zero() {
        // mirror to positives
        return fraction_in_interval(&-hi.clone(), &-lo.clone(), max_den)
            .map(|(p, q)| (-p, q));
    }
    // now ⌊lo⌋ = ⌊hi⌋ =: base, search in (0,1) after subtracting base
    let base = lo.floor();
    let lo = lo - base.clone();
    let hi = hi - base.clone();
    let base = base.to_integer();
    // Stern–Brocot on (0,1): left = 0/1, right = 1/1
    let (mut lp, mut lq) = (BigInt::zero(), BigInt::one());
    let (mut rp, mut rq) = (BigInt::one(), BigInt::one());
    loop {
        let mp = &lp + &rp;
        let mq = &lq + &rq;
        if mq > *max_den {
            return None;
        }
        let m = BigRational::new(mp.clone(), mq.clone());
        if m < lo {
            // go right; take k steps: largest k with (mp + k·rp)/(mq + k·rq) < lo
            // i.e. mp + k·rp < lo·(mq + k·rq)
            let (a, b) = (lo.numer(), lo.denom());
            // (mp + k rp)·b < a·(mq + k rq)  ⇔  k·(rp·b - a·rq) < a·mq - mp·b
            let coef = &rp * b - a * &rq;
            let rhs = a * &mq - &mp * b;
            let k = if coef.is_negative() || coef.is_zero() {
                BigInt::zero()
            } else {
                // floor((rhs - 1)/coef), at least 0
                let k = (&rhs - BigInt::one()) / &coef;
                if k.is_negative() {
                    BigInt::zero()
                } else {
                    k
                }
            };
            lp = &mp + &k * &rp;
            lq = &mq + &k * &rq;
        } else if m > hi {
            let (a, b) = (hi.numer(), hi.denom());
            // (mp + k·lp)/(mq + k·lq) > hi ⇔ (mp + k lp)·b > a·(mq + k lq)
            // ⇔ k·(lp·b - a·lq) > a·mq - mp·b
            let coef = &lp * b - a * &lq;
            let rhs = a * &mq - &mp * b;
            let k = if coef.is_positive() {
                let k = &rhs / &coef; // rhs < 0 typically; floor division is fine
                if k.is_negative() {
                    BigInt::zero()
                } else {
                    k
                }
            } else {
                BigInt::zero()
            };
            rp = &mp + &k * &lp;
            rq = &mq + &k * &lq;
        } else {
            return Some((base * &mq + mp, mq));
        }
    }
}

/// Witness chain for the nonemptiness of the finite-depth direction-set
/// intersection: per level, a Farey point whose `Δ̄_n`-interval nests inside
/// the previous level's interval.
#[derive(Debug, Clone)]
pub struct EIntersectionWitness {
    /// `(level n, chosen direction e_n = p/q - θ_n)` per depth.
    pub chain: Vec<(u32, BigRational)>,
    /// Final interval, contained in every level's direction-set
    /// neighbourhood.
    pub interval: (BigRational, BigRational),
}

fn big(v: i128) -> BigInt {
    BigInt::from(v)
}

/// Walks the tree's block scales, at each level locating a Farey direction
/// whose neighbourhood nests in the previous interval. Returns the chain and
/// final interval, or `None` when some level admits no such direction.
pub fn e_intersection_witness(tree: &CantorTree) -> Option<EIntersectionWitness> {
    let mut chain = Vec::new();
    let mut lo = BigRational::zero();
    let mut hi = BigRational::one();
    for (pair_idx, block_level) in tree.blocks.iter().enumerate() {
        let n = (pair_idx + 1) as u32;
        let params = &block_level.params;
        let ratio = params.delta; // block ratio scale Δ̄_n
        let width = BigRational::new(BigInt::one(), BigInt::one() << ratio.exponent());
        let theta = params.theta();
        let theta_big = BigRational::new(big(*theta.numer()), big(*theta.denom()));
        let max_den = big(params.farey_cap() as i128);
        // want p/q with [p/q - θ ± width] ⊆ [lo, hi]
        let target_lo = &lo + &theta_big + &width;
        let target_hi = &hi + &theta_big - &width;
        let (p, q) = fraction_in_interval(&target_lo.max(BigRational::zero()), &target_hi, &max_den)?;
        let e = BigRational::new(p, q) - &theta_big;
        chain.push((n, e.clone()));
        lo = &e - &width;
        hi = &e + &width;
    }
    Some(EIntersectionWitness {
        chain,
        interval: (lo, hi),
    })
}
