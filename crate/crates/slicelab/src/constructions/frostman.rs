//! Frostman measures on nested cube families: parent mass splits equally
//! among surviving children, and the maximal ratio `μ(𝐐)/r^u` is scanned
//! over all intermediate dyadic cells.

use std::collections::BTreeMap;

use num::{BigRational, FromPrimitive, One, Zero};
use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeSet, DyadicSquare, Scale};
use crate::error::{Error, Result};

/// Nested cube families at strictly decreasing scales (coarse first).
#[derive(Debug, Clone)]
pub struct NestedFamily {
    levels: Vec<CubeSet>,
}

impl NestedFamily {
    pub fn new(levels: Vec<CubeSet>) -> Result<NestedFamily> {
        if levels.len() < 2 {
            return Err(Error::InvalidParameter("nested family needs at least two levels".into()));
        }
        for w in levels.windows(2) {
            if !w[0].scale().is_coarser_or_equal(w[1].scale()) || w[0].scale() == w[1].scale() {
                return Err(Error::InvalidParameter(
                    "levels must have strictly decreasing scales".into(),
                ));
            }
            if w[0].is_empty() {
                return Err(Error::EmptyFamily("empty level in nested family"));
            }
            for sq in w[1].members() {
                let parent = sq.parent(w[0].scale())?;
                if !w[0].contains(&parent) {
                    return Err(Error::Construction(format!(
                        "cube {} has no ancestor at scale {}",
                        sq.label(),
                        w[0].scale()
                    )));
                }
            }
        }
        if levels.last().expect("nonempty").is_empty() {
            return Err(Error::EmptyFamily("empty finest level"));
        }
        Ok(NestedFamily { levels })
    }

    pub fn levels(&self) -> &[CubeSet] {
        &self.levels
    }

    /// Builds the nested family from the materialized levels of a tree-like
    /// level list, coarse to fine.
    pub fn from_levels(levels: Vec<CubeSet>) -> Result<NestedFamily> {
        Self::new(levels)
    }
}

/// Mass assignment of one level: uniform when every parent splits into the
/// same number of children, per-cube otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum MassLevel {
    /// Every cube of the level carries this mass (as `num/den` strings in
    /// reports; exact here).
    Uniform(BigRational),
    PerCube(BTreeMap<(u64, u64), BigRational>),
}

impl MassLevel {
    pub fn mass_of(&self, sq: &DyadicSquare) -> Option<BigRational> {
        match self {
            MassLevel::Uniform(m) => Some(m.clone()),
            MassLevel::PerCube(map) => map.get(&(sq.ix, sq.iy)).cloned(),
        }
    }
}

/// The measure with its Frostman diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrostmanMeasure {
    pub u: f64,
    /// Mass per level, aligned with the family's levels.
    pub level_masses: Vec<MassLevel>,
    /// Total mass of the finest level (exactly 1).
    pub total_is_one: bool,
    /// Max over intermediate dyadic cells `𝐐` at scales `r` of `μ(𝐐)/r^u`.
    pub max_ratio: f64,
    pub witness_scale: Scale,
    pub witness_cell: (u64, u64),
    /// Max over levels `n ≥ 1` of `(max_Q μ(Q)/δ_n^u)^(1/n)`.
    pub level_constant: f64,
}

fn pow_scale_f(scale: Scale, exp: f64) -> f64 {
    (-(scale.exponent() as f64) * exp * std::f64::consts::LN_2).exp()
}

fn to_f64(r: &BigRational) -> f64 {
    let n = r.numer();
    let d = r.denom();
    // good enough for diagnostics: ratio of f64 conversions with fallback
    let nf = n.to_string().parse::<f64>().unwrap_or(f64::MAX);
    let df = d.to_string().parse::<f64>().unwrap_or(f64::MAX);
    nf / df
}

/// Builds the measure `μ(Q) = μ(parent)/|children(parent)|` (mass 1 split
/// from the coarsest level) and scans every intermediate dyadic scale for
/// the maximal Frostman ratio. Errors if any surviving parent is childless.
pub fn frostman_measure(family: &NestedFamily, u: f64) -> Result<FrostmanMeasure> {
    let levels = family.levels();
    let coarsest = &levels[0];
    let root_mass = BigRational::new(1.into(), (coarsest.len() as i64).into());
    let mut level_masses: Vec<MassLevel> = vec![MassLevel::Uniform(root_mass)];

    for li in 1..levels.len() {
        let (coarse, fine) = (&levels[li - 1], &levels[li]);
        // child counts per parent
        let mut counts: BTreeMap<(u64, u64), u64> = BTreeMap::new();
        for sq in fine.members() {
            let p = sq.parent(coarse.scale())?;
            *counts.entry((p.ix, p.iy)).or_insert(0) += 1;
        }
        for parent in coarse.members() {
            if !counts.contains_key(&(parent.ix, parent.iy)) {
                return Err(Error::Construction(format!(
                    "surviving parent {} has no surviving children",
                    parent.label()
                )));
            }
        }
        let uniform_count = {
            let mut it = counts.values();
            let first = *it.next().expect("nonempty");
            it.all(|&c| c == first).then_some(first)
        };
        let next = match (&level_masses[li - 1], uniform_count) {
            (MassLevel::Uniform(mass), Some(c)) => {
                MassLevel::Uniform(mass / BigRational::new((c as i64).into(), 1.into()))
            }
            _ => {
                let mut map = BTreeMap::new();
                let parent_masses = &level_masses[li - 1];
                for sq in fine.members() {
                    let p = sq.parent(coarse.scale())?;
                    let pm = parent_masses
                        .mass_of(&p)
                        .ok_or_else(|| Error::Construction(format!("missing parent mass {}", p.label())))?;
                    let c = counts[&(p.ix, p.iy)];
                    map.insert(
                        (sq.ix, sq.iy),
                        pm / BigRational::new((c as i64).into(), 1.into()),
                    );
                }
                MassLevel::PerCube(map)
            }
        };
        level_masses.push(next);
    }

    // total mass of the finest level is exactly 1
    let total: BigRational = match level_masses.last().expect("nonempty") {
        MassLevel::Uniform(m) => {
            m * BigRational::from_usize(levels.last().expect("nonempty").len()).expect("usize")
        }
        MassLevel::PerCube(map) => map.values().fold(BigRational::zero(), |a, b| a + b),
    };
    let total_is_one = total.is_one();

    // positivity on surviving cubes
    for (li, masses) in level_masses.iter().enumerate() {
        for sq in levels[li].members() {
            let m = masses
                .mass_of(sq)
                .ok_or_else(|| Error::Construction(format!("missing mass for {}", sq.label())))?;
            if m <= BigRational::zero() {
                return Err(Error::Construction(format!("non-positive mass at {}", sq.label())));
            }
        }
    }

    // max ratio over intermediate scales: for r between consecutive level
    // scales, μ(𝐐) is the total fine-level mass under 𝐐
    let mut max_ratio = 0.0f64;
    let mut witness = (levels[0].scale(), (0u64, 0u64));
    for li in 1..levels.len() {
        let fine = &levels[li];
        let fine_masses = &level_masses[li];
        let lo = levels[li - 1].scale().exponent();
        let hi = fine.scale().exponent();
        for kr in (lo + 1)..=hi {
            let r = Scale::new(kr);
            let shift = hi - kr;
            let mut grouped: BTreeMap<(u64, u64), BigRational> = BTreeMap::new();
            match fine_masses {
                MassLevel::Uniform(m) => {
                    let mut counts: BTreeMap<(u64, u64), u64> = BTreeMap::new();
                    for sq in fine.members() {
                        *counts.entry((sq.ix >> shift, sq.iy >> shift)).or_insert(0) += 1;
                    }
                    for (cell, c) in counts {
                        grouped.insert(cell, m * BigRational::from_u64(c).expect("u64"));
                    }
                }
                MassLevel::PerCube(map) => {
                    for (&(ix, iy), m) in map {
                        let cell = (ix >> shift, iy >> shift);
                        let e = grouped.entry(cell).or_insert_with(BigRational::zero);
                        *e += m;
                    }
                }
            }
            let denom = pow_scale_f(r, u);
            for (cell, mass) in grouped {
                let ratio = to_f64(&mass) / denom;
                if ratio > max_ratio {
                    max_ratio = ratio;
                    witness = (r, cell);
                }
            }
        }
    }

    // per-level constant: (max_Q μ(Q)/δ_n^u)^(1/n)
    let mut level_constant = 0.0f64;
    for (li, masses) in level_masses.iter().enumerate().skip(1) {
        let denom = pow_scale_f(levels[li].scale(), u);
        let worst = match masses {
            MassLevel::Uniform(m) => to_f64(m) / denom,
            MassLevel::PerCube(map) => map
                .values()
                .map(|m| to_f64(m) / denom)
                .fold(0.0, f64::max),
        };
        level_constant = level_constant.max(worst.powf(1.0 / li as f64));
    }

    Ok(FrostmanMeasure {
        u,
        level_masses,
        total_is_one,
        max_ratio,
        witness_scale: witness.0,
        witness_cell: witness.1,
        level_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(k: u32, ix: u64, iy: u64) -> DyadicSquare {
        DyadicSquare::new(Scale::new(k), ix, iy).unwrap()
    }

    /// Uniform 4-ary subtree of the 16-ary grid: δ_m = 4^-m, each cube keeps
    /// its 4 "even-quadrant" children of the 16 available.
    fn four_ary(depth: u32) -> Vec<CubeSet> {
        let mut levels = vec![CubeSet::new(Scale::ONE, vec![sq(0, 0, 0)]).unwrap()];
        let mut cells: Vec<(u64, u64)> = vec![(0, 0)];
        for m in 1..=depth {
            let mut next = Vec::new();
            for &(x, y) in &cells {
                for (dx, dy) in [(0u64, 0u64), (0, 2), (2, 0), (2, 2)] {
                    next.push((4 * x + dx, 4 * y + dy));
                }
            }
            cells = next;
            levels.push(
                CubeSet::new(
                    Scale::new(2 * m),
                    cells.iter().map(|&(x, y)| sq(2 * m, x, y)).collect(),
                )
                .unwrap(),
            );
        }
        levels
    }

    #[test]
    fn uniform_four_ary_tree() {
        let family = NestedFamily::new(four_ary(3)).unwrap();
        let fm = frostman_measure(&family, 1.0).unwrap();
        assert!(fm.total_is_one);
        // μ(Q) = 4^-n = δ_n exactly at every level
        for (li, masses) in fm.level_masses.iter().enumerate() {
            let want = BigRational::new(1.into(), (1i64 << (2 * li)).into());
            match masses {
                MassLevel::Uniform(m) => assert_eq!(*m, want),
                MassLevel::PerCube(_) => panic!("uniform tree should have uniform masses"),
            }
        }
        // ratio exactly 1 at level scales; intermediate scales can double it
        // (a 2r-cell holds one child of mass r, u = 1)
        assert!((fm.level_constant - 1.0).abs() < 1e-12);
        assert!(fm.max_ratio <= 2.0 + 1e-12);
    }

    #[test]
    fn single_branch_tree() {
        let levels = vec![
            CubeSet::new(Scale::ONE, vec![sq(0, 0, 0)]).unwrap(),
            CubeSet::new(Scale::new(2), vec![sq(2, 1, 2)]).unwrap(),
            CubeSet::new(Scale::new(5), vec![sq(5, 11, 21)]).unwrap(),
        ];
        let family = NestedFamily::new(levels).unwrap();
        let fm = frostman_measure(&family, 0.0).unwrap();
        assert!(fm.total_is_one);
        // μ ≡ 1 along the branch, ratio 1 everywhere (r^0 = 1)
        assert!((fm.max_ratio - 1.0).abs() < 1e-12);
        assert!((fm.level_constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn childless_parent_rejected() {
        let levels = vec![
            CubeSet::new(Scale::new(1), vec![sq(1, 0, 0), sq(1, 1, 1)]).unwrap(),
            CubeSet::new(Scale::new(3), vec![sq(3, 0, 0)]).unwrap(),
        ];
        let family = NestedFamily::new(levels).unwrap();
        assert!(matches!(frostman_measure(&family, 1.0), Err(Error::Construction(_))));
    }

    #[test]
    fn non_nested_rejected() {
        let levels = vec![
            CubeSet::new(Scale::new(1), vec![sq(1, 0, 0)]).unwrap(),
            CubeSet::new(Scale::new(3), vec![sq(3, 7, 7)]).unwrap(),
        ];
        assert!(NestedFamily::new(levels).is_err());
    }

    #[test]
    fn non_uniform_masses() {
        // parent (0,0) splits into 3 children, parent (1,1) into 1
        let levels = vec![
            CubeSet::new(Scale::new(1), vec![sq(1, 0, 0), sq(1, 1, 1)]).unwrap(),
            CubeSet::new(
                Scale::new(2),
                vec![sq(2, 0, 0), sq(2, 0, 1), sq(2, 1, 0), sq(2, 3, 3)],
            )
            .unwrap(),
        ];
        let family = NestedFamily::new(levels).unwrap();
        let fm = frostman_measure(&family, 1.0).unwrap();
        assert!(fm.total_is_one);
        match &fm.level_masses[1] {
            MassLevel::PerCube(map) => {
                assert_eq!(map[&(0, 0)], BigRational::new(1.into(), 6.into()));
                assert_eq!(map[&(3, 3)], BigRational::new(1.into(), 2.into()));
            }
            MassLevel::Uniform(_) => panic!("expected per-cube masses"),
        }
    }
}
