//! Sub-uniformity constants and the partition of an arbitrary cube or tube
//! family into sub-uniform parts.
//!
//! A family `𝒫` is sub-uniform along a ladder `{Δ_j}` with constant `C` when
//! `|𝒫|_{Δ_j} · |𝒫 ∩ 𝐩|_{Δ_{j+1}} ≤ C·|𝒫|_{Δ_{j+1}}` for every level `j` and
//! every parent `𝐩`. The partition buckets elements at each level by the
//! dyadic size class of their parent's child count, finest level first; each
//! resulting part has constant at most 2.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeSet, DyadicSquare, Scale, ScaleSequence, TubeSet};
use crate::error::{Error, Result};

/// Smallest constant witnessing Definition-style sub-uniformity, with the
/// (level, parent) pair attaining it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniformityReport {
    pub delta: Scale,
    pub sigma: u32,
    /// Exact value of the maximal ratio (numerator, denominator), reduced.
    pub constant_exact: (u128, u128),
    /// Ladder level `j` of the witness parent scale `Δ_j`.
    pub witness_level: u32,
    pub witness_parent: DyadicSquare,
}

impl UniformityReport {
    pub fn constant(&self) -> f64 {
        self.constant_exact.0 as f64 / self.constant_exact.1 as f64
    }
}

fn reduced(num: u128, den: u128) -> (u128, u128) {
    let g = num::integer::gcd(num, den);
    (num / g, den / g)
}

/// `max_{j, 𝐩} |P|_{Δ_j}·|P ∩ 𝐩|_{Δ_{j+1}} / |P|_{Δ_{j+1}}` over the ladder.
pub fn subuniformity_constant(set: &CubeSet, scales: &ScaleSequence) -> Result<UniformityReport> {
    if set.is_empty() {
        return Err(Error::EmptyFamily("sub-uniformity constant of empty family"));
    }
    if !scales.delta().is_coarser_or_equal(set.scale()) {
        return Err(Error::InvalidScale(format!(
            "ladder bottom {} finer than family scale {}",
            scales.delta(),
            set.scale()
        )));
    }
    let mut best: (u128, u128) = (0, 1);
    let mut witness = (0u32, set.members()[0].parent(Scale::ONE).expect("root"));
    for j in 0..scales.steps() {
        let coarse = scales.level(j);
        let fine = scales.level(j + 1);
        let cover_coarse = set.cover(coarse)?;
        let cover_fine = set.cover(fine)?;
        let mut per_parent: BTreeMap<DyadicSquare, u64> = BTreeMap::new();
        for cell in cover_fine.members() {
            *per_parent.entry(cell.parent(coarse).expect("coarser")).or_insert(0) += 1;
        }
        let total_coarse = cover_coarse.len() as u128;
        let total_fine = cover_fine.len() as u128;
        for (parent, child_count) in per_parent {
            let num = total_coarse * child_count as u128;
            // compare num/total_fine > best by cross-multiplication
            if num * best.1 > best.0 * total_fine {
                best = reduced(num, total_fine);
                witness = (j, parent);
            }
        }
    }
    Ok(UniformityReport {
        delta: scales.delta(),
        sigma: scales.sigma(),
        constant_exact: best,
        witness_level: witness.0,
        witness_parent: witness.1,
    })
}

/// Tube-family variant: the same scan runs on the dual parameter squares.
pub fn subuniformity_constant_tubes(set: &TubeSet, scales: &ScaleSequence) -> Result<UniformityReport> {
    subuniformity_constant(&set.duals(), scales)
}

/// Witness of the all-pairs distribution constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionReport {
    pub constant_exact: (u128, u128),
    pub witness_coarse: Scale,
    pub witness_fine: Scale,
    pub witness_parent: DyadicSquare,
}

impl DistributionReport {
    pub fn constant(&self) -> f64 {
        self.constant_exact.0 as f64 / self.constant_exact.1 as f64
    }
}

/// Finite-resolution sub-uniform-distribution constant: the maximum of
/// `|K|_R · |K ∩ Q|_r / |K|_r` over all dyadic pairs `r ≤ R ≤ 1` and all
/// `Q ∈ 𝒟_R(K)`.
pub fn subuniformly_distributed_constant(set: &CubeSet) -> Result<DistributionReport> {
    if set.is_empty() {
        return Err(Error::EmptyFamily("distribution constant of empty family"));
    }
    let k = set.scale().exponent();
    let mut best: (u128, u128) = (0, 1);
    let mut witness = (Scale::ONE, Scale::ONE, set.members()[0].parent(Scale::ONE).expect("root"));
    for kc in 0..=k {
        let coarse = Scale::new(kc);
        let cover_coarse = set.cover(coarse)?;
        for kf in kc..=k {
            let fine = Scale::new(kf);
            let cover_fine = set.cover(fine)?;
            let mut per_parent: BTreeMap<DyadicSquare, u64> = BTreeMap::new();
            for cell in cover_fine.members() {
                *per_parent.entry(cell.parent(coarse).expect("coarser")).or_insert(0) += 1;
            }
            let total_coarse = cover_coarse.len() as u128;
            let total_fine = cover_fine.len() as u128;
            for (parent, child_count) in per_parent {
                let num = total_coarse * child_count as u128;
                if num * best.1 > best.0 * total_fine {
                    best = reduced(num, total_fine);
                    witness = (coarse, fine, parent);
                }
            }
        }
    }
    Ok(DistributionReport {
        constant_exact: best,
        witness_coarse: witness.0,
        witness_fine: witness.1,
        witness_parent: witness.2,
    })
}

/// One part of the sub-uniform partition: elements whose per-level branching
/// classes match the signature (one class `k_j` per split level, finest
/// first).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Part {
    pub signature: Vec<u32>,
    pub cubes: CubeSet,
}

/// Partition of a family into sub-uniform parts with constant 2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Partition {
    pub delta: Scale,
    pub sigma: u32,
    pub parts: Vec<Part>,
}

impl Partition {
    /// Upper bound `(log₂S² + 1)^n` on the number of parts.
    pub fn part_count_bound(scales: &ScaleSequence) -> u128 {
        let buckets = (2 * scales.sigma() + 1) as u128;
        buckets.pow(scales.steps())
    }
}

/// Size class: the unique `k ≥ 0` with `2^(k-1) < count ≤ 2^k`.
fn size_class(count: u64) -> u32 {
    debug_assert!(count >= 1);
    64 - (count - 1).leading_zeros().min(64) // ceil(log2(count)), with count=1 -> 0
}

/// Partitions `P` into sub-uniform parts with constant 2 by iterating from
/// the finest level upward: at level `j`, elements are classified by the
/// size class of `|𝐩^j ∩ (current part)|_{Δ_{j+1}}`. Elements sharing a
/// `Δ_j`-parent always land in the same class, so finer levels keep their
/// classes as coarser splits are applied.
pub fn decompose_subuniform(set: &CubeSet, scales: &ScaleSequence) -> Result<Partition> {
    if set.scale() != scales.delta() {
        return Err(Error::ScaleMismatch(set.scale(), scales.delta()));
    }
    let n = scales.steps();
    // groups: signature -> member list
    let mut groups: BTreeMap<Vec<u32>, Vec<DyadicSquare>> = BTreeMap::new();
    groups.insert(Vec::new(), set.members().to_vec());

    for j in (1..n).rev() {
        let parent_scale = scales.level(j);
        let child_scale = scales.level(j + 1);
        let mut next: BTreeMap<Vec<u32>, Vec<DyadicSquare>> = BTreeMap::new();
        for (sig, members) in groups {
            // per-parent count of child-scale cover cells within this part
            let mut children: BTreeMap<DyadicSquare, Vec<DyadicSquare>> = BTreeMap::new();
            for m in &members {
                children
                    .entry(m.parent(child_scale).expect("coarser"))
                    .or_default();
            }
            let mut per_parent: BTreeMap<DyadicSquare, u64> = BTreeMap::new();
            for cell in children.keys() {
                *per_parent.entry(cell.parent(parent_scale).expect("coarser")).or_insert(0) += 1;
            }
            for m in members {
                let parent = m.parent(parent_scale).expect("coarser");
                let class = size_class(per_parent[&parent]);
                let mut new_sig = sig.clone();
                new_sig.push(class);
                next.entry(new_sig).or_default().push(m);
            }
        }
        groups = next;
    }

    let delta = scales.delta();
    let parts = groups
        .into_iter()
        .map(|(signature, members)| {
            Ok(Part {
                signature,
                cubes: CubeSet::new(delta, members)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition {
        delta,
        sigma: scales.sigma(),
        parts,
    })
}

/// Tube-family partition via dual squares.
pub fn decompose_subuniform_tubes(set: &TubeSet, scales: &ScaleSequence) -> Result<Vec<(Vec<u32>, TubeSet)>> {
    let partition = decompose_subuniform(&set.duals(), scales)?;
    Ok(partition
        .parts
        .into_iter()
        .map(|part| (part.signature, TubeSet::from_duals(&part.cubes)))
        .collect())
}
