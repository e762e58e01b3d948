//! Ball–tube incidences: the exact predicate, bucketed counting, the
//! product-cube embedding into `ℝ⁴`, scale coarsening, and the incidence
//! quotient.
//!
//! A square `p` and tube `T` at scale `δ` are incident when the disc `B_p`
//! (radius `5δ`) meets the strip `𝕋_T` (half-width `5δ`), i.e. when the
//! perpendicular distance from the ball center to the core line is at most
//! `10δ`. Strips are infinite and the inequality is closed, so tangencies
//! count. The test reduces to the integer comparison
//! `u² ≤ 400·(4^k + ia²)` with `u = ia(2ix+1) + 2^k(2ib - 2iy - 1)`.

use num::integer::Roots;
use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeSet, DyadicSquare, DyadicTube, Rat, Scale, TubeSet};
use crate::error::{Error, Result};

/// An incident (square, tube) pair at a common scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IncidencePair {
    pub square: DyadicSquare,
    pub tube: DyadicTube,
}

/// A `δ`-cube of `ℝ⁴`: the product `p ⊗ T = p × p_T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductCube {
    pub square: DyadicSquare,
    pub dual: DyadicSquare,
}

impl ProductCube {
    pub fn scale(&self) -> Scale {
        self.square.scale
    }

    pub fn label(&self) -> String {
        format!("{}x{}", self.square.label(), self.dual.label())
    }
}

/// The incidence set `ℐ(𝒫,𝒯)`, deduplicated and sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidenceSet {
    scale: Scale,
    pairs: Vec<IncidencePair>,
}

impl IncidenceSet {
    pub fn new(scale: Scale, mut pairs: Vec<IncidencePair>) -> Result<IncidenceSet> {
        for pr in &pairs {
            if pr.square.scale != scale || pr.tube.scale() != scale {
                return Err(Error::ScaleMismatch(scale, pr.square.scale));
            }
            if !incident(&pr.square, &pr.tube)? {
                return Err(Error::InvalidParameter(format!(
                    "pair ({}, {}) is not incident",
                    pr.square.label(),
                    pr.tube.label()
                )));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(IncidenceSet { scale, pairs })
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn pairs(&self) -> &[IncidencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Raw index-level incidence test; `thick = (num, den)` scales the contact
/// threshold to `10·A·δ` for `A = num/den` (A = 1 gives the plain predicate).
#[inline]
pub(crate) fn incident_idx(k: u32, ix: u64, iy: u64, ia: u64, ib: u64, thick: (i128, i128)) -> bool {
    let n = 1i128 << k;
    let (ix, iy, ia, ib) = (ix as i128, iy as i128, ia as i128, ib as i128);
    let u = ia * (2 * ix + 1) + n * (2 * ib - 2 * iy - 1);
    let (num, den) = thick;
    u * u * den * den <= 400 * num * num * (n * n + ia * ia)
}

/// `true` iff `B_p ∩ 𝕋_T ≠ ∅`. Errors on mismatched scales.
pub fn incident(p: &DyadicSquare, t: &DyadicTube) -> Result<bool> {
    if p.scale != t.scale() {
        return Err(Error::ScaleMismatch(p.scale, t.scale()));
    }
    Ok(incident_idx(
        p.scale.exponent(),
        p.ix,
        p.iy,
        t.slope_index(),
        t.intercept_index(),
        (1, 1),
    ))
}

/// Thickened variant: `A·B_p ∩ A·𝕋_T ≠ ∅` for a rational factor `A ≥ 1`,
/// i.e. contact threshold `10Aδ`.
pub fn incident_thickened(p: &DyadicSquare, t: &DyadicTube, a: Rat) -> Result<bool> {
    if p.scale != t.scale() {
        return Err(Error::ScaleMismatch(p.scale, t.scale()));
    }
    if a < Rat::from(1) {
        return Err(Error::InvalidParameter(format!("thickening {a} < 1")));
    }
    Ok(incident_idx(
        p.scale.exponent(),
        p.ix,
        p.iy,
        t.slope_index(),
        t.intercept_index(),
        (*a.numer(), *a.denom()),
    ))
}

/// Column index of squares, for intercept bucketing: for a fixed tube and a
/// fixed column of squares, the incident rows form a contiguous interval that
/// is computed exactly (integer square root), so a tube only ever touches the
/// `O(δ)`-band of squares around its core line.
struct ColumnIndex {
    k: u32,
    /// (ix, sorted iys) per occupied column.
    columns: Vec<(u64, Vec<u64>)>,
}

impl ColumnIndex {
    fn build(set: &CubeSet) -> ColumnIndex {
        let mut columns: Vec<(u64, Vec<u64>)> = Vec::new();
        // members are sorted by (ix, iy) already
        for sq in set.members() {
            match columns.last_mut() {
                Some((ix, iys)) if *ix == sq.ix => iys.push(sq.iy),
                _ => columns.push((sq.ix, vec![sq.iy])),
            }
        }
        ColumnIndex {
            k: set.scale().exponent(),
            columns,
        }
    }

    /// Exact incident row interval for tube (ia, ib) in column ix:
    /// |u| <= floor(sqrt(400 A² (4^k + ia²))) with u = K - iy·2^(k+1).
    fn row_interval(&self, ix: u64, ia: u64, ib: u64, thick: (i128, i128)) -> Option<(u64, u64)> {
        let k = self.k;
        let n = 1i128 << k;
        let (num, den) = thick;
        let c = 400 * num * num * (n * n + (ia as i128) * (ia as i128));
        let bound = c.sqrt() / den; // |u·den| <= isqrt(c)  ⇔  |u| <= isqrt(c)/den
        let key = (ia as i128) * (2 * (ix as i128) + 1) + n * (2 * (ib as i128) - 1);
        let two_n = 2 * n;
        // (key - bound)/2n <= iy <= (key + bound)/2n
        let lo = (key - bound).div_euclid(two_n) + if (key - bound).rem_euclid(two_n) == 0 { 0 } else { 1 };
        let hi = (key + bound).div_euclid(two_n);
        let lo = lo.max(0);
        let hi = hi.min(n - 1);
        if lo > hi {
            None
        } else {
            Some((lo as u64, hi as u64))
        }
    }
}

fn count_with_thickening(
    squares: &CubeSet,
    tubes: &TubeSet,
    thick: (i128, i128),
    collect: bool,
) -> (u64, Vec<IncidencePair>) {
    let index = ColumnIndex::build(squares);
    let scale = squares.scale();
    let mut total = 0u64;
    let mut pairs = Vec::new();
    for tube in tubes.members() {
        let (ia, ib) = (tube.slope_index(), tube.intercept_index());
        for (ix, iys) in &index.columns {
            let Some((lo, hi)) = index.row_interval(*ix, ia, ib, thick) else {
                continue;
            };
            let start = iys.partition_point(|&y| y < lo);
            let end = iys.partition_point(|&y| y <= hi);
            total += (end - start) as u64;
            if collect {
                for &iy in &iys[start..end] {
                    pairs.push(IncidencePair {
                        square: DyadicSquare {
                            scale,
                            ix: *ix,
                            iy,
                        },
                        tube: *tube,
                    });
                }
            }
        }
    }
    (total, pairs)
}

/// Exact incidence set via intercept bucketing. Identical to the all-pairs
/// computation but with cost `O((|P|+|T|)·log + |ℐ|)`.
pub fn count_incidences(squares: &CubeSet, tubes: &TubeSet) -> Result<IncidenceSet> {
    if squares.scale() != tubes.scale() {
        return Err(Error::ScaleMismatch(squares.scale(), tubes.scale()));
    }
    let (_, mut pairs) = count_with_thickening(squares, tubes, (1, 1), true);
    pairs.sort_unstable();
    Ok(IncidenceSet {
        scale: squares.scale(),
        pairs,
    })
}

/// Exact incidence count without materializing the pair set.
pub fn incidence_count(squares: &CubeSet, tubes: &TubeSet) -> Result<u64> {
    if squares.scale() != tubes.scale() {
        return Err(Error::ScaleMismatch(squares.scale(), tubes.scale()));
    }
    Ok(count_with_thickening(squares, tubes, (1, 1), false).0)
}

/// Count of `A`-thickened incidences `|ℐ(ℬ^A, 𝒯^A)|`.
pub fn thickened_incidence_count(squares: &CubeSet, tubes: &TubeSet, a: Rat) -> Result<u64> {
    if squares.scale() != tubes.scale() {
        return Err(Error::ScaleMismatch(squares.scale(), tubes.scale()));
    }
    if a < Rat::from(1) {
        return Err(Error::InvalidParameter(format!("thickening {a} < 1")));
    }
    Ok(count_with_thickening(squares, tubes, (*a.numer(), *a.denom()), false).0)
}

/// Incidence count of a single tube against a square family.
pub fn tube_incidence_count(squares: &CubeSet, tube: &DyadicTube) -> Result<u64> {
    let tubes = TubeSet::new(tube.scale(), vec![*tube])?;
    incidence_count(squares, &tubes)
}

/// The `Δ`-coarsening `(ℐ)_Δ = {parent(p) ⊗ parent(T)}`, guaranteed to land
/// inside `ℐ(𝒫_Δ, 𝒯_Δ)` whenever `δ ≤ 1/100`.
pub fn coarsen(incidences: &IncidenceSet, coarse: Scale) -> Result<Vec<ProductCube>> {
    if !coarse.is_coarser_or_equal(incidences.scale) {
        return Err(Error::InvalidScale(format!(
            "coarsening scale {coarse} finer than incidence scale {}",
            incidences.scale
        )));
    }
    if incidences.scale.exponent() < 7 {
        return Err(Error::InvalidScale(format!(
            "coarsening requires delta <= 1/100, got {}",
            incidences.scale
        )));
    }
    let mut out: Vec<ProductCube> = incidences
        .pairs
        .iter()
        .map(|pr| ProductCube {
            square: pr.square.parent(coarse).expect("checked coarser"),
            dual: pr.tube.dual.parent(coarse).expect("checked coarser"),
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Per-scale record of the incidence quotient
/// `ι(Δ) = |ℐ(𝒫_Δ,𝒯_Δ)| / (Δ·|𝒫_Δ|·|𝒯_Δ|)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotientRecord {
    pub scale: Scale,
    pub num_incidences: u64,
    pub num_cubes: u64,
    pub num_tubes: u64,
    /// ι as an exact fraction (numerator, denominator), reduced.
    pub iota_exact: (u128, u128),
}

impl QuotientRecord {
    pub fn iota(&self) -> f64 {
        self.iota_exact.0 as f64 / self.iota_exact.1 as f64
    }
}

fn reduced(num: u128, den: u128) -> (u128, u128) {
    let g = num::integer::gcd(num, den);
    if g == 0 {
        (0, 1)
    } else {
        (num / g, den / g)
    }
}

/// The incidence quotient at scale `Δ`: coarse families are the dyadic
/// `Δ`-covers, incidences are recounted among them.
pub fn incidence_quotient(squares: &CubeSet, tubes: &TubeSet, coarse: Scale) -> Result<QuotientRecord> {
    if squares.is_empty() || tubes.is_empty() {
        return Err(Error::EmptyFamily("incidence quotient needs nonempty families"));
    }
    let p_cover = squares.cover(coarse)?;
    let t_cover = tubes.cover(coarse)?;
    let n_i = incidence_count(&p_cover, &t_cover)?;
    // iota = |I| * 2^j / (|P||T|) where Δ = 2^-j
    let num = (n_i as u128) << coarse.exponent();
    let den = p_cover.len() as u128 * t_cover.len() as u128;
    Ok(QuotientRecord {
        scale: coarse,
        num_incidences: n_i,
        num_cubes: p_cover.len() as u64,
        num_tubes: t_cover.len() as u64,
        iota_exact: reduced(num, den),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{ball_of, rat, std_tube_of};

    fn sq(k: u32, ix: u64, iy: u64) -> DyadicSquare {
        DyadicSquare::new(Scale::new(k), ix, iy).unwrap()
    }

    fn tube(k: u32, ia: u64, ib: u64) -> DyadicTube {
        DyadicTube::new(sq(k, ia, ib))
    }

    #[test]
    fn incident_basic_cases() {
        // core line y=0 passes through [0,δ)²
        assert!(incident(&sq(4, 0, 0), &tube(4, 0, 0)).unwrap());
        // square near (0.5, 0.9), tube y = 0 at δ=2^-6: distance ≈ 0.9 > 10δ
        assert!(!incident(&sq(6, 32, 57), &tube(6, 0, 0)).unwrap());
        // scale mismatch errors
        assert!(incident(&sq(4, 0, 0), &tube(5, 0, 0)).is_err());
    }

    #[test]
    fn incident_agrees_with_sampling_oracle() {
        // Sampling oracle: B_p ∩ 𝕋_T ≠ ∅ iff some point of the ball lies in
        // the strip. Sample the center plus rings of boundary-direction
        // points; agreement is guaranteed outside the sampling-resolution
        // band around the exact threshold.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let k = 6u32;
        let n = 1u64 << k;
        let delta = Scale::new(k).value();
        let n_angular = 256usize;
        // worst-case gap of the sampled minimum distance over ring points
        let band = 5.0 * delta * (1.0 - (std::f64::consts::PI / n_angular as f64).cos()) + 1e-12;
        let mut disagreements = 0u32;
        for _ in 0..10_000 {
            let p = sq(k, rng.gen_range(0..n), rng.gen_range(0..n));
            let t = tube(k, rng.gen_range(0..n), rng.gen_range(0..n));
            let got = incident(&p, &t).unwrap();

            let b = ball_of(&p);
            let st = std_tube_of(&t);
            let (cx, cy) = (
                *b.center.0.numer() as f64 / *b.center.0.denom() as f64,
                *b.center.1.numer() as f64 / *b.center.1.denom() as f64,
            );
            let r = 5.0 * delta;
            let a = *st.slope.numer() as f64 / *st.slope.denom() as f64;
            let bb = *st.intercept.numer() as f64 / *st.intercept.denom() as f64;
            let dist_line = |x: f64, y: f64| (a * x - y + bb).abs() / (1.0 + a * a).sqrt();
            let mut min_d = dist_line(cx, cy);
            for i in 0..n_angular {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n_angular as f64;
                let d = dist_line(cx + r * th.cos(), cy + r * th.sin());
                if d < min_d {
                    min_d = d;
                }
            }
            let oracle = min_d <= 5.0 * delta;
            let margin = (dist_line(cx, cy) - 10.0 * delta).abs();
            if got != oracle && margin > band {
                disagreements += 1;
            }
        }
        assert_eq!(disagreements, 0);
    }

    /// All-pairs oracle for small instances.
    fn brute_force(squares: &CubeSet, tubes: &TubeSet) -> Vec<IncidencePair> {
        let mut out = Vec::new();
        for p in squares.members() {
            for t in tubes.members() {
                if incident(p, t).unwrap() {
                    out.push(IncidencePair { square: *p, tube: *t });
                }
            }
        }
        out.sort_unstable();
        out
    }

    #[test]
    fn bucketed_equals_brute_force_single_tube() {
        let delta = Scale::new(4);
        let full = CubeSet::full_grid(delta);
        let ts = TubeSet::new(delta, vec![tube(4, 0, 0)]).unwrap();
        let got = count_incidences(&full, &ts).unwrap();
        let want = brute_force(&full, &ts);
        assert_eq!(got.pairs(), &want[..]);
        // frozen from an independent run of the same enumeration
        assert_eq!(got.len(), 160);
    }

    #[test]
    fn bucketed_equals_brute_force_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for k in [5u32, 6, 8] {
            let n = 1u64 << k;
            let delta = Scale::new(k);
            let squares = CubeSet::new(
                delta,
                (0..200)
                    .map(|_| sq(k, rng.gen_range(0..n), rng.gen_range(0..n)))
                    .collect(),
            )
            .unwrap();
            let tubes = TubeSet::new(
                delta,
                (0..150)
                    .map(|_| tube(k, rng.gen_range(0..n), rng.gen_range(0..n)))
                    .collect(),
            )
            .unwrap();
            let got = count_incidences(&squares, &tubes).unwrap();
            assert_eq!(got.pairs(), &brute_force(&squares, &tubes)[..]);
            assert_eq!(got.len() as u64, incidence_count(&squares, &tubes).unwrap());
        }
    }

    #[test]
    fn thickened_keeps_all_incidences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let k = 6u32;
        let n = 1u64 << k;
        let delta = Scale::new(k);
        let squares = CubeSet::new(
            delta,
            (0..100).map(|_| sq(k, rng.gen_range(0..n), rng.gen_range(0..n))).collect(),
        )
        .unwrap();
        let tubes = TubeSet::new(
            delta,
            (0..100).map(|_| tube(k, rng.gen_range(0..n), rng.gen_range(0..n))).collect(),
        )
        .unwrap();
        let thin = incidence_count(&squares, &tubes).unwrap();
        let thick = thickened_incidence_count(&squares, &tubes, rat(4, 1)).unwrap();
        assert!(thick >= thin);
        // pairwise: every thin incidence stays incident after thickening
        for p in squares.members() {
            for t in tubes.members() {
                if incident(p, t).unwrap() {
                    assert!(incident_thickened(p, t, rat(4, 1)).unwrap());
                }
            }
        }
    }

    #[test]
    fn coarsen_identity_and_inclusion() {
        let delta = Scale::new(8);
        let full_t = tube(8, 3, 17);
        let squares =
            CubeSet::new(delta, (0..256).map(|i| sq(8, i, (3 * i + 17 * 256) >> 8)).collect())
                .unwrap();
        let tubes = TubeSet::new(delta, vec![full_t]).unwrap();
        let inc = count_incidences(&squares, &tubes).unwrap();
        assert!(!inc.is_empty());

        // Δ = δ: bijective image
        let same = coarsen(&inc, delta).unwrap();
        assert_eq!(same.len(), inc.len());

        // every coarsened cube is a coarse incidence (Δ = 2^-4)
        let coarse = Scale::new(4);
        for pc in coarsen(&inc, coarse).unwrap() {
            assert!(incident(&pc.square, &DyadicTube::new(pc.dual)).unwrap());
        }

        // scale guards
        assert!(coarsen(&inc, Scale::new(9)).is_err());
        let shallow = count_incidences(
            &CubeSet::full_grid(Scale::new(4)),
            &TubeSet::new(Scale::new(4), vec![tube(4, 0, 0)]).unwrap(),
        )
        .unwrap();
        assert!(coarsen(&shallow, Scale::new(2)).is_err());
    }

    #[test]
    fn coarsen_converse_fails_witness() {
        // Stored witness where ℐ(𝒫_Δ,𝒯_Δ) strictly contains the coarsened
        // fine incidences: fine pair not incident, parents incident.
        let p = sq(8, 165, 77);
        let t = tube(8, 202, 24);
        assert!(!incident(&p, &t).unwrap());
        let coarse = Scale::new(4);
        let pp = p.parent(coarse).unwrap();
        let tp = t.parent(coarse).unwrap();
        assert!(incident(&pp, &tp).unwrap());
    }

    #[test]
    fn quotient_examples() {
        let delta = Scale::new(4);
        let squares = CubeSet::new(delta, vec![sq(4, 0, 0)]).unwrap();
        let tubes = TubeSet::new(delta, vec![tube(4, 0, 0)]).unwrap();
        // ι(δ) = 1/(δ·1·1) = 16
        let q = incidence_quotient(&squares, &tubes, delta).unwrap();
        assert_eq!(q.iota_exact, (16, 1));
        // ι(1) <= 1 always
        let q1 = incidence_quotient(&squares, &tubes, Scale::ONE).unwrap();
        assert!(q1.iota_exact.0 <= q1.iota_exact.1);

        // full grid vs all tubes at 2^-4: frozen from the all-pairs oracle
        let full_p = CubeSet::full_grid(delta);
        let full_t = TubeSet::full_grid(delta);
        let q = incidence_quotient(&full_p, &full_t, delta).unwrap();
        assert_eq!(q.num_incidences, 54903);
        assert_eq!(q.iota_exact, reduced(54903 * 16, 256 * 256));
        let brute: u64 = {
            let mut c = 0;
            for p in full_p.members() {
                for t in full_t.members() {
                    if incident(p, t).unwrap() {
                        c += 1;
                    }
                }
            }
            c
        };
        assert_eq!(q.num_incidences, brute);

        // empty families are rejected
        let empty = CubeSet::new(delta, vec![]).unwrap();
        assert!(matches!(
            incidence_quotient(&empty, &full_t, delta),
            Err(Error::EmptyFamily(_))
        ));
    }

    #[test]
    fn incidence_upper_bound_and_symmetry() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let k = 5u32;
        let n = 1u64 << k;
        let delta = Scale::new(k);
        let mut sv: Vec<_> = (0..60).map(|_| sq(k, rng.gen_range(0..n), rng.gen_range(0..n))).collect();
        let mut tv: Vec<_> = (0..80).map(|_| tube(k, rng.gen_range(0..n), rng.gen_range(0..n))).collect();
        let squares = CubeSet::new(delta, sv.clone()).unwrap();
        let tubes = TubeSet::new(delta, tv.clone()).unwrap();
        let count = incidence_count(&squares, &tubes).unwrap();
        assert!(count <= (squares.len() * tubes.len()) as u64);
        // relabeling invariance
        sv.reverse();
        tv.rotate_left(13);
        let squares2 = CubeSet::new(delta, sv).unwrap();
        let tubes2 = TubeSet::new(delta, tv).unwrap();
        assert_eq!(count, incidence_count(&squares2, &tubes2).unwrap());
    }
}
