//! (δ,s,C)-set verification, box-dimension slope estimation, heavy-tube
//! detection, the per-direction heavy-part cover pipeline, and the
//! closed-form exponent calculator.
//!
//! Directions are a finite net of slopes in `[0,1]` extended by the four
//! axis symmetries; almost-everywhere statements become "for every net
//! direction" and reports carry that caveat. Ball centers in the set
//! checkers live on the δ-grid, which loses at most a factor 4 against the
//! true supremum over centers.

use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeSet, DyadicTube, Rat, Scale, ScaleSequence, TubeSet};
use crate::error::{Error, Result};
use crate::incidence;
use crate::scan::{self, ContentCover};

/// Closed-form exponent bounds at one parameter point `(t, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentTable {
    pub t: f64,
    pub s: f64,
    /// `min{s+t, (3s+t)/2, s+1}` — the Furstenberg-set lower bound.
    pub furstenberg_lb: f64,
    /// `(2t-1)/3` — above this `s`, heavy lines vanish in a.e. direction.
    pub heavy_threshold: f64,
    /// `0` past the threshold, else `min{2t-3s, t}`.
    pub borel_heavy_bound: f64,
    /// `max{t-s, 0}` — the bound for sub-uniformly distributed sets.
    pub subuniform_bound: f64,
    /// `2-t` — dimension bound for the full heavy line family.
    pub line_family_bound: f64,
    /// `1-s` — dimension bound for the s-heavy line family.
    pub line_family_s_bound: f64,
}

/// Evaluates every closed form at `(t, s)`; inputs are range-checked.
pub fn exponent_table(t: f64, s: f64) -> Result<ExponentTable> {
    if !(0.0..=2.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("t = {t} outside [0,2]")));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidParameter(format!("s = {s} outside [0,1]")));
    }
    let heavy_threshold = (2.0 * t - 1.0) / 3.0;
    let borel_heavy_bound = if s > heavy_threshold {
        0.0
    } else {
        (2.0 * t - 3.0 * s).min(t)
    };
    Ok(ExponentTable {
        t,
        s,
        furstenberg_lb: (s + t).min((3.0 * s + t) / 2.0).min(s + 1.0),
        heavy_threshold,
        borel_heavy_bound,
        subuniform_bound: (t - s).max(0.0),
        line_family_bound: 2.0 - t,
        line_family_s_bound: 1.0 - s,
    })
}

/// Minimal constant of the ball-counting set condition, with its witness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaSetReport {
    pub delta: Scale,
    pub s: f64,
    /// Minimal `C` with `|P ∩ B(x,r)|_r ≤ C·r^s·|P|_δ` over the scanned grid.
    pub constant: f64,
    /// Witness center (numerators over `2^k`) and radius.
    pub witness_center: (u64, u64),
    pub witness_radius: Scale,
}

/// Scans dyadic radii `r ∈ [δ, 1]` and centers on the δ-corner lattice for
/// the minimal constant in `|P ∩ B(x,r)|_r ≤ C·r^s·|P|_δ` (closed balls).
pub fn delta_set_constant(set: &CubeSet, s: f64) -> Result<DeltaSetReport> {
    if set.is_empty() {
        return Err(Error::EmptyFamily("delta-set constant of empty family"));
    }
    let k = set.scale().exponent();
    let n = 1i64 << k;
    let total = set.len() as f64;
    let cubes: Vec<(i64, i64)> = set
        .members()
        .iter()
        .map(|sq| (sq.ix as i64, sq.iy as i64))
        .collect();
    let mut best = 0.0f64;
    let mut witness = ((0u64, 0u64), set.scale());
    for m in (0..=k).rev() {
        // radius r = 2^-m, in δ-units: R = 2^(k-m)
        let r_units = 1i64 << (k - m);
        let rr = r_units * r_units;
        let shift = k - m;
        let r_s = (-(m as f64) * s * std::f64::consts::LN_2).exp();
        let denom = r_s * total;
        for cy in 0..=n {
            for cx in 0..=n {
                // r-covering number of P ∩ B((cx,cy)/2^k, r): distinct r-parents
                // of cubes meeting the closed ball
                let mut parents: Vec<(i64, i64)> = cubes
                    .iter()
                    .filter(|&&(ix, iy)| {
                        let dx = if cx < ix {
                            ix - cx
                        } else if cx > ix + 1 {
                            cx - ix - 1
                        } else {
                            0
                        };
                        let dy = if cy < iy {
                            iy - cy
                        } else if cy > iy + 1 {
                            cy - iy - 1
                        } else {
                            0
                        };
                        dx * dx + dy * dy <= rr
                    })
                    .map(|&(ix, iy)| (ix >> shift, iy >> shift))
                    .collect();
                parents.sort_unstable();
                parents.dedup();
                let ratio = parents.len() as f64 / denom;
                if ratio > best {
                    best = ratio;
                    witness = ((cx as u64, cy as u64), Scale::new(m));
                }
            }
        }
    }
    Ok(DeltaSetReport {
        delta: set.scale(),
        s,
        constant: best,
        witness_center: witness.0,
        witness_radius: witness.1,
    })
}

/// One-dimensional variant for fibers: `points` are δ-grid indices on a line.
pub fn delta_set_constant_1d(points: &[u64], delta: Scale, s: f64) -> Result<DeltaSetReport> {
    if points.is_empty() {
        return Err(Error::EmptyFamily("delta-set constant of empty fiber"));
    }
    let k = delta.exponent();
    let n = 1i64 << k;
    let mut pts: Vec<i64> = points.iter().map(|&p| p as i64).collect();
    pts.sort_unstable();
    pts.dedup();
    let total = pts.len() as f64;
    let mut best = 0.0f64;
    let mut witness = ((0u64, 0u64), delta);
    for m in (0..=k).rev() {
        let r_units = 1i64 << (k - m);
        let shift = k - m;
        let r_s = (-(m as f64) * s * std::f64::consts::LN_2).exp();
        let denom = r_s * total;
        for c in 0..=n {
            let mut parents: Vec<i64> = pts
                .iter()
                .filter(|&&p| {
                    let d = if c < p {
                        p - c
                    } else if c > p + 1 {
                        c - p - 1
                    } else {
                        0
                    };
                    d <= r_units
                })
                .map(|&p| p >> shift)
                .collect();
            parents.sort_unstable();
            parents.dedup();
            let ratio = parents.len() as f64 / denom;
            if ratio > best {
                best = ratio;
                witness = ((c as u64, 0), Scale::new(m));
            }
        }
    }
    Ok(DeltaSetReport {
        delta,
        s,
        constant: best,
        witness_center: witness.0,
        witness_radius: witness.1,
    })
}

/// Relative-subset constant on dyadic cells: the minimal `C` with
/// `|E ∩ 𝐪|_fine ≤ C·(r/δ_parent)^u·|E ∩ Q|_fine` over dyadic `r` between
/// the two scales and cells `𝐪 ⊆ Q`. `children` must lie below `parent_scale`
/// cells; the scan treats each parent cell separately and reports the worst.
pub fn relative_subset_constant(children: &CubeSet, parent_scale: Scale, u: f64) -> Result<f64> {
    if children.is_empty() {
        return Err(Error::EmptyFamily("relative subset constant of empty family"));
    }
    let fine = children.scale();
    if !parent_scale.is_coarser_or_equal(fine) {
        return Err(Error::InvalidScale(format!(
            "parent scale {parent_scale} finer than child scale {fine}"
        )));
    }
    let mut best = 0.0f64;
    for parent in children.cover(parent_scale)?.members() {
        let inside = children.restrict(parent);
        let total = inside.len() as f64;
        for m in parent_scale.exponent()..=fine.exponent() {
            let r = Scale::new(m);
            // (r/δ_parent)^u
            let rel = (-(((m - parent_scale.exponent()) as f64) * u) * std::f64::consts::LN_2).exp();
            let denom = rel * total;
            let mut per: std::collections::BTreeMap<(u64, u64), u64> = Default::default();
            for sq in inside.members() {
                let q = sq.parent(r).expect("coarser");
                *per.entry((q.ix, q.iy)).or_insert(0) += 1;
            }
            for (_, count) in per {
                let ratio = count as f64 / denom;
                if ratio > best {
                    best = ratio;
                }
            }
        }
    }
    Ok(best)
}

/// Least-squares slope of `log |K|_δ` against `log(1/δ)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeReport {
    pub slope: f64,
    pub intercept: f64,
    /// Residuals of the fit, one per scale.
    pub residuals: Vec<f64>,
    /// Per-scale exponents `log |K|_δ / log(1/δ)`.
    pub per_scale: Vec<(Scale, f64)>,
}

/// Fits the covering profile `(δ, |K|_δ)`; needs at least two scales.
pub fn box_dimension_slope(profile: &[(Scale, u128)]) -> Result<SlopeReport> {
    if profile.len() < 2 {
        return Err(Error::InvalidParameter(
            "box-dimension slope needs at least two scales".into(),
        ));
    }
    let ln2 = std::f64::consts::LN_2;
    let xs: Vec<f64> = profile.iter().map(|(s, _)| s.exponent() as f64 * ln2).collect();
    let ys: Vec<f64> = profile.iter().map(|&(_, c)| (c as f64).ln()).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    if det == 0.0 {
        return Err(Error::InvalidParameter("degenerate scale list".into()));
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    let residuals = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (slope * x + intercept))
        .collect();
    let per_scale = profile
        .iter()
        .map(|&(s, c)| {
            let e = if s.exponent() == 0 {
                0.0
            } else {
                (c as f64).ln() / (s.exponent() as f64 * ln2)
            };
            (s, e)
        })
        .collect();
    Ok(SlopeReport {
        slope,
        intercept,
        residuals,
        per_scale,
    })
}

/// Tubes roughly parallel to one direction whose incidence count with a set
/// meets the heaviness threshold `⌈δ^(t-s+2η)·|K|_δ⌉`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeavyFamily {
    /// Direction slope as `num/den`.
    pub slope: (i128, i128),
    pub delta: Scale,
    pub t: f64,
    pub s: f64,
    pub eta: f64,
    pub threshold: u64,
    pub tubes: TubeSet,
}

/// A tube is roughly parallel to slope `e` when its dual slope interval
/// `[ia·δ, (ia+1)δ)` contains `e`, i.e. when it contains a line of slope `e`.
pub fn heavy_tubes(set: &CubeSet, e: Rat, t: f64, s: f64, eta: f64) -> Result<HeavyFamily> {
    if set.is_empty() {
        return Err(Error::EmptyFamily("heavy tubes of empty set"));
    }
    let delta = set.scale();
    let k = delta.exponent();
    let n = 1u64 << k;
    let exponent = t - s + 2.0 * eta;
    let threshold_real = (-(k as f64) * exponent * std::f64::consts::LN_2).exp() * set.len() as f64;
    let threshold = threshold_real.ceil() as u64;
    // slope column containing e (empty family when e is outside [0,1))
    let mut members = Vec::new();
    if e >= Rat::from(0) && e < Rat::from(1) {
        let ia = (e * Rat::from(n as i128)).floor().to_integer() as u64;
        for ib in 0..n {
            let tube = DyadicTube::new(crate::dyadic::DyadicSquare::new(delta, ia, ib)?);
            let count = incidence::tube_incidence_count(set, &tube)?;
            if count >= threshold {
                members.push(tube);
            }
        }
    }
    Ok(HeavyFamily {
        slope: (*e.numer(), *e.denom()),
        delta,
        t,
        s,
        eta,
        threshold,
        tubes: TubeSet::new(delta, members)?,
    })
}

/// Per-scale, per-direction output of the heavy-part pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeavyPartScale {
    pub delta: Scale,
    pub heavy_tube_count: u64,
    /// Content sum `Σ ℓ^(1-κ+3η)` of the full `ℝ⁴` cover's square factors,
    /// per direction of the net.
    pub per_direction: Vec<scan::DirectionRow>,
    /// Fraction of `K_δ` covered by each direction's square cover (exact
    /// containment count / |K_δ|).
    pub covered_fraction: Vec<f64>,
    /// Total content sum of the `ℝ⁴` cover.
    pub content_sum_r4: f64,
}

/// Result of running the pipeline across a scale list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeavyPartReport {
    pub t: f64,
    pub s: f64,
    pub eta: f64,
    pub kappa: f64,
    /// Square-factor content exponent `1-κ+3η`.
    pub exponent: f64,
    pub scales: Vec<HeavyPartScale>,
}

/// For each scale, gathers the heavy tubes over a direction net, runs the
/// content-cover pipeline, and extracts per-direction square covers with
/// their content sums and coverage fractions.
///
/// Requires `κ = s-t+1-2η ∈ (0,1)`. The internal ladder ratio is `2^σ`.
pub fn heavy_part_cover(
    sets: &[CubeSet],
    directions: &[Rat],
    t: f64,
    s: f64,
    eta: f64,
    sigma: u32,
    c0: f64,
) -> Result<HeavyPartReport> {
    let kappa = s - t + 1.0 - 2.0 * eta;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa = s-t+1-2eta = {kappa} outside (0,1)"
        )));
    }
    let exponent = 1.0 - kappa + 3.0 * eta;
    let mut out = Vec::new();
    for set in sets {
        let delta = set.scale();
        let ladder = ScaleSequence::new(delta, sigma)?;
        // union of heavy families over the direction net
        let mut tubes = Vec::new();
        for &e in directions {
            let fam = heavy_tubes(set, e, t, s, eta)?;
            tubes.extend_from_slice(fam.tubes.members());
        }
        let heavy = TubeSet::new(delta, tubes)?;
        if heavy.is_empty() {
            out.push(HeavyPartScale {
                delta,
                heavy_tube_count: 0,
                per_direction: directions
                    .iter()
                    .map(|&e| scan::DirectionRow {
                        slope: (*e.numer(), *e.denom()),
                        piece_count: 0,
                        square_count: 0,
                        content: 0.0,
                    })
                    .collect(),
                covered_fraction: vec![0.0; directions.len()],
                content_sum_r4: 0.0,
            });
            continue;
        }
        let cover = content_cover(set, &heavy, &ladder, kappa, c0)?;
        let directional = scan::directional_content(&cover, directions);
        // coverage fraction per direction: cubes of K_δ incident to a heavy
        // tube of that direction whose cover-square ancestor is present
        let mut covered_fraction = Vec::with_capacity(directions.len());
        for (&e, row) in directions.iter().zip(&directional.per_direction) {
            let fam = heavy_tubes(set, e, t, s, eta)?;
            let mut covered = 0u64;
            let mut touched = 0u64;
            if !fam.tubes.is_empty() {
                let inc = incidence::count_incidences(set, &fam.tubes)?;
                let mut touched_sqs: Vec<_> = inc.pairs().iter().map(|pr| pr.square).collect();
                touched_sqs.sort_unstable();
                touched_sqs.dedup();
                touched = touched_sqs.len() as u64;
                // square covers per piece scale
                let mut cover_squares: std::collections::BTreeSet<(u32, u64, u64)> =
                    Default::default();
                for piece in &cover.pieces {
                    for cube in &piece.cubes {
                        if scan::roughly_parallel(piece.scale, cube.dual.ix, e) {
                            cover_squares.insert((
                                piece.scale.exponent(),
                                cube.square.ix,
                                cube.square.iy,
                            ));
                        }
                    }
                }
                for sq in touched_sqs {
                    let mut hit = false;
                    for piece in &cover.pieces {
                        let anc = sq.parent(piece.scale)?;
                        if cover_squares.contains(&(piece.scale.exponent(), anc.ix, anc.iy)) {
                            hit = true;
                            break;
                        }
                    }
                    if hit {
                        covered += 1;
                    }
                }
            }
            let _ = row;
            covered_fraction.push(if touched == 0 {
                0.0
            } else {
                covered as f64 / touched as f64
            });
        }
        out.push(HeavyPartScale {
            delta,
            heavy_tube_count: heavy.len() as u64,
            per_direction: directional.per_direction,
            covered_fraction,
            content_sum_r4: cover.content_sum,
        });
    }
    Ok(HeavyPartReport {
        t,
        s,
        eta,
        kappa,
        exponent,
        scales: out,
    })
}

/// Content cover of a heavy family, re-exported for pipeline callers.
pub fn content_cover(
    set: &CubeSet,
    tubes: &TubeSet,
    ladder: &ScaleSequence,
    kappa: f64,
    c0: f64,
) -> Result<ContentCover> {
    scan::content_cover(set, tubes, ladder, kappa, c0)
}

/// Upper sum `Σ scaleᵘ · count` over an explicit cover.
pub fn hausdorff_content_upper(cover: &[(Scale, u64)], u: f64) -> Result<f64> {
    if u < 0.0 {
        return Err(Error::InvalidParameter(format!("content exponent {u} < 0")));
    }
    Ok(cover
        .iter()
        .map(|&(s, c)| (-(s.exponent() as f64) * u * std::f64::consts::LN_2).exp() * c as f64)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{rat, DyadicSquare};

    fn sq(k: u32, ix: u64, iy: u64) -> DyadicSquare {
        DyadicSquare::new(Scale::new(k), ix, iy).unwrap()
    }

    #[test]
    fn exponent_table_reference_points() {
        let e = exponent_table(1.8, 0.7).unwrap();
        assert!((e.borel_heavy_bound - 1.5).abs() < 1e-12);
        let e = exponent_table(1.8, 0.9).unwrap();
        assert_eq!(e.borel_heavy_bound, 0.0);
        let e = exponent_table(1.0, 0.5).unwrap();
        assert!((e.furstenberg_lb - 1.25).abs() < 1e-12);
        let e = exponent_table(1.5, 0.8).unwrap();
        assert!((e.subuniform_bound - 0.7).abs() < 1e-12);
        assert!(exponent_table(2.5, 0.5).is_err());
        assert!(exponent_table(1.5, -0.1).is_err());
    }

    #[test]
    fn exponent_table_sanity_chain() {
        // t/2 >= (2t-1)/3 on [0,2]; borel bound <= t; continuity off the
        // threshold line; min{t,3-t} = 3-t on (3/2,2]
        for i in 0..=100 {
            let t = 2.0 * i as f64 / 100.0;
            assert!(t / 2.0 >= (2.0 * t - 1.0) / 3.0 - 1e-12);
            for j in 0..=20 {
                let s = j as f64 / 20.0;
                let e = exponent_table(t, s).unwrap();
                assert!(e.borel_heavy_bound <= t + 1e-12);
            }
            if t > 1.5 {
                assert!((t).min(3.0 - t) == 3.0 - t);
            }
        }
    }

    #[test]
    fn delta_set_full_grid_and_singleton() {
        let full = CubeSet::full_grid(Scale::new(4));
        let rep = delta_set_constant(&full, 2.0).unwrap();
        // order-one constant: 12 cells meet a closed radius-δ ball centered
        // at an interior grid corner, and r = δ maximizes the ratio
        assert!((rep.constant - 12.0).abs() < 1e-9);
        assert_eq!(rep.witness_radius, Scale::new(4));

        let single = CubeSet::new(Scale::new(4), vec![sq(4, 7, 3)]).unwrap();
        let rep = delta_set_constant(&single, 0.0).unwrap();
        assert!((rep.constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn delta_set_monotone_in_s() {
        let mut members = Vec::new();
        for i in 0..16u64 {
            members.push(sq(5, i, (5 * i + 3) % 32));
        }
        let set = CubeSet::new(Scale::new(5), members).unwrap();
        let mut last = 0.0;
        for s in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let c = delta_set_constant(&set, s).unwrap().constant;
            assert!(c >= last - 1e-12, "constant not monotone in s");
            last = c;
        }
    }

    #[test]
    fn box_dimension_examples() {
        // full grid: slope exactly 2
        let profile: Vec<(Scale, u128)> =
            (2..=6).map(|k| (Scale::new(k), 1u128 << (2 * k))).collect();
        let rep = box_dimension_slope(&profile).unwrap();
        assert!((rep.slope - 2.0).abs() < 0.01);
        // single point: slope 0
        let flat: Vec<(Scale, u128)> = (2..=6).map(|k| (Scale::new(k), 1u128)).collect();
        assert!(box_dimension_slope(&flat).unwrap().slope.abs() < 1e-12);
        assert!(box_dimension_slope(&flat[..1]).is_err());
    }

    #[test]
    fn heavy_tubes_segment() {
        // horizontal δ-discretized segment at height 0: its own tube is heavy
        let k = 6u32;
        let delta = Scale::new(k);
        let set = CubeSet::new(delta, (0..64).map(|ix| sq(k, ix, 0)).collect()).unwrap();
        let fam = heavy_tubes(&set, Rat::from(0), 1.0, 1.0, 0.05).unwrap();
        // threshold = ceil(δ^0.1 · 64) = ceil(42.22...) = 43
        assert_eq!(fam.threshold, 43);
        assert!(!fam.tubes.is_empty());
        for t in fam.tubes.members() {
            assert!(incidence::tube_incidence_count(&set, t).unwrap() >= 43);
        }

        // steep direction: every tube meets O(1) cubes, family is empty
        let fam = heavy_tubes(&set, rat(63, 64), 1.0, 1.0, 0.05).unwrap();
        assert!(fam.tubes.is_empty());

        // raising eta (threshold) can only shrink the family
        let lo = heavy_tubes(&set, Rat::from(0), 1.0, 1.0, 0.01).unwrap();
        let hi = heavy_tubes(&set, Rat::from(0), 1.0, 1.0, 0.2).unwrap();
        assert!(hi.tubes.len() <= lo.tubes.len());
        for t in hi.tubes.members() {
            assert!(lo.tubes.members().contains(t));
        }
    }

    #[test]
    fn heavy_threshold_at_full_mass() {
        // t-s+2η = 0: only tubes containing essentially all of K qualify
        let k = 5u32;
        let delta = Scale::new(k);
        let set = CubeSet::new(delta, (0..32).map(|ix| sq(k, ix, 5)).collect()).unwrap();
        let fam = heavy_tubes(&set, Rat::from(0), 1.0, 1.0, 0.0).unwrap();
        assert_eq!(fam.threshold, set.len() as u64);
        for t in fam.tubes.members() {
            assert_eq!(incidence::tube_incidence_count(&set, t).unwrap(), 32);
        }
    }

    #[test]
    fn content_upper_examples() {
        assert_eq!(hausdorff_content_upper(&[], 1.0).unwrap(), 0.0);
        let v = hausdorff_content_upper(&[(Scale::new(4), 16)], 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!(hausdorff_content_upper(&[], -1.0).is_err());
    }

    #[test]
    fn relative_subset_full_fill_is_order_one() {
        let parent = Scale::new(1);
        let children = CubeSet::full_grid(Scale::new(4));
        let c = relative_subset_constant(&children, parent, 2.0).unwrap();
        assert!(c >= 0.9 && c <= 1.01);
    }
}
