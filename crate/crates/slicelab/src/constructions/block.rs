//! The sheared-grid building block: a `Δ`-cube family whose projections
//! collapse along a Farey direction set while its vertical fibers keep an
//! arithmetic progression of step `Δ^(τ-1)`.
//!
//! The construction starts from the grid `P' = {(g·k, g·l)}` with spacing
//! `g = M·Δ` (`M = Δ^(τ/2-1)`), applies the shear `(x, y) ↦ (x + θy, y)`
//! with `θ = 1/M`, thickens points to `Δ`-cubes, discards cubes outside
//! `[0,1)²`, and unions with the copy shifted left by `1/2`. All coordinates
//! stay on the `Δ`-lattice, so rebuilding is bit-identical.

use num::rational::Ratio;
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::analysis::{delta_set_constant_1d, DeltaSetReport};
use crate::dyadic::{CubeSet, DyadicSquare, Rat, Scale};
use crate::error::{Error, Result};

/// Parameters of a building block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub delta: Scale,
    pub tau: f64,
    pub s: f64,
    /// Grid spacing in `Δ`-units: `M ≈ Δ^(τ/2-1)`.
    pub spacing_units: u64,
    /// Grid count per axis: `G ≈ Δ^(-τ/2)`, with `G·M ≤ 2^k`.
    pub grid: u64,
    /// Whether `Δ^(-τ/2)` was an exact integer (no rounding applied).
    pub exact: bool,
}

impl BlockParams {
    /// Strict constructor: requires `Δ^(-τ/2)` (hence `Δ^(τ/2-1)`) to be an
    /// integer; rejects non-integral shapes.
    pub fn new(delta: Scale, tau: f64, s: f64) -> Result<BlockParams> {
        let params = Self::new_rounded(delta, tau, s)?;
        if !params.exact {
            return Err(Error::InvalidParameter(format!(
                "delta^(-tau/2) = 2^{} is not an integer (delta {delta}, tau {tau})",
                delta.exponent() as f64 * tau / 2.0
            )));
        }
        Ok(params)
    }

    /// Rounding constructor: `M = round(Δ^(τ/2-1))`, `G = ⌊2^k / M⌋`. The
    /// shear `θ = 1/M` keeps every coordinate on the `Δ`-lattice either way.
    pub fn new_rounded(delta: Scale, tau: f64, s: f64) -> Result<BlockParams> {
        if !(tau > 1.0 && tau <= 2.0) {
            return Err(Error::InvalidParameter(format!("tau = {tau} outside (1,2]")));
        }
        if !(0.0..=2.0 - tau + 1e-12).contains(&s) {
            return Err(Error::InvalidParameter(format!(
                "s = {s} outside [0, 2-tau] = [0, {}]",
                2.0 - tau
            )));
        }
        let k = delta.exponent();
        if k < 2 {
            return Err(Error::InvalidParameter(format!("block scale {delta} too coarse")));
        }
        if tau == 2.0 {
            // trivial case: the full grid
            return Ok(BlockParams {
                delta,
                tau,
                s,
                spacing_units: 1,
                grid: delta.cells_per_axis(),
                exact: true,
            });
        }
        let e_g = k as f64 * tau / 2.0; // G = 2^(k·τ/2)
        let exact = (e_g - e_g.round()).abs() < 1e-9;
        let (m, g) = if exact {
            let g = 1u64 << (e_g.round() as u32);
            (delta.cells_per_axis() / g, g)
        } else {
            let m_real = ((k as f64 - e_g) * std::f64::consts::LN_2).exp();
            let m = (m_real + 0.5).floor().max(1.0) as u64;
            (m, delta.cells_per_axis() / m)
        };
        if g < 2 || m < 1 {
            return Err(Error::InvalidParameter(format!(
                "degenerate block shape at delta {delta}, tau {tau}"
            )));
        }
        Ok(BlockParams {
            delta,
            tau,
            s,
            spacing_units: m,
            grid: g,
            exact,
        })
    }

    /// The shear parameter `θ = 1/M` (`0` in the trivial `τ = 2` case).
    pub fn theta(&self) -> Rat {
        if self.tau == 2.0 {
            Rat::zero()
        } else {
            Ratio::new(1, self.spacing_units as i128)
        }
    }

    /// Farey cap `N = ⌊Δ^(-s/2)⌋`.
    pub fn farey_cap(&self) -> u64 {
        let e = self.delta.exponent() as f64 * self.s / 2.0;
        ((e * std::f64::consts::LN_2).exp() + 1e-9).floor().max(1.0) as u64
    }
}

/// The Farey direction data attached to a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    /// Deduplicated rationals `λ = p/q`, `0 ≤ p ≤ N`, `1 ≤ q ≤ N`, sorted.
    pub lambdas: Vec<(i128, i128)>,
    /// The direction slopes `λ - θ`, same order.
    pub directions: Vec<(i128, i128)>,
    /// Greedy `Δ^s`-separated subset of the directions (left to right).
    pub separated: Vec<(i128, i128)>,
    pub farey_cap: u64,
}

impl DirectionSet {
    pub fn lambdas_rat(&self) -> Vec<Rat> {
        self.lambdas.iter().map(|&(n, d)| Ratio::new(n, d)).collect()
    }

    pub fn directions_rat(&self) -> Vec<Rat> {
        self.directions.iter().map(|&(n, d)| Ratio::new(n, d)).collect()
    }

    /// `Δ^s`-covering number of the direction set (exact when `k·s` is an
    /// integer, which makes `Δ^s` dyadic).
    pub fn covering_number(&self, delta: Scale, s: f64) -> Result<u64> {
        let e = delta.exponent() as f64 * s;
        if (e - e.round()).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "delta^s is not dyadic (k·s = {e}); covering count undefined exactly"
            )));
        }
        let scale = 1i128 << (e.round() as u32);
        let mut cells: Vec<i128> = self
            .directions
            .iter()
            .map(|&(n, d)| Ratio::new(n * scale, d).floor().to_integer())
            .collect();
        cells.sort_unstable();
        cells.dedup();
        Ok(cells.len() as u64)
    }
}

/// Builds the Farey direction set `{p/q - θ}` with dedup via lowest terms and
/// the greedy separated subset.
pub fn direction_set(params: &BlockParams) -> DirectionSet {
    let n = params.farey_cap();
    let theta = params.theta();
    let mut lambdas: Vec<Rat> = Vec::new();
    for p in 0..=n {
        for q in 1..=n {
            lambdas.push(Ratio::new(p as i128, q as i128));
        }
    }
    lambdas.sort_unstable();
    lambdas.dedup();
    let directions: Vec<Rat> = lambdas.iter().map(|&l| l - theta).collect();

    // greedy separated subset; Δ^s compares exactly when k·s is an integer,
    // otherwise via f64 (recorded by the caller)
    let e_sep = params.delta.exponent() as f64 * params.s;
    let min_gap: Option<Rat> = if (e_sep - e_sep.round()).abs() < 1e-9 {
        Some(Ratio::new(1, 1i128 << (e_sep.round() as u32)))
    } else {
        None
    };
    let mut separated: Vec<Rat> = Vec::new();
    for &d in &directions {
        let ok = match separated.last() {
            None => true,
            Some(&last) => match min_gap {
                Some(gap) => d - last >= gap,
                None => {
                    let val = |r: Rat| *r.numer() as f64 / *r.denom() as f64;
                    val(d) - val(last) >= (-e_sep * std::f64::consts::LN_2).exp()
                }
            },
        };
        if ok {
            separated.push(d);
        }
    }

    let pack = |v: &[Rat]| v.iter().map(|r| (*r.numer(), *r.denom())).collect();
    DirectionSet {
        lambdas: pack(&lambdas),
        directions: pack(&directions),
        separated: pack(&separated),
        farey_cap: n,
    }
}

/// A built block: the cube family plus its direction data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub params: BlockParams,
    pub cubes: CubeSet,
    pub directions: DirectionSet,
    /// Cube count before the half-shift union.
    pub pre_union_count: u64,
}

/// Builds the block: sheared grid, `Δ`-cube thickening, `[0,1)²` discard,
/// and the `(1/2, 0)`-shift union. Exact in dyadic rationals.
pub fn build_block(params: &BlockParams) -> Result<Block> {
    let delta = params.delta;
    let n = delta.cells_per_axis();
    let (m, g) = (params.spacing_units, params.grid);
    let mut members: Vec<DyadicSquare> = Vec::new();
    if params.tau == 2.0 {
        let cubes = CubeSet::full_grid(delta);
        let count = cubes.len() as u64;
        return Ok(Block {
            params: *params,
            cubes,
            directions: direction_set(params),
            pre_union_count: count,
        });
    }
    for kk in 0..g {
        for ll in 0..g {
            // shear image of (g·k, g·l): x-index M·k + l, y-index M·l
            let ix = m * kk + ll;
            let iy = m * ll;
            if ix < n && iy < n {
                members.push(DyadicSquare { scale: delta, ix, iy });
            }
        }
    }
    let pre_union_count = members.len() as u64;
    let half = n / 2;
    let shifted: Vec<DyadicSquare> = members
        .iter()
        .filter(|sq| sq.ix >= half)
        .map(|sq| DyadicSquare {
            scale: delta,
            ix: sq.ix - half,
            iy: sq.iy,
        })
        .collect();
    members.extend(shifted);
    Ok(Block {
        params: *params,
        cubes: CubeSet::new(delta, members)?,
        directions: direction_set(params),
        pre_union_count,
    })
}

/// Per-column fiber verification: every column must carry a nonempty fiber
/// containing an arithmetic progression of step `M²` (index units, i.e.
/// `Δ^(τ-1)`), and the fiber's set constant is measured at exponent `τ-1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct P1Report {
    pub columns: u64,
    pub empty_columns: Vec<u64>,
    /// Progression step in index units (`M²`).
    pub step_units: u64,
    /// Worst (minimal over columns) maximal progression length, in terms.
    pub min_progression_len: u64,
    pub min_progression_column: u64,
    /// Largest fiber set constant over columns, at exponent `τ-1`.
    pub max_fiber_constant: f64,
    pub max_fiber_column: u64,
}

pub fn verify_p1(block: &Block) -> Result<P1Report> {
    let delta = block.params.delta;
    let n = delta.cells_per_axis();
    let step = block.params.spacing_units * block.params.spacing_units;
    let exponent = block.params.tau - 1.0;

    // group fibers by column (members sorted by (ix, iy))
    let mut fibers: Vec<Vec<u64>> = vec![Vec::new(); n as usize];
    for sq in block.cubes.members() {
        fibers[sq.ix as usize].push(sq.iy);
    }

    let mut empty_columns = Vec::new();
    let mut min_len = u64::MAX;
    let mut min_col = 0u64;
    let mut max_c = 0.0f64;
    let mut max_col = 0u64;
    for (col, fiber) in fibers.iter().enumerate() {
        if fiber.is_empty() {
            empty_columns.push(col as u64);
            continue;
        }
        let set: std::collections::BTreeSet<u64> = fiber.iter().copied().collect();
        let mut best = 0u64;
        for &y in fiber {
            if y >= step && set.contains(&(y - step)) {
                continue;
            }
            let mut run = 1u64;
            while set.contains(&(y + run * step)) {
                run += 1;
            }
            best = best.max(run);
        }
        if best < min_len {
            min_len = best;
            min_col = col as u64;
        }
        let rep: DeltaSetReport = delta_set_constant_1d(fiber, delta, exponent)?;
        if rep.constant > max_c {
            max_c = rep.constant;
            max_col = col as u64;
        }
    }
    Ok(P1Report {
        columns: n,
        empty_columns,
        step_units: step,
        min_progression_len: min_len,
        min_progression_column: min_col,
        max_fiber_constant: max_c,
        max_fiber_column: max_col,
    })
}

/// Counts the dyadic `Δ`-intervals met by the 1-Lipschitz-normalized
/// projection of a cube family along slope `e`: values `(x + e·y)/(1+|e|)`,
/// computed exactly from cube corners.
pub fn projection_cover_count(cubes: &CubeSet, e: Rat) -> u64 {
    let (a, b) = (*e.numer(), *e.denom());
    debug_assert!(b > 0);
    let w = b + a.abs();
    let mut hit: std::collections::BTreeSet<i128> = Default::default();
    for sq in cubes.members() {
        let (ix, iy) = (sq.ix as i128, sq.iy as i128);
        let (lo, hi) = if a >= 0 {
            (ix * b + a * iy, (ix + 1) * b + a * (iy + 1))
        } else {
            (ix * b + a * (iy + 1), (ix + 1) * b + a * iy)
        };
        let ilo = lo.div_euclid(w);
        let mut ihi = -((-hi).div_euclid(w)) - 1; // ceil(hi/w) - 1
        if ihi * w == hi {
            ihi -= 1;
        }
        for idx in ilo..=ihi {
            hit.insert(idx);
        }
    }
    hit.len() as u64
}

/// Counts distinct exact projection values `x + e·y` of cube corners.
pub fn projection_point_count(cubes: &CubeSet, e: Rat) -> u64 {
    let (a, b) = (*e.numer(), *e.denom());
    let mut vals: std::collections::BTreeSet<i128> = Default::default();
    for sq in cubes.members() {
        vals.insert(sq.ix as i128 * b + a * sq.iy as i128);
    }
    vals.len() as u64
}

/// One direction row of a projection-collapse report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct P2Row {
    pub lambda: (i128, i128),
    pub direction: (i128, i128),
    /// Normalized `Δ`-interval cover count of the projection.
    pub cover_count: u64,
    /// Distinct exact projection values of cube corners.
    pub point_count: u64,
    /// `cover_count / Δ^(-(s+τ)/2)`.
    pub constant: f64,
}

/// Projection-collapse verification across the whole direction set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct P2Report {
    /// `Δ^(-(s+τ)/2)`.
    pub bound: f64,
    pub rows: Vec<P2Row>,
    pub max_constant: f64,
    pub max_point_count: u64,
    /// Number of exact kernel identities verified, and whether all held.
    pub kernel_checked: u64,
    pub kernel_ok: bool,
}

/// For each direction (optionally including the `±Δ` perturbations), counts
/// the projected cover exactly and verifies the rational kernel identity
/// `π_λ((x,y) + g·m·(p,-q)) = π_λ(x,y)` on the pre-shear grid.
pub fn verify_p2(block: &Block, perturb: bool) -> Result<P2Report> {
    let params = &block.params;
    let delta = params.delta;
    let bound_exp = (params.s + params.tau) / 2.0;
    let bound = (delta.exponent() as f64 * bound_exp * std::f64::consts::LN_2).exp();
    let d_exact = delta.value_exact();

    let mut rows = Vec::new();
    let mut max_c = 0.0f64;
    let mut max_points = 0u64;
    for (i, &(ln, ld)) in block.directions.lambdas.iter().enumerate() {
        let lambda = Ratio::new(ln, ld);
        let (en, ed) = block.directions.directions[i];
        let e = Ratio::new(en, ed);
        let mut variants = vec![e];
        if perturb {
            variants.push(e - d_exact);
            variants.push(e + d_exact);
        }
        for v in variants {
            let cover_count = projection_cover_count(&block.cubes, v);
            let point_count = projection_point_count(&block.cubes, v);
            let constant = cover_count as f64 / bound;
            max_c = max_c.max(constant);
            max_points = max_points.max(point_count);
            rows.push(P2Row {
                lambda: (*lambda.numer(), *lambda.denom()),
                direction: (*v.numer(), *v.denom()),
                cover_count,
                point_count,
                constant,
            });
        }
    }

    // kernel identity on the pre-shear grid, exact rational arithmetic
    let mut kernel_checked = 0u64;
    let mut kernel_ok = true;
    let g_spacing = Rat::from(params.spacing_units as i128) * d_exact;
    let grid = params.grid as i128;
    for &(p, q) in &block.directions.lambdas {
        if p == 0 {
            continue;
        }
        let lambda = Ratio::new(p, q);
        // in-range translates: m·p, m·q within the grid
        let m_max = (grid - 1) / p.max(q);
        for (kk, ll) in [(grid - 1, 0), (grid / 2, grid / 2), (p, grid - 1)] {
            let x = g_spacing * Rat::from(kk);
            let y = g_spacing * Rat::from(ll);
            let r0 = x + lambda * y;
            for mm in 1..=m_max.min(4) {
                let (k2, l2) = (kk + mm * p, ll - mm * q);
                if k2 < 0 || k2 >= grid || l2 < 0 || l2 >= grid {
                    continue;
                }
                let x2 = g_spacing * Rat::from(k2);
                let y2 = g_spacing * Rat::from(l2);
                kernel_checked += 1;
                if x2 + lambda * y2 != r0 {
                    kernel_ok = false;
                }
            }
        }
    }
    Ok(P2Report {
        bound,
        rows,
        max_constant: max_c,
        max_point_count: max_points,
        kernel_checked,
        kernel_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_block_shape() {
        let p = BlockParams::new(Scale::new(8), 1.5, 0.5).unwrap();
        assert_eq!(p.grid, 64);
        assert_eq!(p.spacing_units, 4);
        assert_eq!(p.theta(), Ratio::new(1, 4));
        assert!(p.exact);
        let b = build_block(&p).unwrap();
        // frozen from the independent enumeration oracle
        assert_eq!(b.pre_union_count, 3616);
        assert_eq!(b.cubes.len(), 4096);
        // every corner on the Δ-lattice by construction (indices are exact)
        for sq in b.cubes.members() {
            assert!(sq.ix < 256 && sq.iy < 256);
        }
        // rebuilding is bit-identical
        let again = build_block(&p).unwrap();
        assert_eq!(b, again);
    }

    #[test]
    fn strict_constructor_rejects_non_integral() {
        assert!(BlockParams::new(Scale::new(10), 1.5, 0.5).is_err());
        let p = BlockParams::new_rounded(Scale::new(10), 1.5, 0.5).unwrap();
        assert!(!p.exact);
        assert_eq!(p.spacing_units, 6); // round(2^2.5)
        assert_eq!(p.grid, 170);
    }

    #[test]
    fn tau_two_is_full_grid() {
        let p = BlockParams::new(Scale::new(4), 2.0, 0.0).unwrap();
        let b = build_block(&p).unwrap();
        assert_eq!(b.cubes.len(), 256);
        let rep = verify_p1(&b).unwrap();
        assert!(rep.empty_columns.is_empty());
        // all fibers full; set constant is order one
        assert!(rep.max_fiber_constant <= 3.0);
    }

    #[test]
    fn parameter_validation() {
        assert!(BlockParams::new(Scale::new(8), 0.9, 0.1).is_err());
        assert!(BlockParams::new(Scale::new(8), 2.3, 0.0).is_err());
        assert!(BlockParams::new(Scale::new(8), 1.5, 0.7).is_err()); // s > 2-tau
        assert!(BlockParams::new(Scale::new(1), 1.5, 0.25).is_err());
    }

    #[test]
    fn worked_direction_set() {
        let p = BlockParams::new(Scale::new(8), 1.5, 0.5).unwrap();
        let ds = direction_set(&p);
        assert_eq!(ds.farey_cap, 4);
        // frozen from exhaustive enumeration of p/q, p in 0..=4, q in 1..=4
        let want: Vec<(i128, i128)> = vec![
            (0, 1),
            (1, 4),
            (1, 3),
            (1, 2),
            (2, 3),
            (3, 4),
            (1, 1),
            (4, 3),
            (3, 2),
            (2, 1),
            (3, 1),
            (4, 1),
        ];
        assert_eq!(ds.lambdas, want);
        // all pairwise gaps at least Δ^s = 2^-4 (exact), so greedy keeps all
        assert_eq!(ds.separated.len(), 12);
        let gap = Ratio::new(1i128, 16);
        for w in ds.lambdas_rat().windows(2) {
            assert!(w[1] - w[0] >= gap);
        }
        // smallest case s = 0: N = 1, lambdas {0, 1}
        let p0 = BlockParams::new(Scale::new(8), 1.5, 0.0).unwrap();
        let ds0 = direction_set(&p0);
        assert_eq!(ds0.lambdas, vec![(0, 1), (1, 1)]);
    }

    #[test]
    fn p1_progressions_at_worked_scale() {
        let p = BlockParams::new(Scale::new(8), 1.5, 0.5).unwrap();
        let b = build_block(&p).unwrap();
        let rep = verify_p1(&b).unwrap();
        assert!(rep.empty_columns.is_empty());
        assert_eq!(rep.step_units, 16); // Δ^(τ-1) = 2^-4
        // required >= 8; the union improves the worst column to 16 (frozen)
        assert!(rep.min_progression_len >= 8);
        assert_eq!(rep.min_progression_len, 16);
        assert!(rep.max_fiber_constant.is_finite());
    }

    #[test]
    fn p2_collapse_at_worked_scale() {
        let p = BlockParams::new(Scale::new(8), 1.5, 0.5).unwrap();
        let b = build_block(&p).unwrap();
        let rep = verify_p2(&b, false).unwrap();
        assert_eq!(rep.bound, 256.0);
        // frozen from the independent projection oracle
        assert!((rep.max_constant - 1.0).abs() < 1e-12);
        assert_eq!(rep.max_point_count, 391);
        assert!(rep.kernel_ok);
        assert!(rep.kernel_checked > 20);

        // λ = 0 projects to the pre-shear x-coordinate: the grid collapses
        // to G values plus the shifted copy's extra offsets (frozen: 79)
        let row0 = &rep.rows[0];
        assert_eq!(row0.lambda, (0, 1));
        assert_eq!(row0.point_count, 79);

        // a non-Farey direction shows no collapse: nearly all cube corners
        // project to distinct values
        let golden = Ratio::new(633i128, 1024) - Ratio::new(1, 4);
        let pts = projection_point_count(&b.cubes, golden);
        assert!(pts as f64 >= 0.9 * b.cubes.len() as f64);
    }
}
