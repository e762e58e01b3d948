//! Dyadic squares of `[0,1)²`, dyadic tubes via point–line duality, their
//! associated balls and ordinary tubes, and covering-number computation.
//!
//! Scales are stored as exponents (`δ = 2^-k`) and all cell geometry is
//! derived from exact dyadic rationals, so every predicate in this crate is
//! bit-exact and reproducible. Cells are half-open `[·,·)` for indexing;
//! the associated balls and strips are closed.

use std::fmt;
use std::str::FromStr;

use num::rational::Ratio;
use num::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact scalar used for cell geometry (centers, corners, slopes).
pub type Rat = Ratio<i128>;

/// Convenience constructor for an exact rational.
pub fn rat(num: i128, den: i128) -> Rat {
    Ratio::new(num, den)
}

/// A dyadic scale `δ = 2^-k`, stored as the exponent `k ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scale(u32);

impl Scale {
    pub const ONE: Scale = Scale(0);

    pub fn new(k: u32) -> Scale {
        Scale(k)
    }

    /// The exponent `k` with `δ = 2^-k`.
    pub fn exponent(self) -> u32 {
        self.0
    }

    /// Side length as `f64`.
    pub fn value(self) -> f64 {
        (self.0 as f64 * -std::f64::consts::LN_2).exp()
    }

    /// Side length as an exact rational `1 / 2^k`.
    pub fn value_exact(self) -> Rat {
        Ratio::new(1, 1i128 << self.0)
    }

    /// Number of cells per axis, `2^k`.
    pub fn cells_per_axis(self) -> u64 {
        1u64 << self.0
    }

    /// True when `self` is at least as coarse as `other` (`δ_self ≥ δ_other`).
    pub fn is_coarser_or_equal(self, other: Scale) -> bool {
        self.0 <= other.0
    }

    /// `log2(1/δ)`.
    pub fn log2_inv(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            write!(f, "1")
        } else {
            write!(f, "2^-{}", self.0)
        }
    }
}

impl FromStr for Scale {
    type Err = Error;

    /// Parses `"2^-k"` (or `"1"` for the unit scale). Scales are never written
    /// as floats in configs or reports.
    fn from_str(s: &str) -> Result<Scale> {
        let s = s.trim();
        if s == "1" {
            return Ok(Scale(0));
        }
        let rest = s
            .strip_prefix("2^-")
            .ok_or_else(|| Error::Config(format!("expected scale of the form 2^-k, got {s:?}")))?;
        let k: u32 = rest
            .parse()
            .map_err(|_| Error::Config(format!("bad scale exponent in {s:?}")))?;
        if k > 62 {
            return Err(Error::Config(format!("scale exponent {k} too large")));
        }
        Ok(Scale(k))
    }
}

/// A half-open dyadic square `[ix·δ,(ix+1)δ) × [iy·δ,(iy+1)δ)` of `[0,1)²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DyadicSquare {
    pub scale: Scale,
    pub ix: u64,
    pub iy: u64,
}

impl DyadicSquare {
    pub fn new(scale: Scale, ix: u64, iy: u64) -> Result<DyadicSquare> {
        let n = scale.cells_per_axis();
        if ix >= n || iy >= n {
            return Err(Error::InvalidParameter(format!(
                "square index ({ix},{iy}) out of range at scale {scale}"
            )));
        }
        Ok(DyadicSquare { scale, ix, iy })
    }

    /// Lower-left corner, exact.
    pub fn corner(&self) -> (Rat, Rat) {
        let d = self.scale.value_exact();
        (d * Rat::from(self.ix as i128), d * Rat::from(self.iy as i128))
    }

    /// Center, exact.
    pub fn center(&self) -> (Rat, Rat) {
        let half = Ratio::new(1, 1i128 << (self.scale.exponent() + 1));
        let (x, y) = self.corner();
        (x + half, y + half)
    }

    /// The unique dyadic `Δ`-square containing this one. Requires `Δ ≥ δ`.
    pub fn parent(&self, coarse: Scale) -> Result<DyadicSquare> {
        if !coarse.is_coarser_or_equal(self.scale) {
            return Err(Error::InvalidScale(format!(
                "parent scale {coarse} finer than cell scale {}",
                self.scale
            )));
        }
        let shift = self.scale.exponent() - coarse.exponent();
        Ok(DyadicSquare {
            scale: coarse,
            ix: self.ix >> shift,
            iy: self.iy >> shift,
        })
    }

    /// True when `self ⊆ other` as dyadic cells.
    pub fn contained_in(&self, other: &DyadicSquare) -> bool {
        other.scale.is_coarser_or_equal(self.scale)
            && self.parent(other.scale).map(|p| p == *other).unwrap_or(false)
    }

    /// Serialization label `k:ix:iy` used in reports.
    pub fn label(&self) -> String {
        format!("{}:{}:{}", self.scale.exponent(), self.ix, self.iy)
    }
}

/// A dyadic tube: the union of lines `y = ax + b` over a dyadic parameter
/// square of slope–intercept pairs. Only duals inside `[0,1)²` exist; other
/// directions are reached by the four axis symmetries at higher layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DyadicTube {
    pub dual: DyadicSquare,
}

impl DyadicTube {
    pub fn new(dual: DyadicSquare) -> DyadicTube {
        DyadicTube { dual }
    }

    pub fn scale(&self) -> Scale {
        self.dual.scale
    }

    /// Slope index `ia` (slope range `[ia·δ, (ia+1)δ)`).
    pub fn slope_index(&self) -> u64 {
        self.dual.ix
    }

    /// Intercept index `ib`.
    pub fn intercept_index(&self) -> u64 {
        self.dual.iy
    }

    pub fn parent(&self, coarse: Scale) -> Result<DyadicTube> {
        Ok(DyadicTube {
            dual: self.dual.parent(coarse)?,
        })
    }

    pub fn contained_in(&self, other: &DyadicTube) -> bool {
        self.dual.contained_in(&other.dual)
    }

    /// Serialization label `T:k:ia:ib`.
    pub fn label(&self) -> String {
        format!(
            "T:{}:{}:{}",
            self.dual.scale.exponent(),
            self.dual.ix,
            self.dual.iy
        )
    }
}

/// The affine line `y = ax + b` of the point–line duality map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub slope: Rat,
    pub intercept: Rat,
}

/// Point–line duality: `(a, b) ↦ {y = ax + b}`.
pub fn duality_line(a: Rat, b: Rat) -> Line {
    Line {
        slope: a,
        intercept: b,
    }
}

impl Line {
    pub fn eval(&self, x: Rat) -> Rat {
        self.slope * x + self.intercept
    }
}

/// Closed disc concentric with a dyadic square, diameter `10δ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ball {
    pub center: (Rat, Rat),
    pub radius: Rat,
}

/// Closed strip of width `10δ` whose core line is the duality image of the
/// dual square's lower-left corner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StdTube {
    pub slope: Rat,
    pub intercept: Rat,
    pub half_width: Rat,
}

/// The disc `B_p`: concentric with `p`, radius `5δ`.
pub fn ball_of(p: &DyadicSquare) -> Ball {
    Ball {
        center: p.center(),
        radius: Rat::from(5) * p.scale.value_exact(),
    }
}

/// The ordinary tube `𝕋_T`: half-width `5δ`, core line through the dual
/// corner `(a, b)`.
pub fn std_tube_of(t: &DyadicTube) -> StdTube {
    let (a, b) = t.dual.corner();
    StdTube {
        slope: a,
        intercept: b,
        half_width: Rat::from(5) * t.scale().value_exact(),
    }
}

impl StdTube {
    /// Exact membership test: perpendicular distance to the core line at most
    /// the half-width, compared without square roots.
    pub fn contains(&self, x: Rat, y: Rat) -> bool {
        let num = self.slope * x - y + self.intercept;
        let bound = self.half_width * self.half_width * (Rat::one() + self.slope * self.slope);
        num * num <= bound
    }
}

impl Ball {
    pub fn contains(&self, x: Rat, y: Rat) -> bool {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

/// A finite family of dyadic squares at one scale, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeSet {
    scale: Scale,
    members: Vec<DyadicSquare>,
}

impl CubeSet {
    pub fn new(scale: Scale, mut members: Vec<DyadicSquare>) -> Result<CubeSet> {
        for m in &members {
            if m.scale != scale {
                return Err(Error::ScaleMismatch(scale, m.scale));
            }
        }
        members.sort_unstable();
        members.dedup();
        Ok(CubeSet { scale, members })
    }

    pub fn full_grid(scale: Scale) -> CubeSet {
        let n = scale.cells_per_axis();
        let mut members = Vec::with_capacity((n * n) as usize);
        for ix in 0..n {
            for iy in 0..n {
                members.push(DyadicSquare { scale, ix, iy });
            }
        }
        CubeSet { scale, members }
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn members(&self) -> &[DyadicSquare] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, sq: &DyadicSquare) -> bool {
        self.members.binary_search(sq).is_ok()
    }

    /// Dyadic `Δ`-cover: the set of `Δ`-parents.
    pub fn cover(&self, coarse: Scale) -> Result<CubeSet> {
        if !coarse.is_coarser_or_equal(self.scale) {
            return Err(Error::InvalidScale(format!(
                "cover scale {coarse} finer than set scale {}",
                self.scale
            )));
        }
        let mut parents: Vec<DyadicSquare> = self
            .members
            .iter()
            .map(|m| m.parent(coarse).expect("checked coarser"))
            .collect();
        parents.sort_unstable();
        parents.dedup();
        Ok(CubeSet {
            scale: coarse,
            members: parents,
        })
    }

    /// The dyadic `Δ`-covering number `|·|_Δ`.
    pub fn covering_number(&self, coarse: Scale) -> Result<u64> {
        Ok(self.cover(coarse)?.len() as u64)
    }

    /// Members below a given coarse cell (`𝒫 ∩ 𝐩`).
    pub fn restrict(&self, parent: &DyadicSquare) -> CubeSet {
        let members = self
            .members
            .iter()
            .filter(|m| m.contained_in(parent))
            .copied()
            .collect();
        CubeSet {
            scale: self.scale,
            members,
        }
    }
}

/// A finite family of dyadic tubes at one scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TubeSet {
    scale: Scale,
    members: Vec<DyadicTube>,
}

impl TubeSet {
    pub fn new(scale: Scale, mut members: Vec<DyadicTube>) -> Result<TubeSet> {
        for m in &members {
            if m.scale() != scale {
                return Err(Error::ScaleMismatch(scale, m.scale()));
            }
        }
        members.sort_unstable();
        members.dedup();
        Ok(TubeSet { scale, members })
    }

    pub fn full_grid(scale: Scale) -> TubeSet {
        let duals = CubeSet::full_grid(scale);
        TubeSet {
            scale,
            members: duals.members().iter().map(|&dual| DyadicTube { dual }).collect(),
        }
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn members(&self) -> &[DyadicTube] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The family of dual parameter squares.
    pub fn duals(&self) -> CubeSet {
        CubeSet {
            scale: self.scale,
            members: self.members.iter().map(|t| t.dual).collect(),
        }
    }

    /// Rebuilds a tube set from dual squares (inverse of [`TubeSet::duals`]).
    pub fn from_duals(duals: &CubeSet) -> TubeSet {
        TubeSet {
            scale: duals.scale(),
            members: duals.members().iter().map(|&dual| DyadicTube { dual }).collect(),
        }
    }

    pub fn cover(&self, coarse: Scale) -> Result<TubeSet> {
        Ok(TubeSet::from_duals(&self.duals().cover(coarse)?))
    }

    pub fn covering_number(&self, coarse: Scale) -> Result<u64> {
        Ok(self.cover(coarse)?.len() as u64)
    }
}

/// Cover of an exact point set: the `Δ`-cubes containing at least one point.
/// Points must lie in `[0,1)²`; an empty input yields an empty cover.
pub fn cover_points(points: &[(Rat, Rat)], coarse: Scale) -> Result<CubeSet> {
    let n = coarse.cells_per_axis() as i128;
    let mut members = Vec::with_capacity(points.len());
    for &(x, y) in points {
        if x < Rat::zero() || y < Rat::zero() || x >= Rat::one() || y >= Rat::one() {
            return Err(Error::InvalidParameter(format!(
                "point ({x}, {y}) outside [0,1)^2"
            )));
        }
        let ix = (x * Rat::from(n)).floor().to_integer() as u64;
        let iy = (y * Rat::from(n)).floor().to_integer() as u64;
        members.push(DyadicSquare {
            scale: coarse,
            ix,
            iy,
        });
    }
    CubeSet::new(coarse, members)
}

/// Geometric scale ladder `{Δ_n = δ, Δ_{n-1} = Sδ, …, Δ_0 = 1}` with ratio
/// `S = δ^-η = 2^σ`. Requires `σ` to divide the scale exponent, so that the
/// ladder closes at `Δ_0 = 1` and `n = 1/η` is an integer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleSequence {
    delta: Scale,
    sigma: u32,
}

impl ScaleSequence {
    pub fn new(delta: Scale, sigma: u32) -> Result<ScaleSequence> {
        let k = delta.exponent();
        if sigma == 0 || k == 0 {
            return Err(Error::InvalidParameter(
                "scale ladder needs sigma >= 1 and delta < 1".into(),
            ));
        }
        if k % sigma != 0 {
            return Err(Error::InvalidParameter(format!(
                "ladder ratio 2^{sigma} does not divide delta exponent {k}"
            )));
        }
        Ok(ScaleSequence { delta, sigma })
    }

    pub fn delta(&self) -> Scale {
        self.delta
    }

    /// The ratio `S = 2^σ`.
    pub fn ratio(&self) -> u64 {
        1u64 << self.sigma
    }

    pub fn sigma(&self) -> u32 {
        self.sigma
    }

    /// `η = σ/k`, so that `S = δ^-η`.
    pub fn eta(&self) -> f64 {
        self.sigma as f64 / self.delta.exponent() as f64
    }

    /// Number of ladder steps `n = 1/η`.
    pub fn steps(&self) -> u32 {
        self.delta.exponent() / self.sigma
    }

    /// Ladder levels `Δ_0 = 1, Δ_1, …, Δ_n = δ` (coarse to fine).
    pub fn levels(&self) -> Vec<Scale> {
        (0..=self.steps()).map(|j| Scale::new(j * self.sigma)).collect()
    }

    /// The level scale `Δ_j`.
    pub fn level(&self, j: u32) -> Scale {
        Scale::new(j * self.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duality_line_examples() {
        let l = duality_line(Rat::zero(), Rat::zero());
        assert_eq!(l.eval(rat(7, 2)), Rat::zero());
        let l = duality_line(Rat::one(), Rat::zero());
        assert_eq!(l.eval(rat(3, 4)), rat(3, 4));
        let l = duality_line(rat(1, 2), rat(1, 4));
        assert_eq!(l.eval(Rat::zero()), rat(1, 4));
        assert_eq!(l.eval(Rat::one()), rat(3, 4));
    }

    #[test]
    fn cover_unit_square_and_point() {
        let full = CubeSet::full_grid(Scale::new(2));
        assert_eq!(full.len(), 16);
        let pts = [(Rat::zero(), Rat::zero())];
        for k in [0, 3, 7] {
            assert_eq!(cover_points(&pts, Scale::new(k)).unwrap().len(), 1);
        }
        assert_eq!(cover_points(&[], Scale::new(4)).unwrap().len(), 0);
    }

    #[test]
    fn parent_index_shift() {
        let sq = DyadicSquare::new(Scale::new(4), 5, 9).unwrap();
        let p = sq.parent(Scale::new(2)).unwrap();
        assert_eq!((p.ix, p.iy), (1, 2));
        assert_eq!(sq.parent(sq.scale).unwrap(), sq);
        assert!(sq.parent(Scale::new(6)).is_err());

        let t = DyadicTube::new(DyadicSquare::new(Scale::new(6), 10, 33).unwrap());
        let tp = t.parent(Scale::new(3)).unwrap();
        assert_eq!((tp.dual.ix, tp.dual.iy), (1, 4));
    }

    #[test]
    fn ball_and_std_tube_geometry() {
        let p = DyadicSquare::new(Scale::new(2), 0, 0).unwrap();
        let b = ball_of(&p);
        assert_eq!(b.center, (rat(1, 8), rat(1, 8)));
        assert_eq!(b.radius, rat(5, 4));

        let t = DyadicTube::new(DyadicSquare::new(Scale::new(3), 0, 0).unwrap());
        let st = std_tube_of(&t);
        assert_eq!(st.slope, Rat::zero());
        assert_eq!(st.intercept, Rat::zero());
        assert_eq!(st.half_width, rat(5, 8));
    }

    #[test]
    fn ball_nesting_exhaustive() {
        // B_p ⊆ B_parent for every square with exponent <= 8 and every
        // ancestor scale: |c_p - c_P| <= R - r, squared comparison.
        for k in 1..=8u32 {
            let fine = Scale::new(k);
            let n = fine.cells_per_axis();
            for ix in 0..n {
                for iy in 0..n {
                    let p = DyadicSquare { scale: fine, ix, iy };
                    let bp = ball_of(&p);
                    for kc in 0..k {
                        let parent = p.parent(Scale::new(kc)).unwrap();
                        let bq = ball_of(&parent);
                        let dx = bp.center.0 - bq.center.0;
                        let dy = bp.center.1 - bq.center.1;
                        let slack = bq.radius - bp.radius;
                        assert!(slack >= Rat::zero());
                        assert!(dx * dx + dy * dy <= slack * slack, "nesting fails for {:?} at {kc}", p);
                    }
                }
            }
        }
    }

    #[test]
    fn std_tube_nesting_on_boundary_samples() {
        // 𝕋_T ∩ B(2) ⊆ 𝕋_parent ∩ B(2), checked on sampled boundary points
        // of the child strip within |x| <= 2.
        let fine = Scale::new(6);
        let n = fine.cells_per_axis();
        let mut checked = 0u32;
        for ia in (0..n).step_by(13) {
            for ib in (0..n).step_by(11) {
                let t = DyadicTube::new(DyadicSquare { scale: fine, ix: ia, iy: ib });
                let st = std_tube_of(&t);
                for kc in [1u32, 3, 5] {
                    let tp = t.parent(Scale::new(kc)).unwrap();
                    let sp = std_tube_of(&tp);
                    // boundary offset: half-width along the normal, exact via
                    // (dx, dy) ∝ (-a, 1) scaled so that the perpendicular
                    // distance equals the half-width: offset = h/(1+a^2)*( -a, 1 ).
                    let denom = Rat::one() + st.slope * st.slope;
                    for xi in -8..=8i128 {
                        let x = rat(xi, 4);
                        let y0 = st.slope * x + st.intercept;
                        for sgn in [-1i128, 1] {
                            let off = st.half_width * Rat::from(sgn) / denom;
                            let bx = x - st.slope * off;
                            let by = y0 + off;
                            if bx * bx + by * by <= Rat::from(4) {
                                assert!(
                                    sp.contains(bx, by),
                                    "boundary point of child strip escapes parent"
                                );
                                checked += 1;
                            }
                        }
                    }
                }
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn cover_idempotent_and_monotone() {
        let delta = Scale::new(5);
        let mut members = Vec::new();
        for i in 0..20u64 {
            members.push(DyadicSquare::new(delta, (i * 7) % 32, (i * 13) % 32).unwrap());
        }
        let a = CubeSet::new(delta, members.clone()).unwrap();
        let b = CubeSet::new(delta, members[..10].to_vec()).unwrap();
        let coarse = Scale::new(2);
        let ca = a.cover(coarse).unwrap();
        assert_eq!(ca.cover(coarse).unwrap(), ca);
        for m in b.cover(coarse).unwrap().members() {
            assert!(ca.contains(m));
        }
    }

    #[test]
    fn parent_fiber_bound() {
        let delta = Scale::new(6);
        let coarse = Scale::new(3);
        let full = CubeSet::full_grid(delta);
        let ratio = (delta.cells_per_axis() / coarse.cells_per_axis()) as usize;
        for parent in full.cover(coarse).unwrap().members() {
            assert!(full.restrict(parent).len() <= ratio * ratio);
        }
    }

    #[test]
    fn scale_parsing_round_trip() {
        assert_eq!("2^-8".parse::<Scale>().unwrap(), Scale::new(8));
        assert_eq!("1".parse::<Scale>().unwrap(), Scale::ONE);
        assert!("0.25".parse::<Scale>().is_err());
        assert_eq!(Scale::new(8).to_string(), "2^-8");
    }

    #[test]
    fn ladder_levels() {
        let seq = ScaleSequence::new(Scale::new(6), 2).unwrap();
        assert_eq!(seq.ratio(), 4);
        assert_eq!(seq.steps(), 3);
        assert_eq!(
            seq.levels(),
            vec![Scale::new(0), Scale::new(2), Scale::new(4), Scale::new(6)]
        );
        assert!((seq.eta() - 1.0 / 3.0).abs() < 1e-15);
        assert!(ScaleSequence::new(Scale::new(6), 4).is_err());
    }
}
