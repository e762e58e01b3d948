//! The high-low machinery as executable procedures: the empirical two-term
//! incidence inequality, the scale scan over the incidence quotient, and the
//! heavy-tube content-cover pipeline.
//!
//! The Fourier-analytic dichotomy behind the two-term bound is replaced by
//! the observable criterion "`|ℐ(𝒫_Δ,𝒯_Δ)| ≤ C₀·δ^(κ-2η)·Δ^-2` holds at
//! `Δ`", and the scan selects the smallest such ladder scale. The constant
//! is an experimental output, not an input.

use num::BigRational;
use num::FromPrimitive;
use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeSet, Rat, Scale, ScaleSequence, TubeSet};
use crate::error::{Error, Result};
use crate::incidence::{
    self, incidence_quotient, IncidenceSet, ProductCube, QuotientRecord,
};
use crate::uniformity::decompose_subuniform_tubes;

/// Both sides of the two-term incidence inequality on one instance, plus the
/// minimal constant making it hold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HighLowCheck {
    pub delta: Scale,
    /// Thickening factor `A` as an exact rational (numerator, denominator).
    pub a: (i128, i128),
    pub epsilon: f64,
    /// `|ℐ(ℬ,𝒯)|`.
    pub lhs: u64,
    /// `|ℐ(ℬ^A,𝒯^A)|`.
    pub thickened: u64,
    /// `√(A·δ⁻¹·|ℬ|·|𝒯|)`.
    pub term_high: f64,
    /// `δ^-ε·A⁻¹·|ℐ(ℬ^A,𝒯^A)|`.
    pub term_low: f64,
    /// `lhs / (term_high + term_low)`, zero when both terms vanish.
    pub minimal_c: f64,
}

/// Evaluates both right-hand terms exactly and reports the minimal constant.
/// Requires `A ∈ [δ^-ε, δ^-1]` and `δ ≤ 1/2`.
pub fn check_highlow(
    squares: &CubeSet,
    tubes: &TubeSet,
    a: Rat,
    epsilon: f64,
) -> Result<HighLowCheck> {
    let delta = squares.scale();
    if delta != tubes.scale() {
        return Err(Error::ScaleMismatch(delta, tubes.scale()));
    }
    let k = delta.exponent();
    if k == 0 {
        return Err(Error::InvalidParameter("two-term check needs delta <= 1/2".into()));
    }
    let a_f = *a.numer() as f64 / *a.denom() as f64;
    let lo = (k as f64 * epsilon * std::f64::consts::LN_2).exp();
    let hi = (1u64 << k) as f64;
    if !(lo - 1e-9..=hi + 1e-9).contains(&a_f) {
        return Err(Error::InvalidParameter(format!(
            "thickening A = {a_f} outside [delta^-eps, delta^-1] = [{lo}, {hi}]"
        )));
    }
    let lhs = incidence::incidence_count(squares, tubes)?;
    let thickened = incidence::thickened_incidence_count(squares, tubes, a)?;
    let term_high = (a_f * hi * squares.len() as f64 * tubes.len() as f64).sqrt();
    let term_low = (k as f64 * epsilon * std::f64::consts::LN_2).exp() / a_f * thickened as f64;
    let denom = term_high + term_low;
    let minimal_c = if denom > 0.0 { lhs as f64 / denom } else { 0.0 };
    Ok(HighLowCheck {
        delta,
        a: (*a.numer(), *a.denom()),
        epsilon,
        lhs,
        thickened,
        term_high,
        term_low,
        minimal_c,
    })
}

/// One ladder level of a scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRow {
    pub level: u32,
    pub quotient: QuotientRecord,
    /// Right-hand side `C₀·δ^(κ-2η)·Δ^-2` of the selection criterion.
    pub bound_rhs: f64,
    /// Whether the criterion holds at this level.
    pub high: bool,
}

/// Quotient-chain diagnostics across consecutive ladder levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainReport {
    /// Per low-case level `j`: measured ratio `ι(Δ_j) / (Δ_j^-η² · ι(Δ_{j-1}))`.
    pub low_ratios: Vec<(u32, f64)>,
    /// Maximum of the ratios above (the recorded `C₁`), if any level was low.
    pub c1: Option<f64>,
    /// Exact telescoping identity `Π ι(Δ_{j+1})/ι(Δ_j) = ι(Δ_n)/ι(Δ_0)`.
    pub telescoping_ok: bool,
}

/// Result of the scale scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanResult {
    pub kappa: f64,
    pub eta: f64,
    pub c0: f64,
    /// Quotients and criterion status per ladder level, coarse to fine.
    pub rows: Vec<ScanRow>,
    /// Selected ladder level (in `{1,…,n}`): the smallest high scale, or the
    /// level with the smallest achieved constant when no level is high.
    pub chosen_level: u32,
    pub chosen_scale: Scale,
    /// `|ℐ(𝒫_Δ,𝒯_Δ)|·Δ²·δ^-(κ-2η)` at the chosen scale.
    pub bound_constant: f64,
    pub criterion_met: bool,
    pub chain: ChainReport,
}

impl ScanResult {
    pub fn quotients(&self) -> Vec<&QuotientRecord> {
        self.rows.iter().map(|r| &r.quotient).collect()
    }
}

fn pow_scale(scale: Scale, exp: f64) -> f64 {
    // (2^-k)^exp
    (-(scale.exponent() as f64) * exp * std::f64::consts::LN_2).exp()
}

/// Runs the quotient scan along the ladder and selects the smallest scale at
/// which the coarse incidence count satisfies the `C₀`-criterion.
///
/// Precondition (checked): `|ℐ(𝒫,𝒯)| ≥ δ^(1-κ)·|𝒫|·|𝒯|` and `η ≤ κ/2`.
pub fn scan_scales(
    squares: &CubeSet,
    tubes: &TubeSet,
    scales: &ScaleSequence,
    kappa: f64,
    c0: f64,
) -> Result<ScanResult> {
    if squares.is_empty() || tubes.is_empty() {
        return Err(Error::EmptyFamily("scan needs nonempty families"));
    }
    if !(0.0..1.0).contains(&kappa) || kappa == 0.0 {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} outside (0,1)")));
    }
    let eta = scales.eta();
    if eta > kappa / 2.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} exceeds kappa/2 = {}",
            kappa / 2.0
        )));
    }
    let delta = scales.delta();
    if squares.scale() != delta || tubes.scale() != delta {
        return Err(Error::ScaleMismatch(squares.scale(), delta));
    }

    let fine_count = incidence::incidence_count(squares, tubes)?;
    let required = pow_scale(delta, 1.0 - kappa) * squares.len() as f64 * tubes.len() as f64;
    if (fine_count as f64) < required {
        return Err(Error::IncidenceDensity {
            measured: fine_count as f64 / (squares.len() as f64 * tubes.len() as f64),
            required: pow_scale(delta, 1.0 - kappa),
        });
    }

    let n = scales.steps();
    let mut rows = Vec::with_capacity(n as usize + 1);
    for j in 0..=n {
        let level_scale = scales.level(j);
        let quotient = incidence_quotient(squares, tubes, level_scale)?;
        let rhs = c0 * pow_scale(delta, kappa - 2.0 * eta) / (level_scale.value() * level_scale.value());
        let high = (quotient.num_incidences as f64) <= rhs;
        rows.push(ScanRow {
            level: j,
            quotient,
            bound_rhs: rhs,
            high,
        });
    }

    // the smallest "high" scale: largest level index in 1..=n that is high
    let chosen_level = rows
        .iter()
        .skip(1)
        .filter(|r| r.high)
        .map(|r| r.level)
        .max();
    let criterion_met = chosen_level.is_some();
    let chosen_level = chosen_level.unwrap_or_else(|| {
        // fallback: level achieving the smallest constant
        rows.iter()
            .skip(1)
            .min_by(|a, b| {
                let ca = a.quotient.num_incidences as f64 / a.bound_rhs;
                let cb = b.quotient.num_incidences as f64 / b.bound_rhs;
                ca.partial_cmp(&cb).expect("finite")
            })
            .expect("n >= 1")
            .level
    });
    let chosen_scale = scales.level(chosen_level);
    let chosen_row = &rows[chosen_level as usize];
    let bound_constant = chosen_row.quotient.num_incidences as f64
        * chosen_scale.value()
        * chosen_scale.value()
        / pow_scale(delta, kappa - 2.0 * eta);

    // chain diagnostics
    let mut low_ratios = Vec::new();
    for j in 1..=n {
        if !rows[j as usize].high {
            let iota_j = rows[j as usize].quotient.iota();
            let iota_parent = rows[j as usize - 1].quotient.iota();
            if iota_parent > 0.0 {
                let ratio = iota_j / (pow_scale(scales.level(j), -eta * eta) * iota_parent);
                low_ratios.push((j, ratio));
            }
        }
    }
    let c1 = low_ratios
        .iter()
        .map(|&(_, r)| r)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
    let telescoping_ok = {
        let frac = |q: &QuotientRecord| {
            BigRational::new(
                num::BigInt::from_u128(q.iota_exact.0).expect("u128"),
                num::BigInt::from_u128(q.iota_exact.1).expect("u128"),
            )
        };
        let mut product = BigRational::from_integer(1.into());
        let mut ok = true;
        for j in 0..n {
            let parent = frac(&rows[j as usize].quotient);
            if parent == BigRational::from_integer(0.into()) {
                ok = false;
                break;
            }
            product *= frac(&rows[j as usize + 1].quotient) / parent;
        }
        let first = frac(&rows[0].quotient);
        ok && first.clone() * product == frac(&rows[n as usize].quotient)
    };

    Ok(ScanResult {
        kappa,
        eta,
        c0,
        rows,
        chosen_level,
        chosen_scale,
        bound_constant,
        criterion_met,
        chain: ChainReport {
            low_ratios,
            c1,
            telescoping_ok,
        },
    })
}

/// One piece of a multi-scale cover: the coarse incidence set of one
/// sub-uniform part at its selected scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverPiece {
    pub signature: Vec<u32>,
    pub scale: Scale,
    pub cubes: Vec<ProductCube>,
    pub criterion_met: bool,
}

/// Multi-scale cover of a heavy-tube incidence set with its content sum
/// `Σ Δ(i)^u · |piece(i)|` for `u = 2-κ+3η`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContentCover {
    pub kappa: f64,
    pub eta: f64,
    /// Content exponent `u = 2-κ+3η`.
    pub exponent: f64,
    pub pieces: Vec<CoverPiece>,
    pub content_sum: f64,
}

/// Partitions a heavy tube family into sub-uniform parts, scans each part,
/// and emits the union of coarse incidence sets as an `ℝ⁴` cover together
/// with its content sum.
///
/// Every tube must be heavy: `|ℐ(𝒫,{T})| ≥ δ^(1-κ)·|𝒫|`.
pub fn content_cover(
    squares: &CubeSet,
    tubes: &TubeSet,
    scales: &ScaleSequence,
    kappa: f64,
    c0: f64,
) -> Result<ContentCover> {
    if squares.is_empty() || tubes.is_empty() {
        return Err(Error::EmptyFamily("content cover needs nonempty families"));
    }
    let delta = scales.delta();
    let required = pow_scale(delta, 1.0 - kappa) * squares.len() as f64;
    for t in tubes.members() {
        let count = incidence::tube_incidence_count(squares, t)?;
        if (count as f64) < required {
            return Err(Error::NotHeavy {
                tube: t.label(),
                count,
                required,
            });
        }
    }

    let eta = scales.eta();
    let exponent = 2.0 - kappa + 3.0 * eta;
    let mut pieces = Vec::new();
    let mut content_sum = 0.0;
    for (signature, part) in decompose_subuniform_tubes(tubes, scales)? {
        let scan = scan_scales(squares, &part, scales, kappa, c0)?;
        let chosen = scan.chosen_scale;
        let p_cover = squares.cover(chosen)?;
        let t_cover = part.cover(chosen)?;
        let coarse_pairs = incidence::count_incidences(&p_cover, &t_cover)?;
        let cubes: Vec<ProductCube> = coarse_pairs
            .pairs()
            .iter()
            .map(|pr| ProductCube {
                square: pr.square,
                dual: pr.tube.dual,
            })
            .collect();
        content_sum += pow_scale(chosen, exponent) * cubes.len() as f64;
        pieces.push(CoverPiece {
            signature,
            scale: chosen,
            cubes,
            criterion_met: scan.criterion_met,
        });
    }
    Ok(ContentCover {
        kappa,
        eta,
        exponent,
        pieces,
        content_sum,
    })
}

/// Exact check that the cover's pieces contain every fine incidence: each
/// incident pair has its per-part coarse ancestor inside the matching piece.
pub fn verify_cover(
    fine: &IncidenceSet,
    cover: &ContentCover,
    tube_part_of: impl Fn(&crate::dyadic::DyadicTube) -> Option<usize>,
) -> Result<bool> {
    for pr in fine.pairs() {
        let Some(i) = tube_part_of(&pr.tube) else {
            return Ok(false);
        };
        let piece = &cover.pieces[i];
        let ancestor = ProductCube {
            square: pr.square.parent(piece.scale)?,
            dual: pr.tube.dual.parent(piece.scale)?,
        };
        if piece.cubes.binary_search(&ancestor).is_err() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Per-direction restriction of a cover: pieces whose tube factor is roughly
/// parallel to the direction, projected to their square factors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionalContent {
    /// Content exponent `u - 1 = 1-κ+3η` applied to the square factors.
    pub exponent: f64,
    pub per_direction: Vec<DirectionRow>,
    /// Direction-averaged content sum.
    pub average: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionRow {
    /// Slope of the direction, as `num/den`.
    pub slope: (i128, i128),
    pub piece_count: usize,
    pub square_count: usize,
    pub content: f64,
}

/// A cover piece at scale `Δ` qualifies for direction `e` when its dual
/// slope interval `[aΔ, aΔ+Δ]` meets `[e-Δ, e+Δ]`; the qualifying window in
/// `e` has length exactly `3Δ`.
pub fn roughly_parallel(piece_scale: Scale, slope_index: u64, e: Rat) -> bool {
    let d = piece_scale.value_exact();
    let a = Rat::from(slope_index as i128) * d;
    e >= a - d && e <= a + Rat::from(2) * d
}

/// Selects, per direction, the pieces roughly parallel to it, projects them
/// to the square factor, and sums `ℓ^(1-κ+3η)` over the distinct squares.
pub fn directional_content(cover: &ContentCover, directions: &[Rat]) -> DirectionalContent {
    let exponent = cover.exponent - 1.0;
    let mut per_direction = Vec::with_capacity(directions.len());
    let mut total = 0.0;
    for &e in directions {
        let mut squares: Vec<(Scale, u64, u64)> = Vec::new();
        let mut piece_count = 0usize;
        for piece in &cover.pieces {
            let mut hit = false;
            for cube in &piece.cubes {
                if roughly_parallel(piece.scale, cube.dual.ix, e) {
                    hit = true;
                    squares.push((piece.scale, cube.square.ix, cube.square.iy));
                }
            }
            if hit {
                piece_count += 1;
            }
        }
        squares.sort_unstable();
        squares.dedup();
        let content: f64 = squares
            .iter()
            .map(|&(s, _, _)| pow_scale(s, exponent))
            .sum();
        total += content;
        per_direction.push(DirectionRow {
            slope: (*e.numer(), *e.denom()),
            piece_count,
            square_count: squares.len(),
            content,
        });
    }
    let average = if directions.is_empty() { 0.0 } else { total / directions.len() as f64 };
    DirectionalContent {
        exponent,
        per_direction,
        average,
    }
}
