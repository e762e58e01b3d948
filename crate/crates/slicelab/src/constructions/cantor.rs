//! Nested Cantor trees with alternating fill and block levels.
//!
//! Levels run `ℛ_{Δ_0} = {[0,1)²}`, then per scale pair `(δ_n, Δ_{n+1})`:
//! the fill level `ℛ_{δ_n}` (every `δ_n`-subcube of the previous level) and
//! the block level `ℛ_{Δ_{n+1}}` (a rescaled building-block copy inside each
//! fill cube). The rapid-decay constraints make deep block levels far too
//! large to materialize, so levels hold exact closed-form counts always and
//! cube lists only while they fit the budget; profiles and fibers then work
//! on whatever is materialized.

use num::rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeSet, DyadicSquare, Rat, Scale};
use crate::error::{Error, Result};

use super::block::{build_block, Block, BlockParams};

/// Scale pairs and block parameters defining a tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CantorParams {
    pub tau: f64,
    pub s: f64,
    /// `(δ_n, Δ_{n+1})` per depth step, finest last; `Δ_0 = 1` is implicit.
    pub pairs: Vec<(Scale, Scale)>,
}

impl CantorParams {
    /// Validates the rapid-decay requirements `δ_n < Δ_n^(2n)` (for `n ≥ 1`)
    /// and `Δ_{n+1} < δ_n^(2(n+1))`, plus block-shape validity per pair.
    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::InvalidParameter("tree needs at least one scale pair".into()));
        }
        let mut prev_block = 0u32; // exponent of Δ_n (Δ_0 = 1)
        for (n, &(delta_n, block_n)) in self.pairs.iter().enumerate() {
            let kd = delta_n.exponent();
            let kb = block_n.exponent();
            if n >= 1 && kd <= 2 * n as u32 * prev_block {
                return Err(Error::InvalidParameter(format!(
                    "decay violated at pair {n}: need delta_{n} < Delta_{n}^{}",
                    2 * n
                )));
            }
            if n == 0 && kd == 0 {
                return Err(Error::InvalidParameter("delta_0 must be finer than 1".into()));
            }
            if kd <= prev_block {
                return Err(Error::InvalidParameter(format!(
                    "pair {n}: delta must be finer than the previous block scale"
                )));
            }
            if kb <= 2 * (n as u32 + 1) * kd {
                return Err(Error::InvalidParameter(format!(
                    "decay violated at pair {n}: need Delta_{} < delta_{n}^{}",
                    n + 1,
                    2 * (n + 1)
                )));
            }
            BlockParams::new_rounded(Scale::new(kb - kd), self.tau, self.s)?;
            prev_block = kb;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelKind {
    Root,
    /// Every subcube of the previous level at this scale.
    Fill,
    /// A rescaled block copy inside each previous-level cube.
    Blocks,
}

/// One level of the tree. `cubes` is present while the running count stays
/// within the materialization budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CantorLevel {
    pub scale: Scale,
    pub kind: LevelKind,
    pub count: u128,
    pub cubes: Option<CubeSet>,
}

/// Per-pair block data: parameters and exact cube count always, the built
/// block only when it fits the budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockLevel {
    pub params: BlockParams,
    pub cube_count: u128,
    pub built: Option<Block>,
}

/// A built tree: levels plus the per-pair block data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CantorTree {
    pub params: CantorParams,
    pub levels: Vec<CantorLevel>,
    pub blocks: Vec<BlockLevel>,
}

/// `Σ_{k=from}^{G-1} min(G, n - M·k)`: plateau of height `G` up to
/// `k ≤ (n-G)/M`, then an arithmetic slope.
fn tail_min_sum(n: u128, m: u128, g: u128, from: u128) -> u128 {
    if from >= g {
        return 0;
    }
    let k0 = (n - g) / m; // below or at: full rows of G
    let series = |a: u128, b: u128| -> u128 {
        // Σ_{k=a}^{b} (n - M·k), requires a <= b
        (b - a + 1) * (2 * n - m * (a + b)) / 2
    };
    if k0 >= g - 1 {
        (g - from) * g
    } else if from <= k0 {
        (k0 + 1 - from) * g + series(k0 + 1, g - 1)
    } else {
        series(from, g - 1)
    }
}

/// Exact cube count of a block without building it: grid discards plus the
/// half-shift union, all as arithmetic series.
pub fn block_cube_count(params: &BlockParams) -> u128 {
    let r = params.delta.exponent();
    if params.tau == 2.0 {
        return 1u128 << (2 * r);
    }
    let n = 1u128 << r;
    let m = params.spacing_units as u128;
    let g = params.grid as u128;
    let h = n / 2;

    let pre = tail_min_sum(n, m, g, 0);

    // shifted copy: l in [max(0, h - M·k), min(G, n - M·k))
    let k1 = h.div_ceil(m); // first k with M·k >= h
    let mut shifted = tail_min_sum(n, m, g, k1.min(g));
    let k0 = (n - g) / m;
    // k < k1 with full row cap G: contributes (G - h + M·k)+
    let upper_b1 = k0.min(k1.saturating_sub(1)).min(g - 1);
    let k2 = if h + 1 > g { (h + 1 - g).div_ceil(m) } else { 0 };
    if k2 <= upper_b1 {
        let cnt = upper_b1 - k2 + 1;
        let sum_k = cnt * (k2 + upper_b1) / 2;
        // (G - h) may be negative; the total contribution never is
        let add = cnt as i128 * (g as i128 - h as i128) + (m * sum_k) as i128;
        debug_assert!(add >= 0);
        shifted += add as u128;
    }
    // k in (k0, k1): slope rows with lower cut: contributes n - h each
    let lo_b2 = k0 + 1;
    let hi_b2 = k1.saturating_sub(1).min(g - 1);
    if lo_b2 <= hi_b2 {
        shifted += (hi_b2 - lo_b2 + 1) * (n - h);
    }

    // overlap exists only when M divides the half shift
    let overlap = if h % m == 0 {
        tail_min_sum(n, m, g, (h / m).min(g))
    } else {
        0
    };
    pre + shifted - overlap
}

/// Builds the tree, materializing levels while their cube count stays within
/// `budget` (blocks likewise).
pub fn build_r(params: &CantorParams, budget: usize) -> Result<CantorTree> {
    params.validate()?;
    let root = DyadicSquare::new(Scale::ONE, 0, 0)?;
    let mut levels = vec![CantorLevel {
        scale: Scale::ONE,
        kind: LevelKind::Root,
        count: 1,
        cubes: Some(CubeSet::new(Scale::ONE, vec![root])?),
    }];
    let mut blocks = Vec::new();

    for &(delta_n, block_n) in &params.pairs {
        // fill level at δ_n
        let prev = levels.last().expect("nonempty");
        let shift = delta_n.exponent() - prev.scale.exponent();
        let fill_count = prev.count << (2 * shift);
        let fill_cubes = match &prev.cubes {
            Some(cubes) if fill_count as usize <= budget => {
                let mut members = Vec::with_capacity(fill_count as usize);
                for sq in cubes.members() {
                    let base_x = sq.ix << shift;
                    let base_y = sq.iy << shift;
                    for dx in 0..(1u64 << shift) {
                        for dy in 0..(1u64 << shift) {
                            members.push(DyadicSquare {
                                scale: delta_n,
                                ix: base_x + dx,
                                iy: base_y + dy,
                            });
                        }
                    }
                }
                Some(CubeSet::new(delta_n, members)?)
            }
            _ => None,
        };
        levels.push(CantorLevel {
            scale: delta_n,
            kind: LevelKind::Fill,
            count: fill_count,
            cubes: fill_cubes,
        });

        // block level at Δ_{n+1}
        let ratio = Scale::new(block_n.exponent() - delta_n.exponent());
        let bparams = BlockParams::new_rounded(ratio, params.tau, params.s)?;
        let cube_count = block_cube_count(&bparams);
        let built = if cube_count as usize <= budget {
            Some(build_block(&bparams)?)
        } else {
            None
        };
        if let Some(b) = &built {
            debug_assert_eq!(b.cubes.len() as u128, cube_count);
        }
        let prev = levels.last().expect("nonempty");
        let level_count = prev.count * cube_count;
        let level_cubes = match (&prev.cubes, &built) {
            (Some(cubes), Some(block)) if level_count as usize <= budget => {
                let rshift = ratio.exponent();
                let mut members = Vec::with_capacity(level_count as usize);
                for parent in cubes.members() {
                    let base_x = parent.ix << rshift;
                    let base_y = parent.iy << rshift;
                    for cell in block.cubes.members() {
                        members.push(DyadicSquare {
                            scale: block_n,
                            ix: base_x + cell.ix,
                            iy: base_y + cell.iy,
                        });
                    }
                }
                Some(CubeSet::new(block_n, members)?)
            }
            _ => None,
        };
        levels.push(CantorLevel {
            scale: block_n,
            kind: LevelKind::Blocks,
            count: level_count,
            cubes: level_cubes,
        });
        blocks.push(BlockLevel {
            params: bparams,
            cube_count,
            built,
        });
    }
    Ok(CantorTree {
        params: params.clone(),
        levels,
        blocks,
    })
}

impl CantorTree {
    /// Finest constructed scale.
    pub fn depth_scale(&self) -> Scale {
        self.levels.last().expect("nonempty").scale
    }

    /// The materialized levels, coarse to fine (a prefix of all levels).
    pub fn materialized_levels(&self) -> Vec<&CubeSet> {
        self.levels.iter().map_while(|l| l.cubes.as_ref()).collect()
    }

    /// Exact covering number `|R|_ρ` of the limit set at a dyadic `ρ`, from
    /// the per-window closed forms (every constructed cube carries deeper
    /// content, so the cover at `ρ` is the cover of the first level at least
    /// as fine as `ρ`). Inside a block window this needs the block built.
    pub fn covering_number(&self, rho: Scale) -> Result<u128> {
        let kr = rho.exponent();
        if kr > self.depth_scale().exponent() {
            return Err(Error::InvalidScale(format!(
                "profile scale {rho} finer than the built tree"
            )));
        }
        for (i, level) in self.levels.iter().enumerate() {
            if level.scale.exponent() >= kr {
                return match level.kind {
                    LevelKind::Root => Ok(1),
                    LevelKind::Fill => {
                        let prev = &self.levels[i - 1];
                        let shift = kr - prev.scale.exponent();
                        Ok(prev.count << (2 * shift))
                    }
                    LevelKind::Blocks => {
                        let prev = &self.levels[i - 1];
                        let block = &self.blocks[i / 2 - 1];
                        let rel = kr - prev.scale.exponent();
                        if rel == 0 {
                            return Ok(prev.count);
                        }
                        let Some(built) = &block.built else {
                            return Err(Error::InvalidScale(format!(
                                "profile scale {rho} lies in an unbuilt block window"
                            )));
                        };
                        Ok(prev.count
                            * built.cubes.covering_number(Scale::new(rel))? as u128)
                    }
                };
            }
        }
        unreachable!("kr <= depth checked above")
    }

    /// Covering profile over every dyadic scale down to the deepest level
    /// whose window is computable.
    pub fn covering_profile(&self) -> Result<Vec<(Scale, u128)>> {
        let mut out = Vec::new();
        for k in 0..=self.depth_scale().exponent() {
            match self.covering_number(Scale::new(k)) {
                Ok(c) => out.push((Scale::new(k), c)),
                Err(_) => break,
            }
        }
        Ok(out)
    }

    /// Fiber of a level over a dyadic column: the sorted `iy` indices of
    /// level cubes whose column contains `x`. Works on counted levels as
    /// long as the relevant blocks are built.
    pub fn fiber(&self, level_idx: usize, x: Rat) -> Result<Vec<u64>> {
        let level = &self.levels[level_idx];
        if x < Ratio::from_integer(0) || x >= Ratio::from_integer(1) {
            return Err(Error::InvalidParameter(format!("column {x} outside [0,1)")));
        }
        if let Some(cubes) = &level.cubes {
            let n = level.scale.cells_per_axis() as i128;
            let ix = (x * Rat::from(n)).floor().to_integer() as u64;
            return Ok(cubes
                .members()
                .iter()
                .filter(|sq| sq.ix == ix)
                .map(|sq| sq.iy)
                .collect());
        }
        let parent_fiber = self.fiber(level_idx - 1, x)?;
        let prev = &self.levels[level_idx - 1];
        let shift = level.scale.exponent() - prev.scale.exponent();
        match level.kind {
            LevelKind::Root => unreachable!("root is materialized"),
            LevelKind::Fill => {
                let mut out = Vec::with_capacity(parent_fiber.len() << shift);
                for iyp in parent_fiber {
                    for dy in 0..(1u64 << shift) {
                        out.push((iyp << shift) + dy);
                    }
                }
                Ok(out)
            }
            LevelKind::Blocks => {
                let block = self.blocks[level_idx / 2 - 1].built.as_ref().ok_or_else(|| {
                    Error::Construction("fiber inside an unbuilt block level".into())
                })?;
                let n = level.scale.cells_per_axis() as i128;
                let ix = (x * Rat::from(n)).floor().to_integer() as u64;
                let local_col = ix & ((1u64 << shift) - 1);
                let block_fiber: Vec<u64> = block
                    .cubes
                    .members()
                    .iter()
                    .filter(|sq| sq.ix == local_col)
                    .map(|sq| sq.iy)
                    .collect();
                let mut out = Vec::new();
                for iyp in parent_fiber {
                    for &b in &block_fiber {
                        out.push((iyp << shift) + b);
                    }
                }
                out.sort_unstable();
                Ok(out)
            }
        }
    }
}
