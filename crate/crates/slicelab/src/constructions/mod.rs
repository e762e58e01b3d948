//! Explicit constructions: the sheared-grid building block with its Farey
//! direction set, Cantor trees with alternating fill/block levels, the
//! derived line families (projection covers and nested tube trees), and
//! Frostman measures on nested families.

mod block;
mod cantor;
mod frostman;
mod line_family;
mod tube_tree;

pub use block::{
    build_block, direction_set, verify_p1, verify_p2, Block, BlockParams, DirectionSet,
    P1Report, P2Report, P2Row,
};
pub use cantor::{build_r, CantorLevel, CantorParams, CantorTree, LevelKind};
pub use frostman::{frostman_measure, FrostmanMeasure, MassLevel, NestedFamily};
pub use line_family::{build_lf, e_intersection_witness, fraction_in_interval, LineFamilyLevel};
pub use tube_tree::{build_lg, column_subtree, BranchKind, ColumnSubtree, TubeLevel, TubeTree};
