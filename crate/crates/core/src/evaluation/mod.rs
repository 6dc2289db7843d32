//! Frame-level and pixel-level ROC analysis.

mod maps;
mod roc;

pub use maps::{
    cube_score_map, load_maps, pixel_auc, pixel_frame_score, write_maps, CellFill, ScoreMap, DEFAULT_SIGMA_PX,
};
pub use roc::{frame_auc, roc, trapezoid, RocLevel, RocReport};
