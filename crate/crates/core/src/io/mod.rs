//! On-disk formats: ensemble directories, binary artifacts, CSV tables and
//! SVG plots.

mod artifacts;
mod container;
mod ensemble;
mod svg;
mod table;

pub use artifacts::{
    load_basis, load_bundle, load_closure, save_basis, save_bundle, save_closure, OperatorBundle,
};
pub use container::Container;
pub use ensemble::{read_ensemble, read_manifest, write_ensemble, DataFile, EnsembleManifest, MANIFEST};
pub use svg::{line_plot, write_line_plot, Series};
pub use table::{
    fmt_num, meta_path, read_table, read_trajectory, write_records, write_table, write_trajectory,
    TrajectoryMeta,
};
