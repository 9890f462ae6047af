//! File formats: NIfTI-1 subset for FOD volumes and masks, TCK track files,
//! JSON-Lines tracking records, and CSV analysis outputs.

mod csv;
mod nifti;
mod records;
mod tck;

pub use csv::{
    read_clusters_csv, write_clusters_csv, write_histogram_csv, write_suggestion_csv,
};
pub use nifti::{read_fod, read_mask, read_nifti, write_fod_nifti, write_mask_nifti, NiftiVolume};
pub use records::{read_records, write_records, RecordLine};
pub use tck::{read_tck, write_tck};
