//! Post-processing toolkit for ASCII finite-element results (`.fil`) files.
//!
//! * [`codec`]: decode/encode of the 80-column sequential record stream.
//! * [`records`]: typed extraction of node, element, nodal-field and stress
//!   records.
//! * [`weibull`]: three-parameter Weibull weakest-link cleavage analysis.
//! * [`truss`]: two-bar truss sizing with displacement constraints.
//! * [`czm`]: surrogate-assisted identification of cohesive-law parameters.
//! * [`jobs`]: external solver orchestration through lock-file polling.

pub mod cli;
pub mod codec;
pub mod czm;
pub mod format;
pub mod jobs;
pub mod optim;
pub mod records;
pub mod truss;
pub mod vtk;
pub mod weibull;

pub use codec::{
    decode_item, decode_stream, decode_stream_lenient, encode_record, encode_stream, fil_to_string,
    read_fil, write_fil, CodecError, DataItem, FilStream, LogicalRecord,
};
