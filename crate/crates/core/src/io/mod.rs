//! Model files and CSV output.

mod csv_out;
mod model_file;

pub use csv_out::{format_g12, write_csv, ToCsv};
pub use model_file::{
    arm_digest, parse_model, IndexEntry, InstanceSpec, ModelFile, NamedArm, ParseError,
    FORMAT_VERSION, PARSE_ROW_TOLERANCE,
};
