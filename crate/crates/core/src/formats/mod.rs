//! Readers and writers for every on-disk format.

pub mod cases;
pub mod m2;
pub mod tsv;

pub use cases::{
    case_to_json, load_cases, load_cases_unaudited, parse_cases, parse_cases_unaudited, save_cases,
    write_cases,
};
pub use m2::{parse_m2, write_m2};
pub use tsv::{
    load_candidates, load_frequency_table, load_hypotheses, load_vocabulary, parse_candidates,
    parse_frequency_table, parse_hypotheses, parse_vocabulary,
};
