#![allow(dead_code)]

use std::sync::OnceLock;

use rilt::kernel::PotentialKernelTable;
use rilt::IncrementLaw;

/// Default-law kernel table shared by the tests of one binary.
pub fn table() -> &'static PotentialKernelTable {
    static TABLE: OnceLock<PotentialKernelTable> = OnceLock::new();
    TABLE.get_or_init(|| PotentialKernelTable::build(&IncrementLaw::default_law(), 48).expect("default table"))
}
