//! Finite groups, cocycles and homogeneous skew products.

mod cocycle;
mod extract;
mod group;

pub use cocycle::{
    cocycle_product_quotient, load_cocycle, load_cocycle_file, mackey_range, skew_build, skew_is_compact_check,
    verify_cocycle, Cocycle, CocycleCheck, CocycleDoc, CocycleSpec, CocycleTable, MackeyRange, ProductQuotient,
    DEFAULT_MACKEY_BUDGET,
};
pub use extract::{extract_cocycle, ModuleCocycle, UnitaryCocycleBundle};
pub use group::{enumerate_subgroups, FinGroupTable, Subgroup, SUBGROUP_BUDGET};
