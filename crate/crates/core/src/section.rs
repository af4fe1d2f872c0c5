//! Local sections in a trivialising chart are just vector-valued fields; the
//! aliases below name the role a field plays.

use crate::chart::VectorField;

/// Section `s` of `ν: N → M`, components `s^α(x)`.
pub type SectionNu = VectorField;

/// Section `ψ` of `π: E → M`, components `ψ^A(x)`.
pub type SectionPi = VectorField;

/// Section of the dual bundle `E* → M`, components `f_A(x)`.
pub type DualSectionPi = VectorField;
