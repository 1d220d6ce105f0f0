//! Pseudo-character large sieve machinery for families of primitive
//! Dirichlet characters, with Chebotarev and class-group torsion harnesses
//! for cyclic fields of prime degree.

pub mod arith;
pub mod characters;
pub mod chebotarev;
pub mod cli_io;
pub mod error;
pub mod fields;
pub mod largesieve;
pub mod lfunc;
pub mod sievekit;
pub mod torsion;

pub use arith::{Factorization, Rational};
pub use characters::{CharacterFamily, CharacterGroup, DirichletCharacter};
pub use cli_io::{Report, RunConfig};
pub use error::{Error, Result};
pub use fields::{CyclicField, Frobenius};
pub use largesieve::{SieveParams, SieveReport, SupportMode, WellSpacedSelection};
pub use lfunc::{LFunction, Rectangle, Zero};
pub use num_complex::Complex64;
pub use sievekit::{PseudoCharacterContext, SelbergWeightScheme};
