//! Shared inputs for the benchmarks.

use pseudosieve::characters::primitive_characters;
use pseudosieve::DirichletCharacter;

/// First primitive character mod `q`.
pub fn primitive(q: u64) -> DirichletCharacter {
    primitive_characters(q)
        .expect("modulus in range")
        .into_iter()
        .next()
        .expect("q admits a primitive character")
}
