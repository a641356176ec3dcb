use rand::Rng;

use super::{EntityId, RelationId, RelationTriples, Scope, Which};
use crate::error::{Error, Result};

/// Attempt budget of the rejection sampler for a subject of degree `degree`.
pub fn max_attempts(n_entities: usize, degree: usize) -> usize {
    let free = n_entities.saturating_sub(degree).max(1);
    100usize.max(20 * n_entities / free)
}

/// Draws an object uniformly from the entities not linked to `s` through `r`
/// in the requested scope, by rejection from the full entity set.
pub fn sample_unlinked_object<S, G>(scope: &S, s: EntityId, r: RelationId, which: Which, rng: &mut G) -> Result<EntityId>
where
    S: Scope + ?Sized,
    G: Rng + ?Sized,
{
    let n = scope.n_entities();
    let cap = max_attempts(n, scope.degree(s, r, which));
    for _ in 0..cap {
        let o = EntityId(rng.random_range(0..n as u32));
        if !scope.contains(s, r, o, which) {
            return Ok(o);
        }
    }
    Err(Error::Saturated {
        subject: s,
        relation: r,
        attempts: cap,
    })
}

/// Draws one positive pair uniformly from a relation's triples.
#[inline]
pub fn sample_positive<G: Rng + ?Sized>(triples: &RelationTriples, rng: &mut G) -> (EntityId, EntityId) {
    triples.pairs()[rng.random_range(0..triples.len())]
}
