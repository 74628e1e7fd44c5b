use crate::error::{Error, Result};
use crate::memory::{distance, CandidateMemory};

/// Greedy farthest-point selection of up to `batch` unexplored candidates.
///
/// The cover starts as every explored candidate; with nothing explored the
/// lowest-index candidate seeds it and is selected first. Each step takes the
/// unexplored candidate whose distance to the cover is largest (ties to the
/// lower index) and adds it to the cover.
pub fn coreset_select(memory: &mut CandidateMemory<'_>, batch: usize) -> Result<Vec<usize>> {
    let pool = memory.pool();
    if memory.unexplored_count() == 0 {
        return Err(Error::EmptyPool);
    }
    let metric = pool.metric();
    let mut selected = Vec::with_capacity(batch.min(memory.unexplored_count()));
    let cover: Vec<usize> = memory.explored().collect();

    // min distance to the cover, per unexplored candidate
    let mut frontier: Vec<(usize, f64)> = memory.unexplored().map(|i| (i, f64::INFINITY)).collect();
    let absorb = |frontier: &mut Vec<(usize, f64)>, center: usize| -> Result<()> {
        let c = pool.embedding(center);
        for (i, d) in frontier.iter_mut() {
            let dist = distance(metric, pool.embedding(*i), c)?;
            if dist < *d {
                *d = dist;
            }
        }
        Ok(())
    };

    if cover.is_empty() && batch > 0 {
        let first = frontier.remove(0).0;
        selected.push(first);
        absorb(&mut frontier, first)?;
    } else {
        for &c in &cover {
            absorb(&mut frontier, c)?;
        }
    }

    while selected.len() < batch && !frontier.is_empty() {
        let mut best = 0;
        for (pos, &(i, d)) in frontier.iter().enumerate() {
            let (bi, bd) = frontier[best];
            if d > bd || (d == bd && i < bi) {
                best = pos;
            }
        }
        let (chosen, _) = frontier.swap_remove(best);
        selected.push(chosen);
        absorb(&mut frontier, chosen)?;
    }
    memory.mark_indices(&selected);
    Ok(selected)
}
