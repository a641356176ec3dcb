//! Barrier-style fan-out of per-relation work onto a fixed number of scoped threads.

/// Threads actually used for a request of `n_workers`: never more than the
/// cores the process may run on.
pub fn effective_workers(n_workers: usize) -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    n_workers.clamp(1, cores)
}

/// Greedy longest-processing-time assignment: items in descending `cost`
/// order go to the currently least-loaded worker. Returns the worker of each item.
pub fn lpt_assignment(costs: &[usize], n_workers: usize) -> Vec<usize> {
    let n_workers = n_workers.max(1);
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[b].cmp(&costs[a]).then(a.cmp(&b)));
    let mut load = vec![0usize; n_workers];
    let mut assignment = vec![0; costs.len()];
    for i in order {
        let w = (0..n_workers).min_by_key(|&w| (load[w], w)).unwrap();
        load[w] += costs[i].max(1);
        assignment[i] = w;
    }
    assignment
}

/// Runs `f` on every item, item `i` on worker `assignment[i]`, and returns
/// the results in item order once all workers have finished.
pub fn run_assigned<T, R, Fn_>(items: &mut [T], assignment: &[usize], n_workers: usize, f: Fn_) -> Vec<R>
where
    T: Send,
    R: Send,
    Fn_: Fn(&mut T) -> R + Sync,
{
    if n_workers <= 1 || items.len() <= 1 {
        return items.iter_mut().map(f).collect();
    }
    let mut buckets: Vec<Vec<(usize, &mut T)>> = (0..n_workers).map(|_| Vec::new()).collect();
    for (i, item) in items.iter_mut().enumerate() {
        buckets[assignment[i] % n_workers].push((i, item));
    }
    let f = &f;
    let mut out: Vec<Option<R>> = std::iter::repeat_with(|| None).take(assignment.len()).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = buckets
            .into_iter()
            .filter(|b| !b.is_empty())
            .map(|bucket| {
                scope.spawn(move || bucket.into_iter().map(|(i, item)| (i, f(item))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker thread panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every item is assigned")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lpt_balances_load() {
        let a = lpt_assignment(&[10, 1, 7, 3, 9], 2);
        // 10 -> w0, 9 -> w1, 7 -> w1, 3 -> w0, 1 -> w0
        assert_eq!(a, vec![0, 0, 1, 0, 1]);
        assert_eq!(lpt_assignment(&[5, 5, 5], 1), vec![0, 0, 0]);
    }

    #[test]
    fn results_come_back_in_item_order() {
        let mut items: Vec<u64> = (0..13).collect();
        let assignment = lpt_assignment(&[1; 13], 4);
        let out = run_assigned(&mut items, &assignment, 4, |x| {
            *x += 100;
            *x * 2
        });
        assert_eq!(out, (0..13).map(|x| (x + 100) * 2).collect::<Vec<_>>());
        assert_eq!(items[3], 103);
    }
}
