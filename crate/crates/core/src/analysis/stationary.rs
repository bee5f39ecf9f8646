//! Stationary distribution of the recurrent class reachable from the initial state.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::dynamics::MarkovChain;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Closed classes up to this size are solved directly.
pub const DENSE_LIMIT: usize = 400;
/// Direct fallback when power iteration stalls.
pub const DENSE_FALLBACK_LIMIT: usize = 4000;
pub const RESIDUAL_TARGET: f64 = 1e-12;
const POWER_ITERATIONS: usize = 200_000;

/// `v` with `vP = v` and `Σv = 1`, zero outside the recurrent class reached
/// from the chain's initial state.
pub fn stationary_distribution<T: Real>(chain: &MarkovChain<T>) -> Result<Vec<T>> {
    let class = recurrent_class(chain)?;
    let n = chain.n_states();
    let mut local = vec![usize::MAX; n];
    for (i, &s) in class.iter().enumerate() {
        local[s] = i;
    }
    let pi_local = if class.len() <= DENSE_LIMIT {
        gth(chain, &class, &local)
    } else {
        match power_iteration(chain, &class, &local) {
            Some(v) => v,
            None if class.len() <= DENSE_FALLBACK_LIMIT => {
                log::debug!("power iteration stalled on {} states; solving directly", class.len());
                gth(chain, &class, &local)
            }
            None => {
                let v = lazy_power(chain, &class, &local);
                let r = residual_local(chain, &class, &local, &v);
                return Err(Error::StationaryAccuracy {
                    residual: r.as_f64(),
                    target: RESIDUAL_TARGET,
                });
            }
        }
    };
    let mut v = vec![T::zero(); n];
    for (i, &s) in class.iter().enumerate() {
        v[s] = pi_local[i];
    }
    Ok(v)
}

/// Sup-norm of `vP - v`.
pub fn residual<T: Real>(chain: &MarkovChain<T>, v: &[T]) -> T {
    let mut next = vec![T::zero(); v.len()];
    for (s, &vs) in v.iter().enumerate() {
        if vs == T::zero() {
            continue;
        }
        for t in chain.row(s) {
            next[t.next] = next[t.next] + vs * t.probability;
        }
    }
    next.iter().zip(v).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max)
}

/// The unique closed communicating class reachable from the initial state.
pub fn recurrent_class<T: Real>(chain: &MarkovChain<T>) -> Result<Vec<usize>> {
    let n = chain.n_states();
    let mut reached = vec![false; n];
    let mut order = Vec::new();
    let mut stack = vec![chain.initial()];
    reached[chain.initial()] = true;
    while let Some(s) = stack.pop() {
        if chain.degenerate().binary_search(&s).is_ok() {
            return Err(Error::DegenerateState { state: s });
        }
        order.push(s);
        for t in chain.row(s) {
            if t.probability > T::zero() && !reached[t.next] {
                reached[t.next] = true;
                stack.push(t.next);
            }
        }
    }
    order.sort_unstable();
    let mut idx = vec![usize::MAX; n];
    for (i, &s) in order.iter().enumerate() {
        idx[s] = i;
    }
    let mut graph = DiGraph::<(), ()>::with_capacity(order.len(), 0);
    let nodes: Vec<_> = order.iter().map(|_| graph.add_node(())).collect();
    for &s in &order {
        for t in chain.row(s) {
            if t.probability > T::zero() {
                graph.add_edge(nodes[idx[s]], nodes[idx[t.next]], ());
            }
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut comp = vec![0usize; order.len()];
    for (c, scc) in sccs.iter().enumerate() {
        for node in scc {
            comp[node.index()] = c;
        }
    }
    let closed: Vec<usize> = (0..sccs.len())
        .filter(|&c| {
            sccs[c].iter().all(|node| {
                chain
                    .row(order[node.index()])
                    .iter()
                    .all(|t| !(t.probability > T::zero()) || comp[idx[t.next]] == c)
            })
        })
        .collect();
    if closed.len() != 1 {
        return Err(Error::AmbiguousStationary { classes: closed.len() });
    }
    let mut class: Vec<usize> = sccs[closed[0]].iter().map(|node| order[node.index()]).collect();
    class.sort_unstable();
    Ok(class)
}

/// Grassmann–Taksar–Heyman elimination on the dense restriction to `class`.
fn gth<T: Real>(chain: &MarkovChain<T>, class: &[usize], local: &[usize]) -> Vec<T> {
    let n = class.len();
    let mut p = vec![T::zero(); n * n];
    for (i, &s) in class.iter().enumerate() {
        for t in chain.row(s) {
            let j = local[t.next];
            if j != usize::MAX {
                p[i * n + j] = p[i * n + j] + t.probability;
            }
        }
    }
    for k in (1..n).rev() {
        let s: T = (0..k).map(|j| p[k * n + j]).sum();
        for i in 0..k {
            p[i * n + k] = p[i * n + k] / s;
        }
        for i in 0..k {
            let pik = p[i * n + k];
            if pik == T::zero() {
                continue;
            }
            for j in 0..k {
                p[i * n + j] = p[i * n + j] + pik * p[k * n + j];
            }
        }
    }
    let mut pi = vec![T::zero(); n];
    pi[0] = T::one();
    for j in 1..n {
        pi[j] = (0..j).map(|i| pi[i] * p[i * n + j]).sum();
    }
    let total: T = pi.iter().copied().sum();
    pi.iter().map(|&x| x / total).collect()
}

fn multiply<T: Real>(chain: &MarkovChain<T>, class: &[usize], local: &[usize], v: &[T], out: &mut [T]) {
    out.iter_mut().for_each(|x| *x = T::zero());
    for (i, &s) in class.iter().enumerate() {
        for t in chain.row(s) {
            let j = local[t.next];
            out[j] = out[j] + v[i] * t.probability;
        }
    }
}

fn residual_local<T: Real>(chain: &MarkovChain<T>, class: &[usize], local: &[usize], v: &[T]) -> T {
    let mut next = vec![T::zero(); v.len()];
    multiply(chain, class, local, v, &mut next);
    next.iter().zip(v).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max)
}

fn power_iteration<T: Real>(chain: &MarkovChain<T>, class: &[usize], local: &[usize]) -> Option<Vec<T>> {
    let n = class.len();
    let target = T::lit(RESIDUAL_TARGET);
    let mut v = vec![T::one() / T::from_count(n); n];
    let mut next = vec![T::zero(); n];
    for _ in 0..POWER_ITERATIONS {
        multiply(chain, class, local, &v, &mut next);
        let total: T = next.iter().copied().sum();
        next.iter_mut().for_each(|x| *x = *x / total);
        let diff = next.iter().zip(&v).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max);
        std::mem::swap(&mut v, &mut next);
        if diff < target * T::lit(0.1) {
            break;
        }
    }
    (residual_local(chain, class, local, &v) < target).then_some(v)
}

/// Power iteration on `(I + P) / 2`, immune to periodicity.
fn lazy_power<T: Real>(chain: &MarkovChain<T>, class: &[usize], local: &[usize]) -> Vec<T> {
    let n = class.len();
    let half = T::lit(0.5);
    let mut v = vec![T::one() / T::from_count(n); n];
    let mut next = vec![T::zero(); n];
    for _ in 0..POWER_ITERATIONS {
        multiply(chain, class, local, &v, &mut next);
        for i in 0..n {
            next[i] = half * (next[i] + v[i]);
        }
        std::mem::swap(&mut v, &mut next);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{StepKind, TransitionRecord};

    fn rec(next: usize, p: f64) -> TransitionRecord<f64> {
        TransitionRecord {
            next,
            probability: p,
            reward: 0.0,
            pruned_critical: 0,
            pruned_total: 0,
            kind: StepKind::Grow,
        }
    }

    fn chain(rows: Vec<Vec<(usize, f64)>>, initial: usize) -> MarkovChain<f64> {
        let rows = rows
            .into_iter()
            .map(|r| Some(r.into_iter().map(|(n, p)| rec(n, p)).collect()))
            .collect();
        MarkovChain::from_rows(rows, initial)
    }

    #[test]
    fn flip_flop() {
        let c = chain(vec![vec![(1, 1.0)], vec![(0, 1.0)]], 0);
        let v = stationary_distribution(&c).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn absorbing_state() {
        let c = chain(vec![vec![(1, 1.0)], vec![(1, 1.0)]], 0);
        assert_eq!(stationary_distribution(&c).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn two_state_linear_solve() {
        // P = [[1-a, a], [b, 1-b]] → v = (b, a) / (a + b)
        let (a, b) = (0.3, 0.05);
        let c = chain(vec![vec![(0, 1.0 - a), (1, a)], vec![(0, b), (1, 1.0 - b)]], 0);
        let v = stationary_distribution(&c).unwrap();
        assert!((v[0] - b / (a + b)).abs() < 1e-14);
        assert!(residual(&c, &v) < 1e-15);
    }

    #[test]
    fn two_closed_classes_rejected() {
        let c = chain(vec![vec![(1, 0.5), (2, 0.5)], vec![(1, 1.0)], vec![(2, 1.0)]], 0);
        assert!(matches!(
            stationary_distribution(&c),
            Err(Error::AmbiguousStationary { classes: 2 })
        ));
    }

    #[test]
    fn unreachable_states_get_zero() {
        let c = chain(vec![vec![(0, 0.5), (1, 0.5)], vec![(0, 1.0)], vec![(0, 1.0)]], 0);
        let v = stationary_distribution(&c).unwrap();
        assert_eq!(v[2], 0.0);
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn large_ring_uses_power_iteration() {
        // lazy random walk on a ring: uniform stationary law
        let n = DENSE_LIMIT + 50;
        let rows = (0..n)
            .map(|i| vec![(i, 0.5), ((i + 1) % n, 0.25), ((i + n - 1) % n, 0.25)])
            .collect();
        let c = chain(rows, 0);
        let v = stationary_distribution(&c).unwrap();
        assert!(residual(&c, &v) < 1e-12);
        for x in v {
            assert!((x - 1.0 / n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_and_power_agree() {
        let n = 60;
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| vec![((i * 7 + 1) % n, 0.6), ((i + 1) % n, 0.3), (0, 0.1)])
            .collect();
        let c = chain(rows, 0);
        let class = recurrent_class(&c).unwrap();
        let mut local = vec![usize::MAX; n];
        for (i, &s) in class.iter().enumerate() {
            local[s] = i;
        }
        let a = gth(&c, &class, &local);
        let b = power_iteration(&c, &class, &local).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
