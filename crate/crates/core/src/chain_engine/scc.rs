//! Iterative Tarjan over an implicitly enumerated graph.

/// Strongly connected components, numbered in reverse topological order
/// (a component only has edges into components with smaller or equal id).
#[derive(Debug, Clone)]
pub struct Components {
    pub component: Vec<u32>,
    pub count: usize,
    /// Component has at least one internal edge (size > 1 or a self-loop).
    pub recurrent: Vec<bool>,
}

impl Components {
    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.count];
        for (node, &c) in self.component.iter().enumerate() {
            out[c as usize].push(node as u32);
        }
        out
    }
}

const UNVISITED: u32 = u32::MAX;

/// `successors(node)` enumerates the out-edges of `node`; a fresh iterator is
/// requested once per node.
pub fn tarjan<F, I>(node_count: usize, successors: F) -> Components
where
    F: Fn(u32) -> I,
    I: Iterator<Item = u32>,
{
    let mut index = vec![UNVISITED; node_count];
    let mut low = vec![0u32; node_count];
    let mut on_stack = vec![false; node_count];
    let mut self_loop = vec![false; node_count];
    let mut stack: Vec<u32> = Vec::new();
    let mut component = vec![UNVISITED; node_count];
    let mut recurrent = Vec::new();
    let mut count = 0u32;
    let mut counter = 0u32;
    let mut frames: Vec<(u32, I)> = Vec::new();

    for root in 0..node_count as u32 {
        if index[root as usize] != UNVISITED {
            continue;
        }
        index[root as usize] = counter;
        low[root as usize] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        frames.push((root, successors(root)));

        while let Some((v, edges)) = frames.last_mut() {
            let v = *v;
            let mut descended = None;
            for w in edges.by_ref() {
                let wi = w as usize;
                if w == v {
                    self_loop[v as usize] = true;
                }
                if index[wi] == UNVISITED {
                    descended = Some(w);
                    break;
                } else if on_stack[wi] {
                    low[v as usize] = low[v as usize].min(index[wi]);
                }
            }
            if let Some(w) = descended {
                let wi = w as usize;
                index[wi] = counter;
                low[wi] = counter;
                counter += 1;
                stack.push(w);
                on_stack[wi] = true;
                frames.push((w, successors(w)));
                continue;
            }
            frames.pop();
            let vi = v as usize;
            if low[vi] == index[vi] {
                let mut size = 0usize;
                let mut looped = false;
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w as usize] = false;
                    component[w as usize] = count;
                    looped |= self_loop[w as usize];
                    size += 1;
                    if w == v {
                        break;
                    }
                }
                recurrent.push(size > 1 || looped);
                count += 1;
            }
            if let Some(&(parent, _)) = frames.last() {
                let p = parent as usize;
                low[p] = low[p].min(low[vi]);
            }
        }
    }
    Components {
        component,
        count: count as usize,
        recurrent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_adj(adj: &[Vec<u32>]) -> Components {
        tarjan(adj.len(), |v| adj[v as usize].clone().into_iter())
    }

    #[test]
    fn two_cycles_and_a_bridge() {
        // 0 <-> 1 -> 2 <-> 3, 4 isolated, 5 self-loop
        let adj = vec![vec![1], vec![0, 2], vec![3], vec![2], vec![], vec![5]];
        let c = from_adj(&adj);
        assert_eq!(c.count, 4);
        assert_eq!(c.component[0], c.component[1]);
        assert_eq!(c.component[2], c.component[3]);
        assert_ne!(c.component[0], c.component[2]);
        // sink component numbered first
        assert!(c.component[2] < c.component[0]);
        assert!(c.recurrent[c.component[0] as usize]);
        assert!(!c.recurrent[c.component[4] as usize]);
        assert!(c.recurrent[c.component[5] as usize]);
    }

    #[test]
    fn long_path_does_not_overflow() {
        let n = 200_000u32;
        let c = tarjan(n as usize, |v| std::iter::once((v + 1) % n));
        assert_eq!(c.count, 1);
        assert!(c.recurrent[0]);
    }
}
