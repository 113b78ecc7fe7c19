mod common;

use std::collections::VecDeque;

use chainlab_core::chain_engine::ChainGraph;
use chainlab_core::models::TorusPoint;
use common::preset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bfs_distance(graph: &ChainGraph, from: u32, to: u32) -> Option<usize> {
    let n = graph.grid().box_count();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for w in graph.successors(from) {
        if dist[w as usize] == usize::MAX {
            dist[w as usize] = 1;
            queue.push_back(w);
        }
    }
    while let Some(v) = queue.pop_front() {
        for w in graph.successors(v) {
            if dist[w as usize] == usize::MAX {
                dist[w as usize] = dist[v as usize] + 1;
                queue.push_back(w);
            }
        }
    }
    (dist[to as usize] != usize::MAX).then_some(dist[to as usize])
}

fn random_point<R: Rng>(rng: &mut R) -> TorusPoint {
    TorusPoint::new(rng.gen(), rng.gen(), rng.gen())
}

#[test]
fn product_graph_is_strongly_connected_at_32() {
    // 0.05 is below the box diameter at this resolution
    assert!(ChainGraph::build(&preset("product"), 32, 0.05).is_err());
    let g = ChainGraph::build(&preset("product"), 32, 0.06).unwrap();
    assert_eq!(g.components().count, 1);
    assert_eq!(g.chain_recurrent_classes().len(), 1);
}

#[test]
fn product_stays_strongly_connected_under_refinement() {
    let mut g = ChainGraph::build(&preset("product"), 8, 0.22).unwrap();
    for _ in 0..3 {
        assert_eq!(g.components().count, 1, "resolution {}", g.grid().resolution());
        g = g.refine().unwrap();
    }
}

#[test]
fn fiber_climb_matches_breadth_first_search() {
    let g = ChainGraph::build(&preset("product"), 64, 0.05).unwrap();
    let x = TorusPoint::new(0.0, 0.0, 0.0);
    let y = TorusPoint::new(0.0, 0.0, 0.5);
    let orbit = g.chain_attainable(&x, &y).unwrap();
    assert!(orbit.max_jump(g.system()) < g.witness_bound());
    let hops = bfs_distance(&g, g.grid().locate(&x), g.grid().locate(&y)).unwrap();
    assert_eq!(orbit.steps(), hops);
    assert!((5..=12).contains(&hops), "{hops}");
}

#[test]
fn direct_image_is_one_step() {
    let sys = preset("nonlinear");
    let g = ChainGraph::build(&sys, 16, 0.2).unwrap();
    let x = TorusPoint::new(0.31, 0.77, 0.12);
    let orbit = g.chain_attainable(&x, &sys.apply(&x)).unwrap();
    assert_eq!(orbit.steps(), 1);
}

#[test]
fn two_circle_class_count_does_not_drop_under_refinement() {
    let sys = preset("two-circle");
    let g = ChainGraph::build(&sys, 16, 0.12).unwrap();
    let coarse = g.chain_recurrent_classes().len();
    let fine = g.refine().unwrap().chain_recurrent_classes().len();
    assert!(fine >= coarse, "{coarse} -> {fine}");
}

#[test]
fn true_orbits_are_graph_paths() {
    let sys = preset("nonlinear");
    let g = ChainGraph::build(&sys, 32, 0.06).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let mut p = random_point(&mut rng);
        for _ in 0..10 {
            let q = sys.apply(&p);
            assert!(g.has_edge(g.grid().locate(&p), g.grid().locate(&q)));
            p = q;
        }
    }
}

#[test]
fn attainability_is_transitive_and_sound() {
    let sys = preset("two-circle");
    let g = ChainGraph::build(&sys, 16, 0.12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for _ in 0..30 {
        let (x, y, z) = (random_point(&mut rng), random_point(&mut rng), random_point(&mut rng));
        let xy = g.chain_attainable(&x, &y);
        let yz = g.chain_attainable(&y, &z);
        for o in [&xy, &yz].into_iter().flatten() {
            assert!(o.max_jump(&sys) < g.witness_bound());
        }
        if xy.is_some() && yz.is_some() {
            let xz = g.chain_attainable(&x, &z).expect("concatenated path");
            assert!(xz.max_jump(&sys) < g.witness_bound());
            checked += 1;
        }
    }
    assert!(checked > 0);
}
