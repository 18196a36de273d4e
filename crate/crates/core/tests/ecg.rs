use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ecgloc::ecg::*;
use ecgloc::synth::{placement_for, sample_torso, SliceProtocol};
use ecgloc::{Electrode, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn free_space(n: usize, h: f64, v: f64) -> HeartPhantom {
    let c = n / 2;
    HeartPhantom {
        dims: [n, n, n],
        spacing: h,
        origin: Point3::ZERO,
        mask: vec![true; n * n * n],
        velocity: vec![v; n * n * n],
        fiber: None,
        roots: vec![(c * n + c) * n + c],
    }
}

fn radial_error(ph: &HeartPhantom, v: f64) -> f64 {
    let act = solve_eikonal(ph).unwrap();
    let root = ph.position(ph.roots[0]);
    (0..ph.len())
        .map(|i| (act.times[i] - ph.position(i).dist(root) / v).abs())
        .fold(0.0, f64::max)
}

/// Shortest paths over the 26-neighbour graph of tissue voxels with edge
/// length / v as weight.
fn dijkstra(ph: &HeartPhantom) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; ph.len()];
    let mut heap = BinaryHeap::new();
    for &r in &ph.roots {
        dist[r] = 0.0;
        heap.push(Reverse((0u64, r)));
    }
    while let Some(Reverse((bits, u))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[u] {
            continue;
        }
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if (dx, dy, dz) == (0, 0, 0) {
                        continue;
                    }
                    let Some(w) = ph.offset(u, [dx, dy, dz]) else { continue };
                    if !ph.mask[w] {
                        continue;
                    }
                    let len = ((dx * dx + dy * dy + dz * dz) as f64).sqrt() * ph.spacing;
                    let nd = d + len / ph.velocity[w];
                    if nd < dist[w] {
                        dist[w] = nd;
                        heap.push(Reverse((nd.to_bits(), w)));
                    }
                }
            }
        }
    }
    dist
}

fn random_spec(rng: &mut ChaCha8Rng, spacing: f64) -> PhantomSpec {
    let mut s = PhantomSpec::default();
    s.spacing = spacing;
    s.center = Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(30.0..40.0));
    s.lv.radii = Point3::new(rng.random_range(2.2..3.0), rng.random_range(2.2..3.0), rng.random_range(3.5..4.5));
    s.lv.wall = rng.random_range(0.8..1.1);
    s.rv.center = Point3::new(rng.random_range(-2.2..-1.5), rng.random_range(0.5..1.0), rng.random_range(0.0..0.5));
    s.rv.wall = rng.random_range(0.6..0.8);
    s.velocity = rng.random_range(0.04..0.1);
    s
}

#[test]
fn free_space_radial_solution() {
    let h = 0.2;
    let err = radial_error(&free_space(21, h, 0.07), 0.07);
    assert!(err <= 3f64.sqrt() * h / 0.07, "{err}");
}

#[test]
fn refinement_shrinks_radial_error() {
    let coarse = radial_error(&free_space(17, 0.25, 1.0), 1.0);
    let fine = radial_error(&free_space(33, 0.125, 1.0), 1.0);
    assert!(fine <= 0.7 * coarse, "{coarse} -> {fine}");
}

#[test]
fn doubling_velocity_halves_times() {
    let mut ph = PhantomSpec::default().build().unwrap();
    let a = solve_eikonal(&ph).unwrap();
    for v in &mut ph.velocity {
        *v *= 2.0;
    }
    let b = solve_eikonal(&ph).unwrap();
    for (x, y) in a.times.iter().zip(&b.times) {
        if x.is_finite() {
            assert!((x / 2.0 - y).abs() <= 1e-12 * x.max(1.0));
        } else {
            assert!(y.is_infinite());
        }
    }
}

#[test]
fn dijkstra_bounds_random_phantoms() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut done = 0;
    while done < 10 {
        let Ok(ph) = random_spec(&mut rng, 0.3).build() else { continue };
        let act = solve_eikonal(&ph).unwrap();
        assert!(act.unreachable.is_empty());
        let bound = dijkstra(&ph);
        for i in 0..ph.len() {
            if ph.mask[i] {
                assert!(act.times[i] <= bound[i] * (1.0 + 1e-12), "voxel {i}: {} > {}", act.times[i], bound[i]);
                assert!(act.times[i].is_finite());
            }
        }
        for &r in &ph.roots {
            assert_eq!(act.times[r], 0.0);
        }
        done += 1;
    }
}

#[test]
fn grid_refinement_agrees_within_five_percent() {
    let spec = PhantomSpec {
        spacing: 0.1,
        ..Default::default()
    };
    let coarse_ph = spec.build().unwrap();
    // Nested grid: every coarse node is a fine node and the roots coincide.
    let fine_ph = PhantomSpec {
        spacing: spec.spacing / 2.0,
        dims: Some(coarse_ph.dims.map(|d| 2 * d - 1)),
        roots: Some(coarse_ph.roots.iter().map(|&r| coarse_ph.coords(r).map(|c| 2 * c)).collect()),
        ..spec
    }
    .build()
    .unwrap();
    let coarse = solve_eikonal(&coarse_ph).unwrap();
    let fine = solve_eikonal(&fine_ph).unwrap();
    let mut worst = 0.0f64;
    let mut compared = 0;
    let mut mean_rel = 0.0;
    for i in 0..coarse_ph.len() {
        let tc = coarse.times[i];
        if !tc.is_finite() || tc < 20.0 {
            continue;
        }
        let Some(j) = fine_ph.voxel_at(coarse_ph.position(i)) else { continue };
        if fine.times[j].is_finite() {
            let rel = (tc - fine.times[j]).abs() / fine.times[j];
            worst = worst.max(rel);
            mean_rel += rel;
            compared += 1;
        }
    }
    assert!(compared > 100);
    assert!(mean_rel / compared as f64 <= 0.01);
    assert!(worst <= 0.05, "{worst}");
}

#[test]
fn acceptance_order_is_monotone_and_roots_only_help() {
    let mut ph = PhantomSpec::default().build().unwrap();
    let act = solve_eikonal(&ph).unwrap();
    for w in act.order.windows(2) {
        assert!(act.times[w[0]] <= act.times[w[1]]);
    }
    assert_eq!(act.order.len(), ph.tissue_count());
    let extra = (0..ph.len()).filter(|&i| ph.mask[i]).max_by(|&a, &b| act.times[a].total_cmp(&act.times[b])).unwrap();
    ph.roots.push(extra);
    let more = solve_eikonal(&ph).unwrap();
    for (a, b) in act.times.iter().zip(&more.times) {
        if a.is_finite() {
            assert!(b <= a);
        }
    }
    assert_eq!(more.times[extra], 0.0);
}

#[test]
fn isolated_tissue_is_flagged_unreachable() {
    let mut ph = free_space(9, 1.0, 1.0);
    for k in 0..9 {
        for j in 0..9 {
            let idx = ph.index([6, j, k]);
            ph.mask[idx] = false;
        }
    }
    assert!(ph.validate().is_err());
    let act = solve_eikonal(&ph).unwrap();
    assert_eq!(act.unreachable.len(), 2 * 81);
    for &u in &act.unreachable {
        assert!(ph.coords(u)[0] > 6 && act.times[u].is_infinite());
    }
}

#[test]
fn fibres_speed_up_conduction_along_their_direction() {
    let mut ph = free_space(21, 0.2, 0.05);
    ph.fiber = Some(Fiber {
        direction: Point3::new(1.0, 0.0, 0.0),
        factor: 2.0,
    });
    let act = solve_eikonal(&ph).unwrap();
    let along = act.times[ph.index([20, 10, 10])];
    let across = act.times[ph.index([10, 20, 10])];
    assert!((along - 2.0 / 0.1).abs() < 1e-9, "{along}");
    assert!((across - 2.0 / 0.05).abs() < 1e-9, "{across}");
}

#[test]
fn pseudo_ecg_is_linear_in_voltage() {
    let ph = PhantomSpec::default().build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v1: Vec<f64> = (0..ph.len()).map(|_| rng.random()).collect();
    let v2: Vec<f64> = (0..ph.len()).map(|_| rng.random()).collect();
    let sum: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
    let e = Point3::new(2.0, 12.0, 1.0);
    let a = pseudo_ecg_frame(&ph, &v1, e).unwrap();
    let b = pseudo_ecg_frame(&ph, &v2, e).unwrap();
    let s = pseudo_ecg_frame(&ph, &sum, e).unwrap();
    assert!((s - (a + b)).abs() <= 1e-12 * (a.abs() + b.abs()));
}

#[test]
fn antisymmetric_field_cancels_on_the_symmetry_plane() {
    let n = 11;
    let ph = free_space(n, 0.5, 1.0);
    let cx = ph.position(ph.roots[0]).x;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut vm = vec![0.0; ph.len()];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n / 2 {
                let v: f64 = rng.random();
                vm[ph.index([i, j, k])] = v;
                vm[ph.index([n - 1 - i, j, k])] = -v;
            }
        }
    }
    let e = Point3::new(cx, 9.0, 1.3);
    let phi = pseudo_ecg_frame(&ph, &vm, e).unwrap();
    let scale: f64 = {
        let mut one = vec![0.0; ph.len()];
        one[0] = 1.0;
        pseudo_ecg_frame(&ph, &one, e).unwrap().abs()
    };
    assert!(phi.abs() <= 1e-9 * scale.max(1e-6), "{phi}");
}

fn subject_geometry(seed: u64) -> (HeartPhantom, ecgloc::ElectrodeSet) {
    let (torso, _) = sample_torso(seed);
    let ph = PhantomSpec::for_torso(&torso, &SliceProtocol::default()).build().unwrap();
    (ph, placement_for(&torso))
}

#[test]
fn simulated_leads_satisfy_identities_and_translation_invariance() {
    let (ph, el) = subject_geometry(3);
    let act = solve_eikonal(&ph).unwrap();
    let cfg = SimConfig::default();
    let tr = simulate_ecg(&ph, &act, &el, &cfg).unwrap();
    assert!(tr.len() > 50);
    assert!(tr.leads.iter().all(|l| l.iter().any(|&x| x != 0.0)));
    let (i, ii) = (&tr.leads[0], &tr.leads[1]);
    for (t, iii) in tr.iii().iter().enumerate() {
        assert!((iii - (ii[t] - i[t])).abs() <= 1e-12);
        assert!((tr.avr()[t] + (i[t] + ii[t]) / 2.0).abs() <= 1e-12);
        assert!((tr.avl()[t] - (i[t] - ii[t] / 2.0)).abs() <= 1e-12);
        assert!((tr.avf()[t] - (ii[t] - i[t] / 2.0)).abs() <= 1e-12);
    }
    let d = Point3::new(3.25, -7.5, 11.0);
    let moved = ph.translated(d);
    let mut el2 = el;
    for p in el2.positions.iter_mut() {
        *p += d;
    }
    let tr2 = simulate_ecg(&moved, &act, &el2, &cfg).unwrap();
    for (a, b) in tr.leads.iter().zip(&tr2.leads) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
        }
    }
    let cmp = compare_ecgs(&tr, &tr, DEFAULT_QRS_FRACTION).unwrap();
    assert_eq!(cmp.mean_dtw, 0.0);
    assert_eq!(cmp.mean_pearson, 1.0);
    assert!(cmp.qrs_gt_ms > 20.0 && cmp.qrs_gt_ms < 200.0, "{}", cmp.qrs_gt_ms);
}

#[test]
fn electrode_inside_tissue_is_rejected() {
    let (ph, mut el) = subject_geometry(4);
    let act = solve_eikonal(&ph).unwrap();
    el.positions[Electrode::V3.index()] = ph.position(ph.roots[0]);
    assert!(simulate_ecg(&ph, &act, &el, &SimConfig::default()).is_err());
}

#[test]
fn chest_electrode_displacement_grows_dtw() {
    let (ph, el) = subject_geometry(11);
    let act = solve_eikonal(&ph).unwrap();
    let cfg = SimConfig::default();
    let base = simulate_ecg(&ph, &act, &el, &cfg).unwrap();
    let mut last = -1.0;
    for shift in [0.0, 1.0, 2.0, 4.0] {
        let mut moved = el;
        moved.positions[Electrode::V2.index()] = el.get(Electrode::V2) + Point3::new(0.0, 0.0, -shift);
        let tr = simulate_ecg(&ph, &act, &moved, &cfg).unwrap();
        let d = compare_ecgs(&tr, &base, DEFAULT_QRS_FRACTION).unwrap().mean_dtw;
        println!("shift {shift}: {d}");
        assert!(d >= last, "{shift}: {d} < {last}");
        last = d;
    }
    assert!(last > 0.0);
}
