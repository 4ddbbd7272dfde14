#![allow(dead_code)]

use std::f64::consts::PI;

use oxnoise::structure::{AtomicFrame, Lattice, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const AL_LATTICE: f64 = 3.62;

/// Box-Muller normal deviate.
fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// n³ Al on a simple cubic lattice (a = 3.62 Å) with O on every edge
/// midpoint, so each Al has 6 O at 1.81 Å and each O has 2 Al. Positions
/// carry Gaussian jitter of `sigma` Å per component.
pub fn al_o_network(n: usize, sigma: f64, seed: u64) -> AtomicFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = AL_LATTICE;
    let lattice = Lattice::cubic(a * n as f64).unwrap();
    let mut species = Vec::new();
    let mut cart = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let base = [i as f64 * a, j as f64 * a, k as f64 * a];
                species.push("Al".to_string());
                cart.push(base);
                for d in 0..3 {
                    let mut p = base;
                    p[d] += 0.5 * a;
                    species.push("O".to_string());
                    cart.push(p);
                }
            }
        }
    }
    for p in &mut cart {
        for x in p.iter_mut() {
            *x += normal(&mut rng, sigma);
        }
    }
    AtomicFrame::from_cartesian(lattice, species, &cart).unwrap()
}

/// Amorphous-like synthetic Al–O trajectory: 3×3×3 network (108 atoms),
/// 0.12 Å jitter, 10 independently jittered frames.
pub fn amorphous_like() -> Trajectory {
    Trajectory::new((0..10).map(|k| al_o_network(3, 0.12, 100 + k)).collect()).unwrap()
}

pub fn simple_cubic(n: usize, a: f64) -> AtomicFrame {
    let lattice = Lattice::cubic(a * n as f64).unwrap();
    let mut cart = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                cart.push([i as f64 * a, j as f64 * a, k as f64 * a]);
            }
        }
    }
    AtomicFrame::from_cartesian(lattice, vec!["X".into(); cart.len()], &cart).unwrap()
}

/// Uniformly random positions, single species.
pub fn random_gas(n: usize, box_len: f64, seed: u64) -> AtomicFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    AtomicFrame::new(Lattice::cubic(box_len).unwrap(), vec!["X".into(); n], pos).unwrap()
}

pub fn distance_to_image(frame: &AtomicFrame, i: usize, j: usize, shift: [i64; 3]) -> f64 {
    let (pi, pj) = (frame.positions()[i], frame.positions()[j]);
    let df = [
        pj[0] - pi[0] + shift[0] as f64,
        pj[1] - pi[1] + shift[1] as f64,
        pj[2] - pi[2] + shift[2] as f64,
    ];
    let v = frame.lattice().vectors();
    let c: Vec<f64> = (0..3)
        .map(|d| df[0] * v[0][d] + df[1] * v[1][d] + df[2] * v[2][d])
        .collect();
    (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
}

/// Every image of every (i, j) pair with 0 < r < r_max. Shift range covers
/// the cutoff (±1, i.e. 27 images, whenever r_max ≤ half the narrowest
/// slab width).
pub fn brute_force_pairs(frame: &AtomicFrame, a: &str, b: &str, r_max: f64) -> Vec<(usize, usize, f64)> {
    let widths = frame.lattice().slab_widths();
    let reach: Vec<i64> = widths.iter().map(|w| ((r_max / w).ceil() as i64).max(1)).collect();
    let sp = frame.species();
    let mut out = Vec::new();
    for i in (0..frame.len()).filter(|&i| sp[i] == a) {
        for j in (0..frame.len()).filter(|&j| sp[j] == b) {
            for s0 in -reach[0]..=reach[0] {
                for s1 in -reach[1]..=reach[1] {
                    for s2 in -reach[2]..=reach[2] {
                        let r = distance_to_image(frame, i, j, [s0, s1, s2]);
                        if r > 0.0 && r < r_max {
                            out.push((i, j, r));
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn brute_force_histogram(frame: &AtomicFrame, a: &str, b: &str, dr: f64, r_max: f64) -> Vec<u64> {
    let x = r_max / dr;
    let nbins = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    } as usize;
    let mut h = vec![0u64; nbins];
    for (_, _, r) in brute_force_pairs(frame, a, b, r_max) {
        let bin = (r / dr) as usize;
        if bin < nbins {
            h[bin] += 1;
        }
    }
    h
}

/// Per-center neighbor counts within `cutoff` (inclusive), frame order.
pub fn brute_force_coordination(frame: &AtomicFrame, a: &str, b: &str, cutoff: f64) -> Vec<usize> {
    let sp = frame.species();
    let centers: Vec<usize> = (0..frame.len()).filter(|&i| sp[i] == a).collect();
    let mut counts = vec![0usize; centers.len()];
    let pairs = brute_force_pairs(frame, a, b, cutoff * (1.0 + 1e-12) + 1e-12);
    for (i, _, r) in pairs {
        if r <= cutoff {
            counts[centers.binary_search(&i).unwrap()] += 1;
        }
    }
    counts
}

pub fn single_vacancy_csv() -> &'static str {
    "label,sigma_over_tau,N\ndefect-free,3.23e19,1\n4-coordinated,2.48e19,1\n3-coordinated,3.83e19,1\n5-coordinated,3.51e19,1\n"
}

pub fn vacancy_count_csv() -> &'static str {
    "label,sigma_over_tau,N,listed_rel_fluct\nN0,3.23e19,0,0\nN1,3.83e19,1,0.186\nN2,3.27e19,2,0.012\nN4,1.99e19,4,-0.380\nN9,7.78e18,9,-1.400\n"
}

pub const LISTED_FLUCT: [(&str, f64); 5] = [
    ("N0", 0.0),
    ("N1", 0.186),
    ("N2", 0.012),
    ("N4", -0.380),
    ("N9", -1.400),
];
