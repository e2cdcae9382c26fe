mod common;

use common::{dense_st, gelfand_radius, l1, profile, random_profile, random_simplex};
use mfgc::contraction::{
    build_st, constraint_roots, majorant_matrix, rho_b, stationary_certificate, stationary_matrix, st_matvec, Variant,
};
use mfgc::model::{estimate_lipschitz, random_affine_model, MeasureSlice, RandomModelSpec};
use mfgc::operators::{apply_h1, apply_h2, backward_q_flow, solve_bellman_fixed_point, QTable};
use mfgc::slowfast::{mfg_slowfast_check, schur_reduce, slowfast_certificate, BlockPartition, SlowFastMode};
use mfgc::solvers::{solve_finite_horizon, SolveOptions};
use mfgc::spectral::{collatz_upper, perron, PerronOptions};
use mfgc::{MfgModel, StateMeasureFlow};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(n: usize, seed: u64) -> MfgModel {
    random_affine_model(&RandomModelSpec { n_pops: n, eps: (0.1, 0.5), ..Default::default() }, seed)
}

fn slice(rng: &mut ChaCha8Rng, m: &MfgModel) -> MeasureSlice {
    (0..m.n_pops()).map(|_| random_simplex(rng, m.n_states)).collect()
}

#[test]
fn perron_matches_gelfand_on_positive_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let a = DMatrix::from_fn(8, 8, |_, _| rng.gen_range(0.01..1.0));
        let r = perron(&a, &PerronOptions::default()).unwrap();
        let g = gelfand_radius(&a);
        assert!((r.rho - g).abs() <= 1e-8 * g, "{} vs {}", r.rho, g);
        assert!(r.cw_lower <= g + 1e-12 && g <= r.cw_upper + 1e-12);
    }
}

#[test]
fn build_st_matches_block_pattern() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let n = rng.gen_range(1..=4);
        let p = random_profile(&mut rng, n, 1.0);
        let t = rng.gen_range(2..=15);
        let got = build_st(&p, t).unwrap();
        let want = dense_st(&p, t);
        let scale = want.amax();
        assert!((got - want).amax() <= 1e-14 * scale);
    }
}

#[test]
fn ones_give_geometric_row_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = rng.gen_range(1..=4);
        let p = random_profile(&mut rng, n, 1.0);
        let t = rng.gen_range(2..=30);
        let b = t - 1;
        let out = st_matvec(&p, t, &vec![1.0; n * b]).unwrap();
        for i in 0..n {
            let (a, beta, k, kb) = (p.a(i), p.beta(i), p.k(i), p.kbar(i));
            for m in 0..b {
                let tail = a * beta * (1.0 - beta.powi((b - m) as i32)) / (1.0 - beta);
                let sub = if m > 0 { kb + a + (n - 1) as f64 * (k + a) } else { 0.0 };
                let want = n as f64 * tail + sub;
                assert!((out[i * b + m] - want).abs() <= 1e-12 * want.max(1.0));
            }
        }
    }
}

/// Largest ratio over all pairs of (state, action, vertex of the product simplex).
fn vertex_lipschitz(m: &MfgModel, i: usize) -> (f64, f64) {
    let (n, nx, na) = (m.n_pops(), m.n_states, m.n_actions);
    let vertices: Vec<MeasureSlice> = (0..nx.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let mut v = vec![0.0; nx];
                    v[code % nx] = 1.0;
                    code /= nx;
                    v
                })
                .collect()
        })
        .collect();
    let mut points: Vec<(usize, usize, &MeasureSlice)> = Vec::new();
    for x in 0..nx {
        for a in 0..na {
            points.extend(vertices.iter().map(|v| (x, a, v)));
        }
    }
    let (mut lc, mut lk) = (0.0f64, 0.0f64);
    let mut r1 = vec![0.0; nx];
    let mut r2 = vec![0.0; nx];
    for (x, a, t) in &points {
        for (xt, at, tt) in &points {
            let den = (x != xt) as u8 as f64
                + 2.0 * (a != at) as u8 as f64
                + t.iter().zip(tt.iter()).map(|(p, q)| l1(p, q)).sum::<f64>();
            if den == 0.0 {
                continue;
            }
            lc = lc.max((m.cost(i, *x, *a, t) - m.cost(i, *xt, *at, tt)).abs() / den);
            m.transition(i, *x, *a, t, &mut r1);
            m.transition(i, *xt, *at, tt, &mut r2);
            lk = lk.max(l1(&r1, &r2) / den);
        }
    }
    (lc, lk)
}

#[test]
fn exact_constants_equal_vertex_enumeration() {
    for seed in 0..6 {
        let m = model(1 + seed as usize % 3, 40 + seed);
        let p = estimate_lipschitz(&m).unwrap().profile;
        for i in 0..m.n_pops() {
            let (lc, lk) = vertex_lipschitz(&m, i);
            assert!((p.pops[i].l - lc).abs() <= 1e-12, "L {} vs {}", p.pops[i].l, lc);
            assert!((p.pops[i].k - lk).abs() <= 1e-12, "K {} vs {}", p.pops[i].k, lk);
        }
    }
}

#[test]
fn h1_and_h2_match_direct_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = model(2, 5);
    let (nx, na) = (m.n_states, m.n_actions);
    for _ in 0..10 {
        let tau = slice(&mut rng, &m);
        for i in 0..2 {
            let spec = &m.populations[i];
            let q = QTable {
                owner: i,
                n_states: nx,
                n_actions: na,
                q: (0..nx * na).map(|_| rng.gen_range(0.0..3.0)).collect(),
            };
            // shifted entropy: min_u <q,u> + rho (sum u log u + log|A|)
            let qmin: Vec<f64> = (0..nx)
                .map(|y| {
                    let s: f64 = (0..na).map(|a| (-q.get(y, a) / spec.rho).exp()).sum();
                    -spec.rho * s.ln() + spec.rho * (na as f64).ln()
                })
                .collect();
            let got = apply_h1(&m, i, &q, &tau);
            let mut row = vec![0.0; nx];
            for x in 0..nx {
                for a in 0..na {
                    m.transition(i, x, a, &tau, &mut row);
                    let mut want = m.cost(i, x, a, &tau);
                    for y in 0..nx {
                        want += spec.beta * qmin[y] * row[y];
                    }
                    assert!((got.get(x, a) - want).abs() <= 1e-12);
                }
            }
            let got = apply_h2(&m, i, &q, &tau);
            let mut want = vec![0.0; nx];
            for x in 0..nx {
                let z: f64 = (0..na).map(|a| (-q.get(x, a) / spec.rho).exp()).sum();
                for a in 0..na {
                    let u = (-q.get(x, a) / spec.rho).exp() / z;
                    m.transition(i, x, a, &tau, &mut row);
                    for y in 0..nx {
                        want[y] += row[y] * u * tau[i][x];
                    }
                }
            }
            assert!(l1(&got, &want) <= 1e-13);
        }
    }
}

#[test]
fn bellman_fixed_point_matches_long_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = model(2, 6);
    let tau = slice(&mut rng, &m);
    for i in 0..2 {
        let q = solve_bellman_fixed_point(&m, i, &tau, 1e-11).unwrap();
        let mut it = QTable::zeros(i, m.n_states, m.n_actions);
        for _ in 0..1000 {
            it = apply_h1(&m, i, &it, &tau);
        }
        assert!(q.sup_distance(&it) <= 1e-10);
    }
}

#[test]
fn backward_flow_approaches_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = model(2, 7);
    let tau = slice(&mut rng, &m);
    let t = 60;
    let flow = StateMeasureFlow::constant(&tau, t);
    for i in 0..2 {
        let qs = backward_q_flow(&m, i, &flow);
        let star = solve_bellman_fixed_point(&m, i, &tau, 1e-12).unwrap();
        let beta = m.populations[i].beta;
        // Q* is bounded by (M + rho log|A|) / (1 - beta) under the shifted entropy
        let bound = (m.cost_bound(i) + m.populations[i].rho * (m.n_actions as f64).ln()) / (1.0 - beta);
        assert!(qs[0].sup_distance(&star) <= beta.powi(t as i32 - 1) * bound + 1e-11);
    }
}

#[test]
fn myopic_finite_horizon_is_forward_map() {
    let mut m = model(2, 8);
    for p in &mut m.populations {
        p.beta = 0.0;
    }
    let tau0 = m.uniform_measure();
    let t = 6;
    let sol = solve_finite_horizon(&m, &tau0, t, &SolveOptions::default()).unwrap().check().unwrap();
    // with beta = 0, slice s+1 depends on slice s only
    let mut cur = tau0.clone();
    for s in 1..t {
        let next: MeasureSlice = (0..2)
            .map(|i| {
                let q = QTable {
                    owner: i,
                    n_states: m.n_states,
                    n_actions: m.n_actions,
                    q: (0..m.n_states * m.n_actions).map(|k| m.cost(i, k / m.n_actions, k % m.n_actions, &cur)).collect(),
                };
                apply_h2(&m, i, &q, &cur)
            })
            .collect();
        for i in 0..2 {
            assert!(l1(&next[i], &sol.flow.slice(s)[i]) <= 1e-9);
        }
        cur = next;
    }
}

#[test]
fn secular_root_matches_gelfand_for_five_populations() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let p = random_profile(&mut rng, 5, 1.0);
        let r = rng.gen_range(0.05..0.99) / p.beta_max;
        for v in [Variant::A, Variant::B] {
            let want = gelfand_radius(&majorant_matrix(&p, r, v));
            assert!((rho_b(&p, r, v) - want).abs() <= 1e-9 * want.max(1.0));
        }
    }
}

#[test]
fn constraint_roots_recover_grid_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut checked = 0;
    while checked < 10 {
        let n = rng.gen_range(1..=3);
        let p = random_profile(&mut rng, n, 0.5);
        let dmax = (0..p.n()).map(|i| p.d(i)).fold(0.0, f64::max);
        if dmax == 0.0 {
            continue;
        }
        let zbar = p.beta_max * rng.gen_range(1.2..3.0);
        // the operation requires lambda > max d
        if [Variant::A, Variant::B].iter().any(|&v| rho_b(&p, 1.0 / zbar, v) <= dmax) {
            continue;
        }
        for v in [Variant::A, Variant::B] {
            let lambda = rho_b(&p, 1.0 / zbar, v);
            let roots = constraint_roots(&p, lambda, v).unwrap();
            assert!(roots.roots.iter().any(|z| (z - zbar).abs() <= 1e-8), "{zbar} not in {:?}", roots.roots);
        }
        checked += 1;
    }
}

#[test]
fn single_population_certificate_is_the_radius() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let scale = rng.gen_range(0.05..2.0);
        let p = random_profile(&mut rng, 1, scale);
        let m11 = p.kbar(0) + p.a(0) / (1.0 - p.beta(0));
        assert_eq!(stationary_matrix(&p)[(0, 0)], m11);
        if (m11 - 1.0).abs() > 1e-9 {
            assert_eq!(stationary_certificate(&p).certified, m11 < 1.0);
        }
    }
}

#[test]
fn stationary_vector_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m = model(3, 12);
    let p = estimate_lipschitz(&m).unwrap().profile;
    let mm = stationary_matrix(&p);
    for _ in 0..50 {
        let (tau, taut) = (slice(&mut rng, &m), slice(&mut rng, &m));
        let delta = DVector::from_iterator(3, tau.iter().zip(&taut).map(|(a, b)| l1(a, b)));
        let bound = &mm * delta;
        for i in 0..3 {
            let q = solve_bellman_fixed_point(&m, i, &tau, 1e-12).unwrap();
            let qt = solve_bellman_fixed_point(&m, i, &taut, 1e-12).unwrap();
            let lhs = l1(&apply_h2(&m, i, &q, &tau), &apply_h2(&m, i, &qt, &taut));
            assert!(lhs <= bound[i] + 1e-8, "{lhs} > {}", bound[i]);
        }
    }
}

#[test]
fn finite_split_matches_dense_radius() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let scale = rng.gen_range(0.1..1.5);
        let p = random_profile(&mut rng, 2, scale);
        let rho = gelfand_radius(&dense_st(&p, 4));
        if (rho - 1.0).abs() <= 1e-6 {
            continue;
        }
        let rep = mfg_slowfast_check(&p, 1, SlowFastMode::Finite(4)).unwrap();
        assert_eq!(rep.certified, rho < 1.0);
        if rep.certified {
            // R_2 = T_2(Kbar_2) + T_2(K_2) (I - T_1(Kbar_1))^{-1} T_1(K_1)
            let s = dense_st(&p, 4);
            let (b, c, d, e) =
                (s.view((0, 0), (3, 3)), s.view((0, 3), (3, 3)), s.view((3, 0), (3, 3)), s.view((3, 3), (3, 3)));
            let inv = (DMatrix::identity(3, 3) - b).try_inverse().unwrap();
            let r2 = e + d * inv * c;
            assert!((gelfand_radius(&r2) - rep.rho_last.unwrap()).abs() <= 1e-9);
        }
    }
}

#[test]
fn stationary_split_agrees_with_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let n = rng.gen_range(2..=5);
        let scale = rng.gen_range(0.05..2.0);
        let p = random_profile(&mut rng, n, scale);
        if (stationary_certificate(&p).sum - 1.0).abs() <= 1e-8 {
            continue;
        }
        for split in 1..n {
            let rep = mfg_slowfast_check(&p, split, SlowFastMode::Stationary).unwrap();
            assert!(rep.marginal || rep.agrees, "split {split}: {rep:?}");
        }
    }
}

#[test]
fn supercritical_leading_block_confirmed_by_oracle() {
    let a = DMatrix::from_row_slice(3, 3, &[1.2, 0.3, 0.1, 0.2, 0.1, 0.2, 0.1, 0.4, 0.3]);
    let cert = slowfast_certificate(&a, &BlockPartition::new(vec![1, 2]).unwrap()).unwrap();
    assert!(!cert.certified);
    assert!((cert.chain.steps[0].rho_b - 1.2).abs() < 1e-12);
    assert!(gelfand_radius(&a) >= 1.0);
}

#[test]
fn schur_steps_stay_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..200 {
        let (a, part) = mfgc::slowfast::random_block_matrix(&mut rng);
        let chain = schur_reduce(&a, &part).unwrap();
        if let Some(r) = &chain.last {
            assert!(r.iter().all(|&v| v >= -1e-12));
        }
    }
}

#[test]
fn geometric_test_vector_is_majorized() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..20 {
        let n = rng.gen_range(1..=3);
        let p = random_profile(&mut rng, n, 0.5);
        let t = rng.gen_range(3..=30);
        let r = rng.gen_range(0.2..0.99) / p.beta_max;
        if r <= p.kbar_inf {
            continue;
        }
        let rho = rho_b(&p, r, Variant::A);
        // right Perron vector of B(r) through the resolvent form
        let c: Vec<f64> = (0..p.n()).map(|i| 1.0 / (rho - p.d(i) / r)).collect();
        let b = t - 1;
        let x: Vec<f64> = (0..p.n() * b).map(|k| c[k / b] * r.powi((b - 1 - k % b) as i32)).collect();
        let s = mfgc::contraction::FiniteHorizonMatrix::new(&p, t).unwrap();
        let upper = collatz_upper(&s.transposed(), &x);
        assert!(upper <= rho + 1e-10 * rho.max(1.0), "{upper} > {rho}");
    }
}

#[test]
fn dense_profile_example() {
    let p = profile(&[(0.5, 0.2, 0.6, 1.0)]);
    let s = build_st(&p, 2).unwrap();
    assert_eq!(s.nrows(), 1);
    assert!((s[(0, 0)] - p.a(0) * 0.6).abs() < 1e-16);
}
