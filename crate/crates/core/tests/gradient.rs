mod common;

use std::f64::consts::PI;

use hopf_core::gradient::{
    ell_derivative_hat, finite_difference_gradient, gradient_error, improved_entry_expanded,
    improved_entry_rewrite, improved_gradients, linear_gradients, local_terms, GradientError,
    InjectionKind, LocalTerms, PathSums,
};
use hopf_core::network::{Bus, Line, RadialNetwork, SlackSpec};
use hopf_core::phase::{Phase, PhaseMatrix, PhaseSet, C64};
use hopf_core::powerflow::{
    solve_bva_pf_with, solve_nonlinear_pf, solve_nonlinear_pf_with, EllClosure, PfOptions,
    PowerFlowState,
};
use proptest::prelude::*;

const KINDS: [InjectionKind; 2] = [InjectionKind::P, InjectionKind::Q];

fn single_phase_chain(z: &[C64], loads: &[C64]) -> RadialNetwork {
    let a = PhaseSet::single(Phase::A);
    let mut buses = vec![Bus::new(0, a)];
    let mut lines = Vec::new();
    for (i, (&zi, &s)) in z.iter().zip(loads).enumerate() {
        buses.push(Bus::new(i + 1, a).with_load(Phase::A, s));
        lines.push(Line {
            from: i,
            to: i + 1,
            phases: a,
            z: PhaseMatrix::from_fn(a, |_, _| zi),
        });
    }
    RadialNetwork::build(buses, lines, SlackSpec::default()).unwrap()
}

fn abc_z(own: C64, mutual: C64) -> PhaseMatrix {
    PhaseMatrix::from_fn(PhaseSet::ABC, |a, b| if a == b { own } else { mutual })
}

fn tight_state(net: &RadialNetwork) -> PowerFlowState {
    solve_nonlinear_pf_with(net, &net.nominal_injections(), PfOptions::tight()).unwrap()
}

/// `α^{φ−ϕ}` with `α = e^{−i2π/3}`, from phase letters.
fn alpha_pow(phi: Phase, varphi: Phase) -> C64 {
    let k = phi.index() as f64 - varphi.index() as f64;
    C64::from_polar(1.0, -2.0 * PI / 3.0 * k)
}

/// Path sums by walking the common path line by line.
fn brute_rx(net: &RadialNetwork, j: usize, h: usize, phi: Phase, varphi: Phase) -> (f64, f64) {
    let mut r = 0.0;
    let mut x = 0.0;
    for l in net.common_path(j, h).unwrap() {
        let line = net.line(l);
        if !(line.phases.contains(phi) && line.phases.contains(varphi)) {
            continue;
        }
        let t = line.z.get(phi, varphi).conj() * alpha_pow(phi, varphi);
        r += 2.0 * t.re;
        x -= 2.0 * t.im;
    }
    (r, x)
}

#[test]
fn single_line_chain_gives_twice_r_and_x() {
    let net = single_phase_chain(&[C64::new(0.03, 0.07)], &[C64::new(-0.1, -0.02)]);
    let t = linear_gradients(&net);
    assert!((t.dv_dp[(0, 0)] - 0.06).abs() < 1e-15);
    assert!((t.dv_dq[(0, 0)] - 0.14).abs() < 1e-15);
}

#[test]
fn disjoint_branches_have_zero_sensitivity() {
    let z = abc_z(C64::new(0.01, 0.02), C64::new(0.003, 0.007));
    let buses = (0..3).map(|i| Bus::new(i, PhaseSet::ABC)).collect();
    let lines = vec![
        Line { from: 0, to: 1, phases: PhaseSet::ABC, z },
        Line { from: 0, to: 2, phases: PhaseSet::ABC, z },
    ];
    let net = RadialNetwork::build(buses, lines, SlackSpec::default()).unwrap();
    let t = linear_gradients(&net);
    for p in Phase::ALL {
        for q in Phase::ALL {
            let a = net.node(1, p).unwrap();
            let c = net.node(2, q).unwrap();
            assert_eq!(t.dv_dp[(a, c)], 0.0);
            assert_eq!(t.dv_dq[(a, c)], 0.0);
        }
    }
}

#[test]
fn three_phase_cross_entry_matches_hand_evaluation() {
    // α^{a−b} = α^{−1} = e^{+i2π/3}; R = 2Re(z̄ e^{i2π/3}), X = −2Im(z̄ e^{i2π/3}).
    let (r, x) = (0.004, 0.011);
    let z = abc_z(C64::new(0.02, 0.05), C64::new(r, x));
    let buses = vec![Bus::new(0, PhaseSet::ABC), Bus::new(1, PhaseSet::ABC)];
    let lines = vec![Line { from: 0, to: 1, phases: PhaseSet::ABC, z }];
    let net = RadialNetwork::build(buses, lines, SlackSpec::default()).unwrap();
    let t = linear_gradients(&net);
    let (c, s) = ((2.0 * PI / 3.0).cos(), (2.0 * PI / 3.0).sin());
    let r_ab = 2.0 * (r * c + x * s);
    let x_ab = -2.0 * (r * s - x * c);
    let a = net.node(1, Phase::A).unwrap();
    let b = net.node(1, Phase::B).unwrap();
    assert!((t.dv_dp[(a, b)] - r_ab).abs() < 1e-15);
    assert!((t.dv_dq[(a, b)] - x_ab).abs() < 1e-15);
}

#[test]
fn linear_table_matches_path_walk_on_fixtures() {
    for name in common::FIXTURES {
        let net = common::feeder(name).network;
        let t = linear_gradients(&net);
        for (a, oj) in net.nodes().iter().enumerate() {
            for (c, oh) in net.nodes().iter().enumerate() {
                let (r, x) = brute_rx(&net, oj.bus, oh.bus, oj.phase, oh.phase);
                assert!((t.dv_dp[(a, c)] - r).abs() < 1e-14, "{name}");
                assert!((t.dv_dq[(a, c)] - x).abs() < 1e-14, "{name}");
            }
        }
    }
}

#[test]
fn linear_table_is_state_independent() {
    let f = common::feeder("nine_bus_y.json");
    let a = linear_gradients(&f.network);
    let b = linear_gradients(&f.network.scaled(3.0).unwrap());
    assert_eq!(a.dv_dp, b.dv_dp);
    assert_eq!(a.dv_dq, b.dv_dq);
}

#[test]
fn zero_flow_improved_equals_linear_exactly() {
    for name in common::FIXTURES {
        let net = common::feeder(name).network;
        let u = vec![C64::new(0.0, 0.0); net.nodes().len()];
        let st = solve_nonlinear_pf(&net, &u).unwrap();
        let imp = improved_gradients(&net, &st).unwrap();
        let lin = linear_gradients(&net);
        assert_eq!(imp.dv_dp, lin.dv_dp, "{name}");
        assert_eq!(imp.dv_dq, lin.dv_dq, "{name}");
    }
}

#[test]
fn zero_flow_ell_derivative_vanishes() {
    let net = common::feeder("nine_bus_y.json").network;
    let u = vec![C64::new(0.0, 0.0); net.nodes().len()];
    let st = solve_nonlinear_pf(&net, &u).unwrap();
    let sums = PathSums::new(&net);
    for l in 0..net.num_lines() {
        let ph = net.line(l).phases;
        for psi in ph.iter() {
            for eta in ph.iter() {
                for h in 1..net.num_buses() {
                    for varphi in net.phases(h).iter() {
                        for kind in KINDS {
                            let d = ell_derivative_hat(&net, &st, &sums, l, psi, eta, psi, h, varphi, kind)
                                .unwrap();
                            assert_eq!(d, C64::new(0.0, 0.0));
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn ell_derivative_single_phase_closed_form() {
    // Chain 0-1-2, line (1,2), actuated at bus 2: the upstream sum is R_11 = 2 r_01.
    let z = [C64::new(0.02, 0.04), C64::new(0.03, 0.05)];
    let net = single_phase_chain(&z, &[C64::new(-0.2, -0.1), C64::new(-0.3, -0.1)]);
    let st = tight_state(&net);
    let sums = PathSums::new(&net);
    let a = Phase::A;
    let l = net.parent_line(2).unwrap();
    let v1 = st.v[1].get(a, a).re;
    let ell = st.ell[l].get(a, a).re;
    let s = st.s[l].get(a, a);
    let dp = ell_derivative_hat(&net, &st, &sums, l, a, a, a, 2, a, InjectionKind::P).unwrap();
    let expect_p = -(ell * 2.0 * z[0].re + (s.conj() + s).re) / v1;
    assert!((dp.re - expect_p).abs() < 1e-14 && dp.im.abs() < 1e-14);
    let dq = ell_derivative_hat(&net, &st, &sums, l, a, a, a, 2, a, InjectionKind::Q).unwrap();
    // ∂Ŝ/∂q = −i, so the flow terms are i S̄ − i S = 2 Im(S).
    let expect_q = -(ell * 2.0 * z[0].im + 2.0 * s.im) / v1;
    assert!((dq.re - expect_q).abs() < 1e-14 && dq.im.abs() < 1e-14);
}

#[test]
fn ell_derivative_tracks_bva_finite_difference_on_two_bus() {
    // The lossless substitution misses the r·∂ℓ feedback in ∂P, so the gap
    // is of relative size |z|ℓ-ish; 1e-2 holds with a wide margin here.
    let net = common::feeder("two_bus.json").network;
    let u = net.nominal_injections();
    let st = tight_state(&net);
    let sums = PathSums::new(&net);
    let a = Phase::A;
    let step = 1e-6;
    for (kind, du) in [(InjectionKind::P, C64::new(step, 0.0)), (InjectionKind::Q, C64::new(0.0, step))] {
        let ell = |x: C64| {
            let st = solve_bva_pf_with(&net, &[u[0] + x], PfOptions::tight(), EllClosure::default()).unwrap();
            st.ell[0].get(a, a).re
        };
        let fd = (ell(du) - ell(-du)) / (2.0 * step);
        let hat = ell_derivative_hat(&net, &st, &sums, 0, a, a, a, 1, a, kind).unwrap().re;
        assert!(((hat - fd) / fd).abs() < 1e-2, "{kind:?}: {hat} vs {fd}");
    }
}

#[test]
fn expanded_and_rewritten_entries_agree() {
    for name in common::FIXTURES {
        let (_, net) = common::loaded(name);
        let st = tight_state(&net);
        let sums = PathSums::new(&net);
        let table = improved_gradients(&net, &st).unwrap();
        for (a, oj) in net.nodes().iter().enumerate() {
            for (c, oh) in net.nodes().iter().enumerate() {
                for kind in KINDS {
                    let e = improved_entry_expanded(&net, &st, &sums, oj.bus, oj.phase, oh.bus, oh.phase, kind)
                        .unwrap();
                    let r = improved_entry_rewrite(&net, &st, &sums, oj.bus, oj.phase, oh.bus, oh.phase, kind)
                        .unwrap();
                    assert!((e - r).abs() < 1e-12, "{name}: {e} vs {r}");
                    assert!((table.get(kind)[(a, c)] - r).abs() < 1e-12, "{name}");
                }
            }
        }
    }
}

#[test]
fn two_bus_improved_matches_single_phase_formula() {
    // One line from the slack: w·0 + 2r − 2|z|²P/v0 and 2x − 2|z|²Q/v0.
    let net = common::feeder("two_bus.json").network;
    let st = tight_state(&net);
    let t = improved_gradients(&net, &st).unwrap();
    let z = C64::new(0.01, 0.02);
    let v0 = st.v[0].get(Phase::A, Phase::A).re;
    let s = st.s[0].get(Phase::A, Phase::A);
    let dp = 2.0 * z.re - 2.0 * z.norm_sqr() * s.re / v0;
    let dq = 2.0 * z.im - 2.0 * z.norm_sqr() * s.im / v0;
    assert!((t.dv_dp[(0, 0)] - dp).abs() < 1e-14);
    assert!((t.dv_dq[(0, 0)] - dq).abs() < 1e-14);
}

#[test]
fn finite_difference_matches_exact_two_bus_derivative() {
    // Differentiating |V0|² = v1 + 2(rp + xq) + |z|²(p² + q²)/v1 implicitly
    // (p, q consumed) gives ∂v1/∂p_inj = (2r + 2|z|²p/v1) / (1 − |z|²ℓ/v1).
    let net = common::feeder("two_bus.json").network;
    let u = net.nominal_injections();
    let st = tight_state(&net);
    let (r, x) = (0.01, 0.02);
    let zz = r * r + x * x;
    let (p, q) = (-u[0].re, -u[0].im);
    let v1 = st.v_node(&net, 0);
    let ell = (p * p + q * q) / v1;
    let den = 1.0 - zz * ell / v1;
    let dp = (2.0 * r + 2.0 * zz * p / v1) / den;
    let dq = (2.0 * x + 2.0 * zz * q / v1) / den;
    let fd_p = finite_difference_gradient(&net, &u, 0, 0, InjectionKind::P, 1e-6).unwrap();
    let fd_q = finite_difference_gradient(&net, &u, 0, 0, InjectionKind::Q, 1e-6).unwrap();
    assert!((fd_p - dp).abs() < 1e-8, "{fd_p} vs {dp}");
    assert!((fd_q - dq).abs() < 1e-8, "{fd_q} vs {dq}");
}

#[test]
fn finite_difference_at_no_load_matches_linear() {
    let net = common::feeder("nine_bus_y.json").network;
    let u = vec![C64::new(0.0, 0.0); net.nodes().len()];
    let lin = linear_gradients(&net);
    for h in [0, 5, net.nodes().len() - 1] {
        for kind in KINDS {
            for j in 0..net.nodes().len() {
                let fd = finite_difference_gradient(&net, &u, j, h, kind, 1e-6).unwrap();
                assert!((fd - lin.get(kind)[(j, h)]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn finite_difference_richardson_ratio() {
    let (_, net) = common::loaded("feeder25.json");
    let u = net.nominal_injections();
    let j = net.nodes().len() - 1;
    let h = net.nodes().len() - 2;
    let d = |step| finite_difference_gradient(&net, &u, j, h, InjectionKind::P, step).unwrap();
    let (d1, d2, d3) = (d(4e-3), d(2e-3), d(1e-3));
    let (e1, e2) = ((d1 - d2).abs(), (d2 - d3).abs());
    assert!(e2 < e1);
    let ratio = e1 / e2;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn weights_lie_in_unit_interval_on_fixtures() {
    for name in common::FIXTURES {
        let (_, net) = common::loaded(name);
        let st = tight_state(&net);
        for b in 1..net.num_buses() {
            let t = local_terms(&net, &st, b).unwrap();
            for p in net.phases(b).iter() {
                let w = t.w[p.index()];
                assert!(w > 0.0 && w <= 1.0, "{name}: bus {b} {p}: {w}");
            }
        }
    }
}

#[test]
fn entries_depend_only_on_parent_line_and_path_sums() {
    // Twin laterals 1→2 and 1→3 with equal impedance and load; actuation
    // off both laterals sees the same rows.
    let z = abc_z(C64::new(0.02, 0.04), C64::new(0.006, 0.012));
    let load = |b: Bus| {
        Phase::ALL
            .iter()
            .fold(b, |b, &p| b.with_load(p, C64::new(-0.05, -0.02)))
    };
    let buses = vec![
        Bus::new(0, PhaseSet::ABC),
        load(Bus::new(1, PhaseSet::ABC)),
        load(Bus::new(2, PhaseSet::ABC)),
        load(Bus::new(3, PhaseSet::ABC)),
        load(Bus::new(4, PhaseSet::ABC)),
    ];
    let line = |from, to| Line { from, to, phases: PhaseSet::ABC, z };
    let lines = vec![line(0, 1), line(1, 2), line(1, 3), line(0, 4)];
    let net = RadialNetwork::build(buses, lines, SlackSpec::default()).unwrap();
    let st = tight_state(&net);
    let t = improved_gradients(&net, &st).unwrap();
    for phi in Phase::ALL {
        let j2 = net.node(2, phi).unwrap();
        let j3 = net.node(3, phi).unwrap();
        for h in [1, 4] {
            for varphi in Phase::ALL {
                let c = net.node(h, varphi).unwrap();
                for kind in KINDS {
                    let a = t.get(kind)[(j2, c)];
                    let b = t.get(kind)[(j3, c)];
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
    assert_eq!(local_terms(&net, &st, 2).unwrap().w, local_terms(&net, &st, 3).unwrap().w);
}

#[test]
fn gradient_error_of_table_against_itself_is_zero() {
    let (_, net) = common::loaded("nine_bus_y.json");
    let t = improved_gradients(&net, &tight_state(&net)).unwrap();
    let e = gradient_error(&t, &t).unwrap();
    assert_eq!(e.max_abs, 0.0);
    assert_eq!(e.frobenius, 0.0);
}

#[test]
fn gradient_error_rejects_mismatched_tables() {
    let (_, net) = common::loaded("nine_bus_y.json");
    let a = linear_gradients(&net);
    let mut b = a.clone();
    b.observed.pop();
    assert_eq!(gradient_error(&a, &b).unwrap_err(), GradientError::IndexMismatch);
}

#[test]
fn degenerate_parent_voltage_is_rejected() {
    let net = common::feeder("two_bus.json").network;
    let z = net.line(0).z;
    let zero = PhaseMatrix::zeros(z.phases());
    let err = LocalTerms::lossless(&net, 1)
        .with_losses(&z, [1e-9, 0.0, 0.0], &zero, &zero)
        .unwrap_err();
    assert!(matches!(err, GradientError::NumericalDegeneracy { .. }));
}

#[test]
fn foreign_state_is_rejected() {
    let a = common::feeder("two_bus.json").network;
    let (_, b) = common::loaded("nine_bus_y.json");
    let st = tight_state(&a);
    assert_eq!(improved_gradients(&b, &st).unwrap_err(), GradientError::StateMismatch);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rewrite_identity_under_random_loading(scale in 0.2f64..3.0, shift in 0usize..50) {
        let (_, net) = common::loaded("nine_bus_y.json");
        let mut u = net.nominal_injections();
        for (k, s) in u.iter_mut().enumerate() {
            *s *= scale * (0.8 + 0.4 * (((k + shift) % 7) as f64 / 6.0));
        }
        let st = solve_nonlinear_pf_with(&net, &u, PfOptions::tight()).unwrap();
        let sums = PathSums::new(&net);
        for oj in net.nodes() {
            for oh in net.nodes().iter().step_by(3) {
                for kind in KINDS {
                    let e = improved_entry_expanded(&net, &st, &sums, oj.bus, oj.phase, oh.bus, oh.phase, kind).unwrap();
                    let r = improved_entry_rewrite(&net, &st, &sums, oj.bus, oj.phase, oh.bus, oh.phase, kind).unwrap();
                    prop_assert!((e - r).abs() < 1e-12);
                }
            }
        }
    }
}
