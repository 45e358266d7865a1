use std::f64::consts::PI;

use landau_berry::connection::{self, Parameter};
use landau_berry::flux::{self, GaussianFlux};
use landau_berry::fock::{ladder_a, ladder_b};
use landau_berry::holonomy::{self, ParameterPath, Plane};
use landau_berry::linalg::{self, C64, Mat};
use landau_berry::operators::{self, GUARD_BAND};
use landau_berry::adiabatic::{EvolutionModel, Schedule, TimeProfile};
use landau_berry::scenario;
use landau_berry::{FockBasis, ParameterPoint};
use proptest::prelude::*;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig::with_cases(n)
}

/// Indices of states with `n <= w` where `w` is the occupied window of `u`.
fn occupied(u: &Mat, basis: &FockBasis) -> Vec<usize> {
    let w = operators::occupied_window(u, basis).expect("occupied window");
    basis.window(w, basis.m_max())
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn index_bijection(n_max in 1usize..30, m_max in 1usize..12) {
        let basis = FockBasis::new(n_max, m_max).unwrap();
        for k in 0..basis.dimension() {
            let (n, m) = basis.unflat(k);
            prop_assert_eq!(basis.index(n, m), k);
        }
    }

    #[test]
    fn number_operator_exact(n_max in 1usize..30, m_max in 1usize..5) {
        let basis = FockBasis::new(n_max, m_max).unwrap();
        let b = ladder_b(&basis).matrix;
        let num = b.adjoint() * &b;
        for (k, (n, _)) in basis.states().enumerate() {
            if n < n_max {
                for j in 0..basis.dimension() {
                    let expect = if j == k { n as f64 } else { 0.0 };
                    prop_assert!((num[(j, k)].re - expect).abs() < 1e-12 && num[(j, k)].im == 0.0);
                }
            }
        }
        let a = ladder_a(&basis);
        prop_assert!(landau_berry::fock::commutator_defect(&a, &a.adjoint(), &basis).unwrap() < 1e-12);
    }
}

proptest! {
    #![proptest_config(cases(12))]

    #[test]
    fn frame_unitaries_on_occupied_subspace(
        amp in 0.0f64..3.0,
        phase in 0.0f64..(2.0 * PI),
        r in 0.0f64..1.0,
        ln_ratio in -1.0f64..1.0,
    ) {
        let alpha = C64::from_polar(amp, phase);
        let n_max = operators::required_n_max_displacement(alpha).max(operators::required_n_max_squeeze(r.max(1e-3)));
        let basis = FockBasis::new(2 * n_max, 1).unwrap();
        let eye = |k: usize| Mat::identity(k, k);
        for u in [
            operators::displacement(&basis, alpha).unwrap().matrix,
            operators::squeeze(&basis, C64::from_polar(r, phase)).unwrap().matrix,
        ] {
            let idx = occupied(&u, &basis);
            let cols = u.select_columns(&idx);
            let gram = cols.adjoint() * &cols;
            prop_assert!(linalg::max_abs_diff(&gram, &eye(idx.len())) <= 1e-10);
        }
        let wide = FockBasis::new(12, 12).unwrap();
        let k = operators::b_embedding(&wide, ln_ratio.exp(), 1.0).unwrap().matrix;
        prop_assert!(linalg::max_abs_diff(&(k.adjoint() * &k), &eye(wide.dimension())) <= 1e-10);
    }

    #[test]
    fn analytic_connections_anti_hermitian(
        x1 in -1.0f64..1.0,
        x2 in -1.0f64..1.0,
        b in 0.5f64..4.0,
        r in 0.0f64..0.8,
        theta in 0.0f64..(2.0 * PI),
    ) {
        let basis = FockBasis::new(16, 3).unwrap();
        let p = ParameterPoint::new(x1, x2, b, r, theta).unwrap();
        for param in Parameter::ALL {
            let conn = connection::connection_analytic(&basis, param, &p).unwrap();
            prop_assert!(conn.full.anti_hermiticity_defect() <= 1e-12);
        }
    }

    #[test]
    fn displacement_blocks_are_scalar(
        x1 in -1.5f64..1.5,
        x2 in -1.5f64..1.5,
        b in 0.5f64..4.0,
        n in 0usize..6,
    ) {
        let p = ParameterPoint::coherent(x1, x2, b).unwrap();
        for param in [Parameter::X1, Parameter::X2] {
            let block = connection::degenerate_block_analytic(param, &p, n, 4).unwrap();
            let z = block[(0, 0)];
            let scalar = Mat::identity(5, 5) * z;
            prop_assert!(linalg::max_abs_diff(&block, &scalar) == 0.0);
            let probe = Mat::from_fn(5, 5, |i, j| C64::new((i + 2 * j) as f64, (i * j) as f64 - 1.0));
            prop_assert!(linalg::max_abs(&linalg::commutator(&block, &probe)) < 1e-12);
        }
    }

    #[test]
    fn squeezed_field_connection_reduces_at_zero_r(
        x1 in -1.0f64..1.0,
        x2 in -1.0f64..1.0,
        b in 0.5f64..4.0,
        theta in 0.0f64..(2.0 * PI),
        n in 0usize..6,
    ) {
        let squeezed = ParameterPoint::new(x1, x2, b, 0.0, theta).unwrap();
        let coherent = ParameterPoint::coherent(x1, x2, b).unwrap();
        for (np, m, mp) in [(n, 0, 0), (n + 1, 0, 1), (n + 1, 1, 0), (n + 2, 1, 1), (n, 2, 2)] {
            prop_assert_eq!(
                connection::entry(Parameter::B, &squeezed, n, m, np, mp),
                connection::entry(Parameter::B, &coherent, n, m, np, mp)
            );
        }
    }

    #[test]
    fn abelian_phase_level_independent(rho in 0.1f64..1.5, cx in -0.5f64..0.5, cy in -0.5f64..0.5) {
        let path = ParameterPath::circle((cx, cy), rho, 2000, 1.0, true).unwrap();
        let g0 = holonomy::abelian_phase(&path, 0).unwrap().abelian_phase.unwrap();
        let g3 = holonomy::abelian_phase(&path, 3).unwrap().abelian_phase.unwrap();
        prop_assert!((g0 - g3).abs() <= 1e-12);
    }

    #[test]
    fn abelian_phase_reverses_and_doubles(rho in 0.1f64..1.5, segments in 50usize..400) {
        let path = ParameterPath::circle((0.2, -0.1), rho, segments, 1.0, true).unwrap();
        let g = holonomy::abelian_phase(&path, 0).unwrap().abelian_phase.unwrap();
        let back = holonomy::abelian_phase(&path.reversed(), 0).unwrap().abelian_phase.unwrap();
        let twice = holonomy::abelian_phase(&path.repeated(2).unwrap(), 0).unwrap().abelian_phase.unwrap();
        prop_assert!((g + back).abs() <= 1e-12 * g.abs().max(1.0));
        prop_assert!((twice - 2.0 * g).abs() <= 1e-12 * g.abs().max(1.0));
        let area = holonomy::signed_area(&path, Plane::X1X2).unwrap();
        prop_assert!((g + 2.0 * area).abs() <= 1e-12 * g.abs().max(1.0));
    }

    #[test]
    fn holonomy_reverses_and_squares(
        w in 0.2f64..1.0,
        h in 0.2f64..1.0,
        x1 in -0.3f64..0.3,
        m_max in 1usize..4,
    ) {
        let basis = FockBasis::new(GUARD_BAND + 1, m_max).unwrap();
        let path = ParameterPath::rectangle_x2_ln_b(x1, (0.0, w), (0.0, h)).unwrap();
        let k = 400;
        let u = holonomy::nonabelian_holonomy(&basis, &path, 0, k).unwrap().unitary.unwrap().matrix;
        let back = holonomy::nonabelian_holonomy(&basis, &path.reversed(), 0, k).unwrap().unitary.unwrap().matrix;
        prop_assert!(linalg::max_abs_diff(&back, &u.adjoint()) < 1e-5);
        let twice = holonomy::nonabelian_holonomy(&basis, &path.repeated(2).unwrap(), 0, 2 * k).unwrap();
        prop_assert!(linalg::max_abs_diff(&twice.unitary.unwrap().matrix, &(&u * &u)) < 1e-10);
        prop_assert!(linalg::unitarity_defect(&u) < 1e-12);
    }

    #[test]
    fn far_field_matches_ideal_potential(
        phi0 in -3.0f64..3.0,
        delta in 0.2f64..3.0,
        dist in 8.0f64..30.0,
        angle in 0.0f64..(2.0 * PI),
    ) {
        prop_assume!(phi0.abs() > 1e-3);
        let tube = GaussianFlux::new(0.4, -0.7, phi0, delta).unwrap();
        let rho = dist * delta;
        let (ax, ay) = flux::vector_potential(&tube, 0.4 + rho * angle.cos(), -0.7 + rho * angle.sin());
        let ideal = phi0.abs() / (2.0 * PI * rho);
        prop_assert!(((ax.hypot(ay) - ideal) / ideal).abs() <= 1e-6);
    }
}

#[test]
fn loop_integral_error_is_second_order() {
    let err = |k: usize| {
        let path = ParameterPath::circle((0.0, 0.0), 0.7, k, 1.0, true).unwrap();
        let g = holonomy::abelian_phase(&path, 0).unwrap().abelian_phase.unwrap();
        (g + 2.0 * PI * 0.49).abs()
    };
    let (e1, e2, e3) = (err(200), err(400), err(800));
    for ratio in [e1 / e2, e2 / e3] {
        assert!((3.9..4.1).contains(&ratio), "{e1:e} {e2:e} {e3:e}");
    }
}

fn json_value() -> impl Strategy<Value = serde_json::Value> {
    let leaf = prop_oneof![
        any::<bool>().prop_map(serde_json::Value::from),
        any::<i64>().prop_map(serde_json::Value::from),
        (-1e300f64..1e300).prop_map(serde_json::Value::from),
        (-1e-300f64..1e-300).prop_map(serde_json::Value::from),
        "[a-z ]{0,8}".prop_map(serde_json::Value::from),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(serde_json::Value::from),
            prop::collection::btree_map("[a-z_]{1,6}", inner, 0..4)
                .prop_map(|m| serde_json::Value::Object(m.into_iter().collect())),
        ]
    })
}

proptest! {
    #![proptest_config(cases(48))]

    #[test]
    fn json_writer_round_trips(value in json_value()) {
        let text = scenario::to_json_string(&value);
        let back = scenario::parse_json(&text).unwrap();
        prop_assert_eq!(&back, &value);
        prop_assert_eq!(scenario::to_json_string(&back), text);
    }

    #[test]
    fn schedule_returns_to_start(
        w in 0.05f64..1.0,
        h in 0.05f64..1.0,
        x1 in -0.5f64..0.5,
        total in 1.0f64..500.0,
        linear in any::<bool>(),
    ) {
        let basis = FockBasis::new(8, 2).unwrap();
        let path = ParameterPath::rectangle_x2_ln_b(x1, (0.0, w), (0.0, h)).unwrap();
        let profile = if linear { TimeProfile::Linear } else { TimeProfile::Smoothstep };
        let schedule = Schedule::new(path, total, profile, 0).unwrap();
        prop_assert!(schedule.is_closed_loop());
        let (p0, p1) = (schedule.point_at(0.0), schedule.point_at(total));
        let model = EvolutionModel::new(&basis, p0.b);
        let diff = linalg::max_abs_diff(&model.matrix(&p0), &model.matrix(&p1));
        prop_assert!(diff <= 1e-12, "{}", diff);
    }

    #[test]
    fn abelian_record_round_trips(radius in 0.01f64..2.0, segments in 100u64..5000) {
        let doc = serde_json::json!({
            "scenario": "abelian-loop",
            "path": {"kind": "circle", "radius": radius, "segments": segments},
        });
        let rec = scenario::run_value(&doc).unwrap();
        let text = rec.to_json();
        prop_assert_eq!(scenario::ResultRecord::from_json(&text).unwrap().to_json(), text);
    }
}
