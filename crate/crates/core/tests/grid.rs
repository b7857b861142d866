use onft::grid::{courant_dt, make_grid, CpmlParams, CpmlProfile, FieldState, GridSpec, MaterialGrid, SPEED_OF_LIGHT};
use onft::validation::{divergence_free, energy_decay, fields_after, phase_velocity, reversal_symmetry};
use proptest::prelude::*;

fn spec(extent: [f64; 3], cell: f64) -> GridSpec {
    GridSpec {
        extent_um: extent,
        cell_um: cell,
        pml_cells: 10,
        courant_factor: 0.95,
    }
}

#[test]
fn paper_domain_cell_counts() {
    assert_eq!(spec([6.0, 6.0, 25.0], 0.05).cells().unwrap(), [120, 120, 500]);
}

#[test]
fn extent_must_be_a_multiple_of_the_cell() {
    assert!(spec([4.0, 4.0, 12.03], 0.04).cells().is_err());
    assert!(spec([4.0, 4.0, 12.0], 0.0).cells().is_err());
    assert!(spec([4.0, 4.0, 12.0], -0.01).cells().is_err());
}

#[test]
fn pml_must_leave_an_interior() {
    let mut s = spec([1.0, 1.0, 1.0], 0.05);
    s.pml_cells = 10;
    assert!(s.cells().is_err());
}

#[test]
fn desk_grid_starts_at_zero() {
    let s = spec([4.0, 4.0, 12.0], 0.04);
    let lattice = s.lattice().unwrap();
    assert_eq!(lattice.cells, [100, 100, 300]);
    let state = make_grid(&s, &MaterialGrid::<f32>::uniform(&lattice, 1.0)).unwrap();
    assert_eq!(state.step, 0);
    assert!(state.e.iter().chain(state.h.iter()).all(|v| v.iter().all(|x| *x == 0.0)));
}

#[test]
fn material_shape_mismatch_is_rejected() {
    let small = spec([1.2, 1.2, 1.2], 0.04).lattice().unwrap();
    let big = spec([2.0, 2.0, 2.0], 0.04);
    assert!(make_grid(&big, &MaterialGrid::<f32>::uniform(&small, 1.0)).is_err());
}

#[test]
fn courant_step() {
    let dt = courant_dt(&spec([1.0; 3], 0.02));
    // 0.95 · 0.02e-6 m / (c √3)
    let oracle = 0.95 * 0.02e-6 / (299_792_458.0 * 3f64.sqrt());
    assert!((dt - oracle).abs() < 1e-12 * oracle);
    assert!((dt / 3.657e-17 - 1.0).abs() < 1e-3);
    let mut s = spec([0.9; 3], 0.03);
    s.courant_factor = 1.0;
    assert_eq!(courant_dt(&s), 0.03e-6 / (SPEED_OF_LIGHT * 3f64.sqrt()));
}

#[test]
fn null_evolution() {
    let s = spec([1.24; 3], 0.031);
    let lattice = s.lattice().unwrap();
    let materials = MaterialGrid::<f64>::uniform(&lattice, 2.0);
    let cpml = CpmlProfile::new(&lattice, &CpmlParams::default(), 0.5);
    let mut state = FieldState::<f64>::zeros(lattice);
    for _ in 0..20 {
        state.step(&materials, &cpml, &[], 0.5).unwrap();
    }
    assert!(state.e.iter().chain(state.h.iter()).all(|v| v.iter().all(|x| *x == 0.0)));
}

#[test]
fn impulse_is_mirror_symmetric() {
    // odd cell count along x so the E_x node sits on the mirror plane
    let s = spec([41.0 * 0.031, 40.0 * 0.031, 40.0 * 0.031], 0.031);
    let lattice = s.lattice().unwrap();
    let materials = MaterialGrid::<f64>::uniform(&lattice, 1.0);
    let dt = 0.95 / 3f64.sqrt();
    let cpml = CpmlProfile::new(&lattice, &CpmlParams::default(), dt);
    let mut state = FieldState::<f64>::zeros(lattice.clone());
    let i0 = 20;
    state.e[0][lattice.idx(i0, 20, 20)] = 1.0;
    for _ in 0..100 {
        state.step(&materials, &cpml, &[], dt).unwrap();
    }
    let max = state.e.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max.is_finite() && max > 0.0);
    let tol = 1e-12 * max;
    for k in 1..40 {
        for j in 1..40 {
            for d in 1..20 {
                let ex = |i: usize| state.e[0][lattice.idx(i, j, k)];
                assert!((ex(i0 + d) - ex(i0 - d)).abs() <= tol);
                // E_y lives on integer x, mirrored about i0 + ½
                let ey = |i: usize| state.e[1][lattice.idx(i, j, k)];
                assert!((ey(i0 + d) + ey(i0 + 1 - d)).abs() <= tol);
            }
        }
    }
}

#[test]
fn phase_velocity_matches_yee_dispersion() {
    let v = phase_velocity(20.0).unwrap();
    assert!(v.deviation_from_c() < 5e-3, "{v:?}");
    assert!((v.measured - v.predicted).abs() < 5e-4, "{v:?}");
}

#[test]
fn divergence_of_h_stays_zero() {
    let d = divergence_free(24, 150).unwrap();
    assert!(d.relative < 1e-12, "{d:?}");
}

#[test]
fn energy_leaves_through_the_pml() {
    let e = energy_decay(48, 10, 6000).unwrap();
    assert!(e.monotone(), "{e:?}");
    assert!(e.final_fraction < 1e-6, "{e:?}");
}

#[test]
fn reversing_the_dipole_flips_fields_only() {
    let r = reversal_symmetry(16.0, 1.2).unwrap();
    assert_eq!(r.power, r.power_reversed);
    assert_eq!(r.max_field_sum, 0.0);
}

#[test]
fn threaded_update_is_bitwise_serial() {
    let one = fields_after::<f32>(1, 28, 40).unwrap();
    let many = fields_after::<f32>(3, 28, 40).unwrap();
    for (a, b) in one.iter().zip(&many) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn integral_extents_are_accepted(nx in 21usize..80, ny in 21usize..80, nz in 21usize..80, cell in 0.01f64..0.1) {
        let s = spec([nx as f64 * cell, ny as f64 * cell, nz as f64 * cell], cell);
        prop_assert_eq!(s.cells().unwrap(), [nx, ny, nz]);
    }

    #[test]
    fn courant_step_scales_with_cell(cell in 0.005f64..0.1, s in 0.1f64..0.99) {
        let mut g = spec([100.0 * cell; 3], cell);
        g.courant_factor = s;
        let dt = courant_dt(&g);
        prop_assert!((dt * SPEED_OF_LIGHT * 3f64.sqrt() / (s * cell * 1e-6) - 1.0).abs() < 1e-12);
    }
}
