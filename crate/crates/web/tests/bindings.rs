use vlasov_twrom_web::{compare_rom, run_fom, two_stream_initial};

#[test]
fn initial_field_has_grid_shape() {
    let f = two_stream_initial(16, 24, 0.09, 0.002).unwrap();
    assert_eq!((f.nx(), f.nv()), (16, 24));
    assert_eq!(f.values().len(), 16 * 24);
    assert!(f.values().iter().all(|&v| v >= 0.0));
}

#[test]
fn short_fom_run_conserves_mass() {
    let r = run_fom(16, 16, 0.09, 0.002, 0.05).unwrap();
    assert_eq!(r.times().len(), 21);
    assert_eq!(r.times().len(), r.max_e().len());
    assert!(r.mass_drift() < 1e-10);
}

#[test]
fn comparison_at_a_training_corner() {
    let c = compare_rom(16, 16, 0.05, 2, 1.0, 0.08, 0.001).unwrap();
    assert_eq!(c.basis_sizes().len(), 2);
    assert_eq!(c.fom_max_e().len(), c.rom_max_e().len());
    assert!(c.error() < 0.05, "{}", c.error());
}
