use binmp_core::checkpoint::Checkpoint;
use binmp_core::datasets::gen_glass;
use binmp_core::{Architecture, Beta, BpMode, BpParams, BpSolver, SpParams, SpSolver};

#[test]
fn mnist_presets_have_the_published_parameter_counts() {
    assert_eq!(Architecture::mnist_linear().param_count(), 196);
    assert_eq!(Architecture::mnist_mlp().param_count(), 394);
    assert_eq!(Architecture::mnist_conv().param_count(), 89);
}

#[test]
fn bp_resumes_from_a_checkpoint() {
    let ds = gen_glass(6, 12, 4).unwrap();
    let p = ds.problem(Architecture::Linear { input_dim: 6 }, Beta::new(2.0).unwrap()).unwrap();
    let params = BpParams { max_iters: 10, ..Default::default() };
    let mut full = BpSolver::new(&p, params.clone(), BpMode::Stochastic, 8).unwrap();
    for _ in 0..3 {
        full.step().unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bp.ckpt");
    Checkpoint::from_bp(full.store(), full.iteration() as u64, 8).save(&path).unwrap();
    let ck = Checkpoint::load(&path).unwrap();
    assert_eq!(&ck.to_bp().unwrap(), full.store());
    let mut resumed =
        BpSolver::resume(&p, params, BpMode::Stochastic, ck.master_seed, ck.to_bp().unwrap(), ck.iteration as usize)
            .unwrap();
    for _ in 0..3 {
        let a = full.step().unwrap();
        let b = resumed.step().unwrap();
        assert_eq!(a.beliefs, b.beliefs);
    }
    assert_eq!(full.store(), resumed.store());
}

#[test]
fn sp_resumes_from_a_checkpoint() {
    let ds = gen_glass(4, 5, 1).unwrap();
    let p = ds.problem(Architecture::Linear { input_dim: 4 }, Beta::new(2.0).unwrap()).unwrap();
    let params = SpParams { k_bins: 7, l_sp: 20, max_iters: 10, ..Default::default() };
    let mut full = SpSolver::new(&p, params.clone(), 2).unwrap();
    full.step().unwrap();
    let mut bytes = Vec::new();
    Checkpoint::from_surveys(full.surveys(), full.iteration() as u64, 2).write_to(&mut bytes).unwrap();
    let ck = Checkpoint::read_from(&bytes[..]).unwrap();
    let mut resumed = SpSolver::resume(&p, params, 2, ck.to_surveys().unwrap(), ck.iteration as usize).unwrap();
    for _ in 0..2 {
        assert_eq!(full.step().unwrap().marginals, resumed.step().unwrap().marginals);
    }
    assert_eq!(full.surveys(), resumed.surveys());
}
