use sparsemix::datasets::load_fear;
use sparsemix::evidence::{
    estimate_evidence_bridge, log_evidence_bridge, log_evidence_enumeration, log_evidence_k1, BridgeOptions,
    BridgeRun, EvidenceMethod,
};
use sparsemix::{
    run_chain, CategoricalData, CountData, Error, LatentClassKernel, ModelSpec, PoissonKernel, PrecisionPrior,
    SamplerConfig,
};

fn fear_subset(n: usize) -> LatentClassKernel {
    let d = load_fear();
    let rows = d.rows_one_based();
    let sub: Vec<Vec<usize>> = (0..n).map(|i| rows[(i * 7) % rows.len()].clone()).collect();
    LatentClassKernel::new(CategoricalData::new(&sub, d.cards().to_vec()).unwrap(), 1.0).unwrap()
}

#[test]
fn enumeration_equals_analytic_at_one_component() {
    let k = fear_subset(9);
    let a = log_evidence_k1(&k).unwrap();
    let e = log_evidence_enumeration(&k, 1, 4.0).unwrap();
    assert_eq!(a.method, EvidenceMethod::Analytic);
    assert!((a.log_value - e.log_value).abs() < 1e-12);
}

#[test]
fn categorical_bridge_matches_enumeration() {
    let k = fear_subset(12);
    for (kk, e0) in [(2usize, 4.0), (3, 1.0)] {
        let exact = log_evidence_enumeration(&k, kk, e0).unwrap().log_value;
        let run = BridgeRun {
            seed: 11,
            ..BridgeRun::default()
        };
        let b = estimate_evidence_bridge(&k, kk, e0, &run).unwrap();
        assert_eq!(b.method, EvidenceMethod::Bridge);
        let tol = (4.0 * b.std_error).max(0.02);
        assert!((b.log_value - exact).abs() < tol, "K={kk}: {} vs {exact} (se {})", b.log_value, b.std_error);
    }
}

#[test]
fn bridge_is_invariant_to_relabelling_the_trace() {
    let y = vec![0u64, 2, 1, 9, 11, 8, 1, 10, 0, 12];
    let k = PoissonKernel::default_fixed(&CountData::new(y)).unwrap();
    let e0 = 2.0;
    let spec = ModelSpec::sfm(3, PrecisionPrior::Fixed(e0)).unwrap();
    let cfg = SamplerConfig {
        n_burnin: 1000,
        n_keep: 3000,
        seed: 12,
        record_full_state: true,
        init_k: Some(3),
        ..SamplerConfig::default()
    };
    let trace = run_chain(&k, &spec, &cfg).unwrap();
    let opts = BridgeOptions::default();
    let base = log_evidence_bridge(&k, 3, e0, &trace, &opts).unwrap();
    let mut moved = trace.clone();
    for (s, r) in moved.records.iter_mut().enumerate() {
        // a different label permutation in every sweep
        let perm = [[1usize, 2, 0], [2, 0, 1], [0, 2, 1]][s % 3];
        let full = r.full.as_mut().unwrap();
        let (lw, ps) = (full.log_weights.clone(), full.params.clone());
        for c in 0..3 {
            full.log_weights[perm[c]] = lw[c];
            full.params[perm[c]] = ps[c];
        }
        for l in r.allocations.as_mut().unwrap() {
            *l = perm[*l as usize] as u32;
        }
    }
    let other = log_evidence_bridge(&k, 3, e0, &moved, &opts).unwrap();
    let se = (base.std_error.powi(2) + other.std_error.powi(2)).sqrt();
    assert!((base.log_value - other.log_value).abs() < 4.0 * se.max(1e-3), "{base:?} vs {other:?}");
    let exact = log_evidence_enumeration(&k, 3, e0).unwrap().log_value;
    assert!((base.log_value - exact).abs() < 4.0 * base.std_error.max(2e-3));
}

#[test]
fn hierarchical_poisson_evidence_is_unsupported() {
    let k = PoissonKernel::default_hierarchy(&CountData::new(vec![1, 2, 3])).unwrap();
    assert!(matches!(log_evidence_k1(&k), Err(Error::Unsupported(_))));
    assert!(matches!(log_evidence_enumeration(&k, 2, 1.0), Err(Error::Unsupported(_))));
    assert!(matches!(estimate_evidence_bridge(&k, 2, 1.0, &BridgeRun::default()), Err(Error::Unsupported(_))));
}

#[test]
fn enumeration_guard_refuses_large_problems() {
    let k = fear_subset(40);
    assert!(log_evidence_enumeration(&k, 2, 1.0).is_err());
}
